//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.
//! Run with `cargo test -p relaxtube --test acceptance`.

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use relaxtube::cli::counterexample::{counterexample_bounded, counterexample_escape, EscapePolicy};
use relaxtube::cli::{run, Overrides, Scenario, Task, EXIT_OK};
use relaxtube::inclusion::{builtin, OutputMap};
use relaxtube::integrate::{
    integrate, integrate_relaxed, ChatterTarget, RadiusProfile, SelectionPolicy, TimeGrid, Trajectory,
};
use relaxtube::relaxapprox::{stitch_infinite, ApproxParams, Partition};
use relaxtube::setgeom::{caratheodory_decompose, hausdorff, Point, PointSet};
use relaxtube::stability::{
    estimate_stability_margin, estimate_uniform_attraction, lemma54_sup, BundleSpec, InitialSet, MarginSpec,
    OutputSystem, Region,
};

struct Clauses(Vec<(String, bool)>);

impl Clauses {
    fn new() -> Self {
        Clauses(vec![])
    }
    fn check(&mut self, what: impl Into<String>, ok: bool) {
        self.0.push((what.into(), ok));
    }
}

fn random_set(rng: &mut ChaCha8Rng, dim: usize, convex: bool) -> PointSet {
    let n = rng.gen_range(1..=6);
    let pts = (0..n)
        .map(|_| Point::new((0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect()).unwrap())
        .collect();
    PointSet::new(pts, convex).unwrap()
}

/// Hausdorff distance of two finite sets by exhaustive search.
fn hausdorff_oracle(a: &PointSet, b: &PointSet) -> f64 {
    let one = |x: &PointSet, y: &PointSet| {
        x.points()
            .iter()
            .map(|p| y.points().iter().map(|q| p.dist(q)).fold(f64::INFINITY, f64::min))
            .fold(0.0, f64::max)
    };
    one(a, b).max(one(b, a))
}

fn metric_suite() -> Clauses {
    let mut c = Clauses::new();
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (mut sym, mut ident, mut tri, mut oracle) = (0, 0, 0, 0);
    let triples = 1200;
    for i in 0..triples {
        let dim = 1 + i % 4;
        let convex = i % 4 == 3;
        let a = random_set(&mut rng, dim, convex);
        let b = random_set(&mut rng, dim, convex);
        let d = random_set(&mut rng, dim, convex);
        let ab = hausdorff(&a, &b).unwrap();
        let ba = hausdorff(&b, &a).unwrap();
        let ad = hausdorff(&a, &d).unwrap();
        let db = hausdorff(&d, &b).unwrap();
        sym += usize::from((ab - ba).abs() > 1e-9);
        ident += usize::from(hausdorff(&a, &a).unwrap() > 1e-9);
        tri += usize::from(ab > ad + db + 1e-9);
        if !convex {
            oracle += usize::from((ab - hausdorff_oracle(&a, &b)).abs() > 1e-12);
        }
    }
    let secs = start.elapsed().as_secs_f64();
    c.check(format!("{triples} triples, symmetry violations {sym}"), sym == 0);
    c.check(format!("identity violations {ident}"), ident == 0);
    c.check(format!("triangle violations {tri}"), tri == 0);
    c.check(format!("finite-set oracle mismatches {oracle}"), oracle == 0);
    c.check(format!("runtime {secs:.2}s < 10s"), secs < 10.0);
    c
}

fn caratheodory() -> Clauses {
    let mut c = Clauses::new();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let (mut recon, mut count, mut weights, mut sums) = (0.0f64, 0, 0, 0.0f64);
    let n_inst = 1200;
    for i in 0..n_inst {
        let dim = 1 + i % 4;
        let k = PointSet::new(
            (0..rng.gen_range(1..=8))
                .map(|_| Point::new((0..dim).map(|_| rng.gen_range(-3.0..3.0)).collect()).unwrap())
                .collect(),
            true,
        )
        .unwrap();
        let w: Vec<f64> = (0..k.len()).map(|_| rng.gen_range(0.0..1.0)).collect();
        let s: f64 = w.iter().sum();
        let mut v = vec![0.0; dim];
        for (p, wi) in k.points().iter().zip(&w) {
            for j in 0..dim {
                v[j] += wi / s * p.coords()[j];
            }
        }
        let v = Point::new(v).unwrap();
        let cc = caratheodory_decompose(&v, &k).unwrap();
        recon = recon.max(cc.recombine().dist(&v));
        count += usize::from(cc.atoms.len() > dim + 1);
        weights += usize::from(cc.atoms.iter().any(|a| !(0.0..=1.0).contains(&a.weight)));
        sums = sums.max((cc.weight_sum() - 1.0).abs());
    }
    c.check(format!("{n_inst} instances, max reconstruction error {recon:.2e} <= 1e-9"), recon <= 1e-9);
    c.check(format!("atom count above n+1: {count}"), count == 0);
    c.check(format!("weights outside [0,1]: {weights}"), weights == 0);
    c.check(format!("max |sum - 1| {sums:.2e} <= 1e-12"), sums <= 1e-12);
    c
}

fn chatter_sup(period: f64) -> f64 {
    let f = builtin("binary_switch").unwrap();
    let g = TimeGrid::uniform(0.0, 10.0, period).unwrap();
    let x = integrate(&f, &SelectionPolicy::Chatter(ChatterTarget::Constant(Point::zeros(1))), &Point::zeros(1), &g)
        .unwrap();
    x.states().iter().map(|p| p.norm()).fold(0.0, f64::max)
}

fn chattering() -> Clauses {
    let mut c = Clauses::new();
    let periods = [0.2, 0.1, 0.05, 0.025];
    let sups: Vec<f64> = periods.iter().map(|&p| chatter_sup(p)).collect();
    for (p, s) in periods.iter().zip(&sups) {
        c.check(format!("period {p}: sup {s} <= {}", p / 2.0), *s <= p / 2.0);
    }
    for w in sups.windows(2) {
        let ratio = w[0] / w[1];
        c.check(format!("ratio {ratio:.4}"), (ratio - 2.0).abs() <= 0.3);
    }
    c
}

fn zero_reference(f: &relaxtube::inclusion::SetMap, horizon: f64, h: f64) -> Trajectory {
    let target = |_: f64, _: &Point| Point::zeros(1);
    integrate_relaxed(f, &target, &Point::zeros(1), &TimeGrid::uniform(0.0, horizon, h).unwrap()).unwrap()
}

fn stitching() -> Clauses {
    let mut c = Clauses::new();
    let f = builtin("binary_switch").unwrap();
    let z = zero_reference(&f, 10.0, 0.01);
    let r = RadiusProfile::constant(0.1).unwrap();
    let p = Partition::uniform(1.0, 10.0).unwrap();
    let start = Instant::now();
    let res = stitch_infinite(&f, &z, &r, &p, &ApproxParams::default());
    let secs = start.elapsed().as_secs_f64();
    let (gamma, rep) = match res {
        Ok(v) => v,
        Err(e) => {
            c.check(format!("stitch_infinite failed: {e}"), false);
            return c;
        }
    };
    c.check("stitch_infinite succeeds", true);
    let d0 = gamma.initial().dist(z.initial());
    c.check(format!("|gamma(0) - z(0)| = {d0:.3e} <= 0.1"), d0 <= 0.1);
    c.check(
        format!("tube ok, sup weighted error {:.4} <= 1", rep.sup_weighted_error),
        rep.tube.ok && rep.sup_weighted_error <= 1.0,
    );
    let maxima: Vec<f64> = rep.zeta_residuals.iter().map(|r| r.iter().cloned().fold(0.0, f64::max)).collect();
    c.check(
        format!("zeta residual maxima nonincreasing {maxima:?}"),
        maxima.windows(2).all(|w| w[1] <= w[0]),
    );
    let last = maxima.last().copied().unwrap_or(0.0);
    c.check(format!("final residual {last:.2e} < 1e-3"), last < 1e-3);
    c.check(format!("runtime {secs:.2}s < 30s"), secs < 30.0);
    c
}

fn escape() -> Clauses {
    let mut c = Clauses::new();
    let (r, _) = counterexample_escape(0.1, &EscapePolicy::Plus, 3.0, 1e-3).unwrap();
    c.check(format!("sigma_hat {:.6} = 1/3 +- 2e-3", r.sigma_hat), (r.sigma_hat - 1.0 / 3.0).abs() <= 2e-3);
    c.check(
        format!("x1 >= sigma^2 (t-1) at every node t >= 1 (worst margin {:.3e})", r.worst_x1_margin),
        r.bound_check,
    );
    let t = r.first_violation;
    c.check(
        format!("first violation of |x| <= 0.1 at {t:?} in [1.8, 2.0]"),
        t.is_some_and(|t| (1.8..=2.0).contains(&t)),
    );
    c
}

fn bounded() -> Clauses {
    let mut c = Clauses::new();
    let (r, x, _) = counterexample_bounded(0.1, 100.0, 1e-3).unwrap();
    let sup = x.states().iter().map(|p| p.norm()).fold(0.0, f64::max);
    c.check(format!("sup |x| over nodes {sup:.6} <= 0.1"), sup <= 0.1);
    c.check(format!("|x(0)| {:.3e} <= 0.1", r.initial_norm), r.initial_norm <= 0.1);
    c.check("x1, x2 nondecreasing toward 0", r.x1_monotone && r.x2_monotone);
    let t = r.from_origin.first_violation;
    c.check(
        format!(
            "same schedule from 0 violates before t = 2 (first violation {t:?}, sup {:.4})",
            r.from_origin.sup_norm
        ),
        t.is_some_and(|t| t < 2.0),
    );
    c
}

fn stability() -> Clauses {
    let mut c = Clauses::new();
    let sys = OutputSystem::new(builtin("linear_decay").unwrap(), OutputMap::identity(1)).unwrap();
    let bundle = BundleSpec {
        horizon: 10.0,
        step: 5e-3,
        ..BundleSpec::default()
    };
    let ln10 = 10f64.ln();
    let a = estimate_uniform_attraction(&sys, 1.0, 0.1, &bundle).unwrap();
    let t = a.t_hat.unwrap_or(f64::NAN);
    c.check(format!("T(0.1, 1) = {t:.4}, ln 10 +- 0.05"), (t - ln10).abs() <= 0.05);

    let m = estimate_stability_margin(&sys, 0.1, &MarginSpec::default(), &bundle).unwrap();
    let (d, fail) = (m.delta_hat.unwrap_or(f64::NAN), m.smallest_failure.unwrap_or(f64::NAN));
    c.check(
        format!("delta(0.1) = {d:.6}, bracket [{d:.6}, {fail:.6}] contains 0.1"),
        d <= 0.1 && 0.1 <= fail && fail - d <= 1e-3,
    );

    let l = lemma54_sup(
        &sys,
        &InitialSet::Ball { radius: 1.0 },
        &Region::ball(1, 0.1, true),
        &Region::ball(1, 0.05, false),
        &bundle,
    )
    .unwrap();
    let s = l.sup_hat.unwrap_or(f64::NAN);
    c.check(format!("crossing sup {s:.4} = ln 10 +- 0.05"), l.hypothesis_ok && (s - ln10).abs() <= 0.05);
    let at = l.attained_initial.map(|p| p.norm()).unwrap_or(f64::NAN);
    c.check(format!("attained at |xi| = {at}"), (at - 1.0).abs() <= 1e-12);
    c
}

fn run_into(dir: &Path, task: Task, json: &str) -> i32 {
    let sc = Scenario::from_json(json);
    run(task, sc, &Overrides { seed: Some(5), ..Default::default() }, dir).exit_code
}

fn determinism() -> Clauses {
    let mut c = Clauses::new();
    let root = std::env::temp_dir().join(format!("relaxtube-acceptance-{}", std::process::id()));
    let cases = [
        (Task::Simulate, r#"{"system": {"builtin": "binary_switch"}, "policy": {"kind": "random", "seed": 0}}"#),
        (Task::Relax, r#"{"system": {"builtin": "example41"}, "target": [0.0, 0.0, 0.25], "horizon": 2}"#),
        (Task::Approximate, r#"{"horizon": 4, "partition": {"rule": "uniform", "step": 1.0}}"#),
        (Task::Counterexample, r#"{"horizon": 5}"#),
        (Task::Stability, r#"{"horizon": 4}"#),
    ];
    for (task, json) in cases {
        let a = root.join(format!("{}-a", task.name()));
        let b = root.join(format!("{}-b", task.name()));
        fs::create_dir_all(&a).unwrap();
        fs::create_dir_all(&b).unwrap();
        let (ea, eb) = (run_into(&a, task, json), run_into(&b, task, json));
        let mut names: Vec<_> = fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
        names.sort();
        let same = names.iter().all(|n| fs::read(a.join(n)).ok() == fs::read(b.join(n)).ok());
        c.check(
            format!("{}: exit {ea}/{eb}, {} files identical", task.name(), names.len()),
            ea == EXIT_OK && eb == EXIT_OK && same && !names.is_empty(),
        );
    }
    let _ = fs::remove_dir_all(&root);
    c
}

fn idempotence() -> Clauses {
    let mut c = Clauses::new();
    let cases = [
        ("binary_switch", vec![0.02], 10.0),
        ("example41", vec![0.01, -0.02, 0.0], 4.0),
    ];
    for (name, x0, horizon) in cases {
        let f = builtin(name).unwrap();
        let g = TimeGrid::uniform(0.0, horizon, 0.01).unwrap();
        let z = integrate(&f, &SelectionPolicy::Random { seed: 3 }, &Point::new(x0).unwrap(), &g).unwrap();
        let r = RadiusProfile::constant(0.1).unwrap();
        let p = Partition::uniform(1.0, horizon).unwrap();
        match stitch_infinite(&f, &z, &r, &p, &ApproxParams::default()) {
            Err(e) => c.check(format!("{name}: stitch failed: {e}"), false),
            Ok((gamma, rep)) => {
                c.check(
                    format!("{name}: gamma nodes equal z nodes exactly"),
                    gamma.times() == z.times() && gamma.states() == z.states(),
                );
                let all_zero = rep.zeta_residuals.iter().flatten().all(|&v| v == 0.0);
                c.check(format!("{name}: zero residuals at all {} levels", rep.zeta_levels.len()), all_zero);
            }
        }
    }
    c
}

fn main() {
    let criteria: [(u32, &str, fn() -> Clauses); 9] = [
        (1, "metric suite", metric_suite),
        (2, "caratheodory reconstruction", caratheodory),
        (3, "chattering convergence", chattering),
        (4, "tube stitching", stitching),
        (5, "counterexample escape", escape),
        (6, "counterexample bounded witness", bounded),
        (7, "stability closed forms", stability),
        (8, "determinism", determinism),
        (9, "idempotence on genuine trajectories", idempotence),
    ];
    let mut failed = 0;
    for (id, name, f) in criteria {
        let clauses = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| {
            let mut c = Clauses::new();
            c.check("panicked", false);
            c
        });
        let ok = clauses.0.iter().all(|(_, ok)| *ok);
        failed += usize::from(!ok);
        println!("{} {id}. {name}", if ok { "PASS" } else { "FAIL" });
        for (what, ok) in &clauses.0 {
            println!("      [{}] {what}", if *ok { "ok" } else { "no" });
        }
    }
    println!("acceptance: {} of 9 criteria passed", 9 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
