//! Output-stability diagnostics for `x' in F(x)`, `y = h(x)`.
//!
//! Every verdict here is empirical: it holds on a sampled bundle of
//! trajectories (initial points times selection policies), not on the full
//! solution set. Bundles are built from nested samplers, so refining a bundle
//! only adds trajectories.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{self, Expr, Var};
use crate::inclusion::{OutputMap, SetMap};
use crate::integrate::{integrate, ChatterTarget, SelectionPolicy, TimeGrid, Trajectory};
use crate::sampling;
use crate::setgeom::Point;

#[derive(Clone, Debug)]
pub struct OutputSystem {
    pub f: SetMap,
    pub h: OutputMap,
}

impl OutputSystem {
    pub fn new(f: SetMap, h: OutputMap) -> Result<Self> {
        if !f.is_autonomous() {
            return Err(Error::InvalidInput("output stability needs an autonomous map".into()));
        }
        if h.dim_in() != f.dim() {
            return Err(Error::DimensionMismatch {
                expected: f.dim(),
                found: h.dim_in(),
            });
        }
        Ok(OutputSystem { f, h })
    }
}

/// Nodewise `h(x(t))`, linearly interpolated in output space.
pub fn output_of(x: &Trajectory, h: &OutputMap) -> Result<Trajectory> {
    let ys: Vec<Point> = x.states().iter().map(|s| h.eval(s)).collect::<Result<_>>()?;
    let t = x.times();
    let vs: Vec<Point> = (0..ys.len() - 1)
        .map(|k| (1.0 / (t[k + 1] - t[k])) * &(&ys[k + 1] - &ys[k]))
        .collect();
    Trajectory::from_parts(t.to_vec(), ys, vs, false)
}

/// `{ p : g(p) <= 0 }`, or `< 0` when open.
#[derive(Clone, Debug, PartialEq)]
pub enum Region {
    Ball { center: Point, radius: f64, open: bool },
    /// Expression in `x1, x2, ...` naming the coordinates of the space it is applied to.
    Expr { g: Expr, open: bool },
}

impl Region {
    pub fn ball(dim: usize, radius: f64, open: bool) -> Self {
        Region::Ball {
            center: Point::zeros(dim),
            radius,
            open,
        }
    }

    pub fn parse(text: &str, open: bool) -> Result<Self> {
        let g = expr::parse_expr(text)?;
        let mut vars = Vec::new();
        g.vars(&mut vars);
        if vars.iter().any(|v| !matches!(v, Var::X(_))) {
            return Err(Error::InvalidInput(format!("region `{text}` may only use x1, x2, ...")));
        }
        Ok(Region::Expr { g, open })
    }

    /// Defining function; the region is where it is nonpositive.
    pub fn level(&self, p: &Point) -> f64 {
        match self {
            Region::Ball { center, radius, .. } => p.dist(center) - radius,
            Region::Expr { g, .. } => g.eval(0.0, p.coords(), &[]),
        }
    }

    fn open(&self) -> bool {
        match self {
            Region::Ball { open, .. } | Region::Expr { open, .. } => *open,
        }
    }

    fn inside(&self, g: f64) -> bool {
        if self.open() {
            g < 0.0
        } else {
            g <= 0.0
        }
    }

    pub fn contains(&self, p: &Point) -> bool {
        self.inside(self.level(p))
    }
}

/// First time the path is in `s`, refined by linear interpolation of the
/// defining function on the bracketing step. `None` means never on the horizon.
pub fn first_crossing(s: &Region, x: &Trajectory) -> Option<f64> {
    let mut prev: Option<(f64, f64)> = None;
    for (t, p) in x.times().iter().zip(x.states()) {
        let g = s.level(p);
        if s.inside(g) {
            return Some(match prev {
                None => *t,
                Some((tp, gp)) => {
                    let tc = tp + (t - tp) * gp / (gp - g);
                    tc.clamp(tp, *t)
                }
            });
        }
        prev = Some((*t, g));
    }
    None
}

pub fn first_output_crossing(s: &Region, x: &Trajectory, h: &OutputMap) -> Result<Option<f64>> {
    Ok(first_crossing(s, &output_of(x, h)?))
}

/// Last time `|y| > eps`, refined like [`first_crossing`]; `Some(0)` if never,
/// `None` if still outside at the horizon.
fn last_exit(y: &Trajectory, eps: f64) -> Option<f64> {
    let norms: Vec<f64> = y.states().iter().map(|p| p.norm()).collect();
    let t = y.times();
    match norms.iter().rposition(|&n| n > eps) {
        None => Some(0.0),
        Some(k) if k + 1 == norms.len() => None,
        Some(k) => {
            let (a, b) = (norms[k] - eps, norms[k + 1] - eps);
            Some(t[k] + (t[k + 1] - t[k]) * a / (a - b))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolicySpec {
    ConstantAtom { index: usize },
    Random { seed: u64 },
    /// Chattering towards the zero velocity.
    ChatterZero,
}

impl PolicySpec {
    pub fn to_policy(&self, dim: usize) -> SelectionPolicy {
        match self {
            PolicySpec::ConstantAtom { index } => SelectionPolicy::ConstantAtom(*index),
            PolicySpec::Random { seed } => SelectionPolicy::Random { seed: *seed },
            PolicySpec::ChatterZero => SelectionPolicy::Chatter(ChatterTarget::Constant(Point::zeros(dim))),
        }
    }
}

/// Declared sample of the solution set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BundleSpec {
    pub horizon: f64,
    pub step: f64,
    /// Radii `j / m` of the unit ball, `j = 1..=m`, plus the center.
    pub radial_levels: usize,
    /// Directions beyond `+-e_j`.
    pub extra_directions: usize,
    pub seed: u64,
    pub policies: Vec<PolicySpec>,
}

impl Default for BundleSpec {
    fn default() -> Self {
        BundleSpec {
            horizon: 10.0,
            step: 5e-3,
            radial_levels: 4,
            extra_directions: 4,
            seed: 0,
            policies: vec![PolicySpec::ConstantAtom { index: 0 }],
        }
    }
}

impl BundleSpec {
    /// Doubled density; contains every sample of `self`.
    pub fn refined(&self) -> Self {
        BundleSpec {
            radial_levels: 2 * self.radial_levels,
            extra_directions: 2 * self.extra_directions + 2,
            ..self.clone()
        }
    }

    /// Samples of the closed unit ball.
    pub fn unit_samples(&self, dim: usize) -> Vec<Point> {
        let m = self.radial_levels.max(1);
        let dirs = sampling::directions(dim, self.extra_directions, self.seed);
        let mut out = vec![Point::zeros(dim)];
        for j in 1..=m {
            let rho = j as f64 / m as f64;
            out.extend(dirs.iter().map(|d| rho * d));
        }
        out
    }

    fn grid(&self) -> Result<TimeGrid> {
        TimeGrid::uniform(0.0, self.horizon, self.step)
    }
}

#[derive(Clone, Debug)]
pub struct Member {
    pub initial: Point,
    pub policy: usize,
    pub trajectory: Option<Arc<Trajectory>>,
    /// Time of a divergence-guard trip; such members are incomplete.
    pub divergence: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct Bundle {
    pub members: Vec<Member>,
}

impl Bundle {
    pub fn incomplete(&self) -> usize {
        self.members.iter().filter(|m| m.divergence.is_some()).count()
    }

    fn complete(&self) -> impl Iterator<Item = (usize, &Member, &Trajectory)> {
        self.members
            .iter()
            .enumerate()
            .filter_map(|(i, m)| m.trajectory.as_deref().map(|t| (i, m, t)))
    }
}

/// One trajectory per (initial point, policy), integrated concurrently.
pub fn run_bundle(f: &SetMap, initials: &[Point], spec: &BundleSpec) -> Result<Bundle> {
    if spec.policies.is_empty() {
        return Err(Error::InvalidInput("bundle needs at least one policy".into()));
    }
    let grid = spec.grid()?;
    let jobs: Vec<(Point, usize)> = initials
        .iter()
        .flat_map(|x| (0..spec.policies.len()).map(move |p| (x.clone(), p)))
        .collect();
    let members: Vec<Result<Member>> = jobs
        .into_par_iter()
        .map(|(x0, p)| {
            let pol = spec.policies[p].to_policy(f.dim());
            match integrate(f, &pol, &x0, &grid) {
                Ok(t) => Ok(Member {
                    initial: x0,
                    policy: p,
                    trajectory: Some(Arc::new(t)),
                    divergence: None,
                }),
                Err(Error::Divergence { time, .. }) => Ok(Member {
                    initial: x0,
                    policy: p,
                    trajectory: None,
                    divergence: Some(time),
                }),
                Err(e) => Err(e),
            }
        })
        .collect();
    Ok(Bundle {
        members: members.into_iter().collect::<Result<_>>()?,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MarginSpec {
    pub delta_max: f64,
    pub levels: usize,
    pub bisect_iters: usize,
    /// Initial states are additionally restricted to `|xi| <= r_init`.
    pub r_init: f64,
}

impl Default for MarginSpec {
    fn default() -> Self {
        MarginSpec {
            delta_max: 1.0,
            levels: 12,
            bisect_iters: 8,
            r_init: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarginReport {
    pub eps: f64,
    pub found: bool,
    pub delta_hat: Option<f64>,
    /// Largest tested radius that failed, if any.
    pub smallest_failure: Option<f64>,
    pub r_init: f64,
    pub trajectories: usize,
    pub incomplete: usize,
    pub note: String,
}

const EMPIRICAL: &str = "empirical over sampled bundle";

fn keeps_within(y: &Trajectory, eps: f64) -> bool {
    y.states().iter().all(|p| p.norm() <= eps * (1.0 + 1e-12))
}

/// Largest sampled `delta` such that starts with `|h(xi)| <= delta` keep `|y| <= eps`.
pub fn estimate_stability_margin(
    sys: &OutputSystem,
    eps: f64,
    margin: &MarginSpec,
    bundle: &BundleSpec,
) -> Result<MarginReport> {
    if !(eps > 0.0) || !(margin.delta_max > 0.0) {
        return Err(Error::InvalidInput("need eps > 0 and delta_max > 0".into()));
    }
    let dim = sys.f.dim();
    let unit = bundle.unit_samples(dim);
    let wide: Vec<Point> = unit.iter().map(|u| margin.r_init * u).collect();
    let wide_bundle = run_bundle(&sys.f, &wide, bundle)?;
    let mut count = wide_bundle.members.len();
    let mut incomplete = wide_bundle.incomplete();

    let mut test = |delta: f64| -> Result<bool> {
        for (_, m, x) in wide_bundle.complete() {
            if sys.h.eval(&m.initial)?.norm() <= delta && !keeps_within(&output_of(x, &sys.h)?, eps) {
                return Ok(false);
            }
        }
        let near: Vec<Point> = unit
            .iter()
            .map(|u| delta * u)
            .filter(|xi| sys.h.eval(xi).map(|y| y.norm() <= delta).unwrap_or(false))
            .collect();
        let b = run_bundle(&sys.f, &near, bundle)?;
        count += b.members.len();
        incomplete += b.incomplete();
        for (_, _, x) in b.complete() {
            if !keeps_within(&output_of(x, &sys.h)?, eps) {
                return Ok(false);
            }
        }
        Ok(true)
    };

    let mut failure = None;
    let mut found = None;
    for j in 0..margin.levels.max(1) {
        let d = margin.delta_max * 0.5f64.powi(j as i32);
        if test(d)? {
            found = Some(d);
            break;
        }
        failure = Some(d);
    }
    if let (Some(mut lo), Some(mut hi)) = (found, failure) {
        for _ in 0..margin.bisect_iters {
            let mid = 0.5 * (lo + hi);
            if test(mid)? {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        found = Some(lo);
        failure = Some(hi);
    }
    Ok(MarginReport {
        eps,
        found: found.is_some(),
        delta_hat: found,
        smallest_failure: failure,
        r_init: margin.r_init,
        trajectories: count,
        incomplete,
        note: format!("{EMPIRICAL}; initial states restricted to |xi| <= r_init"),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttractionReport {
    pub kappa: f64,
    pub eps: f64,
    /// `None` when some trajectory is still outside at the horizon.
    pub t_hat: Option<f64>,
    pub worst_initial: Option<Point>,
    pub trajectories: usize,
    pub incomplete: usize,
    pub note: String,
}

fn attraction_over(
    bundle: &Bundle,
    h: &OutputMap,
    kappa: f64,
    eps: f64,
) -> Result<(Option<f64>, Option<Point>, usize)> {
    let mut worst: Option<f64> = Some(0.0);
    let mut who = None;
    let mut n = 0;
    for (_, m, x) in bundle.complete() {
        if m.initial.norm() > kappa * (1.0 + 1e-12) {
            continue;
        }
        n += 1;
        let t = last_exit(&output_of(x, h)?, eps);
        match (t, worst) {
            (None, Some(_)) => {
                worst = None;
                who = Some(m.initial.clone());
            }
            (Some(a), Some(b)) if who.is_none() || a > b => {
                worst = Some(a);
                who = Some(m.initial.clone());
            }
            _ => {}
        }
    }
    Ok((worst, who, n))
}

/// Smallest `T` with `|y(t)| <= eps` on `[T, horizon]` for every sampled start in `B(0, kappa)`.
/// The time is the interpolated last exit, not a grid node.
pub fn estimate_uniform_attraction(
    sys: &OutputSystem,
    kappa: f64,
    eps: f64,
    bundle: &BundleSpec,
) -> Result<AttractionReport> {
    if !(kappa > 0.0) || !(eps > 0.0) {
        return Err(Error::InvalidInput("need kappa > 0 and eps > 0".into()));
    }
    let starts: Vec<Point> = bundle.unit_samples(sys.f.dim()).iter().map(|u| kappa * u).collect();
    let b = run_bundle(&sys.f, &starts, bundle)?;
    let (t_hat, worst_initial, n) = attraction_over(&b, &sys.h, kappa, eps)?;
    Ok(AttractionReport {
        kappa,
        eps,
        t_hat,
        worst_initial,
        trajectories: n,
        incomplete: b.incomplete(),
        note: EMPIRICAL.into(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GainRow {
    pub kappa: f64,
    pub eps: f64,
    pub t_hat: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GainTable {
    pub rows: Vec<GainRow>,
    pub trajectories: usize,
    pub incomplete: usize,
    pub note: String,
}

/// `T_hat(eps, kappa)` over one bundle holding the samples of every `kappa`;
/// each row uses the starts with `|xi| <= kappa`, which keeps the table monotone.
pub fn gain_table(sys: &OutputSystem, kappas: &[f64], epss: &[f64], bundle: &BundleSpec) -> Result<GainTable> {
    let unit = bundle.unit_samples(sys.f.dim());
    let mut starts: Vec<Point> = Vec::new();
    for &k in kappas {
        for u in &unit {
            let p = k * u;
            if !starts.contains(&p) {
                starts.push(p);
            }
        }
    }
    let b = run_bundle(&sys.f, &starts, bundle)?;
    let mut rows = Vec::new();
    for &kappa in kappas {
        for &eps in epss {
            let (t_hat, _, _) = attraction_over(&b, &sys.h, kappa, eps)?;
            rows.push(GainRow { kappa, eps, t_hat });
        }
    }
    Ok(GainTable {
        rows,
        trajectories: b.members.len(),
        incomplete: b.incomplete(),
        note: EMPIRICAL.into(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttractivityReport {
    pub eps_attr: f64,
    pub tail_start: f64,
    pub ok: bool,
    /// Indices of bundle members with `|y| > eps_attr` on the tail.
    pub failures: Vec<usize>,
    pub incomplete: usize,
}

/// `|y(t)| <= eps_attr` on `[0.9 H, H]` for every complete member.
pub fn check_attractivity(bundle: &Bundle, h: &OutputMap, horizon: f64, eps_attr: f64) -> Result<AttractivityReport> {
    let tail_start = 0.9 * horizon;
    let mut failures = Vec::new();
    for (i, _, x) in bundle.complete() {
        let y = output_of(x, h)?;
        let bad = y
            .times()
            .iter()
            .zip(y.states())
            .any(|(t, p)| *t >= tail_start && p.norm() > eps_attr);
        if bad {
            failures.push(i);
        }
    }
    Ok(AttractivityReport {
        eps_attr,
        tail_start,
        ok: failures.is_empty(),
        failures,
        incomplete: bundle.incomplete(),
    })
}

/// Initial set of a bundle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialSet {
    Ball { radius: f64 },
    Points { points: Vec<Point> },
}

impl InitialSet {
    pub fn samples(&self, dim: usize, spec: &BundleSpec) -> Vec<Point> {
        match self {
            InitialSet::Ball { radius } => spec.unit_samples(dim).iter().map(|u| *radius * u).collect(),
            InitialSet::Points { points } => points.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lemma54Report {
    /// False when some member never meets `J`; the estimate is then void.
    pub hypothesis_ok: bool,
    pub hypothesis_failures: Vec<usize>,
    pub sup_hat: Option<f64>,
    pub attained_by: Option<usize>,
    pub attained_initial: Option<Point>,
    /// Same estimate on the doubled bundle.
    pub refined_sup: Option<f64>,
    /// Set when refinement moved the estimate by more than one step.
    pub unstable: bool,
    pub trajectories: usize,
    pub incomplete: usize,
    pub note: String,
}

fn sup_crossing(bundle: &Bundle, h: &OutputMap, phi: &Region, j: &Region) -> Result<(Vec<usize>, Option<(f64, usize)>)> {
    let mut failures = Vec::new();
    let mut best: Option<(f64, usize)> = None;
    for (i, _, x) in bundle.complete() {
        let y = output_of(x, h)?;
        if !y.states().iter().any(|p| j.contains(p)) {
            failures.push(i);
            continue;
        }
        let t = first_crossing(phi, &y).unwrap_or(f64::INFINITY);
        if best.is_none_or(|(b, _)| t > b) {
            best = Some((t, i));
        }
    }
    Ok((failures, best))
}

/// Sampled `sup` of the first output-crossing time into `phi` over starts in `c`.
/// Every member must meet the compact `j` (a subset of `phi`) on the horizon.
pub fn lemma54_sup(
    sys: &OutputSystem,
    c: &InitialSet,
    phi: &Region,
    j: &Region,
    bundle: &BundleSpec,
) -> Result<Lemma54Report> {
    let dim = sys.f.dim();
    let b = run_bundle(&sys.f, &c.samples(dim, bundle), bundle)?;
    let (failures, best) = sup_crossing(&b, &sys.h, phi, j)?;
    if !failures.is_empty() {
        return Ok(Lemma54Report {
            hypothesis_ok: false,
            hypothesis_failures: failures,
            sup_hat: None,
            attained_by: None,
            attained_initial: None,
            refined_sup: None,
            unstable: false,
            trajectories: b.members.len(),
            incomplete: b.incomplete(),
            note: EMPIRICAL.into(),
        });
    }
    let refined_spec = bundle.refined();
    let rb = run_bundle(&sys.f, &c.samples(dim, &refined_spec), &refined_spec)?;
    let (_, rbest) = sup_crossing(&rb, &sys.h, phi, j)?;
    let sup_hat = best.map(|(t, _)| t).filter(|t| t.is_finite());
    let refined_sup = rbest.map(|(t, _)| t).filter(|t| t.is_finite());
    let unstable = match (sup_hat, refined_sup) {
        (Some(a), Some(r)) => (r - a).abs() > bundle.step,
        _ => false,
    };
    Ok(Lemma54Report {
        hypothesis_ok: true,
        hypothesis_failures: vec![],
        sup_hat,
        attained_by: best.map(|(_, i)| i),
        attained_initial: best.map(|(_, i)| b.members[i].initial.clone()),
        refined_sup,
        unstable,
        trajectories: b.members.len(),
        incomplete: b.incomplete(),
        note: EMPIRICAL.into(),
    })
}
