//! The `x1' = x2^2, x2' = x3^2, x3' in {-1, 1}` scenario.
//!
//! `z = 0` solves the relaxed system, yet no solution from the origin stays
//! near it: `x2(1) = sigma > 0` and `x1(t) >= sigma^2 (t - 1)`. An offset start
//! does stay close, using triangle teeth in `x3` with shrinking amplitudes and
//! offsets that cancel the growth of `x1` and `x2`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inclusion::builtin;
use crate::integrate::{integrate, integrate_guarded, tube_check, RadiusProfile, SelectionPolicy, TimeGrid, Trajectory};
use crate::setgeom::Point;

/// Atom indices of `u = -1` and `u = +1`.
const DOWN: usize = 0;
const UP: usize = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EscapePolicy {
    /// `u = +1` throughout.
    Plus,
    /// `u = -1` then `u = +1` for half a period each, repeated.
    Chatter { period: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EscapeReport {
    pub policy: EscapePolicy,
    pub eps: f64,
    pub horizon: f64,
    pub step: f64,
    /// `x2(1)`.
    pub sigma_hat: f64,
    /// `x2(t) >= sigma_hat` and `x1(t) >= sigma_hat^2 (t - 1)` at every node `t >= 1`.
    pub bound_check: bool,
    pub bound_slack: f64,
    pub worst_x1_margin: f64,
    /// First time `|x(t)| > eps`, interpolated.
    pub first_violation: Option<f64>,
    pub violated_on_horizon: bool,
    /// Time after which the lower bound alone forces `x1 > eps`.
    pub certified_escape: Option<f64>,
}

fn schedule_policy(policy: &EscapePolicy, horizon: f64) -> Result<(SelectionPolicy, Vec<f64>)> {
    match policy {
        EscapePolicy::Plus => Ok((SelectionPolicy::ConstantAtom(UP), vec![])),
        EscapePolicy::Chatter { period } => {
            if !(*period > 0.0) {
                return Err(Error::InvalidInput("chatter period must be positive".into()));
            }
            let half = 0.5 * period;
            let n = (horizon / half).ceil() as usize;
            let sched: Vec<(f64, usize)> = (0..n)
                .map(|i| (i as f64 * half, if i % 2 == 0 { DOWN } else { UP }))
                .collect();
            let times = sched.iter().map(|s| s.0).collect();
            Ok((SelectionPolicy::OpenLoop(Arc::new(sched)), times))
        }
    }
}

/// Uniform grid with extra nodes at the given times.
fn grid_with(horizon: f64, h: f64, extra: &[f64]) -> Result<TimeGrid> {
    let base = TimeGrid::uniform(0.0, horizon, h)?;
    if extra.is_empty() {
        return Ok(base);
    }
    let mut nodes: Vec<f64> = base.nodes().iter().chain(extra).cloned().filter(|t| *t <= horizon).collect();
    nodes.sort_by(f64::total_cmp);
    nodes.dedup_by(|a, b| (*a - *b).abs() <= 1e-9 * h);
    TimeGrid::explicit(nodes)
}

/// Runs the system from the origin and checks the escape bounds.
/// Fails with a verification error (after building the report) when a bound is broken.
pub fn counterexample_escape(eps: f64, policy: &EscapePolicy, horizon: f64, h: f64) -> Result<(EscapeReport, Trajectory)> {
    if !(eps > 0.0) {
        return Err(Error::InvalidInput("eps must be positive".into()));
    }
    if !(horizon >= 1.0) {
        return Err(Error::InvalidInput("escape horizon must reach t = 1".into()));
    }
    let f = builtin("example41")?;
    let (pol, switches) = schedule_policy(policy, horizon)?;
    let grid = grid_with(horizon, h, &switches)?;
    // the escape is polynomial in t; only non-finite states count as divergence here
    let x = integrate_guarded(&f, &pol, &Point::zeros(3), &grid, f64::MAX)?;
    let sigma = x.state_at(1.0).coords()[1];
    let slack = h * sigma * sigma + 1e-12;
    let mut ok = true;
    let mut worst = f64::INFINITY;
    for (t, s) in x.times().iter().zip(x.states()) {
        if *t < 1.0 {
            continue;
        }
        let c = s.coords();
        let m = c[0] - sigma * sigma * (t - 1.0);
        worst = worst.min(m);
        if c[1] < sigma - 1e-12 || m < -slack {
            ok = false;
        }
    }
    let zero = Trajectory::constant(&grid, &Point::zeros(3));
    let tube = tube_check(&x, &zero, &RadiusProfile::constant(eps)?, 0.0);
    let report = EscapeReport {
        policy: policy.clone(),
        eps,
        horizon,
        step: h,
        sigma_hat: sigma,
        bound_check: ok,
        bound_slack: slack,
        worst_x1_margin: worst,
        first_violation: tube.first_violation,
        violated_on_horizon: !tube.ok,
        certified_escape: (sigma > 0.0).then(|| 1.0 + eps / (sigma * sigma)),
    };
    Ok((report, x))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Quadrature {
    /// `int x3^2` over the horizon, Euler sum.
    pub c2_euler: f64,
    /// Same integral for exact triangle teeth: `sum 2 a_k^3 / 3`.
    pub c2_teeth: f64,
    /// `int x2^2` over the horizon, Euler sum.
    pub c1_euler: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundedReport {
    pub eps: f64,
    pub horizon: f64,
    pub step: f64,
    /// First tooth amplitude; tooth `k` has amplitude `max(a / (k + 1), amplitude_floor)`.
    pub a: f64,
    pub amplitude_floor: f64,
    pub teeth: usize,
    pub floor_teeth: usize,
    pub offsets: (f64, f64),
    pub initial: Point,
    pub initial_norm: f64,
    pub sup_norm: f64,
    pub x1_monotone: bool,
    pub x2_monotone: bool,
    pub final_state: Point,
    pub quadrature: Quadrature,
    pub ok: bool,
    /// The same schedule started at the origin.
    pub from_origin: OriginRun,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OriginRun {
    pub sigma_hat: f64,
    pub first_violation: Option<f64>,
    pub sup_norm: f64,
    pub certified_escape: Option<f64>,
}

/// Steps per tooth half for amplitude `a`: tooth `k` rises for `n_k` steps and falls for `n_k`.
fn tooth_steps(a: f64, h: f64, total: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut used = 0;
    let mut k = 0usize;
    while used < total {
        let n = ((a / (k + 1) as f64) / h).round().max(1.0) as usize;
        out.push(n);
        used += 2 * n;
        k += 1;
    }
    out
}

fn schedule_of(teeth: &[usize], h: f64) -> Vec<(f64, usize)> {
    let mut s = Vec::with_capacity(2 * teeth.len());
    let mut i = 0usize;
    for &n in teeth {
        s.push((i as f64 * h, UP));
        s.push(((i + n) as f64 * h, DOWN));
        i += 2 * n;
    }
    s
}

/// Plain Euler run of the scenario on `steps` uniform steps; returns
/// `(c2, c1, sup |x|)` for the offset start.
fn fast_offsets(teeth: &[usize], h: f64, steps: usize) -> (f64, f64, f64) {
    let u_at = {
        let mut u = Vec::with_capacity(steps);
        for &n in teeth {
            u.extend(std::iter::repeat_n(1.0, n));
            u.extend(std::iter::repeat_n(-1.0, n));
        }
        u.truncate(steps);
        u
    };
    let mut x3s = Vec::with_capacity(steps + 1);
    let mut x3 = 0.0f64;
    let mut c2 = 0.0f64;
    for u in &u_at {
        x3s.push(x3);
        c2 += h * (x3 * x3);
        x3 += h * u;
    }
    x3s.push(x3);
    let mut x2 = -c2;
    let mut c1 = 0.0f64;
    let mut x2s = Vec::with_capacity(steps + 1);
    for x3 in x3s.iter().take(steps) {
        x2s.push(x2);
        c1 += h * (x2 * x2);
        x2 += h * (x3 * x3);
    }
    x2s.push(x2);
    let mut x1 = -c1;
    let mut sup: f64 = 0.0;
    for k in 0..=steps {
        sup = sup.max((x1 * x1 + x2s[k] * x2s[k] + x3s[k] * x3s[k]).sqrt());
        if k < steps {
            x1 += h * (x2s[k] * x2s[k]);
        }
    }
    (c2, c1, sup)
}

/// Explicit bounded witness from an offset start, with `a` tuned by bisection so that
/// `|x(t)| <= 0.9 eps` and `|x(0)| <= 0.9 eps`.
pub fn counterexample_bounded(eps: f64, horizon: f64, h: f64) -> Result<(BoundedReport, Trajectory, Trajectory)> {
    if !(eps > 0.0) || !(horizon > 0.0) || !(h > 0.0) {
        return Err(Error::InvalidInput("need eps, horizon, step > 0".into()));
    }
    let steps = (horizon / h).round() as usize;
    if ((steps as f64) * h - horizon).abs() > 1e-9 * horizon {
        return Err(Error::InvalidInput("horizon must be a multiple of the step".into()));
    }
    let target = 0.9 * eps;
    let fits = |a: f64| {
        let teeth = tooth_steps(a, h, steps);
        let (c2, c1, sup) = fast_offsets(&teeth, h, steps);
        sup <= target && (c1 * c1 + c2 * c2).sqrt() <= target
    };
    let (mut lo, mut hi) = (h, eps);
    if !fits(lo) {
        return Err(Error::Verification(format!("amplitude search: smallest tooth {lo} already too large")));
    }
    if fits(hi) {
        return Err(Error::Verification("amplitude search: upper bound fits, search is degenerate".into()));
    }
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        if fits(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let a = lo;
    let teeth = tooth_steps(a, h, steps);
    let (c2, c1, _) = fast_offsets(&teeth, h, steps);
    let c2_teeth: f64 = teeth.iter().map(|&n| 2.0 * (n as f64 * h).powi(3) / 3.0).sum();

    let f = builtin("example41")?;
    let grid = TimeGrid::uniform(0.0, horizon, h)?;
    let pol = SelectionPolicy::OpenLoop(Arc::new(schedule_of(&teeth, h)));
    let x0 = Point::new(vec![-c1, -c2, 0.0])?;
    let x = integrate(&f, &pol, &x0, &grid)?;
    let sup_norm = x.states().iter().map(|s| s.norm()).fold(0.0, f64::max);
    let nondecreasing = |i: usize| x.states().windows(2).all(|w| w[1].coords()[i] >= w[0].coords()[i]);
    let last = x.last().clone();
    let x1_monotone = nondecreasing(0) && last.coords()[0] <= 1e-12;
    let x2_monotone = nondecreasing(1) && last.coords()[1] <= 1e-12;

    let x_zero = integrate(&f, &pol, &Point::zeros(3), &grid)?;
    let zero_ref = Trajectory::constant(&grid, &Point::zeros(3));
    let tube0 = tube_check(&x_zero, &zero_ref, &RadiusProfile::constant(eps)?, 0.0);
    let sigma0 = x_zero.state_at(1.0_f64.min(horizon)).coords()[1];
    let from_origin = OriginRun {
        sigma_hat: sigma0,
        first_violation: tube0.first_violation,
        sup_norm: x_zero.states().iter().map(|s| s.norm()).fold(0.0, f64::max),
        certified_escape: (sigma0 > 0.0).then(|| 1.0 + eps / (sigma0 * sigma0)),
    };

    let floor_teeth = teeth.iter().filter(|&&n| n == 1).count();
    let report = BoundedReport {
        eps,
        horizon,
        step: h,
        a,
        amplitude_floor: h,
        teeth: teeth.len(),
        floor_teeth,
        offsets: (c1, c2),
        initial_norm: x0.norm(),
        initial: x0,
        sup_norm,
        x1_monotone,
        x2_monotone,
        final_state: last,
        quadrature: Quadrature {
            c2_euler: c2,
            c2_teeth,
            c1_euler: c1,
        },
        ok: sup_norm <= eps && x1_monotone && x2_monotone,
        from_origin,
    };
    Ok((report, x, x_zero))
}

/// Escape from the origin and the bounded witness for one `eps`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CounterexampleResult {
    pub escape: EscapeReport,
    pub bounded: BoundedReport,
}

/// Both halves with `u = +1` for the escape; trajectories are dropped.
pub fn counterexample_pair(eps: f64, escape_horizon: f64, horizon: f64, h: f64) -> Result<CounterexampleResult> {
    let (escape, _) = counterexample_escape(eps, &EscapePolicy::Plus, escape_horizon, h)?;
    let (bounded, _, _) = counterexample_bounded(eps, horizon, h)?;
    Ok(CounterexampleResult { escape, bounded })
}
