//! Explicit Euler integration of `x' in F(t, x)` under selection policies.
//!
//! Every produced [`Trajectory`] obeys the Euler contract
//! `states[k + 1] = states[k] + (t[k + 1] - t[k]) * velocities[k]` up to
//! rounding, and each stored velocity is a point of `F(t_k, x_k)` (or of its
//! hull for relaxed trajectories). Chattering sub-steps become grid nodes of
//! their own, so the contract also holds inside a macro-step.

use std::fmt;
use std::io::{BufRead, Write};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{self, Expr, Var};
use crate::inclusion::{relax, SetMap};
use crate::setgeom::{
    caratheodory_decompose, dist_point_set, project_to_hull, ConvexCombination, Point, PointSet,
};

/// Overflow guard on `|x|`.
pub const R_MAX: f64 = 1e6;
/// Slack for tube membership tests.
pub const TAU_TUBE: f64 = 1e-9;
/// Slack for selection validity.
pub const TAU_SEL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    nodes: Vec<f64>,
    /// Nominal step for uniform grids.
    step: Option<f64>,
}

impl TimeGrid {
    /// Nodes `t0 + k h`; the last node is `t_end`, so the final step may be short.
    pub fn uniform(t0: f64, t_end: f64, h: f64) -> Result<Self> {
        if !(h > 0.0) || !h.is_finite() || !(t_end > t0) || !t0.is_finite() || !t_end.is_finite() {
            return Err(Error::InvalidInput(format!(
                "uniform grid needs t0 < t_end and h > 0 (got {t0}, {t_end}, {h})"
            )));
        }
        let n = ((t_end - t0) / h - 1e-9).ceil().max(1.0) as usize;
        let mut nodes: Vec<f64> = (0..n).map(|k| t0 + k as f64 * h).collect();
        nodes.push(t_end);
        Ok(TimeGrid {
            nodes,
            step: Some(h),
        })
    }

    pub fn explicit(nodes: Vec<f64>) -> Result<Self> {
        if nodes.len() < 2 {
            return Err(Error::InvalidInput("grid needs at least two nodes".into()));
        }
        if nodes.iter().any(|t| !t.is_finite()) || nodes.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput("grid nodes must be finite and strictly increasing".into()));
        }
        Ok(TimeGrid { nodes, step: None })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn t0(&self) -> f64 {
        self.nodes[0]
    }

    pub fn t_end(&self) -> f64 {
        *self.nodes.last().unwrap()
    }

    pub fn steps(&self) -> usize {
        self.nodes.len() - 1
    }

    /// Length of step `k`. Uniform grids report the nominal step except on a short final step.
    pub fn step_len(&self, k: usize) -> f64 {
        let diff = self.nodes[k + 1] - self.nodes[k];
        match self.step {
            Some(h) if (diff - h).abs() <= 1e-9 * h => h,
            _ => diff,
        }
    }

    pub fn max_step(&self) -> f64 {
        (0..self.steps()).map(|k| self.step_len(k)).fold(0.0, f64::max)
    }
}

/// Sampled path with per-step velocities and linear interpolation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    times: Vec<f64>,
    states: Vec<Point>,
    velocities: Vec<Point>,
    /// True when the path claims to solve the relaxed inclusion.
    convex: bool,
    weights: Option<Vec<ConvexCombination>>,
}

impl Trajectory {
    pub fn from_parts(times: Vec<f64>, states: Vec<Point>, velocities: Vec<Point>, convex: bool) -> Result<Self> {
        if times.len() < 2 || states.len() != times.len() || velocities.len() + 1 != times.len() {
            return Err(Error::InvalidInput(format!(
                "trajectory needs n >= 2 times, n states and n - 1 velocities (got {}, {}, {})",
                times.len(),
                states.len(),
                velocities.len()
            )));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput("trajectory times must be strictly increasing".into()));
        }
        let dim = states[0].dim();
        for p in states.iter().chain(&velocities) {
            p.check_dim(dim)?;
        }
        Ok(Trajectory {
            times,
            states,
            velocities,
            convex,
            weights: None,
        })
    }

    /// Constant path at `xi` on the grid.
    pub fn constant(grid: &TimeGrid, xi: &Point) -> Self {
        let n = grid.nodes().len();
        Trajectory {
            times: grid.nodes().to_vec(),
            states: vec![xi.clone(); n],
            velocities: vec![Point::zeros(xi.dim()); n - 1],
            convex: true,
            weights: None,
        }
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn states(&self) -> &[Point] {
        &self.states
    }

    pub fn velocities(&self) -> &[Point] {
        &self.velocities
    }

    pub fn weights(&self) -> Option<&[ConvexCombination]> {
        self.weights.as_deref()
    }

    pub fn is_convex(&self) -> bool {
        self.convex
    }

    pub fn dim(&self) -> usize {
        self.states[0].dim()
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn t0(&self) -> f64 {
        self.times[0]
    }

    pub fn t_end(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn initial(&self) -> &Point {
        &self.states[0]
    }

    pub fn last(&self) -> &Point {
        self.states.last().unwrap()
    }

    /// Index of the step containing `t` (right-continuous; clamps outside the span).
    pub fn step_index(&self, t: f64) -> usize {
        let k = self.times.partition_point(|&s| s <= t);
        k.saturating_sub(1).min(self.velocities.len() - 1)
    }

    /// Linear interpolation; exact at nodes, clamped outside the span.
    pub fn state_at(&self, t: f64) -> Point {
        if t <= self.t0() {
            return self.states[0].clone();
        }
        if t >= self.t_end() {
            return self.last().clone();
        }
        let k = self.step_index(t);
        if t == self.times[k] {
            return self.states[k].clone();
        }
        self.states[k].axpy(t - self.times[k], &self.velocities[k])
    }

    pub fn velocity_at(&self, t: f64) -> &Point {
        &self.velocities[self.step_index(t)]
    }

    /// Checks the Euler contract; returns the largest relative defect.
    pub fn euler_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for k in 0..self.velocities.len() {
            let dt = self.times[k + 1] - self.times[k];
            let pred = self.states[k].axpy(dt, &self.velocities[k]);
            let scale = 1.0 + self.states[k].norm() + dt * self.velocities[k].norm();
            worst = worst.max(pred.dist(&self.states[k + 1]) / scale);
        }
        worst
    }
}

/// Target velocity rule for chattering and relaxed integration.
pub type TargetFn = dyn Fn(f64, &Point) -> Point + Send + Sync;

#[derive(Clone)]
pub enum ChatterTarget {
    Constant(Point),
    /// `reference' + gain (reference - x)`
    Tracking { reference: Arc<Trajectory>, gain: f64 },
    Custom(Arc<TargetFn>),
}

impl ChatterTarget {
    pub fn eval(&self, t: f64, x: &Point) -> Point {
        match self {
            ChatterTarget::Constant(v) => v.clone(),
            ChatterTarget::Tracking { reference, gain } => tracking_target(reference, *gain, t, x),
            ChatterTarget::Custom(f) => f(t, x),
        }
    }
}

fn tracking_target(reference: &Trajectory, gain: f64, t: f64, x: &Point) -> Point {
    let err = &reference.state_at(t) - x;
    reference.velocity_at(t).axpy(gain, &err)
}

#[derive(Clone)]
pub enum SelectionPolicy {
    /// Always the point with this index (indices past the end select the last point,
    /// since values can merge after deduplication).
    ConstantAtom(usize),
    Random { seed: u64 },
    /// Nearest point to the tracking target, no chattering.
    Tracking { reference: Arc<Trajectory>, gain: f64 },
    /// Carathéodory chattering of a hull target within each macro-step.
    Chatter(ChatterTarget),
    /// Atom index switched at given times; entries are `(switch time, index)`, sorted.
    OpenLoop(Arc<Vec<(f64, usize)>>),
}

impl fmt::Debug for SelectionPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SelectionPolicy::ConstantAtom(i) => write!(f, "constant_atom({i})"),
            SelectionPolicy::Random { seed } => write!(f, "random(seed={seed})"),
            SelectionPolicy::Tracking { gain, .. } => write!(f, "tracking(gain={gain})"),
            SelectionPolicy::Chatter(_) => write!(f, "chatter"),
            SelectionPolicy::OpenLoop(s) => write!(f, "open_loop({} switches)", s.len()),
        }
    }
}

fn guard(t: f64, x: &Point, r_max: f64) -> Result<()> {
    let norm = x.norm();
    if !(norm <= r_max) {
        return Err(Error::Divergence { time: t, norm });
    }
    Ok(())
}

fn open_loop_index(schedule: &[(f64, usize)], t: f64) -> usize {
    let k = schedule.partition_point(|&(s, _)| s <= t + 1e-12 * t.abs().max(1.0));
    schedule[k.saturating_sub(1)].1
}

/// Point of `set` standing in for atom `atom` of an earlier decomposition:
/// the same index when the point count matches, else the nearest point.
pub(crate) fn follow_atom(set: &PointSet, atom_index: usize, atom: &Point, expected_len: usize) -> Point {
    if set.len() == expected_len {
        set.points()[atom_index].clone()
    } else {
        set.points()[set.nearest_index(atom)].clone()
    }
}

pub fn integrate(f: &SetMap, policy: &SelectionPolicy, x0: &Point, grid: &TimeGrid) -> Result<Trajectory> {
    integrate_guarded(f, policy, x0, grid, R_MAX)
}

pub fn integrate_guarded(
    f: &SetMap,
    policy: &SelectionPolicy,
    x0: &Point,
    grid: &TimeGrid,
    r_max: f64,
) -> Result<Trajectory> {
    x0.check_dim(f.dim())?;
    if !x0.is_finite() {
        return Err(Error::InvalidInput("initial state not finite".into()));
    }
    if let SelectionPolicy::OpenLoop(s) = policy {
        if s.is_empty() {
            return Err(Error::InvalidInput("open-loop schedule is empty".into()));
        }
    }
    let mut rng = match policy {
        SelectionPolicy::Random { seed } => Some(ChaCha8Rng::seed_from_u64(*seed)),
        _ => None,
    };
    let nodes = grid.nodes();
    let mut times = vec![nodes[0]];
    let mut states = vec![x0.clone()];
    let mut velocities = Vec::with_capacity(nodes.len());
    let mut x = x0.clone();
    guard(nodes[0], &x, r_max)?;
    for k in 0..grid.steps() {
        let t = nodes[k];
        let h = grid.step_len(k);
        let set = f.eval(t, &x)?;
        let v: Point = match policy {
            SelectionPolicy::ConstantAtom(i) => set.points()[(*i).min(set.len() - 1)].clone(),
            SelectionPolicy::Random { .. } => {
                let i = rng.as_mut().unwrap().gen_range(0..set.len());
                set.points()[i].clone()
            }
            SelectionPolicy::Tracking { reference, gain } => {
                let w = tracking_target(reference, *gain, t, &x);
                set.points()[set.nearest_index(&w)].clone()
            }
            SelectionPolicy::OpenLoop(s) => {
                let i = open_loop_index(s, t);
                set.points()[i.min(set.len() - 1)].clone()
            }
            SelectionPolicy::Chatter(target) => {
                let hull = set.clone().with_convex(true);
                let w = project_to_hull(&target.eval(t, &x), &hull)?;
                let combo = caratheodory_decompose(&w, &hull)?;
                if combo.atoms.len() == 1 {
                    combo.atoms[0].point.clone()
                } else {
                    // each sub-step re-evaluates F at its own start
                    let n = set.len();
                    let mut s = x.clone();
                    let mut tau = t;
                    let last = combo.atoms.len() - 1;
                    for (j, atom) in combo.atoms.iter().enumerate() {
                        let dt = atom.weight * h;
                        if dt <= 0.0 {
                            continue;
                        }
                        let sub = if j == 0 { set.clone() } else { f.eval(tau, &s)? };
                        let v = follow_atom(&sub, atom.index, &atom.point, n);
                        let t_next = if j == last { nodes[k + 1] } else { tau + dt };
                        if t_next <= tau {
                            continue;
                        }
                        s = s.axpy(dt, &v);
                        guard(t_next, &s, r_max)?;
                        velocities.push(v);
                        times.push(t_next);
                        states.push(s.clone());
                        tau = t_next;
                    }
                    x = s;
                    continue;
                }
            }
        };
        x = x.axpy(h, &v);
        guard(nodes[k + 1], &x, r_max)?;
        velocities.push(v);
        times.push(nodes[k + 1]);
        states.push(x.clone());
    }
    Trajectory::from_parts(times, states, velocities, false)
}

/// Trajectory of `relax(F)` realizing `target` (projected onto the hull when outside).
/// Decomposition weights are recorded per step.
pub fn integrate_relaxed(f: &SetMap, target: &TargetFn, x0: &Point, grid: &TimeGrid) -> Result<Trajectory> {
    x0.check_dim(f.dim())?;
    let g = relax(f);
    let nodes = grid.nodes();
    let mut states = vec![x0.clone()];
    let mut velocities = Vec::with_capacity(grid.steps());
    let mut weights = Vec::with_capacity(grid.steps());
    let mut x = x0.clone();
    guard(nodes[0], &x, R_MAX)?;
    for k in 0..grid.steps() {
        let t = nodes[k];
        let set = g.eval(t, &x)?;
        let w = project_to_hull(&target(t, &x), &set)?;
        let combo = caratheodory_decompose(&w, &set)?;
        x = x.axpy(grid.step_len(k), &w);
        guard(nodes[k + 1], &x, R_MAX)?;
        velocities.push(w);
        weights.push(combo);
        states.push(x.clone());
    }
    let mut traj = Trajectory::from_parts(nodes.to_vec(), states, velocities, true)?;
    traj.weights = Some(weights);
    Ok(traj)
}

/// `|x(t0)| + sum_k h_k |v_k|`.
pub fn ac_norm(x: &Trajectory) -> f64 {
    let mut s = x.initial().norm();
    for k in 0..x.velocities.len() {
        s += (x.times[k + 1] - x.times[k]) * x.velocities[k].norm();
    }
    s
}

/// Largest distance from a stored velocity to `F(t_k, x_k)` (hull distance for
/// relaxed trajectories). Fails when it exceeds [`TAU_SEL`].
pub fn check_selection(x: &Trajectory, f: &SetMap) -> Result<f64> {
    let g = if x.convex { relax(f) } else { f.clone() };
    let mut worst: f64 = 0.0;
    for k in 0..x.velocities.len() {
        let set = g.eval(x.times[k], &x.states[k])?;
        let d = dist_point_set(&x.velocities[k], &set)?;
        worst = worst.max(d);
        if d > TAU_SEL {
            return Err(Error::Verification(format!(
                "velocity at t = {} is {d:e} away from F(t, x)",
                x.times[k]
            )));
        }
    }
    Ok(worst)
}

#[derive(Clone, Debug, PartialEq)]
enum RadiusFn {
    Constant(f64),
    Expr(Expr),
}

/// Positive tube radius `r(t)` with a numeric floor.
#[derive(Clone, Debug, PartialEq)]
pub struct RadiusProfile {
    r: RadiusFn,
    floor: f64,
}

pub const R_MIN: f64 = 1e-4;

impl RadiusProfile {
    pub fn constant(r: f64) -> Result<Self> {
        if !(r > 0.0) || !r.is_finite() {
            return Err(Error::InvalidInput(format!("radius must be positive, got {r}")));
        }
        Ok(RadiusProfile {
            r: RadiusFn::Constant(r),
            floor: R_MIN,
        })
    }

    /// Expression in `t` only, e.g. `exp(-t)`.
    pub fn parse(text: &str) -> Result<Self> {
        let e = expr::parse_expr(text)?;
        let mut vars = Vec::new();
        e.vars(&mut vars);
        if vars.iter().any(|v| *v != Var::T) {
            return Err(Error::InvalidInput(format!("radius `{text}` may only depend on t")));
        }
        if let Expr::Const(c) = e {
            return Self::constant(c);
        }
        Ok(RadiusProfile {
            r: RadiusFn::Expr(e),
            floor: R_MIN,
        })
    }

    pub fn with_floor(mut self, floor: f64) -> Self {
        self.floor = floor;
        self
    }

    pub fn floor(&self) -> f64 {
        self.floor
    }

    pub fn eval(&self, t: f64) -> f64 {
        match &self.r {
            RadiusFn::Constant(c) => *c,
            RadiusFn::Expr(e) => e.eval(t, &[], &[]),
        }
    }

    pub fn describe(&self) -> String {
        match &self.r {
            RadiusFn::Constant(c) => format!("{c}"),
            RadiusFn::Expr(e) => e.to_string(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TubeReport {
    pub ok: bool,
    pub sup_weighted_error: f64,
    /// First exit time, interpolated inside the bracketing step.
    pub first_violation: Option<f64>,
}

/// Checks `|x(t) - z(t)| <= r(t) + TAU_TUBE + slack` at the nodes of `x` that lie in `z`'s span.
pub fn tube_check(x: &Trajectory, z: &Trajectory, r: &RadiusProfile, slack: f64) -> TubeReport {
    let tol = TAU_TUBE + slack;
    let mut sup: f64 = 0.0;
    let mut first = None;
    let mut prev: Option<(f64, f64)> = None;
    let span = z.t0() - 1e-12..=z.t_end() + 1e-12;
    for (t, s) in x.times.iter().zip(&x.states) {
        if !span.contains(t) {
            continue;
        }
        let e = s.dist(&z.state_at(*t));
        let rt = r.eval(*t);
        sup = sup.max(e / rt);
        let g = e - rt - tol;
        if first.is_none() && g > 0.0 {
            first = Some(match prev {
                Some((tp, gp)) => tp + (t - tp) * (-gp) / (g - gp),
                None => *t,
            });
        }
        prev = Some((*t, g));
    }
    TubeReport {
        ok: first.is_none(),
        sup_weighted_error: sup,
        first_violation: first,
    }
}

/// Writes `t, x1..xn, v1..vn`; the final row repeats the last velocity.
pub fn write_csv<W: Write>(x: &Trajectory, mut w: W) -> Result<()> {
    let n = x.dim();
    let mut header = vec!["t".to_string()];
    header.extend((1..=n).map(|i| format!("x{i}")));
    header.extend((1..=n).map(|i| format!("v{i}")));
    writeln!(w, "{}", header.join(","))?;
    for k in 0..x.len() {
        let v = &x.velocities[k.min(x.velocities.len() - 1)];
        let mut row = vec![format!("{}", x.times[k])];
        row.extend(x.states[k].coords().iter().map(|c| format!("{c}")));
        row.extend(v.coords().iter().map(|c| format!("{c}")));
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

pub fn read_csv<R: BufRead>(r: R) -> Result<Trajectory> {
    let mut lines = r.lines();
    let header = lines.next().ok_or_else(|| Error::InvalidInput("empty CSV".into()))??;
    let cols = header.split(',').count();
    if cols < 3 || cols % 2 == 0 {
        return Err(Error::InvalidInput(format!("bad trajectory header `{header}`")));
    }
    let n = (cols - 1) / 2;
    let (mut times, mut states, mut velocities) = (Vec::new(), Vec::new(), Vec::new());
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let vals: Vec<f64> = line
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::InvalidInput(format!("CSV row {}: {e}", i + 2)))?;
        if vals.len() != cols {
            return Err(Error::InvalidInput(format!("CSV row {} has {} fields", i + 2, vals.len())));
        }
        times.push(vals[0]);
        states.push(Point::new(vals[1..=n].to_vec())?);
        velocities.push(Point::new(vals[n + 1..].to_vec())?);
    }
    velocities.pop();
    Trajectory::from_parts(times, states, velocities, false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inclusion::{builtin, parse_system};

    fn p(v: &[f64]) -> Point {
        Point::new(v.to_vec()).unwrap()
    }

    fn sup_abs(x: &Trajectory) -> f64 {
        x.states().iter().map(|s| s.norm()).fold(0.0, f64::max)
    }

    #[test]
    fn grid_shapes() {
        let g = TimeGrid::uniform(0.0, 1.0, 0.1).unwrap();
        assert_eq!(g.nodes().len(), 11);
        assert_eq!(g.t_end(), 1.0);
        assert_eq!(g.step_len(3), 0.1);
        let g = TimeGrid::uniform(0.0, 1.0, 0.3).unwrap();
        assert_eq!(g.nodes().len(), 5);
        assert!((g.step_len(3) - 0.1).abs() < 1e-15);
        assert!(TimeGrid::explicit(vec![0.0, 0.0]).is_err());
        assert!(TimeGrid::uniform(1.0, 0.0, 0.1).is_err());
    }

    #[test]
    fn constant_slope() {
        let f = builtin("binary_switch").unwrap();
        let g = TimeGrid::uniform(0.0, 1.0, 0.1).unwrap();
        let x = integrate(&f, &SelectionPolicy::ConstantAtom(1), &p(&[0.0]), &g).unwrap();
        assert!((x.last().coords()[0] - 1.0).abs() < 1e-12);
        assert!(x.euler_defect() < 1e-15);
        assert_eq!(check_selection(&x, &f).unwrap(), 0.0);
    }

    #[test]
    fn example41_bang_bang() {
        let f = builtin("example41").unwrap();
        let g = TimeGrid::uniform(0.0, 1.0, 1e-3).unwrap();
        let x = integrate(&f, &SelectionPolicy::ConstantAtom(1), &p(&[0.0; 3]), &g).unwrap();
        let end = x.last().coords();
        assert!((end[2] - 1.0).abs() < 1e-9);
        assert!((end[1] - 1.0 / 3.0).abs() < 1e-3);
    }

    #[test]
    fn triangle_wave() {
        let f = builtin("binary_switch").unwrap();
        let g = TimeGrid::uniform(0.0, 1.0, 0.2).unwrap();
        let pol = SelectionPolicy::Chatter(ChatterTarget::Constant(p(&[0.0])));
        let x = integrate(&f, &pol, &p(&[0.0]), &g).unwrap();
        assert_eq!(sup_abs(&x), 0.1);
        assert_eq!(x.len(), 11);
        assert!((ac_norm(&x) - 1.0).abs() < 1e-12);
        assert!(check_selection(&x, &f).is_ok());
    }

    #[test]
    fn random_policy_is_seeded() {
        let f = builtin("binary_switch").unwrap();
        let g = TimeGrid::uniform(0.0, 1.0, 0.01).unwrap();
        let a = integrate(&f, &SelectionPolicy::Random { seed: 7 }, &p(&[0.0]), &g).unwrap();
        let b = integrate(&f, &SelectionPolicy::Random { seed: 7 }, &p(&[0.0]), &g).unwrap();
        let c = integrate(&f, &SelectionPolicy::Random { seed: 8 }, &p(&[0.0]), &g).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn tracking_picks_nearest() {
        let f = builtin("binary_switch").unwrap();
        let g = TimeGrid::uniform(0.0, 1.0, 0.01).unwrap();
        let z = Trajectory::constant(&g, &p(&[0.0]));
        let pol = SelectionPolicy::Tracking {
            reference: Arc::new(z),
            gain: 1.0,
        };
        let x = integrate(&f, &pol, &p(&[0.3]), &g).unwrap();
        assert!(sup_abs(&x) <= 0.3 + 1e-12);
        assert!(x.last().norm() <= 0.01 + 1e-12);
    }

    #[test]
    fn relaxed_examples() {
        let f = builtin("example41").unwrap();
        let g = TimeGrid::uniform(0.0, 5.0, 0.01).unwrap();
        let zero = |_: f64, _: &Point| Point::zeros(3);
        let z = integrate_relaxed(&f, &zero, &p(&[0.0; 3]), &g).unwrap();
        assert!(z.states().iter().all(|s| s.norm() == 0.0));
        assert!(check_selection(&z, &f).is_ok());
        assert_eq!(z.weights().unwrap()[0].atoms.len(), 2);

        let b = builtin("binary_switch").unwrap();
        let g = TimeGrid::uniform(0.0, 2.0, 0.1).unwrap();
        let half = |_: f64, _: &Point| p(&[0.5]);
        let z = integrate_relaxed(&b, &half, &p(&[0.0]), &g).unwrap();
        assert!((z.last().coords()[0] - 1.0).abs() < 1e-12);
        // out-of-hull targets are projected
        let two = |_: f64, _: &Point| p(&[2.0]);
        let z = integrate_relaxed(&b, &two, &p(&[0.0]), &g).unwrap();
        assert!((z.last().coords()[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn euler_order_on_decay() {
        let f = builtin("linear_decay").unwrap();
        let err = |h: f64| {
            let g = TimeGrid::uniform(0.0, 1.0, h).unwrap();
            let x = integrate(&f, &SelectionPolicy::ConstantAtom(0), &p(&[1.0]), &g).unwrap();
            (x.last().coords()[0] - (-1.0f64).exp()).abs()
        };
        let ratio = err(0.01) / err(0.005);
        assert!((ratio - 2.0).abs() < 0.2, "{ratio}");
    }

    #[test]
    fn divergence_guard() {
        let f = parse_system("x1' = x1^2").unwrap();
        let g = TimeGrid::uniform(0.0, 5.0, 0.01).unwrap();
        match integrate(&f, &SelectionPolicy::ConstantAtom(0), &p(&[1.0]), &g) {
            Err(Error::Divergence { time, .. }) => assert!(time > 0.9 && time < 1.2, "{time}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn ac_norm_examples() {
        let g = TimeGrid::uniform(0.0, 1.0, 0.1).unwrap();
        assert_eq!(ac_norm(&Trajectory::constant(&g, &p(&[3.0, 4.0]))), 5.0);
        let f = builtin("binary_switch").unwrap();
        let x = integrate(&f, &SelectionPolicy::ConstantAtom(1), &p(&[0.0]), &g).unwrap();
        assert!((ac_norm(&x) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn tube_examples() {
        let f = builtin("binary_switch").unwrap();
        let g = TimeGrid::uniform(0.0, 1.0, 0.2).unwrap();
        let z = Trajectory::constant(&g, &p(&[0.0]));
        let r = RadiusProfile::constant(0.1).unwrap();
        let same = tube_check(&z, &z, &r, 0.0);
        assert!(same.ok && same.sup_weighted_error == 0.0);

        let pol = SelectionPolicy::Chatter(ChatterTarget::Constant(p(&[0.0])));
        let x = integrate(&f, &pol, &p(&[0.0]), &g).unwrap();
        let rep = tube_check(&x, &z, &r, 0.0);
        assert!(rep.ok);
        assert_eq!(rep.sup_weighted_error, 1.0);

        let f = builtin("example41").unwrap();
        let g = TimeGrid::uniform(0.0, 3.0, 1e-3).unwrap();
        let x = integrate(&f, &SelectionPolicy::ConstantAtom(1), &p(&[0.0; 3]), &g).unwrap();
        let z = Trajectory::constant(&g, &p(&[0.0; 3]));
        let rep = tube_check(&x, &z, &r, 0.0);
        assert!(rep.first_violation.unwrap() <= 1.9);
    }

    #[test]
    fn radius_profiles() {
        let r = RadiusProfile::parse("exp(-t)").unwrap();
        assert_eq!(r.eval(0.0), 1.0);
        assert!(RadiusProfile::parse("x1").is_err());
        assert!(RadiusProfile::constant(0.0).is_err());
        assert_eq!(RadiusProfile::parse("0.1").unwrap(), RadiusProfile::constant(0.1).unwrap());
    }

    #[test]
    fn csv_round_trip() {
        let f = builtin("example41").unwrap();
        let g = TimeGrid::uniform(0.0, 1.0, 0.1).unwrap();
        let x = integrate(&f, &SelectionPolicy::Random { seed: 3 }, &p(&[0.1, -0.2, 0.3]), &g).unwrap();
        let mut buf = Vec::new();
        write_csv(&x, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t,x1,x2,x3,v1,v2,v3\n"));
        let y = read_csv(buf.as_slice()).unwrap();
        assert_eq!(y.times(), x.times());
        assert_eq!(y.states(), x.states());
        assert_eq!(y.velocities(), x.velocities());
    }
}
