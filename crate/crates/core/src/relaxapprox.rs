//! Approximation of relaxed trajectories by genuine ones on long horizons.
//!
//! Given a reference `z` of `x' in clco F(t, x)`, a radius profile `r` and a
//! partition `0 = T_0 < T_1 < ... < T_K`, the construction works backwards:
//!
//! 1. `r_k` is the minimum of `r` over `[T_k, T_{k+1}]`, made nonincreasing.
//! 2. Segment `k` covers `[T_{k-1}, T_k]`. Its approximator `phi_k` takes a point
//!    `eta` near `z(T_k)` and runs the inclusion backwards to `T_{k-1}`, staying
//!    within `eps_k = delta_{k-1}` of `z`. `delta_0 = r_0`; `delta_k` is the largest
//!    start radius that keeps every probe inside the tube, capped by `r_k`.
//! 3. For each truncation level `i`, `zeta_i^i = z(T_i)` is pulled back through
//!    `phi_i, ..., phi_1`. The last level's chain gives the start point `eta0`
//!    and the pieces of `gamma`, which share their junction nodes exactly.
//!
//! A backward step over one reference step aims at `z' + gain (y - z)`; the
//! target is decomposed in the hull of `F` and realized by chattering. Each
//! chattering sub-step solves `x = y - tau * f(a, x)` so that, read forwards,
//! `gamma` is an explicit Euler trajectory whose velocities are points of `F`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inclusion::{estimate_bound, estimate_lipschitz, relax, SampleSpec, SetMap};
use crate::integrate::{
    check_selection, follow_atom, tube_check, RadiusProfile, TimeGrid, Trajectory, TubeReport, TAU_TUBE,
};
use crate::sampling;
use crate::setgeom::{caratheodory_decompose, project_to_hull, Point};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum PartitionRule {
    Uniform { step: f64 },
    Geometric { first: f64, ratio: f64 },
    Explicit,
}

/// Segment times `0 = T_0 < ... < T_K`, truncated at a horizon.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    pub times: Vec<f64>,
    pub rule: PartitionRule,
}

const MAX_SEGMENTS: usize = 100_000;

impl Partition {
    pub fn uniform(step: f64, horizon: f64) -> Result<Self> {
        if !(step > 0.0) || !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::InvalidInput(format!("bad uniform partition ({step}, {horizon})")));
        }
        let n = (horizon / step - 1e-9).ceil().max(1.0) as usize;
        if n > MAX_SEGMENTS {
            return Err(Error::InvalidInput("partition has too many segments".into()));
        }
        let mut times: Vec<f64> = (0..n).map(|k| k as f64 * step).collect();
        times.push(horizon);
        Ok(Partition {
            times,
            rule: PartitionRule::Uniform { step },
        })
    }

    /// `T_{k+1} - T_k = first * ratio^k`, stopped at `horizon` or after `k_max` segments.
    pub fn geometric(first: f64, ratio: f64, horizon: f64, k_max: usize) -> Result<Self> {
        if !(first > 0.0) || !(ratio > 0.0) || !(horizon > 0.0) || k_max == 0 {
            return Err(Error::InvalidInput("bad geometric partition".into()));
        }
        let mut times = vec![0.0];
        let mut gap = first;
        while times.len() <= k_max.min(MAX_SEGMENTS) {
            let next = times.last().unwrap() + gap;
            if next >= horizon * (1.0 - 1e-12) {
                times.push(horizon);
                break;
            }
            times.push(next);
            gap *= ratio;
        }
        Ok(Partition {
            times,
            rule: PartitionRule::Geometric { first, ratio },
        })
    }

    pub fn explicit(times: Vec<f64>) -> Result<Self> {
        if times.len() < 2 || times[0] != 0.0 || times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput(
                "partition must start at 0 and increase strictly".into(),
            ));
        }
        Ok(Partition {
            times,
            rule: PartitionRule::Explicit,
        })
    }

    pub fn segments(&self) -> usize {
        self.times.len() - 1
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().unwrap()
    }
}

/// `r_k = min r` over `[T_k, T_{k+1}]` sampled at `density` subintervals, then running minimum.
pub fn segment_radii(r: &RadiusProfile, p: &Partition, density: usize) -> Result<Vec<f64>> {
    let density = density.max(1);
    let mut out = Vec::with_capacity(p.segments());
    let mut running = f64::INFINITY;
    for (k, w) in p.times.windows(2).enumerate() {
        let mut m = f64::INFINITY;
        for j in 0..=density {
            let t = if j == density {
                w[1]
            } else {
                w[0] + (w[1] - w[0]) * j as f64 / density as f64
            };
            m = m.min(r.eval(t));
        }
        running = running.min(m);
        if !(running >= r.floor()) {
            return Err(Error::RadiusFloor {
                segment: k,
                value: running,
                floor: r.floor(),
            });
        }
        out.push(running);
    }
    Ok(out)
}

/// Tuning knobs of the construction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ApproxParams {
    /// Pull-back gain towards the reference.
    pub gain: f64,
    /// Upper bound on the chattering macro-step.
    pub h_max: f64,
    /// Macro-step as a fraction of `eps / alpha_hat`.
    pub chatter_fraction: f64,
    pub tol_zeta: f64,
    /// Probe count per radius in the delta search.
    pub probes: usize,
    /// Halving levels of the delta grid.
    pub levels: usize,
    /// Bisection steps after the grid brackets the largest admissible radius.
    pub bisect_iters: usize,
    /// Samples per segment when minimizing `r`.
    pub radius_density: usize,
    /// Inflation of the reference's bounding ball for the Lipschitz and bound estimates.
    pub margin: f64,
    pub seed: u64,
}

impl Default for ApproxParams {
    fn default() -> Self {
        ApproxParams {
            gain: 1.0,
            h_max: 0.05,
            chatter_fraction: 0.05,
            tol_zeta: 1e-3,
            probes: 12,
            levels: 8,
            bisect_iters: 8,
            radius_density: 64,
            margin: 1.0,
            seed: 0,
        }
    }
}

const IMPLICIT_ITERS: usize = 60;
const REPLAY_TOL: f64 = 1e-15;

/// Reference data shared by all segment approximators of one construction.
#[derive(Clone, Debug)]
pub struct Reference {
    f: SetMap,
    z: Trajectory,
    partition: Partition,
    /// Index into `z`'s nodes of each partition time.
    node_of: Vec<usize>,
    k_hat: f64,
    alpha_hat: f64,
    params: ApproxParams,
}

impl Reference {
    /// Snaps the partition onto `z`'s nodes and estimates `k_hat`, `alpha_hat` on the
    /// ball containing `z` inflated by the margin.
    pub fn new(f: &SetMap, z: &Trajectory, partition: &Partition, params: &ApproxParams) -> Result<Self> {
        z.initial().check_dim(f.dim())?;
        if z.t0() != 0.0 {
            return Err(Error::InvalidInput("reference must start at t = 0".into()));
        }
        let mut node_of = Vec::with_capacity(partition.times.len());
        for &t in &partition.times {
            let i = z.times().partition_point(|&s| s < t);
            let pick = [i.saturating_sub(1), i.min(z.len() - 1)]
                .into_iter()
                .min_by(|&a, &b| (z.times()[a] - t).abs().total_cmp(&(z.times()[b] - t).abs()))
                .unwrap();
            if (z.times()[pick] - t).abs() > 1e-9 * t.abs().max(1.0) {
                return Err(Error::InvalidInput(format!(
                    "partition time {t} is not a node of the reference grid"
                )));
            }
            node_of.push(pick);
        }
        let radius = z.states().iter().map(|s| s.norm()).fold(0.0, f64::max) + params.margin;
        let spec = SampleSpec {
            radius,
            grid_density: 5,
            seed: params.seed,
            t_range: (z.t0(), z.t_end()),
        };
        let k_hat = estimate_lipschitz(f, &spec)?.k_hat;
        let alpha_hat = estimate_bound(f, &spec)?.alpha_hat;
        Ok(Reference {
            f: f.clone(),
            z: z.clone(),
            partition: partition.clone(),
            node_of,
            k_hat,
            alpha_hat,
            params: params.clone(),
        })
    }

    pub fn k_hat(&self) -> f64 {
        self.k_hat
    }

    pub fn alpha_hat(&self) -> f64 {
        self.alpha_hat
    }

    /// Chattering macro-step for a tube of radius `eps`.
    pub fn macro_step(&self, eps: f64) -> f64 {
        let mut h = self.params.h_max;
        if self.k_hat > 0.0 {
            h = h.min(0.1 / self.k_hat);
        }
        if self.alpha_hat > 0.0 {
            h = h.min(self.params.chatter_fraction * eps / self.alpha_hat);
        }
        h
    }

    pub fn segment(&self, k: usize, eps: f64) -> Result<SegmentApproximator<'_>> {
        if k == 0 || k > self.partition.segments() {
            return Err(Error::InvalidInput(format!(
                "segment {k} outside 1..={}",
                self.partition.segments()
            )));
        }
        if !(eps > TAU_TUBE) {
            return Err(Error::ConstructionFailure(format!(
                "tube radius {eps:e} is below the tube tolerance"
            )));
        }
        Ok(SegmentApproximator {
            reference: self,
            k,
            eps,
            h_seg: self.macro_step(eps),
        })
    }
}

/// Forward-time piece of a segment run, in node order.
#[derive(Clone, Debug)]
struct Piece {
    times: Vec<f64>,
    states: Vec<Point>,
    velocities: Vec<Point>,
    sup_error: f64,
}

/// The map `eta -> x_k(., eta)` of one segment with tube radius `eps`.
pub struct SegmentApproximator<'a> {
    reference: &'a Reference,
    k: usize,
    eps: f64,
    h_seg: f64,
}

impl SegmentApproximator<'_> {
    pub fn index(&self) -> usize {
        self.k
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn macro_step(&self) -> f64 {
        self.h_seg
    }

    fn check(&self, t: f64, x: &Point, sup: &mut f64) -> Result<()> {
        let e = x.dist(&self.reference.z.state_at(t));
        if !(e <= self.eps + TAU_TUBE) {
            return Err(Error::SegmentFailure {
                segment: self.k,
                time: t,
                error: e,
                eps: self.eps,
            });
        }
        *sup = sup.max(e);
        Ok(())
    }

    /// Solves `x = y - tau f(a, x)` where `f` follows atom `idx` of a decomposition
    /// over `n` points. Starts from `guess` and accepts as soon as the forward step
    /// replays `y` to rounding.
    fn implicit_step(
        &self,
        a: f64,
        tau: f64,
        y: &Point,
        idx: usize,
        atom: &Point,
        n: usize,
        guess: Point,
    ) -> Result<(Point, Point)> {
        let f = &self.reference.f;
        let mut x = guess;
        let mut last_gap = f64::INFINITY;
        for _ in 0..IMPLICIT_ITERS {
            let v = follow_atom(&f.eval(a, &x)?, idx, atom, n);
            // node differences carry the rounding of the node times themselves
            let tol = REPLAY_TOL * (1.0 + y.norm()) + 4.0 * f64::EPSILON * (a.abs() + tau) * v.norm();
            let gap = x.axpy(tau, &v).dist(y);
            if gap <= tol {
                return Ok((x, v));
            }
            let next = y.axpy(-tau, &v);
            if next == x || (gap >= last_gap && gap <= 1e3 * tol) {
                return Ok((x, v));
            }
            last_gap = gap;
            x = next;
        }
        let v = follow_atom(&f.eval(a, &x)?, idx, atom, n);
        if x.axpy(tau, &v).dist(y) <= 1e-10 * (1.0 + y.norm()) {
            return Ok((x, v));
        }
        Err(Error::ConstructionFailure(format!(
            "implicit step at t = {a} did not converge (step {tau:e})"
        )))
    }

    fn run(&self, eta: &Point) -> Result<Piece> {
        let r = self.reference;
        let z = &r.z;
        let (ia, ib) = (r.node_of[self.k - 1], r.node_of[self.k]);
        let zt = z.times();
        let zs = z.states();
        let mut times = vec![zt[ib]];
        let mut states = vec![eta.clone()];
        let mut velocities = Vec::new();
        let mut sup: f64 = 0.0;
        self.check(zt[ib], eta, &mut sup)?;
        let mut y = eta.clone();
        for j in (ia..ib).rev() {
            let (t0, t1) = (zt[j], zt[j + 1]);
            let offset = &y - &zs[j + 1];
            let pred = &zs[j] + &offset;
            let set = r.f.eval(t0, &pred)?;
            let hull = set.clone().with_convex(true);
            let target = z.velocities()[j].axpy(r.params.gain, &offset);
            let w = project_to_hull(&target, &hull)?;
            let combo = caratheodory_decompose(&w, &hull)?;
            let n = set.len();
            if combo.atoms.len() == 1 {
                let atom = &combo.atoms[0];
                let (x, v) = self.implicit_step(t0, t1 - t0, &y, atom.index, &atom.point, n, pred)?;
                self.check(t0, &x, &mut sup)?;
                times.push(t0);
                states.push(x.clone());
                velocities.push(v);
                y = x;
                continue;
            }
            let h_z = t1 - t0;
            let m = ((h_z / self.h_seg) - 1e-9).ceil().max(1.0) as usize;
            let tau_m = h_z / m as f64;
            for i in (0..m).rev() {
                let c = if i == 0 { t0 } else { t0 + i as f64 * tau_m };
                let mut s = *times.last().unwrap();
                for (pos, atom) in combo.atoms.iter().enumerate().rev() {
                    let s_new = if pos == 0 { c } else { s - atom.weight * tau_m };
                    let tau = atom.weight * tau_m;
                    if !(s_new < s) || tau <= 0.0 {
                        continue;
                    }
                    let guess = y.axpy(-tau, &atom.point);
                    let (x, v) = self.implicit_step(s_new, tau, &y, atom.index, &atom.point, n, guess)?;
                    self.check(s_new, &x, &mut sup)?;
                    times.push(s_new);
                    states.push(x.clone());
                    velocities.push(v);
                    y = x;
                    s = s_new;
                }
            }
        }
        times.reverse();
        states.reverse();
        velocities.reverse();
        Ok(Piece {
            times,
            states,
            velocities,
            sup_error: sup,
        })
    }

    /// Forward-time trajectory on `[T_{k-1}, T_k]` ending at `eta`. Read backwards it
    /// solves the time-reversed inclusion from `eta`.
    pub fn apply(&self, eta: &Point) -> Result<Trajectory> {
        let p = self.run(eta)?;
        Trajectory::from_parts(p.times, p.states, p.velocities, false)
    }

    /// Landing point `phi_k(eta)` near `z(T_{k-1})`.
    pub fn phi(&self, eta: &Point) -> Result<Point> {
        Ok(self.run(eta)?.states.swap_remove(0))
    }

    fn probe_set(&self, delta: f64) -> Vec<Point> {
        let r = self.reference;
        let center = &r.z.states()[r.node_of[self.k]];
        let dim = center.dim();
        let n_sphere = (r.params.probes / 2).max(2 * dim);
        let extra = n_sphere.saturating_sub(2 * dim);
        let n_ball = r.params.probes.saturating_sub(n_sphere).max(1);
        let mut out = vec![center.clone()];
        for d in sampling::directions(dim, extra, r.params.seed) {
            out.push(center.axpy(delta, &d));
        }
        for b in sampling::ball_points(dim, 1.0, n_ball, r.params.seed) {
            out.push(center.axpy(delta, &b));
        }
        out
    }

    fn admits(&self, delta: f64) -> Result<bool> {
        let results: Vec<Result<Piece>> = self.probe_set(delta).par_iter().map(|eta| self.run(eta)).collect();
        for res in results {
            match res {
                Ok(_) => {}
                Err(Error::SegmentFailure { .. }) => return Ok(false),
                Err(e) => return Err(e),
            }
        }
        Ok(true)
    }

    /// Largest start radius around `z(T_k)` whose probes all stay in the tube,
    /// searched on `start * 2^-j` and refined by bisection; `start = min(eps, cap)`.
    pub fn find_delta(&self, cap: f64) -> Result<f64> {
        let levels = self.reference.params.levels.max(8);
        let start = self.eps.min(cap);
        let mut above = None;
        let mut found = None;
        for j in 0..levels {
            let d = start * 0.5f64.powi(j as i32);
            if self.admits(d)? {
                found = Some(d);
                break;
            }
            above = Some(d);
        }
        let mut lo = found.ok_or_else(|| {
            Error::ConstructionFailure(format!(
                "segment {}: no admissible radius down to {:e}",
                self.k,
                start * 0.5f64.powi(levels as i32 - 1)
            ))
        })?;
        if let Some(mut hi) = above {
            for _ in 0..self.reference.params.bisect_iters {
                let mid = 0.5 * (lo + hi);
                if self.admits(mid)? {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
        }
        Ok(lo)
    }
}

/// One segment run with default parameters: see [`SegmentApproximator::apply`].
pub fn approximate_segment(
    f: &SetMap,
    z: &Trajectory,
    partition: &Partition,
    k: usize,
    eps: f64,
    eta: &Point,
    params: &ApproxParams,
) -> Result<Trajectory> {
    Reference::new(f, z, partition, params)?.segment(k, eps)?.apply(eta)
}

/// Delta search for one segment, uncapped.
pub fn find_delta(
    f: &SetMap,
    z: &Trajectory,
    partition: &Partition,
    k: usize,
    eps: f64,
    params: &ApproxParams,
) -> Result<f64> {
    Reference::new(f, z, partition, params)?.segment(k, eps)?.find_delta(f64::INFINITY)
}

/// Pulled-back points per truncation level and their residuals.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ZetaTable {
    /// Truncation level of each row.
    pub levels: Vec<usize>,
    /// `rows[r][k] = zeta_{levels[r]}^k` for `k = 0..=levels[r]`.
    pub rows: Vec<Vec<Point>>,
    /// `residuals[r][k] = |zeta_{levels[r+1]}^k - zeta_{levels[r]}^k|`.
    pub residuals: Vec<Vec<f64>>,
}

impl ZetaTable {
    pub fn max_residuals(&self) -> Vec<f64> {
        self.residuals.iter().map(|r| r.iter().cloned().fold(0.0, f64::max)).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApproxReport {
    pub partition: Vec<f64>,
    pub r_k: Vec<f64>,
    pub delta_k: Vec<f64>,
    pub zeta_levels: Vec<usize>,
    pub zeta_residuals: Vec<Vec<f64>>,
    pub eta0: Point,
    pub sup_weighted_error: f64,
    pub covered_horizon: f64,
    /// Largest `|gamma - z|` on each segment.
    pub segment_sup_errors: Vec<f64>,
    pub macro_steps: Vec<f64>,
    pub k_hat: f64,
    pub alpha_hat: f64,
    pub tube: TubeReport,
}

fn residual_row(next: &[Point], prev: &[Point]) -> Vec<f64> {
    prev.iter().zip(next).map(|(a, b)| a.dist(b)).collect()
}

/// Full backward-stitched construction on the partition's horizon.
pub fn stitch_infinite(
    f: &SetMap,
    z: &Trajectory,
    r: &RadiusProfile,
    partition: &Partition,
    params: &ApproxParams,
) -> Result<(Trajectory, ApproxReport)> {
    check_selection(z, &relax(f)).map_err(|e| Error::InvalidInput(format!("reference is not relaxed: {e}")))?;
    let r_k = segment_radii(r, partition, params.radius_density)?;
    let reference = Reference::new(f, z, partition, params)?;
    let kk = partition.segments();

    let mut delta = vec![r_k[0]];
    let mut segs = Vec::with_capacity(kk);
    for k in 1..=kk {
        let seg = reference.segment(k, delta[k - 1])?;
        let cap = r_k[k.min(kk - 1)];
        delta.push(seg.find_delta(cap)?);
        segs.push(seg);
    }
    let node = |k: usize| z.states()[reference.node_of[k]].clone();

    // chain of level i: zeta_i^i = z(T_i) pulled back to T_0; pieces kept for the last level
    let chain = |i: usize, keep: bool| -> Result<(Vec<Point>, Vec<Piece>)> {
        let mut pts = vec![node(i)];
        let mut pieces = Vec::new();
        for k in (1..=i).rev() {
            let piece = segs[k - 1].run(pts.last().unwrap())?;
            pts.push(piece.states[0].clone());
            if keep {
                pieces.push(piece);
            }
        }
        pts.reverse();
        pieces.reverse();
        Ok((pts, pieces))
    };

    let mut table = ZetaTable::default();
    let mut maxima: Vec<f64> = Vec::new();
    let pieces;
    let mut i = 1;
    loop {
        let last = i == kk;
        let (row, p) = chain(i, last)?;
        if let Some(prev) = table.rows.last() {
            let res = residual_row(&row, prev);
            let m = res.iter().cloned().fold(0.0, f64::max);
            table.residuals.push(res);
            maxima.push(m);
            let n = maxima.len();
            if m > params.tol_zeta && n >= 3 && maxima[n - 3] <= maxima[n - 2] && maxima[n - 2] <= m {
                return Err(Error::NonConvergence {
                    level: i,
                    residuals: maxima,
                });
            }
        }
        table.levels.push(i);
        table.rows.push(row);
        if last {
            pieces = p;
            break;
        }
        let converged = maxima.last().is_some_and(|&m| m < params.tol_zeta);
        i = if converged { kk } else { i + 1 };
    }

    let mut times = Vec::new();
    let mut states = Vec::new();
    let mut velocities = Vec::new();
    let mut segment_sup_errors = Vec::with_capacity(kk);
    for (k, piece) in pieces.into_iter().enumerate() {
        let skip = usize::from(k > 0);
        times.extend_from_slice(&piece.times[skip..]);
        states.extend_from_slice(&piece.states[skip..]);
        velocities.extend(piece.velocities);
        segment_sup_errors.push(piece.sup_error);
    }
    let gamma = Trajectory::from_parts(times, states, velocities, false)?;
    let tube = tube_check(&gamma, z, r, 0.0);
    if !tube.ok {
        return Err(Error::TubeViolation {
            time: tube.first_violation.unwrap_or(f64::NAN),
            weighted_error: tube.sup_weighted_error,
        });
    }
    let report = ApproxReport {
        partition: partition.times.clone(),
        r_k,
        delta_k: delta,
        zeta_levels: table.levels.clone(),
        zeta_residuals: table.residuals.clone(),
        eta0: gamma.initial().clone(),
        sup_weighted_error: tube.sup_weighted_error,
        covered_horizon: partition.horizon(),
        segment_sup_errors,
        macro_steps: segs.iter().map(|s| s.macro_step()).collect(),
        k_hat: reference.k_hat,
        alpha_hat: reference.alpha_hat,
        tube,
    };
    Ok((gamma, report))
}

/// Reference `z = constant` on a uniform grid, the usual relaxed trajectory
/// when `0` lies in the hull of `F`.
pub fn constant_reference(xi: &Point, horizon: f64, h: f64) -> Result<Trajectory> {
    Ok(Trajectory::constant(&TimeGrid::uniform(0.0, horizon, h)?, xi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inclusion::builtin;
    use crate::integrate::{integrate, SelectionPolicy};

    fn p(v: &[f64]) -> Point {
        Point::new(v.to_vec()).unwrap()
    }

    #[test]
    fn partitions() {
        let u = Partition::uniform(1.0, 3.5).unwrap();
        assert_eq!(u.times, vec![0.0, 1.0, 2.0, 3.0, 3.5]);
        let g = Partition::geometric(1.0, 2.0, 10.0, 100).unwrap();
        assert_eq!(g.times, vec![0.0, 1.0, 3.0, 7.0, 10.0]);
        let g = Partition::geometric(1.0, 0.5, 10.0, 4).unwrap();
        assert_eq!(g.times, vec![0.0, 1.0, 1.5, 1.75, 1.875]);
        assert!(Partition::explicit(vec![0.0, 2.0, 1.0]).is_err());
    }

    #[test]
    fn radii_examples() {
        let p5 = Partition::uniform(1.0, 5.0).unwrap();
        let c = segment_radii(&RadiusProfile::constant(0.1).unwrap(), &p5, 16).unwrap();
        assert_eq!(c, vec![0.1; 5]);
        let e = segment_radii(&RadiusProfile::parse("exp(-t)").unwrap(), &p5, 16).unwrap();
        for (k, v) in e.iter().enumerate() {
            assert!((v - (-(k as f64 + 1.0)).exp()).abs() < 1e-15);
        }
        let pi = std::f64::consts::PI;
        let pp = Partition::explicit(vec![0.0, pi, 2.0 * pi, 3.0 * pi]).unwrap();
        match segment_radii(&RadiusProfile::parse("1 + sin(t)").unwrap(), &pp, 16) {
            Err(Error::RadiusFloor { segment, .. }) => assert_eq!(segment, 1),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn genuine_reference_replays_exactly() {
        let f = builtin("binary_switch").unwrap();
        let g = TimeGrid::uniform(0.0, 2.0, 0.01).unwrap();
        let z = integrate(&f, &SelectionPolicy::Random { seed: 5 }, &p(&[0.0]), &g).unwrap();
        let part = Partition::uniform(1.0, 2.0).unwrap();
        let x = approximate_segment(&f, &z, &part, 2, 0.1, z.last(), &ApproxParams::default()).unwrap();
        assert_eq!(x.states(), &z.states()[100..]);
        assert_eq!(x.times(), &z.times()[100..]);
    }

    #[test]
    fn switch_segment_chatters_inside_tube() {
        let f = builtin("binary_switch").unwrap();
        let z = constant_reference(&p(&[0.0]), 1.0, 0.1).unwrap();
        let part = Partition::uniform(1.0, 1.0).unwrap();
        let params = ApproxParams::default();
        let x = approximate_segment(&f, &z, &part, 1, 0.1, &p(&[0.0]), &params).unwrap();
        let sup = x.states().iter().map(|s| s.norm()).fold(0.0, f64::max);
        assert!(sup <= 0.1 && sup > 0.0);
        assert!(x.initial().norm() <= 0.1);
        assert!(check_selection(&x, &f).unwrap() == 0.0);
        assert!(x.euler_defect() < 1e-15);
        // period of the triangle teeth is the macro-step
        let switches = x.velocities().windows(2).filter(|w| w[0] != w[1]).count();
        assert!(switches >= 10);
    }

    #[test]
    fn delta_examples() {
        let params = ApproxParams::default();
        let f = builtin("binary_switch").unwrap();
        let z = constant_reference(&p(&[0.0]), 1.0, 0.1).unwrap();
        let part = Partition::uniform(1.0, 1.0).unwrap();
        let d = find_delta(&f, &z, &part, 1, 0.1, &params).unwrap();
        assert!((0.05..=0.1).contains(&d), "{d}");

        let f = builtin("linear_decay").unwrap();
        let g = TimeGrid::uniform(0.0, 1.0, 0.01).unwrap();
        let z = integrate(&f, &SelectionPolicy::ConstantAtom(0), &p(&[1.0]), &g).unwrap();
        let d = find_delta(&f, &z, &part, 1, 0.1, &params).unwrap();
        // backward flow expands offsets by e per unit time
        let floor = 0.1 / std::f64::consts::E;
        assert!(d >= 0.95 * floor && d <= 0.1, "{d}");

        assert!(matches!(
            find_delta(&f, &z, &part, 1, 1e-12, &params),
            Err(Error::ConstructionFailure(_))
        ));
    }

    #[test]
    fn stitch_switch_short_horizon() {
        let f = builtin("binary_switch").unwrap();
        let z = constant_reference(&p(&[0.0]), 3.0, 0.1).unwrap();
        let r = RadiusProfile::constant(0.1).unwrap();
        let part = Partition::uniform(1.0, 3.0).unwrap();
        let (gamma, rep) = stitch_infinite(&f, &z, &r, &part, &ApproxParams::default()).unwrap();
        assert!(rep.tube.ok);
        assert!(rep.sup_weighted_error <= 1.0);
        assert!(rep.eta0.norm() <= 0.1);
        assert!(rep.zeta_residuals.iter().flatten().all(|&x| x == 0.0));
        assert_eq!(gamma.t_end(), 3.0);
        assert!(check_selection(&gamma, &f).unwrap() == 0.0);
        for w in rep.delta_k.windows(2) {
            assert!(w[1] <= w[0]);
        }
    }

    #[test]
    fn stitch_example41_offsets_start() {
        let f = builtin("example41").unwrap();
        let z = constant_reference(&p(&[0.0; 3]), 4.0, 0.05).unwrap();
        let r = RadiusProfile::constant(0.1).unwrap();
        let part = Partition::uniform(1.0, 4.0).unwrap();
        let (gamma, rep) = stitch_infinite(&f, &z, &r, &part, &ApproxParams::default()).unwrap();
        assert!(rep.tube.ok);
        assert!(gamma.states().iter().all(|s| s.norm() <= 0.1 + 1e-9));
        assert!(rep.eta0.norm() > 0.0 && rep.eta0.norm() <= 0.1);
        // x2 only grows forwards, so the start must sit below the origin
        assert!(rep.eta0.coords()[1] < 0.0);
    }
}
