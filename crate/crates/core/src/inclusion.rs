//! Set-valued right-hand sides `F(t, x)`.
//!
//! A [`SetMap`] is an evaluatable map from `(t, x)` to a [`PointSet`]. Maps are
//! either built from closures or compiled from the system source format (see
//! [`crate::expr`]), in which case `F(t, x) = { f(t, x, u) : u in U }` for the
//! declared control samples.
//!
//! Maps are assumed continuous in `t`; measurability is not checked.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{self, ControlSpec, CoordRhs, Expr, Var};
use crate::sampling;
use crate::setgeom::{hausdorff, scale_set, Point, PointSet};

pub type EvalFn = dyn Fn(f64, &Point) -> Result<PointSet> + Send + Sync;

/// Evaluatable set-valued map with dimension metadata.
#[derive(Clone)]
pub struct SetMap {
    dim: usize,
    autonomous: bool,
    convex: bool,
    description: String,
    eval: Arc<EvalFn>,
    system: Option<Arc<ExprSystem>>,
    reversal: Option<(f64, Arc<SetMap>)>,
}

impl fmt::Debug for SetMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SetMap")
            .field("dim", &self.dim)
            .field("autonomous", &self.autonomous)
            .field("convex", &self.convex)
            .field("description", &self.description)
            .finish()
    }
}

impl SetMap {
    pub fn from_fn<F>(dim: usize, autonomous: bool, description: impl Into<String>, f: F) -> Self
    where
        F: Fn(f64, &Point) -> Result<PointSet> + Send + Sync + 'static,
    {
        SetMap {
            dim,
            autonomous,
            convex: false,
            description: description.into(),
            eval: Arc::new(f),
            system: None,
            reversal: None,
        }
    }

    /// Constant map `F(t, x) = K`.
    pub fn constant(set: PointSet, description: impl Into<String>) -> Self {
        let dim = set.dim();
        let convex = set.is_convex();
        let mut m = SetMap::from_fn(dim, true, description, move |_, _| Ok(set.clone()));
        m.convex = convex;
        m
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_autonomous(&self) -> bool {
        self.autonomous
    }

    pub fn is_convex(&self) -> bool {
        self.convex
    }

    pub fn description(&self) -> &str {
        &self.description
    }

    /// The compiled system, when the map came from source text.
    pub fn system(&self) -> Option<&ExprSystem> {
        self.system.as_deref()
    }

    pub fn eval(&self, t: f64, x: &Point) -> Result<PointSet> {
        x.check_dim(self.dim)?;
        let set = (self.eval)(t, x)?;
        if set.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: set.dim(),
            });
        }
        Ok(set.with_convex(self.convex))
    }
}

/// `clco F`: same cloud, flagged convex.
pub fn relax(f: &SetMap) -> SetMap {
    let mut m = f.clone();
    if !m.convex {
        m.convex = true;
        m.description = format!("clco({})", f.description);
    }
    m
}

/// `t -> -F(t_end - t, x)` on `[0, t_end]`.
///
/// Reversing a map that is itself a reversal with the same `t_end` returns the
/// original map.
pub fn reverse_time(f: &SetMap, t_end: f64) -> Result<SetMap> {
    if !(t_end > 0.0) || !t_end.is_finite() {
        return Err(Error::InvalidInput(format!("reversal horizon must be positive, got {t_end}")));
    }
    if let Some((t, inner)) = &f.reversal {
        if *t == t_end {
            return Ok((**inner).clone());
        }
    }
    let inner = f.clone();
    let mut m = SetMap::from_fn(
        f.dim,
        f.autonomous,
        format!("-({})({} - t)", f.description, t_end),
        move |t, x| {
            let slack = 1e-12 * t_end.max(1.0);
            if t < -slack || t > t_end + slack {
                return Err(Error::Domain {
                    t,
                    lo: 0.0,
                    hi: t_end,
                });
            }
            Ok(scale_set(-1.0, &inner.eval(t_end - t, x)?))
        },
    );
    m.convex = f.convex;
    m.reversal = Some((t_end, Arc::new(f.clone())));
    Ok(m)
}

/// System compiled from source text: per-coordinate right-hand sides and
/// the sampled control set.
#[derive(Clone, Debug)]
pub struct ExprSystem {
    dim: usize,
    coords: Vec<CoordRhs>,
    controls: Vec<Vec<f64>>,
    outputs: Vec<Expr>,
    autonomous: bool,
    source: String,
}

fn parse_err(line: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        column,
        message: message.into(),
    }
}

fn check_vars(e: &Expr, dim: usize, cdim: Option<usize>, line: usize, col: usize) -> Result<bool> {
    let mut vars = Vec::new();
    e.vars(&mut vars);
    let mut uses_t = false;
    for v in vars {
        match v {
            Var::T => uses_t = true,
            Var::X(i) if i >= dim => {
                return Err(parse_err(line, col, format!("x{} exceeds dimension {dim}", i + 1)))
            }
            Var::U(j) => match cdim {
                None => return Err(parse_err(line, col, "control used but no `U = ...` declared")),
                Some(m) if j >= m => {
                    return Err(parse_err(
                        line,
                        col,
                        format!("u{} exceeds control dimension {m}", j + 1),
                    ))
                }
                _ => {}
            },
            _ => {}
        }
    }
    Ok(uses_t)
}

impl ExprSystem {
    pub fn parse(text: &str) -> Result<Self> {
        let src = expr::parse_source(text)?;
        let max_index = src.equations.iter().map(|(i, ..)| i + 1).max().unwrap_or(0);
        let dim = match src.dim {
            Some((d, _, _)) => d,
            None => max_index,
        };
        if dim == 0 {
            return Err(parse_err(1, 1, "no state equations"));
        }
        let mut coords: Vec<Option<CoordRhs>> = vec![None; dim];
        for (i, rhs, line, col) in &src.equations {
            if *i >= dim {
                return Err(parse_err(
                    *line,
                    *col,
                    format!("dimension mismatch: x{}' with dim = {dim}", i + 1),
                ));
            }
            if coords[*i].is_some() {
                return Err(parse_err(*line, *col, format!("x{}' defined twice", i + 1)));
            }
            coords[*i] = Some(rhs.clone());
        }
        let (dl, dc) = src.dim.map(|(_, l, c)| (l, c)).unwrap_or((1, 1));
        let coords: Vec<CoordRhs> = coords
            .into_iter()
            .enumerate()
            .map(|(i, c)| c.ok_or_else(|| parse_err(dl, dc, format!("missing equation for x{}'", i + 1))))
            .collect::<Result<_>>()?;

        let controls: Option<Vec<Vec<f64>>> = src.controls.as_ref().map(|(spec, _, _)| match spec {
            ControlSpec::Points(p) => p.clone(),
            ControlSpec::Box { ranges, samples } => {
                let axes: Vec<Vec<f64>> = ranges
                    .iter()
                    .map(|&(lo, hi)| expr::uniform_samples(lo, hi, *samples))
                    .collect();
                cartesian(&axes)
            }
        });
        let cdim = controls.as_ref().map(|c| c[0].len());

        let mut autonomous = true;
        for ((_, rhs, line, col), _) in src.equations.iter().zip(0..) {
            let exprs: Vec<&Expr> = match rhs {
                CoordRhs::Expr(e) => vec![e],
                CoordRhs::Choice(v) => v.iter().collect(),
                CoordRhs::Interval { .. } => vec![],
            };
            for e in exprs {
                autonomous &= !check_vars(e, dim, cdim, *line, *col)?;
            }
        }
        let mut outputs: Vec<Option<Expr>> = Vec::new();
        for (i, e, line, col) in &src.outputs {
            if check_vars(e, dim, None, *line, *col)? {
                return Err(parse_err(*line, *col, "outputs may not depend on t"));
            }
            if outputs.len() <= *i {
                outputs.resize(*i + 1, None);
            }
            outputs[*i] = Some(e.clone());
        }
        let outputs: Vec<Expr> = outputs
            .into_iter()
            .enumerate()
            .map(|(i, o)| o.ok_or_else(|| parse_err(1, 1, format!("missing output y{}", i + 1))))
            .collect::<Result<_>>()?;

        Ok(ExprSystem {
            dim,
            coords,
            controls: controls.unwrap_or_else(|| vec![vec![]]),
            outputs,
            autonomous,
            source: text.to_string(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn controls(&self) -> &[Vec<f64>] {
        &self.controls
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn is_autonomous(&self) -> bool {
        self.autonomous
    }

    /// Output map declared with `yi = ...` lines, if any.
    pub fn output_map(&self) -> Option<OutputMap> {
        (!self.outputs.is_empty()).then(|| OutputMap {
            dim_in: self.dim,
            exprs: self.outputs.clone(),
        })
    }

    /// All velocities `f(t, x, u)` for one control sample, in coordinate-choice order.
    pub fn velocities(&self, t: f64, x: &[f64], u: &[f64]) -> Vec<Vec<f64>> {
        let axes: Vec<Vec<f64>> = self
            .coords
            .iter()
            .map(|c| match c {
                CoordRhs::Expr(e) => vec![e.eval(t, x, u)],
                CoordRhs::Choice(v) => v.iter().map(|e| e.eval(t, x, u)).collect(),
                CoordRhs::Interval { lo, hi, samples } => expr::uniform_samples(*lo, *hi, *samples),
            })
            .collect();
        cartesian(&axes)
    }

    pub fn eval_points(&self, t: f64, x: &Point) -> Result<PointSet> {
        let mut pts = Vec::new();
        for u in &self.controls {
            for v in self.velocities(t, x.coords(), u) {
                pts.push(Point::new(v).map_err(|_| {
                    Error::InvalidInput(format!("non-finite velocity at t = {t}, x = {x:?}"))
                })?);
            }
        }
        PointSet::new(pts, false)
    }

    pub fn into_set_map(self) -> SetMap {
        let sys = Arc::new(self);
        let inner = sys.clone();
        let first_line = sys.source.lines().next().unwrap_or("").trim().to_string();
        let mut m = SetMap::from_fn(sys.dim, sys.autonomous, first_line, move |t, x| {
            inner.eval_points(t, x)
        });
        m.system = Some(sys);
        m
    }
}

fn cartesian(axes: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = vec![vec![]];
    for axis in axes {
        let mut next = Vec::with_capacity(out.len() * axis.len());
        for prefix in &out {
            for v in axis {
                let mut p = prefix.clone();
                p.push(*v);
                next.push(p);
            }
        }
        out = next;
    }
    out
}

/// Compiles system source text into a set-valued map.
pub fn parse_system(text: &str) -> Result<SetMap> {
    Ok(ExprSystem::parse(text)?.into_set_map())
}

/// Output map `h : R^n -> R^p` given by expressions in `x1..xn`.
#[derive(Clone, Debug, PartialEq)]
pub struct OutputMap {
    dim_in: usize,
    exprs: Vec<Expr>,
}

impl OutputMap {
    pub fn identity(dim: usize) -> Self {
        OutputMap {
            dim_in: dim,
            exprs: (0..dim).map(|i| Expr::Var(Var::X(i))).collect(),
        }
    }

    /// Parses one expression per output coordinate.
    pub fn parse(exprs: &[&str], dim_in: usize) -> Result<Self> {
        if exprs.is_empty() {
            return Err(Error::InvalidInput("output map needs at least one coordinate".into()));
        }
        let exprs: Vec<Expr> = exprs.iter().map(|s| expr::parse_expr(s)).collect::<Result<_>>()?;
        for e in &exprs {
            if check_vars(e, dim_in, None, 1, 1)? {
                return Err(Error::InvalidInput("output map may not depend on t".into()));
            }
        }
        Ok(OutputMap { dim_in, exprs })
    }

    pub fn dim_in(&self) -> usize {
        self.dim_in
    }

    pub fn dim_out(&self) -> usize {
        self.exprs.len()
    }

    pub fn eval(&self, x: &Point) -> Result<Point> {
        x.check_dim(self.dim_in)?;
        let v: Vec<f64> = self.exprs.iter().map(|e| e.eval(0.0, x.coords(), &[])).collect();
        Point::new(v).map_err(|_| Error::InvalidInput(format!("output not finite at {x:?}")))
    }

    pub fn describe(&self) -> Vec<String> {
        self.exprs.iter().map(|e| e.to_string()).collect()
    }
}

/// Source text of a builtin system.
///
/// - `binary_switch`: `x' in {-1, 1}`; its hull `[-1, 1]` admits `x = 0`.
/// - `linear_decay`: `x' = -x`, solution `x0 e^{-t}`.
/// - `example41`: `x1' = x2^2, x2' = x3^2, x3' in {-1, 1}`. `z = 0` solves the
///   relaxation, while every solution from the origin has `x2(1) > 0` and `x1`
///   growing at least linearly afterwards.
pub fn builtin_source(name: &str) -> Option<&'static str> {
    match name {
        "binary_switch" => Some("x1' = u; U = {-1, 1}"),
        "linear_decay" => Some("x1' = -x1"),
        "example41" => Some("x1' = x2^2; x2' = x3^2; x3' = u; U = {-1, 1}"),
        _ => None,
    }
}

pub const BUILTINS: [&str; 3] = ["binary_switch", "linear_decay", "example41"];

pub fn builtin(name: &str) -> Result<SetMap> {
    let src = builtin_source(name)
        .ok_or_else(|| Error::InvalidInput(format!("unknown builtin system `{name}`")))?;
    let mut m = parse_system(src)?;
    m.description = name.to_string();
    Ok(m)
}

/// Sampling design shared by the two hypothesis estimators.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleSpec {
    pub radius: f64,
    pub grid_density: usize,
    pub seed: u64,
    /// Sampled time window (ignored for autonomous maps).
    pub t_range: (f64, f64),
}

impl SampleSpec {
    pub fn new(radius: f64, grid_density: usize) -> Self {
        SampleSpec {
            radius,
            grid_density,
            seed: 0,
            t_range: (0.0, 1.0),
        }
    }
}

/// Sampled stand-in for the local Lipschitz constant on `B(0, R)`.
/// It is a lower bound on the true constant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LipschitzEstimate {
    pub radius: f64,
    pub k_hat: f64,
    pub sample_count: usize,
    pub max_witness: Option<(Point, Point)>,
    pub seed: u64,
}

/// Sampled bound on `sup |F(t, x)|` over `B(0, R)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundEstimate {
    pub radius: f64,
    pub alpha_hat: f64,
    pub sample_count: usize,
    pub seed: u64,
}

const LATTICE_CAP: usize = 20_000;

fn base_points(dim: usize, spec: &SampleSpec) -> Vec<Point> {
    let r = spec.radius;
    let g = spec.grid_density.max(2);
    let mut pts = vec![Point::zeros(dim)];
    for d in sampling::directions(dim, 0, 0) {
        pts.push(r * &d);
    }
    if (g as f64).powi(dim as i32) <= LATTICE_CAP as f64 {
        let axis = expr::uniform_samples(-r, r, g);
        for c in cartesian(&vec![axis; dim]) {
            let p = Point::from_vec(c);
            if p.norm() <= r * (1.0 + 1e-12) {
                pts.push(p);
            }
        }
    }
    pts.extend(sampling::ball_points(dim, r, 8 * g, spec.seed));
    pts
}

fn sample_times(f: &SetMap, spec: &SampleSpec) -> Vec<f64> {
    if f.autonomous {
        vec![spec.t_range.0]
    } else {
        expr::uniform_samples(spec.t_range.0, spec.t_range.1, spec.grid_density.max(2))
    }
}

/// Pairs `(xi, eta)` inside `B(0, R)`: each base point with a short
/// coordinate step towards the origin, plus lattice neighbours.
pub fn lipschitz_pairs(dim: usize, spec: &SampleSpec) -> Vec<(Point, Point)> {
    let r = spec.radius;
    let h = 1e-4 * r;
    let g = spec.grid_density.max(2);
    let spacing = 2.0 * r / (g - 1) as f64;
    let mut pairs = Vec::new();
    for xi in base_points(dim, spec) {
        for j in 0..dim {
            for step in [h, spacing] {
                let s = if xi.coords()[j] > 0.0 { -step } else { step };
                let mut e = xi.clone().into_vec();
                e[j] += s;
                let eta = Point::from_vec(e);
                if eta.norm() <= r * (1.0 + 1e-12) {
                    pairs.push((xi.clone(), eta));
                }
            }
        }
    }
    pairs
}

/// Largest Hausdorff ratio over explicit pairs and times.
pub fn lipschitz_over_pairs(
    f: &SetMap,
    pairs: &[(Point, Point)],
    times: &[f64],
) -> Result<(f64, Option<(Point, Point)>)> {
    let ratios: Vec<Result<f64>> = pairs
        .par_iter()
        .map(|(a, b)| {
            let d = a.dist(b);
            if d == 0.0 {
                return Ok(0.0);
            }
            let mut best: f64 = 0.0;
            for &t in times {
                best = best.max(hausdorff(&f.eval(t, a)?, &f.eval(t, b)?)? / d);
            }
            Ok(best)
        })
        .collect();
    let mut k_hat = 0.0;
    let mut witness = None;
    for (r, pair) in ratios.into_iter().zip(pairs) {
        let r = r?;
        if r > k_hat {
            k_hat = r;
            witness = Some(pair.clone());
        }
    }
    Ok((k_hat, witness))
}

pub fn estimate_lipschitz(f: &SetMap, spec: &SampleSpec) -> Result<LipschitzEstimate> {
    if !(spec.radius > 0.0) || spec.grid_density < 2 {
        return Err(Error::InvalidInput("need radius > 0 and grid_density >= 2".into()));
    }
    let pairs = lipschitz_pairs(f.dim, spec);
    let times = sample_times(f, spec);
    let (k_hat, max_witness) = lipschitz_over_pairs(f, &pairs, &times)?;
    Ok(LipschitzEstimate {
        radius: spec.radius,
        k_hat,
        sample_count: pairs.len() * times.len(),
        max_witness,
        seed: spec.seed,
    })
}

pub fn estimate_bound(f: &SetMap, spec: &SampleSpec) -> Result<BoundEstimate> {
    if !(spec.radius > 0.0) {
        return Err(Error::InvalidInput("need radius > 0".into()));
    }
    let pts = base_points(f.dim, spec);
    let times = sample_times(f, spec);
    let norms: Vec<Result<f64>> = pts
        .par_iter()
        .map(|x| {
            let mut best: f64 = 0.0;
            for &t in &times {
                best = best.max(f.eval(t, x)?.max_norm());
            }
            Ok(best)
        })
        .collect();
    let mut alpha_hat: f64 = 0.0;
    for n in norms {
        alpha_hat = alpha_hat.max(n?);
    }
    Ok(BoundEstimate {
        radius: spec.radius,
        alpha_hat,
        sample_count: pts.len() * times.len(),
        seed: spec.seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(v: &[f64]) -> Point {
        Point::new(v.to_vec()).unwrap()
    }

    fn scalars(set: &PointSet) -> Vec<f64> {
        set.points().iter().map(|q| q.coords()[0]).collect()
    }

    #[test]
    fn parse_example41() {
        let f = parse_system("x1' = x2^2; x2' = x3^2; x3' = u; U = {-1, 1}").unwrap();
        assert_eq!(f.dim(), 3);
        assert!(f.is_autonomous());
        let v = f.eval(0.0, &p(&[0.5, 2.0, 3.0])).unwrap();
        assert_eq!(v.points(), &[p(&[4.0, 9.0, -1.0]), p(&[4.0, 9.0, 1.0])]);
    }

    #[test]
    fn parse_singleton_and_sampled_interval() {
        let f = parse_system("x1' = -x1; U = {0}").unwrap();
        assert_eq!(scalars(&f.eval(0.0, &p(&[2.0])).unwrap()), vec![-2.0]);
        let g = parse_system("x1' = u; U = [-1, 1] samples 5").unwrap();
        assert_eq!(scalars(&g.eval(0.0, &p(&[0.0])).unwrap()), vec![-1.0, -0.5, 0.0, 0.5, 1.0]);
    }

    #[test]
    fn parse_errors_carry_location() {
        match parse_system("x1' = x2") {
            Err(Error::Parse { line, column, .. }) => assert_eq!((line, column), (1, 1)),
            other => panic!("{other:?}"),
        }
        match parse_system("x1' = 1\nx2' = u") {
            Err(Error::Parse { line, message, .. }) => {
                assert_eq!(line, 2);
                assert!(message.contains("U"));
            }
            other => panic!("{other:?}"),
        }
        match parse_system("dim = 1; x1' = 0; x2' = 1") {
            Err(Error::Parse { column, message, .. }) => {
                assert_eq!(column, 19);
                assert!(message.contains("dimension"));
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse_system("x1' = bogus(1)"), Err(Error::Parse { .. })));
    }

    #[test]
    fn time_dependence_is_detected() {
        assert!(!parse_system("x1' = t").unwrap().is_autonomous());
    }

    #[test]
    fn relax_example41_admits_zero_velocity() {
        let f = builtin("example41").unwrap();
        let r = relax(&f);
        let set = r.eval(0.0, &p(&[0.0, 0.0, 0.0])).unwrap();
        let d = crate::setgeom::dist_point_set(&p(&[0.0, 0.0, 0.0]), &set).unwrap();
        assert!(d < 1e-15);
        let d = crate::setgeom::dist_point_set(&p(&[0.0, 0.0, 0.0]), &f.eval(0.0, &p(&[0.0; 3])).unwrap()).unwrap();
        assert_eq!(d, 1.0);
        assert!(relax(&r).is_convex());
        assert_eq!(relax(&r).description(), r.description());
    }

    #[test]
    fn relax_singleton_unchanged() {
        let f = builtin("linear_decay").unwrap();
        let x = p(&[0.7]);
        let a = f.eval(0.0, &x).unwrap();
        let b = relax(&f).eval(0.0, &x).unwrap();
        assert_eq!(a.points(), b.points());
    }

    #[test]
    fn reverse_time_examples() {
        let f = builtin("binary_switch").unwrap();
        let r = reverse_time(&f, 1.0).unwrap();
        let set = r.eval(0.2, &p(&[0.0])).unwrap();
        assert_eq!(scalars(&set), vec![1.0, -1.0]);

        let g = parse_system("x1' = t").unwrap();
        let rg = reverse_time(&g, 1.0).unwrap();
        // direct substitution: -(1 - 0.3)
        assert_eq!(scalars(&rg.eval(0.3, &p(&[0.0])).unwrap()), vec![-(1.0 - 0.3)]);
        assert!(matches!(rg.eval(1.5, &p(&[0.0])), Err(Error::Domain { .. })));
        assert!(matches!(rg.eval(-0.1, &p(&[0.0])), Err(Error::Domain { .. })));
        assert!(reverse_time(&g, 0.0).is_err());
    }

    #[test]
    fn double_reversal_is_identity() {
        let g = parse_system("x1' = t * x1 + u; U = {-1, 2}").unwrap();
        let rr = reverse_time(&reverse_time(&g, 1.0).unwrap(), 1.0).unwrap();
        for (i, q) in sampling::ball_points(2, 1.0, 10, 3).into_iter().enumerate() {
            let t = q.coords()[0].abs();
            let x = p(&[q.coords()[1] * 5.0 + i as f64]);
            assert_eq!(rr.eval(t, &x).unwrap(), g.eval(t, &x).unwrap());
        }
    }

    #[test]
    fn lipschitz_examples() {
        let c = SetMap::constant(PointSet::from_scalars(&[3.0], false).unwrap(), "c");
        assert_eq!(estimate_lipschitz(&c, &SampleSpec::new(1.0, 5)).unwrap().k_hat, 0.0);

        let id = parse_system("x1' = x1").unwrap();
        for r in [0.5, 1.0, 7.0] {
            let k = estimate_lipschitz(&id, &SampleSpec::new(r, 5)).unwrap().k_hat;
            assert!((k - 1.0).abs() < 1e-9, "{k}");
        }

        let e = estimate_lipschitz(&builtin("example41").unwrap(), &SampleSpec::new(1.0, 5)).unwrap();
        assert!(e.k_hat >= 2.0 - 1e-3 && e.k_hat <= 2.0 + 1e-12, "{}", e.k_hat);
        let (a, b) = e.max_witness.unwrap();
        assert!(a.norm() <= 1.0 + 1e-12 && b.norm() <= 1.0 + 1e-12);
    }

    #[test]
    fn lipschitz_stable_under_refinement() {
        let f = builtin("example41").unwrap();
        let a = estimate_lipschitz(&f, &SampleSpec::new(1.0, 4)).unwrap().k_hat;
        let b = estimate_lipschitz(&f, &SampleSpec::new(1.0, 8)).unwrap().k_hat;
        assert!((a - b).abs() / b < 0.05);
    }

    #[test]
    fn lipschitz_monotone_on_nested_pairs() {
        let f = builtin("example41").unwrap();
        let small = lipschitz_pairs(3, &SampleSpec::new(0.5, 4));
        let mut big = small.clone();
        big.extend(lipschitz_pairs(3, &SampleSpec::new(1.0, 4)));
        let a = lipschitz_over_pairs(&f, &small, &[0.0]).unwrap().0;
        let b = lipschitz_over_pairs(&f, &big, &[0.0]).unwrap().0;
        assert!(b >= a);
    }

    #[test]
    fn bound_examples() {
        let f = builtin("binary_switch").unwrap();
        assert_eq!(estimate_bound(&f, &SampleSpec::new(3.0, 5)).unwrap().alpha_hat, 1.0);
        // max of sqrt(x2^4 + x3^4 + 1) over the unit ball, brute force on a fine polar grid
        let mut oracle: f64 = 0.0;
        for i in 0..=2000 {
            let th = i as f64 * std::f64::consts::PI / 1000.0;
            let (a, b) = (th.cos(), th.sin());
            oracle = oracle.max((a.powi(4) + b.powi(4) + 1.0).sqrt());
        }
        let e = estimate_bound(&builtin("example41").unwrap(), &SampleSpec::new(1.0, 5)).unwrap();
        assert!((e.alpha_hat - oracle).abs() < 1e-9, "{} vs {oracle}", e.alpha_hat);
        let d = estimate_bound(&builtin("linear_decay").unwrap(), &SampleSpec::new(2.0, 5)).unwrap();
        assert_eq!(d.alpha_hat, 2.0);
    }

    #[test]
    fn exact_replay_of_controls() {
        let sys = ExprSystem::parse("x1' = x2 * u1; x2' = u2 - x1; U = [-1, 1] x [0, 2] samples 3").unwrap();
        let m = sys.clone().into_set_map();
        let x = p(&[0.3, -1.7]);
        let set = m.eval(0.0, &x).unwrap();
        for q in set.points() {
            let hit = sys.controls().iter().any(|u| {
                sys.velocities(0.0, x.coords(), u)
                    .iter()
                    .any(|v| v.as_slice() == q.coords())
            });
            assert!(hit);
        }
        assert_eq!(sys.controls().len(), 9);
    }

    #[test]
    fn output_map_from_source() {
        let sys = ExprSystem::parse("x1' = -x1; y1 = x1^2").unwrap();
        let h = sys.output_map().unwrap();
        assert_eq!(h.eval(&p(&[3.0])).unwrap(), p(&[9.0]));
        assert!(OutputMap::parse(&["t"], 1).is_err());
    }
}
