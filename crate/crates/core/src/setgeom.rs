//! Finite-set geometry in R^n.
//!
//! Compact values of a set-valued map are stored as finite point clouds
//! ([`PointSet`]). A cloud carries a `convex` flag: when set, the set it
//! denotes is the closed convex hull of the cloud rather than the cloud.
//!
//! Hull queries (distance, projection, convex decomposition) all go through one
//! min-norm-point solver: Wolfe's active-set method on the shifted cloud
//! `p_i - v`. Its support is affinely independent, so a decomposition never
//! uses more than `n + 1` atoms. Ties are broken towards the lowest point index,
//! which makes every result a pure function of the input order.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default tolerance for every set-membership comparison.
pub const TAU_HULL: f64 = 1e-9;

const WOLFE_MAX_ITER: usize = 1000;
const WOLFE_GAP_TOL: f64 = 1e-13;
const WOLFE_POS_TOL: f64 = 1e-15;

/// A point of R^n with finite coordinates.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Point(Vec<f64>);

impl fmt::Debug for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

impl Point {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::InvalidInput("point must have dimension >= 1".into()));
        }
        if let Some(c) = coords.iter().find(|c| !c.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite coordinate {c}")));
        }
        Ok(Point(coords))
    }

    /// Builds a point without the finiteness check; internal arithmetic only.
    pub(crate) fn from_vec(coords: Vec<f64>) -> Self {
        Point(coords)
    }

    pub fn zeros(dim: usize) -> Self {
        Point(vec![0.0; dim])
    }

    pub fn scalar(x: f64) -> Self {
        Point(vec![x])
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|c| c.is_finite())
    }

    pub fn dot(&self, other: &Point) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.dot(self)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn dist(&self, other: &Point) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    /// `self + s * v`, computed coordinatewise as `x + s * v`.
    pub fn axpy(&self, s: f64, v: &Point) -> Point {
        Point(self.0.iter().zip(&v.0).map(|(x, d)| x + s * d).collect())
    }

    pub(crate) fn check_dim(&self, dim: usize) -> Result<()> {
        if self.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: self.dim(),
            });
        }
        Ok(())
    }
}

impl Add for &Point {
    type Output = Point;
    fn add(self, rhs: &Point) -> Point {
        Point(self.0.iter().zip(&rhs.0).map(|(a, b)| a + b).collect())
    }
}

impl Sub for &Point {
    type Output = Point;
    fn sub(self, rhs: &Point) -> Point {
        Point(self.0.iter().zip(&rhs.0).map(|(a, b)| a - b).collect())
    }
}

impl Mul<&Point> for f64 {
    type Output = Point;
    fn mul(self, rhs: &Point) -> Point {
        Point(rhs.0.iter().map(|x| self * x).collect())
    }
}

impl Neg for &Point {
    type Output = Point;
    fn neg(self) -> Point {
        Point(self.0.iter().map(|x| -x).collect())
    }
}

/// Nonempty finite set of points of equal dimension.
///
/// With `convex == true` the set denotes the closed convex hull of the points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointSet {
    points: Vec<Point>,
    convex: bool,
}

impl PointSet {
    /// Exact duplicates are dropped, keeping the first occurrence.
    pub fn new(points: Vec<Point>, convex: bool) -> Result<Self> {
        let first = points
            .first()
            .ok_or_else(|| Error::InvalidInput("point set must be nonempty".into()))?;
        let dim = first.dim();
        let mut unique: Vec<Point> = Vec::with_capacity(points.len());
        for p in points {
            p.check_dim(dim)?;
            if !p.is_finite() {
                return Err(Error::InvalidInput("non-finite point in set".into()));
            }
            if !unique.contains(&p) {
                unique.push(p);
            }
        }
        Ok(PointSet {
            points: unique,
            convex,
        })
    }

    /// One-dimensional set from scalars.
    pub fn from_scalars(values: &[f64], convex: bool) -> Result<Self> {
        Self::new(values.iter().map(|&v| Point::scalar(v)).collect(), convex)
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points[0].dim()
    }

    pub fn is_convex(&self) -> bool {
        self.convex
    }

    pub fn with_convex(mut self, convex: bool) -> Self {
        self.convex = convex;
        self
    }

    /// Largest Euclidean norm over the cloud (the hull has the same maximum).
    pub fn max_norm(&self) -> f64 {
        self.points.iter().map(Point::norm).fold(0.0, f64::max)
    }

    /// Index of the cloud point nearest to `v`, lowest index on ties.
    pub fn nearest_index(&self, v: &Point) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, p) in self.points.iter().enumerate() {
            let d = p.dist(v);
            if d < best_d {
                best = i;
                best_d = d;
            }
        }
        best
    }
}

/// One term of a convex combination: a cloud point (by index) and its weight.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub index: usize,
    pub point: Point,
    pub weight: f64,
}

/// Convex combination of cloud points, atoms sorted by ascending index.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvexCombination {
    pub atoms: Vec<Atom>,
}

impl ConvexCombination {
    pub fn single(index: usize, point: Point) -> Self {
        ConvexCombination {
            atoms: vec![Atom {
                index,
                point,
                weight: 1.0,
            }],
        }
    }

    pub fn recombine(&self) -> Point {
        let dim = self.atoms[0].point.dim();
        let mut acc = Point::zeros(dim);
        for a in &self.atoms {
            acc = acc.axpy(a.weight, &a.point);
        }
        acc
    }

    pub fn weight_sum(&self) -> f64 {
        self.atoms.iter().map(|a| a.weight).sum()
    }
}

/// Result of the min-norm-point solve on the shifted cloud `p_i - v`.
struct MinNorm {
    /// Nearest hull point minus `v`.
    offset: Point,
    /// (index, weight) pairs, ascending index, weights positive and summing to 1.
    support: Vec<(usize, f64)>,
}

/// Affine minimizer of `|sum a_j q_j|` subject to `sum a_j = 1` over the corral.
fn affine_min(shifted: &[Point], corral: &[usize]) -> Vec<f64> {
    let m = corral.len();
    if m == 1 {
        return vec![1.0];
    }
    let n = shifted[0].dim();
    let base = &shifted[corral[0]];
    let b = DMatrix::from_fn(n, m - 1, |r, c| {
        shifted[corral[c + 1]].coords()[r] - base.coords()[r]
    });
    let rhs = DVector::from_iterator(n, base.coords().iter().map(|x| -x));
    let beta = b
        .svd(true, true)
        .solve(&rhs, 1e-14)
        .unwrap_or_else(|_| DVector::zeros(m - 1));
    let mut alpha = Vec::with_capacity(m);
    alpha.push(1.0 - beta.iter().sum::<f64>());
    alpha.extend(beta.iter().copied());
    alpha
}

fn combine(shifted: &[Point], corral: &[usize], w: &[f64]) -> Point {
    let mut x = Point::zeros(shifted[0].dim());
    for (&i, &wi) in corral.iter().zip(w) {
        x = x.axpy(wi, &shifted[i]);
    }
    x
}

/// Wolfe's nearest-point algorithm for the hull of `cloud` relative to `v`.
fn min_norm_point(v: &Point, cloud: &PointSet) -> MinNorm {
    let shifted: Vec<Point> = cloud.points.iter().map(|p| p - v).collect();
    let scale = shifted.iter().map(Point::norm_sq).fold(0.0, f64::max).max(1e-300);

    let start = shifted
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |(bi, bn), (i, q)| {
            let n = q.norm_sq();
            if n < bn {
                (i, n)
            } else {
                (bi, bn)
            }
        })
        .0;
    let mut corral = vec![start];
    let mut w = vec![1.0];
    let mut x = shifted[start].clone();

    for _ in 0..WOLFE_MAX_ITER {
        let xx = x.norm_sq();
        if xx == 0.0 {
            break;
        }
        let (j, xq) = shifted
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |(bj, bv), (i, q)| {
                let d = x.dot(q);
                if d < bv {
                    (i, d)
                } else {
                    (bj, bv)
                }
            });
        if xx - xq <= WOLFE_GAP_TOL * scale || corral.contains(&j) {
            break;
        }
        corral.push(j);
        w.push(0.0);

        let mut dropped_new = false;
        for _ in 0..=corral.len() + 1 {
            let alpha = affine_min(&shifted, &corral);
            if alpha.iter().all(|&a| a > WOLFE_POS_TOL) {
                w = alpha;
                break;
            }
            // step from w towards alpha until the first weight hits zero
            let mut theta: f64 = 1.0;
            for (wi, ai) in w.iter().zip(&alpha) {
                if *ai <= WOLFE_POS_TOL {
                    let denom = wi - ai;
                    theta = theta.min(if denom > 0.0 { wi / denom } else { 0.0 });
                }
            }
            for (wi, ai) in w.iter_mut().zip(&alpha) {
                *wi = (1.0 - theta) * *wi + theta * ai;
            }
            let mut k = 0;
            while k < corral.len() {
                if w[k] <= WOLFE_POS_TOL && corral.len() > 1 {
                    corral.remove(k);
                    w.remove(k);
                } else {
                    k += 1;
                }
            }
            if !corral.contains(&j) {
                dropped_new = true;
                break;
            }
        }
        let total: f64 = w.iter().sum();
        for wi in w.iter_mut() {
            *wi /= total;
        }
        x = combine(&shifted, &corral, &w);
        if dropped_new {
            break;
        }
    }

    let mut support: Vec<(usize, f64)> = corral.into_iter().zip(w).collect();
    support.sort_by_key(|(i, _)| *i);
    MinNorm { offset: x, support }
}

fn check_same_dim(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::DimensionMismatch {
            expected: a,
            found: b,
        });
    }
    Ok(())
}

/// Euclidean distance from `xi` to `set` (to its hull when the set is convex).
pub fn dist_point_set(xi: &Point, set: &PointSet) -> Result<f64> {
    check_same_dim(set.dim(), xi.dim())?;
    if set.convex {
        Ok(min_norm_point(xi, set).offset.norm())
    } else {
        Ok(set
            .points
            .iter()
            .map(|p| p.dist(xi))
            .fold(f64::INFINITY, f64::min))
    }
}

fn directed(from: &PointSet, to: &PointSet) -> Result<f64> {
    // distance to a convex set is convex, so its sup over a hull sits at a vertex
    let mut worst: f64 = 0.0;
    for p in &from.points {
        worst = worst.max(dist_point_set(p, to)?);
    }
    Ok(worst)
}

/// Hausdorff distance. Both sets must carry the same `convex` flag.
pub fn hausdorff(k: &PointSet, l: &PointSet) -> Result<f64> {
    check_same_dim(k.dim(), l.dim())?;
    if k.convex != l.convex {
        return Err(Error::InvalidInput(
            "hausdorff distance between a cloud and a hull is not supported".into(),
        ));
    }
    Ok(directed(k, l)?.max(directed(l, k)?))
}

/// Membership in the closed inflated set `B(A, r)`.
pub fn in_ball(a: &PointSet, r: f64, xi: &Point) -> Result<bool> {
    if r < 0.0 || r.is_nan() {
        return Err(Error::InvalidInput(format!("negative radius {r}")));
    }
    Ok(dist_point_set(xi, a)? <= r + TAU_HULL)
}

pub fn scale_set(c: f64, k: &PointSet) -> PointSet {
    let pts: Vec<Point> = k.points.iter().map(|p| c * p).collect();
    PointSet::new(pts, k.convex).expect("scaling preserves nonemptiness")
}

/// Nearest point of the convex hull of `k` to `v`.
pub fn project_to_hull(v: &Point, k: &PointSet) -> Result<Point> {
    check_same_dim(k.dim(), v.dim())?;
    let mn = min_norm_point(v, k);
    if mn.offset.norm() <= TAU_HULL {
        return Ok(v.clone());
    }
    Ok(v + &mn.offset)
}

/// Writes `v` as a convex combination of at most `n + 1` points of `k`.
pub fn caratheodory_decompose(v: &Point, k: &PointSet) -> Result<ConvexCombination> {
    caratheodory_decompose_tol(v, k, TAU_HULL)
}

pub fn caratheodory_decompose_tol(v: &Point, k: &PointSet, tol: f64) -> Result<ConvexCombination> {
    check_same_dim(k.dim(), v.dim())?;
    let mn = min_norm_point(v, k);
    let distance = mn.offset.norm();
    if distance > tol {
        return Err(Error::NotInHull {
            projection: (v + &mn.offset).into_vec(),
            distance,
        });
    }
    let total: f64 = mn.support.iter().map(|(_, w)| w).sum();
    let atoms = mn
        .support
        .into_iter()
        .map(|(index, w)| Atom {
            index,
            point: k.points[index].clone(),
            weight: (w / total).clamp(0.0, 1.0),
        })
        .collect();
    Ok(ConvexCombination { atoms })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(v: &[f64], convex: bool) -> PointSet {
        PointSet::from_scalars(v, convex).unwrap()
    }

    fn pts2(v: &[(f64, f64)]) -> PointSet {
        PointSet::new(
            v.iter().map(|&(a, b)| Point::new(vec![a, b]).unwrap()).collect(),
            false,
        )
        .unwrap()
    }

    /// Pairwise enumeration, independent of `dist_point_set`.
    fn brute_dist(x: f64, set: &[f64]) -> f64 {
        set.iter().map(|p| (p - x).abs()).fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn dist_examples() {
        assert_eq!(dist_point_set(&Point::scalar(0.0), &s(&[0.0], false)).unwrap(), 0.0);
        let expected = brute_dist(0.0, &[3.0, 4.0]);
        assert_eq!(dist_point_set(&Point::scalar(0.0), &s(&[3.0, 4.0], false)).unwrap(), expected);
        assert_eq!(expected, 3.0);
        assert!(dist_point_set(&Point::scalar(0.0), &s(&[-1.0, 1.0], true)).unwrap() < 1e-15);
    }

    #[test]
    fn dist_dimension_mismatch() {
        let e = dist_point_set(&Point::new(vec![0.0, 0.0]).unwrap(), &s(&[1.0], false));
        assert!(matches!(e, Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn hausdorff_examples() {
        let k = s(&[0.0, 1.0], false);
        assert_eq!(hausdorff(&k, &k).unwrap(), 0.0);
        // brute force: sup_K d(., L) = 3, sup_L d(., K) = 4
        assert_eq!(hausdorff(&s(&[0.0], false), &s(&[3.0, 4.0], false)).unwrap(), 4.0);
        assert_eq!(hausdorff(&s(&[0.0, 1.0], false), &s(&[0.0, 2.0], false)).unwrap(), 1.0);
    }

    #[test]
    fn hausdorff_convex_respects_hulls() {
        // the hull of {0, 2} contains 1, so it equals the hull of {0, 1, 2}
        let a = s(&[0.0, 2.0], true);
        let b = s(&[0.0, 1.0, 2.0], true);
        assert!(hausdorff(&a, &b).unwrap() < 1e-12);
        let a = s(&[0.0, 2.0], false);
        let b = s(&[0.0, 1.0, 2.0], false);
        assert_eq!(hausdorff(&a, &b).unwrap(), 1.0);
    }

    #[test]
    fn hausdorff_rejects_mixed_flags() {
        assert!(hausdorff(&s(&[0.0], true), &s(&[0.0], false)).is_err());
    }

    #[test]
    fn in_ball_examples() {
        let a = s(&[0.0], false);
        assert!(in_ball(&a, 1.0, &Point::scalar(1.0)).unwrap());
        assert!(!in_ball(&a, 1.0, &Point::scalar(1.5)).unwrap());
        assert!((brute_dist(1.6, &[0.0, 2.0]) - 0.4).abs() < 1e-12);
        assert!(in_ball(&s(&[0.0, 2.0], false), 0.5, &Point::scalar(1.6)).unwrap());
        assert!(matches!(in_ball(&a, -1.0, &Point::scalar(0.0)), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn scale_examples() {
        let k = s(&[3.0, 4.0], true);
        assert_eq!(scale_set(1.0, &k), k);
        assert_eq!(scale_set(0.0, &k), s(&[0.0], true));
        assert_eq!(scale_set(-1.0, &s(&[-1.0, 2.0], false)), s(&[1.0, -2.0], false));
    }

    #[test]
    fn dedup_keeps_first_occurrence() {
        let k = s(&[1.0, 2.0, 1.0, 3.0], false);
        let v: Vec<f64> = k.points().iter().map(|p| p.coords()[0]).collect();
        assert_eq!(v, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn caratheodory_examples() {
        let c = caratheodory_decompose(&Point::scalar(0.0), &s(&[-1.0, 1.0], false)).unwrap();
        assert_eq!(c.atoms.len(), 2);
        assert_eq!(c.atoms[0].point, Point::scalar(-1.0));
        assert!((c.atoms[0].weight - 0.5).abs() < 1e-15);
        assert!((c.atoms[1].weight - 0.5).abs() < 1e-15);

        let k = pts2(&[(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)]);
        let vertex = caratheodory_decompose(&Point::new(vec![1.0, 0.0]).unwrap(), &k).unwrap();
        assert_eq!(vertex, ConvexCombination::single(1, Point::new(vec![1.0, 0.0]).unwrap()));

        // barycentric system: w1 = x, w2 = y, w0 = 1 - x - y
        let c = caratheodory_decompose(&Point::new(vec![0.25, 0.25]).unwrap(), &k).unwrap();
        let w: Vec<f64> = c.atoms.iter().map(|a| a.weight).collect();
        let idx: Vec<usize> = c.atoms.iter().map(|a| a.index).collect();
        assert_eq!(idx, vec![0, 1, 2]);
        for (got, want) in w.iter().zip([0.5, 0.25, 0.25]) {
            assert!((got - want).abs() < 1e-12, "{w:?}");
        }
    }

    #[test]
    fn caratheodory_outside_reports_projection() {
        match caratheodory_decompose(&Point::scalar(2.0), &s(&[-1.0, 1.0], false)) {
            Err(Error::NotInHull { projection, distance }) => {
                assert_eq!(projection, vec![1.0]);
                assert!((distance - 1.0).abs() < 1e-12);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn projection_examples() {
        let k = s(&[-1.0, 1.0], false);
        assert_eq!(project_to_hull(&Point::scalar(0.3), &k).unwrap(), Point::scalar(0.3));
        assert_eq!(project_to_hull(&Point::scalar(2.0), &k).unwrap(), Point::scalar(1.0));
        // segment parameter s minimizes (s-1)^2 + 1 on [0, 1] at s = 1
        let seg = pts2(&[(0.0, 0.0), (1.0, 0.0)]);
        let p = project_to_hull(&Point::new(vec![1.0, 1.0]).unwrap(), &seg).unwrap();
        assert!(p.dist(&Point::new(vec![1.0, 0.0]).unwrap()) < 1e-12);
    }

    #[test]
    fn projection_onto_edge_in_3d() {
        let k = PointSet::new(
            vec![
                Point::new(vec![0.0, 0.0, 0.0]).unwrap(),
                Point::new(vec![1.0, 0.0, 0.0]).unwrap(),
                Point::new(vec![0.0, 1.0, 0.0]).unwrap(),
                Point::new(vec![0.0, 0.0, 1.0]).unwrap(),
            ],
            true,
        )
        .unwrap();
        // nearest point of the simplex to (1,1,1) is the centroid of the far face
        let p = project_to_hull(&Point::new(vec![1.0, 1.0, 1.0]).unwrap(), &k).unwrap();
        for c in p.coords() {
            assert!((c - 1.0 / 3.0).abs() < 1e-12, "{p:?}");
        }
    }
}
