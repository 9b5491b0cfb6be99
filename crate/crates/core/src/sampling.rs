//! Deterministic quasi-random samples (Halton) for estimators and probe sets.
//!
//! Every sampler here is prefix-stable: asking for more samples with the same
//! seed returns a superset of the smaller request, so refinements are nested.

use crate::setgeom::Point;

const PRIMES: [u32; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

/// Van der Corput radical inverse of `i` in `base`.
pub fn radical_inverse(mut i: u64, base: u32) -> f64 {
    let b = base as f64;
    let mut inv = 1.0 / b;
    let mut r = 0.0;
    while i > 0 {
        r += (i % base as u64) as f64 * inv;
        i /= base as u64;
        inv /= b;
    }
    r
}

/// `i`-th Halton point in `[0, 1)^dim`; the seed shifts the start of the sequence.
pub fn halton(i: u64, dim: usize, seed: u64) -> Vec<f64> {
    (0..dim)
        .map(|d| radical_inverse(i + 1 + seed, PRIMES[d % PRIMES.len()]))
        .collect()
}

/// First `count` points of a quasi-random cover of the closed ball `B(0, radius)`.
///
/// Halton points of the cube `[-1, 1]^dim` are kept when they fall in the unit
/// ball, then scaled.
pub fn ball_points(dim: usize, radius: f64, count: usize, seed: u64) -> Vec<Point> {
    let mut out = Vec::with_capacity(count);
    let mut i = 0u64;
    while out.len() < count {
        let c: Vec<f64> = halton(i, dim, seed).iter().map(|v| 2.0 * v - 1.0).collect();
        i += 1;
        let n2: f64 = c.iter().map(|v| v * v).sum();
        if n2 <= 1.0 {
            out.push(Point::from_vec(c.iter().map(|v| v * radius).collect()));
        }
    }
    out
}

/// Unit directions: `±e_j` first, then `extra` quasi-random directions.
pub fn directions(dim: usize, extra: usize, seed: u64) -> Vec<Point> {
    let mut out = Vec::with_capacity(2 * dim + extra);
    for j in 0..dim {
        for s in [-1.0, 1.0] {
            let mut c = vec![0.0; dim];
            c[j] = s;
            out.push(Point::from_vec(c));
        }
    }
    if dim == 1 {
        return out;
    }
    let mut i = 0u64;
    let mut added = 0;
    while added < extra {
        let c: Vec<f64> = halton(i, dim, seed).iter().map(|v| 2.0 * v - 1.0).collect();
        i += 1;
        let n = c.iter().map(|v| v * v).sum::<f64>().sqrt();
        if (0.1..=1.0).contains(&n) {
            out.push(Point::from_vec(c.iter().map(|v| v / n).collect()));
            added += 1;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn radical_inverse_base2() {
        let v: Vec<f64> = (1..5).map(|i| radical_inverse(i, 2)).collect();
        assert_eq!(v, vec![0.5, 0.25, 0.75, 0.125]);
    }

    #[test]
    fn ball_points_are_nested_and_inside() {
        let a = ball_points(3, 2.0, 50, 7);
        let b = ball_points(3, 2.0, 100, 7);
        assert_eq!(&b[..50], &a[..]);
        assert!(b.iter().all(|p| p.norm() <= 2.0 + 1e-12));
    }

    #[test]
    fn directions_are_unit() {
        let d = directions(4, 20, 0);
        assert_eq!(d.len(), 28);
        for p in d {
            assert!((p.norm() - 1.0).abs() < 1e-12);
        }
        assert_eq!(directions(1, 20, 0).len(), 2);
    }
}
