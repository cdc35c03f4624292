//! Deterministic point sets over boxes: corners, Halton sequences, grids.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const PRIMES: [u32; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

pub type BoxBounds = [(f64, f64)];

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

/// `i`-th Halton point (1-based internally, so the origin is skipped).
pub fn halton(i: usize, bounds: &BoxBounds) -> Vec<f64> {
    bounds
        .iter()
        .enumerate()
        .map(|(d, (lo, hi))| lo + (hi - lo) * radical_inverse(i as u64 + 1, PRIMES[d % PRIMES.len()] as u64))
        .collect()
}

/// Box corners, capped at 2^10 of them.
pub fn corners(bounds: &BoxBounds) -> Vec<Vec<f64>> {
    let n = bounds.len().min(10);
    (0..1usize << n)
        .map(|mask| {
            bounds
                .iter()
                .enumerate()
                .map(|(d, (lo, hi))| {
                    if d >= n {
                        0.5 * (lo + hi)
                    } else if mask >> (n - 1 - d) & 1 == 1 {
                        *hi
                    } else {
                        *lo
                    }
                })
                .collect()
        })
        .collect()
}

pub fn center(bounds: &BoxBounds) -> Vec<f64> {
    bounds.iter().map(|(lo, hi)| 0.5 * (lo + hi)).collect()
}

/// Corners, then center, then Halton points, `n` in total.
pub fn probe_points(bounds: &BoxBounds, n: usize) -> Vec<Vec<f64>> {
    let mut pts = corners(bounds);
    pts.push(center(bounds));
    let mut i = 0;
    while pts.len() < n {
        pts.push(halton(i, bounds));
        i += 1;
    }
    pts.truncate(n.max(1));
    pts
}

/// Values `lo, lo+step, ...` up to `hi` inclusive (within a small slack).
pub fn axis(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    if hi < lo {
        return Vec::new();
    }
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    (0..=n).map(|i| lo + i as f64 * step).collect()
}

/// Values `anchor + i*step` that fall inside `[lo, hi]`.
pub fn anchored_axis(anchor: f64, lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let imin = ((lo - anchor) / step - 1e-9).ceil() as i64;
    let imax = ((hi - anchor) / step + 1e-9).floor() as i64;
    (imin..=imax).map(|i| anchor + i as f64 * step).collect()
}

/// Visit every point of the cartesian product of `axes`, last axis fastest.
pub fn for_each_product(axes: &[Vec<f64>], mut f: impl FnMut(&[f64])) {
    if axes.iter().any(Vec::is_empty) {
        return;
    }
    let mut idx = vec![0usize; axes.len()];
    let mut pt: Vec<f64> = axes.iter().map(|a| a[0]).collect();
    loop {
        f(&pt);
        let mut d = axes.len();
        loop {
            if d == 0 {
                return;
            }
            d -= 1;
            idx[d] += 1;
            if idx[d] < axes[d].len() {
                pt[d] = axes[d][idx[d]];
                break;
            }
            idx[d] = 0;
            pt[d] = axes[d][0];
        }
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform_in(r: &mut ChaCha8Rng, bounds: &BoxBounds) -> Vec<f64> {
    bounds.iter().map(|(lo, hi)| if hi > lo { r.gen_range(*lo..*hi) } else { *lo }).collect()
}

/// Uniform point in the Euclidean ball of `radius` around `c`.
pub fn uniform_in_ball(r: &mut ChaCha8Rng, c: &[f64], radius: f64) -> Vec<f64> {
    let n = c.len();
    loop {
        let d: Vec<f64> = (0..n).map(|_| r.gen_range(-1.0..1.0)).collect();
        let nn: f64 = d.iter().map(|v| v * v).sum::<f64>().sqrt();
        if nn <= 1.0 {
            return c.iter().zip(&d).map(|(ci, di)| ci + radius * di).collect();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axes() {
        assert_eq!(axis(0.0, 1.0, 0.25).len(), 5);
        assert_eq!(axis(-2.0, 2.0, 0.05).len(), 81);
        let a = anchored_axis(1.0 / 3.0, 0.2, 0.5, 0.1);
        assert_eq!(a.len(), 3);
        assert!((a[0] - (1.0 / 3.0 - 0.1)).abs() < 1e-15);
    }

    #[test]
    fn products_visit_all() {
        let mut n = 0;
        for_each_product(&[vec![0.0, 1.0], vec![0.0, 1.0, 2.0]], |_| n += 1);
        assert_eq!(n, 6);
        let mut n = 0;
        for_each_product(&[], |p| {
            assert!(p.is_empty());
            n += 1
        });
        assert_eq!(n, 1);
    }

    #[test]
    fn probes_start_at_corners() {
        let p = probe_points(&[(-1.0, 1.0), (-1.0, 1.0)], 8);
        assert_eq!(p[0], vec![-1.0, -1.0]);
        assert_eq!(p[4], vec![0.0, 0.0]);
        assert_eq!(p.len(), 8);
    }
}
