//! Adaptive Gauss-Legendre quadrature for vector-valued complex integrands.

use alloc::{vec, vec::Vec};
use core::f64::consts::PI;

use super::C64;

const ORDER: usize = 20;
const MAX_DEPTH: u32 = 40;

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
#[error("adaptive quadrature did not reach tolerance {tol:e} on [{a}, {b}]")]
pub struct QuadratureError {
    pub a: f64,
    pub b: f64,
    pub tol: f64,
}

/// Gauss-Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut x = libm::cos(PI * (i as f64 + 0.75) / (n as f64 + 0.5));
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for j in 2..=n {
                let p2 = ((2 * j - 1) as f64 * x * p1 - (j - 1) as f64 * p0) / j as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

/// Integrates `f` over `[a, b]`, where `f(t, out)` writes `dim` values into
/// `out`. Intervals are bisected until a 20-point rule and its two-halves
/// refinement agree to within `tol` (absolute, max norm) on every component.
pub fn integrate<F>(f: F, a: f64, b: f64, dim: usize, tol: f64) -> Result<Vec<C64>, QuadratureError>
where
    F: Fn(f64, &mut [C64]),
{
    let (nodes, weights) = gauss_legendre(ORDER);
    let rule = |lo: f64, hi: f64, scratch: &mut [C64], acc: &mut [C64]| {
        let half = 0.5 * (hi - lo);
        let mid = 0.5 * (hi + lo);
        acc.iter_mut().for_each(|v| *v = C64::new(0.0, 0.0));
        for (x, w) in nodes.iter().zip(&weights) {
            f(mid + half * x, scratch);
            for (s, v) in acc.iter_mut().zip(scratch.iter()) {
                *s += v * (w * half);
            }
        }
    };
    let mut total = vec![C64::new(0.0, 0.0); dim];
    let mut scratch = vec![C64::new(0.0, 0.0); dim];
    let mut coarse = vec![C64::new(0.0, 0.0); dim];
    let mut left = vec![C64::new(0.0, 0.0); dim];
    let mut right = vec![C64::new(0.0, 0.0); dim];
    // Work stack of (lo, hi, tol, depth).
    let mut stack = vec![(a, b, tol, 0u32)];
    while let Some((lo, hi, t, depth)) = stack.pop() {
        let mid = 0.5 * (lo + hi);
        rule(lo, hi, &mut scratch, &mut coarse);
        rule(lo, mid, &mut scratch, &mut left);
        rule(mid, hi, &mut scratch, &mut right);
        let err = coarse
            .iter()
            .zip(left.iter().zip(&right))
            .map(|(c, (l, r))| (c - l - r).norm())
            .fold(0.0, f64::max);
        if err <= t || (hi - lo) <= f64::EPSILON * (1.0 + lo.abs()) {
            for (s, (l, r)) in total.iter_mut().zip(left.iter().zip(&right)) {
                *s += l + r;
            }
        } else if depth >= MAX_DEPTH {
            return Err(QuadratureError { a: lo, b: hi, tol: t });
        } else {
            stack.push((mid, hi, 0.5 * t, depth + 1));
            stack.push((lo, mid, 0.5 * t, depth + 1));
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_sum_to_two() {
        let (x, w) = gauss_legendre(20);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
        assert!(x.iter().all(|v| v.abs() < 1.0));
    }

    #[test]
    fn oscillatory_integral() {
        // int_0^1 e^{j 40 t} dt = (e^{j40} - 1) / (j 40)
        let got = integrate(|t, out| out[0] = C64::from_polar(1.0, 40.0 * t), 0.0, 1.0, 1, 1e-12).unwrap();
        let want = (C64::from_polar(1.0, 40.0) - 1.0) / C64::new(0.0, 40.0);
        assert!((got[0] - want).norm() < 1e-12);
    }
}
