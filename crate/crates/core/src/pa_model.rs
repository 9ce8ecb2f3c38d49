//! Memory-polynomial power amplifier models.
//!
//! A memory polynomial with memory `P` and order count `U` computes
//!
//! ```text
//! y_n = sum_{w = -(P-1)}^{P-1} sum_{u = 0}^{U-1} a[w, u] x_{n-w} |x_{n-w}|^{2u}
//! ```
//!
//! Samples outside the input are treated as zero. The same structure is
//! used for the predistorters in [`crate::linearizer`].

use alloc::{format, vec, vec::Vec};
use core::f64::consts::PI;

use rand::Rng;

use crate::{
    error::{Error, Result},
    math::{
        linalg::{least_squares, CMatrix, CVector},
        rng::{complex_normal, stream, Stream},
        C64,
    },
};

#[derive(Clone, Debug, PartialEq)]
pub struct MemoryPolynomial {
    memory: usize,
    order: usize,
    coeffs: Vec<C64>,
}

impl MemoryPolynomial {
    /// Coefficients are laid out tap-major: index `(w + P - 1) * U + u`.
    pub fn new(memory: usize, order: usize, coeffs: Vec<C64>) -> Result<Self> {
        if memory == 0 || order == 0 {
            return Err(Error::PaModel("memory and order must be at least 1".into()));
        }
        let expected = (2 * memory - 1) * order;
        if coeffs.len() != expected {
            return Err(Error::Length { expected, got: coeffs.len() });
        }
        Ok(MemoryPolynomial { memory, order, coeffs })
    }

    /// `y = x`.
    pub fn identity(memory: usize, order: usize) -> Self {
        let mut coeffs = vec![C64::new(0.0, 0.0); (2 * memory - 1) * order];
        coeffs[(memory - 1) * order] = C64::new(1.0, 0.0);
        MemoryPolynomial { memory, order, coeffs }
    }

    pub fn memory(&self) -> usize {
        self.memory
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn taps(&self) -> core::ops::RangeInclusive<isize> {
        let m = self.memory as isize - 1;
        -m..=m
    }

    pub fn coeffs(&self) -> &[C64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [C64] {
        &mut self.coeffs
    }

    fn index(&self, tap: isize, u: usize) -> usize {
        (tap + self.memory as isize - 1) as usize * self.order + u
    }

    pub fn coeff(&self, tap: isize, u: usize) -> C64 {
        self.coeffs[self.index(tap, u)]
    }

    pub fn set_coeff(&mut self, tap: isize, u: usize, value: C64) {
        let i = self.index(tap, u);
        self.coeffs[i] = value;
    }

    pub fn n_coeffs(&self) -> usize {
        self.coeffs.len()
    }

    /// `phi[n * U + u] = x_n |x_n|^{2u}`.
    fn powers(&self, x: &[C64]) -> Vec<C64> {
        let mut phi = Vec::with_capacity(x.len() * self.order);
        for &v in x {
            let m2 = v.norm_sqr();
            let mut p = v;
            for _ in 0..self.order {
                phi.push(p);
                p *= m2;
            }
        }
        phi
    }

    pub fn apply(&self, x: &[C64]) -> Vec<C64> {
        let phi = self.powers(x);
        let t = x.len() as isize;
        let u = self.order;
        (0..t)
            .map(|n| {
                let mut acc = C64::new(0.0, 0.0);
                for (ti, tap) in self.taps().enumerate() {
                    let src = n - tap;
                    if src < 0 || src >= t {
                        continue;
                    }
                    let row = &phi[src as usize * u..(src as usize + 1) * u];
                    let c = &self.coeffs[ti * u..(ti + 1) * u];
                    for (a, b) in c.iter().zip(row) {
                        acc += a * b;
                    }
                }
                acc
            })
            .collect()
    }

    /// Regression matrix with one row per sample in `rows` and one column per
    /// coefficient, so that `apply(x)[rows] = regressors(x, rows) * coeffs`.
    pub fn regressors(&self, x: &[C64], rows: core::ops::Range<usize>) -> CMatrix {
        let phi = self.powers(x);
        let t = x.len() as isize;
        let u = self.order;
        let mut m = CMatrix::zeros(rows.len(), self.n_coeffs());
        for (r, n) in rows.enumerate() {
            for (ti, tap) in self.taps().enumerate() {
                let src = n as isize - tap;
                if src < 0 || src >= t {
                    continue;
                }
                for k in 0..u {
                    m[(r, ti * u + k)] = phi[src as usize * u + k];
                }
            }
        }
        m
    }

    /// Least-squares fit of `y ~ f(x)`.
    pub fn fit(x: &[C64], y: &[C64], memory: usize, order: usize) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::Length { expected: x.len(), got: y.len() });
        }
        let shape = MemoryPolynomial::identity(memory, order);
        let a = shape.regressors(x, 0..x.len());
        let coeffs = least_squares(&a, &CVector::from_column_slice(y))?;
        MemoryPolynomial::new(memory, order, coeffs.iter().copied().collect())
    }

    /// Response to a constant-envelope input of amplitude `r` (all taps see
    /// the same sample), as a complex gain times `r`.
    pub fn static_response(&self, r: f64) -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        let r2 = r * r;
        for tap in self.taps() {
            let mut p = r;
            for u in 0..self.order {
                acc += self.coeff(tap, u) * p;
                p *= r2;
            }
        }
        acc
    }
}

/// One amplifier: a memory polynomial preceded by an optional drive limiter
/// that clips the input amplitude at `input_limit`.
///
/// Fitted polynomials are only meaningful over the amplitude range they
/// were fitted on; beyond their first AM/AM maximum the output grows again
/// without bound. The limiter pins inputs above that point to the saturated
/// output, which is how a real amplifier behaves.
#[derive(Clone, Debug, PartialEq)]
pub struct PaModel {
    pub poly: MemoryPolynomial,
    pub input_limit: Option<f64>,
}

const SCAN_MAX: f64 = 4.0;
const SCAN_STEPS: usize = 40_000;

// Least-squares fit of the reference amplifier (see `fit_reference`),
// tap-major, three taps by four orders.
const REFERENCE_COEFFS: [(f64, f64); 12] = [
    (2.71606500072199344e-2, 1.53490369929759479e-2),
    (-6.73690504978207306e-3, -1.05690262712474859e-3),
    (7.88901151845537501e-4, -7.08909067692129651e-4),
    (-1.51030412592929293e-5, 1.31068265605780750e-4),
    (1.04086651613333103e0, 1.38367094231567934e-2),
    (-2.15510861706450285e-1, 7.64235962139390018e-2),
    (1.18128057122893430e-2, -3.14400508741076792e-2),
    (1.60039928889589762e-3, 3.58376474838706729e-3),
    (8.83011919369229847e-2, -8.85238689184680294e-2),
    (-1.17153623575751657e-2, 2.50743546682265055e-2),
    (-1.53069783691038054e-3, -3.69717369971136718e-3),
    (4.17660201135850199e-4, 1.62135799682855977e-4),
];
const REFERENCE_LIMIT: f64 = 1.525449142972799;

impl PaModel {
    pub fn new(poly: MemoryPolynomial, input_limit: Option<f64>) -> Result<Self> {
        if poly.coeff(0, 0).norm() == 0.0 {
            return Err(Error::PaModel("the linear coefficient a[0, 0] must be non-zero".into()));
        }
        if let Some(l) = input_limit {
            if !(l > 0.0 && l.is_finite()) {
                return Err(Error::PaModel(format!("input limit must be positive, got {l}")));
            }
        }
        Ok(PaModel { poly, input_limit })
    }

    /// Ideal amplifier `y = g x`.
    pub fn linear(gain: C64) -> Self {
        let mut poly = MemoryPolynomial::identity(1, 1);
        poly.set_coeff(0, 0, gain);
        PaModel { poly, input_limit: None }
    }

    /// The shipped default: a two-tap-memory, seventh-order polynomial
    /// fitted to a Rapp (smoothness 2) amplifier with mild AM/PM and a short
    /// memory filter. Its 1 dB compression input amplitude is about 0.74.
    pub fn reference() -> Self {
        let coeffs = REFERENCE_COEFFS.iter().map(|&(re, im)| C64::new(re, im)).collect();
        PaModel {
            poly: MemoryPolynomial::new(2, 4, coeffs).expect("reference shape"),
            input_limit: Some(REFERENCE_LIMIT),
        }
    }

    /// The linear counterpart of this model, `y = a[0, 0] x`.
    pub fn linearized(&self) -> Self {
        PaModel::linear(self.small_signal_gain())
    }

    pub fn small_signal_gain(&self) -> C64 {
        self.poly.coeff(0, 0)
    }

    pub fn is_memoryless(&self) -> bool {
        self.poly.memory() == 1
    }

    pub fn apply(&self, x: &[C64]) -> Vec<C64> {
        match self.input_limit {
            None => self.poly.apply(x),
            Some(lim) => {
                let clipped: Vec<C64> =
                    x.iter().map(|&v| if v.norm() > lim { v * (lim / v.norm()) } else { v }).collect();
                self.poly.apply(&clipped)
            }
        }
    }

    /// Constant-envelope AM/AM curve including the limiter.
    pub fn static_output(&self, r: f64) -> f64 {
        let r = self.input_limit.map_or(r, |l| r.min(l));
        self.poly.static_response(r).norm()
    }

    /// Input amplitude at which the constant-envelope gain has dropped
    /// 1 dB below its small-signal value.
    pub fn compression_point(&self) -> Option<f64> {
        let g0 = self.poly.static_response(1e-9).norm() / 1e-9;
        let below = |r: f64| 20.0 * libm::log10(self.static_output(r) / (g0 * r)) < -1.0;
        let step = SCAN_MAX / SCAN_STEPS as f64;
        let mut lo = step;
        for i in 1..=SCAN_STEPS {
            let r = i as f64 * step;
            if below(r) {
                let mut hi = r;
                for _ in 0..60 {
                    let mid = 0.5 * (lo + hi);
                    if below(mid) {
                        hi = mid
                    } else {
                        lo = mid
                    }
                }
                return Some(0.5 * (lo + hi));
            }
            lo = r;
        }
        None
    }

    /// First local maximum of the raw polynomial's AM/AM curve, if any.
    pub fn saturation_amplitude(poly: &MemoryPolynomial) -> Option<f64> {
        let step = SCAN_MAX / SCAN_STEPS as f64;
        let mut prev = 0.0;
        for i in 1..=SCAN_STEPS {
            let r = i as f64 * step;
            let v = poly.static_response(r).norm();
            if v < prev {
                // Golden-section refinement on [r - 2 step, r].
                let (mut a, mut b) = (r - 2.0 * step, r);
                let f = |t: f64| -poly.static_response(t).norm();
                let g = 0.5 * (libm::sqrt(5.0) - 1.0);
                for _ in 0..80 {
                    let c = b - g * (b - a);
                    let d = a + g * (b - a);
                    if f(c) < f(d) {
                        b = d
                    } else {
                        a = c
                    }
                }
                return Some(0.5 * (a + b));
            }
            prev = v;
        }
        None
    }

    /// Bussgang gain `E[y x*] / E[|x|^2]` for circular Gaussian input of
    /// power `sigma2`, `sum_u a[0, u] (u + 1)! sigma2^u`. The limiter is
    /// ignored.
    pub fn bussgang_gain_gaussian(&self, sigma2: f64) -> Result<C64> {
        if !self.is_memoryless() {
            return Err(Error::PaModel("closed-form Bussgang gain needs a memoryless model".into()));
        }
        let mut acc = C64::new(0.0, 0.0);
        let mut fact = 1.0;
        let mut p = 1.0;
        for u in 0..self.poly.order() {
            fact *= (u + 1) as f64;
            acc += self.poly.coeff(0, u) * fact * p;
            p *= sigma2;
        }
        Ok(acc)
    }
}

/// A bank of identical amplifiers, one per antenna.
#[derive(Clone, Debug, PartialEq)]
pub struct PaBank {
    pub model: PaModel,
}

impl PaBank {
    pub fn apply(&self, rows: &[Vec<C64>]) -> Vec<Vec<C64>> {
        rows.iter().map(|r| self.model.apply(r)).collect()
    }
}

/// Reference amplifier used to derive [`PaModel::reference`]: Rapp AM/AM
/// with smoothness 2 and unit saturation, AM/PM `0.15 r^2 / (1 + r^2)`,
/// followed by a three-tap memory filter.
pub fn reference_system(x: &[C64]) -> Vec<C64> {
    let f: Vec<C64> = x
        .iter()
        .map(|&v| {
            let r = v.norm();
            let g = 1.0 / libm::pow(1.0 + libm::pow(r, 4.0), 0.25);
            let phase = 0.15 * r * r / (1.0 + r * r);
            v * C64::from_polar(g, phase)
        })
        .collect();
    let h = [(-1isize, C64::from_polar(0.03, 0.5)), (0, C64::new(1.0, 0.0)), (1, C64::from_polar(0.12, -0.8))];
    let t = x.len() as isize;
    (0..t)
        .map(|n| {
            h.iter()
                .filter(|(w, _)| (0..t).contains(&(n - w)))
                .map(|(w, c)| c * f[(n - w) as usize])
                .sum()
        })
        .collect()
}

/// Refits the reference model: circular Gaussian input with RMS amplitude
/// 0.7, `2^16` samples, memory 2, four orders. The limiter is placed at
/// the fitted polynomial's first AM/AM maximum.
pub fn fit_reference() -> Result<PaModel> {
    let mut rng = stream(0, Stream::PaFit, &[]);
    let n = 1 << 16;
    let x: Vec<C64> = (0..n).map(|_| complex_normal(&mut rng) * 0.7).collect();
    let y = reference_system(&x);
    let poly = MemoryPolynomial::fit(&x, &y, 2, 4)?;
    let limit = PaModel::saturation_amplitude(&poly)
        .ok_or_else(|| Error::PaModel("fitted polynomial has no AM/AM maximum".into()))?;
    PaModel::new(poly, Some(limit))
}

#[doc(hidden)]
pub fn random_polynomial<R: Rng + ?Sized>(memory: usize, order: usize, rng: &mut R) -> MemoryPolynomial {
    let n = (2 * memory - 1) * order;
    let coeffs = (0..n).map(|_| C64::from_polar(rng.random::<f64>(), 2.0 * PI * rng.random::<f64>())).collect();
    MemoryPolynomial::new(memory, order, coeffs).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(p: &MemoryPolynomial, x: &[C64]) -> Vec<C64> {
        let mut y = vec![C64::new(0.0, 0.0); x.len()];
        for n in 0..x.len() as isize {
            for w in p.taps() {
                for u in 0..p.order() {
                    let s = n - w;
                    if s >= 0 && (s as usize) < x.len() {
                        let v = x[s as usize];
                        y[n as usize] += p.coeff(w, u) * v * libm::pow(v.norm(), 2.0 * u as f64);
                    }
                }
            }
        }
        y
    }

    #[test]
    fn shipped_constants_match_refit() {
        let fit = fit_reference().unwrap();
        let shipped = PaModel::reference();
        for (a, b) in fit.poly.coeffs().iter().zip(shipped.poly.coeffs()) {
            assert!((a - b).norm() < 1e-9, "{a} vs {b}");
        }
        let limit = fit.input_limit.unwrap();
        // An argmax is only determined to about the square root of the
        // rounding error in the objective.
        assert!((limit - REFERENCE_LIMIT).abs() < 1e-6, "{limit}");
    }

    #[test]
    fn reference_operating_points() {
        let m = PaModel::reference();
        let p1 = m.compression_point().unwrap();
        assert!((0.7..0.8).contains(&p1));
        assert!(REFERENCE_LIMIT > 2.0 * p1 - 0.1);
        // The limiter holds the output at the saturated level.
        let sat = m.static_output(REFERENCE_LIMIT);
        assert!((m.static_output(3.0) - sat).abs() < 1e-12);
        assert!(m.static_output(0.99 * REFERENCE_LIMIT) < sat);
    }

    #[test]
    fn linear_and_cubic_examples() {
        let g = C64::new(0.5, -1.0);
        let x = [C64::new(1.0, 2.0), C64::new(-0.3, 0.1)];
        let y = PaModel::linear(g).apply(&x);
        assert_eq!(y, [x[0] * g, x[1] * g]);
        let cubic = PaModel::new(
            MemoryPolynomial::new(1, 2, vec![C64::new(1.0, 0.0), C64::new(-0.1, 0.0)]).unwrap(),
            None,
        )
        .unwrap();
        assert!((cubic.apply(&[C64::new(1.0, 0.0)])[0] - C64::new(0.9, 0.0)).norm() < 1e-15);
        assert!((cubic.bussgang_gain_gaussian(1.0).unwrap() - C64::new(0.8, 0.0)).norm() < 1e-15);
        assert!(PaModel::reference().bussgang_gain_gaussian(0.1).is_err());
    }

    #[test]
    fn matches_direct_summation() {
        let mut rng = stream(5, Stream::PaFit, &[1]);
        let p = random_polynomial(3, 3, &mut rng);
        let x: Vec<C64> = (0..50).map(|_| complex_normal(&mut rng)).collect();
        for (a, b) in p.apply(&x).iter().zip(naive(&p, &x)) {
            assert!((a - b).norm() < 1e-12 * (1.0 + b.norm()));
        }
        let reg = p.regressors(&x, 10..20);
        let via = &reg * CVector::from_column_slice(p.coeffs());
        for (i, n) in (10..20).enumerate() {
            assert!((via[i] - p.apply(&x)[n]).norm() < 1e-12);
        }
    }

    #[test]
    fn rejects_missing_linear_term() {
        let p = MemoryPolynomial::new(1, 2, vec![C64::new(0.0, 0.0), C64::new(1.0, 0.0)]).unwrap();
        assert!(PaModel::new(p, None).is_err());
    }
}
