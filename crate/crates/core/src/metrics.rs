//! Performance measures: spatial power spectra and radiation patterns,
//! the mismatched-decoding GMI, SINR terms, analytical BER and error
//! counting.
//!
//! Frequencies are reported in cycles per sample on the oversampled grid,
//! `f in [-1/2, 1/2)`. The occupied band is `|f| <= 1 / (2 mu)`, which is
//! the active subcarrier range.

use alloc::{vec, vec::Vec};

use rand::Rng;

use crate::{
    beamformer::DigitalPrecoder,
    bussgang::BussgangModel,
    channel::{steering_vector, FrequencyResponse},
    error::{Error, Result},
    math::{
        fft::Fft,
        linalg::CVector,
        lin_to_db, q_function,
        rng::complex_normal,
        C64,
    },
    scenario::GroupSlot,
    waveform::Qam,
};

/// Uniform angle grid `-span..=span` in steps of `step` (degrees).
pub fn angle_grid(span: f64, step: f64) -> Vec<f64> {
    let n = libm::round(2.0 * span / step) as usize;
    (0..=n).map(|i| -span + i as f64 * step).collect()
}

/// Frame-aligned averaged periodogram of the far-field signal
/// `r_n = a(theta)^H y_n` for a set of angles (degrees).
///
/// Each frame body is one segment with a rectangular window and no overlap.
#[derive(Clone, Debug)]
pub struct SpectrumAccumulator {
    angles: Vec<f64>,
    steering: Vec<CVector>,
    fft: Fft,
    power: Vec<Vec<f64>>,
    frames: usize,
}

impl SpectrumAccumulator {
    pub fn new(angles: &[f64], n_antennas: usize, fft_size: usize) -> Self {
        SpectrumAccumulator {
            angles: angles.to_vec(),
            steering: angles.iter().map(|&a| steering_vector(a.to_radians(), n_antennas)).collect(),
            fft: Fft::new(fft_size),
            power: vec![vec![0.0; fft_size]; angles.len()],
            frames: 0,
        }
    }

    /// Adds one frame: `y[m]` is the body radiated by antenna `m`.
    pub fn observe(&mut self, y: &[Vec<C64>]) -> Result<()> {
        let n = self.fft.len();
        let n_t = self.steering.first().map_or(0, |s| s.len());
        if y.len() != n_t {
            return Err(Error::Length { expected: n_t, got: y.len() });
        }
        if let Some(bad) = y.iter().find(|r| r.len() != n) {
            return Err(Error::Length { expected: n, got: bad.len() });
        }
        // Projection commutes with the DFT, so transform each antenna once.
        let spectra: Vec<Vec<C64>> = y
            .iter()
            .map(|row| {
                let mut buf = row.clone();
                self.fft.forward(&mut buf);
                buf
            })
            .collect();
        let scale = 1.0 / n as f64;
        for (a, acc) in self.steering.iter().zip(&mut self.power) {
            for (k, p) in acc.iter_mut().enumerate() {
                let mut v = C64::new(0.0, 0.0);
                for (m, s) in spectra.iter().enumerate() {
                    v += a[m].conj() * s[k];
                }
                *p += v.norm_sqr() * scale;
            }
        }
        self.frames += 1;
        Ok(())
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    /// Adds the frames of `other`, which must cover the same angles and
    /// transform size.
    pub fn merge(&mut self, other: &SpectrumAccumulator) -> Result<()> {
        if other.angles != self.angles || other.fft.len() != self.fft.len() {
            return Err(Error::Length { expected: self.angles.len(), got: other.angles.len() });
        }
        for (a, b) in self.power.iter_mut().zip(&other.power) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
        self.frames += other.frames;
        Ok(())
    }

    pub fn finish(&self) -> Result<Spectra> {
        if self.frames == 0 {
            return Err(Error::InsufficientFrames { needed: 1, got: 0 });
        }
        let inv = 1.0 / self.frames as f64;
        Ok(Spectra {
            angles: self.angles.clone(),
            power: self.power.iter().map(|row| row.iter().map(|p| p * inv).collect()).collect(),
        })
    }
}

/// Mean per-bin power at each angle, natural FFT order.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectra {
    pub angles: Vec<f64>,
    pub power: Vec<Vec<f64>>,
}

/// Integrated powers of one angle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BandPowers {
    pub in_band: f64,
    pub lower: f64,
    pub upper: f64,
    pub total: f64,
}

impl BandPowers {
    pub fn out_of_band(&self) -> f64 {
        self.lower.max(self.upper)
    }
}

/// Radiation patterns in dB relative to the in-band peak.
#[derive(Clone, Debug, PartialEq)]
pub struct RadiationReport {
    pub angles: Vec<f64>,
    pub in_band_db: Vec<f64>,
    pub out_of_band_db: Vec<f64>,
}

/// A PSD curve, lowest frequency first.
#[derive(Clone, Debug, PartialEq)]
pub struct PsdCurve {
    pub angle: f64,
    pub freq: Vec<f64>,
    pub db: Vec<f64>,
}

impl Spectra {
    /// The spectra of a contiguous range of angles.
    pub fn select(&self, range: core::ops::Range<usize>) -> Spectra {
        Spectra { angles: self.angles[range.clone()].to_vec(), power: self.power[range].to_vec() }
    }

    pub fn fft_size(&self) -> usize {
        self.power.first().map_or(0, Vec::len)
    }

    /// Band powers for a signal occupying `n_active` subcarriers: the
    /// in-band range `|k| <= K/2` and the adjacent bands `K/2 < |k| <= 3K/2`
    /// (clipped to the Nyquist range).
    pub fn bands(&self, angle_index: usize, n_active: usize) -> BandPowers {
        let row = &self.power[angle_index];
        let n = row.len() as i64;
        let half = (n_active / 2) as i64;
        let edge = (3 * half).min(n / 2 - 1);
        let at = |k: i64| row[k.rem_euclid(n) as usize];
        BandPowers {
            in_band: (-half..=half).map(at).sum(),
            lower: (-edge..-half).map(at).sum(),
            upper: (half + 1..=edge).map(at).sum(),
            total: row.iter().sum(),
        }
    }

    /// In-band and out-of-band patterns, both normalized so that the
    /// largest in-band power is 0 dB.
    pub fn patterns(&self, n_active: usize) -> RadiationReport {
        let bands: Vec<BandPowers> = (0..self.angles.len()).map(|a| self.bands(a, n_active)).collect();
        let peak = bands.iter().map(|b| b.in_band).fold(0.0, f64::max);
        RadiationReport {
            angles: self.angles.clone(),
            in_band_db: bands.iter().map(|b| lin_to_db(b.in_band / peak)).collect(),
            out_of_band_db: bands.iter().map(|b| lin_to_db(b.out_of_band() / peak)).collect(),
        }
    }

    /// PSD at one angle in dB, centered (`f = k / N`, `k = -N/2 .. N/2`).
    pub fn psd(&self, angle_index: usize) -> PsdCurve {
        let row = &self.power[angle_index];
        let n = row.len();
        let half = n / 2;
        let mut freq = Vec::with_capacity(n);
        let mut db = Vec::with_capacity(n);
        for j in 0..n {
            let k = j as i64 - half as i64;
            freq.push(k as f64 / n as f64);
            db.push(lin_to_db(row[k.rem_euclid(n as i64) as usize]));
        }
        PsdCurve { angle: self.angles[angle_index], freq, db }
    }
}

/// Below this distortion-plus-noise variance the mismatched metric is
/// treated as exact and the GMI term is capped at `log2 M`.
pub const GMI_MIN_VARIANCE: f64 = 1e-300;

/// One sample of the GMI estimate with the Gaussian decoding metric
/// `p(r | s) ~ exp(-|r - alpha s|^2 / sigma2)`:
/// `log2 M - log2(sum_m p(r | s_m) / p(r | s_sent))`.
pub fn gmi_term(qam: &Qam, r: C64, sent: usize, alpha: C64, sigma2: f64) -> f64 {
    let log2m = qam.bits_per_symbol() as f64;
    if !(sigma2 > GMI_MIN_VARIANCE) {
        return log2m;
    }
    let reference = (r - alpha * qam.symbol(sent)).norm_sqr();
    let exps = qam.points().iter().map(|&s| -((r - alpha * s).norm_sqr() - reference) / sigma2);
    // Log-sum-exp around the largest exponent.
    let max = exps.clone().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = exps.map(|e| libm::exp(e - max)).sum();
    log2m - (max + libm::log(sum)) / core::f64::consts::LN_2
}

/// Running mean of GMI samples.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GmiAccumulator {
    pub sum: f64,
    pub count: u64,
}

impl GmiAccumulator {
    pub fn add(&mut self, term: f64) {
        self.sum += term;
        self.count += 1;
    }

    pub fn merge(&mut self, other: &GmiAccumulator) {
        self.sum += other.sum;
        self.count += other.count;
    }

    /// Mean in bits per symbol, floored at zero (a rate of zero is always
    /// achievable).
    pub fn value(&self) -> f64 {
        if self.count == 0 {
            return 0.0;
        }
        (self.sum / self.count as f64).max(0.0)
    }
}

/// Gain and residual variance of a linear fit `r = alpha d + e`.
pub fn wiener_fit(r: &[C64], d: &[C64]) -> Result<(C64, f64)> {
    let mut num = C64::new(0.0, 0.0);
    let mut den = 0.0;
    for (a, b) in r.iter().zip(d) {
        num += a * b.conj();
        den += b.norm_sqr();
    }
    if den <= f64::MIN_POSITIVE {
        return Err(Error::ZeroEnergy);
    }
    let alpha = num / den;
    let var = r.iter().zip(d).map(|(a, b)| (a - alpha * b).norm_sqr()).sum::<f64>() / r.len() as f64;
    Ok((alpha, var))
}

/// Received-power terms of one user on one subcarrier, noise excluded.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SinrTerms {
    pub signal: f64,
    pub intra: f64,
    pub inter: f64,
    pub distortion: f64,
}

impl SinrTerms {
    pub fn add(&mut self, o: &SinrTerms) {
        self.signal += o.signal;
        self.intra += o.intra;
        self.inter += o.inter;
        self.distortion += o.distortion;
    }

    pub fn scale(&mut self, f: f64) {
        self.signal *= f;
        self.intra *= f;
        self.inter *= f;
        self.distortion *= f;
    }

    pub fn interference(&self) -> f64 {
        self.intra + self.inter + self.distortion
    }

    pub fn sinr(&self, n_o: f64) -> f64 {
        self.signal / (self.interference() + n_o)
    }
}

/// SINR terms of user `u` on subcarrier `i` under the Bussgang model
/// `y_f = A x_f + eta`. The receiver sees `omega^H y_f / sqrt(mu)`, so the
/// distortion power is `omega^H R_eta omega / mu`.
pub fn sinr_terms(
    model: &BussgangModel,
    response: &FrequencyResponse,
    precoder: &DigitalPrecoder,
    layout: &[GroupSlot],
    oversampling: f64,
    u: usize,
    i: usize,
) -> SinrTerms {
    let omega = &response.omega[u][i];
    // Effective row omega^H A in the chain domain.
    let row = model.a_adjoint_times(i, omega);
    let own = layout.iter().position(|s| s.users.contains(&u)).expect("user in layout");
    let mut t = SinrTerms { distortion: model.distortion_power(i, omega) / oversampling, ..SinrTerms::default() };
    for (g, (slot, gp)) in layout.iter().zip(&precoder.groups).enumerate() {
        let part = row.rows(slot.chains.start, slot.chains.len());
        let w = &gp.w[i];
        for (j, v) in slot.users.clone().enumerate() {
            let p = gp.scale * part.dotc(&w.column(j)).norm_sqr();
            if v == u {
                t.signal += p;
            } else if g == own {
                t.intra += p;
            } else {
                t.inter += p;
            }
        }
    }
    t
}

/// Approximate square `M`-QAM bit error rate at a given SINR.
pub fn ber_qam(sinr: f64, order: usize) -> f64 {
    let m = order as f64;
    let coef = 4.0 / libm::log2(m) * (1.0 - 1.0 / libm::sqrt(m));
    coef * q_function(libm::sqrt(3.0 * sinr / (m - 1.0)))
}

/// Wilson score interval for `k` successes in `n` trials.
pub fn wilson_interval(k: u64, n: u64, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n_f = n as f64;
    let p = k as f64 / n_f;
    let z2 = z * z;
    let denom = 1.0 + z2 / n_f;
    let center = (p + z2 / (2.0 * n_f)) / denom;
    let half = z * libm::sqrt(p * (1.0 - p) / n_f + z2 / (4.0 * n_f * n_f)) / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// 97.5 % standard normal quantile, for two-sided 95 % intervals.
pub const Z_95: f64 = 1.959_963_984_540_054;

/// Bit error counts.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct BerCounter {
    pub errors: u64,
    pub bits: u64,
    /// Set when counting stopped at the frame cap before reaching the
    /// requested number of errors.
    pub capped: bool,
}

impl BerCounter {
    pub fn rate(&self) -> f64 {
        if self.bits == 0 {
            0.0
        } else {
            self.errors as f64 / self.bits as f64
        }
    }

    pub fn interval(&self) -> (f64, f64) {
        wilson_interval(self.errors, self.bits, Z_95)
    }

    pub fn merge(&mut self, o: &BerCounter) {
        self.errors += o.errors;
        self.bits += o.bits;
        self.capped |= o.capped;
    }
}

/// Hard-decision symbol errors counted in bits.
pub fn count_bit_errors(qam: &Qam, equalized: &[C64], sent: &[usize]) -> u64 {
    equalized.iter().zip(sent).map(|(&r, &s)| u64::from(Qam::bit_errors(qam.slice(r), s))).sum()
}

/// Scalar AWGN reference chain `r = d + n` with everything else bypassed,
/// at `E_b / N_o = ebn0_db`. Stops after `min_errors` errors or
/// `max_symbols` symbols.
pub fn awgn_bypass_ber<R: Rng + ?Sized>(qam: &Qam, ebn0_db: f64, min_errors: u64, max_symbols: u64, rng: &mut R) -> BerCounter {
    let es_n0 = crate::math::db_to_lin(ebn0_db) * qam.bits_per_symbol() as f64;
    let sigma = libm::sqrt(1.0 / es_n0);
    let mut c = BerCounter::default();
    let mut symbols = 0u64;
    while c.errors < min_errors && symbols < max_symbols {
        let s = rng.random_range(0..qam.order());
        let r = qam.symbol(s) + complex_normal(rng) * sigma;
        c.errors += u64::from(Qam::bit_errors(qam.slice(r), s));
        c.bits += u64::from(qam.bits_per_symbol());
        symbols += 1;
    }
    c.capped = c.errors < min_errors;
    c
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::rng::{stream, Stream};

    fn identity_array_frames(n_t: usize, n: usize, frames: usize, f: impl Fn(usize, usize, &mut crate::math::rng::StreamRng) -> C64) -> Spectra {
        let mut acc = SpectrumAccumulator::new(&[0.0, 20.0], n_t, n);
        let mut rng = stream(5, Stream::Data, &[]);
        for _ in 0..frames {
            let y: Vec<Vec<C64>> = (0..n_t).map(|m| (0..n).map(|t| f(m, t, &mut rng)).collect()).collect();
            acc.observe(&y).unwrap();
        }
        acc.finish().unwrap()
    }

    #[test]
    fn tone_peaks_at_its_bin() {
        let (n, k0) = (256, 17);
        let s = identity_array_frames(4, n, 2, |_, t, _| {
            C64::from_polar(1.0, 2.0 * core::f64::consts::PI * (k0 * t) as f64 / n as f64)
        });
        let curve = s.psd(0);
        let peak = curve.db.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let j = curve.db.iter().position(|&v| v == peak).unwrap();
        assert!((curve.freq[j] - k0 as f64 / n as f64).abs() < 1e-12);
        let far = curve.db[(j + n / 2) % n];
        assert!(peak - far >= 40.0);
    }

    #[test]
    fn white_input_is_flat() {
        let s = identity_array_frames(4, 128, 400, |_, _, r| complex_normal(r));
        let c = s.psd(1);
        let mean = c.db.iter().sum::<f64>() / c.db.len() as f64;
        assert!(c.db.iter().all(|v| (v - mean).abs() < 1.0));
    }

    #[test]
    fn bands_are_consistent_and_patterns_normalized() {
        let s = identity_array_frames(4, 128, 10, |_, _, r| complex_normal(r));
        for a in 0..2 {
            let b = s.bands(a, 32);
            assert!(b.in_band + b.lower + b.upper <= b.total * (1.0 + 1e-6));
            assert_eq!(b.out_of_band(), b.lower.max(b.upper));
        }
        let p = s.patterns(32);
        assert_eq!(p.in_band_db.iter().cloned().fold(f64::NEG_INFINITY, f64::max), 0.0);
    }

    #[test]
    fn angle_grid_endpoints() {
        let g = angle_grid(50.0, 0.5);
        assert_eq!(g.len(), 201);
        assert_eq!(g[0], -50.0);
        assert!((g[200] - 50.0).abs() < 1e-12);
    }

    #[test]
    fn gmi_perfect_channel() {
        let qam = Qam::new(16).unwrap();
        let mut acc = GmiAccumulator::default();
        let mut rng = stream(1, Stream::Noise, &[]);
        for _ in 0..2000 {
            let s = rng.random_range(0..16);
            let r = qam.symbol(s) + complex_normal(&mut rng) * 1e-4;
            acc.add(gmi_term(&qam, r, s, C64::new(1.0, 0.0), 1e-8));
        }
        assert!(acc.value() >= 4.0 - 0.01 && acc.value() <= 4.0 + 1e-9);
        assert_eq!(gmi_term(&qam, C64::new(0.3, 0.0), 2, C64::new(1.0, 0.0), 0.0), 4.0);
    }

    /// Gauss-Hermite nodes and weights (weight `exp(-x^2)`) from the
    /// eigen-decomposition of the Jacobi matrix.
    fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
        use crate::math::linalg::{hermitian_eig, CMatrix};
        let mut j = CMatrix::zeros(n, n);
        for k in 1..n {
            let b = C64::new(libm::sqrt(k as f64 / 2.0), 0.0);
            j[(k - 1, k)] = b;
            j[(k, k - 1)] = b;
        }
        let (values, vectors) = hermitian_eig(&j);
        let w = (0..n).map(|c| libm::sqrt(core::f64::consts::PI) * vectors[(0, c)].norm_sqr()).collect();
        (values, w)
    }

    /// Constrained-input AWGN capacity by 2-D Gauss-Hermite quadrature.
    fn capacity_gauss_hermite(qam: &Qam, snr: f64) -> f64 {
        let (x, w) = gauss_hermite(60);
        let sigma2 = 1.0 / snr;
        // n = sigma * (u + j v) / sqrt(2) with u, v standard normal; after
        // substituting u = sqrt(2) t the weight becomes exp(-t^2) / pi.
        let s = libm::sqrt(sigma2);
        let mut total = 0.0;
        for sent in 0..qam.order() {
            for (a, wa) in x.iter().zip(&w) {
                for (b, wb) in x.iter().zip(&w) {
                    let r = qam.symbol(sent) + C64::new(*a, *b) * s;
                    total += wa * wb / core::f64::consts::PI
                        * gmi_term(qam, r, sent, C64::new(1.0, 0.0), sigma2);
                }
            }
        }
        total / qam.order() as f64
    }

    #[test]
    fn gmi_matches_awgn_capacity() {
        let qam = Qam::new(4).unwrap();
        let oracle = capacity_gauss_hermite(&qam, 1.0);
        let mut acc = GmiAccumulator::default();
        let mut rng = stream(2, Stream::Noise, &[]);
        for _ in 0..200_000 {
            let s = rng.random_range(0..4);
            let r = qam.symbol(s) + complex_normal(&mut rng);
            acc.add(gmi_term(&qam, r, s, C64::new(1.0, 0.0), 1.0));
        }
        assert!((acc.value() - oracle).abs() < 0.02, "{} vs {}", acc.value(), oracle);
        // Two independent BPSK channels at 0 dB carry 2 x 0.486 bits.
        assert!((oracle - 0.972).abs() < 0.002, "{oracle}");
    }

    #[test]
    fn ber_formula_reductions() {
        for s in [0.1, 1.0, 4.0, 20.0] {
            assert!((ber_qam(s, 4) - q_function(libm::sqrt(s))).abs() < 1e-15);
        }
        let s = 10.0;
        let direct = 4.0 / 4.0 * (1.0 - 0.25) * q_function(libm::sqrt(3.0 * s / 15.0));
        assert!((ber_qam(s, 16) - direct).abs() < 1e-15);
    }

    #[test]
    fn wilson_contains_estimate() {
        let (lo, hi) = wilson_interval(30, 1000, Z_95);
        assert!(lo < 0.03 && 0.03 < hi);
        assert_eq!(wilson_interval(0, 0, Z_95), (0.0, 1.0));
        let (lo, _) = wilson_interval(0, 1000, Z_95);
        assert!(lo.abs() < 1e-15);
    }

    #[test]
    fn awgn_bypass_is_deterministic() {
        let qam = Qam::new(4).unwrap();
        let a = awgn_bypass_ber(&qam, 4.0, 100, 1 << 20, &mut stream(3, Stream::Noise, &[]));
        let b = awgn_bypass_ber(&qam, 4.0, 100, 1 << 20, &mut stream(3, Stream::Noise, &[]));
        assert_eq!(a, b);
    }
}
