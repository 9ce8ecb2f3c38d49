//! One-ring channel covariance matrices, Rician channel sampling and
//! per-subcarrier frequency responses for a half-wavelength ULA.

use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::Rng;

use crate::{
    error::{Error, Result},
    math::{
        linalg::{psd_sqrt, CMatrix, CVector},
        quad::integrate,
        rng::complex_normal,
        C64,
    },
    scenario::{MpcConfig, Scenario, WaveformConfig},
    waveform::active_bins,
};

const QUAD_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct SteeringVector {
    pub angle: f64,
    pub values: CVector,
}

/// Unit-norm ULA response `a_m = exp(j m pi sin(angle)) / sqrt(n)`.
pub fn steering(angle: f64, n_antennas: usize) -> SteeringVector {
    assert!(angle.abs() <= PI / 2.0 + 1e-12, "steering angle outside [-pi/2, pi/2]");
    SteeringVector { angle, values: steering_vector(angle, n_antennas) }
}

pub fn steering_vector(angle: f64, n: usize) -> CVector {
    let s = libm::sin(angle);
    let scale = 1.0 / libm::sqrt(n as f64);
    CVector::from_fn(n, |m, _| C64::from_polar(scale, PI * m as f64 * s))
}

/// Covariance of one angular sector under the one-ring model,
/// `R[m, n] = gain / (2 delta N) * int exp(j pi (m - n) sin t) dt` over
/// `t in [center - delta, center + delta]`. The result is Hermitian
/// Toeplitz with trace `gain`.
pub fn build_ccm(mpc: &MpcConfig, n_antennas: usize) -> Result<CMatrix> {
    assert!(mpc.half_width_deg > 0.0, "sector half-width must be positive");
    let center = mpc.center_deg.to_radians();
    let delta = mpc.half_width_deg.to_radians();
    let n = n_antennas;
    let scale = mpc.gain / (2.0 * delta * n as f64);
    // Absolute tolerance on the matrix entries, transferred to the raw integral.
    let tol = QUAD_TOL / scale;
    let lags = integrate(
        |t, out| {
            let step = C64::from_polar(1.0, PI * libm::sin(t));
            let mut p = C64::new(1.0, 0.0);
            for v in out.iter_mut() {
                *v = p;
                p *= step;
            }
        },
        center - delta,
        center + delta,
        n,
        tol,
    )?;
    Ok(CMatrix::from_fn(n, n, |r, c| {
        if r >= c {
            lags[r - c] * scale
        } else {
            lags[c - r].conj() * scale
        }
    }))
}

/// Second-order statistics of one path, with a matrix square root ready for
/// sampling.
#[derive(Clone, Debug)]
pub struct PathStats {
    /// Sector center in radians.
    pub center: f64,
    pub gain: f64,
    pub rician_factor: f64,
    /// Delay in symbol-rate samples.
    pub delay: usize,
    pub covariance: CMatrix,
    pub sqrt: CMatrix,
}

/// Covariance matrices for every path of every user, plus the group and
/// victim sums used by the analog beamformer design.
#[derive(Clone, Debug)]
pub struct CcmSet {
    pub n_antennas: usize,
    pub energy: f64,
    /// Indexed by global user index.
    pub users: Vec<Vec<PathStats>>,
    /// Scenario group of each user.
    pub user_group: Vec<usize>,
    /// `sum_u sum_l R_l^(g_u)` for each scenario group.
    pub group_sums: Vec<CMatrix>,
    /// One covariance per victim sector.
    pub victims: Vec<CMatrix>,
}

impl CcmSet {
    /// Builds covariances for an `n_antennas`-element ULA (the full array or
    /// one subarray).
    pub fn build(scenario: &Scenario, n_antennas: usize) -> Result<CcmSet> {
        let covs = CcmSet::sectors(scenario)
            .iter()
            .map(|mpc| build_ccm(mpc, n_antennas))
            .collect::<Result<Vec<_>>>()?;
        CcmSet::from_covariances(scenario, n_antennas, covs)
    }

    /// Every sector whose covariance the set holds: all user paths in
    /// scenario order, then the victim sectors with their resolved gains.
    pub fn sectors(scenario: &Scenario) -> Vec<MpcConfig> {
        let mut out: Vec<MpcConfig> = scenario.users().flat_map(|u| u.mpcs.iter().cloned()).collect();
        out.extend(scenario.victims.iter().map(|v| MpcConfig {
            center_deg: v.center_deg,
            half_width_deg: v.half_width_deg,
            gain: scenario.victim_gain(v),
            rician_factor: 0.0,
            delay: 0,
        }));
        out
    }

    /// Assembles the set from covariances in [`CcmSet::sectors`] order.
    pub fn from_covariances(scenario: &Scenario, n_antennas: usize, covs: Vec<CMatrix>) -> Result<CcmSet> {
        let sectors = CcmSet::sectors(scenario);
        if covs.len() != sectors.len() {
            return Err(Error::Length { expected: sectors.len(), got: covs.len() });
        }
        if let Some(bad) = covs.iter().find(|c| c.nrows() != n_antennas || c.ncols() != n_antennas) {
            return Err(Error::Length { expected: n_antennas, got: bad.nrows() });
        }
        let mut covs = covs.into_iter();
        let mut users = Vec::new();
        let mut user_group = Vec::new();
        let mut group_sums = Vec::new();
        for (g, group) in scenario.groups.iter().enumerate() {
            let mut sum = CMatrix::zeros(n_antennas, n_antennas);
            for user in &group.users {
                let mut paths = Vec::new();
                for mpc in &user.mpcs {
                    let covariance = covs.next().expect("length checked");
                    sum += &covariance;
                    paths.push(PathStats {
                        center: mpc.center_deg.to_radians(),
                        gain: mpc.gain,
                        rician_factor: mpc.rician_factor,
                        delay: mpc.delay,
                        sqrt: psd_sqrt(&covariance),
                        covariance,
                    });
                }
                users.push(paths);
                user_group.push(g);
            }
            group_sums.push(sum);
        }
        let victims = covs.collect();
        Ok(CcmSet { n_antennas, energy: scenario.energy, users, user_group, group_sums, victims })
    }

    /// Covariances in [`CcmSet::sectors`] order.
    pub fn covariances(&self) -> Vec<&CMatrix> {
        self.users.iter().flatten().map(|p| &p.covariance).chain(&self.victims).collect()
    }

    pub fn n_groups(&self) -> usize {
        self.group_sums.len()
    }

    /// `R_sum^(g) = (E_s / G) sum_l R_l^(g)`.
    pub fn r_sum_group(&self, g: usize) -> CMatrix {
        &self.group_sums[g] * C64::new(self.energy / self.n_groups() as f64, 0.0)
    }

    /// `R_sum = (E_s / G) (sum_g sum_l R_l^(g) + sum_v R_v) + n_o I`.
    pub fn r_sum(&self, n_o: f64) -> CMatrix {
        let n = self.n_antennas;
        let mut total = CMatrix::zeros(n, n);
        for m in self.group_sums.iter().chain(&self.victims) {
            total += m;
        }
        total * C64::new(self.energy / self.n_groups() as f64, 0.0) + CMatrix::identity(n, n) * C64::new(n_o, 0.0)
    }
}

/// One delay tap of one user's channel.
#[derive(Clone, Debug, PartialEq)]
pub struct Tap {
    /// Delay on the oversampled grid.
    pub delay: usize,
    pub kappa: C64,
    pub h: CVector,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChannelRealization {
    /// Taps of each user, indexed by global user index.
    pub users: Vec<Vec<Tap>>,
}

/// Draws the taps of one user: `h = kappa a(center) + R^{1/2} z` with
/// `|kappa|^2 = rician_factor * gain` and a uniform phase.
pub fn sample_user<R: Rng + ?Sized>(
    paths: &[PathStats],
    waveform: &WaveformConfig,
    rng: &mut R,
) -> Vec<Tap> {
    paths
        .iter()
        .map(|p| {
            let n = p.sqrt.nrows();
            let phase = rng.random::<f64>() * 2.0 * PI;
            let kappa = C64::from_polar(libm::sqrt(p.rician_factor * p.gain), phase);
            let z = CVector::from_fn(n, |_, _| complex_normal(rng));
            let h = steering_vector(p.center, n) * kappa + &p.sqrt * z;
            Tap { delay: waveform.delay_samples(p.delay), kappa, h }
        })
        .collect()
}

/// Draws all users in order from one stream.
pub fn sample_realization<R: Rng + ?Sized>(
    stats: &CcmSet,
    waveform: &WaveformConfig,
    rng: &mut R,
) -> ChannelRealization {
    ChannelRealization { users: stats.users.iter().map(|p| sample_user(p, waveform, rng)).collect() }
}

/// Per-subcarrier channel vectors of every user on the active subcarriers.
#[derive(Clone, Debug, PartialEq)]
pub struct FrequencyResponse {
    pub fft_size: usize,
    /// FFT bin of each active subcarrier.
    pub bins: Vec<usize>,
    /// `omega[u][i]`: channel of user `u` on active subcarrier `i`.
    pub omega: Vec<Vec<CVector>>,
}

impl FrequencyResponse {
    /// Stacks the channels of `users` on subcarrier `i` as columns.
    pub fn matrix(&self, users: core::ops::Range<usize>, i: usize) -> CMatrix {
        let cols: Vec<CVector> = users.map(|u| self.omega[u][i].clone()).collect();
        CMatrix::from_columns(&cols)
    }
}

/// Channel of one user on FFT bin `bin`.
///
/// The sign of the exponent is chosen so that `omega^H y_k` is exactly the
/// DFT of the causal convolution `r_n = sum_l h_l^H y_{n-l}` whenever all
/// delays fit in the cyclic prefix.
pub fn response_at(taps: &[Tap], bin: usize, fft_size: usize) -> CVector {
    let n = taps[0].h.len();
    let mut out = CVector::zeros(n);
    for t in taps {
        let phase = 2.0 * PI * ((t.delay * bin) % fft_size) as f64 / fft_size as f64;
        out += &t.h * C64::from_polar(1.0, phase);
    }
    out
}

pub fn frequency_response(real: &ChannelRealization, waveform: &WaveformConfig) -> Result<FrequencyResponse> {
    let cp = waveform.cp_samples();
    for t in real.users.iter().flatten() {
        if t.delay > cp {
            return Err(Error::DelayExceedsCp { delay: t.delay, cp });
        }
    }
    let bins = active_bins(waveform.n_active, waveform.fft_size);
    let omega = real
        .users
        .iter()
        .map(|taps| bins.iter().map(|&k| response_at(taps, k, waveform.fft_size)).collect())
        .collect();
    Ok(FrequencyResponse { fft_size: waveform.fft_size, bins, omega })
}

/// Center of each user's strongest path, in degrees.
pub fn user_angles(scenario: &Scenario) -> Vec<f64> {
    scenario.users().map(|u| u.mpcs[u.strongest_mpc()].center_deg).collect()
}

#[doc(hidden)]
pub fn zero_taps(n: usize, delays: &[usize]) -> Vec<Tap> {
    delays.iter().map(|&d| Tap { delay: d, kappa: C64::new(0.0, 0.0), h: CVector::zeros(n) }).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::rng::{stream, Stream};

    fn mpc(center: f64, hw: f64, gain: f64) -> MpcConfig {
        MpcConfig { center_deg: center, half_width_deg: hw, gain, rician_factor: 0.0, delay: 0 }
    }

    #[test]
    fn steering_examples() {
        let a = steering(0.0, 8).values;
        for v in a.iter() {
            assert!((v - C64::new(1.0 / libm::sqrt(8.0), 0.0)).norm() < 1e-15);
        }
        let b = steering(PI / 2.0, 4).values;
        for (m, v) in b.iter().enumerate() {
            let want = if m % 2 == 0 { 0.5 } else { -0.5 };
            assert!((v - C64::new(want, 0.0)).norm() < 1e-12);
        }
        assert!((steering(0.3, 96).values.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn point_source_limit_is_rank_one() {
        let r = build_ccm(&mpc(10.0, 1e-6, 2.0), 16).unwrap();
        let a = steering_vector(10f64.to_radians(), 16);
        let want = &a * a.adjoint() * C64::new(2.0, 0.0);
        assert!((r - want).iter().map(|v| v.norm()).fold(0.0, f64::max) < 1e-6);
    }

    #[test]
    fn trace_equals_gain() {
        for (c, hw, g, n) in [(-26.5, 1.5, 0.666, 96), (12.75, 1.25, 0.33, 48), (80.0, 5.0, 3.0, 7)] {
            let r = build_ccm(&mpc(c, hw, g), n).unwrap();
            assert!((r.trace().re - g).abs() < 1e-9 * g);
            assert!(r.trace().im.abs() < 1e-12);
        }
    }

    #[test]
    fn midpoint_oracle_small_array() {
        let r = build_ccm(&mpc(0.0, 2.0, 1.0), 4).unwrap();
        let delta = 2f64.to_radians();
        let n = 1_000_000;
        let h = 2.0 * delta / n as f64;
        let mut acc = C64::new(0.0, 0.0);
        for i in 0..n {
            let t = -delta + (i as f64 + 0.5) * h;
            acc += C64::from_polar(1.0, -PI * libm::sin(t));
        }
        // Entry (0, 1): exponent uses m - n = -1.
        let want = acc * h / (2.0 * delta * 4.0);
        assert!((r[(0, 1)] - want).norm() < 1e-8);
    }

    #[test]
    fn kappa_magnitude_is_exact() {
        let mut s = Scenario::desk();
        s.groups[2].users[0].mpcs[0].rician_factor = 10.0;
        let set = CcmSet::build(&s, 8).unwrap();
        let mut rng = stream(3, Stream::Channel, &[]);
        let taps = sample_user(&set.users[4], &s.waveform, &mut rng);
        assert!((taps[0].kappa.norm_sqr() - 10.0).abs() < 1e-12);
    }

    #[test]
    fn rayleigh_sample_covariance() {
        let m = mpc(5.0, 3.0, 1.0);
        let cov = build_ccm(&m, 6).unwrap();
        let paths = [PathStats { center: 0.0, gain: 1.0, rician_factor: 0.0, delay: 0, sqrt: psd_sqrt(&cov), covariance: cov.clone() }];
        let w = Scenario::desk().waveform;
        let mut rng = stream(9, Stream::Channel, &[1]);
        let mut acc = CMatrix::zeros(6, 6);
        let mut mean = CVector::zeros(6);
        let draws = 10_000;
        for _ in 0..draws {
            let h = &sample_user(&paths, &w, &mut rng)[0].h;
            acc += h * h.adjoint();
            mean += h;
        }
        acc /= C64::new(draws as f64, 0.0);
        assert!((acc - &cov).norm() < 0.05 * cov.norm());
        assert!(mean.norm() / (draws as f64) < 0.05);
    }

    #[test]
    fn two_tap_response_at_nyquist() {
        let n = 3;
        let mut taps = zero_taps(n, &[0, 1]);
        taps[0].h = CVector::from_fn(n, |i, _| C64::new(i as f64 + 1.0, 0.5));
        taps[1].h = CVector::from_fn(n, |i, _| C64::new(0.2, i as f64));
        let got = response_at(&taps, 8, 16);
        assert!((got - (&taps[0].h - &taps[1].h)).norm() < 1e-12);
        let flat = response_at(&taps[..1], 5, 16);
        assert_eq!(flat, taps[0].h);
    }
}
