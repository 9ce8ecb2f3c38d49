//! Distortion compensation: per-chain digital predistortion trained by
//! indirect learning through the anti-beamformer, and per-subcarrier
//! post-equalization at the receiver.

use alloc::{vec, vec::Vec};
use core::ops::Range;

use nalgebra::Cholesky;

use crate::{
    error::{Error, Result},
    math::{
        linalg::{inverse_hpd, CMatrix, CVector},
        C64,
    },
    pa_model::MemoryPolynomial,
};

/// Projects antenna-domain signals back to the chain domain,
/// `x~_n = B_ab y_n`.
pub fn anti_beamform(anti: &CMatrix, y: &[Vec<C64>]) -> Result<Vec<Vec<C64>>> {
    if y.len() != anti.ncols() {
        return Err(Error::Length { expected: anti.ncols(), got: y.len() });
    }
    let len = y.first().map_or(0, Vec::len);
    let mut out = vec![vec![C64::new(0.0, 0.0); len]; anti.nrows()];
    for (m, row) in y.iter().enumerate() {
        for (d, o) in out.iter_mut().enumerate() {
            let a = anti[(d, m)];
            if a == C64::new(0.0, 0.0) {
                continue;
            }
            for (acc, v) in o.iter_mut().zip(row) {
                *acc += a * v;
            }
        }
    }
    Ok(out)
}

/// One memory-polynomial predistorter per RF chain, each followed by an
/// optional amplitude limiter.
#[derive(Clone, Debug, PartialEq)]
pub struct DpdBank {
    pub chains: Vec<MemoryPolynomial>,
    pub output_limit: Vec<Option<f64>>,
}

impl DpdBank {
    pub fn identity(n_chains: usize, memory: usize, order: usize) -> Self {
        DpdBank { chains: vec![MemoryPolynomial::identity(memory, order); n_chains], output_limit: vec![None; n_chains] }
    }

    /// Largest look-ahead/look-behind of the predistorters, in samples.
    pub fn span(&self) -> usize {
        self.chains.iter().map(|c| c.memory() - 1).max().unwrap_or(0)
    }

    pub fn apply_chain(&self, d: usize, x: &[C64]) -> Vec<C64> {
        let mut y = self.chains[d].apply(x);
        if let Some(lim) = self.output_limit[d] {
            for v in y.iter_mut() {
                let m = v.norm();
                if m > lim {
                    *v *= lim / m;
                }
            }
        }
        y
    }

    pub fn apply(&self, x: &[Vec<C64>]) -> Vec<Vec<C64>> {
        x.iter().enumerate().map(|(d, row)| self.apply_chain(d, row)).collect()
    }
}

/// A block of chain-domain training input. `body` marks the samples whose
/// regressors are complete; the rest are guard samples that only feed the
/// memory taps.
pub struct TrainingFrame {
    pub x: Vec<Vec<C64>>,
    pub body: Range<usize>,
}

/// The transmit chain as seen by the predistorter trainer.
pub trait TrainingChain {
    /// Fresh precoded payload, chain domain.
    fn next_frame(&mut self) -> TrainingFrame;
    /// Antenna-domain amplifier outputs for predistorted input `xhat`.
    fn transmit(&self, xhat: &[Vec<C64>]) -> Vec<Vec<C64>>;
    fn anti_beamformer(&self) -> &CMatrix;
    /// Linear gain the predistorter should restore (the observation is
    /// divided by it).
    fn target_gain(&self) -> C64;
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainingReport {
    /// Per block: residual energy of the postdistorter fit relative to the
    /// energy of the predistorter output, averaged over chains.
    pub residual: Vec<f64>,
    /// Blocks in which an ill-conditioned regression needed diagonal loading.
    pub loaded_blocks: Vec<usize>,
}

/// Solves `G delta = rhs` for a Gram matrix after Jacobi equilibration.
/// Falls back to diagonal loading of `1e-9` times the mean diagonal when
/// the equilibrated matrix is not safely positive definite.
fn solve_normal(gram: &CMatrix, rhs: &CVector) -> Result<(CVector, bool)> {
    let n = gram.nrows();
    let scale: Vec<f64> = (0..n).map(|i| 1.0 / libm::sqrt(gram[(i, i)].re.max(f64::MIN_POSITIVE))).collect();
    let eq = CMatrix::from_fn(n, n, |r, c| gram[(r, c)] * (scale[r] * scale[c]));
    let b = CVector::from_fn(n, |r, _| rhs[r] * scale[r]);
    let unscale = |v: CVector| CVector::from_fn(n, |r, _| v[r] * scale[r]);
    if let Some(ch) = Cholesky::new(eq.clone()) {
        let l = ch.l_dirty();
        let (lo, hi) = (0..n).map(|i| l[(i, i)].re).fold((f64::INFINITY, 0.0f64), |(a, b), v| (a.min(v), b.max(v)));
        // Diagonal of L bounds the conditioning of the equilibrated system.
        if lo > 0.0 && (lo / hi) * (lo / hi) > 1e-13 {
            return Ok((unscale(ch.solve(&b)), false));
        }
    }
    let loaded = eq + CMatrix::identity(n, n) * C64::new(1e-9, 0.0);
    let inv = inverse_hpd(&loaded)?;
    Ok((unscale(inv * b), true))
}

/// Indirect-learning training. Each block pushes at least `block_len`
/// body samples through the live chain, fits the postdistorter copy
/// `x^ ~ f_{b-1}(x~)` residual by least squares and moves the coefficients
/// by `step` times the correction:
///
/// `w_b = w_{b-1} + step (X^H X)^{-1} X^H (x^ - X w_{b-1})`
///
/// where `X` holds the memory-polynomial regressors of `x~ = B_ab y / g`.
pub fn dpd_train<C: TrainingChain + ?Sized>(
    bank: &mut DpdBank,
    chain: &mut C,
    step: f64,
    n_blocks: usize,
    block_len: usize,
) -> Result<TrainingReport> {
    let n_chains = bank.chains.len();
    let mut report = TrainingReport::default();
    for block in 0..n_blocks {
        // Normal equations accumulated frame by frame: G = X^H X,
        // c = X^H x^ and |x^|^2 per chain.
        let mut grams: Vec<CMatrix> = bank.chains.iter().map(|c| CMatrix::zeros(c.n_coeffs(), c.n_coeffs())).collect();
        let mut cross: Vec<CVector> = bank.chains.iter().map(|c| CVector::zeros(c.n_coeffs())).collect();
        let mut energy = vec![0.0; n_chains];
        let mut collected = 0;
        while collected < block_len {
            let frame = chain.next_frame();
            let xhat = bank.apply(&frame.x);
            let y = chain.transmit(&xhat);
            let g = chain.target_gain();
            let mut xt = anti_beamform(chain.anti_beamformer(), &y)?;
            for row in xt.iter_mut() {
                row.iter_mut().for_each(|v| *v /= g);
            }
            for d in 0..n_chains {
                let x = bank.chains[d].regressors(&xt[d], frame.body.clone());
                let t = CVector::from_column_slice(&xhat[d][frame.body.clone()]);
                grams[d] += x.ad_mul(&x);
                cross[d] += x.ad_mul(&t);
                energy[d] += t.norm_squared();
            }
            collected += frame.body.len();
        }
        let mut residual = 0.0;
        let mut loaded = false;
        for d in 0..n_chains {
            let w = CVector::from_column_slice(bank.chains[d].coeffs());
            // X^H e with e = x^ - X w, and |e|^2 expanded the same way.
            let gw = &grams[d] * &w;
            let rhs = &cross[d] - &gw;
            let err = energy[d] - 2.0 * w.dotc(&cross[d]).re + w.dotc(&gw).re;
            residual += err.max(0.0) / energy[d].max(f64::MIN_POSITIVE);
            let (delta, was_loaded) = solve_normal(&grams[d], &rhs)?;
            loaded |= was_loaded;
            let coeffs = bank.chains[d].coeffs_mut();
            for (c, dv) in coeffs.iter_mut().zip(delta.iter()) {
                *c += dv * step;
            }
            if coeffs.iter().any(|c| !c.re.is_finite() || !c.im.is_finite() || c.norm() > 1e6) {
                return Err(Error::Divergence { block });
            }
        }
        report.residual.push(residual / n_chains as f64);
        if loaded {
            report.loaded_blocks.push(block);
        }
    }
    Ok(report)
}

/// Per-subcarrier gains of one user.
#[derive(Clone, Debug, PartialEq)]
pub struct PostEqState {
    pub alpha: Vec<C64>,
}

/// `alpha_k = sum_f r_{f,k} d_{f,k}^* / sum_f |d_{f,k}|^2` over pilot frames
/// (`received[f][k]`, `sent[f][k]`).
pub fn posteq_estimate(received: &[Vec<C64>], sent: &[Vec<C64>]) -> Result<PostEqState> {
    if received.is_empty() {
        return Err(Error::InsufficientFrames { needed: 1, got: 0 });
    }
    let k = received[0].len();
    let mut num = vec![C64::new(0.0, 0.0); k];
    let mut den = vec![0.0; k];
    for (r, d) in received.iter().zip(sent) {
        for i in 0..k {
            num[i] += r[i] * d[i].conj();
            den[i] += d[i].norm_sqr();
        }
    }
    if den.iter().any(|&v| v <= f64::MIN_POSITIVE) {
        return Err(Error::ZeroEnergy);
    }
    Ok(PostEqState { alpha: num.iter().zip(&den).map(|(n, d)| n / d).collect() })
}

/// One gain for all subcarriers, `sum r d^* / sum |d|^2`.
pub fn single_gain_estimate(received: &[Vec<C64>], sent: &[Vec<C64>]) -> Result<C64> {
    let mut num = C64::new(0.0, 0.0);
    let mut den = 0.0;
    for (r, d) in received.iter().zip(sent) {
        for (a, b) in r.iter().zip(d) {
            num += a * b.conj();
            den += b.norm_sqr();
        }
    }
    if den <= f64::MIN_POSITIVE {
        return Err(Error::ZeroEnergy);
    }
    Ok(num / den)
}

/// `d^_k = r_k / alpha_k`.
pub fn posteq_apply(state: &PostEqState, r: &[C64]) -> Result<Vec<C64>> {
    if r.len() != state.alpha.len() {
        return Err(Error::Length { expected: state.alpha.len(), got: r.len() });
    }
    r.iter()
        .zip(&state.alpha)
        .enumerate()
        .map(|(i, (v, a))| if a.norm() == 0.0 { Err(Error::ZeroCoefficient(i)) } else { Ok(v / a) })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::rng::{complex_normal, stream, Stream};

    #[test]
    fn identity_and_delay_banks() {
        let x: Vec<C64> = (0..6).map(|i| C64::new(i as f64, -1.0)).collect();
        let bank = DpdBank::identity(1, 4, 4);
        assert_eq!(bank.apply(&[x.clone()])[0], x);
        let mut delay = MemoryPolynomial::new(4, 4, vec![C64::new(0.0, 0.0); 28]).unwrap();
        delay.set_coeff(1, 0, C64::new(1.0, 0.0));
        let y = delay.apply(&x);
        assert_eq!(y[0], C64::new(0.0, 0.0));
        assert_eq!(&y[1..], &x[..5]);
    }

    #[test]
    fn anti_beamform_matches_dense_product() {
        let mut rng = stream(2, Stream::Data, &[]);
        let anti = CMatrix::from_fn(3, 5, |_, _| complex_normal(&mut rng));
        let y: Vec<Vec<C64>> = (0..5).map(|_| (0..7).map(|_| complex_normal(&mut rng)).collect()).collect();
        let got = anti_beamform(&anti, &y).unwrap();
        for n in 0..7 {
            let col = CVector::from_fn(5, |m, _| y[m][n]);
            let want = &anti * col;
            for d in 0..3 {
                assert!((got[d][n] - want[d]).norm() < 1e-12);
            }
        }
        assert!(anti_beamform(&anti, &y[..4]).is_err());
    }

    #[test]
    fn posteq_examples() {
        let d: Vec<Vec<C64>> = vec![vec![C64::new(1.0, 1.0), C64::new(-1.0, 0.5)]];
        let r: Vec<Vec<C64>> = d.iter().map(|f| f.iter().map(|v| v * 2.0).collect()).collect();
        let st = posteq_estimate(&r, &d).unwrap();
        assert!(st.alpha.iter().all(|a| (a - C64::new(2.0, 0.0)).norm() < 1e-15));
        let rot = C64::from_polar(1.0, core::f64::consts::FRAC_PI_4);
        let st = PostEqState { alpha: vec![rot; 2] };
        let out = posteq_apply(&st, &[d[0][0] * rot, d[0][1] * rot]).unwrap();
        assert!((out[0] - d[0][0]).norm() < 1e-15 && (out[1] - d[0][1]).norm() < 1e-15);
        assert_eq!(posteq_estimate(&r, &[vec![C64::new(0.0, 0.0); 2]]), Err(Error::ZeroEnergy));
    }

    #[test]
    fn noisy_pilots_are_unbiased() {
        let mut rng = stream(4, Stream::Pilots, &[]);
        let frames = 10_000;
        let d: Vec<Vec<C64>> = (0..frames).map(|_| vec![complex_normal(&mut rng)]).collect();
        let r: Vec<Vec<C64>> = d.iter().map(|f| vec![f[0] + complex_normal(&mut rng)]).collect();
        let a = posteq_estimate(&r, &d).unwrap().alpha[0];
        assert!((a - C64::new(1.0, 0.0)).norm() < 0.02);
    }
}
