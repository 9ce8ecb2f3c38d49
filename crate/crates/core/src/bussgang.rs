//! Per-subcarrier Bussgang decomposition of the transmit chain,
//! `y_k = A_k x_k + eta_k` with `E[x_k eta_k^H] = 0`.
//!
//! The chain is split into independent blocks, each pairing a set of RF
//! chains with the antennas they drive:
//!
//! * fully connected: one block with every chain and antenna (matrix form);
//! * partially connected: one block per subarray (vector form);
//! * fully digital: one block per antenna (scalar form).
//!
//! `A_k` is block-structured accordingly and the distortion covariance is
//! kept only inside blocks, since distortion from different blocks comes
//! from different amplifiers driven by different inputs.

use alloc::{vec, vec::Vec};
use core::ops::Range;

use rand::Rng;

use crate::{
    error::{Error, Result},
    math::{
        linalg::{hermitize, inverse_hpd, psd_clip, CMatrix, CVector},
        C64,
    },
    scenario::Architecture,
};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Block {
    pub chains: Range<usize>,
    pub antennas: Range<usize>,
}

/// Block layout for an architecture.
pub fn blocks(architecture: Architecture, n_antennas: usize, n_chains: usize) -> Vec<Block> {
    match architecture {
        Architecture::FullyConnected => vec![Block { chains: 0..n_chains, antennas: 0..n_antennas }],
        Architecture::FullyDigital => (0..n_antennas).map(|m| Block { chains: m..m + 1, antennas: m..m + 1 }).collect(),
        Architecture::PartialGeb | Architecture::PartialDft => {
            let ns = n_antennas / n_chains;
            (0..n_chains).map(|d| Block { chains: d..d + 1, antennas: d * ns..(d + 1) * ns }).collect()
        }
    }
}

/// Second-order moments of one block on one subcarrier.
#[derive(Clone, Debug)]
struct Moments {
    xx: CMatrix,
    yx: CMatrix,
    yy: CMatrix,
}

/// Streams frame pairs `(x_f, y_f)` (chains x K and antennas x K, one column
/// per active subcarrier) into per-block moment sums.
#[derive(Clone, Debug)]
pub struct BussgangAccumulator {
    architecture: Architecture,
    n_antennas: usize,
    n_chains: usize,
    blocks: Vec<Block>,
    moments: Vec<Vec<Moments>>,
    frames: usize,
}

impl BussgangAccumulator {
    pub fn new(architecture: Architecture, n_antennas: usize, n_chains: usize, n_bins: usize) -> Self {
        let blocks = blocks(architecture, n_antennas, n_chains);
        let moments = (0..n_bins)
            .map(|_| {
                blocks
                    .iter()
                    .map(|b| Moments {
                        xx: CMatrix::zeros(b.chains.len(), b.chains.len()),
                        yx: CMatrix::zeros(b.antennas.len(), b.chains.len()),
                        yy: CMatrix::zeros(b.antennas.len(), b.antennas.len()),
                    })
                    .collect()
            })
            .collect();
        BussgangAccumulator { architecture, n_antennas, n_chains, blocks, moments, frames: 0 }
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn observe(&mut self, x_f: &CMatrix, y_f: &CMatrix) -> Result<()> {
        if x_f.nrows() != self.n_chains || y_f.nrows() != self.n_antennas {
            return Err(Error::Length { expected: self.n_chains, got: x_f.nrows() });
        }
        if x_f.ncols() != self.moments.len() || y_f.ncols() != self.moments.len() {
            return Err(Error::Length { expected: self.moments.len(), got: x_f.ncols().min(y_f.ncols()) });
        }
        let one = C64::new(1.0, 0.0);
        for (i, bin) in self.moments.iter_mut().enumerate() {
            for (b, m) in self.blocks.iter().zip(bin.iter_mut()) {
                let xc = x_f.column(i);
                let yc = y_f.column(i);
                let x = xc.rows(b.chains.start, b.chains.len());
                let y = yc.rows(b.antennas.start, b.antennas.len());
                m.xx.gerc(one, &x, &x, one);
                m.yx.gerc(one, &y, &x, one);
                m.yy.gerc(one, &y, &y, one);
            }
        }
        self.frames += 1;
        Ok(())
    }

    /// Wiener gains and residual distortion covariances.
    pub fn finish(&self, min_frames: usize) -> Result<BussgangModel> {
        if self.frames < min_frames.max(1) {
            return Err(Error::InsufficientFrames { needed: min_frames.max(1), got: self.frames });
        }
        let inv_f = C64::new(1.0 / self.frames as f64, 0.0);
        let mut a = Vec::with_capacity(self.moments.len());
        let mut r_eta = Vec::with_capacity(self.moments.len());
        let mut excluded = Vec::new();
        for (i, bin) in self.moments.iter().enumerate() {
            let mut a_bin = Vec::with_capacity(bin.len());
            let mut r_bin = Vec::with_capacity(bin.len());
            for m in bin {
                let xx = hermitize(&(&m.xx * inv_f));
                let yx = &m.yx * inv_f;
                let yy = hermitize(&(&m.yy * inv_f));
                let n = xx.nrows();
                let load = 1e-10 * xx.trace().re / n as f64;
                let inv = inverse_hpd(&xx)
                    .or_else(|_| inverse_hpd(&(&xx + CMatrix::identity(n, n) * C64::new(load, 0.0))));
                match inv {
                    Ok(inv) if xx.trace().re > 0.0 => {
                        let ab = &yx * inv;
                        let r = &yy - &ab * &xx * ab.adjoint();
                        r_bin.push(psd_clip(&r));
                        a_bin.push(ab);
                    }
                    _ => {
                        if excluded.last() != Some(&i) {
                            excluded.push(i);
                        }
                        a_bin.push(CMatrix::zeros(yx.nrows(), yx.ncols()));
                        r_bin.push(yy);
                    }
                }
            }
            a.push(a_bin);
            r_eta.push(r_bin);
        }
        Ok(BussgangModel {
            architecture: self.architecture,
            n_antennas: self.n_antennas,
            n_chains: self.n_chains,
            blocks: self.blocks.clone(),
            a,
            r_eta,
            n_frames: self.frames,
            excluded_bins: excluded,
        })
    }
}

#[derive(Clone, Debug)]
pub struct BussgangModel {
    pub architecture: Architecture,
    pub n_antennas: usize,
    pub n_chains: usize,
    pub blocks: Vec<Block>,
    /// `a[i][b]`: gain block `b` on subcarrier `i` (block antennas x block chains).
    pub a: Vec<Vec<CMatrix>>,
    /// `r_eta[i][b]`: distortion covariance of block `b` on subcarrier `i`.
    pub r_eta: Vec<Vec<CMatrix>>,
    pub n_frames: usize,
    /// Subcarriers whose input covariance was singular.
    pub excluded_bins: Vec<usize>,
}

impl BussgangModel {
    pub fn n_bins(&self) -> usize {
        self.a.len()
    }

    /// Full `A_i` (antennas x chains).
    pub fn a_matrix(&self, i: usize) -> CMatrix {
        let mut out = CMatrix::zeros(self.n_antennas, self.n_chains);
        for (b, m) in self.blocks.iter().zip(&self.a[i]) {
            out.view_mut((b.antennas.start, b.chains.start), (b.antennas.len(), b.chains.len())).copy_from(m);
        }
        out
    }

    /// Full `R_eta` on subcarrier `i`; entries outside the blocks are zero.
    pub fn r_eta_matrix(&self, i: usize) -> CMatrix {
        let mut out = CMatrix::zeros(self.n_antennas, self.n_antennas);
        for (b, m) in self.blocks.iter().zip(&self.r_eta[i]) {
            out.view_mut((b.antennas.start, b.antennas.start), (b.antennas.len(), b.antennas.len())).copy_from(m);
        }
        out
    }

    /// `A_i^H w` for an antenna-domain vector `w`.
    pub fn a_adjoint_times(&self, i: usize, w: &CVector) -> CVector {
        let mut out = CVector::zeros(self.n_chains);
        for (b, m) in self.blocks.iter().zip(&self.a[i]) {
            let part = m.adjoint() * w.rows(b.antennas.start, b.antennas.len());
            let mut dst = out.rows_mut(b.chains.start, b.chains.len());
            dst += part;
        }
        out
    }

    /// `w^H R_eta w`.
    pub fn distortion_power(&self, i: usize, w: &CVector) -> f64 {
        self.blocks
            .iter()
            .zip(&self.r_eta[i])
            .map(|(b, m)| {
                let v = w.rows(b.antennas.start, b.antennas.len());
                v.dotc(&(m * v)).re
            })
            .sum()
    }

    /// `eta = y - A x` for one subcarrier.
    pub fn residual(&self, i: usize, x: &CVector, y: &CVector) -> CVector {
        y - self.a_matrix(i) * x
    }
}

/// Stacks per-chain subarray vectors into the block-diagonal `A` of a
/// partially connected array: chain `d`'s vector occupies rows
/// `d N_s .. (d + 1) N_s` of column `d`.
pub fn assemble_block_a(vectors: &[CVector], n_antennas: usize) -> Result<CMatrix> {
    let d = vectors.len();
    if d == 0 || n_antennas % d != 0 || vectors.iter().any(|v| v.len() != n_antennas / d) {
        return Err(Error::Length { expected: n_antennas, got: vectors.iter().map(|v| v.len()).sum() });
    }
    let ns = n_antennas / d;
    let mut out = CMatrix::zeros(n_antennas, d);
    for (j, v) in vectors.iter().enumerate() {
        out.view_mut((j * ns, j), (ns, 1)).copy_from(v);
    }
    Ok(out)
}

/// Mean of `x_i eta_i^H` over frames on subcarrier `i` and its bootstrap
/// spread, restricted to the model's blocks (the only entries the Wiener
/// fit makes zero). Returns `(||mean||_F, rms_b ||mean_b - mean||_F)` where
/// `mean_b` are means over frames resampled with replacement.
pub fn orthogonality_check<R: Rng + ?Sized>(
    model: &BussgangModel,
    frames: &[(CMatrix, CMatrix)],
    i: usize,
    n_boot: usize,
    rng: &mut R,
) -> (f64, f64) {
    let products: Vec<Vec<C64>> = frames
        .iter()
        .map(|(x_f, y_f)| {
            let x = x_f.column(i).into_owned();
            let y = y_f.column(i).into_owned();
            let eta = model.residual(i, &x, &y);
            let mut flat = Vec::new();
            for b in &model.blocks {
                for m in b.antennas.clone() {
                    for d in b.chains.clone() {
                        flat.push(x[d] * eta[m].conj());
                    }
                }
            }
            flat
        })
        .collect();
    let f = products.len();
    let len = products.first().map_or(0, Vec::len);
    let mean_of = |pick: &mut dyn FnMut() -> usize| {
        let mut acc = vec![C64::new(0.0, 0.0); len];
        for _ in 0..f {
            for (a, p) in acc.iter_mut().zip(&products[pick()]) {
                *a += p;
            }
        }
        acc.iter_mut().for_each(|a| *a /= f as f64);
        acc
    };
    let mut next = 0;
    let mean = mean_of(&mut || {
        next += 1;
        next - 1
    });
    let mut spread = 0.0;
    for _ in 0..n_boot {
        let boot = mean_of(&mut || rng.random_range(0..f));
        spread += boot.iter().zip(&mean).map(|(b, m)| (b - m).norm_sqr()).sum::<f64>();
    }
    let norm = libm::sqrt(mean.iter().map(|m| m.norm_sqr()).sum::<f64>());
    (norm, libm::sqrt(spread / n_boot.max(1) as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::rng::{complex_normal, stream, Stream};

    fn gaussian_frames(d: usize, n_t: usize, k: usize, frames: usize, f: impl Fn(&CVector) -> CVector) -> Vec<(CMatrix, CMatrix)> {
        let mut rng = stream(11, Stream::Bussgang, &[]);
        (0..frames)
            .map(|_| {
                let x = CMatrix::from_fn(d, k, |_, _| complex_normal(&mut rng));
                let mut y = CMatrix::zeros(n_t, k);
                for i in 0..k {
                    y.set_column(i, &f(&x.column(i).into_owned()));
                }
                (x, y)
            })
            .collect()
    }

    #[test]
    fn scalar_and_restricted_matrix_estimators_agree() {
        let frames = gaussian_frames(4, 4, 3, 50, |x| x.map(|v| v - v * v.norm_sqr() * 0.1));
        let mut digital = BussgangAccumulator::new(Architecture::FullyDigital, 4, 4, 3);
        for (x, y) in &frames {
            digital.observe(x, y).unwrap();
        }
        let md = digital.finish(1).unwrap();
        for i in 0..3 {
            for m in 0..4 {
                let (mut num, mut den) = (C64::new(0.0, 0.0), 0.0);
                for (x, y) in &frames {
                    num += y[(m, i)] * x[(m, i)].conj();
                    den += x[(m, i)].norm_sqr();
                }
                assert!((md.a[i][m][(0, 0)] - num / den).norm() < 1e-12);
            }
            let r = md.r_eta_matrix(i);
            for p in 0..4 {
                for q in 0..4 {
                    if p != q {
                        assert_eq!(r[(p, q)], C64::new(0.0, 0.0));
                    }
                }
            }
        }
    }

    #[test]
    fn wiener_gain_is_residual_minimizer() {
        let mix = CMatrix::from_fn(5, 2, |r, c| C64::new(0.3 * r as f64 - c as f64, 0.5 + c as f64));
        let frames = gaussian_frames(2, 5, 2, 80, |x| {
            let y = &mix * x;
            y.map(|v| v - v * v.norm_sqr() * 0.05)
        });
        let mut acc = BussgangAccumulator::new(Architecture::FullyConnected, 5, 2, 2);
        for (x, y) in &frames {
            acc.observe(x, y).unwrap();
        }
        let model = acc.finish(1).unwrap();
        let power = |a: &CMatrix| -> f64 {
            frames.iter().map(|(x, y)| (y.column(0) - a * x.column(0)).norm_squared()).sum()
        };
        let a = model.a_matrix(0);
        let base = power(&a);
        let mut rng = stream(1, Stream::Bussgang, &[9]);
        for _ in 0..20 {
            let pert = a.map(|v| v * (C64::new(1.0, 0.0) + complex_normal(&mut rng) * 0.01));
            assert!(power(&pert) >= base);
        }
        // Trace of R_eta equals the direct residual power per frame.
        let direct = base / frames.len() as f64;
        assert!((model.r_eta_matrix(0).trace().re - direct).abs() < 1e-9 * direct);
    }

    #[test]
    fn block_assembly_layout() {
        let v: Vec<CVector> = (0..3).map(|j| CVector::from_element(2, C64::new(j as f64 + 1.0, 0.0))).collect();
        let a = assemble_block_a(&v, 6).unwrap();
        for r in 0..6 {
            for c in 0..3 {
                let want = if r / 2 == c { C64::new(c as f64 + 1.0, 0.0) } else { C64::new(0.0, 0.0) };
                assert_eq!(a[(r, c)], want);
            }
        }
        assert!(assemble_block_a(&v, 7).is_err());
        let single = assemble_block_a(&v[..1], 2).unwrap();
        assert_eq!(single.column(0).into_owned(), v[0]);
    }

    #[test]
    fn too_few_frames() {
        let acc = BussgangAccumulator::new(Architecture::FullyDigital, 2, 2, 1);
        assert!(matches!(acc.finish(1), Err(Error::InsufficientFrames { .. })));
    }
}
