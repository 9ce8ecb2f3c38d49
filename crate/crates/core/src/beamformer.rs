//! Analog beamformers for the four array architectures and the
//! per-subcarrier regularized zero-forcing digital precoder.

use alloc::{vec, vec::Vec};

use crate::{
    channel::{steering_vector, CcmSet, FrequencyResponse},
    error::{Error, Result},
    math::{
        linalg::{fix_phase, generalized_eig, hermitian_eig, inverse_hpd, pinv_tall, CMatrix, CVector, LinalgError},
        C64,
    },
    scenario::{Architecture, GroupSlot, Scenario},
};

/// `B` (antennas x chains) with its per-group pseudo-inverse `B_ab`.
#[derive(Clone, Debug)]
pub struct AnalogBeamformer {
    pub architecture: Architecture,
    pub matrix: CMatrix,
    /// Stacked per-group pseudo-inverses (chains x antennas).
    pub anti: CMatrix,
    pub layout: Vec<GroupSlot>,
    /// Generalized eigenvalue behind each chain's beam (GEB designs only).
    pub eigenvalues: Vec<f64>,
    support: Vec<Vec<(usize, C64)>>,
}

impl AnalogBeamformer {
    fn from_matrix(
        architecture: Architecture,
        matrix: CMatrix,
        layout: Vec<GroupSlot>,
        eigenvalues: Vec<f64>,
    ) -> Result<Self> {
        let n_t = matrix.nrows();
        let mut anti = CMatrix::zeros(matrix.ncols(), n_t);
        for slot in &layout {
            let block = matrix.columns(slot.chains.start, slot.chains.len()).into_owned();
            let pinv = pinv_tall(&block)?;
            anti.rows_mut(slot.chains.start, slot.chains.len()).copy_from(&pinv);
        }
        let support = (0..matrix.ncols())
            .map(|d| (0..n_t).filter(|&m| matrix[(m, d)] != C64::new(0.0, 0.0)).map(|m| (m, matrix[(m, d)])).collect())
            .collect();
        Ok(AnalogBeamformer { architecture, matrix, anti, layout, eigenvalues, support })
    }

    pub fn n_antennas(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn n_chains(&self) -> usize {
        self.matrix.ncols()
    }

    /// Columns of group `g`.
    pub fn block(&self, g: usize) -> CMatrix {
        let c = &self.layout[g].chains;
        self.matrix.columns(c.start, c.len()).into_owned()
    }

    /// Non-zero entries `(antenna, coefficient)` of chain `d`'s beam.
    pub fn support(&self, d: usize) -> &[(usize, C64)] {
        &self.support[d]
    }

    /// Maps chain-domain time signals to antenna-domain signals, `B x`.
    pub fn apply_rows(&self, chains: &[Vec<C64>]) -> Vec<Vec<C64>> {
        let len = chains.first().map_or(0, Vec::len);
        if self.architecture == Architecture::FullyDigital {
            return chains.to_vec();
        }
        let mut out = vec![vec![C64::new(0.0, 0.0); len]; self.n_antennas()];
        for (d, x) in chains.iter().enumerate() {
            for &(m, b) in &self.support[d] {
                for (o, v) in out[m].iter_mut().zip(x) {
                    *o += b * v;
                }
            }
        }
        out
    }

    /// Largest beam coefficient magnitude of chain `d`.
    pub fn peak_weight(&self, d: usize) -> f64 {
        self.support[d].iter().map(|(_, b)| b.norm()).fold(0.0, f64::max)
    }

    /// `max |B_ab B - I|`, the leakage between chains after anti-beamforming.
    pub fn leakage(&self) -> f64 {
        let p = &self.anti * &self.matrix;
        let d = p.nrows();
        (0..d)
            .flat_map(|r| (0..d).map(move |c| (r, c)))
            .map(|(r, c)| (p[(r, c)] - if r == c { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) }).norm())
            .fold(0.0, f64::max)
    }
}

/// `B = I`: every antenna has its own chain.
pub fn fully_digital(scenario: &Scenario) -> Result<AnalogBeamformer> {
    let n = scenario.array.n_antennas;
    AnalogBeamformer::from_matrix(Architecture::FullyDigital, CMatrix::identity(n, n), scenario.layout(), Vec::new())
}

/// Each group takes the `D_g` dominant generalized eigenvectors of
/// `(R_sum^(g), R_sum)`: beams that maximize power toward the group
/// relative to everything else, victims and noise included.
pub fn geb_fully_connected(scenario: &Scenario, stats: &CcmSet) -> Result<AnalogBeamformer> {
    let n = scenario.array.n_antennas;
    let layout = scenario.layout();
    let r_sum = stats.r_sum(scenario.design_noise());
    let mut matrix = CMatrix::zeros(n, scenario.array.n_rf_chains);
    let mut eigenvalues = vec![0.0; scenario.array.n_rf_chains];
    for (g, slot) in layout.iter().enumerate() {
        let (values, vectors) = generalized_eig(&stats.r_sum_group(g), &r_sum)?;
        for (j, d) in slot.chains.clone().enumerate() {
            let mut v = vectors.column(j).into_owned();
            fix_phase(&mut v);
            matrix.set_column(d, &v);
            eigenvalues[d] = values[j];
        }
    }
    AnalogBeamformer::from_matrix(Architecture::FullyConnected, matrix, layout, eigenvalues)
}

/// Block-diagonal beamformer whose `j`-th chain in group `g` carries the
/// `j`-th dominant generalized eigenvector of the subarray covariances.
/// `sub` must be built on the `N_s`-element subarray.
pub fn geb_partial(scenario: &Scenario, sub: &CcmSet) -> Result<AnalogBeamformer> {
    let ns = subarray_size(scenario)?;
    let layout = scenario.layout();
    let r_sum = sub.r_sum(scenario.design_noise());
    let mut matrix = CMatrix::zeros(scenario.array.n_antennas, scenario.array.n_rf_chains);
    let mut eigenvalues = vec![0.0; scenario.array.n_rf_chains];
    for (g, slot) in layout.iter().enumerate() {
        let (values, vectors) = generalized_eig(&sub.r_sum_group(g), &r_sum)?;
        for (j, d) in slot.chains.clone().enumerate() {
            let mut v = vectors.column(j.min(ns - 1)).into_owned();
            fix_phase(&mut v);
            matrix.view_mut((d * ns, d), (ns, 1)).copy_from(&v);
            eigenvalues[d] = values[j.min(ns - 1)];
        }
    }
    AnalogBeamformer::from_matrix(Architecture::PartialGeb, matrix, layout, eigenvalues)
}

/// Block-diagonal beamformer steering chain `j` of group `g` at the strongest
/// path of the group's user `j mod U_g`, ignoring other groups.
pub fn dft_partial(scenario: &Scenario) -> Result<AnalogBeamformer> {
    let ns = subarray_size(scenario)?;
    let layout = scenario.layout();
    let mut matrix = CMatrix::zeros(scenario.array.n_antennas, scenario.array.n_rf_chains);
    for (g, slot) in layout.iter().enumerate() {
        let users = &scenario.groups[g].users;
        for (j, d) in slot.chains.clone().enumerate() {
            let user = &users[j % users.len()];
            let angle = user.mpcs[user.strongest_mpc()].center_deg.to_radians();
            matrix.view_mut((d * ns, d), (ns, 1)).copy_from(&steering_vector(angle, ns));
        }
    }
    AnalogBeamformer::from_matrix(Architecture::PartialDft, matrix, layout, Vec::new())
}

fn subarray_size(scenario: &Scenario) -> Result<usize> {
    scenario
        .array
        .subarray_size
        .ok_or_else(|| Error::validation("array.subarray_size", "required for partially connected arrays"))
}

/// Builds the analog beamformer for the scenario's architecture. `full` is
/// built on the whole array; `sub` on one subarray (only used by the
/// partially connected GEB design).
pub fn design(scenario: &Scenario, full: &CcmSet, sub: Option<&CcmSet>) -> Result<AnalogBeamformer> {
    match scenario.array.architecture {
        Architecture::FullyDigital => fully_digital(scenario),
        Architecture::FullyConnected => geb_fully_connected(scenario, full),
        Architecture::PartialGeb => {
            let sub = sub.ok_or_else(|| Error::validation("array.subarray_size", "subarray statistics missing"))?;
            geb_partial(scenario, sub)
        }
        Architecture::PartialDft => dft_partial(scenario),
    }
}

/// Regularized zero-forcing precoders of one group on every subcarrier and
/// the group's power scale.
#[derive(Clone, Debug)]
pub struct GroupPrecoder {
    /// `W_k` (group chains x group users) per active subcarrier.
    pub w: Vec<CMatrix>,
    /// `c^(g)`.
    pub scale: f64,
}

#[derive(Clone, Debug)]
pub struct DigitalPrecoder {
    pub groups: Vec<GroupPrecoder>,
}

impl DigitalPrecoder {
    /// Chain-domain vector on subcarrier `i` for the symbols `d` of all
    /// users: group `g`'s chains carry `sqrt(c^(g)) W_i^(g) d^(g)`.
    pub fn apply(&self, layout: &[GroupSlot], i: usize, d: &[C64]) -> CVector {
        let n = layout.last().map_or(0, |s| s.chains.end);
        let mut x = CVector::zeros(n);
        for (slot, gp) in layout.iter().zip(&self.groups) {
            let dg = CVector::from_column_slice(&d[slot.users.clone()]);
            let xg = &gp.w[i] * dg * C64::new(libm::sqrt(gp.scale), 0.0);
            x.rows_mut(slot.chains.start, slot.chains.len()).copy_from(&xg);
        }
        x
    }

    /// Average radiated power `(1/K) sum_k sum_g c^(g) ||B^(g) W_k^(g)||_F^2`.
    pub fn average_power(&self, beamformer: &AnalogBeamformer) -> f64 {
        self.groups
            .iter()
            .enumerate()
            .map(|(g, gp)| gp.scale * group_power(&beamformer.block(g), &gp.w))
            .sum()
    }
}

fn group_power(block: &CMatrix, w: &[CMatrix]) -> f64 {
    w.iter().map(|wk| (block * wk).norm_squared()).sum::<f64>() / w.len() as f64
}

/// `W = H (H^H H + delta I)^{-1}` for one effective channel `H`
/// (chains x users).
pub fn rzf(h: &CMatrix, delta: f64) -> Result<CMatrix> {
    let u = h.ncols();
    let gram = h.adjoint() * h;
    if delta == 0.0 {
        let (values, _) = hermitian_eig(&gram);
        let max = values[0];
        if !(max > 0.0) || values[u - 1] <= 1e-12 * max {
            return Err(LinalgError::Singular.into());
        }
    }
    let loaded = gram + CMatrix::identity(u, u) * C64::new(delta, 0.0);
    Ok(h * inverse_hpd(&loaded).map_err(|_| LinalgError::Singular)?)
}

/// Effective channel `B^(g)H Omega_i^(g)` of group `g` on subcarrier `i`.
pub fn effective_channel(beamformer: &AnalogBeamformer, response: &FrequencyResponse, g: usize, i: usize) -> CMatrix {
    let slot = &beamformer.layout[g];
    let omega = response.matrix(slot.users.clone(), i);
    beamformer.block(g).adjoint() * omega
}

/// Per-group RZF precoders with `delta = regularization * tr(H^H H) / U_g`
/// and power scales `c^(g) = E_s / (G P^(g))`.
pub fn zf_precoder(
    beamformer: &AnalogBeamformer,
    response: &FrequencyResponse,
    regularization: f64,
    energy: f64,
) -> Result<DigitalPrecoder> {
    let n_groups = beamformer.layout.len();
    let k = response.bins.len();
    let mut groups = Vec::with_capacity(n_groups);
    for (g, slot) in beamformer.layout.iter().enumerate() {
        let block = beamformer.block(g);
        let mut w = Vec::with_capacity(k);
        for i in 0..k {
            let h = effective_channel(beamformer, response, g, i);
            let delta = regularization * h.norm_squared() / slot.users.len() as f64;
            w.push(rzf(&h, delta)?);
        }
        let power = group_power(&block, &w);
        groups.push(GroupPrecoder { w, scale: energy / (n_groups as f64 * power) });
    }
    Ok(DigitalPrecoder { groups })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{channel::frequency_response, channel::sample_realization, math::rng::{stream, Stream}};

    fn desk(arch: Architecture) -> Scenario {
        Scenario::desk().with_architecture(arch).unwrap()
    }

    #[test]
    fn pseudo_inverse_identity_all_architectures() {
        for arch in Architecture::ALL {
            let s = desk(arch);
            let full = CcmSet::build(&s, s.array.n_antennas).unwrap();
            let sub = s.array.subarray_size.map(|n| CcmSet::build(&s, n).unwrap());
            let b = design(&s, &full, sub.as_ref()).unwrap();
            for (g, slot) in b.layout.iter().enumerate() {
                let pinv = b.anti.rows(slot.chains.start, slot.chains.len()).into_owned();
                let prod = pinv * b.block(g);
                assert!((prod - CMatrix::identity(slot.chains.len(), slot.chains.len())).norm() < 1e-10);
            }
            for d in 0..b.n_chains() {
                assert!((b.matrix.column(d).norm() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn dft_blocks_are_phase_only() {
        let s = desk(Architecture::PartialDft);
        let b = dft_partial(&s).unwrap();
        let ns = s.array.subarray_size.unwrap();
        for d in 0..b.n_chains() {
            assert_eq!(b.support(d).len(), ns);
            for &(m, v) in b.support(d) {
                assert_eq!(m / ns, d);
                assert!((v.norm() - 1.0 / libm::sqrt(ns as f64)).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn zf_inverts_effective_channel_and_meets_power() {
        for arch in Architecture::ALL {
            let s = desk(arch);
            let full = CcmSet::build(&s, s.array.n_antennas).unwrap();
            let sub = s.array.subarray_size.map(|n| CcmSet::build(&s, n).unwrap());
            let b = design(&s, &full, sub.as_ref()).unwrap();
            let real = sample_realization(&full, &s.waveform, &mut stream(1, Stream::Channel, &[]));
            let resp = frequency_response(&real, &s.waveform).unwrap();
            let p = zf_precoder(&b, &resp, 0.0, s.energy).unwrap();
            for (g, gp) in p.groups.iter().enumerate() {
                for i in [0, 17, 127] {
                    let h = effective_channel(&b, &resp, g, i);
                    let id = h.adjoint() * &gp.w[i];
                    let u = id.nrows();
                    assert!((id - CMatrix::identity(u, u)).norm() < 1e-8);
                }
            }
            assert!((p.average_power(&b) - s.energy).abs() < 1e-9 * s.energy);
        }
    }

    #[test]
    fn heavy_regularization_tends_to_matched_filter() {
        let h = CMatrix::from_fn(4, 2, |r, c| C64::new(1.0 + r as f64, c as f64 - 0.5 * r as f64));
        let w = rzf(&h, 1e9).unwrap();
        for c in 0..2 {
            let a = w.column(c);
            let b = h.column(c);
            let cos = a.dotc(&b).norm() / (a.norm() * b.norm());
            assert!(cos > 1.0 - 1e-6);
        }
    }

    #[test]
    fn rank_deficient_gram_is_singular() {
        let h = CMatrix::from_fn(4, 2, |r, _| C64::new(r as f64, 1.0));
        assert!(matches!(rzf(&h, 0.0), Err(Error::Linalg(LinalgError::Singular))));
        assert!(rzf(&h, 1e-3).is_ok());
    }
}
