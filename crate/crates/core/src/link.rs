//! End-to-end transmit chain: precoding, OFDM, predistortion, analog
//! beamforming, amplifiers and the per-subcarrier receiver model.
//!
//! Frames are processed one OFDM body at a time. Before predistortion and
//! amplification each chain signal is extended cyclically by the combined
//! memory span on both sides, so the body comes out exactly as it would in
//! a continuous transmission with a cyclic prefix, and the channel can be
//! applied per subcarrier without approximation.
//!
//! Receiver normalization: user `u` observes on subcarrier `i`
//!
//! ```text
//! r = omega^H y_f / sqrt(mu) + nu,   nu ~ CN(0, N_o)
//! ```
//!
//! where `y_f` is the unitary DFT of the antenna signals. With a linear
//! amplifier of gain `g` and exact zero forcing this gives
//! `r = sqrt(c) g d + nu`, so the SNR grid is `E_s / N_o` seen through the
//! precoder's power normalization.

use alloc::{vec, vec::Vec};

use rand::Rng;

use crate::{
    beamformer::{design, zf_precoder, AnalogBeamformer, DigitalPrecoder},
    channel::{frequency_response, sample_user, CcmSet, ChannelRealization, FrequencyResponse},
    error::{Error, Result},
    linearizer::{dpd_train, DpdBank, TrainingChain, TrainingFrame, TrainingReport},
    math::{
        linalg::CMatrix,
        rng::{stream, Stream, StreamRng},
        C64,
    },
    pa_model::PaModel,
    scenario::{Compensation, GroupSlot, PaMode, Scenario},
    waveform::{Ofdm, Qam},
};

/// Realization-independent parts of a link.
#[derive(Clone, Debug)]
pub struct Link {
    pub scenario: Scenario,
    pub pa_mode: PaMode,
    pub compensation: Compensation,
    pub ofdm: Ofdm,
    pub ccm: CcmSet,
    pub beamformer: AnalogBeamformer,
    /// The amplifier actually used (the linearized model in linear mode).
    pub pa: PaModel,
    /// Input scaling that puts the mean per-antenna drive at the configured
    /// back-off from the 1 dB compression point.
    pub drive: f64,
    layout: Vec<GroupSlot>,
}

/// Everything that depends on one channel realization.
#[derive(Clone, Debug)]
pub struct LinkState {
    pub index: u64,
    pub realization: ChannelRealization,
    pub response: FrequencyResponse,
    pub precoder: DigitalPrecoder,
    pub dpd: Option<DpdBank>,
}

/// One transmitted frame.
#[derive(Clone, Debug)]
pub struct TxFrame {
    /// Transmitted symbols, `[user][subcarrier]`.
    pub symbols: Vec<Vec<C64>>,
    /// Unitary DFT of the chain inputs (before predistortion), chains x K.
    pub x_f: CMatrix,
    /// Unitary DFT of the amplifier outputs, antennas x K.
    pub y_f: CMatrix,
    /// Amplifier output bodies, one row per antenna.
    pub y_body: Vec<Vec<C64>>,
}

impl Link {
    /// `scenario` must already be configured for its architecture (see
    /// [`Scenario::with_architecture`]). `model` is the nonlinear amplifier;
    /// linear mode uses its small-signal gain.
    pub fn new(scenario: &Scenario, pa_mode: PaMode, compensation: Compensation, model: &PaModel) -> Result<Link> {
        let (ccm, sub) = Link::statistics(scenario)?;
        Link::with_statistics(scenario, pa_mode, compensation, model, ccm, sub)
    }

    /// Channel statistics on the full array and, for partially connected
    /// arrays, on one subarray.
    pub fn statistics(scenario: &Scenario) -> Result<(CcmSet, Option<CcmSet>)> {
        scenario.validate()?;
        let ccm = CcmSet::build(scenario, scenario.array.n_antennas)?;
        let sub = match scenario.array.subarray_size {
            Some(ns) if scenario.array.architecture.is_partial() => Some(CcmSet::build(scenario, ns)?),
            _ => None,
        };
        Ok((ccm, sub))
    }

    /// Like [`Link::new`] with precomputed (for example cached) statistics.
    pub fn with_statistics(
        scenario: &Scenario,
        pa_mode: PaMode,
        compensation: Compensation,
        model: &PaModel,
        ccm: CcmSet,
        sub: Option<CcmSet>,
    ) -> Result<Link> {
        scenario.validate()?;
        let n_t = scenario.array.n_antennas;
        if ccm.n_antennas != n_t {
            return Err(Error::Length { expected: n_t, got: ccm.n_antennas });
        }
        let beamformer = design(scenario, &ccm, sub.as_ref())?;
        let p1 = model
            .compression_point()
            .ok_or_else(|| Error::PaModel("model has no 1 dB compression point".into()))?;
        let target = p1 * p1 * libm::pow(10.0, -scenario.pa.back_off_db / 10.0);
        let drive = libm::sqrt(target * n_t as f64 / scenario.energy);
        let pa = match pa_mode {
            PaMode::Linear => model.linearized(),
            PaMode::Nonlinear => model.clone(),
        };
        Ok(Link {
            layout: scenario.layout(),
            scenario: scenario.clone(),
            pa_mode,
            compensation,
            ofdm: Ofdm::new(&scenario.waveform),
            ccm,
            beamformer,
            pa,
            drive,
        })
    }

    pub fn layout(&self) -> &[GroupSlot] {
        &self.layout
    }

    pub fn n_users(&self) -> usize {
        self.ccm.users.len()
    }

    pub fn n_active(&self) -> usize {
        self.ofdm.n_active()
    }

    pub fn oversampling(&self) -> f64 {
        self.scenario.waveform.oversampling()
    }

    /// Precoding group of each user.
    pub fn user_slot(&self, u: usize) -> usize {
        self.layout.iter().position(|s| s.users.contains(&u)).expect("user in layout")
    }

    fn seed(&self) -> u64 {
        self.scenario.seed
    }

    /// Channel realization `index`; each user draws from its own stream.
    pub fn realize(&self, index: u64) -> Result<LinkState> {
        let users = (0..self.n_users())
            .map(|u| {
                let mut rng = stream(self.seed(), Stream::Channel, &[index, u as u64]);
                sample_user(&self.ccm.users[u], &self.scenario.waveform, &mut rng)
            })
            .collect();
        self.state_from(index, ChannelRealization { users })
    }

    /// Same as `base` for user `user`; every other user's channel is redrawn
    /// (draw 0 returns `base` unchanged).
    pub fn conditional(&self, base: &LinkState, user: usize, draw: u64) -> Result<LinkState> {
        if draw == 0 {
            return Ok(base.clone());
        }
        let users = (0..self.n_users())
            .map(|v| {
                if v == user {
                    return base.realization.users[v].clone();
                }
                let mut rng = stream(self.seed(), Stream::Conditional, &[base.index, user as u64, draw, v as u64]);
                sample_user(&self.ccm.users[v], &self.scenario.waveform, &mut rng)
            })
            .collect();
        self.state_from(base.index, ChannelRealization { users })
    }

    pub fn state_from(&self, index: u64, realization: ChannelRealization) -> Result<LinkState> {
        let response = frequency_response(&realization, &self.scenario.waveform)?;
        let precoder = zf_precoder(
            &self.beamformer,
            &response,
            self.scenario.analysis.regularization,
            self.scenario.energy,
        )?;
        Ok(LinkState { index, realization, response, precoder, dpd: None })
    }

    /// Fresh predistorters with output limiters that keep each chain's
    /// largest beam weight inside the amplifier's drive range.
    pub fn new_dpd(&self) -> DpdBank {
        let cfg = &self.scenario.dpd;
        let mut bank = DpdBank::identity(self.beamformer.n_chains(), cfg.memory, cfg.order);
        if let Some(lim) = self.pa.input_limit {
            for d in 0..bank.chains.len() {
                bank.output_limit[d] = Some(lim / (self.drive * self.beamformer.peak_weight(d)));
            }
        }
        bank
    }

    /// Trains predistorters for `state` on payload drawn from
    /// `(seed, DpdTraining, path)` and stores them in the state.
    pub fn train_dpd(&self, state: &mut LinkState, path: &[u64]) -> Result<TrainingReport> {
        self.train_from(state, self.new_dpd(), self.scenario.dpd.n_blocks, path)
    }

    /// Adapts an already trained bank to `state` with `refine_blocks`
    /// further blocks; used for conditional channel draws, which only
    /// change the precoder and hence the drive statistics.
    pub fn refine_dpd(&self, state: &mut LinkState, init: &DpdBank, path: &[u64]) -> Result<TrainingReport> {
        self.train_from(state, init.clone(), self.scenario.dpd.refine_blocks, path)
    }

    fn train_from(&self, state: &mut LinkState, mut bank: DpdBank, blocks: usize, path: &[u64]) -> Result<TrainingReport> {
        let cfg = &self.scenario.dpd;
        let qam = Qam::new(self.scenario.waveform.mod_order)?;
        let mut trainer = Trainer {
            link: self,
            state,
            qam,
            rng: stream(self.seed(), Stream::DpdTraining, path),
            guard: bank.span() + self.pa.poly.memory() - 1,
        };
        let report = dpd_train(&mut bank, &mut trainer, cfg.step, blocks, cfg.block_len)?;
        state.dpd = Some(bank);
        Ok(report)
    }

    /// Uniform random symbols, `[user][subcarrier]` as constellation indices.
    pub fn draw_indices<R: Rng + ?Sized>(&self, qam: &Qam, rng: &mut R) -> Vec<Vec<usize>> {
        (0..self.n_users())
            .map(|_| (0..self.n_active()).map(|_| rng.random_range(0..qam.order())).collect())
            .collect()
    }

    /// Chain-domain frequency vectors: `[chain][subcarrier]`.
    fn precode(&self, state: &LinkState, symbols: &[Vec<C64>]) -> Vec<Vec<C64>> {
        let k = self.n_active();
        let d = self.beamformer.n_chains();
        let mut out = vec![vec![C64::new(0.0, 0.0); k]; d];
        let mut col = vec![C64::new(0.0, 0.0); symbols.len()];
        for i in 0..k {
            for (u, s) in symbols.iter().enumerate() {
                col[u] = s[i];
            }
            let x = state.precoder.apply(&self.layout, i, &col);
            for c in 0..d {
                out[c][i] = x[c];
            }
        }
        out
    }

    fn extend(body: &[C64], guard: usize) -> Vec<C64> {
        let n = body.len();
        let mut ext = Vec::with_capacity(n + 2 * guard);
        for j in 0..guard {
            ext.push(body[(n - guard % n + j) % n]);
        }
        ext.extend_from_slice(body);
        for j in 0..guard {
            ext.push(body[j % n]);
        }
        ext
    }

    /// Predistortion (if any), beamforming and amplification of extended
    /// chain signals; returns extended antenna signals.
    fn amplify(&self, dpd: Option<&DpdBank>, x_ext: &[Vec<C64>]) -> Vec<Vec<C64>> {
        let xhat = match dpd {
            Some(bank) => bank.apply(x_ext),
            None => x_ext.to_vec(),
        };
        self.radiate(&xhat)
    }

    fn radiate(&self, xhat: &[Vec<C64>]) -> Vec<Vec<C64>> {
        let s = self.drive;
        self.beamformer
            .apply_rows(xhat)
            .into_iter()
            .map(|row| {
                let driven: Vec<C64> = row.iter().map(|v| v * s).collect();
                self.pa.apply(&driven).into_iter().map(|v| v / s).collect()
            })
            .collect()
    }

    fn guard(&self, dpd: Option<&DpdBank>) -> usize {
        dpd.map_or(0, DpdBank::span) + self.pa.poly.memory() - 1
    }

    pub fn transmit(&self, state: &LinkState, symbols: &[Vec<C64>]) -> Result<TxFrame> {
        let dpd = match self.compensation {
            Compensation::Dpd => state.dpd.as_ref(),
            _ => None,
        };
        let guard = self.guard(dpd);
        let n = self.ofdm.fft_size();
        let freq = self.precode(state, symbols);
        let sqrt_mu = libm::sqrt(self.oversampling());
        let k = self.n_active();
        let x_f = CMatrix::from_fn(freq.len(), k, |d, i| freq[d][i] * sqrt_mu);
        let x_ext: Vec<Vec<C64>> = freq
            .iter()
            .map(|f| self.ofdm.synthesize(f).map(|b| Self::extend(&b, guard)))
            .collect::<Result<_>>()?;
        let y_ext = self.amplify(dpd, &x_ext);
        let y_body: Vec<Vec<C64>> = y_ext.into_iter().map(|r| r[guard..guard + n].to_vec()).collect();
        let mut y_f = CMatrix::zeros(y_body.len(), k);
        for (m, row) in y_body.iter().enumerate() {
            let spec = self.ofdm.analyze(row)?;
            for i in 0..k {
                y_f[(m, i)] = spec[i];
            }
        }
        Ok(TxFrame { symbols: symbols.to_vec(), x_f, y_f, y_body })
    }

    /// Noiseless observations `omega^H y_f / sqrt(mu)`, `[user][subcarrier]`.
    pub fn receive(&self, state: &LinkState, frame: &TxFrame) -> Vec<Vec<C64>> {
        let scale = 1.0 / libm::sqrt(self.oversampling());
        state
            .response
            .omega
            .iter()
            .map(|per_bin| {
                per_bin
                    .iter()
                    .enumerate()
                    .map(|(i, w)| w.dotc(&frame.y_f.column(i)) * scale)
                    .collect()
            })
            .collect()
    }

    /// Draws a frame of random symbols and transmits it.
    pub fn random_frame<R: Rng + ?Sized>(&self, state: &LinkState, qam: &Qam, rng: &mut R) -> Result<(Vec<Vec<usize>>, TxFrame)> {
        let idx = self.draw_indices(qam, rng);
        let symbols: Vec<Vec<C64>> = idx.iter().map(|u| u.iter().map(|&s| qam.symbol(s)).collect()).collect();
        let frame = self.transmit(state, &symbols)?;
        Ok((idx, frame))
    }
}

struct Trainer<'a> {
    link: &'a Link,
    state: &'a LinkState,
    qam: Qam,
    rng: StreamRng,
    guard: usize,
}

impl TrainingChain for Trainer<'_> {
    fn next_frame(&mut self) -> TrainingFrame {
        let idx = self.link.draw_indices(&self.qam, &mut self.rng);
        let symbols: Vec<Vec<C64>> = idx.iter().map(|u| u.iter().map(|&s| self.qam.symbol(s)).collect()).collect();
        let freq = self.link.precode(self.state, &symbols);
        let x = freq
            .iter()
            .map(|f| Link::extend(&self.link.ofdm.synthesize(f).expect("subcarrier count"), self.guard))
            .collect();
        let n = self.link.ofdm.fft_size();
        TrainingFrame { x, body: self.guard..self.guard + n }
    }

    fn transmit(&self, xhat: &[Vec<C64>]) -> Vec<Vec<C64>> {
        self.link.radiate(xhat)
    }

    fn anti_beamformer(&self) -> &CMatrix {
        &self.link.beamformer.anti
    }

    fn target_gain(&self) -> C64 {
        self.link.pa.small_signal_gain()
    }
}
