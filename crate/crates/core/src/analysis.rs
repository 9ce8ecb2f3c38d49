//! Per-realization experiment drivers on top of [`Link`]: Bussgang
//! estimation, conditional-expectation SINR, GMI, Monte Carlo BER and
//! spatial spectra.
//!
//! Every driver works on one channel realization and draws its randomness
//! from streams keyed by the realization index, so realizations can be
//! evaluated in any order or in parallel with identical results. SNR points
//! share data and unit-variance noise draws (common random numbers); only
//! the noise scale changes.
//!
//! SNR is the received SNR per subcarrier: for user `u` the noise variance
//! is `N_o = c^(g) |g|^2 / SNR`, where `c^(g) |g|^2` is the desired-signal
//! power the user would receive through a linear amplifier of small-signal
//! gain `g`. The noise level is therefore the same for every compensation
//! mode and amplifier model of a given realization.

use alloc::{vec, vec::Vec};

use crate::{
    bussgang::{BussgangAccumulator, BussgangModel},
    error::{Error, Result},
    link::{Link, LinkState, TxFrame},
    linearizer::{posteq_estimate, single_gain_estimate},
    math::{
        db_to_lin,
        rng::{complex_normal, stream, Stream, StreamRng},
        C64,
    },
    metrics::{ber_qam, count_bit_errors, gmi_term, sinr_terms, BerCounter, GmiAccumulator, SinrTerms, SpectrumAccumulator},
    scenario::Compensation,
    waveform::Qam,
};

// Purpose tags in the data and noise stream paths.
const PILOTS: u64 = 0;
const PAYLOAD: u64 = 1;
const GMI: u64 = 2;
const SPECTRA: u64 = 3;

/// Desired-signal power of user `u` behind a linear amplifier.
pub fn reference_power(link: &Link, state: &LinkState, u: usize) -> f64 {
    state.precoder.groups[link.user_slot(u)].scale * link.pa.small_signal_gain().norm_sqr()
}

/// Noise variance of user `u` at an SNR point.
pub fn noise_variance(link: &Link, state: &LinkState, u: usize, snr_db: f64) -> f64 {
    reference_power(link, state, u) / db_to_lin(snr_db)
}

/// Channel realization `index` with predistorters trained when the link
/// compensates with DPD.
pub fn prepare(link: &Link, index: u64) -> Result<LinkState> {
    let mut state = link.realize(index)?;
    if link.compensation == Compensation::Dpd {
        link.train_dpd(&mut state, &[index, 0, 0])?;
    }
    Ok(state)
}

/// Conditional draw `draw` for `user` (other users redrawn), retrained.
pub fn prepare_conditional(link: &Link, base: &LinkState, user: usize, draw: u64) -> Result<LinkState> {
    if draw == 0 {
        return Ok(base.clone());
    }
    let mut state = link.conditional(base, user, draw)?;
    if link.compensation == Compensation::Dpd {
        let path = [base.index, user as u64 + 1, draw];
        match &base.dpd {
            Some(bank) => link.refine_dpd(&mut state, bank, &path)?,
            None => link.train_dpd(&mut state, &path)?,
        };
    }
    Ok(state)
}

/// Bussgang model of the transmitter for `state`, from `frames` frames of
/// payload drawn from `(seed, Bussgang, path)`.
pub fn estimate_bussgang(link: &Link, state: &LinkState, frames: usize, path: &[u64]) -> Result<BussgangModel> {
    let qam = Qam::new(link.scenario.waveform.mod_order)?;
    let mut rng = stream(link.scenario.seed, Stream::Bussgang, path);
    let bf = &link.beamformer;
    let mut acc = BussgangAccumulator::new(bf.architecture, bf.n_antennas(), bf.n_chains(), link.n_active());
    for _ in 0..frames {
        let (_, f) = link.random_frame(state, &qam, &mut rng)?;
        acc.observe(&f.x_f, &f.y_f)?;
    }
    acc.finish(frames)
}

/// SINR terms of one realization, `[user][subcarrier]`, with the users'
/// reference powers for setting the noise level.
#[derive(Clone, Debug, PartialEq)]
pub struct RealizationTerms {
    pub terms: Vec<Vec<SinrTerms>>,
    pub reference: Vec<f64>,
}

/// Bussgang model of the base state, shared by all users' draw 0.
pub fn base_model(link: &Link, base: &LinkState) -> Result<BussgangModel> {
    estimate_bussgang(link, base, link.scenario.analysis.bussgang_frames, &[base.index, 0, 0])
}

/// Terms of user `u` for conditional draw `draw` (draw 0 is the base
/// state and uses `shared`).
pub fn conditional_terms(link: &Link, base: &LinkState, shared: &BussgangModel, u: usize, draw: u64) -> Result<Vec<SinrTerms>> {
    let mu = link.oversampling();
    let layout = link.layout();
    let frames = link.scenario.analysis.bussgang_frames;
    let owned;
    let (state, model) = if draw == 0 {
        (base, shared)
    } else {
        let st = prepare_conditional(link, base, u, draw)?;
        let m = estimate_bussgang(link, &st, frames, &[base.index, u as u64 + 1, draw])?;
        owned = (st, m);
        (&owned.0, &owned.1)
    };
    Ok((0..link.n_active()).map(|i| sinr_terms(model, &state.response, &state.precoder, layout, mu, u, i)).collect())
}

/// Averages per-draw terms; numerator and denominator terms are averaged
/// separately.
pub fn average_terms(draws: &[Vec<SinrTerms>]) -> Vec<SinrTerms> {
    let k = draws.first().map_or(0, Vec::len);
    let mut acc = vec![SinrTerms::default(); k];
    for d in draws {
        for (a, t) in acc.iter_mut().zip(d) {
            a.add(t);
        }
    }
    acc.iter_mut().for_each(|a| a.scale(1.0 / draws.len().max(1) as f64));
    acc
}

/// SINR terms for one realization, each user's averaged over the
/// conditional draws that keep its channel and redraw the others.
pub fn analytic_terms(link: &Link, base: &LinkState) -> Result<RealizationTerms> {
    analytic_terms_with(link, base, &base_model(link, base)?)
}

/// [`analytic_terms`] with a precomputed (for example cached) base model.
pub fn analytic_terms_with(link: &Link, base: &LinkState, shared: &BussgangModel) -> Result<RealizationTerms> {
    let draws = link.scenario.analysis.conditional_draws as u64;
    let terms = (0..link.n_users())
        .map(|u| {
            let per_draw = (0..draws).map(|d| conditional_terms(link, base, shared, u, d)).collect::<Result<Vec<_>>>()?;
            Ok(average_terms(&per_draw))
        })
        .collect::<Result<Vec<_>>>()?;
    let reference = (0..link.n_users()).map(|u| reference_power(link, base, u)).collect();
    Ok(RealizationTerms { terms, reference })
}

/// Analytical BER at an SNR point, averaged over realizations, users and
/// subcarriers.
pub fn analytic_ber(realizations: &[RealizationTerms], snr_db: f64, order: usize) -> f64 {
    let snr = db_to_lin(snr_db);
    let mut sum = 0.0;
    let mut n = 0usize;
    for r in realizations {
        for (per_bin, p) in r.terms.iter().zip(&r.reference) {
            for t in per_bin {
                sum += ber_qam(t.sinr(p / snr), order);
                n += 1;
            }
        }
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Received samples of one frame with their unit-variance noise draw.
struct Observation {
    sent: Vec<Vec<usize>>,
    clean: Vec<Vec<C64>>,
    noise: Vec<Vec<C64>>,
}

fn observe(link: &Link, state: &LinkState, qam: &Qam, data: &mut StreamRng, noise: &mut StreamRng) -> Result<Observation> {
    let (sent, frame): (Vec<Vec<usize>>, TxFrame) = link.random_frame(state, qam, data)?;
    let clean = link.receive(state, &frame);
    let noise = clean.iter().map(|row| row.iter().map(|_| complex_normal(noise)).collect()).collect();
    Ok(Observation { sent, clean, noise })
}

fn noisy(o: &Observation, u: usize, sigma: f64) -> Vec<C64> {
    o.clean[u].iter().zip(&o.noise[u]).map(|(c, z)| c + z * sigma).collect()
}

fn symbols(qam: &Qam, idx: &[usize]) -> Vec<C64> {
    idx.iter().map(|&s| qam.symbol(s)).collect()
}

/// Receiver gains `[user][subcarrier]` estimated from pilots: per
/// subcarrier with post-equalization, one gain per user otherwise.
fn pilot_gains(link: &Link, qam: &Qam, pilots: &[Observation], sigma: &[f64]) -> Result<Vec<Vec<C64>>> {
    (0..link.n_users())
        .map(|u| {
            let r: Vec<Vec<C64>> = pilots.iter().map(|o| noisy(o, u, sigma[u])).collect();
            let d: Vec<Vec<C64>> = pilots.iter().map(|o| symbols(qam, &o.sent[u])).collect();
            Ok(match link.compensation {
                Compensation::PostEq => posteq_estimate(&r, &d)?.alpha,
                _ => vec![single_gain_estimate(&r, &d)?; link.n_active()],
            })
        })
        .collect()
}

/// Monte Carlo bit error counts for one realization at every SNR point.
///
/// Each point runs until it has `ceil(min_errors / realizations)` errors or
/// the frame cap is reached. Payload frames are shared by all points.
pub fn monte_carlo_ber(link: &Link, state: &LinkState, snr_grid_db: &[f64]) -> Result<Vec<BerCounter>> {
    let an = &link.scenario.analysis;
    let seed = link.scenario.seed;
    let index = state.index;
    let qam = Qam::new(link.scenario.waveform.mod_order)?;
    let reals = link.scenario.n_channel_realizations.max(1) as u64;
    let target = an.ber_min_errors.div_ceil(reals);
    // sigmas[p][u]
    let sigmas: Vec<Vec<f64>> = snr_grid_db
        .iter()
        .map(|&s| (0..link.n_users()).map(|u| libm::sqrt(noise_variance(link, state, u, s))).collect())
        .collect();

    let mut pilot_data = stream(seed, Stream::Pilots, &[index]);
    let mut pilot_noise = stream(seed, Stream::Noise, &[index, PILOTS]);
    let pilots = (0..an.pilot_frames)
        .map(|_| observe(link, state, &qam, &mut pilot_data, &mut pilot_noise))
        .collect::<Result<Vec<_>>>()?;
    let gains = sigmas.iter().map(|s| pilot_gains(link, &qam, &pilots, s)).collect::<Result<Vec<_>>>()?;

    let mut data = stream(seed, Stream::Data, &[index, PAYLOAD]);
    let mut noise = stream(seed, Stream::Noise, &[index, PAYLOAD]);
    let mut counters = vec![BerCounter::default(); sigmas.len()];
    let bits = u64::from(qam.bits_per_symbol());
    for _ in 0..an.ber_frame_cap {
        if counters.iter().all(|c| c.errors >= target) {
            break;
        }
        let o = observe(link, state, &qam, &mut data, &mut noise)?;
        for (p, c) in counters.iter_mut().enumerate() {
            if c.errors >= target {
                continue;
            }
            for u in 0..link.n_users() {
                let eq: Vec<C64> = noisy(&o, u, sigmas[p][u]).iter().zip(&gains[p][u]).map(|(r, a)| r / a).collect();
                c.errors += count_bit_errors(&qam, &eq, &o.sent[u]);
                c.bits += bits * eq.len() as u64;
            }
        }
    }
    counters.iter_mut().for_each(|c| c.capped = c.errors < target);
    Ok(counters)
}

/// GMI accumulators for one realization at every SNR point.
///
/// The decoding metric's gain and variance come from the same ensemble:
/// per subcarrier with post-equalization, otherwise one gain per user with
/// a per-subcarrier variance.
pub fn gmi(link: &Link, state: &LinkState, snr_grid_db: &[f64]) -> Result<Vec<GmiAccumulator>> {
    let an = &link.scenario.analysis;
    let seed = link.scenario.seed;
    let qam = Qam::new(an.gmi_mod_order)?;
    let mut data = stream(seed, Stream::Data, &[state.index, GMI]);
    let mut noise = stream(seed, Stream::Noise, &[state.index, GMI]);
    let obs = (0..an.gmi_frames)
        .map(|_| observe(link, state, &qam, &mut data, &mut noise))
        .collect::<Result<Vec<_>>>()?;
    if obs.is_empty() {
        return Err(Error::InsufficientFrames { needed: 1, got: 0 });
    }
    let k = link.n_active();
    let mut out = Vec::with_capacity(snr_grid_db.len());
    for &snr in snr_grid_db {
        let mut acc = GmiAccumulator::default();
        for u in 0..link.n_users() {
            let sigma = libm::sqrt(noise_variance(link, state, u, snr));
            let r: Vec<Vec<C64>> = obs.iter().map(|o| noisy(o, u, sigma)).collect();
            let d: Vec<Vec<C64>> = obs.iter().map(|o| symbols(&qam, &o.sent[u])).collect();
            let alpha = match link.compensation {
                Compensation::PostEq => posteq_estimate(&r, &d)?.alpha,
                _ => vec![single_gain_estimate(&r, &d)?; k],
            };
            for i in 0..k {
                let var = r.iter().zip(&d).map(|(rf, df)| (rf[i] - alpha[i] * df[i]).norm_sqr()).sum::<f64>()
                    / obs.len() as f64;
                for (f, o) in obs.iter().enumerate() {
                    acc.add(gmi_term(&qam, r[f][i], o.sent[u][i], alpha[i], var));
                }
            }
        }
        out.push(acc);
    }
    Ok(out)
}

/// Adds `psd_frames` payload frames of one realization to `acc`.
pub fn accumulate_spectra(link: &Link, state: &LinkState, acc: &mut SpectrumAccumulator) -> Result<()> {
    let qam = Qam::new(link.scenario.waveform.mod_order)?;
    let mut data = stream(link.scenario.seed, Stream::Data, &[state.index, SPECTRA]);
    for _ in 0..link.scenario.analysis.psd_frames {
        let (_, f) = link.random_frame(state, &qam, &mut data)?;
        acc.observe(&f.y_body)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{
        pa_model::PaModel,
        scenario::{Architecture, PaMode, Scenario},
    };

    fn link(arch: Architecture, pa: PaMode, comp: Compensation) -> Link {
        let mut s = Scenario::desk().with_architecture(arch).unwrap();
        s.analysis.conditional_draws = 2;
        s.analysis.bussgang_frames = 24;
        s.analysis.gmi_frames = 4;
        s.analysis.ber_frame_cap = 20;
        s.dpd.n_blocks = 3;
        s.dpd.block_len = 2048;
        Link::new(&s, pa, comp, &PaModel::reference()).unwrap()
    }

    #[test]
    fn noiseless_linear_chain_is_error_free() {
        let mut l = link(Architecture::FullyDigital, PaMode::Linear, Compensation::PostEq);
        l.scenario.analysis.regularization = 0.0;
        let st = prepare(&l, 0).unwrap();
        let c = monte_carlo_ber(&l, &st, &[300.0]).unwrap();
        assert_eq!(c[0].errors, 0);
        assert!(c[0].capped && c[0].bits > 0);
    }

    #[test]
    fn sinr_vanishes_with_noise_and_ber_is_bounded() {
        let l = link(Architecture::PartialGeb, PaMode::Nonlinear, Compensation::None);
        let st = prepare(&l, 0).unwrap();
        let t = analytic_terms(&l, &st).unwrap();
        let mut last = f64::INFINITY;
        for n_o in [1e-3, 1.0, 1e3, 1e9] {
            let s = t.terms[0][5].sinr(n_o);
            assert!(s < last);
            last = s;
        }
        assert!(last < 1e-6);
        let all = [t];
        for snr in [-10.0, 30.0] {
            let b = analytic_ber(&all, snr, 64);
            assert!((0.0..=0.5 + 1e-12).contains(&b));
        }
    }

    #[test]
    fn gmi_is_bounded_and_deterministic() {
        let l = link(Architecture::PartialDft, PaMode::Nonlinear, Compensation::None);
        let st = prepare(&l, 1).unwrap();
        let a = gmi(&l, &st, &[0.0, 20.0]).unwrap();
        let b = gmi(&l, &st, &[0.0, 20.0]).unwrap();
        assert_eq!(a, b);
        for g in &a {
            assert!(g.value() <= 8.0 + 1e-9);
        }
        assert!(a[1].value() >= a[0].value());
    }
}
