//! Scenario configuration: array, user groups, multipath sectors, waveform,
//! power amplifier operating point and analysis settings.
//!
//! Angles are stored in degrees (as they appear in configuration files);
//! the channel module converts them to radians once when it builds
//! covariance matrices. Path delays are given in symbol-rate samples.

use alloc::{format, string::String, vec, vec::Vec};
use core::{fmt, ops::Range, str::FromStr};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Architecture {
    FullyDigital,
    FullyConnected,
    PartialGeb,
    PartialDft,
}

impl Architecture {
    pub const ALL: [Architecture; 4] =
        [Architecture::FullyDigital, Architecture::FullyConnected, Architecture::PartialGeb, Architecture::PartialDft];

    pub fn name(self) -> &'static str {
        match self {
            Architecture::FullyDigital => "fully-digital",
            Architecture::FullyConnected => "fully-connected",
            Architecture::PartialGeb => "partial-geb",
            Architecture::PartialDft => "partial-dft",
        }
    }

    pub fn is_partial(self) -> bool {
        matches!(self, Architecture::PartialGeb | Architecture::PartialDft)
    }
}

/// How PA distortion is handled at the link level.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Compensation {
    /// Receiver uses one gain per user across all subcarriers.
    None,
    /// Receiver equalizes each subcarrier with its own Bussgang gain.
    PostEq,
    /// Per-chain digital predistortion; receiver uses one gain per user.
    Dpd,
}

impl Compensation {
    pub const ALL: [Compensation; 3] = [Compensation::None, Compensation::PostEq, Compensation::Dpd];

    pub fn name(self) -> &'static str {
        match self {
            Compensation::None => "none",
            Compensation::PostEq => "posteq",
            Compensation::Dpd => "dpd",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PaMode {
    /// Ideal amplifier with the small-signal gain of the configured model.
    Linear,
    Nonlinear,
}

impl PaMode {
    pub fn name(self) -> &'static str {
        match self {
            PaMode::Linear => "linear",
            PaMode::Nonlinear => "nonlinear",
        }
    }
}

macro_rules! impl_name_parse {
    ($t:ty, $($v:expr),+) => {
        impl fmt::Display for $t {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.name())
            }
        }

        impl FromStr for $t {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                [$($v),+]
                    .into_iter()
                    .find(|v| v.name() == s)
                    .ok_or_else(|| Error::validation(stringify!($t), format!("unknown value `{s}`")))
            }
        }
    };
}

impl_name_parse!(
    Architecture,
    Architecture::FullyDigital,
    Architecture::FullyConnected,
    Architecture::PartialGeb,
    Architecture::PartialDft
);
impl_name_parse!(Compensation, Compensation::None, Compensation::PostEq, Compensation::Dpd);
impl_name_parse!(PaMode, PaMode::Linear, PaMode::Nonlinear);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrayConfig {
    pub n_antennas: usize,
    pub n_rf_chains: usize,
    pub architecture: Architecture,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subarray_size: Option<usize>,
}

/// One multipath component: a uniform angular sector around `center_deg`
/// with a Rician line-of-sight term at the sector center.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MpcConfig {
    pub center_deg: f64,
    pub half_width_deg: f64,
    pub gain: f64,
    #[serde(default)]
    pub rician_factor: f64,
    #[serde(default)]
    pub delay: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserConfig {
    pub mpcs: Vec<MpcConfig>,
}

impl UserConfig {
    /// Index of the MPC with the largest gain (the first one on ties).
    pub fn strongest_mpc(&self) -> usize {
        let mut best = 0;
        for (i, m) in self.mpcs.iter().enumerate() {
            if m.gain > self.mpcs[best].gain {
                best = i;
            }
        }
        best
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupConfig {
    pub rf_chains: usize,
    pub users: Vec<UserConfig>,
}

/// An angular sector where radiation should be suppressed (e.g. a
/// neighbouring cell). It only enters the analog beamformer design.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VictimConfig {
    pub center_deg: f64,
    pub half_width_deg: f64,
    /// Defaults to the mean total gain of a user group.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gain: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaveformConfig {
    /// Active subcarriers `K`.
    pub n_active: usize,
    /// FFT size `mu K` of the oversampled grid.
    pub fft_size: usize,
    /// Cyclic prefix length in symbol-rate samples.
    pub cp_len: usize,
    pub mod_order: usize,
}

impl WaveformConfig {
    pub fn oversampling(&self) -> f64 {
        self.fft_size as f64 / self.n_active as f64
    }

    /// Cyclic prefix length on the oversampled grid.
    pub fn cp_samples(&self) -> usize {
        libm::round(self.cp_len as f64 * self.oversampling()) as usize
    }

    /// A symbol-rate delay converted to oversampled samples.
    pub fn delay_samples(&self, delay: usize) -> usize {
        libm::round(delay as f64 * self.oversampling()) as usize
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum PaSource {
    /// The built-in memory-polynomial model.
    Reference,
    /// A coefficient file (resolved by the caller).
    File { path: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PaConfig {
    pub model: PaSource,
    /// Mean per-antenna input power below the 1 dB compression point, in dB.
    pub back_off_db: f64,
}

impl Default for PaConfig {
    fn default() -> Self {
        PaConfig { model: PaSource::Reference, back_off_db: 9.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DpdConfig {
    /// Memory depth: taps run from `-(memory - 1)` to `memory - 1`.
    pub memory: usize,
    /// Number of odd-order terms.
    pub order: usize,
    pub step: f64,
    pub block_len: usize,
    pub n_blocks: usize,
    /// Blocks used to adapt a trained bank to a conditional channel draw.
    pub refine_blocks: usize,
}

impl Default for DpdConfig {
    fn default() -> Self {
        DpdConfig { memory: 4, order: 4, step: 0.5, block_len: 8192, n_blocks: 10, refine_blocks: 2 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisConfig {
    /// Noise level assumed when designing the analog beamformer, as E_s/N_o
    /// in dB. Fixed across the SNR sweep.
    pub design_snr_db: f64,
    /// Zero-forcing regularization, relative to the mean effective channel
    /// power of a group.
    pub regularization: f64,
    /// Frames per Bussgang estimate.
    pub bussgang_frames: usize,
    /// Channel draws per user for the conditional SINR average.
    pub conditional_draws: usize,
    pub pilot_frames: usize,
    /// Frames per channel realization for spectra and radiation patterns.
    pub psd_frames: usize,
    /// Frames per channel realization for the GMI estimate.
    pub gmi_frames: usize,
    pub gmi_mod_order: usize,
    pub ber_min_errors: u64,
    /// Upper bound on Monte Carlo frames per channel realization.
    pub ber_frame_cap: usize,
    pub pattern_step_deg: f64,
    pub pattern_span_deg: f64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            design_snr_db: 30.0,
            regularization: 1e-6,
            bussgang_frames: 64,
            conditional_draws: 20,
            pilot_frames: 4,
            psd_frames: 16,
            gmi_frames: 64,
            gmi_mod_order: 256,
            ber_min_errors: 200,
            ber_frame_cap: 500,
            pattern_step_deg: 0.5,
            pattern_span_deg: 50.0,
        }
    }
}

fn default_energy() -> f64 {
    1.0
}

fn default_schema() -> u32 {
    SCHEMA_VERSION
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default = "default_schema")]
    pub schema_version: u32,
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    /// Total transmit energy per symbol, `E_s`.
    #[serde(default = "default_energy")]
    pub energy: f64,
    pub n_channel_realizations: usize,
    pub snr_grid_db: Vec<f64>,
    pub array: ArrayConfig,
    pub waveform: WaveformConfig,
    #[serde(default)]
    pub pa: PaConfig,
    #[serde(default)]
    pub dpd: DpdConfig,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    pub groups: Vec<GroupConfig>,
    #[serde(default)]
    pub victims: Vec<VictimConfig>,
}

/// Which RF chains and which users belong to one precoding group.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroupSlot {
    pub chains: Range<usize>,
    pub users: Range<usize>,
}

impl Scenario {
    pub fn n_users(&self) -> usize {
        self.groups.iter().map(|g| g.users.len()).sum()
    }

    pub fn users(&self) -> impl Iterator<Item = &UserConfig> {
        self.groups.iter().flat_map(|g| g.users.iter())
    }

    /// Precoding groups as seen by the digital stage. A fully digital
    /// array serves all users jointly with every chain, so it has a single
    /// group; the other architectures keep the configured groups.
    pub fn layout(&self) -> Vec<GroupSlot> {
        if self.array.architecture == Architecture::FullyDigital {
            return vec![GroupSlot { chains: 0..self.array.n_rf_chains, users: 0..self.n_users() }];
        }
        let (mut c, mut u) = (0, 0);
        self.groups
            .iter()
            .map(|g| {
                let slot = GroupSlot { chains: c..c + g.rf_chains, users: u..u + g.users.len() };
                c += g.rf_chains;
                u += g.users.len();
                slot
            })
            .collect()
    }

    /// Mean over groups of the summed path gains of the group's users.
    pub fn mean_group_gain(&self) -> f64 {
        let total: f64 = self.groups.iter().flat_map(|g| &g.users).flat_map(|u| &u.mpcs).map(|m| m.gain).sum();
        total / self.groups.len().max(1) as f64
    }

    pub fn victim_gain(&self, v: &VictimConfig) -> f64 {
        v.gain.unwrap_or_else(|| self.mean_group_gain())
    }

    pub fn design_noise(&self) -> f64 {
        self.energy * libm::pow(10.0, -self.analysis.design_snr_db / 10.0)
    }

    /// Returns a copy reconfigured for `arch`, keeping the antenna count and
    /// the per-group chain budget. Partially connected arrays split the
    /// antennas evenly over the chains.
    pub fn with_architecture(&self, arch: Architecture) -> Result<Scenario> {
        let mut s = self.clone();
        let chains: usize = s.groups.iter().map(|g| g.rf_chains).sum();
        s.array.architecture = arch;
        match arch {
            Architecture::FullyDigital => {
                s.array.n_rf_chains = s.array.n_antennas;
                s.array.subarray_size = None;
            }
            Architecture::FullyConnected => {
                s.array.n_rf_chains = chains;
                s.array.subarray_size = None;
            }
            Architecture::PartialGeb | Architecture::PartialDft => {
                s.array.n_rf_chains = chains;
                s.array.subarray_size = Some(s.array.n_antennas / chains.max(1));
            }
        }
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |field: &str, msg: String| Err(Error::validation(field, msg));
        if self.schema_version != SCHEMA_VERSION {
            return fail("schema_version", format!("expected {SCHEMA_VERSION}, found {}", self.schema_version));
        }
        if !(self.energy > 0.0 && self.energy.is_finite()) {
            return fail("energy", "must be positive".into());
        }
        if self.n_channel_realizations == 0 {
            return fail("n_channel_realizations", "must be at least 1".into());
        }
        if self.snr_grid_db.is_empty() || self.snr_grid_db.iter().any(|s| !s.is_finite()) {
            return fail("snr_grid_db", "must be a non-empty list of finite values".into());
        }
        let a = &self.array;
        if a.n_antennas == 0 || a.n_rf_chains == 0 {
            return fail("array", "antenna and RF chain counts must be positive".into());
        }
        if self.groups.is_empty() {
            return fail("groups", "at least one group is required".into());
        }
        let chain_sum: usize = self.groups.iter().map(|g| g.rf_chains).sum();
        match a.architecture {
            Architecture::FullyDigital => {
                if a.n_rf_chains != a.n_antennas {
                    return fail("array.n_rf_chains", "a fully digital array has one chain per antenna".into());
                }
            }
            arch => {
                if chain_sum != a.n_rf_chains {
                    return fail(
                        "groups.rf_chains",
                        format!("group chains sum to {chain_sum}, array has {}", a.n_rf_chains),
                    );
                }
                if a.n_rf_chains > a.n_antennas {
                    return fail("array.n_rf_chains", "more chains than antennas".into());
                }
                if arch.is_partial() {
                    match a.subarray_size {
                        Some(ns) if ns * a.n_rf_chains == a.n_antennas => {}
                        _ => {
                            return fail(
                                "array.subarray_size",
                                "chains times subarray size must equal the antenna count".into(),
                            )
                        }
                    }
                }
            }
        }
        let w = &self.waveform;
        if w.n_active == 0 || w.fft_size < w.n_active {
            return fail("waveform", "need 0 < n_active <= fft_size".into());
        }
        if ![4, 16, 64, 256].contains(&w.mod_order) {
            return Err(Error::UnsupportedModulation(w.mod_order));
        }
        if ![4, 16, 64, 256].contains(&self.analysis.gmi_mod_order) {
            return Err(Error::UnsupportedModulation(self.analysis.gmi_mod_order));
        }
        for (gi, g) in self.groups.iter().enumerate() {
            if g.rf_chains == 0 || g.users.is_empty() {
                return fail(&format!("groups[{gi}]"), "needs at least one chain and one user".into());
            }
            for (ui, u) in g.users.iter().enumerate() {
                if u.mpcs.is_empty() {
                    return fail(&format!("groups[{gi}].users[{ui}]"), "needs at least one path".into());
                }
                for (li, m) in u.mpcs.iter().enumerate() {
                    let field = format!("groups[{gi}].users[{ui}].mpcs[{li}]");
                    check_sector(&field, m.center_deg, m.half_width_deg)?;
                    if !(m.gain > 0.0 && m.gain.is_finite()) {
                        return fail(&field, "gain must be positive".into());
                    }
                    if !(m.rician_factor >= 0.0 && m.rician_factor.is_finite()) {
                        return fail(&field, "rician_factor must be non-negative".into());
                    }
                    let d = w.delay_samples(m.delay);
                    if d > w.cp_samples() {
                        return Err(Error::DelayExceedsCp { delay: d, cp: w.cp_samples() });
                    }
                }
            }
        }
        for (vi, v) in self.victims.iter().enumerate() {
            let field = format!("victims[{vi}]");
            check_sector(&field, v.center_deg, v.half_width_deg)?;
            if v.gain.is_some_and(|g| !(g > 0.0 && g.is_finite())) {
                return fail(&field, "gain must be positive".into());
            }
        }
        if !self.pa.back_off_db.is_finite() {
            return fail("pa.back_off_db", "must be finite".into());
        }
        let d = &self.dpd;
        if d.memory == 0 || d.order == 0 || d.block_len == 0 || !(d.step > 0.0 && d.step <= 1.0) {
            return fail("dpd", "memory, order and block_len must be positive and step in (0, 1]".into());
        }
        let an = &self.analysis;
        if an.bussgang_frames == 0 || an.conditional_draws == 0 || an.pilot_frames == 0 {
            return fail("analysis", "frame and draw counts must be positive".into());
        }
        if !(an.regularization >= 0.0) || !(an.pattern_step_deg > 0.0) {
            return fail("analysis", "regularization must be >= 0 and pattern_step_deg > 0".into());
        }
        Ok(())
    }

    /// The reference deployment: 96 antennas, 6 RF chains, 16-antenna
    /// subarrays, three groups of two users and one victim sector.
    pub fn full() -> Scenario {
        Scenario {
            schema_version: SCHEMA_VERSION,
            name: "full".into(),
            seed: 1,
            energy: 1.0,
            n_channel_realizations: 4,
            snr_grid_db: (0..=8).map(|i| -10.0 + 5.0 * i as f64).collect(),
            array: ArrayConfig {
                n_antennas: 96,
                n_rf_chains: 6,
                architecture: Architecture::PartialGeb,
                subarray_size: Some(16),
            },
            waveform: WaveformConfig { n_active: 550, fft_size: 4096, cp_len: 20, mod_order: 64 },
            pa: PaConfig::default(),
            dpd: DpdConfig::default(),
            analysis: AnalysisConfig::default(),
            groups: reference_groups(),
            victims: vec![VictimConfig { center_deg: -37.5, half_width_deg: 1.5, gain: None }],
        }
    }

    /// A scaled-down variant of [`Scenario::full`] that runs in minutes:
    /// the same array and users, but 128 active subcarriers on a 1024-point
    /// grid and fewer conditional channel draws.
    pub fn desk() -> Scenario {
        let mut s = Scenario::full();
        s.name = "desk".into();
        s.waveform = WaveformConfig { n_active: 128, fft_size: 1024, cp_len: 20, mod_order: 64 };
        s.analysis.conditional_draws = 4;
        s
    }
}

fn check_sector(field: &str, center: f64, half_width: f64) -> Result<()> {
    if !(half_width > 0.0) || !center.is_finite() || center - half_width < -90.0 || center + half_width > 90.0 {
        return Err(Error::validation(field, "sector must have positive width and lie within [-90, 90] degrees"));
    }
    Ok(())
}

/// Two-path user with the second path 3 dB weaker and delayed by two
/// samples; gains are normalized to unit total power.
fn two_path(first: (f64, f64), second: (f64, f64)) -> UserConfig {
    let weak = libm::pow(10.0, -0.3);
    let g1 = 1.0 / (1.0 + weak);
    let sector = |(lo, hi): (f64, f64), gain, delay| MpcConfig {
        center_deg: 0.5 * (lo + hi),
        half_width_deg: 0.5 * (hi - lo),
        gain,
        rician_factor: 10.0,
        delay,
    };
    UserConfig { mpcs: vec![sector(first, g1, 0), sector(second, g1 * weak, 2)] }
}

fn one_path((lo, hi): (f64, f64)) -> UserConfig {
    UserConfig {
        mpcs: vec![MpcConfig {
            center_deg: 0.5 * (lo + hi),
            half_width_deg: 0.5 * (hi - lo),
            gain: 1.0,
            rician_factor: 10.0,
            delay: 0,
        }],
    }
}

fn reference_groups() -> Vec<GroupConfig> {
    vec![
        GroupConfig {
            rf_chains: 2,
            users: vec![two_path((-28.0, -25.0), (-17.0, -14.0)), two_path((-25.0, -22.0), (-14.0, -11.0))],
        },
        GroupConfig {
            rf_chains: 2,
            users: vec![two_path((-4.0, -1.0), (8.5, 11.5)), two_path((-1.0, 2.0), (11.5, 14.0))],
        },
        GroupConfig { rf_chains: 2, users: vec![one_path((24.0, 27.0)), one_path((21.0, 24.0))] },
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        Scenario::full().validate().unwrap();
        Scenario::desk().validate().unwrap();
        for arch in Architecture::ALL {
            let s = Scenario::desk().with_architecture(arch).unwrap();
            assert_eq!(s.layout().last().unwrap().users.end, 6);
        }
    }

    #[test]
    fn chain_budget_mismatch_is_rejected() {
        let mut s = Scenario::full();
        s.groups[0].rf_chains = 3;
        match s.validate() {
            Err(Error::Validation { field, .. }) => assert_eq!(field, "groups.rf_chains"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn delay_beyond_prefix_is_rejected() {
        let mut s = Scenario::desk();
        s.groups[0].users[0].mpcs[1].delay = 21;
        assert!(matches!(s.validate(), Err(Error::DelayExceedsCp { .. })));
    }

    #[test]
    fn reference_gains_are_normalized() {
        let s = Scenario::full();
        for u in s.users() {
            let total: f64 = u.mpcs.iter().map(|m| m.gain).sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
        assert!((s.mean_group_gain() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn names_round_trip() {
        for a in Architecture::ALL {
            assert_eq!(a.name().parse::<Architecture>().unwrap(), a);
        }
        for c in Compensation::ALL {
            assert_eq!(c.name().parse::<Compensation>().unwrap(), c);
        }
    }
}
