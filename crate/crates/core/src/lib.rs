//! Link-level simulation core for multi-user massive MIMO downlinks with
//! hybrid analog/digital beamforming, nonlinear power amplifiers and
//! digital predistortion.
//!
//! The crate is `no_std` (it needs `alloc`). Everything that touches files,
//! threads or the command line lives in the `palink` companion crate.
//!
//! Signal conventions used throughout:
//!
//! * Time-domain signals are stored as one `Vec<C64>` per RF chain or per
//!   antenna (`Vec<Vec<C64>>`, "rows").
//! * Per-subcarrier quantities are indexed by *active* subcarrier index
//!   `i in 0..K`; [`waveform::Ofdm::active_bins`] maps them to FFT bins.
//! * Frequency-domain observations of a transmitted frame use the unitary
//!   DFT of the frame body, so a chain that only scales its input by `a`
//!   produces `y_k = a x_k` bin by bin.
#![no_std]

extern crate alloc;

pub mod analysis;
pub mod beamformer;
pub mod bussgang;
pub mod channel;
pub mod error;
pub mod link;
pub mod linearizer;
pub mod math;
pub mod metrics;
pub mod pa_model;
pub mod scenario;
pub mod waveform;

pub use self::{
    error::Error,
    math::C64,
    scenario::{Architecture, Compensation, PaMode, Scenario},
};
