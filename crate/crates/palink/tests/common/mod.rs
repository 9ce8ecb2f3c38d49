#![allow(dead_code)]

use palink_core::scenario::Scenario;

/// A scenario small enough for debug-speed tests: 24 antennas, 32 active
/// subcarriers on a 128-point grid, two realizations.
pub fn tiny() -> Scenario {
    let mut s = Scenario::desk();
    s.name = "tiny".into();
    s.array.n_antennas = 24;
    s.array.subarray_size = Some(4);
    s.waveform.n_active = 32;
    s.waveform.fft_size = 128;
    s.waveform.cp_len = 8;
    s.n_channel_realizations = 2;
    s.snr_grid_db = vec![0.0, 20.0];
    let a = &mut s.analysis;
    a.conditional_draws = 2;
    a.bussgang_frames = 16;
    a.psd_frames = 2;
    a.gmi_frames = 4;
    a.ber_min_errors = 20;
    a.ber_frame_cap = 8;
    a.pattern_step_deg = 5.0;
    s.dpd.block_len = 1024;
    s.dpd.n_blocks = 2;
    s.dpd.refine_blocks = 1;
    s
}
