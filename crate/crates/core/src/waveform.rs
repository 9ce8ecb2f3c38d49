//! Gray-coded square QAM and oversampled OFDM.
//!
//! `K` active subcarriers sit symmetrically around DC (which is left empty)
//! on a `mu K`-point grid; the remaining bins are the guard band where
//! out-of-band emission is measured.

use alloc::{vec, vec::Vec};

use crate::{
    error::{Error, Result},
    math::{fft::Fft, C64},
    scenario::WaveformConfig,
};

/// FFT bins of the active subcarriers, lowest frequency first: `K / 2`
/// negative-frequency bins followed by `K - K / 2` positive ones.
pub fn active_bins(n_active: usize, fft_size: usize) -> Vec<usize> {
    let below = n_active / 2;
    let above = n_active - below;
    (0..below).map(|i| fft_size - below + i).chain(1..=above).collect()
}

/// Square `M`-QAM with Gray labelling on each axis and unit average energy.
///
/// Symbol indices double as bit labels: the upper `log2(M)/2` bits pick the
/// in-phase level and the lower bits the quadrature level.
#[derive(Clone, Debug, PartialEq)]
pub struct Qam {
    order: usize,
    side: usize,
    bits_per_axis: u32,
    scale: f64,
    points: Vec<C64>,
}

fn gray(j: usize) -> usize {
    j ^ (j >> 1)
}

fn gray_inverse(mut g: usize) -> usize {
    let mut j = g;
    while g > 0 {
        g >>= 1;
        j ^= g;
    }
    j
}

impl Qam {
    pub fn new(order: usize) -> Result<Qam> {
        if ![4, 16, 64, 256].contains(&order) {
            return Err(Error::UnsupportedModulation(order));
        }
        let side = libm::sqrt(order as f64) as usize;
        let bits_per_axis = side.trailing_zeros();
        let scale = 1.0 / libm::sqrt(2.0 * (order as f64 - 1.0) / 3.0);
        let level = |g: usize| (2.0 * gray_inverse(g) as f64 - (side as f64 - 1.0)) * scale;
        let points = (0..order)
            .map(|s| C64::new(level(s >> bits_per_axis), level(s & (side - 1))))
            .collect();
        Ok(Qam { order, side, bits_per_axis, scale, points })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn bits_per_symbol(&self) -> u32 {
        2 * self.bits_per_axis
    }

    pub fn points(&self) -> &[C64] {
        &self.points
    }

    pub fn symbol(&self, index: usize) -> C64 {
        self.points[index]
    }

    /// Maps a bit stream (one bit per byte, MSB of each symbol first).
    pub fn map(&self, bits: &[u8]) -> Result<Vec<C64>> {
        let b = self.bits_per_symbol() as usize;
        if bits.len() % b != 0 {
            return Err(Error::Length { expected: bits.len().div_ceil(b) * b, got: bits.len() });
        }
        Ok(bits
            .chunks(b)
            .map(|c| self.points[c.iter().fold(0usize, |acc, &x| (acc << 1) | (x & 1) as usize)])
            .collect())
    }

    /// Nearest-point decision, axis by axis.
    pub fn slice(&self, r: C64) -> usize {
        let axis = |v: f64| {
            let j = libm::round((v / self.scale + (self.side as f64 - 1.0)) / 2.0);
            gray(j.clamp(0.0, (self.side - 1) as f64) as usize)
        };
        (axis(r.re) << self.bits_per_axis) | axis(r.im)
    }

    pub fn demap_hard(&self, symbols: &[C64]) -> Vec<u8> {
        let b = self.bits_per_symbol();
        symbols
            .iter()
            .flat_map(|&r| {
                let s = self.slice(r);
                (0..b).rev().map(move |i| ((s >> i) & 1) as u8)
            })
            .collect()
    }

    /// Number of differing bits between two symbol labels.
    pub fn bit_errors(a: usize, b: usize) -> u32 {
        (a ^ b).count_ones()
    }
}

/// OFDM modulator/demodulator for one stream.
#[derive(Clone, Debug)]
pub struct Ofdm {
    n_active: usize,
    fft: Fft,
    bins: Vec<usize>,
    cp: usize,
}

impl Ofdm {
    pub fn new(config: &WaveformConfig) -> Ofdm {
        Ofdm {
            n_active: config.n_active,
            fft: Fft::new(config.fft_size),
            bins: active_bins(config.n_active, config.fft_size),
            cp: config.cp_samples(),
        }
    }

    pub fn fft_size(&self) -> usize {
        self.fft.len()
    }

    pub fn n_active(&self) -> usize {
        self.n_active
    }

    pub fn cp_len(&self) -> usize {
        self.cp
    }

    pub fn active_bins(&self) -> &[usize] {
        &self.bins
    }

    /// Frame body (no prefix): `x_n = K^{-1/2} sum_i X_i exp(j 2 pi k_i n / (mu K))`.
    pub fn synthesize(&self, freq: &[C64]) -> Result<Vec<C64>> {
        if freq.len() != self.n_active {
            return Err(Error::Length { expected: self.n_active, got: freq.len() });
        }
        let mut buf = vec![C64::new(0.0, 0.0); self.fft_size()];
        for (&k, &x) in self.bins.iter().zip(freq) {
            buf[k] = x;
        }
        self.fft.inverse(&mut buf);
        let scale = 1.0 / libm::sqrt(self.n_active as f64);
        buf.iter_mut().for_each(|v| *v *= scale);
        Ok(buf)
    }

    /// Body with the cyclic prefix prepended.
    pub fn modulate(&self, freq: &[C64]) -> Result<Vec<C64>> {
        let body = self.synthesize(freq)?;
        let n = body.len();
        let mut out = Vec::with_capacity(n + self.cp);
        out.extend_from_slice(&body[n - self.cp..]);
        out.extend_from_slice(&body);
        Ok(out)
    }

    /// Unitary DFT of a body, all bins.
    pub fn spectrum(&self, body: &[C64]) -> Vec<C64> {
        let mut buf = body.to_vec();
        self.fft.forward(&mut buf);
        let scale = 1.0 / libm::sqrt(self.fft_size() as f64);
        buf.iter_mut().for_each(|v| *v *= scale);
        buf
    }

    /// Unitary DFT of a body, active bins only.
    pub fn analyze(&self, body: &[C64]) -> Result<Vec<C64>> {
        if body.len() != self.fft_size() {
            return Err(Error::Length { expected: self.fft_size(), got: body.len() });
        }
        let spec = self.spectrum(body);
        Ok(self.bins.iter().map(|&k| spec[k]).collect())
    }

    /// Strips the prefix and returns the active subcarriers. Together with
    /// [`Ofdm::modulate`] this returns `sqrt(mu) X`, since the modulator
    /// normalizes by `sqrt(K)` and the demodulator is unitary.
    pub fn demodulate(&self, block: &[C64]) -> Result<Vec<C64>> {
        let n = self.fft_size() + self.cp;
        if block.len() != n {
            return Err(Error::Length { expected: n, got: block.len() });
        }
        self.analyze(&block[self.cp..])
    }
}
