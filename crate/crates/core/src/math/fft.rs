//! Mixed-size complex FFT.
//!
//! Power-of-two sizes use an iterative radix-2 kernel; every other size goes
//! through Bluestein's chirp-z algorithm on a power-of-two kernel. Transforms
//! are unnormalized: `forward` computes `X_k = sum_n x_n e^{-j 2 pi n k / N}`
//! and `inverse` the same sum with `+j`.

use alloc::{boxed::Box, vec, vec::Vec};
use core::f64::consts::PI;

use super::C64;

#[derive(Clone, Debug)]
pub struct Fft {
    n: usize,
    kind: Kind,
}

#[derive(Clone, Debug)]
enum Kind {
    Trivial,
    Radix2 { twiddles: Vec<C64>, bitrev: Vec<u32> },
    Bluestein { inner: Box<Fft>, chirp: Vec<C64>, kernel: Vec<C64> },
}

impl Fft {
    pub fn new(n: usize) -> Self {
        assert!(n > 0, "FFT size must be positive");
        let kind = if n == 1 {
            Kind::Trivial
        } else if n.is_power_of_two() {
            let twiddles = (0..n / 2)
                .map(|k| C64::from_polar(1.0, -2.0 * PI * k as f64 / n as f64))
                .collect();
            let bits = n.trailing_zeros();
            let bitrev = (0..n as u32).map(|i| i.reverse_bits() >> (32 - bits)).collect();
            Kind::Radix2 { twiddles, bitrev }
        } else {
            let m = (2 * n - 1).next_power_of_two();
            let inner = Box::new(Fft::new(m));
            // w_k = exp(-j pi k^2 / n); k^2 is reduced mod 2n to keep the
            // phase argument small for large k.
            let chirp: Vec<C64> = (0..n)
                .map(|k| {
                    let k2 = ((k as u128 * k as u128) % (2 * n as u128)) as f64;
                    C64::from_polar(1.0, -PI * k2 / n as f64)
                })
                .collect();
            let mut kernel = vec![C64::new(0.0, 0.0); m];
            kernel[0] = chirp[0].conj();
            for k in 1..n {
                kernel[k] = chirp[k].conj();
                kernel[m - k] = chirp[k].conj();
            }
            inner.forward(&mut kernel);
            Kind::Bluestein { inner, chirp, kernel }
        };
        Fft { n, kind }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn forward(&self, buf: &mut [C64]) {
        assert_eq!(buf.len(), self.n, "FFT buffer length mismatch");
        match &self.kind {
            Kind::Trivial => {}
            Kind::Radix2 { twiddles, bitrev } => radix2(buf, twiddles, bitrev),
            Kind::Bluestein { inner, chirp, kernel } => {
                let m = inner.len();
                let mut a = vec![C64::new(0.0, 0.0); m];
                for k in 0..self.n {
                    a[k] = buf[k] * chirp[k];
                }
                inner.forward(&mut a);
                for (v, k) in a.iter_mut().zip(kernel) {
                    *v *= k;
                }
                inner.inverse(&mut a);
                let scale = 1.0 / m as f64;
                for k in 0..self.n {
                    buf[k] = a[k] * chirp[k] * scale;
                }
            }
        }
    }

    pub fn inverse(&self, buf: &mut [C64]) {
        for v in buf.iter_mut() {
            *v = v.conj();
        }
        self.forward(buf);
        for v in buf.iter_mut() {
            *v = v.conj();
        }
    }
}

fn radix2(buf: &mut [C64], twiddles: &[C64], bitrev: &[u32]) {
    let n = buf.len();
    for i in 0..n {
        let j = bitrev[i] as usize;
        if i < j {
            buf.swap(i, j);
        }
    }
    let mut len = 2;
    while len <= n {
        let half = len / 2;
        let stride = n / len;
        for start in (0..n).step_by(len) {
            for k in 0..half {
                let w = twiddles[k * stride];
                let a = buf[start + k];
                let b = buf[start + k + half] * w;
                buf[start + k] = a + b;
                buf[start + k + half] = a - b;
            }
        }
        len *= 2;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(x: &[C64]) -> Vec<C64> {
        let n = x.len();
        (0..n)
            .map(|k| {
                x.iter()
                    .enumerate()
                    .map(|(t, v)| v * C64::from_polar(1.0, -2.0 * PI * (t * k % n) as f64 / n as f64))
                    .sum()
            })
            .collect()
    }

    fn signal(n: usize) -> Vec<C64> {
        (0..n)
            .map(|i| C64::new(libm::sin(1.3 * i as f64 + 0.2), libm::cos(0.7 * (i * i) as f64)))
            .collect()
    }

    #[test]
    fn matches_naive_dft_for_assorted_sizes() {
        for n in [1usize, 2, 3, 5, 8, 12, 17, 64, 100, 550] {
            let x = signal(n);
            let want = naive(&x);
            let mut got = x.clone();
            Fft::new(n).forward(&mut got);
            for (a, b) in got.iter().zip(&want) {
                assert!((a - b).norm() < 1e-9 * n as f64, "n={n}");
            }
        }
    }

    #[test]
    fn inverse_undoes_forward() {
        for n in [16usize, 30] {
            let x = signal(n);
            let mut y = x.clone();
            let f = Fft::new(n);
            f.forward(&mut y);
            f.inverse(&mut y);
            for (a, b) in y.iter().zip(&x) {
                assert!((a / n as f64 - b).norm() < 1e-12);
            }
        }
    }
}
