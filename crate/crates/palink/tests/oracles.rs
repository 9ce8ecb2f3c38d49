//! Spectral estimates checked against an independent FFT implementation.

use palink_core::{
    channel::steering_vector,
    math::{fft::Fft, rng::{complex_normal, stream, Stream}, C64},
    metrics::SpectrumAccumulator,
};
use rustfft::{num_complex::Complex64, FftPlanner};

#[test]
fn internal_fft_matches_rustfft() {
    let mut planner = FftPlanner::<f64>::new();
    let mut rng = stream(5, Stream::Data, &[]);
    for n in [1usize, 2, 8, 12, 64, 100, 1024] {
        let x: Vec<C64> = (0..n).map(|_| complex_normal(&mut rng)).collect();
        let mut ours = x.clone();
        Fft::new(n).forward(&mut ours);
        let mut theirs: Vec<Complex64> = x.iter().map(|v| Complex64::new(v.re, v.im)).collect();
        planner.plan_fft_forward(n).process(&mut theirs);
        for (a, b) in ours.iter().zip(&theirs) {
            assert!((a.re - b.re).abs() + (a.im - b.im).abs() < 1e-9 * (n as f64).sqrt(), "n = {n}");
        }
    }
}

#[test]
fn projected_periodogram_matches_direct_computation() {
    let (n_t, n, frames) = (8, 64, 5);
    let angles = [-30.0, 0.0, 12.5];
    let mut rng = stream(9, Stream::Data, &[1]);
    let data: Vec<Vec<Vec<C64>>> =
        (0..frames).map(|_| (0..n_t).map(|_| (0..n).map(|_| complex_normal(&mut rng)).collect()).collect()).collect();
    let mut acc = SpectrumAccumulator::new(&angles, n_t, n);
    for f in &data {
        acc.observe(f).unwrap();
    }
    let sp = acc.finish().unwrap();

    let fft = FftPlanner::<f64>::new().plan_fft_forward(n);
    for (a, &deg) in angles.iter().enumerate() {
        let w = steering_vector(deg.to_radians(), n_t);
        let mut want = vec![0.0; n];
        for f in &data {
            // Project in time first, then transform.
            let mut r: Vec<Complex64> = (0..n)
                .map(|t| {
                    let v: C64 = (0..n_t).map(|m| w[m].conj() * f[m][t]).sum();
                    Complex64::new(v.re, v.im)
                })
                .collect();
            fft.process(&mut r);
            for (k, v) in r.iter().enumerate() {
                want[k] += v.norm_sqr() / n as f64 / frames as f64;
            }
        }
        for k in 0..n {
            assert!((sp.power[a][k] - want[k]).abs() < 1e-10 * (1.0 + want[k]), "angle {deg}, bin {k}");
        }
    }
}
