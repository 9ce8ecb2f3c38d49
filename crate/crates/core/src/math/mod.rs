//! Numerical building blocks: FFT, quadrature, dense complex linear algebra,
//! seeded random streams and a few special functions.

pub mod fft;
pub mod linalg;
pub mod quad;
pub mod rng;

pub use num_complex::Complex64 as C64;

/// Gaussian tail probability `Q(x) = P(N(0,1) > x)`.
pub fn q_function(x: f64) -> f64 {
    0.5 * libm::erfc(x / core::f64::consts::SQRT_2)
}

pub fn db_to_lin(db: f64) -> f64 {
    libm::pow(10.0, db / 10.0)
}

pub fn lin_to_db(lin: f64) -> f64 {
    10.0 * libm::log10(lin)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn q_function_reference_values() {
        assert!((q_function(0.0) - 0.5).abs() < 1e-15);
        assert!((q_function(1.0) - 0.158_655_253_931_457_05).abs() < 1e-12);
        assert!((q_function(3.0) - 1.349_898_031_630_094_6e-3).abs() < 1e-15);
        assert!((q_function(-1.0) - 0.841_344_746_068_543).abs() < 1e-12);
    }
}
