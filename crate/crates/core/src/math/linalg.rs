//! Dense complex linear algebra on top of `nalgebra`.

use alloc::vec::Vec;

use nalgebra::{Cholesky, DMatrix, DVector};

use super::C64;

pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum LinalgError {
    #[error("matrix is not Hermitian positive definite")]
    NotPositiveDefinite,
    #[error("matrix is singular")]
    Singular,
}

/// `(m + m^H) / 2`.
pub fn hermitize(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()) * C64::new(0.5, 0.0)
}

/// Eigen-decomposition of a Hermitian matrix with eigenvalues sorted in
/// descending order. Column `i` of the returned matrix pairs with value `i`.
pub fn hermitian_eig(m: &CMatrix) -> (Vec<f64>, CMatrix) {
    let eig = hermitize(m).symmetric_eigen();
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = CMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// Hermitian square root of a PSD matrix; negative eigenvalues (round-off)
/// are clipped to zero.
pub fn psd_sqrt(m: &CMatrix) -> CMatrix {
    let (values, vectors) = hermitian_eig(m);
    let scaled = CMatrix::from_fn(m.nrows(), m.ncols(), |r, c| vectors[(r, c)] * libm::sqrt(values[c].max(0.0)));
    &scaled * vectors.adjoint()
}

/// Nearest PSD matrix in Frobenius norm (Hermitian part, negative
/// eigenvalues set to zero).
pub fn psd_clip(m: &CMatrix) -> CMatrix {
    let (values, vectors) = hermitian_eig(m);
    if values.last().is_none_or(|&v| v >= 0.0) {
        return hermitize(m);
    }
    let scaled = CMatrix::from_fn(m.nrows(), m.ncols(), |r, c| vectors[(r, c)] * values[c].max(0.0));
    &scaled * vectors.adjoint()
}

/// Solves `a x = lambda b x` for Hermitian `a` and Hermitian positive
/// definite `b`. Eigenvalues are returned in descending order; eigenvectors
/// are scaled to unit Euclidean norm.
pub fn generalized_eig(a: &CMatrix, b: &CMatrix) -> Result<(Vec<f64>, CMatrix), LinalgError> {
    let chol = Cholesky::new(hermitize(b)).ok_or(LinalgError::NotPositiveDefinite)?;
    let l = chol.l();
    let l_inv = l.clone().try_inverse().ok_or(LinalgError::Singular)?;
    let c = &l_inv * a * l_inv.adjoint();
    let (values, y) = hermitian_eig(&c);
    let mut x = l_inv.adjoint() * y;
    for mut col in x.column_iter_mut() {
        let norm = col.norm();
        col /= C64::new(norm, 0.0);
    }
    Ok((values, x))
}

/// Rotates a vector so that its largest-magnitude entry is real and
/// positive. This removes the arbitrary phase an eigensolver leaves behind.
pub fn fix_phase(v: &mut CVector) {
    let mut best = 0;
    for i in 0..v.len() {
        if v[i].norm() > v[best].norm() * (1.0 + 1e-9) {
            best = i;
        }
    }
    let p = v[best];
    if p.norm() > 0.0 {
        let rot = p.conj() / p.norm();
        for x in v.iter_mut() {
            *x *= rot;
        }
    }
}

/// Inverse of a Hermitian positive-definite matrix via Cholesky.
pub fn inverse_hpd(m: &CMatrix) -> Result<CMatrix, LinalgError> {
    let n = m.nrows();
    Cholesky::new(hermitize(m)).map(|c| c.solve(&CMatrix::identity(n, n))).ok_or(LinalgError::NotPositiveDefinite)
}

/// Moore-Penrose pseudo-inverse of a full-column-rank matrix,
/// `(m^H m)^{-1} m^H`.
pub fn pinv_tall(m: &CMatrix) -> Result<CMatrix, LinalgError> {
    let gram = m.adjoint() * m;
    Ok(inverse_hpd(&gram).map_err(|_| LinalgError::Singular)? * m.adjoint())
}

/// `v^H m v`, real part.
pub fn quad_form(m: &CMatrix, v: &CVector) -> f64 {
    v.dotc(&(m * v)).re
}

/// Least-squares solution of `a x = b` for a tall matrix via Householder QR.
pub fn least_squares(a: &CMatrix, b: &CVector) -> Result<CVector, LinalgError> {
    let qr = a.clone().qr();
    let r = qr.r();
    let max = (0..r.ncols()).map(|i| r[(i, i)].norm()).fold(0.0, f64::max);
    if max == 0.0 || (0..r.ncols()).any(|i| r[(i, i)].norm() <= 1e-13 * max) {
        return Err(LinalgError::Singular);
    }
    let mut rhs = b.clone();
    qr.q_tr_mul(&mut rhs);
    r.solve_upper_triangular(&rhs.rows(0, r.ncols())).ok_or(LinalgError::Singular)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(n: usize, seed: f64) -> CMatrix {
        CMatrix::from_fn(n, n, |r, c| {
            C64::new(libm::sin(seed + 1.7 * r as f64 + 0.3 * c as f64), libm::cos(seed * 0.5 + (r * c) as f64))
        })
    }

    #[test]
    fn generalized_eig_satisfies_pencil() {
        let g = sample(5, 0.3);
        let a = &g * g.adjoint();
        let h = sample(5, 1.1);
        let b = &h * h.adjoint() + CMatrix::identity(5, 5) * C64::new(0.5, 0.0);
        let (values, x) = generalized_eig(&a, &b).unwrap();
        for i in 0..5 {
            let v = x.column(i).into_owned();
            let lhs = &a * &v;
            let rhs = &b * &v * C64::new(values[i], 0.0);
            assert!((lhs - rhs).norm() < 1e-9 * values[0].max(1.0));
            assert!((v.norm() - 1.0).abs() < 1e-12);
        }
        assert!(values.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn psd_sqrt_squares_back() {
        let g = sample(6, 2.0);
        let a = &g * g.adjoint();
        let s = psd_sqrt(&a);
        assert!((&s * &s - &a).norm() < 1e-9 * a.norm());
    }

    #[test]
    fn pinv_is_left_inverse() {
        let m = CMatrix::from_fn(6, 3, |r, c| C64::new(libm::sin((r * r * 7 + c * c * 3) as f64), libm::cos((r * c * c) as f64 + 0.5 * r as f64)));
        let p = pinv_tall(&m).unwrap();
        assert!((&p * &m - CMatrix::identity(3, 3)).norm() < 1e-10);
    }
}
