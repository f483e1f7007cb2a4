//! Small dense Hermitian helpers.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub const MAX_EXPM_DIM: usize = 8;

pub fn is_hermitian(h: &DMatrix<Complex64>, tol: f64) -> bool {
    if h.nrows() != h.ncols() {
        return false;
    }
    let n = h.nrows();
    (0..n).all(|i| (i..n).all(|j| (h[(i, j)] - h[(j, i)].conj()).norm() <= tol))
}

/// Eigen-decomposition of a Hermitian matrix: real eigenvalues and unitary
/// eigenvector columns.
pub fn hermitian_eigen(h: &DMatrix<Complex64>) -> (DVector<f64>, DMatrix<Complex64>) {
    let eig = SymmetricEigen::new(h.clone());
    (eig.eigenvalues, eig.eigenvectors)
}

/// `e^{-iHt}` for Hermitian `H` of dimension at most 8.
pub fn expm_small(h: &DMatrix<Complex64>, t: f64) -> Result<DMatrix<Complex64>> {
    let n = h.nrows();
    if n == 0 || n > MAX_EXPM_DIM || h.ncols() != n {
        return Err(Error::domain(format!(
            "expm_small needs a square matrix of dimension 1..={MAX_EXPM_DIM}"
        )));
    }
    if !t.is_finite() {
        return Err(Error::domain("expm_small time must be finite"));
    }
    if !is_hermitian(h, 1e-12) {
        return Err(Error::domain("expm_small needs a Hermitian matrix"));
    }
    let (lambda, v) = hermitian_eigen(h);
    let mut scaled = v.clone();
    for (j, &l) in lambda.iter().enumerate() {
        let phase = Complex64::from_polar(1.0, -l * t);
        for i in 0..n {
            scaled[(i, j)] *= phase;
        }
    }
    Ok(scaled * v.adjoint())
}

/// Largest entry modulus of `a - b`.
pub fn max_abs_diff(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    pub(crate) fn random_hermitian(rng: &mut impl Rng, n: usize) -> DMatrix<Complex64> {
        let a = DMatrix::from_fn(n, n, |_, _| {
            c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        });
        (&a + a.adjoint()).scale(0.5)
    }

    #[test]
    fn zero_is_identity() {
        let u = expm_small(&DMatrix::zeros(3, 3), 1.7).unwrap();
        assert!(max_abs_diff(&u, &DMatrix::identity(3, 3)) < 1e-15);
    }

    #[test]
    fn diagonal_gives_phases() {
        let h = DMatrix::from_diagonal(&DVector::from_vec(vec![c(0.5, 0.0), c(-2.0, 0.0)]));
        let u = expm_small(&h, 0.3).unwrap();
        assert!((u[(0, 0)] - Complex64::from_polar(1.0, -0.15)).norm() < 1e-15);
        assert!((u[(1, 1)] - Complex64::from_polar(1.0, 0.6)).norm() < 1e-15);
        assert!(u[(0, 1)].norm() < 1e-15);
    }

    #[test]
    fn random_unitarity() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let h = random_hermitian(&mut rng, 4);
            let u = expm_small(&h, rng.random_range(-5.0..5.0)).unwrap();
            let r = max_abs_diff(&(u.adjoint() * &u), &DMatrix::identity(4, 4));
            assert!(r < 1e-12, "unitarity residual {r}");
        }
    }

    #[test]
    fn matches_taylor_series() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let h = random_hermitian(&mut rng, 3);
        let t = 0.4;
        let a = h.scale(t).map(|z| z * c(0.0, -1.0));
        let mut term = DMatrix::<Complex64>::identity(3, 3);
        let mut sum = term.clone();
        for k in 1..40 {
            term = &term * &a / c(k as f64, 0.0);
            sum += &term;
        }
        assert!(max_abs_diff(&sum, &expm_small(&h, t).unwrap()) < 1e-13);
    }

    #[test]
    fn rejects_non_hermitian() {
        let h =
            DMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]);
        assert!(expm_small(&h, 1.0).is_err());
        assert!(expm_small(&DMatrix::zeros(9, 9), 1.0).is_err());
    }
}
