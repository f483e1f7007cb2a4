//! Repeated non-demolition measurements on a finite-dimensional system.
//!
//! The single-apparatus model applies `(U∘L)ⁿ` to the reduced state. The
//! multi-apparatus model entangles the system with a fresh apparatus per
//! measurement, keeps the joint pure state (the system is purified by an
//! ancilla), and traces everything but the system out at the end.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::oracle::linalg::{hermitian_eigen, is_hermitian};

pub const MAX_DENSITY_DIM: usize = 16;
/// Largest measurement count simulated with explicit apparatus factors.
pub const MAX_MULTI_STEPS: u32 = 10;
/// Largest joint state vector of the multi-apparatus model.
pub const MAX_MULTI_AMPLITUDES: usize = 1 << 24;

type CMatrix = DMatrix<Complex64>;

#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix(CMatrix);

impl DensityMatrix {
    pub fn new(m: CMatrix) -> Result<Self> {
        let n = m.nrows();
        if n == 0 || n > MAX_DENSITY_DIM || m.ncols() != n {
            return Err(Error::domain(format!(
                "density matrix must be square of dimension 1..={MAX_DENSITY_DIM}"
            )));
        }
        if !is_hermitian(&m, 1e-12) {
            return Err(Error::domain("density matrix must be Hermitian"));
        }
        let tr = m.trace();
        if (tr - Complex64::new(1.0, 0.0)).norm() > 1e-12 {
            return Err(Error::domain(format!(
                "density matrix trace must be 1, got {tr}"
            )));
        }
        let (lambda, _) = hermitian_eigen(&m);
        let min = lambda.min();
        if min < -1e-10 {
            return Err(Error::domain(format!(
                "density matrix has eigenvalue {min:e} < 0"
            )));
        }
        Ok(DensityMatrix(m))
    }

    /// `|ψ⟩⟨ψ|` for a normalised `ψ`.
    pub fn pure(psi: &[Complex64]) -> Result<Self> {
        let v = nalgebra::DVector::from_column_slice(psi);
        if (v.norm() - 1.0).abs() > 1e-12 {
            return Err(Error::domain("state vector must be normalised"));
        }
        DensityMatrix::new(&v * v.adjoint())
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> CMatrix {
        self.0
    }
}

/// Gram matrix of the apparatus pointer states, `O_ij = ⟨A_i|A_j⟩`.
#[derive(Debug, Clone, PartialEq)]
pub struct Overlaps(CMatrix);

impl Overlaps {
    pub fn new(m: CMatrix) -> Result<Self> {
        let n = m.nrows();
        if m.ncols() != n || n == 0 {
            return Err(Error::domain("overlap matrix must be square"));
        }
        if !is_hermitian(&m, 1e-12) {
            return Err(Error::domain("overlap matrix must be Hermitian"));
        }
        for i in 0..n {
            if (m[(i, i)] - Complex64::new(1.0, 0.0)).norm() > 1e-12 {
                return Err(Error::domain("overlap matrix needs a unit diagonal"));
            }
            for j in 0..n {
                if m[(i, j)].norm() > 1.0 + 1e-12 {
                    return Err(Error::domain("overlap entries must have modulus <= 1"));
                }
            }
        }
        Ok(Overlaps(m))
    }

    /// Gram matrix of explicit pointer states.
    pub fn from_pointers(states: &[Vec<Complex64>]) -> Result<Self> {
        let n = states.len();
        Overlaps::new(CMatrix::from_fn(n, n, |i, j| {
            states[i]
                .iter()
                .zip(&states[j])
                .map(|(a, b)| a.conj() * b)
                .sum()
        }))
    }

    /// Two-level overlaps with off-diagonal `⟨A_e|A_g⟩ = γe^{iθ}`, basis
    /// order `(e, g)`.
    pub fn qubit(gamma: f64, theta: f64) -> Result<Self> {
        let f = Complex64::from_polar(gamma, theta);
        let one = Complex64::new(1.0, 0.0);
        Overlaps::new(CMatrix::from_row_slice(2, 2, &[one, f, f.conj(), one]))
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    /// Pointer vectors `a_i` whose partial trace reproduces [`superop_l`]:
    /// `⟨a_j|a_i⟩ = O_ij`.
    fn pointers(&self) -> Result<Vec<Vec<Complex64>>> {
        let (lambda, v) = hermitian_eigen(&self.0);
        if lambda.min() < -1e-10 {
            return Err(Error::domain(
                "overlap matrix is not positive semidefinite; no pointer states realise it",
            ));
        }
        let kept: Vec<usize> = (0..lambda.len()).filter(|&k| lambda[k] > 1e-14).collect();
        Ok((0..self.0.nrows())
            .map(|i| kept.iter().map(|&k| lambda[k].sqrt() * v[(i, k)]).collect())
            .collect())
    }
}

/// `L[ρ]_ij = ρ_ij ⟨A_i|A_j⟩`.
pub fn superop_l(rho: &DensityMatrix, overlaps: &Overlaps) -> Result<DensityMatrix> {
    let o = overlaps.matrix();
    if o.nrows() != rho.dim() {
        return Err(Error::domain(
            "overlap and density matrix dimensions differ",
        ));
    }
    Ok(DensityMatrix(rho.matrix().component_mul(o)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ApparatusLayout {
    /// One apparatus, re-initialised after every measurement.
    Single,
    /// A fresh apparatus per measurement, all kept until the end.
    Multi,
}

fn check_unitary(u: &CMatrix, dim: usize) -> Result<()> {
    if u.nrows() != dim || u.ncols() != dim {
        return Err(Error::domain(
            "free evolution must match the system dimension",
        ));
    }
    let residual = (u.adjoint() * u - CMatrix::identity(dim, dim))
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max);
    if residual > 1e-12 {
        return Err(Error::domain(format!(
            "free evolution is not unitary (residual {residual:e})"
        )));
    }
    Ok(())
}

/// Reduced state after `n` measurement + free-evolution cycles.
pub fn repeated_evolution(
    rho0: &DensityMatrix,
    u_f: &CMatrix,
    overlaps: &Overlaps,
    n: u32,
    layout: ApparatusLayout,
) -> Result<DensityMatrix> {
    let d = rho0.dim();
    check_unitary(u_f, d)?;
    if overlaps.matrix().nrows() != d {
        return Err(Error::domain(
            "overlap and density matrix dimensions differ",
        ));
    }
    if n > 1000 {
        return Err(Error::domain(format!("at most 1000 cycles, got {n}")));
    }
    match layout {
        ApparatusLayout::Single => {
            let mut rho = rho0.clone();
            for _ in 0..n {
                let m = superop_l(&rho, overlaps)?;
                rho = DensityMatrix(u_f * m.matrix() * u_f.adjoint());
            }
            Ok(rho)
        }
        ApparatusLayout::Multi => multi(rho0, u_f, overlaps, n),
    }
}

/// Joint pure state indexed `[system][ancilla][A₁]…[Aₙ]`, system slowest.
fn multi(
    rho0: &DensityMatrix,
    u_f: &CMatrix,
    overlaps: &Overlaps,
    n: u32,
) -> Result<DensityMatrix> {
    let d = rho0.dim();
    if n > MAX_MULTI_STEPS {
        return Err(Error::resource(format!(
            "multi-apparatus simulation limited to {MAX_MULTI_STEPS} measurements, got {n}"
        )));
    }
    let pointers = overlaps.pointers()?;
    let a = pointers[0].len();
    let size = (a as f64).powi(n as i32) * (d * d) as f64;
    if size > MAX_MULTI_AMPLITUDES as f64 {
        return Err(Error::resource(format!(
            "joint state of {size:e} amplitudes is too large"
        )));
    }

    // purification: ψ[s][k] = sqrt(λ_k) v_k[s]
    let (lambda, v) = hermitian_eigen(rho0.matrix());
    let mut psi: Vec<Complex64> = vec![Complex64::new(0.0, 0.0); d * d];
    for s in 0..d {
        for k in 0..d {
            psi[s * d + k] = lambda[k].max(0.0).sqrt() * v[(s, k)];
        }
    }
    let mut rest = d; // size of everything after the system index
    for _ in 0..n {
        // measurement: |s⟩|rest⟩ → |s⟩|rest⟩|a_s⟩ on a fresh apparatus
        let mut next = Vec::with_capacity(psi.len() * a);
        for s in 0..d {
            for &amp in &psi[s * rest..(s + 1) * rest] {
                next.extend(pointers[s].iter().map(|&p| amp * p));
            }
        }
        rest *= a;
        psi = next;
        // free evolution on the system index
        let mut evolved = vec![Complex64::new(0.0, 0.0); psi.len()];
        for s in 0..d {
            for r in 0..d {
                let c = u_f[(s, r)];
                if c.norm_sqr() == 0.0 {
                    continue;
                }
                let (dst, src) = (
                    &mut evolved[s * rest..(s + 1) * rest],
                    &psi[r * rest..(r + 1) * rest],
                );
                for (x, y) in dst.iter_mut().zip(src) {
                    *x += c * y;
                }
            }
        }
        psi = evolved;
    }
    let rho = CMatrix::from_fn(d, d, |i, j| {
        psi[i * rest..(i + 1) * rest]
            .iter()
            .zip(&psi[j * rest..(j + 1) * rest])
            .map(|(x, y)| x * y.conj())
            .sum()
    });
    Ok(DensityMatrix(rho))
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::oracle::linalg::{expm_small, max_abs_diff};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn random_density(rng: &mut impl Rng, d: usize) -> DensityMatrix {
        let a = CMatrix::from_fn(d, d, |_, _| {
            Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        });
        let m = &a * a.adjoint();
        let tr = m.trace();
        DensityMatrix::new(m / tr).unwrap()
    }

    pub(crate) fn random_pointers(rng: &mut impl Rng, d: usize, a: usize) -> Overlaps {
        let states: Vec<Vec<Complex64>> = (0..d)
            .map(|_| {
                let v: Vec<Complex64> = (0..a)
                    .map(|_| {
                        Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
                    })
                    .collect();
                let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
                v.into_iter().map(|z| z / norm).collect()
            })
            .collect();
        Overlaps::from_pointers(&states).unwrap()
    }

    pub(crate) fn random_unitary(rng: &mut impl Rng, d: usize) -> CMatrix {
        let a = CMatrix::from_fn(d, d, |_, _| {
            Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        });
        expm_small(&((&a + a.adjoint()) * Complex64::new(0.5, 0.0)), 1.0).unwrap()
    }

    #[test]
    fn superop_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let rho = random_density(&mut rng, 3);
        let ones = Overlaps::new(CMatrix::from_element(3, 3, Complex64::new(1.0, 0.0))).unwrap();
        assert_eq!(superop_l(&rho, &ones).unwrap(), rho);
        let ideal = Overlaps::new(CMatrix::identity(3, 3)).unwrap();
        let m = superop_l(&rho, &ideal).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j {
                    rho.matrix()[(i, i)]
                } else {
                    Complex64::new(0.0, 0.0)
                };
                assert_eq!(m.matrix()[(i, j)], expect);
            }
        }
        let q = random_density(&mut rng, 2);
        let half = superop_l(&q, &Overlaps::qubit(0.5, 0.0).unwrap()).unwrap();
        assert!((half.matrix()[(0, 1)].norm() - 0.5 * q.matrix()[(0, 1)].norm()).abs() < 1e-15);
    }

    #[test]
    fn zero_cycles_and_frozen_diagonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let rho = random_density(&mut rng, 2);
        let u = random_unitary(&mut rng, 2);
        let o = random_pointers(&mut rng, 2, 2);
        assert_eq!(
            repeated_evolution(&rho, &u, &o, 0, ApparatusLayout::Single).unwrap(),
            rho
        );
        let ideal = Overlaps::new(CMatrix::identity(2, 2)).unwrap();
        let frozen = repeated_evolution(
            &rho,
            &CMatrix::identity(2, 2),
            &ideal,
            7,
            ApparatusLayout::Single,
        )
        .unwrap();
        for i in 0..2 {
            assert!((frozen.matrix()[(i, i)] - rho.matrix()[(i, i)]).norm() < 1e-15);
        }
    }

    #[test]
    fn single_and_multi_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in 0..=8 {
            for d in [2, 3, 4] {
                let rho = random_density(&mut rng, d);
                let u = random_unitary(&mut rng, d);
                let o = random_pointers(&mut rng, d, 2);
                let s = repeated_evolution(&rho, &u, &o, n, ApparatusLayout::Single).unwrap();
                let m = repeated_evolution(&rho, &u, &o, n, ApparatusLayout::Multi).unwrap();
                assert!(
                    max_abs_diff(s.matrix(), m.matrix()) < 1e-12,
                    "n = {n}, d = {d}"
                );
            }
        }
    }

    #[test]
    fn multi_limits() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let rho = random_density(&mut rng, 2);
        let u = random_unitary(&mut rng, 2);
        let o = random_pointers(&mut rng, 2, 2);
        assert!(matches!(
            repeated_evolution(&rho, &u, &o, 11, ApparatusLayout::Multi),
            Err(Error::Resource(_))
        ));
        let bad = CMatrix::from_element(2, 2, Complex64::new(1.0, 0.0)) * Complex64::new(2.0, 0.0);
        assert!(repeated_evolution(&rho, &bad, &o, 1, ApparatusLayout::Single).is_err());
    }

    #[test]
    fn validation() {
        assert!(DensityMatrix::new(CMatrix::identity(2, 2)).is_err());
        assert!(DensityMatrix::new(CMatrix::identity(17, 17) / Complex64::new(17.0, 0.0)).is_err());
        let neg = CMatrix::from_row_slice(
            2,
            2,
            &[
                Complex64::new(1.5, 0.0),
                Complex64::new(0.0, 0.0),
                Complex64::new(0.0, 0.0),
                Complex64::new(-0.5, 0.0),
            ],
        );
        assert!(DensityMatrix::new(neg).is_err());
        assert!(Overlaps::qubit(1.2, 0.0).is_err());
    }
}
