//! Measurement schedule, decoherence factors and the apparatus-side filters.
//!
//! Layout of one period `p = τ_M + τ`: the n-th measurement occupies
//! `[(n-1)p, (n-1)p + τ_M)` and the n-th free interval
//! `[(n-1)p + τ_M, np)`. All windows are left-closed.

use std::f64::consts::{PI, TAU};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracle::linalg;

/// Decoherence factors `γ_n e^{iθ_n}` of the successive measurements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Factors {
    Identical {
        gamma: f64,
        theta: f64,
    },
    /// Per-measurement factors; beyond the last entry the final one repeats.
    Sequence(Vec<(f64, f64)>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSchedule {
    tau: f64,
    tau_m: f64,
    factors: Factors,
}

/// Which window of the schedule contains a given instant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Window {
    Measuring(u64),
    Free(u64),
}

/// Wrap a phase into `[0, 2π)`.
pub fn wrap_phase(theta: f64) -> f64 {
    let t = theta.rem_euclid(TAU);
    if t >= TAU {
        0.0
    } else {
        t
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if (0.0..=1.0).contains(&gamma) {
        Ok(())
    } else {
        Err(Error::domain(format!(
            "decoherence modulus must lie in [0, 1], got {gamma}"
        )))
    }
}

impl MeasurementSchedule {
    pub fn new(tau: f64, tau_m: f64, factors: Factors) -> Result<Self> {
        if !(tau.is_finite() && tau > 0.0) {
            return Err(Error::domain(format!(
                "free interval tau must be positive, got {tau}"
            )));
        }
        if !(tau_m.is_finite() && tau_m >= 0.0) {
            return Err(Error::domain(format!(
                "measurement duration must be >= 0, got {tau_m}"
            )));
        }
        let factors = match factors {
            Factors::Identical { gamma, theta } => {
                check_gamma(gamma)?;
                if !theta.is_finite() {
                    return Err(Error::domain("phase must be finite"));
                }
                Factors::Identical {
                    gamma,
                    theta: wrap_phase(theta),
                }
            }
            Factors::Sequence(seq) => {
                if seq.is_empty() {
                    return Err(Error::domain("factor sequence is empty"));
                }
                let mut out = Vec::with_capacity(seq.len());
                for (g, t) in seq {
                    check_gamma(g)?;
                    if !t.is_finite() {
                        return Err(Error::domain("phase must be finite"));
                    }
                    out.push((g, wrap_phase(t)));
                }
                Factors::Sequence(out)
            }
        };
        Ok(MeasurementSchedule {
            tau,
            tau_m,
            factors,
        })
    }

    /// Instantaneous identical measurements, the common case.
    pub fn identical(tau: f64, gamma: f64, theta: f64) -> Result<Self> {
        Self::new(tau, 0.0, Factors::Identical { gamma, theta })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn tau_m(&self) -> f64 {
        self.tau_m
    }

    pub fn period(&self) -> f64 {
        self.tau + self.tau_m
    }

    pub fn factors(&self) -> &Factors {
        &self.factors
    }

    /// `(γ, θ)` when all factors coincide.
    pub fn identical_factor(&self) -> Option<(f64, f64)> {
        match &self.factors {
            Factors::Identical { gamma, theta } => Some((*gamma, *theta)),
            Factors::Sequence(seq) if seq.windows(2).all(|w| w[0] == w[1]) => Some(seq[0]),
            Factors::Sequence(_) => None,
        }
    }

    /// Largest modulus over all factors.
    pub fn gamma_max(&self) -> f64 {
        match &self.factors {
            Factors::Identical { gamma, .. } => *gamma,
            Factors::Sequence(seq) => seq.iter().map(|f| f.0).fold(0.0, f64::max),
        }
    }

    /// Decoherence factor of the `l`-th measurement (1-based).
    pub fn factor(&self, l: u64) -> Complex64 {
        let (g, t) = match &self.factors {
            Factors::Identical { gamma, theta } => (*gamma, *theta),
            Factors::Sequence(seq) => {
                let i = (l.max(1) - 1) as usize;
                seq[i.min(seq.len() - 1)]
            }
        };
        Complex64::from_polar(g, t)
    }

    /// `Π_{l=from+1}^{to} γ_l e^{iθ_l}`; empty product is 1.
    pub fn factor_product(&self, from: u64, to: u64) -> Complex64 {
        if to <= from {
            return Complex64::new(1.0, 0.0);
        }
        match &self.factors {
            Factors::Identical { gamma, theta } => {
                let d = to - from;
                let modulus = if d > i32::MAX as u64 {
                    0.0
                } else {
                    gamma.powi(d as i32)
                };
                Complex64::from_polar(modulus, wrap_phase(d as f64 * theta))
            }
            Factors::Sequence(seq) => {
                let last = seq.len() as u64;
                let mut acc = Complex64::new(1.0, 0.0);
                let explicit_end = to.min(last);
                for l in (from + 1)..=explicit_end {
                    acc *= self.factor(l);
                }
                if to > last {
                    let start = from.max(last);
                    let reps = to - start;
                    let (g, t) = seq[seq.len() - 1];
                    let modulus = if reps > i32::MAX as u64 {
                        0.0
                    } else {
                        g.powi(reps as i32)
                    };
                    acc *= Complex64::from_polar(modulus, wrap_phase(reps as f64 * t));
                }
                acc
            }
        }
    }

    /// Classify `t` into its measurement or free window.
    pub fn interval_index(&self, t: f64) -> Result<Window> {
        if !(t.is_finite() && t >= 0.0) {
            return Err(Error::domain(format!(
                "time must be finite and >= 0, got {t}"
            )));
        }
        Ok(self.window(t))
    }

    pub(crate) fn window(&self, t: f64) -> Window {
        let p = self.period();
        let q = snap(t / p);
        let k = q.floor();
        let r = snap_to(t - k * p, self.tau_m, p);
        let n = k as u64 + 1;
        if r < self.tau_m {
            Window::Measuring(n)
        } else {
            Window::Free(n)
        }
    }

    /// Apparatus correlation `g_A(t, s)` for `0 <= s <= t`.
    pub fn apparatus_correlation(&self, t: f64, s: f64) -> Result<Complex64> {
        if !(s.is_finite() && t.is_finite() && s >= 0.0) {
            return Err(Error::domain(format!(
                "need finite 0 <= s <= t, got s = {s}, t = {t}"
            )));
        }
        if s > t {
            return Err(Error::domain(format!(
                "apparatus correlation needs s <= t, got s = {s} > t = {t}"
            )));
        }
        Ok(match (self.window(t), self.window(s)) {
            (Window::Free(nt), Window::Free(ns)) => self.factor_product(ns, nt),
            _ => Complex64::new(0.0, 0.0),
        })
    }
}

/// Snap values within rounding distance of an integer onto it, so that grid
/// points built as `k * dt` land in the window that opens there.
fn snap(q: f64) -> f64 {
    let r = q.round();
    if (q - r).abs() <= 1e-9 * q.abs().max(1.0) {
        r
    } else {
        q
    }
}

fn snap_to(r: f64, edge: f64, p: f64) -> f64 {
    let tol = 1e-9 * p;
    if (r - edge).abs() <= tol {
        edge
    } else {
        r.max(0.0)
    }
}

/// `h(γ, x) = (1 - γ²) / (1 + γ² - 2γ cos x)`; requires `0 <= γ < 1`.
pub fn filter_h(gamma: f64, x: f64) -> Result<f64> {
    if gamma == 1.0 {
        return Err(Error::SingularFilter);
    }
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::domain(format!(
            "filter_h needs 0 <= gamma < 1, got {gamma}"
        )));
    }
    if !x.is_finite() {
        return Err(Error::domain("filter_h phase must be finite"));
    }
    Ok(h_unchecked(gamma, x))
}

/// Denominator written as `(1-γ)² + 4γ sin²(x/2)` to keep precision near `γ → 1`.
#[inline]
pub(crate) fn h_unchecked(gamma: f64, x: f64) -> f64 {
    let s = (0.5 * x).sin();
    let om = 1.0 - gamma;
    om * (1.0 + gamma) / (om * om + 4.0 * gamma * s * s)
}

/// `g(x) = sin²(Nx/2) / (N sin²(x/2))`, equal to `N` at `x = 2nπ`.
pub fn filter_g(x: f64, n: u64) -> Result<f64> {
    if n == 0 {
        return Err(Error::domain("filter_g needs N >= 1"));
    }
    if !x.is_finite() {
        return Err(Error::domain("filter_g phase must be finite"));
    }
    Ok(g_unchecked(x, n))
}

#[inline]
pub(crate) fn g_unchecked(x: f64, n: u64) -> f64 {
    let nf = n as f64;
    // reduce to (-π, π]; g is 2π-periodic
    let mut y = x.rem_euclid(TAU);
    if y > PI {
        y -= TAU;
    }
    let s = (0.5 * y).sin();
    if s.abs() < 1e-12 {
        return nf;
    }
    // sin(N y / 2) with N y reduced again to limit argument growth
    let arg = (0.5 * nf * y).rem_euclid(PI);
    let sn = arg.sin();
    sn * sn / (nf * s * s)
}

/// `sin(x)/x` with `sinc(0) = 1`.
#[inline]
pub fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        let x2 = x * x;
        1.0 - x2 / 6.0 + x2 * x2 / 120.0
    } else {
        x.sin() / x
    }
}

/// Apparatus Hamiltonians conditioned on the TLS state, plus its initial state.
#[derive(Debug, Clone)]
pub struct ApparatusModel {
    h_g: DMatrix<Complex64>,
    h_e: DMatrix<Complex64>,
    state: Vec<Complex64>,
}

pub const MAX_APPARATUS_DIM: usize = 8;

impl ApparatusModel {
    pub fn new(
        h_g: DMatrix<Complex64>,
        h_e: DMatrix<Complex64>,
        state: Vec<Complex64>,
    ) -> Result<Self> {
        let dim = state.len();
        if dim == 0 || dim > MAX_APPARATUS_DIM {
            return Err(Error::domain(format!(
                "apparatus dimension must be 1..={MAX_APPARATUS_DIM}, got {dim}"
            )));
        }
        for (name, h) in [("H_g", &h_g), ("H_e", &h_e)] {
            if h.nrows() != dim || h.ncols() != dim {
                return Err(Error::domain(format!("{name} must be {dim}x{dim}")));
            }
            if !linalg::is_hermitian(h, 1e-12) {
                return Err(Error::domain(format!("{name} is not Hermitian")));
            }
        }
        let norm: f64 = state.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(Error::domain(format!(
                "apparatus state must be normalised, |psi| = {norm}"
            )));
        }
        Ok(ApparatusModel { h_g, h_e, state })
    }

    pub fn dim(&self) -> usize {
        self.state.len()
    }

    /// Overlap `⟨A_e|A_g⟩` after a measurement of duration `tau_m`, returned as
    /// `(γ, θ)` with `θ ∈ [0, 2π)`.
    pub fn decoherence_factor(&self, tau_m: f64) -> Result<(f64, f64)> {
        if !(tau_m.is_finite() && tau_m >= 0.0) {
            return Err(Error::domain(format!(
                "measurement duration must be >= 0, got {tau_m}"
            )));
        }
        let psi = nalgebra::DVector::from_vec(self.state.clone());
        let a_g = linalg::expm_small(&self.h_g, tau_m)? * &psi;
        let a_e = linalg::expm_small(&self.h_e, tau_m)? * &psi;
        let overlap = a_e.dotc(&a_g);
        // Cauchy-Schwarz bounds the overlap by 1; strip roundoff above it
        let gamma = overlap.norm().min(1.0);
        let theta = if gamma == 0.0 {
            0.0
        } else {
            wrap_phase(overlap.arg())
        };
        Ok((gamma, theta))
    }
}
