//! The short-time rate as a literal sum over discrete bath modes and
//! measurement pairs.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::measurement::{sinc, MeasurementSchedule};
use crate::spectra::SpectralDensity;

/// Work budget on `N·K` for [`discrete_mode_sum`].
pub const MODE_SUM_BUDGET: f64 = 1e9;

/// Midpoint discretisation of a spectrum into `K` modes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscreteBath {
    pub omega: Vec<f64>,
    /// `|g_k|² = G(ω_k) Δω`.
    pub coupling: Vec<f64>,
}

impl DiscreteBath {
    pub fn new(spectrum: &SpectralDensity, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::domain("need at least one mode"));
        }
        if spectrum.is_zero() {
            return Err(Error::DegenerateSpectrum);
        }
        let (lo, hi) = spectrum.support();
        let dw = (hi - lo) / k as f64;
        let omega: Vec<f64> = (0..k).map(|i| lo + (i as f64 + 0.5) * dw).collect();
        let coupling = omega.iter().map(|&w| spectrum.density(w) * dw).collect();
        Ok(DiscreteBath { omega, coupling })
    }

    /// A single mode.
    pub fn single(omega: f64, coupling: f64) -> Self {
        DiscreteBath {
            omega: vec![omega],
            coupling: vec![coupling],
        }
    }

    pub fn len(&self) -> usize {
        self.omega.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omega.is_empty()
    }

    pub fn total_coupling(&self) -> f64 {
        pairwise(&self.coupling)
    }
}

/// Fixed-tree pairwise sum, independent of how the terms were produced.
fn pairwise(v: &[f64]) -> f64 {
    match v.len() {
        0 => 0.0,
        1 => v[0],
        n => pairwise(&v[..n / 2]) + pairwise(&v[n / 2..]),
    }
}

/// `(τ²/t_F) Σ_k |g_k|² sinc²(Δ_k τ/2) [N + 2 Re Σ_{m} Σ_{n<m} e^{i(n-m)Δ_k p} Π_{l=n+1}^{m} f_l]`
/// with `Δ_k = ω_k - ω_eg` and `t_F = N p`.
///
/// The inner double sum is accumulated per mode by the recursion
/// `T_m = e^{-iΔp} f_m (1 + T_{m-1})`, one explicit step per measurement.
pub fn discrete_mode_sum(db: &DiscreteBath, sched: &MeasurementSchedule, n: u64) -> Result<f64> {
    if n == 0 {
        return Err(Error::domain("need at least one measurement period"));
    }
    let work = n as f64 * db.len() as f64;
    if work > MODE_SUM_BUDGET {
        return Err(Error::resource(format!(
            "mode sum needs N·K = {work:.3e} > {MODE_SUM_BUDGET:e} operations"
        )));
    }
    let tau = sched.tau();
    let p = sched.period();
    let factors: Vec<Complex64> = (1..=n).map(|l| sched.factor(l)).collect();
    let terms: Vec<f64> = db
        .omega
        .par_iter()
        .zip(db.coupling.par_iter())
        .map(|(&w, &g2)| {
            let delta = w - 1.0;
            let s = sinc(0.5 * delta * tau);
            let step = Complex64::from_polar(1.0, -delta * p);
            let mut t = Complex64::new(0.0, 0.0);
            let mut pairs = Complex64::new(0.0, 0.0);
            for f in &factors[1..] {
                t = step * f * (1.0 + t);
                pairs += t;
            }
            g2 * s * s * (n as f64 + 2.0 * pairs.re)
        })
        .collect();
    Ok(tau * tau / (n as f64 * p) * pairwise(&terms))
}
