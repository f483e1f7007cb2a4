//! Second-order short-time decay rates of the excited state.
//!
//! All rates are η-integrals `∫ dη G(η/τ + 1) F(η) sinc²(η/2)` with
//! `η = (ω - ω_eg) τ` and a filter `F` set by the measurement kind.

use std::f64::consts::{PI, TAU};

use serde::Serialize;

use crate::bathcorr::{BathState, Branch};
use crate::error::{Error, Result};
use crate::eta::{filtered_integral, Envelope, EtaOptions};
use crate::measurement::{sinc, MeasurementSchedule};
use crate::spectra::SpectralDensity;

/// Largest `N` accepted by the explicit pair sum.
pub const NAIVE_MAX_N: u64 = 10_000;

/// How the measurement-pair double sum is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PairSum {
    /// Geometric closed form for identical factors, `O(N)` recursion otherwise.
    #[default]
    Fast,
    /// The literal `O(N²)` sum.
    Naive,
}

#[derive(Debug, Clone)]
pub struct ShortTimeQuery {
    spectrum: SpectralDensity,
    sched: MeasurementSchedule,
    n: u64,
}

impl ShortTimeQuery {
    pub fn new(spectrum: SpectralDensity, sched: MeasurementSchedule, n: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::domain("need at least one measurement period"));
        }
        Ok(ShortTimeQuery { spectrum, sched, n })
    }

    /// Builds the query from a total time that must be a whole number of periods.
    pub fn from_total_time(
        spectrum: SpectralDensity,
        sched: MeasurementSchedule,
        t_f: f64,
    ) -> Result<Self> {
        let q = t_f / sched.period();
        let n = q.round();
        if !(q.is_finite() && n >= 1.0 && (q - n).abs() <= 1e-9 * n) {
            return Err(Error::domain(format!(
                "t_F = {t_f} is not a positive integer multiple of the period {}",
                sched.period()
            )));
        }
        Self::new(spectrum, sched, n as u64)
    }

    pub fn spectrum(&self) -> &SpectralDensity {
        &self.spectrum
    }

    pub fn schedule(&self) -> &MeasurementSchedule {
        &self.sched
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn total_time(&self) -> f64 {
        self.n as f64 * self.sched.period()
    }
}

fn check_tau(tau: f64) -> Result<()> {
    if tau.is_finite() && tau > 0.0 {
        Ok(())
    } else {
        Err(Error::domain(format!(
            "tau must be finite and positive, got {tau}"
        )))
    }
}

fn run(spectrum: &SpectralDensity, tau: f64, env: Envelope, opts: EtaOptions) -> Result<f64> {
    check_tau(tau)?;
    let bath = BathState::zero_temperature(spectrum.clone());
    let j = bath.effective(Branch::Plus);
    filtered_integral(&j, tau, env, opts)
}

/// `R(τ, t_F)` for a finite number of measurements.
pub fn rate_general(q: &ShortTimeQuery) -> Result<f64> {
    rate_general_with(q, PairSum::Fast, EtaOptions::default())
}

pub fn rate_general_with(q: &ShortTimeQuery, method: PairSum, opts: EtaOptions) -> Result<f64> {
    let naive = method == PairSum::Naive;
    if naive && q.n > NAIVE_MAX_N {
        return Err(Error::resource(format!(
            "explicit pair sum with N = {} exceeds N = {NAIVE_MAX_N}; use the closed-form path",
            q.n
        )));
    }
    let tau = q.sched.tau();
    let env = Envelope::Bracket {
        sched: &q.sched,
        n: q.n,
        naive,
    };
    Ok(tau / q.sched.period() * run(&q.spectrum, tau, env, opts)?)
}

/// Rate with ideal projective measurements, `τ ∫ G(ω) sinc²((ω-1)τ/2) dω`.
pub fn rate_projective(spectrum: &SpectralDensity, tau: f64) -> Result<f64> {
    run(spectrum, tau, Envelope::Unit, EtaOptions::default())
}

/// `N → ∞` rate under identical measurements with factor `γ e^{iθ}`.
pub fn rate_measured(spectrum: &SpectralDensity, tau: f64, gamma: f64, theta: f64) -> Result<f64> {
    rate_measured_with(spectrum, tau, gamma, theta, EtaOptions::default())
}

pub fn rate_measured_with(
    spectrum: &SpectralDensity,
    tau: f64,
    gamma: f64,
    theta: f64,
    opts: EtaOptions,
) -> Result<f64> {
    crate::measurement::filter_h(gamma, 0.0)?;
    check_theta(theta)?;
    run(spectrum, tau, Envelope::Measured { gamma, theta }, opts)
}

/// Rate under `N` phase-modulation pulses.
pub fn rate_pmp(spectrum: &SpectralDensity, tau: f64, theta: f64, n: u64) -> Result<f64> {
    if n < 2 {
        return Err(Error::domain(format!("rate_pmp needs N >= 2, got {n}")));
    }
    check_theta(theta)?;
    run(
        spectrum,
        tau,
        Envelope::Pulses { theta, n },
        EtaOptions::default(),
    )
}

fn check_theta(theta: f64) -> Result<()> {
    if theta.is_finite() {
        Ok(())
    } else {
        Err(Error::domain("phase must be finite"))
    }
}

/// Two-tooth δ-comb limit of [`rate_pmp`].
pub fn rate_pmp_comb(spectrum: &SpectralDensity, tau: f64, theta: f64) -> Result<f64> {
    check_tau(tau)?;
    if !(0.0..=TAU).contains(&theta) {
        return Err(Error::domain(format!(
            "comb form assumes theta in [0, 2π], got {theta}"
        )));
    }
    let s0 = sinc(0.5 * theta);
    let s1 = sinc(0.5 * theta - PI);
    Ok(TAU * spectrum.density(theta / tau + 1.0) * s0 * s0
        + TAU * spectrum.density((theta - TAU) / tau + 1.0) * s1 * s1)
}

/// Fermi golden-rule rate `2π G(ω_eg)`.
pub fn golden_rule(spectrum: &SpectralDensity) -> f64 {
    TAU * spectrum.density(1.0)
}

/// Upper bound on [`rate_general`] for factor moduli up to `gamma_max`.
pub fn zeno_bound(spectrum: &SpectralDensity, tau: f64, gamma_max: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&gamma_max) {
        return Err(Error::domain(format!(
            "zeno_bound needs 0 <= gamma_max < 1, got {gamma_max}"
        )));
    }
    Ok((1.0 + 2.0 * gamma_max / (1.0 - gamma_max)) * rate_projective(spectrum, tau)?)
}

/// Half-width `Δω` of `G(ω + ω_eg)` about the transition, taken from the
/// support of the spectrum.
pub fn comb_half_width(spectrum: &SpectralDensity) -> Result<f64> {
    if spectrum.is_zero() {
        return Err(Error::DegenerateSpectrum);
    }
    let (lo, hi) = spectrum.support();
    Ok((hi - 1.0).abs().max((lo - 1.0).abs()))
}

/// Whether `2π/t_F < Δω/10`, the regime in which the pulse filter acts as a δ-comb.
pub fn comb_regime(spectrum: &SpectralDensity, tau: f64, n: u64) -> Result<bool> {
    Ok(TAU / (n as f64 * tau) < comb_half_width(spectrum)? / 10.0)
}
