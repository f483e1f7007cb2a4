//! Bath correlation functions at finite temperature and their dressing by
//! the measurement schedule.
//!
//! Both branches are written as transforms over the detuning `ν`:
//! `g_B^±(u) = ∫ dν J_±(ν) e^{-iνu}` with
//!
//! ```text
//! J_+(ν) = G(ν+1)(n(ν+1)+1) + G(-ν-1) n(-ν-1)
//! J_-(ν) = G(1-ν) n(1-ν)    + G(ν-1)(n(ν-1)+1)
//! ```
//!
//! so every rate in the crate is an integral of `J_±` against a filter.

use std::f64::consts::TAU;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eta::NuSpectrum;
use crate::measurement::MeasurementSchedule;
use crate::quad::{self, Tolerance};
use crate::spectra::SpectralDensity;

/// `+` drives decay of the excited state, `−` re-excitation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    Plus,
    Minus,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BathState {
    spectrum: SpectralDensity,
    temperature: f64,
}

impl BathState {
    pub fn new(spectrum: SpectralDensity, temperature: f64) -> Result<Self> {
        if !(temperature.is_finite() && temperature >= 0.0) {
            return Err(Error::domain(format!(
                "temperature must be finite and >= 0, got {temperature}"
            )));
        }
        Ok(BathState {
            spectrum,
            temperature,
        })
    }

    pub fn zero_temperature(spectrum: SpectralDensity) -> Self {
        BathState {
            spectrum,
            temperature: 0.0,
        }
    }

    pub fn spectrum(&self) -> &SpectralDensity {
        &self.spectrum
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    /// Bose occupation `1/(e^{ω/T} - 1)`, zero at `T = 0`.
    pub fn occupation(&self, omega: f64) -> f64 {
        if self.temperature == 0.0 || omega <= 0.0 {
            return 0.0;
        }
        1.0 / (omega / self.temperature).exp_m1()
    }

    /// `G(ω) n(ω)`, finite at `ω → 0`.
    fn absorb(&self, omega: f64) -> f64 {
        if self.temperature == 0.0 || omega <= 0.0 {
            return 0.0;
        }
        self.spectrum.density(omega) / (omega / self.temperature).exp_m1()
    }

    /// `G(ω)(n(ω) + 1)`.
    fn emit(&self, omega: f64) -> f64 {
        if omega <= 0.0 {
            return 0.0;
        }
        if self.temperature == 0.0 {
            return self.spectrum.density(omega);
        }
        self.spectrum.density(omega) / -(-omega / self.temperature).exp_m1()
    }

    pub fn effective(&self, branch: Branch) -> EffectiveSpectrum<'_> {
        EffectiveSpectrum { bath: self, branch }
    }
}

/// `J_±(ν)` of a bath.
#[derive(Debug, Clone, Copy)]
pub struct EffectiveSpectrum<'a> {
    bath: &'a BathState,
    branch: Branch,
}

impl EffectiveSpectrum<'_> {
    /// Upper frequency beyond which thermal occupation is negligible.
    fn thermal_edge(&self) -> f64 {
        let (_, hi) = self.bath.spectrum.support();
        if self.bath.temperature == 0.0 {
            0.0
        } else {
            hi.min(60.0 * self.bath.temperature)
        }
    }

    /// Maps a bath frequency to the two detunings at which it appears.
    fn images(&self, omega: &[f64]) -> Vec<f64> {
        let thermal = self.bath.temperature > 0.0;
        let mut out = Vec::with_capacity(2 * omega.len());
        for &w in omega {
            match self.branch {
                Branch::Plus => {
                    out.push(w - 1.0);
                    if thermal {
                        out.push(-w - 1.0);
                    }
                }
                Branch::Minus => {
                    out.push(w + 1.0);
                    if thermal {
                        out.push(1.0 - w);
                    }
                }
            }
        }
        out
    }
}

impl NuSpectrum for EffectiveSpectrum<'_> {
    #[inline]
    fn value(&self, nu: f64) -> f64 {
        let b = self.bath;
        match self.branch {
            Branch::Plus => b.emit(nu + 1.0) + b.absorb(-nu - 1.0),
            Branch::Minus => b.absorb(1.0 - nu) + b.emit(nu - 1.0),
        }
    }

    fn range(&self) -> (f64, f64) {
        let (lo, hi) = self.bath.spectrum.support();
        let edge = self.thermal_edge();
        match self.branch {
            Branch::Plus => {
                let bottom = if edge > lo { -edge - 1.0 } else { lo - 1.0 };
                (bottom, hi - 1.0)
            }
            Branch::Minus => {
                let bottom = if edge > lo { 1.0 - edge } else { lo + 1.0 };
                (bottom, hi + 1.0)
            }
        }
    }

    fn kinks(&self) -> Vec<f64> {
        self.images(&self.bath.spectrum.kinks())
    }

    fn guides(&self) -> Vec<f64> {
        let (lo, hi) = self.bath.spectrum.support();
        self.images(&self.bath.spectrum.breakpoints(lo, hi))
    }

    fn is_zero(&self) -> bool {
        self.bath.spectrum.is_zero()
    }
}

/// Largest number of oscillation periods resolved by [`bath_corr`].
pub const MAX_CORR_PERIODS: f64 = 2e5;

/// `g_B^±(Δt)`.
pub fn bath_corr(b: &BathState, dt: f64, branch: Branch) -> Result<Complex64> {
    bath_corr_with(b, dt, branch, Tolerance::relative(1e-8))
}

pub fn bath_corr_with(b: &BathState, dt: f64, branch: Branch, tol: Tolerance) -> Result<Complex64> {
    if !dt.is_finite() {
        return Err(Error::domain(format!("time lag must be finite, got {dt}")));
    }
    let j = b.effective(branch);
    if j.is_zero() {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let (lo, hi) = j.range();
    let mut pts = j.kinks();
    pts.extend(j.guides());
    let u = dt.abs();
    let periods = (hi - lo) * u / TAU;
    if periods > MAX_CORR_PERIODS {
        return Err(Error::resource(format!(
            "g_B at lag {dt} spans {periods:.3e} oscillations (limit {MAX_CORR_PERIODS:.0e})"
        )));
    }
    if u > 0.0 {
        let step = TAU / u;
        let k0 = (lo / step).ceil() as i64;
        let k1 = (hi / step).floor() as i64;
        pts.extend((k0..=k1).map(|k| k as f64 * step));
    }
    let breaks = quad::prepare_breaks(lo, hi, pts);
    let total = j.integral()?;
    let tol = Tolerance {
        abs: tol.abs.max(1e-12 * total),
        ..tol
    };
    let est = quad::integrate(
        |nu| {
            let v = j.value(nu);
            if v == 0.0 {
                Complex64::new(0.0, 0.0)
            } else {
                Complex64::from_polar(v, -nu * u)
            }
        },
        &breaks,
        tol,
    )?;
    Ok(if dt < 0.0 {
        est.value.conj()
    } else {
        est.value
    })
}

impl EffectiveSpectrum<'_> {
    fn guides_and_range(&self) -> Vec<f64> {
        let (lo, hi) = self.range();
        let mut pts = self.kinks();
        pts.extend(self.guides());
        quad::prepare_breaks(lo, hi, pts)
    }

    /// `∫ J(ν) dν`, equal to `g_B(0)`.
    pub fn integral(&self) -> Result<f64> {
        if self.is_zero() {
            return Ok(0.0);
        }
        Ok(quad::integrate(
            |nu| self.value(nu),
            &self.guides_and_range(),
            Tolerance::relative(1e-10),
        )?
        .value)
    }
}

/// `F^±(t, s) = 2 Re[g_B^±(t - s) g_A(t, s)]`.
pub fn effective_corr(
    b: &BathState,
    sched: &MeasurementSchedule,
    t: f64,
    s: f64,
    branch: Branch,
) -> Result<f64> {
    let ga = sched.apparatus_correlation(t, s)?;
    if ga == Complex64::new(0.0, 0.0) {
        return Ok(0.0);
    }
    Ok(2.0 * (bath_corr(b, t - s, branch)? * ga).re)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CorrelationTime {
    /// Estimate from the measurement-induced decay of `g_A`.
    pub tau_a: f64,
    /// First 5% crossing of `|g_B^+|`.
    pub tau_b: f64,
    pub tau_f: f64,
}

/// `τ_A = (1 - 1/ln γ)(τ + τ_M)`, with the `γ = 0` and `γ = 1` limits.
pub fn tau_a(sched: &MeasurementSchedule) -> f64 {
    let g = sched.gamma_max();
    let p = sched.period();
    if g == 0.0 {
        p
    } else if g >= 1.0 {
        f64::INFINITY
    } else {
        (1.0 - 1.0 / g.ln()) * p
    }
}

/// Smallest lag after which `|g_B^+|` stays below 5% of its coincidence value.
pub fn bath_correlation_time(b: &BathState) -> Result<f64> {
    let j = b.effective(Branch::Plus);
    if j.is_zero() {
        return Ok(0.0);
    }
    let (lo, hi) = j.range();
    let w = hi.abs().max(lo.abs()).max(1.0);
    let t_max = (1e4f64).min(TAU * MAX_CORR_PERIODS / (hi - lo) * 0.99);
    let g0 = j.integral()?;
    let level = 0.05 * g0;
    let mag = |t: f64| -> Result<f64> {
        Ok(bath_corr_with(b, t, Branch::Plus, Tolerance::relative(1e-6))?.norm())
    };

    let mut probes = Vec::new();
    let mut t = 0.01 / w;
    while t < t_max {
        probes.push(t);
        t *= 2f64.powf(0.25);
    }
    probes.push(t_max);
    let values = probes.iter().map(|&t| mag(t)).collect::<Result<Vec<_>>>()?;
    // last probe index above the level
    let Some(last_above) = values.iter().rposition(|&v| v >= level) else {
        return Ok(probes[0]);
    };
    if last_above + 1 == probes.len() {
        log::warn!(
            "|g_B| does not decay below 5% of its peak by t = {t_max:.3e}; reporting tau_B = inf"
        );
        return Ok(f64::INFINITY);
    }
    let (mut a, mut c) = (probes[last_above], probes[last_above + 1]);
    for _ in 0..40 {
        let m = 0.5 * (a + c);
        if mag(m)? >= level {
            a = m;
        } else {
            c = m;
        }
        if c - a < 1e-6 * c {
            break;
        }
    }
    Ok(c)
}

/// `τ_F = min(τ_A, τ_B)`.
pub fn correlation_time(b: &BathState, sched: &MeasurementSchedule) -> Result<CorrelationTime> {
    let tau_a = tau_a(sched);
    let tau_b = bath_correlation_time(b)?;
    Ok(CorrelationTime {
        tau_a,
        tau_b,
        tau_f: tau_a.min(tau_b),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KernelKind {
    BathPlus,
    BathMinus,
    Apparatus,
    EffectivePlus,
    EffectiveMinus,
}

/// A complex two-time function sampled on a strictly increasing grid, with
/// natural cubic-spline interpolation.
#[derive(Debug, Clone)]
pub struct ComplexKernel {
    kind: KernelKind,
    grid: Vec<f64>,
    values: Vec<Complex64>,
    second: Vec<Complex64>,
}

impl ComplexKernel {
    pub fn new(kind: KernelKind, grid: Vec<f64>, values: Vec<Complex64>) -> Result<Self> {
        if grid.len() != values.len() || grid.len() < 2 {
            return Err(Error::domain(
                "kernel needs at least two samples and matching lengths",
            ));
        }
        if grid.windows(2).any(|w| !(w[1] > w[0])) || grid.iter().any(|t| !t.is_finite()) {
            return Err(Error::domain(
                "kernel grid must be finite and strictly increasing",
            ));
        }
        if values
            .iter()
            .any(|v| !(v.re.is_finite() && v.im.is_finite()))
        {
            return Err(Error::domain("kernel values must be finite"));
        }
        let second = spline_second_derivatives(&grid, &values);
        Ok(ComplexKernel {
            kind,
            grid,
            values,
            second,
        })
    }

    /// Samples `g_B^±` on `grid`.
    pub fn bath(b: &BathState, branch: Branch, grid: Vec<f64>) -> Result<Self> {
        let values = grid
            .iter()
            .map(|&t| bath_corr(b, t, branch))
            .collect::<Result<Vec<_>>>()?;
        let kind = match branch {
            Branch::Plus => KernelKind::BathPlus,
            Branch::Minus => KernelKind::BathMinus,
        };
        Self::new(kind, grid, values)
    }

    /// Samples `F^±(t, s)` at fixed `s` over `t ∈ grid`.
    pub fn effective(
        b: &BathState,
        sched: &MeasurementSchedule,
        s: f64,
        branch: Branch,
        grid: Vec<f64>,
    ) -> Result<Self> {
        let values = grid
            .iter()
            .map(|&t| effective_corr(b, sched, t, s, branch).map(|v| Complex64::new(v, 0.0)))
            .collect::<Result<Vec<_>>>()?;
        let kind = match branch {
            Branch::Plus => KernelKind::EffectivePlus,
            Branch::Minus => KernelKind::EffectiveMinus,
        };
        Self::new(kind, grid, values)
    }

    pub fn kind(&self) -> KernelKind {
        self.kind
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    /// Spline value at `t`; outside the grid the end samples are held.
    pub fn interpolate(&self, t: f64) -> Complex64 {
        let n = self.grid.len();
        if t <= self.grid[0] {
            return self.values[0];
        }
        if t >= self.grid[n - 1] {
            return self.values[n - 1];
        }
        let i = self.grid.partition_point(|&x| x <= t) - 1;
        let h = self.grid[i + 1] - self.grid[i];
        let a = (self.grid[i + 1] - t) / h;
        let b = 1.0 - a;
        self.values[i] * a
            + self.values[i + 1] * b
            + (self.second[i] * (a * a * a - a) + self.second[i + 1] * (b * b * b - b))
                * (h * h / 6.0)
    }
}

fn spline_second_derivatives(x: &[f64], y: &[Complex64]) -> Vec<Complex64> {
    let n = x.len();
    let zero = Complex64::new(0.0, 0.0);
    let mut m = vec![zero; n];
    if n < 4 {
        return m;
    }
    // end curvatures from the cubic through the four outermost samples
    m[0] = end_curvature([x[0], x[1], x[2], x[3]], [y[0], y[1], y[2], y[3]]);
    m[n - 1] = end_curvature(
        [x[n - 1], x[n - 2], x[n - 3], x[n - 4]],
        [y[n - 1], y[n - 2], y[n - 3], y[n - 4]],
    );
    let mut c_prime = vec![0.0; n];
    let mut d_prime = vec![zero; n];
    d_prime[0] = m[0];
    for i in 1..n - 1 {
        let h0 = x[i] - x[i - 1];
        let h1 = x[i + 1] - x[i];
        let a = h0 / 6.0;
        let b = (h0 + h1) / 3.0;
        let c = h1 / 6.0;
        let mut d = (y[i + 1] - y[i]) / h1 - (y[i] - y[i - 1]) / h0;
        if i == n - 2 {
            d -= m[n - 1] * c;
        }
        let denom = b - a * c_prime[i - 1];
        c_prime[i] = if i == n - 2 { 0.0 } else { c / denom };
        d_prime[i] = (d - d_prime[i - 1] * a) / denom;
    }
    for i in (1..n - 1).rev() {
        m[i] = d_prime[i] - m[i + 1] * c_prime[i];
    }
    m
}

fn end_curvature(x: [f64; 4], y: [Complex64; 4]) -> Complex64 {
    let d01 = (y[1] - y[0]) / (x[1] - x[0]);
    let d12 = (y[2] - y[1]) / (x[2] - x[1]);
    let d23 = (y[3] - y[2]) / (x[3] - x[2]);
    let d012 = (d12 - d01) / (x[2] - x[0]);
    let d123 = (d23 - d12) / (x[3] - x[1]);
    let d0123 = (d123 - d012) / (x[3] - x[0]);
    d012 * 2.0 + d0123 * (2.0 * (2.0 * x[0] - x[1] - x[2]))
}
