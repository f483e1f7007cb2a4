//! Long-time population dynamics of the measured two-level system.
//!
//! The populations obey the Born rate equation
//!
//! ```text
//! dP_e/dt = -∫₀ᵗ F⁺(t,s) P_e(s) ds + ∫₀ᵗ F⁻(t,s) P_g(s) ds
//! ```
//!
//! with `F^±(t,s) = 2 Re[g_B^±(t-s) g_A(t,s)]`. Every quantity here is
//! computed on the detuning axis: `g_B^± = ∫ dν J_±(ν) e^{-iνu}`, and the
//! apparatus factor only multiplies whole free windows, so time integrals of
//! the kernel reduce to closed forms in `ν`.

use std::collections::BTreeSet;
use std::f64::consts::TAU;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::bathcorr::{correlation_time, BathState, Branch};
use crate::error::{Error, Result};
use crate::eta::{filtered_integral, Envelope, EtaOptions, NuSpectrum};
use crate::measurement::{Factors, MeasurementSchedule, Window};
use crate::quad::{self, kronrod_nodes, Tolerance};
use crate::spectra::SpectralDensity;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Volterra,
    TimeLocal,
    Markov,
}

/// Excited-state decay rate `r_e` and ground-state excitation rate `r_g`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatePair {
    pub r_e: f64,
    pub r_g: f64,
}

impl RatePair {
    pub fn new(r_e: f64, r_g: f64) -> Result<Self> {
        if !(r_e.is_finite() && r_g.is_finite() && r_e >= 0.0 && r_g >= 0.0) {
            return Err(Error::domain(format!(
                "rates must be finite and >= 0, got ({r_e}, {r_g})"
            )));
        }
        Ok(RatePair { r_e, r_g })
    }

    /// Accept quadrature output, zeroing negative noise of size up to
    /// `1e-10 + 1e-9·|other|`. Anything more negative is a numerical failure.
    pub(crate) fn from_quadrature(r_e: f64, r_g: f64) -> Result<Self> {
        let fix = |r: f64, other: f64, name: &str| -> Result<f64> {
            if r >= 0.0 {
                return Ok(r);
            }
            let slack = 1e-10 + 1e-9 * other.abs();
            if r >= -slack {
                log::warn!("clamping {name} = {r:e} to 0");
                Ok(0.0)
            } else {
                Err(Error::Numerical {
                    message: format!("negative {name}"),
                    estimate: r,
                    error: slack,
                })
            }
        };
        Ok(RatePair {
            r_e: fix(r_e, r_g, "R_e")?,
            r_g: fix(r_g, r_e, "R_g")?,
        })
    }

    pub fn total(&self) -> f64 {
        self.r_e + self.r_g
    }
}

/// Sampled populations with the rates that drove them.
///
/// `r_e[i]`, `r_g[i]` are the rates at `times[i]`; for the Volterra solver
/// they are averages over the step ending at `times[i]` (zero at `i = 0`).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PopulationTrace {
    pub times: Vec<f64>,
    pub p_e: Vec<f64>,
    pub p_g: Vec<f64>,
    pub r_e: Vec<f64>,
    pub r_g: Vec<f64>,
    pub scheme: Scheme,
    pub dt: f64,
}

impl PopulationTrace {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// `P_e` at the sample nearest to `t`.
    pub fn p_e_at(&self, t: f64) -> Option<f64> {
        let i = self.times.partition_point(|&x| x < t);
        let candidates = [i.checked_sub(1), Some(i).filter(|&i| i < self.times.len())];
        candidates
            .into_iter()
            .flatten()
            .min_by(|&a, &b| {
                (self.times[a] - t)
                    .abs()
                    .total_cmp(&(self.times[b] - t).abs())
            })
            .map(|i| self.p_e[i])
    }
}

/// `μ_k(a) = ∫₀¹ z^k e^{-iaz} dz` for `k = 0, 1, 2`.
pub(crate) fn mu(a: f64) -> [Complex64; 3] {
    if a.abs() <= 2.0 {
        let mut out = [Complex64::new(0.0, 0.0); 3];
        let step = Complex64::new(0.0, -a);
        let mut pow = Complex64::new(1.0, 0.0);
        for j in 0..40 {
            for (k, o) in out.iter_mut().enumerate() {
                *o += pow / (j + k + 1) as f64;
            }
            pow = pow * step / (j + 1) as f64;
            if pow.norm() < 1e-18 {
                break;
            }
        }
        out
    } else {
        let e = Complex64::from_polar(1.0, -a);
        let ia = Complex64::new(0.0, a);
        let m0 = (1.0 - e) / ia;
        let m1 = (m0 - e) / ia;
        let m2 = (2.0 * m1 - e) / ia;
        [m0, m1, m2]
    }
}

/// `∫₀^L e^{-iνu} du`.
fn interval_transform(nu: f64, len: f64) -> Complex64 {
    if len == 0.0 {
        return Complex64::new(0.0, 0.0);
    }
    len * mu(nu * len)[0]
}

/// Position of `t` inside its free window, or `None` when the rate vanishes.
#[derive(Debug, Clone, Copy)]
struct FreePoint {
    /// Time elapsed since the window opened.
    r: f64,
    /// Number of earlier free windows.
    earlier: u64,
    window: u64,
}

fn free_point(sched: &MeasurementSchedule, t: f64) -> Option<FreePoint> {
    if t <= 0.0 {
        return None;
    }
    match sched.window(t) {
        Window::Measuring(_) => None,
        Window::Free(n) => {
            let start = (n - 1) as f64 * sched.period() + sched.tau_m();
            Some(FreePoint {
                r: (t - start).max(0.0),
                earlier: n - 1,
                window: n,
            })
        }
    }
}

/// `Ψ_t(ν) = ∫₀ᵗ e^{-iν(t-s)} g_A(t, s) ds`.
struct WindowSum<'a> {
    sched: &'a MeasurementSchedule,
}

impl WindowSum<'_> {
    fn psi(&self, nu: f64, pt: &FreePoint) -> Complex64 {
        let sched = self.sched;
        let own = interval_transform(nu, pt.r);
        if pt.earlier == 0 {
            return own;
        }
        let p = sched.period();
        let lead = Complex64::from_polar(1.0, -nu * (sched.tau_m() + pt.r))
            * interval_transform(nu, sched.tau());
        let earlier = match sched.factors() {
            Factors::Identical { gamma, theta } => {
                let f = Complex64::from_polar(*gamma, *theta);
                let d = pt.earlier;
                let w = f * Complex64::from_polar(1.0, -nu * p);
                if (1.0 - w).norm() < 1e-8 {
                    f * d as f64
                } else {
                    let modulus = if d > i32::MAX as u64 {
                        0.0
                    } else {
                        gamma.powi(d as i32)
                    };
                    let phase =
                        (d as f64 * theta).rem_euclid(TAU) - (nu * p * d as f64).rem_euclid(TAU);
                    let wd = Complex64::from_polar(modulus, phase);
                    f * (1.0 - wd) / (1.0 - w)
                }
            }
            Factors::Sequence(_) => {
                let step = Complex64::from_polar(1.0, -nu * p);
                let mut acc = Complex64::new(0.0, 0.0);
                let mut prod = Complex64::new(1.0, 0.0);
                let mut shift = Complex64::new(1.0, 0.0);
                for d in 1..=pt.earlier {
                    prod *= sched.factor(pt.window - d + 1);
                    if prod.norm() < 1e-18 {
                        break;
                    }
                    acc += prod * shift;
                    shift *= step;
                }
                acc
            }
        };
        own + lead * earlier
    }
}

/// Longest lag `u = t - s` that contributes to the rate at `t`.
fn effective_lag(sched: &MeasurementSchedule, t: f64) -> f64 {
    let g = sched.gamma_max();
    let reach = if g == 0.0 {
        sched.tau()
    } else if g >= 1.0 {
        f64::INFINITY
    } else {
        sched.tau() + sched.period() * (1.0 + 42.0 / -g.ln())
    };
    t.min(reach)
}

/// Fixed Kronrod nodes covering `J`'s range with panels of at most half an
/// oscillation of `e^{-iνu}` at the largest lag.
fn nu_nodes(j: &dyn NuSpectrum, u_max: f64) -> Result<Vec<(f64, f64)>> {
    let (lo, hi) = j.range();
    let width = (std::f64::consts::PI / u_max.max(1e-300)).min((hi - lo) / 64.0);
    let panels = (hi - lo) / width;
    if panels > 2e7 {
        return Err(Error::resource(format!(
            "time-local rate needs {panels:.3e} ν-panels; shorten t or lower gamma"
        )));
    }
    let breaks = quad::prepare_breaks(lo, hi, j.kinks().into_iter().chain(j.guides()));
    let mut nodes = Vec::with_capacity(21 * (panels as usize + breaks.len()));
    for seg in breaks.windows(2) {
        let n = ((seg[1] - seg[0]) / width).ceil().max(1.0) as usize;
        let h = (seg[1] - seg[0]) / n as f64;
        for i in 0..n {
            let a = seg[0] + i as f64 * h;
            let b = if i + 1 == n { seg[1] } else { a + h };
            nodes.extend(kronrod_nodes(a, b));
        }
    }
    Ok(nodes)
}

/// Time-local rates `R_{e,g}(t) = ∫₀ᵗ F^±(t,s) ds`.
///
/// Unlike the coarse-grained rates these are not sign-definite: shortly after
/// a measurement the contribution of earlier windows can drive them negative.
pub fn timelocal_rates(b: &BathState, sched: &MeasurementSchedule, t: f64) -> Result<RatePair> {
    Ok(timelocal_rates_many(b, sched, &[t])?[0])
}

/// [`timelocal_rates`] at several instants, sharing the spectrum evaluations.
pub fn timelocal_rates_many(
    b: &BathState,
    sched: &MeasurementSchedule,
    ts: &[f64],
) -> Result<Vec<RatePair>> {
    for &t in ts {
        if !(t.is_finite() && t >= 0.0) {
            return Err(Error::domain(format!(
                "time must be finite and >= 0, got {t}"
            )));
        }
    }
    let points: Vec<Option<FreePoint>> = ts.iter().map(|&t| free_point(sched, t)).collect();
    let u_max = ts
        .iter()
        .zip(&points)
        .filter(|(_, p)| p.is_some())
        .map(|(&t, _)| effective_lag(sched, t))
        .fold(0.0, f64::max);
    let mut re = vec![0.0; ts.len()];
    let mut rg = vec![0.0; ts.len()];
    if u_max > 0.0 && !b.spectrum().is_zero() {
        let sum = WindowSum { sched };
        for (branch, out) in [(Branch::Plus, &mut re), (Branch::Minus, &mut rg)] {
            let j = b.effective(branch);
            for (nu, w) in nu_nodes(&j, u_max)? {
                let jw = j.value(nu) * w;
                if jw == 0.0 {
                    continue;
                }
                for (o, pt) in out.iter_mut().zip(&points) {
                    if let Some(pt) = pt {
                        *o += 2.0 * jw * sum.psi(nu, pt).re;
                    }
                }
            }
        }
    }
    Ok(re
        .into_iter()
        .zip(rg)
        .map(|(r_e, r_g)| RatePair { r_e, r_g })
        .collect())
}

fn identical(sched: &MeasurementSchedule) -> Result<(f64, f64)> {
    let (gamma, theta) = sched
        .identical_factor()
        .ok_or_else(|| Error::domain("coarse-grained rates need identical measurement factors"))?;
    if gamma >= 1.0 {
        return Err(Error::SingularFilter);
    }
    Ok((gamma, theta))
}

fn branch_pair(mut f: impl FnMut(Branch) -> Result<f64>) -> Result<RatePair> {
    let e = f(Branch::Plus)?;
    let g = f(Branch::Minus)?;
    RatePair::from_quadrature(e, g)
}

/// Coarse-grained rates: the period average of `R_{e,g}(t)` once the
/// kernel memory is saturated, at the bath temperature.
pub fn coarse_grained_rates(b: &BathState, sched: &MeasurementSchedule) -> Result<RatePair> {
    let (gamma, theta) = identical(sched)?;
    if sched.tau_m() > 0.0 {
        return coarse_grained_spectral(b, sched);
    }
    let tau = sched.tau();
    branch_pair(|br| {
        filtered_integral(
            &b.effective(br),
            tau,
            Envelope::Measured { gamma, theta },
            EtaOptions::default(),
        )
    })
}

/// Largest number of filter periods [`coarse_grained_spectral`] resolves.
pub const MAX_CG_PERIODS: f64 = 2e5;

/// Coarse-grained rates from the period-averaged kernel
///
/// ```text
/// K(ν) = 2 Re (τ²/p)[μ₀ - μ₁ + e^{-iντ_M} μ₀² f / (1 - f e^{-iνp})],  x = ντ
/// ```
///
/// integrated directly against `J_±`. Independent of the η-form used by
/// [`coarse_grained_rates`] at `τ_M = 0`.
pub fn coarse_grained_spectral(b: &BathState, sched: &MeasurementSchedule) -> Result<RatePair> {
    let (gamma, theta) = identical(sched)?;
    let (tau, tau_m, p) = (sched.tau(), sched.tau_m(), sched.period());
    let f = Complex64::from_polar(gamma, theta);
    let kernel = |nu: f64| -> f64 {
        let [m0, m1, _] = mu(nu * tau);
        let tail = Complex64::from_polar(1.0, -nu * tau_m) * m0 * m0 * f
            / (1.0 - f * Complex64::from_polar(1.0, -nu * p));
        2.0 * tau * tau / p * (m0 - m1 + tail).re
    };
    branch_pair(|br| {
        let j = b.effective(br);
        if j.is_zero() {
            return Ok(0.0);
        }
        let (lo, hi) = j.range();
        let periods = (hi - lo) * p / TAU;
        if periods > MAX_CG_PERIODS {
            return Err(Error::resource(format!(
                "period-averaged kernel spans {periods:.3e} filter periods (limit {MAX_CG_PERIODS:e})"
            )));
        }
        let m0 = ((lo * p - theta) / TAU).ceil() as i64;
        let m1 = ((hi * p - theta) / TAU).floor() as i64;
        let peaks = (m0..=m1).map(|m| (theta + TAU * m as f64) / p);
        let breaks = quad::prepare_breaks(lo, hi, peaks.chain(j.kinks()).chain(j.guides()));
        let tol = Tolerance {
            rel: 1e-7,
            abs: 0.0,
            max_intervals: 4_000_000,
        };
        Ok(quad::integrate(|nu| j.value(nu) * kernel(nu), &breaks, tol)?.value)
    })
}

/// `∫ dη G(η/τ ± 1) h(γ, θ-η) sinc²(η/2)`: the closed form without thermal
/// occupations. Equal to [`coarse_grained_rates`] at `T = 0`, `τ_M = 0`.
pub fn coarse_grained_closed_form(
    spectrum: &SpectralDensity,
    tau: f64,
    gamma: f64,
    theta: f64,
) -> Result<RatePair> {
    let sched = MeasurementSchedule::identical(tau, gamma, theta)?;
    coarse_grained_rates(&BathState::zero_temperature(spectrum.clone()), &sched)
}

/// `(1/Np) ∫₀^{Np} R_{e,g}(t) dt` over the first `n` periods.
pub fn coarse_grained_finite(
    b: &BathState,
    sched: &MeasurementSchedule,
    n: u64,
) -> Result<RatePair> {
    if n == 0 {
        return Err(Error::domain("need at least one period"));
    }
    let tau = sched.tau();
    let env = Envelope::Bracket {
        sched,
        n,
        naive: false,
    };
    let scale = tau / sched.period();
    branch_pair(|br| {
        Ok(scale * filtered_integral(&b.effective(br), tau, env, EtaOptions::default())?)
    })
}

/// Period count `max(10³, 10·⌈τ_F/p⌉)` at which [`coarse_grained_finite`]
/// stands in for the `N → ∞` average.
pub fn coarse_grained_periods(b: &BathState, sched: &MeasurementSchedule) -> Result<u64> {
    let tf = correlation_time(b, sched)?.tau_f;
    let k = if tf.is_finite() {
        (tf / sched.period()).ceil()
    } else {
        1e3
    };
    Ok((10.0 * k).max(1e3) as u64)
}

/// Coarse-grained rates under `n` phase-modulation pulses,
/// `∫ dη J_±(η/τ) g(θ-η, n) sinc²(η/2)`.
pub fn coarse_grained_pmp(b: &BathState, tau: f64, theta: f64, n: u64) -> Result<RatePair> {
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::domain(format!(
            "tau must be finite and positive, got {tau}"
        )));
    }
    if n < 2 {
        return Err(Error::domain(format!("pulse count must be >= 2, got {n}")));
    }
    if !theta.is_finite() {
        return Err(Error::domain("phase must be finite"));
    }
    branch_pair(|br| {
        filtered_integral(
            &b.effective(br),
            tau,
            Envelope::Pulses { theta, n },
            EtaOptions::default(),
        )
    })
}

/// `(P_g, P_e)` in the steady state of the Markovian equation.
pub fn steady_state(rates: RatePair) -> Result<(f64, f64)> {
    let total = rates.total();
    if total <= 0.0 {
        return Err(Error::UndefinedSteadyState);
    }
    Ok((rates.r_e / total, rates.r_g / total))
}

/// Closed-form solution of `dP_e/dt = -R_e P_e + R_g P_g` on `samples`
/// equally spaced times in `[0, t_final]`.
pub fn solve_markov(
    rates: RatePair,
    p_e0: f64,
    t_final: f64,
    samples: usize,
) -> Result<PopulationTrace> {
    RatePair::new(rates.r_e, rates.r_g)?;
    check_probability(p_e0)?;
    if !(t_final.is_finite() && t_final >= 0.0) || samples < 2 {
        return Err(Error::domain(
            "need finite t_final >= 0 and at least two samples",
        ));
    }
    let total = rates.total();
    let p_st = if total > 0.0 {
        rates.r_g / total
    } else {
        log::info!("both rates vanish; populations stay constant");
        p_e0
    };
    let dt = t_final / (samples - 1) as f64;
    let times: Vec<f64> = (0..samples).map(|i| i as f64 * dt).collect();
    let p_e: Vec<f64> = times
        .iter()
        .map(|&t| (p_st + (p_e0 - p_st) * (-total * t).exp()).clamp(0.0, 1.0))
        .collect();
    Ok(PopulationTrace {
        p_g: p_e.iter().map(|p| 1.0 - p).collect(),
        r_e: vec![rates.r_e; samples],
        r_g: vec![rates.r_g; samples],
        times,
        p_e,
        scheme: Scheme::Markov,
        dt,
    })
}

fn check_probability(p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::domain(format!(
            "probability must lie in [0, 1], got {p}"
        )))
    }
}

/// How the memory integral treats the population history.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HistoryMode {
    /// Product integration over the stored history.
    Full,
    /// `P(s) → P(t)`: the ODE driven by the time-local rates.
    TimeLocal,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VolterraOptions {
    /// Kernel memory kept, in time units.
    pub memory: f64,
    pub mode: HistoryMode,
    /// Budget on steps × memory cells.
    pub max_work: f64,
}

impl Default for VolterraOptions {
    fn default() -> Self {
        VolterraOptions {
            memory: 10.0,
            mode: HistoryMode::Full,
            max_work: 4e9,
        }
    }
}

/// Largest number of stored memory cells.
pub const MAX_MEMORY_CELLS: usize = 1 << 22;

/// Kernel moments against the hat basis, `A_k = ∫ dν J(ν) q_k(ν)` for lags
/// `k = 0..cells`; entry `[0]` pairs with the left node of the source cell,
/// `[1]` with the right one.
///
/// Panels of width `2π/(L·dt)` are folded modulo `L`, so the lag sum becomes
/// one FFT per Kronrod node; panels containing a kink are summed directly.
pub(crate) fn cell_moments(
    j: &dyn NuSpectrum,
    dt: f64,
    cells: usize,
) -> Result<Vec<[Complex64; 2]>> {
    let zero = Complex64::new(0.0, 0.0);
    let mut out = vec![[zero; 2]; cells];
    if j.is_zero() || cells == 0 {
        return Ok(out);
    }
    let (lo, hi) = j.range();
    let resolve = (64.0 * TAU / ((hi - lo) * dt)).ceil();
    let l = (2 * cells)
        .max(64)
        .max(resolve.min(1e9) as usize)
        .next_power_of_two();
    if l > 1 << 24 {
        return Err(Error::resource(format!(
            "kernel moment fold length {l} exceeds 2^24; use a larger dt"
        )));
    }
    let delta = TAU / (l as f64 * dt);
    let panels = ((hi - lo) / delta).ceil() as usize;
    if panels > 50_000_000 {
        return Err(Error::resource(format!(
            "kernel moments need {panels} panels; use a larger dt"
        )));
    }
    let kinks: Vec<f64> = j
        .kinks()
        .into_iter()
        .filter(|&k| k > lo && k < hi)
        .collect();
    let irregular: BTreeSet<usize> = kinks
        .iter()
        .filter_map(|&k| {
            let x = (k - lo) / delta;
            let edge = x.round();
            if (x - edge).abs() < 1e-9 * x.max(1.0) {
                None
            } else {
                Some(x.floor() as usize)
            }
        })
        .collect();

    let dt2 = dt * dt;
    let terms = |nu: f64, w: f64| -> Option<([Complex64; 2], [Complex64; 2])> {
        let jv = j.value(nu);
        if jv == 0.0 {
            return None;
        }
        let c = w * jv * dt2;
        let [m0, m1, m2] = mu(nu * dt);
        let rect = [c * m0 * (m0 - m1).conj(), c * m0 * m1.conj()];
        let tri = [c * 0.5 * (m0 - m2), c * 0.5 * (m0 - 2.0 * m1 + m2)];
        Some((rect, tri))
    };

    let offsets: Vec<(f64, f64)> = kronrod_nodes(0.0, delta).collect();
    let mut fold = vec![vec![[zero; 2]; l]; offsets.len()];
    for p in 0..panels {
        if irregular.contains(&p) {
            continue;
        }
        let base = lo + p as f64 * delta;
        let slot = p % l;
        for (i, &(x, w)) in offsets.iter().enumerate() {
            if let Some((rect, tri)) = terms(base + x, w) {
                fold[i][slot][0] += rect[0];
                fold[i][slot][1] += rect[1];
                out[0][0] += tri[0];
                out[0][1] += tri[1];
            }
        }
    }

    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(l);
    let mut buf = vec![zero; l];
    for (i, &(x, _)) in offsets.iter().enumerate() {
        for side in 0..2 {
            for (b, f) in buf.iter_mut().zip(&fold[i]) {
                *b = f[side];
            }
            fft.process(&mut buf);
            let a = (lo + x) * dt;
            for (k, o) in out.iter_mut().enumerate().skip(1) {
                o[side] += Complex64::from_polar(1.0, -a * k as f64) * buf[k];
            }
        }
    }

    for &p in &irregular {
        let a = lo + p as f64 * delta;
        let b = (a + delta).min(hi);
        let cuts = quad::prepare_breaks(a, b, kinks.iter().copied());
        for seg in cuts.windows(2) {
            for (nu, w) in kronrod_nodes(seg[0], seg[1]) {
                let Some((rect, tri)) = terms(nu, w) else {
                    continue;
                };
                out[0][0] += tri[0];
                out[0][1] += tri[1];
                let step = Complex64::from_polar(1.0, -nu * dt);
                let mut phase = step;
                for (k, o) in out.iter_mut().enumerate().skip(1) {
                    if k % 64 == 0 {
                        phase = Complex64::from_polar(1.0, -nu * dt * k as f64);
                    }
                    o[0] += phase * rect[0];
                    o[1] += phase * rect[1];
                    phase *= step;
                }
            }
        }
    }
    Ok(out)
}

fn aligned(x: f64, dt: f64) -> bool {
    let q = x / dt;
    (q - q.round()).abs() <= 1e-9 * q.max(1.0)
}

/// Solve the Born rate equation from `P_e(0) = p_e0` on a grid of step `dt`.
pub fn solve_volterra(
    b: &BathState,
    sched: &MeasurementSchedule,
    p_e0: f64,
    t_final: f64,
    dt: f64,
) -> Result<PopulationTrace> {
    solve_volterra_with(b, sched, p_e0, t_final, dt, VolterraOptions::default())
}

pub fn solve_volterra_with(
    b: &BathState,
    sched: &MeasurementSchedule,
    p_e0: f64,
    t_final: f64,
    dt: f64,
    opts: VolterraOptions,
) -> Result<PopulationTrace> {
    check_probability(p_e0)?;
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::domain(format!(
            "dt must be finite and positive, got {dt}"
        )));
    }
    if !(t_final.is_finite() && t_final >= dt) {
        return Err(Error::domain(format!(
            "t_final must be >= dt, got {t_final}"
        )));
    }
    if !aligned(sched.tau(), dt) || !aligned(sched.tau_m(), dt) {
        return Err(Error::config(format!(
            "dt = {dt} must divide tau = {} and tau_M = {} so steps align with measurement boundaries",
            sched.tau(),
            sched.tau_m()
        )));
    }
    if !(opts.memory.is_finite() && opts.memory > 0.0) {
        return Err(Error::domain("memory window must be finite and positive"));
    }
    let steps = (t_final / dt - 1e-9).ceil() as usize;
    let cells = ((opts.memory / dt).ceil() as usize).clamp(1, steps);
    if cells > MAX_MEMORY_CELLS {
        return Err(Error::resource(format!(
            "memory of {cells} cells exceeds {MAX_MEMORY_CELLS}; use a larger dt or shorter memory"
        )));
    }
    let work = steps as f64 * cells as f64;
    if work > opts.max_work {
        return Err(Error::resource(format!(
            "{work:.3e} history operations exceed the budget {:.3e}; use a larger dt",
            opts.max_work
        )));
    }

    let plus = cell_moments(&b.effective(Branch::Plus), dt, cells)?;
    let minus = cell_moments(&b.effective(Branch::Minus), dt, cells)?;

    // Free-window index of every step, or 0 inside a measuring window.
    let window: Vec<u64> = (0..steps)
        .map(|n| match sched.window((n as f64 + 0.5) * dt) {
            Window::Free(j) => j,
            Window::Measuring(_) => 0,
        })
        .collect();
    let powers: Option<Vec<Complex64>> = sched.identical_factor().map(|(g, th)| {
        let reach = (cells as f64 * dt / sched.period()).ceil() as usize + 2;
        let f = Complex64::from_polar(g, th);
        std::iter::successors(Some(Complex64::new(1.0, 0.0)), |z| Some(z * f))
            .take(reach + 1)
            .collect()
    });
    let ga = |n: usize, m: usize| -> Complex64 {
        let (wn, wm) = (window[n], window[m]);
        if wn == 0 || wm == 0 {
            return Complex64::new(0.0, 0.0);
        }
        match &powers {
            Some(pw) => pw[(wn - wm) as usize],
            None => sched.factor_product(wm, wn),
        }
    };

    let mut p = Vec::with_capacity(steps + 1);
    p.push(p_e0);
    let mut r_e = vec![0.0];
    let mut r_g = vec![0.0];
    for n in 0..steps {
        let first = (n + 1).saturating_sub(cells);
        // Σ over cells of (K⁺ + K⁻)·P for the known nodes, the K⁻ source,
        // and the step integrals of the rates.
        let mut known = 0.0;
        let mut source = 0.0;
        let (mut int_e, mut int_g) = (0.0, 0.0);
        let mut diag = [0.0; 2];
        for m in first..=n {
            let g = ga(n, m);
            if g.norm_sqr() == 0.0 {
                continue;
            }
            let k = n - m;
            let kp = [2.0 * (g * plus[k][0]).re, 2.0 * (g * plus[k][1]).re];
            let km = [2.0 * (g * minus[k][0]).re, 2.0 * (g * minus[k][1]).re];
            int_e += kp[0] + kp[1];
            int_g += km[0] + km[1];
            source += km[0] + km[1];
            if m < n {
                known += (kp[0] + km[0]) * p[m] + (kp[1] + km[1]) * p[m + 1];
            } else {
                diag = [kp[0] + km[0], kp[1] + km[1]];
            }
        }
        let pn = p[n];
        let next = match opts.mode {
            HistoryMode::Full => (pn - known - diag[0] * pn + source) / (1.0 + diag[1]),
            HistoryMode::TimeLocal => {
                let s = 0.5 * (int_e + int_g);
                (pn * (1.0 - s) + int_g) / (1.0 + s)
            }
        };
        if !(-1e-9..=1.0 + 1e-9).contains(&next) {
            return Err(Error::Numerical {
                message: format!(
                    "P_e left [0, 1] at t = {:.6e}; reduce dt or the coupling",
                    (n + 1) as f64 * dt
                ),
                estimate: next,
                error: 0.0,
            });
        }
        p.push(next.clamp(0.0, 1.0));
        r_e.push(int_e / dt);
        r_g.push(int_g / dt);
    }
    Ok(PopulationTrace {
        times: (0..=steps).map(|i| i as f64 * dt).collect(),
        p_g: p.iter().map(|x| 1.0 - x).collect(),
        p_e: p,
        r_e,
        r_g,
        scheme: match opts.mode {
            HistoryMode::Full => Scheme::Volterra,
            HistoryMode::TimeLocal => Scheme::TimeLocal,
        },
        dt,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shorttime::{golden_rule, rate_measured};
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn weak_ohmic() -> BathState {
        BathState::zero_temperature(SpectralDensity::ohmic(500.0).unwrap().scaled(1e-3).unwrap())
    }

    fn hydrogen() -> SpectralDensity {
        SpectralDensity::hydrogenic(549.5).unwrap()
    }

    #[test]
    fn mu_series_and_recursion_agree() {
        for a in [1e-3, 0.5, 1.999, 2.001, 7.0, -3.0, 40.0] {
            let m = mu(a);
            let brute = |k: i32| -> Complex64 {
                quad::integrate_interval(
                    |z| z.powi(k) * Complex64::from_polar(1.0, -a * z),
                    0.0,
                    1.0,
                    Tolerance::relative(1e-12),
                )
                .unwrap()
                .value
            };
            for (k, mk) in m.iter().enumerate().take(3) {
                assert!((mk - brute(k as i32)).norm() < 1e-13, "a = {a}, k = {k}");
            }
        }
    }

    #[test]
    fn markov_examples() {
        let tr = solve_markov(RatePair::new(0.5, 0.0).unwrap(), 1.0, 4.0, 5).unwrap();
        for (t, p) in tr.times.iter().zip(&tr.p_e) {
            assert_relative_eq!(*p, (-0.5 * t).exp(), max_relative = 1e-14);
        }
        let rates = RatePair::new(0.3, 0.1).unwrap();
        let tr = solve_markov(rates, 1.0, 200.0, 3).unwrap();
        assert_relative_eq!(tr.p_e[2], steady_state(rates).unwrap().1, epsilon = 1e-14);
        let flat = solve_markov(RatePair::new(0.0, 0.0).unwrap(), 0.7, 1.0, 3).unwrap();
        assert!(flat.p_e.iter().all(|&p| p == 0.7));
        assert!(RatePair::new(-1.0, 0.0).is_err());
    }

    #[test]
    fn steady_state_examples() {
        assert_eq!(
            steady_state(RatePair { r_e: 2.0, r_g: 0.0 }).unwrap(),
            (1.0, 0.0)
        );
        assert_eq!(
            steady_state(RatePair { r_e: 2.0, r_g: 2.0 }).unwrap().1,
            0.5
        );
        assert_eq!(
            steady_state(RatePair { r_e: 0.0, r_g: 0.0 }),
            Err(Error::UndefinedSteadyState)
        );
    }

    #[test]
    fn clamping() {
        assert_eq!(RatePair::from_quadrature(1.0, -1e-12).unwrap().r_g, 0.0);
        assert!(RatePair::from_quadrature(1.0, -1e-3).is_err());
    }

    #[test]
    fn timelocal_zero_cases() {
        let b = weak_ohmic();
        let sched = MeasurementSchedule::new(
            0.1,
            0.02,
            Factors::Identical {
                gamma: 0.5,
                theta: 0.0,
            },
        )
        .unwrap();
        assert_eq!(
            timelocal_rates(&b, &sched, 0.0).unwrap(),
            RatePair { r_e: 0.0, r_g: 0.0 }
        );
        assert_eq!(
            timelocal_rates(&b, &sched, 0.13).unwrap(),
            RatePair { r_e: 0.0, r_g: 0.0 }
        );
    }

    /// Brute force: `R_e(t) = ∫₀ᵗ 2 Re[g_B(t-s) g_A(t,s)] ds` with `g_B` from
    /// the ohmic closed form, integrated window by window in time.
    #[test]
    fn timelocal_matches_time_domain_quadrature() {
        let wc = 500.0;
        let gb = |u: f64| -> Complex64 {
            let d = Complex64::new(1.0 / wc, u);
            Complex64::from_polar(1.0, u) / (d * d)
        };
        let b = BathState::zero_temperature(SpectralDensity::ohmic(wc).unwrap());
        for (tau_m, gamma, theta, t) in [
            (0.0, 0.5, 0.0, 0.37),
            (0.01, 0.7, 1.3, 0.452),
            (0.0, 0.0, 0.0, 0.05),
        ] {
            let sched =
                MeasurementSchedule::new(0.1, tau_m, Factors::Identical { gamma, theta }).unwrap();
            let p = sched.period();
            let mut brute = 0.0;
            let mut k = 0.0;
            while k * p < t {
                let (a, c) = (k * p + tau_m, ((k + 1.0) * p).min(t));
                if c > a {
                    let ga = sched.apparatus_correlation(t, 0.5 * (a + c)).unwrap();
                    let cuts = quad::prepare_breaks(a, c, [t - 0.01, t - 0.001, t - 1e-4]);
                    brute += quad::integrate(
                        |s| 2.0 * (gb(t - s) * ga).re,
                        &cuts,
                        Tolerance::relative(1e-12),
                    )
                    .unwrap()
                    .value;
                }
                k += 1.0;
            }
            let fast = timelocal_rates(&b, &sched, t).unwrap();
            assert_relative_eq!(fast.r_e, brute, max_relative = 1e-6);
        }
    }

    #[test]
    fn timelocal_sequence_matches_identical() {
        let b = weak_ohmic();
        let a = MeasurementSchedule::identical(0.1, 0.6, 0.4).unwrap();
        let s = MeasurementSchedule::new(0.1, 0.0, Factors::Sequence(vec![(0.6, 0.4)])).unwrap();
        let ts = [0.05, 0.83, 2.47];
        let x = timelocal_rates_many(&b, &a, &ts).unwrap();
        let y = timelocal_rates_many(&b, &s, &ts).unwrap();
        for (u, v) in x.iter().zip(&y) {
            assert_relative_eq!(u.r_e, v.r_e, max_relative = 1e-10);
        }
    }

    #[test]
    fn coarse_grained_paths_agree() {
        let b = BathState::new(SpectralDensity::ohmic(50.0).unwrap(), 0.7).unwrap();
        for (tau, gamma, theta) in [(0.05, 0.3, 0.0), (0.3, 0.8, PI / 2.0), (2.0, 0.5, 4.0)] {
            let sched = MeasurementSchedule::identical(tau, gamma, theta).unwrap();
            let eta = coarse_grained_rates(&b, &sched).unwrap();
            let spec = coarse_grained_spectral(&b, &sched).unwrap();
            assert_relative_eq!(eta.r_e, spec.r_e, max_relative = 1e-6);
            assert_relative_eq!(eta.r_g, spec.r_g, max_relative = 1e-6);
        }
    }

    #[test]
    fn coarse_grained_is_long_time_average() {
        let b = BathState::new(SpectralDensity::ohmic(50.0).unwrap(), 0.4).unwrap();
        let sched = MeasurementSchedule::new(
            0.2,
            0.05,
            Factors::Identical {
                gamma: 0.6,
                theta: 1.0,
            },
        )
        .unwrap();
        let cg = coarse_grained_rates(&b, &sched).unwrap();
        // average R(t) over one period deep in the stationary regime
        let p = sched.period();
        let t0 = 40.0 * p;
        let nodes: Vec<(f64, f64)> = quad::prepare_breaks(t0, t0 + p, [t0 + 0.05])
            .windows(2)
            .flat_map(|w| {
                let h = (w[1] - w[0]) / 8.0;
                (0..8).flat_map(move |i| {
                    kronrod_nodes(w[0] + i as f64 * h, w[0] + (i + 1) as f64 * h)
                })
            })
            .collect();
        let ts: Vec<f64> = nodes.iter().map(|n| n.0).collect();
        let rates = timelocal_rates_many(&b, &sched, &ts).unwrap();
        let avg_e: f64 = rates
            .iter()
            .zip(&nodes)
            .map(|(r, n)| r.r_e * n.1)
            .sum::<f64>()
            / p;
        let avg_g: f64 = rates
            .iter()
            .zip(&nodes)
            .map(|(r, n)| r.r_g * n.1)
            .sum::<f64>()
            / p;
        assert_relative_eq!(avg_e, cg.r_e, max_relative = 1e-5);
        assert_relative_eq!(avg_g, cg.r_g, max_relative = 1e-5);
    }

    #[test]
    fn finite_average_converges_on_doubling() {
        let b = BathState::new(SpectralDensity::ohmic(500.0).unwrap(), 0.5).unwrap();
        let sched = MeasurementSchedule::identical(0.05, 0.5, 0.3).unwrap();
        let n = coarse_grained_periods(&b, &sched).unwrap();
        assert_eq!(n, 1000);
        let a = coarse_grained_finite(&b, &sched, n).unwrap();
        let c = coarse_grained_finite(&b, &sched, 2 * n).unwrap();
        let lim = coarse_grained_rates(&b, &sched).unwrap();
        assert!((a.r_e - lim.r_e).abs() < 1e-2 * lim.r_e);
        assert!((c.r_e - lim.r_e).abs() < 0.6 * (a.r_e - lim.r_e).abs().max(1e-12 * lim.r_e));
        assert!((c.r_g - lim.r_g).abs() < 1e-2 * lim.r_g);
    }

    #[test]
    fn coarse_grained_zero_temperature_is_measured_rate() {
        let g = hydrogen();
        let b = BathState::zero_temperature(g.clone());
        for tau in [1e-4, 0.01, 1.0] {
            let sched = MeasurementSchedule::identical(tau, 0.3, 1.0).unwrap();
            let cg = coarse_grained_rates(&b, &sched).unwrap();
            assert_relative_eq!(
                cg.r_e,
                rate_measured(&g, tau, 0.3, 1.0).unwrap(),
                max_relative = 1e-9
            );
        }
    }

    #[test]
    fn coarse_grained_limits() {
        let g = hydrogen();
        let b = BathState::zero_temperature(g.clone());
        let total = g.integral(Tolerance::relative(1e-10)).unwrap();
        let (gamma, theta) = (0.3, 1.0);
        let h = crate::measurement::filter_h(gamma, theta).unwrap();
        let small = coarse_grained_rates(
            &b,
            &MeasurementSchedule::identical(1e-5, gamma, theta).unwrap(),
        )
        .unwrap();
        assert_relative_eq!(small.r_e, 1e-5 * h * total, max_relative = 0.02);
        assert_relative_eq!(small.r_g, 1e-5 * h * total, max_relative = 0.02);
        let large = coarse_grained_rates(
            &b,
            &MeasurementSchedule::identical(1e3, gamma, 0.0).unwrap(),
        )
        .unwrap();
        assert!(large.r_g < 1e-2 * large.r_e);
        assert_eq!(
            coarse_grained_rates(&b, &MeasurementSchedule::identical(0.1, 1.0, 0.0).unwrap()),
            Err(Error::SingularFilter)
        );
    }

    #[test]
    fn cell_moments_match_direct_sum() {
        let b = weak_ohmic();
        let j = b.effective(Branch::Plus);
        let dt = 0.01;
        let fast = cell_moments(&j, dt, 40).unwrap();
        let (lo, hi) = j.range();
        let breaks = quad::prepare_breaks(lo, hi, j.guides());
        for k in [0usize, 1, 7, 39] {
            let direct = |side: usize| -> Complex64 {
                let f = |nu: f64| -> Complex64 {
                    let [m0, m1, m2] = mu(nu * dt);
                    let q = if k == 0 {
                        if side == 0 {
                            0.5 * (m0 - m2)
                        } else {
                            0.5 * (m0 - 2.0 * m1 + m2)
                        }
                    } else {
                        let phi = if side == 0 { m0 - m1 } else { m1 };
                        Complex64::from_polar(1.0, -nu * dt * k as f64) * m0 * phi.conj()
                    };
                    j.value(nu) * dt * dt * q
                };
                let tol = Tolerance {
                    rel: 1e-11,
                    abs: 1e-16,
                    max_intervals: 2_000_000,
                };
                quad::integrate(f, &breaks, tol).unwrap().value
            };
            for (side, &fs) in fast[k].iter().enumerate() {
                let d = direct(side);
                assert!(
                    (fs - d).norm() < 1e-9 * d.norm() + 1e-15,
                    "k = {k}, side = {side}"
                );
            }
        }
    }

    #[test]
    fn zero_spectrum_freezes_population() {
        let b = BathState::zero_temperature(SpectralDensity::zero());
        let sched = MeasurementSchedule::identical(0.1, 0.5, 0.0).unwrap();
        let tr = solve_volterra(&b, &sched, 0.8, 1.0, 0.05).unwrap();
        assert!(tr.p_e.iter().all(|&p| p == 0.8));
    }

    #[test]
    fn misaligned_step_is_config_error() {
        let b = weak_ohmic();
        let sched = MeasurementSchedule::identical(0.1, 0.5, 0.0).unwrap();
        assert!(matches!(
            solve_volterra(&b, &sched, 1.0, 1.0, 0.03),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn weak_coupling_free_decay_is_exponential() {
        let b = weak_ohmic();
        let sched = MeasurementSchedule::identical(1.0, 1.0, 0.0).unwrap();
        let r = golden_rule(b.spectrum());
        let t_final = 2.0 / r;
        let tr = solve_volterra(&b, &sched, 1.0, t_final, 0.25).unwrap();
        for (t, p) in tr.times.iter().zip(&tr.p_e) {
            let e = (-r * t).exp();
            assert!((p - e).abs() < 0.05 * e, "t = {t}: {p} vs {e}");
        }
    }

    #[test]
    fn step_halving_converges() {
        let b = weak_ohmic();
        let sched = MeasurementSchedule::identical(0.1, 0.5, 0.0).unwrap();
        let run = |dt: f64| solve_volterra(&b, &sched, 1.0, 0.4, dt).unwrap();
        let (a, c, d) = (run(4e-3), run(2e-3), run(1e-3));
        let diff = |x: &PopulationTrace, y: &PopulationTrace, stride: usize| {
            x.p_e
                .iter()
                .enumerate()
                .map(|(i, p)| (p - y.p_e[i * stride]).abs())
                .fold(0.0, f64::max)
        };
        let d1 = diff(&a, &c, 2);
        let d2 = diff(&c, &d, 2);
        assert!(
            d1 < 4.0 * d2 * 1.25 && d1 > 2.0 * d2,
            "d1 = {d1:e}, d2 = {d2:e}"
        );
    }
}
