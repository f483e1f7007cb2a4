//! Integrals of the form `∫ dη J(η/τ) F(η) sinc²(η/2)`.
//!
//! `J` is a smooth spectrum in the detuning variable `ν = η/τ` and `F` a
//! filter. Close to the origin the integrand is integrated directly, lobe by
//! lobe. Far from it the integrand factors into `W(η) P(η)` with
//! `W = 2J(η/τ)/η²` slowly varying and `P = F(η)(1 - cos η)`; when `P` is
//! 2π-periodic the far part is summed with periodic-Bernoulli corrections
//! instead of lobe by lobe, which keeps the cost independent of `τ`.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::measurement::{g_unchecked, h_unchecked, sinc, Factors, MeasurementSchedule};
use crate::quad::{self, Tolerance};

/// A non-negative spectrum on the detuning axis.
pub trait NuSpectrum: Sync {
    fn value(&self, nu: f64) -> f64;
    /// Interval outside which the spectrum vanishes (to the support cutoff).
    fn range(&self) -> (f64, f64);
    /// Points of non-smoothness.
    fn kinks(&self) -> Vec<f64>;
    /// Extra split points marking structure (peaks, cutoff scale).
    fn guides(&self) -> Vec<f64>;
    fn is_zero(&self) -> bool;
}

/// Filter multiplying the spectrum in the η-integral.
#[derive(Debug, Clone, Copy)]
pub(crate) enum Envelope<'a> {
    Unit,
    /// `h(γ, θ - η)`.
    Measured {
        gamma: f64,
        theta: f64,
    },
    /// `g(θ - η)` at pulse count `n`.
    Pulses {
        theta: f64,
        n: u64,
    },
    /// The measurement-pair bracket of the finite-`N` rate, divided by `N`.
    Bracket {
        sched: &'a MeasurementSchedule,
        n: u64,
        naive: bool,
    },
}

impl Envelope<'_> {
    pub(crate) fn value(&self, eta: f64) -> f64 {
        match *self {
            Envelope::Unit => 1.0,
            Envelope::Measured { gamma, theta } => h_unchecked(gamma, theta - eta),
            Envelope::Pulses { theta, n } => g_unchecked(theta - eta, n),
            Envelope::Bracket { sched, n, naive } => bracket(sched, n, eta, naive) / n as f64,
        }
    }

    pub(crate) fn is_periodic(&self) -> bool {
        match self {
            Envelope::Bracket { sched, .. } => sched.tau_m() == 0.0,
            _ => true,
        }
    }

    /// Breakpoints of the filter inside `[lo, hi]`, at most `cap` of them.
    fn breaks(&self, lo: f64, hi: f64, cap: usize) -> Vec<f64> {
        let mut out = Vec::new();
        let lattice = |offset: f64, spacing: f64, out: &mut Vec<f64>| {
            let k0 = ((lo - offset) / spacing).ceil();
            let k1 = ((hi - offset) / spacing).floor();
            if k1 < k0 || (k1 - k0) as usize > cap {
                return;
            }
            let mut k = k0;
            while k <= k1 {
                out.push(offset + k * spacing);
                k += 1.0;
            }
        };
        match *self {
            Envelope::Unit => {}
            Envelope::Measured { gamma, theta } => {
                lattice(theta, TAU, &mut out);
                if gamma > 0.9 {
                    let w = 1.0 - gamma;
                    for d in [w, 10.0 * w, 100.0 * w] {
                        if d < PI {
                            lattice(theta + d, TAU, &mut out);
                            lattice(theta - d, TAU, &mut out);
                        }
                    }
                }
            }
            Envelope::Pulses { theta, n } => lattice(theta, TAU / n as f64, &mut out),
            Envelope::Bracket { sched, n, .. } => {
                let r = sched.period() / sched.tau();
                let spacing = TAU / r;
                match sched.identical_factor() {
                    Some((gamma, theta)) => {
                        let peak = theta / r;
                        lattice(peak, spacing, &mut out);
                        let fine = if gamma >= 1.0 {
                            n
                        } else {
                            (n as f64).min(1.0 / (1.0 - gamma)).min(64.0) as u64
                        };
                        if fine > 4 {
                            lattice(peak, spacing / fine as f64, &mut out);
                        }
                    }
                    None => lattice(0.0, spacing, &mut out),
                }
            }
        }
        out
    }
}

/// `N + 2 Re Σ_{m} Σ_{n<m} e^{i(n-m)η p/τ} Π_{l=n+1}^{m} f_l`.
pub(crate) fn bracket(sched: &MeasurementSchedule, n: u64, eta: f64, naive: bool) -> f64 {
    let nf = n as f64;
    if n == 1 {
        return 1.0;
    }
    let phi = eta * sched.period() / sched.tau();
    if naive {
        return bracket_naive(sched, n, phi);
    }
    match sched.factors() {
        Factors::Identical { gamma, theta } => {
            if *gamma == 0.0 {
                return nf;
            }
            let z = Complex64::from_polar(*gamma, (theta - phi).rem_euclid(TAU));
            nf + 2.0 * geometric_pairs(z, n).re
        }
        Factors::Sequence(_) => {
            let rot = Complex64::from_polar(1.0, -phi.rem_euclid(TAU));
            let mut t = Complex64::new(0.0, 0.0);
            let mut s = Complex64::new(0.0, 0.0);
            for m in 2..=n {
                t = rot * sched.factor(m) * (1.0 + t);
                s += t;
            }
            nf + 2.0 * s.re
        }
    }
}

/// `Σ_{d=1}^{N-1} (N - d) z^d`.
pub(crate) fn geometric_pairs(z: Complex64, n: u64) -> Complex64 {
    let nf = n as f64;
    let one = Complex64::new(1.0, 0.0);
    let dz = one - z;
    if nf * dz.norm() < 8.0 || n < 64 {
        // the closed form cancels badly near z = 1
        let mut acc = Complex64::new(0.0, 0.0);
        let mut zp = one;
        for d in 1..n {
            zp *= z;
            acc += zp * (nf - d as f64);
        }
        return acc;
    }
    let zn1 = if z.norm() == 0.0 {
        Complex64::new(0.0, 0.0)
    } else {
        let m = z.norm().powf(nf + 1.0);
        Complex64::from_polar(m, ((nf + 1.0) * z.arg()).rem_euclid(TAU))
    };
    (nf - (nf + 1.0) * z + zn1) / (dz * dz) - nf
}

fn bracket_naive(sched: &MeasurementSchedule, n: u64, phi: f64) -> f64 {
    // every pair is formed explicitly; only the phases e^{-idφ} and the
    // factors are tabulated up front
    let phases: Vec<Complex64> = (0..n)
        .map(|d| Complex64::from_polar(1.0, -((d as f64) * phi).rem_euclid(TAU)))
        .collect();
    let factors: Vec<Complex64> = (0..=n)
        .map(|l| {
            if l == 0 {
                Complex64::new(1.0, 0.0)
            } else {
                sched.factor(l)
            }
        })
        .collect();
    let mut s = 0.0;
    for m in 2..=n {
        let mut prod = Complex64::new(1.0, 0.0);
        for k in (1..m).rev() {
            prod *= factors[k as usize + 1];
            s += (phases[(m - k) as usize] * prod).re;
        }
    }
    n as f64 + 2.0 * s
}

#[derive(Debug, Clone, Copy)]
pub struct EtaOptions {
    pub tol: Tolerance,
    /// Lobes integrated directly on each side of `η = 0`.
    pub near_lobes: usize,
    /// Largest number of lobes integrated directly when the filter is not
    /// periodic.
    pub lobe_cap: usize,
}

impl Default for EtaOptions {
    fn default() -> Self {
        EtaOptions {
            tol: Tolerance {
                rel: 1e-10,
                abs: 0.0,
                max_intervals: 4_000_000,
            },
            near_lobes: 32,
            lobe_cap: 200_000,
        }
    }
}

impl EtaOptions {
    pub fn with_rel(rel: f64) -> Self {
        let mut o = Self::default();
        o.tol.rel = rel;
        o
    }
}

/// Moments of the periodic envelope against the first periodic Bernoulli
/// functions, `[P̄, Q1(0), Q2(0), Q3(0)]`.
fn period_moments(env: &Envelope, tol: Tolerance) -> Result<[f64; 4]> {
    let p = |x: f64| {
        let s = (0.5 * x).sin();
        env.value(x) * 2.0 * s * s
    };
    let mut breaks = env.breaks(0.0, TAU, usize::MAX);
    breaks.push(PI);
    let breaks = quad::prepare_breaks(0.0, TAU, breaks);
    let m0 = quad::integrate(p, &breaks, tol)?.value;
    let scale = m0.abs().max(f64::MIN_POSITIVE);
    let tol_abs = Tolerance {
        abs: tol.rel * scale,
        ..tol
    };
    let m1 = quad::integrate(|x| (x - PI) * p(x), &breaks, tol_abs)?.value;
    let m2 = quad::integrate(
        |x| {
            let u = x - PI;
            (0.5 * u * u - PI * PI / 6.0) * p(x)
        },
        &breaks,
        tol_abs,
    )?
    .value;
    let m3 = quad::integrate(
        |x| {
            let u = (x - PI) / TAU;
            (u * u * u - 0.25 * u) * p(x)
        },
        &breaks,
        tol_abs,
    )?
    .value;
    Ok([m0 / TAU, m1 / TAU, -m2 / TAU, TAU * TAU / 6.0 * m3])
}

struct Problem<'a> {
    spec: &'a dyn NuSpectrum,
    tau: f64,
    env: Envelope<'a>,
    opts: EtaOptions,
}

impl Problem<'_> {
    fn integrand(&self, eta: f64) -> f64 {
        let j = self.spec.value(eta / self.tau);
        if j == 0.0 {
            return 0.0;
        }
        let s = sinc(0.5 * eta);
        j * self.env.value(eta) * s * s
    }

    fn w(&self, eta: f64) -> f64 {
        2.0 * self.spec.value(eta / self.tau) / (eta * eta)
    }

    fn images(&self, pts: Vec<f64>, lo: f64, hi: f64) -> Vec<f64> {
        pts.into_iter()
            .map(|nu| nu * self.tau)
            .filter(|e| *e > lo && *e < hi)
            .collect()
    }

    fn direct(&self, lo: f64, hi: f64, offset: f64) -> Result<f64> {
        if hi <= lo {
            return Ok(0.0);
        }
        let lobes = ((hi - lo) / TAU).ceil() as usize;
        if lobes > self.opts.lobe_cap {
            return Err(Error::resource(format!(
                "direct η-integration over {lobes} lobes exceeds the cap of {}",
                self.opts.lobe_cap
            )));
        }
        let mut pts = self.env.breaks(lo, hi, 50_000_000);
        let k0 = (lo / TAU).ceil() as i64;
        let k1 = (hi / TAU).floor() as i64;
        pts.extend((k0..=k1).map(|k| k as f64 * TAU));
        pts.extend(self.images(self.spec.kinks(), lo, hi));
        pts.extend(self.images(self.spec.guides(), lo, hi));
        let breaks = quad::prepare_breaks(lo, hi, pts);
        Ok(quad::integrate_offset(|e| self.integrand(e), &breaks, self.opts.tol, offset)?.value)
    }

    /// One-sided derivatives `W'`, `W''` at `x`, stepping in direction `dir`.
    fn derivs(&self, x: f64, dir: f64) -> (f64, f64) {
        let h = dir * PI / 8.0;
        let w0 = self.w(x);
        let w1 = self.w(x + h);
        let w2 = self.w(x + 2.0 * h);
        let w3 = self.w(x + 3.0 * h);
        let d1 = (-3.0 * w0 + 4.0 * w1 - w2) / (2.0 * h);
        let d2 = (2.0 * w0 - 5.0 * w1 + 4.0 * w2 - w3) / (h * h);
        (d1, d2)
    }

    /// Far piece `[u, v]` on which `W` is smooth.
    fn far_piece(&self, u: f64, v: f64, m: &[f64; 4]) -> Result<f64> {
        let a = (u / TAU).ceil() * TAU;
        let b = (v / TAU).floor() * TAU;
        if b - a < 8.0 * TAU {
            return self.direct(u, v, 0.0);
        }
        let mut total = self.direct(u, a, 0.0)? + self.direct(b, v, 0.0)?;
        let mut pts = self.images(self.spec.guides(), a, b);
        let mut g = a.abs().min(b.abs()) * 2.0;
        while g < a.abs().max(b.abs()) {
            pts.push(g * a.signum());
            g *= 2.0;
        }
        let breaks = quad::prepare_breaks(a, b, pts);
        let iw = quad::integrate(|e| self.w(e), &breaks, self.opts.tol)?.value;
        let (wa1, wa2) = self.derivs(a, 1.0);
        let (wb1, wb2) = self.derivs(b, -1.0);
        total +=
            m[0] * iw + m[1] * (self.w(b) - self.w(a)) - m[2] * (wb1 - wa1) + m[3] * (wb2 - wa2);
        Ok(total)
    }

    fn far(&self, lo: f64, hi: f64, moments: Option<&[f64; 4]>) -> Result<f64> {
        if hi <= lo {
            return Ok(0.0);
        }
        let Some(m) = moments else {
            return self.direct(lo, hi, 0.0);
        };
        let mut cuts = self.images(self.spec.kinks(), lo, hi);
        cuts.insert(0, lo);
        cuts.push(hi);
        cuts.sort_by(f64::total_cmp);
        let mut total = 0.0;
        for w in cuts.windows(2) {
            total += self.far_piece(w[0], w[1], m)?;
        }
        Ok(total)
    }
}

/// `∫ dη J(η/τ) F(η) sinc²(η/2)` over the whole support of `J`.
pub(crate) fn filtered_integral(
    spec: &dyn NuSpectrum,
    tau: f64,
    env: Envelope,
    opts: EtaOptions,
) -> Result<f64> {
    if spec.is_zero() {
        return Ok(0.0);
    }
    let (nu_lo, nu_hi) = spec.range();
    let (lo, hi) = (nu_lo * tau, nu_hi * tau);
    let h = TAU * opts.near_lobes as f64;
    let problem = Problem {
        spec,
        tau,
        env,
        opts,
    };
    let moments = if env.is_periodic() && (hi > h || lo < -h) {
        Some(period_moments(&env, opts.tol)?)
    } else {
        None
    };
    let far = problem.far(lo, hi.min(-h), moments.as_ref())?
        + problem.far(lo.max(h), hi, moments.as_ref())?;
    let near = problem.direct(lo.max(-h), hi.min(h), far)?;
    Ok(near + far)
}
