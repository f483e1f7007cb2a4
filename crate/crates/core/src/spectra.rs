//! Heat-bath spectral densities `G(ω)`.
//!
//! Frequencies are measured in units of the TLS splitting `ω_eg`, so the
//! transition sits at `ω = 1`. Every built-in density vanishes for `ω < 0`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad::{self, Tolerance};

/// Below this fraction of the peak value the density is treated as zero when
/// reporting the support.
pub const SUPPORT_CUTOFF: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SpectrumKind {
    /// `ω / (1 + (ω/ω_c)²)⁴`, the 2p–1s hydrogen form.
    Hydrogenic { omega_c: f64 },
    /// `ω e^{-ω/ω_c}`.
    Ohmic { omega_c: f64 },
    /// Piecewise-linear interpolation of `(ω, G)` nodes, zero outside the grid.
    Tabulated { omega: Vec<f64>, density: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDensity {
    kind: SpectrumKind,
    coupling: f64,
    support: (f64, f64),
    peak: (f64, f64),
}

impl SpectralDensity {
    pub fn hydrogenic(omega_c: f64) -> Result<Self> {
        check_cutoff(omega_c)?;
        Ok(Self::build(SpectrumKind::Hydrogenic { omega_c }))
    }

    pub fn ohmic(omega_c: f64) -> Result<Self> {
        check_cutoff(omega_c)?;
        Ok(Self::build(SpectrumKind::Ohmic { omega_c }))
    }

    /// Builds a tabulated density from `(ω, G)` pairs. The grid must be
    /// strictly increasing, non-negative in `ω` and the values non-negative.
    pub fn tabulated(points: &[(f64, f64)]) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::domain("tabulated spectrum needs at least two nodes"));
        }
        for (i, &(w, g)) in points.iter().enumerate() {
            if !w.is_finite() || !g.is_finite() {
                return Err(Error::domain(format!("non-finite table entry at row {i}")));
            }
            if w < 0.0 {
                return Err(Error::domain(format!("negative frequency {w} at row {i}")));
            }
            if g < 0.0 {
                return Err(Error::domain(format!("negative density {g} at row {i}")));
            }
            if i > 0 && w <= points[i - 1].0 {
                return Err(Error::domain(format!(
                    "frequency grid not strictly increasing at row {i}"
                )));
            }
        }
        let (omega, density) = points.iter().copied().unzip();
        Ok(Self::build(SpectrumKind::Tabulated { omega, density }))
    }

    /// A density identically equal to zero.
    pub fn zero() -> Self {
        Self::tabulated(&[(0.0, 0.0), (1.0, 0.0)]).expect("valid table")
    }

    /// Multiplies the density by a global coupling factor.
    pub fn scaled(mut self, factor: f64) -> Result<Self> {
        if !(factor.is_finite() && factor >= 0.0) {
            return Err(Error::domain(format!(
                "coupling factor must be finite and >= 0, got {factor}"
            )));
        }
        self.coupling *= factor;
        self.peak.1 *= factor;
        Ok(self)
    }

    fn build(kind: SpectrumKind) -> Self {
        let mut s = SpectralDensity {
            kind,
            coupling: 1.0,
            support: (0.0, 0.0),
            peak: (0.0, 0.0),
        };
        s.peak = s.locate_peak();
        s.support = s.locate_support();
        s
    }

    pub fn kind(&self) -> &SpectrumKind {
        &self.kind
    }

    pub fn coupling(&self) -> f64 {
        self.coupling
    }

    /// `[ω_lo, ω_hi]` outside which `G < 10⁻¹² · max G`.
    pub fn support(&self) -> (f64, f64) {
        self.support
    }

    /// Location and value of the maximum of `G`.
    pub fn peak(&self) -> (f64, f64) {
        self.peak
    }

    pub fn is_zero(&self) -> bool {
        self.peak.1 <= 0.0
    }

    /// `G(ω)`; zero for `ω < 0`. Non-finite input propagates as NaN.
    #[inline]
    pub fn density(&self, omega: f64) -> f64 {
        if omega.is_nan() {
            return f64::NAN;
        }
        if omega < 0.0 {
            return 0.0;
        }
        let g = match &self.kind {
            SpectrumKind::Hydrogenic { omega_c } => {
                let r = omega / omega_c;
                let d = 1.0 + r * r;
                let d2 = d * d;
                omega / (d2 * d2)
            }
            SpectrumKind::Ohmic { omega_c } => omega * (-omega / omega_c).exp(),
            SpectrumKind::Tabulated {
                omega: w,
                density: g,
            } => interpolate(w, g, omega),
        };
        self.coupling * g
    }

    /// Checked evaluation: rejects non-finite frequencies.
    pub fn eval(&self, omega: f64) -> Result<f64> {
        if !omega.is_finite() {
            return Err(Error::domain(format!(
                "spectrum evaluated at non-finite frequency {omega}"
            )));
        }
        Ok(self.density(omega))
    }

    /// Points where `G` is not smooth (grid nodes, the origin).
    pub fn kinks(&self) -> Vec<f64> {
        match &self.kind {
            SpectrumKind::Tabulated { omega, .. } => omega.clone(),
            _ => vec![0.0],
        }
    }

    /// Extra split points that help the adaptive integrator on wide supports.
    fn guide_points(&self) -> Vec<f64> {
        match &self.kind {
            SpectrumKind::Hydrogenic { omega_c } | SpectrumKind::Ohmic { omega_c } => {
                [0.01, 0.1, 0.3, 1.0, 3.0, 10.0, 30.0]
                    .iter()
                    .map(|f| f * omega_c)
                    .collect()
            }
            SpectrumKind::Tabulated { omega, .. } => omega.clone(),
        }
    }

    /// Sorted breakpoints over `[a, b]` combining kinks and guide points.
    pub fn breakpoints(&self, a: f64, b: f64) -> Vec<f64> {
        let mut pts = self.kinks();
        pts.extend(self.guide_points());
        pts.push(self.peak.0);
        quad::prepare_breaks(a, b, pts)
    }

    fn locate_peak(&self) -> (f64, f64) {
        match &self.kind {
            SpectrumKind::Hydrogenic { omega_c } => {
                let w = omega_c / 7f64.sqrt();
                (w, self.density(w))
            }
            SpectrumKind::Ohmic { omega_c } => (*omega_c, self.density(*omega_c)),
            SpectrumKind::Tabulated { omega, density } => {
                let mut best = (omega[0], density[0]);
                for (&w, &g) in omega.iter().zip(density) {
                    if g > best.1 {
                        best = (w, g);
                    }
                }
                (best.0, best.1 * self.coupling)
            }
        }
    }

    fn locate_support(&self) -> (f64, f64) {
        match &self.kind {
            SpectrumKind::Tabulated { omega, density } => {
                let first = density.iter().position(|&g| g > 0.0);
                let last = density.iter().rposition(|&g| g > 0.0);
                match (first, last) {
                    (Some(i), Some(j)) => {
                        let lo = omega[i.saturating_sub(1)];
                        let hi = omega[(j + 1).min(omega.len() - 1)];
                        (lo, hi)
                    }
                    _ => (omega[0], omega[0]),
                }
            }
            _ => {
                let (w_peak, g_peak) = self.peak;
                let level = SUPPORT_CUTOFF * g_peak;
                let mut hi = 2.0 * w_peak;
                while self.density(hi) > level {
                    hi *= 2.0;
                }
                (0.0, bisect(|w| self.density(w) - level, w_peak, hi))
            }
        }
    }

    /// `∫₀^∞ G(ω) dω` over the support.
    pub fn integral(&self, tol: Tolerance) -> Result<f64> {
        if self.is_zero() {
            return Ok(0.0);
        }
        let (lo, hi) = self.support;
        let breaks = self.breakpoints(lo, hi);
        Ok(quad::integrate(|w| self.density(w), &breaks, tol)?.value)
    }

    /// Smallest interval outside which `G < rel_threshold · max G`.
    pub fn support_width(&self, rel_threshold: f64) -> Result<(f64, f64)> {
        if !(rel_threshold > 0.0 && rel_threshold < 1.0) {
            return Err(Error::domain(format!(
                "threshold must lie in (0, 1), got {rel_threshold}"
            )));
        }
        if self.is_zero() {
            return Err(Error::DegenerateSpectrum);
        }
        let (w_peak, g_peak) = self.peak;
        let level = rel_threshold * g_peak;
        match &self.kind {
            SpectrumKind::Tabulated { omega, density } => {
                let g: Vec<f64> = density.iter().map(|v| v * self.coupling).collect();
                let i = g
                    .iter()
                    .position(|&v| v >= level)
                    .expect("peak exceeds level");
                let j = g
                    .iter()
                    .rposition(|&v| v >= level)
                    .expect("peak exceeds level");
                let left = if i == 0 {
                    omega[0]
                } else {
                    crossing(omega[i - 1], g[i - 1], omega[i], g[i], level)
                };
                let right = if j + 1 == omega.len() {
                    omega[j]
                } else {
                    crossing(omega[j], g[j], omega[j + 1], g[j + 1], level)
                };
                Ok((left, right))
            }
            _ => {
                let (lo, hi) = self.support;
                let left = if self.density(lo) >= level {
                    lo
                } else {
                    bisect(|w| self.density(w) - level, lo, w_peak)
                };
                let right = if self.density(hi) >= level {
                    hi
                } else {
                    bisect(|w| self.density(w) - level, w_peak, hi)
                };
                Ok((left, right))
            }
        }
    }
}

fn check_cutoff(omega_c: f64) -> Result<()> {
    if omega_c.is_finite() && omega_c > 0.0 {
        Ok(())
    } else {
        Err(Error::domain(format!(
            "cutoff frequency must be positive, got {omega_c}"
        )))
    }
}

fn interpolate(w: &[f64], g: &[f64], x: f64) -> f64 {
    let n = w.len();
    if x < w[0] || x > w[n - 1] {
        return 0.0;
    }
    let i = w.partition_point(|&v| v <= x);
    if i == 0 {
        return g[0];
    }
    if i == n {
        return g[n - 1];
    }
    let t = (x - w[i - 1]) / (w[i] - w[i - 1]);
    (g[i - 1] + t * (g[i] - g[i - 1])).max(0.0)
}

fn crossing(x0: f64, y0: f64, x1: f64, y1: f64, level: f64) -> f64 {
    if y1 == y0 {
        return x0;
    }
    x0 + (level - y0) * (x1 - x0) / (y1 - y0)
}

/// Root of `f` on `[a, b]`, assuming a sign change.
pub(crate) fn bisect(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let mut fa = f(a);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m == a || m == b {
            break;
        }
        let fm = f(m);
        if (fm > 0.0) == (fa > 0.0) {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}
