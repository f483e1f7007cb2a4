//! Adaptive Simpson quadrature, kept separate from the Kronrod engine so the
//! two can check each other.

use crate::error::{Error, Result};

pub const MAX_DEPTH: u32 = 48;
/// Integrand evaluations allowed before giving up.
pub const MAX_EVALS: usize = 4_000_000;

struct Simpson<'a, F> {
    f: &'a F,
    failed: bool,
    evals: usize,
}

impl<F: Fn(f64) -> f64> Simpson<'_, F> {
    #[allow(clippy::too_many_arguments)]
    fn step(
        &mut self,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = ((self.f)(lm), (self.f)(rm));
        self.evals += 2;
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        if depth >= MAX_DEPTH || self.evals >= MAX_EVALS || self.failed {
            self.failed = true;
            return left + right + delta / 15.0;
        }
        self.step(a, m, fa, flm, fm, left, 0.5 * tol, depth + 1)
            + self.step(m, b, fm, frm, fb, right, 0.5 * tol, depth + 1)
    }
}

/// `∫_a^b f` to absolute tolerance `tol`.
pub fn quad_reference<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> Result<f64> {
    if !(a.is_finite() && b.is_finite() && a < b) {
        return Err(Error::domain(format!("need finite a < b, got [{a}, {b}]")));
    }
    if !(tol > 0.0) {
        return Err(Error::domain("tolerance must be positive"));
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    if !(fa.is_finite() && fb.is_finite() && fm.is_finite()) {
        return Err(Error::domain("integrand is not finite"));
    }
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    let mut s = Simpson {
        f: &f,
        failed: false,
        evals: 3,
    };
    let value = s.step(a, b, fa, fm, fb, whole, tol, 0);
    if s.failed || !value.is_finite() {
        return Err(Error::Numerical {
            message: "adaptive Simpson reached its depth or evaluation limit".into(),
            estimate: value,
            error: tol,
        });
    }
    Ok(value)
}
