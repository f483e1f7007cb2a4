//! Adaptive 21-point Gauss–Kronrod quadrature with user breakpoints.
//!
//! The integration range is first cut at the supplied breakpoints (kinks,
//! oscillation nodes, filter peaks), every piece gets one Kronrod panel, and
//! the panel with the largest error estimate is bisected until the global
//! estimate meets `max(abs_tol, rel_tol * |I|)`.

#![allow(clippy::excessive_precision)]

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::ops::{Add, Mul, Sub};

use num_complex::Complex64;

use crate::error::{Error, Result};

const XGK: [f64; 11] = [
    0.995657163025808080735527280689003,
    0.973906528517171720077964012084452,
    0.930157491355708226001207180059508,
    0.865063366688984510732096688423493,
    0.780817726586416897063717578345042,
    0.679409568299024406234327365114874,
    0.562757134668604683339000099272694,
    0.433395394129247190799265943165784,
    0.294392862701460198131126603103866,
    0.148874338981631210884826001129720,
    0.000000000000000000000000000000000,
];

const WG: [f64; 5] = [
    0.066671344308688137593568809893332,
    0.149451349150580593145776339657697,
    0.219086362515982043995534934228163,
    0.269266719309996355091226921569469,
    0.295524224714752870173892994651338,
];

const WGK: [f64; 11] = [
    0.011694638867371874278064396062192,
    0.032558162307964727478818972459390,
    0.054755896574351996031381300244580,
    0.075039674810919952767043140916190,
    0.093125454583697605535065465083366,
    0.109387158802297641899210590325805,
    0.123491976262065851077600072306869,
    0.134709217311473325928054001771707,
    0.142775938577060080797094273138717,
    0.147739104901338491374841515972068,
    0.149445554002916905664936468389821,
];

/// Values the integrator can accumulate: real or complex.
pub trait QuadValue:
    Copy + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self> + Send + Sync
{
    fn zero() -> Self;
    fn magnitude(&self) -> f64;
}

impl QuadValue for f64 {
    fn zero() -> Self {
        0.0
    }
    fn magnitude(&self) -> f64 {
        self.abs()
    }
}

impl QuadValue for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn magnitude(&self) -> f64 {
        self.norm()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub rel: f64,
    pub abs: f64,
    /// Upper bound on the number of live subintervals.
    pub max_intervals: usize,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance {
            rel: 1e-9,
            abs: 0.0,
            max_intervals: 2_000_000,
        }
    }
}

impl Tolerance {
    pub fn relative(rel: f64) -> Self {
        Tolerance {
            rel,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Estimate<T> {
    pub value: T,
    pub error: f64,
    pub evaluations: usize,
}

/// Roundoff floor of a panel whose absolute integrand mass is `res_abs`.
fn roundoff_floor(res_abs: f64) -> f64 {
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        50.0 * f64::EPSILON * res_abs
    } else {
        0.0
    }
}

fn rescale_error(err: f64, res_abs: f64, res_asc: f64) -> f64 {
    let mut scaled = err.abs();
    if res_asc != 0.0 && scaled != 0.0 {
        let scale = (200.0 * scaled / res_asc).powf(1.5);
        scaled = if scale < 1.0 {
            res_asc * scale
        } else {
            res_asc
        };
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        let min_err = 50.0 * f64::EPSILON * res_abs;
        if min_err > scaled {
            scaled = min_err;
        }
    }
    scaled
}

/// One Gauss–Kronrod 10/21 panel on `[a, b]`.
pub fn gk21<T: QuadValue, F: Fn(f64) -> T>(f: &F, a: f64, b: f64) -> (T, f64) {
    let (v, e, _) = panel(f, a, b);
    (v, e)
}

/// Panel value, error estimate and whether the estimate sits at the roundoff floor.
fn panel<T: QuadValue, F: Fn(f64) -> T>(f: &F, a: f64, b: f64) -> (T, f64, bool) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let abs_half = half.abs();

    let fc = f(center);
    let mut res_gauss = T::zero();
    let mut res_kronrod = fc * WGK[10];
    let mut res_abs = fc.magnitude() * WGK[10];
    let mut fv1 = [T::zero(); 10];
    let mut fv2 = [T::zero(); 10];

    #[allow(clippy::needless_range_loop)]
    for j in 0..5 {
        let jtw = 2 * j + 1;
        let dx = half * XGK[jtw];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        fv1[jtw] = f1;
        fv2[jtw] = f2;
        res_gauss = res_gauss + (f1 + f2) * WG[j];
        res_kronrod = res_kronrod + (f1 + f2) * WGK[jtw];
        res_abs += WGK[jtw] * (f1.magnitude() + f2.magnitude());
    }
    for j in 0..5 {
        let jtwm1 = 2 * j;
        let dx = half * XGK[jtwm1];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        fv1[jtwm1] = f1;
        fv2[jtwm1] = f2;
        res_kronrod = res_kronrod + (f1 + f2) * WGK[jtwm1];
        res_abs += WGK[jtwm1] * (f1.magnitude() + f2.magnitude());
    }

    let mean = res_kronrod * 0.5;
    let mut res_asc = WGK[10] * (fc - mean).magnitude();
    for j in 0..10 {
        res_asc += WGK[j] * ((fv1[j] - mean).magnitude() + (fv2[j] - mean).magnitude());
    }

    let result = res_kronrod * half;
    let err = (res_kronrod - res_gauss).magnitude() * abs_half;
    let scaled = rescale_error(err, res_abs * abs_half, res_asc * abs_half);
    let floor = roundoff_floor(res_abs * abs_half);
    (result, scaled, scaled > 0.0 && scaled <= floor)
}

/// Fixed-rule nodes and weights of the 21-point Kronrod panel mapped to `[a, b]`.
pub fn kronrod_nodes(a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    (0..21).map(move |i| {
        if i == 10 {
            (center, WGK[10] * half)
        } else if i < 10 {
            (center - half * XGK[i], WGK[i] * half)
        } else {
            (center + half * XGK[20 - i], WGK[20 - i] * half)
        }
    })
}

struct Piece<T> {
    a: f64,
    b: f64,
    value: T,
    error: f64,
}

impl<T> PartialEq for Piece<T> {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl<T> Eq for Piece<T> {}
impl<T> PartialOrd for Piece<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<T> Ord for Piece<T> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Sort, clip to `[a, b]` and deduplicate a breakpoint list.
pub fn prepare_breaks(a: f64, b: f64, points: impl IntoIterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = std::iter::once(a)
        .chain(
            points
                .into_iter()
                .filter(|x| x.is_finite() && *x > a && *x < b),
        )
        .chain(std::iter::once(b))
        .collect();
    v.sort_by(f64::total_cmp);
    let scale = a.abs().max(b.abs()).max(f64::MIN_POSITIVE);
    v.dedup_by(|x, y| (*x - *y).abs() <= 4.0 * f64::EPSILON * scale);
    v
}

/// Pieces already at the roundoff floor cannot improve and are parked.
fn place<T>(
    piece: Piece<T>,
    at_floor: bool,
    heap: &mut BinaryHeap<Piece<T>>,
    finished: &mut Vec<Piece<T>>,
) {
    if at_floor {
        finished.push(piece);
    } else {
        heap.push(piece);
    }
}

/// Integrate over the sorted breakpoint list `breaks` (first and last entries
/// are the limits).
pub fn integrate<T, F>(f: F, breaks: &[f64], tol: Tolerance) -> Result<Estimate<T>>
where
    T: QuadValue,
    F: Fn(f64) -> T,
{
    integrate_offset(f, breaks, tol, T::zero())
}

/// As [`integrate`], but the relative tolerance is measured against
/// `offset + I`; used when this integral is one part of a larger sum.
pub fn integrate_offset<T, F>(
    f: F,
    breaks: &[f64],
    tol: Tolerance,
    offset: T,
) -> Result<Estimate<T>>
where
    T: QuadValue,
    F: Fn(f64) -> T,
{
    if breaks.len() < 2 {
        return Ok(Estimate {
            value: T::zero(),
            error: 0.0,
            evaluations: 0,
        });
    }
    let mut heap = BinaryHeap::with_capacity(breaks.len());
    let mut finished: Vec<Piece<T>> = Vec::new();
    let mut evaluations = 0usize;
    let mut total = T::zero();
    let mut total_err = 0.0;
    for w in breaks.windows(2) {
        let (v, e, fl) = panel(&f, w[0], w[1]);
        evaluations += 21;
        total = total + v;
        total_err += e;
        place(
            Piece {
                a: w[0],
                b: w[1],
                value: v,
                error: e,
            },
            fl,
            &mut heap,
            &mut finished,
        );
    }

    let target = |total: T| tol.abs.max(tol.rel * (total + offset).magnitude());
    let mut exhausted = false;
    let (value, error) = loop {
        while total_err > target(total) {
            let Some(worst) = heap.pop() else { break };
            let mid = 0.5 * (worst.a + worst.b);
            let width = worst.b - worst.a;
            if width.abs() <= 1e3 * f64::EPSILON * worst.a.abs().max(worst.b.abs()).max(1e-300) {
                // cannot split further; freeze it
                place(worst, true, &mut heap, &mut finished);
                continue;
            }
            if heap.len() + finished.len() + 2 > tol.max_intervals {
                heap.push(worst);
                exhausted = true;
                break;
            }
            let (v1, e1, f1) = panel(&f, worst.a, mid);
            let (v2, e2, f2) = panel(&f, mid, worst.b);
            evaluations += 42;
            total = total - worst.value + v1 + v2;
            total_err += e1 + e2 - worst.error;
            place(
                Piece {
                    a: worst.a,
                    b: mid,
                    value: v1,
                    error: e1,
                },
                f1,
                &mut heap,
                &mut finished,
            );
            place(
                Piece {
                    a: mid,
                    b: worst.b,
                    value: v2,
                    error: e2,
                },
                f2,
                &mut heap,
                &mut finished,
            );
        }

        // resum to shed drift from the incremental updates
        let mut value = T::zero();
        let mut error = 0.0;
        for p in heap.iter().chain(finished.iter()) {
            value = value + p.value;
            error += p.error;
        }
        if exhausted || heap.is_empty() || error <= target(value) {
            break (value, error);
        }
        total = value;
        total_err = error;
    };
    let est = Estimate {
        value,
        error,
        evaluations,
    };
    if error > target(value) && error > 0.0 {
        // frozen pieces at roundoff level are accepted if they dominate
        let frozen: f64 = finished.iter().map(|p| p.error).sum();
        if error - frozen > target(value) {
            return Err(Error::Numerical {
                message: format!(
                    "adaptive quadrature did not converge within {} intervals",
                    tol.max_intervals
                ),
                estimate: value.magnitude(),
                error,
            });
        }
    }
    Ok(est)
}

/// Convenience wrapper for a plain interval.
pub fn integrate_interval<T, F>(f: F, a: f64, b: f64, tol: Tolerance) -> Result<Estimate<T>>
where
    T: QuadValue,
    F: Fn(f64) -> T,
{
    integrate(f, &[a, b], tol)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_is_exact() {
        let est = integrate_interval(
            |x: f64| x.powi(7) - 3.0 * x * x,
            -1.0,
            2.0,
            Tolerance::default(),
        )
        .unwrap();
        let exact = (2f64.powi(8) - 1.0) / 8.0 - (8.0 + 1.0);
        assert!((est.value - exact).abs() < 1e-12);
    }

    #[test]
    fn kink_with_breakpoint() {
        let breaks = prepare_breaks(-1.0, 2.0, [0.0]);
        let est = integrate(|x: f64| x.abs(), &breaks, Tolerance::relative(1e-13)).unwrap();
        assert!((est.value - 2.5).abs() < 1e-13);
        assert!(est.evaluations <= 42);
    }

    #[test]
    fn oscillatory_complex() {
        // int_0^{20} e^{-i 3 x} dx
        let breaks = prepare_breaks(0.0, 20.0, (1..10).map(|k| 2.0 * k as f64));
        let est = integrate(
            |x: f64| Complex64::from_polar(1.0, -3.0 * x),
            &breaks,
            Tolerance::relative(1e-12),
        )
        .unwrap();
        let exact = (Complex64::new(1.0, 0.0) - Complex64::from_polar(1.0, -60.0))
            / Complex64::new(0.0, 3.0);
        assert!((est.value - exact).norm() < 1e-12);
    }

    #[test]
    fn budget_exhaustion_reports_estimate() {
        let tol = Tolerance {
            rel: 1e-14,
            abs: 0.0,
            max_intervals: 4,
        };
        let err = integrate_interval(|x: f64| (1.0 / x).sin(), 1e-4, 1.0, tol).unwrap_err();
        match err {
            Error::Numerical { estimate, .. } => assert!(estimate.is_finite()),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn kronrod_nodes_integrate_cubic() {
        let s: f64 = kronrod_nodes(1.0, 3.0).map(|(x, w)| w * x * x * x).sum();
        assert!((s - 20.0).abs() < 1e-12);
    }

    #[test]
    fn breaks_are_clipped_and_deduped() {
        let b = prepare_breaks(0.0, 1.0, [0.5, 0.5, -1.0, 2.0, 1.0, f64::NAN]);
        assert_eq!(b, vec![0.0, 0.5, 1.0]);
    }
}
