//! Globally adaptive Gauss–Kronrod (10/21-point) quadrature.
//!
//! The bisection strategy follows QUADPACK's QAG: the subinterval with the
//! largest error estimate is split until the summed estimate falls below
//! `max(abs_tol, rel_tol * |I|)`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

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

const WGK: [f64; 11] = [
    0.011694638867371874278064396062192,
    0.032558162307964727478818972459390,
    0.054755896574351996031381300244580,
    0.075039674810919952767043140916190,
    0.093125454583697605535065465083366,
    0.109387158802297641899210590325805,
    0.123491976262065851077582734575658,
    0.134709217311473325928054001771707,
    0.142775938577060080797094273138717,
    0.147739104901338491374841515972068,
    0.149445554002916905664936468389821,
];

// Gauss weights for the nodes XGK[1], XGK[3], ..., XGK[9].
const WG: [f64; 5] = [
    0.066671344308688137593568809893332,
    0.149451349150580593145776339657697,
    0.219086362515982043995534934228163,
    0.269266719309996355091226921569469,
    0.295524224714752870173892994651338,
];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuadratureConfig {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_subdivisions: usize,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            abs_tol: 1e-9,
            rel_tol: 1e-8,
            max_subdivisions: 1 << 10,
        }
    }
}

impl QuadratureConfig {
    /// Near machine precision; used where results are finite-differenced.
    pub fn tight() -> Self {
        Self {
            abs_tol: 1e-14,
            rel_tol: 1e-13,
            max_subdivisions: 1 << 12,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.abs_tol > 0.0) {
            return Err(Error::invalid("quadrature.abs_tol", "must be positive"));
        }
        if !(self.rel_tol > 0.0) {
            return Err(Error::invalid("quadrature.rel_tol", "must be positive"));
        }
        if self.max_subdivisions == 0 {
            return Err(Error::invalid("quadrature.max_subdivisions", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Integral {
    pub value: f64,
    pub abs_err: f64,
    pub evaluations: usize,
}

impl Integral {
    pub const ZERO: Integral = Integral {
        value: 0.0,
        abs_err: 0.0,
        evaluations: 0,
    };
}

struct Piece {
    a: f64,
    b: f64,
    value: f64,
    err: f64,
}

impl PartialEq for Piece {
    fn eq(&self, other: &Self) -> bool {
        self.err.total_cmp(&other.err) == Ordering::Equal
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Piece {
    fn cmp(&self, other: &Self) -> Ordering {
        self.err.total_cmp(&other.err)
    }
}

fn rescale_error(err: f64, res_abs: f64, res_asc: f64) -> f64 {
    let mut e = err.abs();
    if res_asc != 0.0 && e != 0.0 {
        let scale = (200.0 * e / res_asc).powf(1.5);
        e = if scale < 1.0 { res_asc * scale } else { res_asc };
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        let min_err = 50.0 * f64::EPSILON * res_abs;
        if min_err > e {
            e = min_err;
        }
    }
    e
}

/// One 21-point Kronrod evaluation with its embedded 10-point Gauss error estimate.
pub fn gauss_kronrod<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let abs_half = half.abs();
    let fc = f(center);
    let mut res_g = 0.0;
    let mut res_k = fc * WGK[10];
    let mut res_abs = res_k.abs();
    let mut fv1 = [0.0; 10];
    let mut fv2 = [0.0; 10];
    for j in 0..10 {
        let dx = half * XGK[j];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        fv1[j] = f1;
        fv2[j] = f2;
        if j % 2 == 1 {
            res_g += WG[j / 2] * (f1 + f2);
        }
        res_k += WGK[j] * (f1 + f2);
        res_abs += WGK[j] * (f1.abs() + f2.abs());
    }
    let mean = res_k * 0.5;
    let mut res_asc = WGK[10] * (fc - mean).abs();
    for j in 0..10 {
        res_asc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let result = res_k * half;
    let err = rescale_error((res_k - res_g) * half, res_abs * abs_half, res_asc * abs_half);
    (result, err)
}

pub fn integrate<F: FnMut(f64) -> f64>(f: F, a: f64, b: f64, cfg: &QuadratureConfig) -> Result<Integral> {
    integrate_with_breaks(f, a, b, &[], cfg)
}

/// Adaptive integration over `[a, b]` with the interval pre-split at `breaks`
/// (points outside `(a, b)` are ignored).
pub fn integrate_with_breaks<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    breaks: &[f64],
    cfg: &QuadratureConfig,
) -> Result<Integral> {
    if a == b {
        return Ok(Integral::ZERO);
    }
    if a > b {
        let r = integrate_with_breaks(f, b, a, breaks, cfg)?;
        return Ok(Integral { value: -r.value, ..r });
    }
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::Domain(format!("integration bounds [{a}, {b}] must be finite")));
    }

    let mut cuts: Vec<f64> = Vec::with_capacity(breaks.len() + 2);
    cuts.push(a);
    let tiny = 1e-14 * (b - a).max(1.0);
    let mut inner: Vec<f64> = breaks
        .iter()
        .copied()
        .filter(|&x| x.is_finite() && x > a + tiny && x < b - tiny)
        .collect();
    inner.sort_by(f64::total_cmp);
    inner.dedup_by(|x, y| (*x - *y).abs() <= tiny);
    cuts.extend(inner);
    cuts.push(b);

    let mut heap = BinaryHeap::with_capacity(64);
    let mut total = 0.0;
    let mut total_err = 0.0;
    let mut evaluations = 0;
    for w in cuts.windows(2) {
        let (value, err) = gauss_kronrod(&mut f, w[0], w[1]);
        evaluations += 21;
        total += value;
        total_err += err;
        heap.push(Piece { a: w[0], b: w[1], value, err });
    }

    let mut pieces = heap.len();
    loop {
        let tol = cfg.abs_tol.max(cfg.rel_tol * total.abs());
        if total_err <= tol {
            break;
        }
        let worst = heap.pop().expect("at least one subinterval");
        let mid = 0.5 * (worst.a + worst.b);
        let unsplittable = mid <= worst.a || mid >= worst.b;
        if pieces >= cfg.max_subdivisions || unsplittable {
            return Err(Error::Quadrature {
                a: worst.a,
                b: worst.b,
                error: total_err,
            });
        }
        let (v1, e1) = gauss_kronrod(&mut f, worst.a, mid);
        let (v2, e2) = gauss_kronrod(&mut f, mid, worst.b);
        evaluations += 42;
        total += v1 + v2 - worst.value;
        total_err += e1 + e2 - worst.err;
        heap.push(Piece { a: worst.a, b: mid, value: v1, err: e1 });
        heap.push(Piece { a: mid, b: worst.b, value: v2, err: e2 });
        pieces += 1;
    }

    // Re-sum to shed the drift of the running updates.
    let (value, abs_err) = heap
        .iter()
        .fold((0.0, 0.0), |(v, e), p| (v + p.value, e + p.err));
    if !value.is_finite() {
        return Err(Error::NonFinite(format!("integral over [{a}, {b}]")));
    }
    Ok(Integral {
        value,
        abs_err,
        evaluations,
    })
}
