//! Shared nested-quadrature machinery.
//!
//! Every transform has the form
//! `log ξ = ν ∫_0^t (β(g(v)) - 1) dv - Σ_i λ0_i g_i(0)` with
//! `g_i(v) = s_i e^{-r_i (t - v)} - ∫_v^t c_i(u) e^{-r_i (u - v)} du`,
//! where `c_i <= 0` is the weight of `Λ_i` in the exponent.

use std::cell::RefCell;

use crate::error::{Error, Result};
use crate::quadrature::{integrate, integrate_with_breaks, Integral, QuadratureConfig};

/// Number of uniform cells of the tail cache (breakpoints are added on top).
const TAIL_CELLS: usize = 32;

/// `I(v) = ∫_v^t c(u) e^{-r (u - v)} du`, cached at cell boundaries so that an
/// evaluation only integrates over part of one cell.
pub(crate) struct DecayTail<'a> {
    c: Box<dyn Fn(f64) -> f64 + 'a>,
    r: f64,
    nodes: Vec<f64>,
    tail: Vec<f64>,
    cfg: QuadratureConfig,
    pub(crate) cache_err: f64,
}

impl<'a> DecayTail<'a> {
    pub(crate) fn new(c: Box<dyn Fn(f64) -> f64 + 'a>, r: f64, t: f64, breaks: &[f64], cfg: &QuadratureConfig) -> Result<Self> {
        let mut nodes: Vec<f64> = (0..=TAIL_CELLS).map(|k| t * k as f64 / TAIL_CELLS as f64).collect();
        nodes.extend(breaks.iter().copied().filter(|&b| b > 0.0 && b < t));
        nodes.sort_by(f64::total_cmp);
        let tol = 1e-13 * t.max(1.0);
        nodes.dedup_by(|a, b| (*a - *b).abs() <= tol);
        *nodes.last_mut().unwrap() = t;
        nodes[0] = 0.0;
        let mut tail = vec![0.0; nodes.len()];
        let mut cache_err = 0.0;
        for k in (0..nodes.len() - 1).rev() {
            let (a, b) = (nodes[k], nodes[k + 1]);
            let cell = integrate(|u| c(u) * (-r * (u - a)).exp(), a, b, cfg)?;
            tail[k] = cell.value + (-r * (b - a)).exp() * tail[k + 1];
            cache_err += cell.abs_err;
        }
        Ok(Self {
            c,
            r,
            nodes,
            tail,
            cfg: *cfg,
            cache_err,
        })
    }

    /// Value and local error estimate at `v ∈ [0, t]`.
    pub(crate) fn eval(&self, v: f64) -> Result<(f64, f64)> {
        let n = self.nodes.len();
        let t = self.nodes[n - 1];
        let v = v.clamp(0.0, t);
        let k = self.nodes.partition_point(|&x| x <= v).saturating_sub(1).min(n - 2);
        if v == self.nodes[k] {
            return Ok((self.tail[k], 0.0));
        }
        let b = self.nodes[k + 1];
        let r = self.r;
        let local = integrate(|u| (self.c)(u) * (-r * (u - v)).exp(), v, b, &self.cfg)?;
        Ok((local.value + (-r * (b - v)).exp() * self.tail[k + 1], local.abs_err))
    }
}

/// One intensity component entering a transform.
pub(crate) struct Component<'a> {
    pub r: f64,
    pub s: f64,
    pub lambda0: f64,
    /// Mean shot size, used only for error propagation.
    pub mean_shot: f64,
    /// `c(u)`, the (nonpositive) weight of `Λ(u)`; `None` when identically zero.
    pub coeff: Option<Box<dyn Fn(f64) -> f64 + 'a>>,
}

/// Tolerance below which a negative transform argument is rounding noise.
fn clamp_argument(x: f64, scale: f64) -> Result<f64> {
    if x >= 0.0 {
        Ok(x)
    } else if x > -1e-10 * scale.max(1.0) {
        Ok(0.0)
    } else {
        Err(Error::Domain(format!(
            "shot transform argument {x} is negative; z outside (0, 1] or a positive exponent weight"
        )))
    }
}

/// Evaluate `ξ` and an absolute error estimate.
pub(crate) fn shot_transform(
    nu: f64,
    beta: &dyn Fn(&[f64]) -> Result<f64>,
    comps: &[Component<'_>],
    t: f64,
    breaks: &[f64],
    cfg: &QuadratureConfig,
) -> Result<Integral> {
    cfg.validate()?;
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::invalid("t", format!("must be a nonnegative real, got {t}")));
    }
    let d = comps.len();
    let inner_cfg = QuadratureConfig {
        abs_tol: cfg.abs_tol * 0.1,
        ..*cfg
    };
    let mut tails = Vec::with_capacity(d);
    for c in comps {
        tails.push(match &c.coeff {
            Some(f) if t > 0.0 => Some(DecayTail::new(Box::new(|u| f(u)), c.r, t, breaks, &inner_cfg)?),
            _ => None,
        });
    }
    let scale: f64 = comps.iter().map(|c| c.s).sum::<f64>() + t;
    let g_at = |v: f64, out: &mut [f64]| -> Result<f64> {
        let mut err = 0.0;
        for (i, c) in comps.iter().enumerate() {
            let mut g = if c.s == 0.0 { 0.0 } else { c.s * (-c.r * (t - v)).exp() };
            if let Some(tail) = &tails[i] {
                let (val, e) = tail.eval(v)?;
                g -= val;
                err += c.mean_shot * (e + tail.cache_err);
            }
            out[i] = clamp_argument(g, scale)?;
        }
        Ok(err)
    };

    let mut g0 = vec![0.0; d];
    g_at(0.0, &mut g0)?;
    let deterministic: f64 = comps.iter().zip(&g0).map(|(c, g)| c.lambda0 * g).sum();

    if t == 0.0 {
        return Ok(Integral {
            value: (-deterministic).exp(),
            abs_err: 0.0,
            evaluations: 0,
        });
    }

    let failure: RefCell<Option<Error>> = RefCell::new(None);
    let max_inner_err = RefCell::new(0.0f64);
    let integrand = |v: f64| -> f64 {
        let mut g = vec![0.0; d];
        let res = g_at(v, &mut g).and_then(|e| {
            let b = beta(&g)?;
            Ok((b, e))
        });
        match res {
            Ok((b, e)) => {
                let mut m = max_inner_err.borrow_mut();
                *m = m.max(e);
                b - 1.0
            }
            Err(e) => {
                failure.borrow_mut().get_or_insert(e);
                f64::NAN
            }
        }
    };
    let outer = integrate_with_breaks(integrand, 0.0, t, breaks, cfg);
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    let outer = outer?;
    let log_xi = nu * outer.value - deterministic;
    let xi = log_xi.exp();
    let log_err = nu * (outer.abs_err + t * max_inner_err.into_inner());
    Ok(Integral {
        value: xi,
        abs_err: xi * log_err,
        evaluations: outer.evaluations,
    })
}
