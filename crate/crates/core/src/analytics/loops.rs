//! Two-node loop: node 1, then node 2, then back to node 1 with probability η.
//! Both services exponential with rate μ, so after `k` completed services the
//! job is at node 1 (k even) or node 2 (k odd) and the completions form a
//! Poisson(μ) process while the job is inside.

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Gamma};

use crate::distributions::ServiceLaw;
use crate::error::{Error, Result};
use crate::netsim::TransformQuery;
use crate::quadrature::{integrate, QuadratureConfig};
use crate::shotnoise::{mean_component, ShotNoiseSpec};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LoopProbabilities {
    pub node1: f64,
    pub node2: f64,
    pub exit: f64,
}

fn check_eta(eta: f64) -> Result<()> {
    if (0.0..1.0).contains(&eta) {
        Ok(())
    } else {
        Err(Error::invalid("eta", format!("must lie in [0, 1), got {eta}")))
    }
}

/// Last index kept in the loop series: the smallest `m` with `η^{m+1} / (1 - η) < 1e-10`.
pub fn loop_truncation(eta: f64) -> usize {
    let mut m = 0usize;
    let mut pow = eta;
    while pow / (1.0 - eta) >= 1e-10 {
        m += 1;
        pow *= eta;
    }
    m
}

/// Series form, truncated at [`loop_truncation`].
pub fn loop_probs_series(eta: f64, mu: f64, a: f64) -> Result<LoopProbabilities> {
    check_eta(eta)?;
    if a <= 0.0 {
        return Ok(LoopProbabilities { node1: 1.0, node2: 0.0, exit: 0.0 });
    }
    let m_star = loop_truncation(eta);
    let x = mu * a;
    let log_x = x.ln();
    let mut log_fact = 0.0;
    let (mut p1, mut p2, mut exit) = (0.0, 0.0, 0.0);
    let mut eta_m = 1.0;
    for m in 0..=m_star {
        let k = 2 * m;
        if k > 0 {
            log_fact += ((k - 1) as f64).ln() + (k as f64).ln();
        }
        let w_even = (-x + k as f64 * log_x - log_fact).exp();
        let w_odd = w_even * x / (k + 1) as f64;
        p1 += eta_m * w_even;
        p2 += eta_m * w_odd;
        let gamma = Gamma::new((k + 2) as f64, mu).expect("positive parameters");
        exit += eta_m * (1.0 - eta) * gamma.cdf(a);
        eta_m *= eta;
    }
    Ok(LoopProbabilities { node1: p1, node2: p2, exit })
}

/// Hyperbolic form `e^{-μa} cosh(μ√η a)` and `e^{-μa} sinh(μ√η a) / √η`; the
/// exit probability is the complement.
pub fn loop_probs_closed(eta: f64, mu: f64, a: f64) -> Result<LoopProbabilities> {
    check_eta(eta)?;
    if a <= 0.0 {
        return Ok(LoopProbabilities { node1: 1.0, node2: 0.0, exit: 0.0 });
    }
    let sq = eta.sqrt();
    let x = mu * a;
    let y = x * sq;
    let node1 = 0.5 * ((y - x).exp() + (-y - x).exp());
    let node2 = if y < 1.0 {
        let sinhc = if y == 0.0 { 1.0 } else { y.sinh() / y };
        x * (-x).exp() * sinhc
    } else {
        0.5 * ((y - x).exp() - (-y - x).exp()) / sq
    };
    Ok(LoopProbabilities {
        node1,
        node2,
        exit: (1.0 - node1 - node2).max(0.0),
    })
}

fn common_rate(service1: &ServiceLaw, service2: &ServiceLaw) -> Result<f64> {
    match (service1, service2) {
        (ServiceLaw::Exponential { rate: a }, ServiceLaw::Exponential { rate: b }) if a == b => Ok(*a),
        _ => Err(Error::invalid(
            "services",
            "loop formulas need exponential services with a common rate at both nodes",
        )),
    }
}

/// `(E N_1(t), E N_2(t))` for the loop.
pub fn loop_mean(spec: &ShotNoiseSpec, eta: f64, service1: &ServiceLaw, service2: &ServiceLaw, t: f64) -> Result<(f64, f64)> {
    super::single::require_scalar(spec)?;
    let mu = common_rate(service1, service2)?;
    check_eta(eta)?;
    if t <= 0.0 {
        return Ok((0.0, 0.0));
    }
    let cfg = QuadratureConfig::tight();
    let n1 = integrate(|u| mean_component(spec, 0, u) * loop_probs_series(eta, mu, t - u).unwrap().node1, 0.0, t, &cfg)?;
    let n2 = integrate(|u| mean_component(spec, 0, u) * loop_probs_series(eta, mu, t - u).unwrap().node2, 0.0, t, &cfg)?;
    Ok((n1.value, n2.value))
}

/// `E z_1^{N_1(t)} z_2^{N_2(t)} e^{-s Λ(t)}` for the loop.
pub fn loop_transform(
    spec: &ShotNoiseSpec,
    eta: f64,
    service1: &ServiceLaw,
    service2: &ServiceLaw,
    q: &TransformQuery,
    quad: &QuadratureConfig,
) -> Result<f64> {
    let mu = common_rate(service1, service2)?;
    check_eta(eta)?;
    q.validate(2, 1)?;
    let (t, z1, z2) = (q.t, q.z[0], q.z[1]);
    super::single::generic_transform(
        spec,
        move |u| {
            let p = loop_probs_series(eta, mu, t - u).expect("validated eta");
            (z1 - 1.0) * p.node1 + (z2 - 1.0) * p.node2
        },
        t,
        q.s[0],
        quad,
    )
}
