//! Covariances between node occupancies in a two-node tandem and in two
//! parallel single-node queues under models M1 and M2.
//!
//! Given the intensities, counts at different nodes are independent Poisson
//! (different nodes of one stream are thinnings of it; different streams are
//! independent), so every covariance is the covariance of two weighted
//! integrals of the intensity, `Cov(∫ a(u) Λ_A(u) du, ∫ b(v) Λ_B(v) dv)`,
//! plus under M2 a term for jobs generated by the same arrival.
//! Splitting the square into `v <= u` and `u <= v` gives
//! `∫_0^t κ(v) [b(v) ∫_v^t a(u) e^{-r_A (u-v)} du + a(v) ∫_v^t b(u) e^{-r_B (u-v)} du] dv`
//! with `κ(v) = Cov(Λ_A(v), Λ_B(v))`.

use crate::distributions::ServiceLaw;
use crate::error::{Error, Result};
use crate::quadrature::{integrate_with_breaks, QuadratureConfig};
use crate::shotnoise::{component_covariance, mean_component, variance_component, ShotNoiseSpec};

use super::kernel::DecayTail;
use super::single::service_breaks;
use super::tandem::OccupancyProbabilities;

struct Weighted<'a> {
    a: &'a (dyn Fn(f64) -> f64 + Sync),
    b: &'a (dyn Fn(f64) -> f64 + Sync),
    r_a: f64,
    r_b: f64,
    kappa: &'a dyn Fn(f64) -> f64,
}

fn weighted_integral_covariance(w: Weighted<'_>, t: f64, breaks: &[f64], quad: &QuadratureConfig) -> Result<f64> {
    let inner = QuadratureConfig {
        abs_tol: quad.abs_tol * 0.1,
        ..*quad
    };
    let ta = DecayTail::new(Box::new(|u| (w.a)(u)), w.r_a, t, breaks, &inner)?;
    let tb = DecayTail::new(Box::new(|u| (w.b)(u)), w.r_b, t, breaks, &inner)?;
    let mut failure = None;
    let outer = integrate_with_breaks(
        |v| match (ta.eval(v), tb.eval(v)) {
            (Ok((ia, _)), Ok((ib, _))) => (w.kappa)(v) * ((w.b)(v) * ia + (w.a)(v) * ib),
            (Err(e), _) | (_, Err(e)) => {
                failure.get_or_insert(e);
                f64::NAN
            }
        },
        0.0,
        t,
        breaks,
        quad,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(outer?.value)
}

fn two_services(services: &[ServiceLaw]) -> Result<(ServiceLaw, ServiceLaw)> {
    if services.len() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            got: services.len(),
        });
    }
    services[0].validate()?;
    services[1].validate()?;
    Ok((services[0], services[1]))
}

/// `Cov(N_1(t), N_2(t))` for the two nodes of one tandem.
pub fn cov_tandem(spec: &ShotNoiseSpec, services: &[ServiceLaw], t: f64, quad: &QuadratureConfig) -> Result<f64> {
    super::single::require_scalar(spec)?;
    two_services(services)?;
    if t <= 0.0 {
        return Ok(0.0);
    }
    let occ = OccupancyProbabilities::new(services, t)?;
    let r = spec.rate(0);
    let second = |u: f64| occ.p_node(1, u);
    let first = |u: f64| occ.p_node(0, u);
    let kappa = |v: f64| variance_component(spec, 0, v);
    weighted_integral_covariance(
        Weighted {
            a: &second,
            b: &first,
            r_a: r,
            r_b: r,
            kappa: &kappa,
        },
        t,
        occ.breakpoints(),
        &occ.attainable(quad),
    )
}

/// `Cov(N_1(t), N_2(t))` for two single-node queues with separate arrival
/// streams driven by the two components of a simultaneously jumping intensity.
pub fn cov_m1(spec2: &ShotNoiseSpec, services: &[ServiceLaw], t: f64, quad: &QuadratureConfig) -> Result<f64> {
    spec2.validate()?;
    if spec2.dim() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, got: spec2.dim() });
    }
    let (j1, j2) = two_services(services)?;
    if t <= 0.0 {
        return Ok(0.0);
    }
    let cross = spec2.shots.cross_moment(0, 1)?;
    let (r1, r2) = (spec2.rate(0), spec2.rate(1));
    let c = spec2.nu * cross / (r1 + r2);
    let a = |u: f64| j1.survival(t - u);
    let b = |u: f64| j2.survival(t - u);
    let kappa = |v: f64| -c * (-(r1 + r2) * v).exp_m1();
    let mut breaks = service_breaks(&j1, t);
    breaks.extend(service_breaks(&j2, t));
    breaks.sort_by(f64::total_cmp);
    weighted_integral_covariance(
        Weighted {
            a: &a,
            b: &b,
            r_a: r1,
            r_b: r2,
            kappa: &kappa,
        },
        t,
        &breaks,
        quad,
    )
}

/// `Cov(N_1(t), N_2(t))` for two single-node queues receiving the same arrivals,
/// each job drawing independent service times at the two queues.
pub fn cov_m2(spec: &ShotNoiseSpec, services: &[ServiceLaw], t: f64, quad: &QuadratureConfig) -> Result<f64> {
    super::single::require_scalar(spec)?;
    let (j1, j2) = two_services(services)?;
    if t <= 0.0 {
        return Ok(0.0);
    }
    let r = spec.rate(0);
    let a = |u: f64| j1.survival(t - u);
    let b = |u: f64| j2.survival(t - u);
    let kappa = |v: f64| variance_component(spec, 0, v);
    let mut breaks = service_breaks(&j1, t);
    breaks.extend(service_breaks(&j2, t));
    breaks.sort_by(f64::total_cmp);
    let common = weighted_integral_covariance(
        Weighted {
            a: &a,
            b: &b,
            r_a: r,
            r_b: r,
            kappa: &kappa,
        },
        t,
        &breaks,
        quad,
    )?;
    Ok(common + m2_simultaneous_term(spec, services, t, quad)?)
}

/// `∫_0^t E Λ(u) P(J_1 > t - u) P(J_2 > t - u) du`, the excess of the M2
/// covariance over the M1 covariance at matched marginals.
pub fn m2_simultaneous_term(spec: &ShotNoiseSpec, services: &[ServiceLaw], t: f64, quad: &QuadratureConfig) -> Result<f64> {
    super::single::require_scalar(spec)?;
    let (j1, j2) = two_services(services)?;
    if t <= 0.0 {
        return Ok(0.0);
    }
    let mut breaks = service_breaks(&j1, t);
    breaks.extend(service_breaks(&j2, t));
    breaks.sort_by(f64::total_cmp);
    Ok(integrate_with_breaks(
        |u| mean_component(spec, 0, u) * j1.survival(t - u) * j2.survival(t - u),
        0.0,
        t,
        &breaks,
        quad,
    )?
    .value)
}

/// Covariance between components `i` and `j` at equal times, for reuse.
pub fn intensity_covariance(spec: &ShotNoiseSpec, i: usize, j: usize, t: f64) -> Result<f64> {
    component_covariance(spec, i, j, t, 0.0)
}
