//! Tandems, parallel tandems under the two dependence models, and general
//! feedforward networks through their path decomposition.

use crate::distributions::{ConvolutionGrid, ServiceLaw, SumCdf};
use crate::error::{Error, Result};
use crate::netsim::{decompose, Dependence, NetworkSpec, TandemSpec, TransformQuery};
use crate::quadrature::{Integral, QuadratureConfig};
use crate::shotnoise::ShotNoiseSpec;

use super::kernel::{shot_transform, Component};

/// Where a job that arrived at time `u` is at time `t`.
#[derive(Clone, Debug)]
pub struct OccupancyProbabilities {
    t: f64,
    /// CDF of the first `k + 1` services, `k = 0..S`.
    prefix: Vec<SumCdf>,
    breaks: Vec<f64>,
}

impl OccupancyProbabilities {
    pub fn new(services: &[ServiceLaw], t: f64) -> Result<Self> {
        if services.is_empty() {
            return Err(Error::invalid("services", "a tandem needs at least one node"));
        }
        if !(t >= 0.0 && t.is_finite()) {
            return Err(Error::invalid("t", format!("must be a nonnegative real, got {t}")));
        }
        let grid = ConvolutionGrid::new(t.max(f64::MIN_POSITIVE));
        let mut prefix = Vec::with_capacity(services.len());
        let mut breaks = Vec::new();
        for k in 1..=services.len() {
            let s = SumCdf::new(&services[..k], grid)?;
            breaks.extend(s.breakpoints(&services[..k]).into_iter().map(|b| t - b).filter(|&u| u > 0.0 && u < t));
            prefix.push(s);
        }
        breaks.sort_by(f64::total_cmp);
        breaks.dedup();
        Ok(Self { t, prefix, breaks })
    }

    pub fn for_tandem(tandem: &TandemSpec, t: f64) -> Result<Self> {
        tandem.validate()?;
        Self::new(&tandem.services, t)
    }

    pub fn stages(&self) -> usize {
        self.prefix.len()
    }

    pub fn horizon(&self) -> f64 {
        self.t
    }

    /// Whether some prefix CDF comes from the convolution grid.
    pub fn uses_grid(&self) -> bool {
        self.prefix.iter().any(SumCdf::is_grid)
    }

    /// Quadrature settings no tighter than the grid CDF can support.
    pub fn attainable(&self, quad: &QuadratureConfig) -> QuadratureConfig {
        attainable(quad, self.uses_grid())
    }

    /// Arrival times `u` at which some probability has a kink or jump.
    pub fn breakpoints(&self) -> &[f64] {
        &self.breaks
    }

    /// `P(J_1 + ... + J_k <= t - u)`, with `k = 0` giving 1.
    fn prefix_cdf(&self, k: usize, u: f64) -> f64 {
        let a = (self.t - u).max(0.0);
        if k == 0 {
            1.0
        } else {
            self.prefix[k - 1].cdf_within(a)
        }
    }

    /// Probability that the job is at node `j` (0-based).
    pub fn p_node(&self, j: usize, u: f64) -> f64 {
        (self.prefix_cdf(j, u) - self.prefix_cdf(j + 1, u)).max(0.0)
    }

    /// Probability that the job has left the tandem.
    pub fn p_exit(&self, u: f64) -> f64 {
        self.prefix_cdf(self.stages(), u)
    }

    /// Node probabilities followed by the exit probability.
    pub fn probabilities(&self, u: f64) -> Vec<f64> {
        let mut out: Vec<f64> = (0..self.stages()).map(|j| self.p_node(j, u)).collect();
        out.push(self.p_exit(u));
        out
    }

    /// `f(u, z) - 1 = Σ_j (z_j - 1) p_j(u)`, scaled by the probability of joining.
    pub fn f_minus_one(&self, u: f64, z: &[f64], join_probability: f64) -> f64 {
        let mut acc = 0.0;
        let mut upper = 1.0;
        for (k, &zj) in z.iter().enumerate() {
            let lower = self.prefix_cdf(k + 1, u);
            if zj != 1.0 {
                acc += (zj - 1.0) * (upper - lower).max(0.0);
            }
            upper = lower;
        }
        join_probability * acc
    }

    /// `f(u, z) = p_exit(u) + Σ_j z_j p_j(u)`.
    pub fn f(&self, u: f64, z: &[f64]) -> f64 {
        1.0 + self.f_minus_one(u, z, 1.0)
    }
}

fn check_z(z: &[f64], expected: usize) -> Result<()> {
    if z.len() != expected {
        return Err(Error::DimensionMismatch { expected, got: z.len() });
    }
    if let Some(x) = z.iter().find(|x| !(**x > 0.0 && **x <= 1.0)) {
        return Err(Error::Domain(format!("z must lie in (0, 1], got {x}")));
    }
    Ok(())
}

pub fn occupancy_probs(tandem: &TandemSpec, t: f64) -> Result<OccupancyProbabilities> {
    OccupancyProbabilities::for_tandem(tandem, t)
}

/// `f_i(u, z)` of one tandem observed at time `t`.
pub fn f_tandem(tandem: &TandemSpec, t: f64, u: f64, z: &[f64]) -> Result<f64> {
    let p = occupancy_probs(tandem, t)?;
    check_z(z, p.stages())?;
    Ok(p.f(u, z))
}

/// `f(u, z)` for simultaneous arrivals in all tandems: the sum over joint
/// placements `(ℓ_1, ..., ℓ_d)` of `Π_i z_{i ℓ_i}` times the product of the
/// per-tandem placement probabilities (`z_{i, S_i + 1} = 1`).
pub fn f_m2(probs: &[OccupancyProbabilities], u: f64, z: &[Vec<f64>]) -> Result<f64> {
    if probs.len() != z.len() {
        return Err(Error::DimensionMismatch {
            expected: probs.len(),
            got: z.len(),
        });
    }
    for (p, zi) in probs.iter().zip(z) {
        check_z(zi, p.stages())?;
    }
    let marg: Vec<Vec<f64>> = probs.iter().map(|p| p.probabilities(u)).collect();
    let mut index = vec![0usize; probs.len()];
    let mut total = 0.0;
    loop {
        let mut term = 1.0;
        for (i, &l) in index.iter().enumerate() {
            term *= marg[i][l] * z[i].get(l).copied().unwrap_or(1.0);
        }
        total += term;
        // odometer over placements
        let mut i = 0;
        loop {
            if i == index.len() {
                return Ok(total);
            }
            index[i] += 1;
            if index[i] < marg[i].len() {
                break;
            }
            index[i] = 0;
            i += 1;
        }
    }
}

/// `Π_i (1 + d_i) - 1` without cancellation.
fn product_minus_one(d: impl Iterator<Item = f64>) -> f64 {
    let mut log = 0.0;
    for x in d {
        if x <= -1.0 {
            return -1.0;
        }
        log += x.ln_1p();
    }
    log.exp_m1()
}

fn split_z<'a>(tandems: &[TandemSpec], z: &'a [f64]) -> Vec<&'a [f64]> {
    let mut out = Vec::with_capacity(tandems.len());
    let mut at = 0;
    for t in tandems {
        out.push(&z[at..at + t.services.len()]);
        at += t.services.len();
    }
    out
}

fn total_nodes(tandems: &[TandemSpec]) -> usize {
    tandems.iter().map(|t| t.services.len()).sum()
}

/// One group of jobs generated together: routes with their joining
/// probabilities and per-stage `z`.
struct JobGroup {
    component: usize,
    routes: Vec<(OccupancyProbabilities, f64, Vec<f64>)>,
}

impl JobGroup {
    fn f_minus_one(&self, u: f64) -> f64 {
        self.routes.iter().map(|(p, q, z)| p.f_minus_one(u, z, *q)).sum()
    }
}

/// Grid CDFs carry interpolation error near 1e-11, so tolerances below
/// these floors would only exhaust the subdivision budget.
const GRID_ABS_TOL: f64 = 1e-10;
const GRID_REL_TOL: f64 = 1e-9;

pub(crate) fn attainable(quad: &QuadratureConfig, grid: bool) -> QuadratureConfig {
    if grid {
        QuadratureConfig {
            abs_tol: quad.abs_tol.max(GRID_ABS_TOL),
            rel_tol: quad.rel_tol.max(GRID_REL_TOL),
            ..*quad
        }
    } else {
        *quad
    }
}

fn transform_from_groups(
    spec: &ShotNoiseSpec,
    groups: &[JobGroup],
    simultaneous: bool,
    q: &TransformQuery,
    quad: &QuadratureConfig,
) -> Result<Integral> {
    let spec = spec.clone().normalized()?;
    let d = spec.dim();
    let mut breaks: Vec<f64> = groups
        .iter()
        .flat_map(|g| g.routes.iter().flat_map(|r| r.0.breakpoints().iter().copied()))
        .collect();
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let mut comps = Vec::with_capacity(d);
    for i in 0..d {
        let mine: Vec<&JobGroup> = groups.iter().filter(|g| g.component == i).collect();
        let coeff: Option<Box<dyn Fn(f64) -> f64 + '_>> = if mine.is_empty() {
            None
        } else if simultaneous {
            Some(Box::new(move |u| product_minus_one(mine.iter().map(|g| g.f_minus_one(u)))))
        } else {
            Some(Box::new(move |u| mine.iter().map(|g| g.f_minus_one(u)).sum()))
        };
        comps.push(Component {
            r: spec.rate(i),
            s: q.s[i],
            lambda0: spec.lambda0_at(i),
            mean_shot: spec.shots.mean(i),
            coeff,
        });
    }
    let grid = groups.iter().any(|g| g.routes.iter().any(|r| r.0.uses_grid()));
    let shots = spec.shots.clone();
    let beta = move |x: &[f64]| shots.joint_lst(x);
    shot_transform(spec.nu, &beta, &comps, q.t, &breaks, &attainable(quad, grid))
}

fn tandem_groups(tandems: &[TandemSpec], z: &[f64], t: f64) -> Result<Vec<JobGroup>> {
    tandems
        .iter()
        .zip(split_z(tandems, z))
        .map(|(td, zi)| {
            Ok(JobGroup {
                component: td.source,
                routes: vec![(OccupancyProbabilities::for_tandem(td, t)?, 1.0, zi.to_vec())],
            })
        })
        .collect()
}

fn check_sources(tandems: &[TandemSpec], d: usize) -> Result<()> {
    if let Some(t) = tandems.iter().find(|t| t.source >= d) {
        return Err(Error::invalid("tandems.source", format!("{} out of range for {d} components", t.source)));
    }
    Ok(())
}

/// Model M1: tandem `i` has its own arrival stream driven by component
/// `tandems[i].source`; `q.z` lists the nodes tandem by tandem.
pub fn network_transform_m1_detailed(
    spec: &ShotNoiseSpec,
    tandems: &[TandemSpec],
    q: &TransformQuery,
    quad: &QuadratureConfig,
) -> Result<Integral> {
    spec.validate()?;
    q.validate(total_nodes(tandems), spec.dim())?;
    check_sources(tandems, spec.dim())?;
    let groups = tandem_groups(tandems, &q.z, q.t)?;
    transform_from_groups(spec, &groups, false, q, quad)
}

pub fn network_transform_m1(spec: &ShotNoiseSpec, tandems: &[TandemSpec], q: &TransformQuery, quad: &QuadratureConfig) -> Result<f64> {
    network_transform_m1_detailed(spec, tandems, q, quad).map(|i| i.value)
}

/// Model M2: one scalar intensity whose arrivals enter every tandem at once.
pub fn network_transform_m2_detailed(
    spec: &ShotNoiseSpec,
    tandems: &[TandemSpec],
    q: &TransformQuery,
    quad: &QuadratureConfig,
) -> Result<Integral> {
    spec.validate()?;
    if spec.dim() != 1 {
        return Err(Error::DimensionMismatch { expected: 1, got: spec.dim() });
    }
    q.validate(total_nodes(tandems), 1)?;
    check_sources(tandems, 1)?;
    let groups = tandem_groups(tandems, &q.z, q.t)?;
    transform_from_groups(spec, &groups, true, q, quad)
}

pub fn network_transform_m2(spec: &ShotNoiseSpec, tandems: &[TandemSpec], q: &TransformQuery, quad: &QuadratureConfig) -> Result<f64> {
    network_transform_m2_detailed(spec, tandems, q, quad).map(|i| i.value)
}

/// Joint transform of a feedforward network with routing; `q.z` is indexed
/// by network node and `q.s` by intensity component.
pub fn network_transform(net: &NetworkSpec, spec: &ShotNoiseSpec, q: &TransformQuery, quad: &QuadratureConfig) -> Result<Integral> {
    spec.validate()?;
    net.validate(Some(spec.dim()))?;
    q.validate(net.nodes.len(), spec.dim())?;
    let paths = decompose(net)?;
    let mut groups: Vec<JobGroup> = net
        .sources
        .iter()
        .map(|s| JobGroup {
            component: s.component,
            routes: Vec::new(),
        })
        .collect();
    for p in paths {
        let z: Vec<f64> = p.nodes.iter().map(|&n| q.z[n]).collect();
        let probs = OccupancyProbabilities::for_tandem(&p.tandem, q.t)?;
        groups[p.source].routes.push((probs, p.probability, z));
    }
    transform_from_groups(spec, &groups, net.dependence == Dependence::M2, q, quad)
}
