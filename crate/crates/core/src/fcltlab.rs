//! Heavy-traffic experiments: the system with shot rate `nν`, its fluid path,
//! the diffusion-scaled occupancy `√n (N_n(t)/n - ρ(t))`, and the Gaussian
//! limit process obtained by Euler–Maruyama.
//!
//! Scaling multiplies `ν` and the initial level by `n`, so `E Λ_n = n E Λ` and
//! `Var Λ_n = n Var Λ`. Consequently `Var Ñ_n(t) = Var N(t)` for every `n`
//! and the limit process has the same marginal variances.

use std::io::{self, Write};

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::{ServiceLaw, ShotLaw};
use crate::error::{Error, Result};
use crate::netsim::{replicate, NetworkSpec};
use crate::quadrature::{integrate, QuadratureConfig};
use crate::rng::{seed_split, RngStream, StreamRole};
use crate::shotnoise::ShotNoiseSpec;
use crate::stats::{ks_two_sample, mean, mean_estimate, variance, variance_estimate, EstimateWithCI};

/// Default Euler–Maruyama step.
pub const DEFAULT_DELTA: f64 = 1.0 / 256.0;

/// Default cap on expected shots per replication (`n ν horizon`).
pub const DEFAULT_EVENT_BUDGET: f64 = 1e7;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalingExperiment {
    pub base_spec: ShotNoiseSpec,
    /// Exponential service rate.
    pub mu: f64,
    pub n_values: Vec<u64>,
    pub horizon: f64,
    pub reps: usize,
    pub time_grid: Vec<f64>,
    #[serde(default = "default_budget")]
    pub event_budget: f64,
}

fn default_budget() -> f64 {
    DEFAULT_EVENT_BUDGET
}

fn check_grid(grid: &[f64], horizon: f64) -> Result<()> {
    if grid.iter().any(|&t| !(0.0..=horizon).contains(&t)) {
        return Err(Error::invalid("time_grid", format!("points must lie in [0, {horizon}]")));
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("time_grid", "must be strictly increasing"));
    }
    Ok(())
}

impl ScalingExperiment {
    pub fn validate(&self) -> Result<()> {
        self.base_spec.validate()?;
        if self.base_spec.dim() != 1 {
            return Err(Error::invalid("base_spec", "must be one-dimensional"));
        }
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return Err(Error::invalid("mu", format!("must be positive, got {}", self.mu)));
        }
        if self.n_values.is_empty() || self.n_values[0] == 0 {
            return Err(Error::invalid("n_values", "must be nonempty positive integers"));
        }
        if self.n_values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("n_values", "must be strictly increasing"));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::invalid("horizon", format!("must be positive, got {}", self.horizon)));
        }
        if self.reps < 2 {
            return Err(Error::invalid("reps", "at least 2 replications are needed"));
        }
        if !(self.event_budget > 0.0) {
            return Err(Error::invalid("event_budget", "must be positive"));
        }
        check_grid(&self.time_grid, self.horizon)
    }

    pub fn service(&self) -> ServiceLaw {
        ServiceLaw::Exponential { rate: self.mu }
    }

    /// Shot-noise parameters with rate `nν` and initial level `n λ0`.
    pub fn scaled_spec(&self, n: u64) -> ShotNoiseSpec {
        let mut s = self.base_spec.clone();
        s.nu *= n as f64;
        s.lambda0 = s.lambda0.iter().map(|l| l * n as f64).collect();
        s
    }
}

/// Mean intensity `E Λ(t)` and its integral for a scalar specification.
#[derive(Clone, Copy, Debug, PartialEq)]
struct MeanIntensity {
    lambda0: f64,
    stationary: f64,
    r: f64,
}

impl MeanIntensity {
    fn new(spec: &ShotNoiseSpec) -> Result<Self> {
        spec.validate()?;
        let law: ShotLaw = match spec.shots.components.as_slice() {
            [law] => *law,
            _ => return Err(Error::invalid("shots", "must be one-dimensional")),
        };
        let r = spec.rate(0);
        Ok(Self {
            lambda0: spec.lambda0_at(0),
            stationary: spec.nu * law.mean() / r,
            r,
        })
    }

    fn at(&self, t: f64) -> f64 {
        self.stationary + (self.lambda0 - self.stationary) * (-self.r * t).exp()
    }

    fn integral(&self, t: f64) -> f64 {
        let decay = -(-self.r * t).exp_m1() / self.r;
        self.stationary * t + (self.lambda0 - self.stationary) * decay
    }
}

/// Solution of `ρ' = E Λ(t) - μ ρ`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FluidPath {
    intensity: MeanIntensity,
    mu: f64,
    rho0: f64,
}

pub fn fluid_path(spec: &ShotNoiseSpec, mu: f64, rho0: f64) -> Result<FluidPath> {
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(Error::invalid("mu", format!("must be positive, got {mu}")));
    }
    if !(rho0 >= 0.0 && rho0.is_finite()) {
        return Err(Error::invalid("rho0", format!("must be nonnegative, got {rho0}")));
    }
    Ok(FluidPath {
        intensity: MeanIntensity::new(spec)?,
        mu,
        rho0,
    })
}

impl FluidPath {
    /// `ρ(t) = ρ0 e^{-μt} + ∫_0^t E Λ(u) e^{-μ(t-u)} du`, in closed form.
    pub fn eval(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return self.rho0;
        }
        let MeanIntensity { lambda0, stationary, r } = self.intensity;
        let mu = self.mu;
        // ∫_0^t e^{-ru} e^{-μ(t-u)} du = e^{-rt} t (1 - e^{-(μ-r)t}) / ((μ-r)t)
        let x = (mu - r) * t;
        let ratio = if x == 0.0 { 1.0 } else { -(-x).exp_m1() / x };
        let mixed = (-r * t).exp() * t * ratio;
        self.rho0 * (-mu * t).exp() + stationary * -(-mu * t).exp_m1() / mu + (lambda0 - stationary) * mixed
    }

    pub fn on_grid(&self, grid: &[f64]) -> Result<Vec<f64>> {
        if grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("time_grid", "must be strictly increasing"));
        }
        Ok(grid.iter().map(|&t| self.eval(t)).collect())
    }

    pub fn mean_intensity(&self, t: f64) -> f64 {
        self.intensity.at(t)
    }

    pub fn integrated_mean_intensity(&self, t: f64) -> f64 {
        self.intensity.integral(t)
    }

    /// `ρ(t) - ρ(0) - ∫_0^t E Λ + μ ∫_0^t ρ`, with the last integral by quadrature.
    pub fn residual(&self, t: f64) -> Result<f64> {
        let int_rho = integrate(|u| self.eval(u), 0.0, t, &QuadratureConfig::tight())?.value;
        Ok(self.eval(t) - self.rho0 - self.integrated_mean_intensity(t) + self.mu * int_rho)
    }
}

/// Coefficients of the limit pair
/// `dΛ̂ = σ_Λ √(2r) dW_1 - r Λ̂ dt` and
/// `dN̂ = c √(E Λ + μ ρ) dW_2 + (Λ̂ - μ N̂) dt`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LimitProcessParams {
    /// Stationary standard deviation of the intensity, `√(ν E B² / (2r))`.
    pub sigma_lambda: f64,
    pub r: f64,
    pub mu: f64,
    pub fluid: FluidPath,
    /// Multiplier `c` on the occupancy diffusion coefficient (1 for the limit).
    pub noise_scale: f64,
}

impl LimitProcessParams {
    pub fn from_experiment(exp: &ScalingExperiment) -> Result<Self> {
        exp.validate()?;
        let spec = &exp.base_spec;
        let r = spec.rate(0);
        Ok(Self {
            sigma_lambda: (spec.nu * spec.shots.second_moment(0) / (2.0 * r)).sqrt(),
            r,
            mu: exp.mu,
            fluid: fluid_path(spec, exp.mu, 0.0)?,
            noise_scale: 1.0,
        })
    }

    pub fn diffusion(&self, u: f64) -> f64 {
        let v = self.fluid.mean_intensity(u) + self.mu * self.fluid.eval(u);
        self.noise_scale * v.max(0.0).sqrt()
    }

    /// `Var ∫_0^t Λ̂(u) du`, by quadrature of the integrated OU covariance
    /// `2 ∫_0^t ∫_0^u σ² (1 - e^{-2rv}) e^{-r(u-v)} dv du`.
    pub fn integrated_intensity_variance(&self, t: f64) -> Result<f64> {
        if t <= 0.0 {
            return Ok(0.0);
        }
        let (s2, r) = (self.sigma_lambda.powi(2), self.r);
        let inner = |u: f64| s2 * (-r * u).exp_m1().powi(2) / r;
        Ok(2.0 * integrate(inner, 0.0, t, &QuadratureConfig::tight())?.value)
    }
}

/// Replications by grid points.
#[derive(Clone, Debug, PartialEq)]
pub struct LimitSample {
    pub grid: Vec<f64>,
    pub occupancy: Vec<Vec<f64>>,
    pub intensity: Vec<Vec<f64>>,
}

fn normal_pair(rng: &mut RngStream) -> (f64, f64) {
    (StandardNormal.sample(rng), StandardNormal.sample(rng))
}

/// Euler–Maruyama for `(Λ̂, N̂)` from `(0, 0)` with step `delta`, landing
/// exactly on each grid point.
pub fn simulate_limit(params: &LimitProcessParams, grid: &[f64], reps: usize, seed: u64, delta: f64) -> Result<LimitSample> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::invalid("delta", format!("must be positive, got {delta}")));
    }
    let end = grid.last().copied().unwrap_or(0.0);
    check_grid(grid, end.max(0.0))?;
    let lambda_coeff = params.sigma_lambda * (2.0 * params.r).sqrt();
    let rows: Vec<(Vec<f64>, Vec<f64>)> = (0..reps as u64)
        .into_par_iter()
        .map(|k| {
            let mut rng = seed_split(seed, k, StreamRole::LimitSde);
            let (mut t, mut lam, mut occ) = (0.0f64, 0.0f64, 0.0f64);
            let mut out_n = Vec::with_capacity(grid.len());
            let mut out_l = Vec::with_capacity(grid.len());
            for &g in grid {
                while t < g {
                    let h = delta.min(g - t);
                    let (w1, w2) = normal_pair(&mut rng);
                    let sq = h.sqrt();
                    let dn = params.diffusion(t) * sq * w2 + (lam - params.mu * occ) * h;
                    lam += lambda_coeff * sq * w1 - params.r * lam * h;
                    occ += dn;
                    t = if g - t <= delta * (1.0 + 1e-9) { g } else { t + h };
                }
                out_n.push(occ);
                out_l.push(lam);
            }
            (out_n, out_l)
        })
        .collect();
    let (occupancy, intensity) = rows.into_iter().unzip();
    Ok(LimitSample {
        grid: grid.to_vec(),
        occupancy,
        intensity,
    })
}

/// Diffusion-scaled occupancy and arrivals of the `n`-scaled system.
#[derive(Clone, Debug, PartialEq)]
pub struct ScaledSample {
    pub n: u64,
    pub grid: Vec<f64>,
    /// `√n (N_n(t)/n - ρ(t))`, replications by grid points.
    pub occupancy: Vec<Vec<f64>>,
    /// `√n (A_n(t)/n - ∫_0^t E Λ)`, replications by grid points.
    pub arrivals: Vec<Vec<f64>>,
}

/// Master seed for the replications at scale `n`.
fn scale_seed(seed: u64, n: u64) -> u64 {
    use rand::RngCore;
    seed_split(seed, n, StreamRole::Shots).next_u64()
}

/// Full simulation of the `n`-scaled single queue on the experiment grid.
pub fn simulate_scaled(exp: &ScalingExperiment, n: u64, seed: u64) -> Result<ScaledSample> {
    exp.validate()?;
    if n == 0 {
        return Err(Error::invalid("n", "must be at least 1"));
    }
    let expected = n as f64 * exp.base_spec.nu * exp.horizon;
    if expected > exp.event_budget {
        return Err(Error::EventBudget {
            expected,
            budget: exp.event_budget,
        });
    }
    let spec = exp.scaled_spec(n);
    let fluid = fluid_path(&exp.base_spec, exp.mu, 0.0)?;
    let rho = fluid.on_grid(&exp.time_grid)?;
    let int_mean: Vec<f64> = exp.time_grid.iter().map(|&t| fluid.integrated_mean_intensity(t)).collect();
    let net = NetworkSpec::single_node(exp.service());
    let nf = n as f64;
    let sq = nf.sqrt();
    let grid = &exp.time_grid;
    let rows = replicate(&net, &spec, exp.horizon, scale_seed(seed, n), exp.reps, |rep| {
        let counts = rep.counts_on_grid(grid);
        let occ: Vec<f64> = counts.iter().zip(&rho).map(|(c, r)| sq * (c[0] as f64 / nf - r)).collect();
        let adm = &rep.admissions[0];
        let arr: Vec<f64> = grid
            .iter()
            .zip(&int_mean)
            .map(|(&t, m)| sq * (adm.partition_point(|&e| e <= t) as f64 / nf - m))
            .collect();
        (occ, arr)
    })?;
    let (occupancy, arrivals) = rows.into_iter().unzip();
    Ok(ScaledSample {
        n,
        grid: grid.clone(),
        occupancy,
        arrivals,
    })
}

fn column(rows: &[Vec<f64>], j: usize) -> Vec<f64> {
    rows.iter().map(|r| r[j]).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ArrivalFcltRow {
    pub t: f64,
    pub mean: EstimateWithCI,
    pub variance: EstimateWithCI,
    /// `∫_0^t E Λ + Var ∫_0^t Λ̂`.
    pub limit_variance: f64,
    pub relative_gap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ArrivalFcltReport {
    pub n: u64,
    pub seed: u64,
    pub rows: Vec<ArrivalFcltRow>,
}

impl ArrivalFcltReport {
    /// Centering within `z` standard errors and variances within `tol` relative.
    pub fn passes(&self, z: f64, tol: f64) -> bool {
        self.rows.iter().all(|r| {
            r.mean.within(0.0, z) && (r.limit_variance == 0.0 && r.variance.estimate == 0.0 || r.relative_gap.abs() <= tol)
        })
    }
}

pub fn arrival_fclt_report(exp: &ScalingExperiment, sample: &ScaledSample, seed: u64) -> Result<ArrivalFcltReport> {
    let params = LimitProcessParams::from_experiment(exp)?;
    let mut rows = Vec::with_capacity(sample.grid.len());
    for (j, &t) in sample.grid.iter().enumerate() {
        let xs = column(&sample.arrivals, j);
        let limit_variance = params.fluid.integrated_mean_intensity(t) + params.integrated_intensity_variance(t)?;
        let variance = variance_estimate(&xs, seed);
        let relative_gap = if limit_variance > 0.0 {
            variance.estimate / limit_variance - 1.0
        } else {
            0.0
        };
        rows.push(ArrivalFcltRow {
            t,
            mean: mean_estimate(&xs, seed),
            variance,
            limit_variance,
            relative_gap,
        });
    }
    Ok(ArrivalFcltReport {
        n: sample.n,
        seed,
        rows,
    })
}

pub fn arrival_fclt_check(exp: &ScalingExperiment, n: u64, seed: u64) -> Result<ArrivalFcltReport> {
    let sample = simulate_scaled(exp, n, seed)?;
    arrival_fclt_report(exp, &sample, seed)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub n: u64,
    pub t: f64,
    pub ks: f64,
    pub mean_gap: f64,
    /// `Var Ñ_n / Var N̂ - 1`.
    pub var_gap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentManifest {
    pub seed: u64,
    pub delta: f64,
    pub reps: usize,
    pub limit_reps: usize,
    pub n_values: Vec<u64>,
    pub horizon: f64,
    pub t_star: Vec<f64>,
    pub scale_seeds: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub rows: Vec<ConvergenceRow>,
    pub manifest: ExperimentManifest,
}

impl ConvergenceReport {
    pub fn row(&self, n: u64, t: f64) -> Option<&ConvergenceRow> {
        self.rows.iter().find(|r| r.n == n && r.t == t)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "n,t_star,ks,mean_gap,var_gap")?;
        for r in &self.rows {
            writeln!(w, "{},{},{},{},{}", r.n, r.t, r.ks, r.mean_gap, r.var_gap)?;
        }
        Ok(())
    }

    pub fn manifest_json(&self) -> String {
        serde_json::to_string_pretty(&self.manifest).expect("manifest serializes")
    }
}

/// Compare the marginals of `Ñ_n(t*)` with those of a simulated limit `N̂(t*)`
/// for every `n` of the experiment. `t_star` must be a subset of the grid.
pub fn convergence_report(
    exp: &ScalingExperiment,
    seed: u64,
    t_star: &[f64],
    limit_reps: usize,
    delta: f64,
) -> Result<ConvergenceReport> {
    exp.validate()?;
    if exp.n_values.len() < 2 {
        return Err(Error::invalid("n_values", "at least two scales are needed"));
    }
    let cols: Vec<usize> = t_star
        .iter()
        .map(|t| {
            exp.time_grid
                .iter()
                .position(|g| g == t)
                .ok_or_else(|| Error::invalid("t_star", format!("{t} is not a grid point")))
        })
        .collect::<Result<_>>()?;
    let params = LimitProcessParams::from_experiment(exp)?;
    let limit = simulate_limit(&params, &exp.time_grid, limit_reps, seed, delta)?;
    let mut rows = Vec::new();
    for &n in &exp.n_values {
        let sample = simulate_scaled(exp, n, seed)?;
        for (&j, &t) in cols.iter().zip(t_star) {
            let a = column(&sample.occupancy, j);
            let b = column(&limit.occupancy, j);
            let vb = variance(&b);
            rows.push(ConvergenceRow {
                n,
                t,
                ks: ks_two_sample(&a, &b),
                mean_gap: mean(&a) - mean(&b),
                var_gap: if vb > 0.0 { variance(&a) / vb - 1.0 } else { 0.0 },
            });
        }
    }
    Ok(ConvergenceReport {
        rows,
        manifest: ExperimentManifest {
            seed,
            delta,
            reps: exp.reps,
            limit_reps,
            n_values: exp.n_values.clone(),
            horizon: exp.horizon,
            t_star: t_star.to_vec(),
            scale_seeds: exp.n_values.iter().map(|&n| scale_seed(seed, n)).collect(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytics::{exact_mean_var_exponential, integrated_intensity_variance};
    use crate::stats::correlation_estimate;

    fn base() -> ShotNoiseSpec {
        ShotNoiseSpec::scalar(2.0, 1.0, ShotLaw::Exponential { mean: 1.0 })
    }

    fn experiment(reps: usize) -> ScalingExperiment {
        ScalingExperiment {
            base_spec: base(),
            mu: 1.0,
            n_values: vec![1, 10],
            horizon: 2.0,
            reps,
            time_grid: vec![0.0, 1.0, 2.0],
            event_budget: DEFAULT_EVENT_BUDGET,
        }
    }

    #[test]
    fn fluid_path_matches_queue_mean() {
        for (r, mu) in [(1.0, 1.0), (1.0, 2.5), (0.7, 0.3)] {
            let spec = ShotNoiseSpec::scalar(2.0, r, ShotLaw::Exponential { mean: 1.0 }).with_lambda0(vec![0.4]);
            let f = fluid_path(&spec, mu, 0.0).unwrap();
            assert_eq!(f.eval(0.0), 0.0);
            for t in [0.1, 1.0, 3.0, 10.0] {
                let (m, _) = exact_mean_var_exponential(&spec, mu, t).unwrap();
                assert!((f.eval(t) - m).abs() < 1e-10, "r={r} mu={mu} t={t}");
                assert!(f.residual(t).unwrap().abs() < 1e-8);
            }
            assert!((f.eval(200.0) - 2.0 / r / mu).abs() < 1e-10);
        }
    }

    #[test]
    fn fluid_residual_with_initial_content() {
        let f = fluid_path(&base(), 1.3, 2.0).unwrap();
        assert_eq!(f.eval(0.0), 2.0);
        for t in [0.5, 2.0, 7.0] {
            assert!(f.residual(t).unwrap().abs() < 1e-8);
        }
    }

    #[test]
    fn experiment_validation() {
        let mut e = experiment(10);
        assert!(e.validate().is_ok());
        e.n_values = vec![10, 1];
        assert!(e.validate().is_err());
        let mut e = experiment(10);
        e.time_grid = vec![0.0, 3.0];
        assert!(e.validate().is_err());
    }

    #[test]
    fn event_budget_guard() {
        let mut e = experiment(10);
        e.event_budget = 100.0;
        assert!(matches!(simulate_scaled(&e, 1000, 1), Err(Error::EventBudget { .. })));
    }

    #[test]
    fn zero_noise_limit_is_zero() {
        let spec = ShotNoiseSpec::scalar(1e-300, 1.0, ShotLaw::Deterministic { value: 1.0 });
        let params = LimitProcessParams {
            sigma_lambda: 0.0,
            r: 1.0,
            mu: 1.0,
            fluid: fluid_path(&spec, 1.0, 0.0).unwrap(),
            noise_scale: 0.0,
        };
        let s = simulate_limit(&params, &[0.5, 1.0], 5, 3, DEFAULT_DELTA).unwrap();
        assert!(s.occupancy.iter().flatten().all(|&x| x == 0.0));
    }

    #[test]
    fn integrated_ou_variance_matches_closed_form() {
        let p = LimitProcessParams::from_experiment(&experiment(10)).unwrap();
        for t in [0.0, 0.5, 2.0, 9.0] {
            let q = p.integrated_intensity_variance(t).unwrap();
            let c = integrated_intensity_variance(&base(), t).unwrap();
            assert!((q - c).abs() < 1e-10 * c.max(1.0));
        }
    }

    #[test]
    fn limit_marginals_match_closed_forms() {
        let p = LimitProcessParams::from_experiment(&experiment(10)).unwrap();
        let grid = [1.0, 2.0, 6.0];
        let s = simulate_limit(&p, &grid, 20_000, 5, DEFAULT_DELTA).unwrap();
        for (j, &t) in grid.iter().enumerate() {
            let (_, var_n) = exact_mean_var_exponential(&base(), 1.0, t).unwrap();
            let vn = variance_estimate(&column(&s.occupancy, j), 0);
            assert!(vn.within(var_n, 4.0), "t={t}: {vn:?} vs {var_n}");
            let var_l = p.sigma_lambda.powi(2) * -(-2.0 * t).exp_m1();
            let vl = variance_estimate(&column(&s.intensity, j), 0);
            assert!(vl.within(var_l, 4.0), "t={t}: {vl:?} vs {var_l}");
        }
    }

    #[test]
    fn step_refinement_is_stable() {
        let p = LimitProcessParams::from_experiment(&experiment(10)).unwrap();
        let grid = [1.0, 3.0];
        let a = simulate_limit(&p, &grid, 20_000, 9, DEFAULT_DELTA).unwrap();
        let b = simulate_limit(&p, &grid, 20_000, 9, DEFAULT_DELTA / 2.0).unwrap();
        for j in 0..grid.len() {
            let m2 = |s: &LimitSample| s.occupancy.iter().map(|r| r[j] * r[j]).sum::<f64>() / s.occupancy.len() as f64;
            assert!((m2(&a) / m2(&b) - 1.0).abs() < 0.02);
        }
    }

    #[test]
    fn noise_scaling_scales_standard_deviation() {
        let p = LimitProcessParams::from_experiment(&experiment(10)).unwrap();
        let q = LimitProcessParams {
            sigma_lambda: 2.0 * p.sigma_lambda,
            noise_scale: 2.0,
            ..p
        };
        let a = simulate_limit(&p, &[2.0], 20_000, 4, DEFAULT_DELTA).unwrap();
        let b = simulate_limit(&q, &[2.0], 20_000, 4, DEFAULT_DELTA).unwrap();
        // same driving noise, so the paths are exact multiples
        for (x, y) in a.occupancy.iter().zip(&b.occupancy) {
            assert!((y[0] - 2.0 * x[0]).abs() < 1e-9 * (1.0 + x[0].abs()));
        }
    }

    #[test]
    fn brownian_drivers_are_uncorrelated() {
        let mut rng = seed_split(8, 0, StreamRole::LimitSde);
        let (xs, ys): (Vec<f64>, Vec<f64>) = (0..50_000).map(|_| normal_pair(&mut rng)).unzip();
        assert!(correlation_estimate(&xs, &ys, 8).within(0.0, 4.0));
    }

    #[test]
    fn unit_scale_is_recentred_occupancy() {
        let e = experiment(200);
        let s = simulate_scaled(&e, 1, 3).unwrap();
        let rho = fluid_path(&base(), 1.0, 0.0).unwrap().on_grid(&e.time_grid).unwrap();
        for row in &s.occupancy {
            assert_eq!(row[0], 0.0);
            for (x, r) in row.iter().zip(&rho) {
                let n = x + r;
                assert!((n - n.round()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn scaled_variance_matches_unscaled_variance() {
        let e = experiment(4000);
        let s = simulate_scaled(&e, 10, 11).unwrap();
        for (j, &t) in e.time_grid.iter().enumerate().skip(1) {
            let (_, v) = exact_mean_var_exponential(&base(), 1.0, t).unwrap();
            assert!(variance_estimate(&column(&s.occupancy, j), 0).within(v, 4.0));
            assert!(mean_estimate(&column(&s.occupancy, j), 0).within(0.0, 4.0));
        }
        let rep = arrival_fclt_report(&e, &s, 11).unwrap();
        assert_eq!(rep.rows[0].limit_variance, 0.0);
        assert!(rep.passes(4.0, 0.15), "{rep:?}");
    }

    #[test]
    fn identical_samples_have_zero_distance() {
        let xs = [0.1, -0.3, 2.0];
        assert_eq!(ks_two_sample(&xs, &xs), 0.0);
    }

    #[test]
    fn report_is_deterministic_and_serializes() {
        let e = experiment(50);
        let a = convergence_report(&e, 2, &[1.0, 2.0], 200, DEFAULT_DELTA).unwrap();
        let b = convergence_report(&e, 2, &[1.0, 2.0], 200, DEFAULT_DELTA).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.rows.len(), 4);
        let mut buf = Vec::new();
        a.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("n,t_star,ks,mean_gap,var_gap\n"));
        assert!(a.manifest_json().contains("\"delta\""));
        assert!(convergence_report(&e, 2, &[1.5], 10, DEFAULT_DELTA).is_err());
    }
}
