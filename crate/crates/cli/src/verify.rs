//! Formula-versus-simulation battery for one configured intensity and service law.

use rand::RngCore;
use serde::Serialize;
use sncox::analytics::{
    cov_m1, cov_m2, cov_tandem, evaluate_batch, exact_mean_var_exponential, f_m2, f_tandem, generic_transform, h_function,
    integrated_intensity_variance, intensity_covariance, joint_transform, joint_transform_detailed, loop_mean,
    loop_probs_closed, loop_probs_series, loop_transform, m2_simultaneous_term, mean_n, network_transform,
    network_transform_m1, network_transform_m2, occupancy_probs, pgf_moments, var_n, QuadratureConfig, TransformQuery,
};
use sncox::distributions::{ServiceLaw, ShotLawVector};
use sncox::netsim::{estimate_joint_pgf, replicate, Dependence, NetworkSpec, TandemSpec};
use sncox::rng::{seed_split, StreamRole};
use sncox::shotnoise::{mean_at, simulate_paths, variance_at, ShotNoiseSpec};
use sncox::stats::{correlation_estimate, covariance_estimate, mean_estimate, variance_estimate, EstimateWithCI};

use crate::config::{ExperimentConfig, NetworkConfig};
use crate::RunError;

/// Statistical checks pass at `|z| <= Z_MAX`.
pub const Z_MAX: f64 = 4.0;

/// Every analytics operation the battery must exercise.
pub const REQUIRED_OPERATIONS: &[&str] = &[
    "cov_m1",
    "cov_m2",
    "cov_tandem",
    "evaluate_batch",
    "exact_mean_var_exponential",
    "f_m2",
    "f_tandem",
    "generic_transform",
    "h_function",
    "integrated_intensity_variance",
    "intensity_covariance",
    "joint_transform",
    "loop_mean",
    "loop_probs_closed",
    "loop_probs_series",
    "loop_transform",
    "m2_simultaneous_term",
    "mean_n",
    "network_transform",
    "network_transform_m1",
    "network_transform_m2",
    "occupancy_probs",
    "pgf_moments",
    "var_n",
];

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Criterion {
    /// Monte Carlo comparison, pass at `|z| <= max`.
    ZScore { max: f64 },
    /// Deterministic comparison, pass at `|analytic - reference| <= max * |reference|` (absolute when the reference is 0).
    Relative { max: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub operations: Vec<String>,
    pub analytic: f64,
    /// Monte Carlo estimate, or the reference value of a deterministic comparison.
    pub estimate: f64,
    pub std_error: f64,
    pub z_score: Option<f64>,
    pub criterion: Criterion,
    pub pass: bool,
}

impl Check {
    fn statistical(name: String, ops: &[&str], analytic: f64, est: EstimateWithCI) -> Self {
        let z = est.z_score(analytic);
        Self {
            name,
            operations: ops.iter().map(|s| s.to_string()).collect(),
            analytic,
            estimate: est.estimate,
            std_error: est.std_error,
            z_score: Some(z),
            criterion: Criterion::ZScore { max: Z_MAX },
            pass: z.abs() <= Z_MAX,
        }
    }

    fn numerical(name: String, ops: &[&str], analytic: f64, reference: f64, tol: f64) -> Self {
        Self {
            name,
            operations: ops.iter().map(|s| s.to_string()).collect(),
            analytic,
            estimate: reference,
            std_error: 0.0,
            z_score: None,
            criterion: Criterion::Relative { max: tol },
            pass: relative_ok(analytic, reference, tol),
        }
    }

    /// Recompute the pass flag from the recorded numbers.
    pub fn consistent(&self) -> bool {
        let expected = match self.criterion {
            Criterion::ZScore { max } => self.z_score.is_some_and(|z| z.abs() <= max),
            Criterion::Relative { max } => relative_ok(self.analytic, self.estimate, max),
        };
        expected == self.pass
    }
}

fn relative_ok(a: f64, b: f64, tol: f64) -> bool {
    let scale = if b == 0.0 { 1.0 } else { b.abs() };
    (a - b).abs() <= tol * scale
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VerifyReport {
    pub seed: u64,
    pub reps: usize,
    pub horizon: f64,
    pub checks: Vec<Check>,
    pub covered: Vec<String>,
    pub missing: Vec<String>,
    pub all_pass: bool,
}

impl VerifyReport {
    fn new(seed: u64, reps: usize, horizon: f64, checks: Vec<Check>) -> Self {
        let mut covered: Vec<String> = checks.iter().flat_map(|c| c.operations.iter().cloned()).collect();
        covered.sort();
        covered.dedup();
        let missing: Vec<String> = REQUIRED_OPERATIONS
            .iter()
            .filter(|op| !covered.iter().any(|c| c == *op))
            .map(|s| s.to_string())
            .collect();
        let all_pass = missing.is_empty() && checks.iter().all(|c| c.pass);
        Self {
            seed,
            reps,
            horizon,
            checks,
            covered,
            missing,
            all_pass,
        }
    }

    pub fn failures(&self) -> usize {
        self.checks.iter().filter(|c| !c.pass).count() + self.missing.len()
    }
}

fn scenario_seed(seed: u64, k: u64) -> u64 {
    seed_split(seed, k, StreamRole::Routing).next_u64()
}

fn default_queries(t: f64) -> Vec<TransformQuery> {
    vec![
        TransformQuery::new(t, vec![0.5], vec![0.0]),
        TransformQuery::new(t, vec![0.8], vec![0.5]),
        TransformQuery::new(0.5 * t, vec![0.3], vec![1.0]),
    ]
}

/// Run the battery. The configuration must describe a one-dimensional
/// intensity feeding a single node; networks used by the battery are built
/// from that service law.
pub fn verify(cfg: &ExperimentConfig) -> Result<VerifyReport, RunError> {
    cfg.validate()?;
    let spec = cfg.shotnoise.clone().normalized()?;
    if spec.dim() != 1 {
        return Err(RunError::Config("shotnoise: verify needs a one-dimensional intensity".into()));
    }
    let service = match cfg.network {
        NetworkConfig::Single { service } => service,
        _ => return Err(RunError::Config("network: verify needs a single-node system".into())),
    };
    let (t, reps, seed) = (cfg.horizon, cfg.reps, cfg.seed);
    let quad = QuadratureConfig::default();
    let tight = QuadratureConfig::tight();
    // closed forms need exponential service; use the mean-matched one otherwise
    let mu = match service {
        ServiceLaw::Exponential { rate } => rate,
        other => 1.0 / other.mean(),
    };
    let expo = ServiceLaw::Exponential { rate: mu };
    let mut checks = Vec::new();

    // intensity
    let paths = simulate_paths(&spec, t, scenario_seed(seed, 0), reps)?;
    let levels: Vec<f64> = paths.iter().map(|p| p.level_component(t, 0)).collect();
    let integrals: Vec<f64> = paths.iter().map(|p| p.integrated_component(0.0, t, 0)).collect();
    checks.push(Check::statistical("intensity mean".into(), &[], mean_at(&spec, t)[0], mean_estimate(&levels, seed)));
    checks.push(Check::statistical(
        "intensity variance".into(),
        &[],
        variance_at(&spec, t)[0],
        variance_estimate(&levels, seed),
    ));
    checks.push(Check::statistical(
        "integrated intensity variance".into(),
        &["integrated_intensity_variance"],
        integrated_intensity_variance(&spec, t)?,
        variance_estimate(&integrals, seed),
    ));

    // single queue
    let single = NetworkSpec::single_node(service);
    let queries = if cfg.queries.is_empty() {
        default_queries(t)
    } else {
        cfg.queries.clone()
    };
    let qseed = scenario_seed(seed, 1);
    for (i, q) in queries.iter().enumerate() {
        let a = joint_transform(&spec, &service, q, &quad)?;
        let est = estimate_joint_pgf(&single, &spec, q, reps, qseed.wrapping_add(i as u64))?;
        checks.push(Check::statistical(format!("single transform t={} z={:?} s={:?}", q.t, q.z, q.s), &["joint_transform"], a, est));
    }
    let q0 = &queries[0];
    let z0 = q0.z[0];
    let g = generic_transform(&spec, |u| (z0 - 1.0) * service.survival(q0.t - u), q0.t, q0.s[0], &quad)?;
    checks.push(Check::numerical(
        "generic transform reproduces single transform".into(),
        &["generic_transform"],
        g,
        joint_transform(&spec, &service, q0, &quad)?,
        1e-8,
    ));
    let batch = evaluate_batch(&queries, |q| joint_transform_detailed(&spec, &service, q, &quad))?;
    let worst = batch
        .iter()
        .zip(&queries)
        .map(|(row, q)| (row.value - joint_transform(&spec, &service, q, &quad).unwrap_or(f64::NAN)).abs())
        .fold(0.0, f64::max);
    checks.push(Check::numerical("batch rows equal single evaluations".into(), &["evaluate_batch"], worst, 0.0, 1e-14));

    let counts = replicate(&single, &spec, t, scenario_seed(seed, 2), reps, |r| r.counts_at(t)[0] as f64)?;
    let m = mean_n(&spec, &service, t)?;
    let v = var_n(&spec, &service, t, &tight)?;
    checks.push(Check::statistical("queue mean".into(), &["mean_n"], m, mean_estimate(&counts, seed)));
    checks.push(Check::statistical("queue variance".into(), &["var_n"], v, variance_estimate(&counts, seed)));
    let unit = TransformQuery::new(t, vec![1.0], vec![0.0]);
    let eval = |q: &TransformQuery| joint_transform(&spec, &service, q, &tight);
    let d1 = pgf_moments(eval, &unit, 0, 1)?;
    let d2 = pgf_moments(eval, &unit, 0, 2)?;
    checks.push(Check::numerical("transform derivative gives the mean".into(), &["pgf_moments"], d1, m, 1e-4));
    checks.push(Check::numerical(
        "transform second derivative gives the variance".into(),
        &["pgf_moments"],
        d2 + d1 - d1 * d1,
        v,
        1e-3,
    ));

    let (em, ev) = exact_mean_var_exponential(&spec, mu, t)?;
    let exact_ops = ["exact_mean_var_exponential", "h_function"];
    checks.push(Check::numerical("closed-form mean".into(), &exact_ops, em, mean_n(&spec, &expo, t)?, 1e-6));
    checks.push(Check::numerical("closed-form variance".into(), &exact_ops, ev, var_n(&spec, &expo, t, &tight)?, 1e-6));
    let r = spec.rate(0);
    let stationary = spec.nu * spec.shots.mean(0) / r;
    let lambda0_part = {
        let l0 = spec.lambda0_at(0);
        let x = (mu - r) * t;
        let ratio = if x == 0.0 { 1.0 } else { -(-x).exp_m1() / x };
        l0 * t * (-r * t).exp() * ratio
    };
    checks.push(Check::numerical(
        "closed-form mean through the h function".into(),
        &["h_function"],
        stationary / mu * h_function(r, mu, t) + lambda0_part,
        em,
        1e-12,
    ));
    let expo_counts = replicate(&NetworkSpec::single_node(expo), &spec, t, scenario_seed(seed, 3), reps, |r| r.counts_at(t)[0] as f64)?;
    checks.push(Check::statistical("closed-form variance vs simulation".into(), &exact_ops, ev, variance_estimate(&expo_counts, seed)));

    // two-node tandem
    let tandem = TandemSpec::new(vec![service, expo], 0);
    let tnet = NetworkSpec::parallel_tandems(std::slice::from_ref(&tandem), Dependence::Single);
    let tq = TransformQuery::new(t, vec![0.6, 0.7], vec![0.2]);
    checks.push(Check::statistical(
        "tandem transform".into(),
        &["network_transform"],
        network_transform(&tnet, &spec, &tq, &quad)?.value,
        estimate_joint_pgf(&tnet, &spec, &tq, reps, scenario_seed(seed, 4))?,
    ));
    let tcounts = replicate(&tnet, &spec, t, scenario_seed(seed, 5), reps, |r| {
        let c = r.counts_at(t);
        (c[0] as f64, c[1] as f64)
    })?;
    let (a, b): (Vec<f64>, Vec<f64>) = tcounts.into_iter().unzip();
    let services2 = [service, expo];
    checks.push(Check::statistical(
        "tandem covariance".into(),
        &["cov_tandem"],
        cov_tandem(&spec, &services2, t, &tight)?,
        covariance_estimate(&a, &b, seed),
    ));
    let probs = occupancy_probs(&tandem, t)?;
    let worst = (0..=20)
        .map(|k| {
            let u = t * k as f64 / 20.0;
            let ft = f_tandem(&tandem, t, u, &[1.0, 1.0]).unwrap_or(f64::NAN);
            let fm = f_m2(std::slice::from_ref(&probs), u, &[vec![1.0, 1.0]]).unwrap_or(f64::NAN);
            (ft - 1.0).abs().max((fm - 1.0).abs())
        })
        .fold(0.0, f64::max);
    checks.push(Check::numerical("placement probabilities sum to one".into(), &["f_tandem", "f_m2", "occupancy_probs"], worst, 0.0, 1e-14));

    // two parallel queues: M1 on a coupled pair of identical components, M2 on one intensity
    let spec2 = ShotNoiseSpec {
        nu: spec.nu,
        r: vec![r, r],
        shots: ShotLawVector::comonotone(vec![spec.shots.components[0]; 2]),
        lambda0: vec![spec.lambda0_at(0); 2],
    };
    let pair = [TandemSpec::new(vec![service], 0), TandemSpec::new(vec![expo], 1)];
    let m1_net = NetworkSpec::parallel_tandems(&pair, Dependence::M1);
    let pair_m2 = [TandemSpec::new(vec![service], 0), TandemSpec::new(vec![expo], 0)];
    let m2_net = NetworkSpec::parallel_tandems(&pair_m2, Dependence::M2);
    let pq1 = TransformQuery::new(t, vec![0.6, 0.7], vec![0.1, 0.3]);
    let pq2 = TransformQuery::new(t, vec![0.6, 0.7], vec![0.2]);
    checks.push(Check::statistical(
        "M1 transform".into(),
        &["network_transform_m1"],
        network_transform_m1(&spec2, &pair, &pq1, &quad)?,
        estimate_joint_pgf(&m1_net, &spec2, &pq1, reps, scenario_seed(seed, 6))?,
    ));
    checks.push(Check::statistical(
        "M2 transform".into(),
        &["network_transform_m2"],
        network_transform_m2(&spec, &pair_m2, &pq2, &quad)?,
        estimate_joint_pgf(&m2_net, &spec, &pq2, reps, scenario_seed(seed, 7))?,
    ));
    let m1_sample = replicate(&m1_net, &spec2, t, scenario_seed(seed, 8), reps, |rep| {
        let c = rep.counts_at(t);
        [c[0] as f64, c[1] as f64, rep.path.level_component(t, 0), rep.path.level_component(t, 1)]
    })?;
    let col = |rows: &[[f64; 4]], j: usize| rows.iter().map(|r| r[j]).collect::<Vec<f64>>();
    let c1 = cov_m1(&spec2, &services2, t, &tight)?;
    checks.push(Check::statistical("M1 covariance".into(), &["cov_m1"], c1, covariance_estimate(&col(&m1_sample, 0), &col(&m1_sample, 1), seed)));
    checks.push(Check::statistical(
        "coupled intensity covariance".into(),
        &["intensity_covariance"],
        intensity_covariance(&spec2, 0, 1, t)?,
        covariance_estimate(&col(&m1_sample, 2), &col(&m1_sample, 3), seed),
    ));
    let m2_sample = replicate(&m2_net, &spec, t, scenario_seed(seed, 9), reps, |rep| {
        let c = rep.counts_at(t);
        (c[0] as f64, c[1] as f64)
    })?;
    let (x2, y2): (Vec<f64>, Vec<f64>) = m2_sample.into_iter().unzip();
    let c2 = cov_m2(&spec, &services2, t, &tight)?;
    checks.push(Check::statistical("M2 covariance".into(), &["cov_m2"], c2, covariance_estimate(&x2, &y2, seed)));
    checks.push(Check::numerical(
        "M2 minus M1 covariance".into(),
        &["m2_simultaneous_term"],
        c2 - c1,
        m2_simultaneous_term(&spec, &services2, t, &tight)?,
        1e-8,
    ));
    let sd = (var_n(&spec, &service, t, &tight)? * var_n(&spec, &expo, t, &tight)?).sqrt();
    checks.push(Check::statistical("M2 correlation".into(), &[], c2 / sd, correlation_estimate(&x2, &y2, seed)));
    checks.push(Check::numerical(
        "M1 correlation does not exceed M2 correlation".into(),
        &[],
        (c1 / sd).min(c2 / sd),
        c1 / sd,
        0.0,
    ));

    // loop with feedback probability one half
    let eta = 0.5;
    let lnet = NetworkSpec::two_node_loop(eta, expo, expo);
    let lq = TransformQuery::new(t, vec![0.5, 0.8], vec![0.0]);
    checks.push(Check::statistical(
        "loop transform".into(),
        &["loop_transform", "loop_probs_series"],
        loop_transform(&spec, eta, &expo, &expo, &lq, &quad)?,
        estimate_joint_pgf(&lnet, &spec, &lq, reps, scenario_seed(seed, 10))?,
    ));
    let lsample = replicate(&lnet, &spec, t, scenario_seed(seed, 11), reps, |rep| {
        let c = rep.counts_at(t);
        (c[0] as f64, c[1] as f64)
    })?;
    let (l1, l2): (Vec<f64>, Vec<f64>) = lsample.into_iter().unzip();
    let (lm1, lm2) = loop_mean(&spec, eta, &expo, &expo, t)?;
    checks.push(Check::statistical("loop mean at node 1".into(), &["loop_mean"], lm1, mean_estimate(&l1, seed)));
    checks.push(Check::statistical("loop mean at node 2".into(), &["loop_mean"], lm2, mean_estimate(&l2, seed)));
    let worst = (0..=100)
        .map(|k| {
            let a = 0.1 * k as f64;
            match (loop_probs_series(eta, mu, a), loop_probs_closed(eta, mu, a)) {
                (Ok(s), Ok(c)) => (s.node1 - c.node1).abs().max((s.node2 - c.node2).abs()),
                _ => f64::NAN,
            }
        })
        .fold(0.0, f64::max);
    checks.push(Check::numerical("loop series equals hyperbolic form".into(), &["loop_probs_series", "loop_probs_closed"], worst, 0.0, 1e-10));

    Ok(VerifyReport::new(seed, reps, t, checks))
}
