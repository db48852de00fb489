//! Dispatch of the run modes. Every artifact is assembled in memory in a
//! fixed order and written by this thread only, so a (config, seed) pair
//! always produces the same bytes.

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use sncox::analytics::{
    evaluate_batch, exact_mean_var_exponential, joint_transform_detailed, loop_transform, mean_n,
    network_transform, pgf_moments, var_n, write_batch_csv, Integral, QuadratureConfig, TransformQuery,
};
use sncox::distributions::ServiceLaw;
use sncox::fcltlab::{arrival_fclt_report, convergence_report, simulate_scaled};
use sncox::netsim::{replicate, NetworkSpec};

use crate::config::{ExperimentConfig, Mode, NetworkConfig};
use crate::verify::verify;
use crate::RunError;

/// Command-line overrides.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunOptions {
    pub mode: Option<Mode>,
    pub seed: Option<u64>,
    pub reps: Option<usize>,
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunSummary {
    pub mode: Mode,
    pub files: Vec<PathBuf>,
}

struct Artifacts {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Artifacts {
    fn new(dir: PathBuf) -> Result<Self, RunError> {
        fs::create_dir_all(&dir)?;
        Ok(Self { dir, files: Vec::new() })
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), RunError> {
        let p = self.dir.join(name);
        fs::write(&p, bytes)?;
        self.files.push(p);
        Ok(())
    }
}

/// Apply overrides, validate and run. Returns `ChecksFailed` when verify
/// mode records a failing check (the report is still written).
pub fn run(mut cfg: ExperimentConfig, opts: &RunOptions) -> Result<RunSummary, RunError> {
    if let Some(s) = opts.seed {
        cfg.seed = s;
    }
    if let Some(r) = opts.reps {
        cfg.reps = r;
    }
    let mode = opts
        .mode
        .or(cfg.mode)
        .ok_or_else(|| RunError::Config("mode: not given in the file or on the command line".into()))?;
    cfg.mode = Some(mode);
    cfg.validate()?;
    let dir = opts
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    let mut out = Artifacts::new(dir)?;
    out.write("config.json", serde_json::to_string_pretty(&cfg).expect("config serializes").as_bytes())?;
    match mode {
        Mode::Simulate => simulate(&cfg, &mut out)?,
        Mode::Analyze => analyze(&cfg, &mut out)?,
        Mode::Fclt => fclt(&cfg, &mut out)?,
        Mode::Verify => {
            let report = verify(&cfg)?;
            out.write("verify_report.json", serde_json::to_string_pretty(&report).expect("report serializes").as_bytes())?;
            if !report.all_pass {
                return Err(RunError::ChecksFailed(report.failures()));
            }
        }
    }
    Ok(RunSummary { mode, files: out.files })
}

fn simulate(cfg: &ExperimentConfig, out: &mut Artifacts) -> Result<(), RunError> {
    let net = cfg.network.to_network();
    let ids: Vec<String> = net.nodes.iter().map(|n| n.id.clone()).collect();
    let records = replicate(&net, &cfg.shotnoise, cfg.horizon, cfg.seed, cfg.reps, |rep| {
        let shots: Vec<(f64, Vec<f64>)> = (0..rep.path.shot_count())
            .map(|k| (rep.path.shot_epochs[k], rep.path.shot_size(k).to_vec()))
            .collect();
        (rep.record(ids.clone()), shots)
    })?;
    let d = cfg.shotnoise.dim();

    let mut occ = String::from("rep,time,node,count\n");
    let mut shots = String::from("rep,epoch");
    for i in 1..=d {
        let _ = write!(shots, ",size_{i}");
    }
    shots.push('\n');
    let mut fin = String::from("rep");
    for id in &ids {
        let _ = write!(fin, ",count_{id}");
    }
    for i in 1..=d {
        let _ = write!(fin, ",intensity_{i}");
    }
    fin.push('\n');
    for (k, (rec, sh)) in records.iter().enumerate() {
        let mut buf = Vec::new();
        rec.write_csv(&mut buf)?;
        for line in String::from_utf8(buf).expect("ascii csv").lines().skip(1) {
            let _ = writeln!(occ, "{k},{line}");
        }
        for (e, sizes) in sh {
            let _ = write!(shots, "{k},{e}");
            for s in sizes {
                let _ = write!(shots, ",{s}");
            }
            shots.push('\n');
        }
        let _ = write!(fin, "{k}");
        for c in &rec.final_counts {
            let _ = write!(fin, ",{c}");
        }
        for l in &rec.final_intensity {
            let _ = write!(fin, ",{l}");
        }
        fin.push('\n');
    }
    out.write("occupancy.csv", occ.as_bytes())?;
    out.write("shots.csv", shots.as_bytes())?;
    out.write("final_state.csv", fin.as_bytes())?;
    Ok(())
}

/// Transform of the configured system at one query.
fn transform(cfg: &ExperimentConfig, net: &NetworkSpec, q: &TransformQuery, quad: &QuadratureConfig) -> Result<Integral, RunError> {
    let context = || format!("query t={} z={:?} s={:?}", q.t, q.z, q.s);
    let value = match (&cfg.network, net.loop_eta) {
        (NetworkConfig::Single { service }, _) => joint_transform_detailed(&cfg.shotnoise, service, q, quad),
        (_, Some(eta)) => {
            let (a, b) = (net.nodes[0].service, net.nodes[1].service);
            loop_transform(&cfg.shotnoise, eta, &a, &b, q, quad).map(|value| Integral {
                value,
                abs_err: f64::NAN,
                evaluations: 0,
            })
        }
        _ => network_transform(net, &cfg.shotnoise, q, quad),
    };
    value.map_err(|e| RunError::from(e).with_context(&context()))
}

fn analyze(cfg: &ExperimentConfig, out: &mut Artifacts) -> Result<(), RunError> {
    let net = cfg.network.to_network();
    let quad = QuadratureConfig::default();
    let tight = QuadratureConfig::tight();
    let queries = cfg.queries.clone();
    let rows = evaluate_batch(&queries, |q| {
        transform(cfg, &net, q, &quad).map_err(|e| sncox::error::Error::Domain(e.to_string()))
    })
    .map_err(|e| RunError::Numeric(e.to_string()))?;
    let mut buf = Vec::new();
    write_batch_csv(&rows, &mut buf)?;
    out.write("transforms.csv", &buf)?;

    // moments at each distinct query time, node by node
    let mut times: Vec<f64> = queries.iter().map(|q| q.t).collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    let d = cfg.shotnoise.dim();
    let mut csv = String::from("t,node,mean,variance,method\n");
    for &t in &times {
        for (j, node) in net.nodes.iter().enumerate() {
            let unit = TransformQuery::new(t, vec![1.0; net.nodes.len()], vec![0.0; d]);
            let eval = |q: &TransformQuery| transform(cfg, &net, q, &tight).map(|i| i.value).map_err(|e| sncox::error::Error::Domain(e.to_string()));
            let m1 = pgf_moments(eval, &unit, j, 1).map_err(RunError::from)?;
            let m2 = pgf_moments(eval, &unit, j, 2).map_err(RunError::from)?;
            let _ = writeln!(csv, "{t},{},{m1},{},difference", node.id, m2 + m1 - m1 * m1);
            if let NetworkConfig::Single { service } = &cfg.network {
                let m = mean_n(&cfg.shotnoise, service, t)?;
                let v = var_n(&cfg.shotnoise, service, t, &tight)?;
                let _ = writeln!(csv, "{t},{},{m},{v},quadrature", node.id);
                if let ServiceLaw::Exponential { rate } = service {
                    let (m, v) = exact_mean_var_exponential(&cfg.shotnoise, *rate, t)?;
                    let _ = writeln!(csv, "{t},{},{m},{v},closed_form", node.id);
                }
            }
        }
    }
    out.write("moments.csv", csv.as_bytes())?;
    Ok(())
}

fn fclt(cfg: &ExperimentConfig, out: &mut Artifacts) -> Result<(), RunError> {
    let f = cfg
        .fclt
        .as_ref()
        .ok_or_else(|| RunError::Config("fclt: section required in fclt mode".into()))?;
    let exp = cfg.scaling_experiment(f)?;
    let report = convergence_report(&exp, cfg.seed, &f.t_star, f.limit_reps, f.delta)?;
    let mut buf = Vec::new();
    report.write_csv(&mut buf)?;
    out.write("convergence.csv", &buf)?;
    out.write("manifest.json", report.manifest_json().as_bytes())?;
    let n = *exp.n_values.last().expect("validated nonempty");
    let sample = simulate_scaled(&exp, n, cfg.seed)?;
    let arrivals = arrival_fclt_report(&exp, &sample, cfg.seed)?;
    out.write("arrival_fclt.json", serde_json::to_string_pretty(&arrivals).expect("report serializes").as_bytes())?;
    Ok(())
}
