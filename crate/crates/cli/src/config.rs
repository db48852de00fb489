//! Experiment configuration files (JSON).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sncox::distributions::ServiceLaw;
use sncox::error::Error;
use sncox::fcltlab::{ScalingExperiment, DEFAULT_DELTA, DEFAULT_EVENT_BUDGET};
use sncox::netsim::{NetworkSpec, TandemSpec, TransformQuery};
use sncox::shotnoise::ShotNoiseSpec;

use crate::RunError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Simulate,
    Analyze,
    Fclt,
    Verify,
}

/// The queueing system fed by the intensity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NetworkConfig {
    Single { service: ServiceLaw },
    Tandem(TandemSpec),
    Network(NetworkSpec),
}

impl NetworkConfig {
    pub fn to_network(&self) -> NetworkSpec {
        match self {
            NetworkConfig::Single { service } => NetworkSpec::single_node(*service),
            NetworkConfig::Tandem(t) => NetworkSpec::parallel_tandems(std::slice::from_ref(t), Default::default()),
            NetworkConfig::Network(n) => n.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FcltConfig {
    pub n_values: Vec<u64>,
    pub time_grid: Vec<f64>,
    pub t_star: Vec<f64>,
    pub limit_reps: usize,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_budget")]
    pub event_budget: f64,
}

fn default_delta() -> f64 {
    DEFAULT_DELTA
}

fn default_budget() -> f64 {
    DEFAULT_EVENT_BUDGET
}

fn default_reps() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub mode: Option<Mode>,
    /// Master seed; there is no clock-based fallback.
    pub seed: u64,
    #[serde(default = "default_reps")]
    pub reps: usize,
    pub horizon: f64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    pub shotnoise: ShotNoiseSpec,
    pub network: NetworkConfig,
    #[serde(default)]
    pub queries: Vec<TransformQuery>,
    #[serde(default)]
    pub fclt: Option<FcltConfig>,
}

/// Prefix the field name of a validation error with its location in the file.
fn locate(e: Error, prefix: &str) -> RunError {
    match e {
        Error::InvalidParameter { field, reason } if !field.starts_with(prefix) => {
            RunError::Config(format!("{prefix}.{field}: {reason}"))
        }
        Error::InvalidParameter { field, reason } => RunError::Config(format!("{field}: {reason}")),
        other => RunError::Config(format!("{prefix}: {other}")),
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, RunError> {
        serde_json::from_str(text).map_err(|e| RunError::Config(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, RunError> {
        let text = std::fs::read_to_string(path).map_err(|e| RunError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), RunError> {
        self.shotnoise.validate().map_err(|e| locate(e, "shotnoise"))?;
        if self.reps < 1 {
            return Err(RunError::Config("reps: must be at least 1".into()));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(RunError::Config(format!("horizon: must be positive, got {}", self.horizon)));
        }
        let net = self.network.to_network();
        net.validate(Some(self.shotnoise.dim())).map_err(|e| locate(e, "network"))?;
        for (i, q) in self.queries.iter().enumerate() {
            q.validate(net.nodes.len(), self.shotnoise.dim())
                .map_err(|e| locate(e, &format!("queries[{i}]")))?;
            if q.t > self.horizon {
                return Err(RunError::Config(format!("queries[{i}].t: {} exceeds the horizon {}", q.t, self.horizon)));
            }
        }
        if let Some(f) = &self.fclt {
            self.scaling_experiment(f)?.validate().map_err(|e| locate(e, "fclt"))?;
            if f.limit_reps < 2 {
                return Err(RunError::Config("fclt.limit_reps: at least 2 replications are needed".into()));
            }
        }
        Ok(())
    }

    /// Exponential service rate of a single-node system, if that is what is configured.
    pub fn single_exponential_rate(&self) -> Option<f64> {
        match self.network {
            NetworkConfig::Single {
                service: ServiceLaw::Exponential { rate },
            } => Some(rate),
            _ => None,
        }
    }

    pub fn scaling_experiment(&self, f: &FcltConfig) -> Result<ScalingExperiment, RunError> {
        let mu = self
            .single_exponential_rate()
            .ok_or_else(|| RunError::Config("network: fclt needs a single node with exponential service".into()))?;
        Ok(ScalingExperiment {
            base_spec: self.shotnoise.clone(),
            mu,
            n_values: f.n_values.clone(),
            horizon: self.horizon,
            reps: self.reps,
            time_grid: f.time_grid.clone(),
            event_budget: f.event_budget,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"{
        "seed": 7, "reps": 10, "horizon": 2.0,
        "shotnoise": {"nu": 2.0, "r": 1.0, "shots": {"components": [{"kind": "exponential", "mean": 1.0}]}},
        "network": {"kind": "single", "service": {"kind": "exponential", "rate": 1.0}}
    }"#;

    #[test]
    fn parses_and_validates() {
        let c = ExperimentConfig::from_json(BASE).unwrap();
        c.validate().unwrap();
        assert_eq!(c.single_exponential_rate(), Some(1.0));
    }

    #[test]
    fn nonpositive_nu_points_at_field() {
        let text = BASE.replace("\"nu\": 2.0", "\"nu\": 0.0");
        let err = ExperimentConfig::from_json(&text).unwrap().validate().unwrap_err();
        assert!(err.to_string().contains("shotnoise.nu"), "{err}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn seed_is_mandatory() {
        let text = BASE.replace("\"seed\": 7,", "");
        let err = ExperimentConfig::from_json(&text).unwrap_err();
        assert!(err.to_string().contains("seed"));
    }

    #[test]
    fn unknown_fields_rejected() {
        let text = BASE.replace("\"reps\": 10", "\"replications\": 10");
        assert!(ExperimentConfig::from_json(&text).is_err());
    }

    #[test]
    fn tandem_and_network_forms() {
        let t = BASE.replace(
            r#"{"kind": "single", "service": {"kind": "exponential", "rate": 1.0}}"#,
            r#"{"kind": "tandem", "services": [{"kind": "exponential", "rate": 1.0}, {"kind": "uniform", "upper": 1.0}]}"#,
        );
        let c = ExperimentConfig::from_json(&t).unwrap();
        c.validate().unwrap();
        assert_eq!(c.network.to_network().nodes.len(), 2);
    }

    #[test]
    fn query_dimension_checked() {
        let text = BASE.replace("\"reps\": 10", "\"reps\": 10, \"queries\": [{\"t\": 1.0, \"z\": [0.5, 0.5], \"s\": [0.0]}]");
        let err = ExperimentConfig::from_json(&text).unwrap().validate().unwrap_err();
        assert!(err.to_string().contains("queries[0]"));
    }
}
