//! Cox arrivals driven by a shot-noise path.
//!
//! Two samplers: thinning against the level at the left end of each inter-shot
//! interval (the interval maximum), and inversion of the integrated rate.

use std::io::{self, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{seed_split, RngStream, StreamRole};
use crate::shotnoise::{simulate_path, ShotNoisePath, ShotNoiseSpec};
use crate::stats::{dispersion_estimate, EstimateWithCI};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArrivalMethod {
    #[default]
    Thinning,
    Inversion,
}

/// Arrival epochs on `[0, horizon]` for one intensity component.
#[derive(Clone, Debug, PartialEq)]
pub struct ArrivalStream {
    pub epochs: Vec<f64>,
    pub component: usize,
    pub horizon: f64,
}

impl ArrivalStream {
    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    /// Number of arrivals in `[a, b)`.
    pub fn count_in(&self, a: f64, b: f64) -> usize {
        self.epochs.partition_point(|&e| e < b) - self.epochs.partition_point(|&e| e < a)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "epoch")?;
        for e in &self.epochs {
            writeln!(w, "{e}")?;
        }
        Ok(())
    }
}

fn check_component(path: &ShotNoisePath, component: usize) -> Result<()> {
    if component < path.dim() {
        Ok(())
    } else {
        Err(Error::invalid(
            "component",
            format!("index {component} out of range for {} components", path.dim()),
        ))
    }
}

/// Interval boundaries `0 = s_0 < s_1 < ... < horizon` with the level at each left end.
fn intervals(path: &ShotNoisePath, component: usize) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
    let n = path.shot_count();
    let first = (0.0, path.shot_epochs.first().copied().unwrap_or(path.horizon), path.spec.lambda0.get(component).copied().unwrap_or(0.0));
    std::iter::once(first).chain((0..n).map(move |k| {
        let a = path.shot_epochs[k];
        let b = path.shot_epochs.get(k + 1).copied().unwrap_or(path.horizon);
        (a, b, path.post_jump_level(k, component))
    }))
}

/// Thinning with a per-interval bound equal to the interval's left-end level.
pub fn sample_thinning(path: &ShotNoisePath, component: usize, rng: &mut RngStream) -> Result<ArrivalStream> {
    check_component(path, component)?;
    let r = path.spec.rate(component);
    let mut epochs = Vec::new();
    for (a, b, bound) in intervals(path, component) {
        if bound <= 0.0 {
            continue;
        }
        let mut t = a + rng.exp1() / bound;
        while t < b {
            if rng.open01() <= (-r * (t - a)).exp() {
                epochs.push(t);
            }
            t += rng.exp1() / bound;
        }
    }
    Ok(ArrivalStream {
        epochs,
        component,
        horizon: path.horizon,
    })
}

/// Inversion: from a point with level `λ`, the next arrival is `τ` later where
/// `λ (1 - e^{-r τ}) / r = E`, `E ~ Exp(1)`; no arrival in the interval when
/// `r E >= λ (1 - e^{-r L})`.
pub fn sample_inversion(path: &ShotNoisePath, component: usize, rng: &mut RngStream) -> Result<ArrivalStream> {
    check_component(path, component)?;
    let r = path.spec.rate(component);
    let mut epochs = Vec::new();
    for (a, b, level) in intervals(path, component) {
        let (mut t, mut lam) = (a, level);
        loop {
            if lam <= 0.0 {
                break;
            }
            let x = r * rng.exp1() / lam;
            let reachable = -(-r * (b - t)).exp_m1();
            if x >= reachable {
                break;
            }
            let tau = -(-x).ln_1p() / r;
            t += tau;
            if t >= b {
                break;
            }
            epochs.push(t);
            lam = level * (-r * (t - a)).exp();
        }
    }
    Ok(ArrivalStream {
        epochs,
        component,
        horizon: path.horizon,
    })
}

pub fn sample_arrivals(
    path: &ShotNoisePath,
    component: usize,
    method: ArrivalMethod,
    rng: &mut RngStream,
) -> Result<ArrivalStream> {
    match method {
        ArrivalMethod::Thinning => sample_thinning(path, component, rng),
        ArrivalMethod::Inversion => sample_inversion(path, component, rng),
    }
}

/// Arrival counts on `[0, horizon]` over independent replications, each with a
/// fresh shot-noise path.
pub fn arrival_counts(
    spec: &ShotNoiseSpec,
    component: usize,
    horizon: f64,
    reps: usize,
    seed: u64,
    method: ArrivalMethod,
) -> Result<Vec<f64>> {
    (0..reps as u64)
        .into_par_iter()
        .map(|k| {
            let path = simulate_path(spec, horizon, &mut seed_split(seed, k, StreamRole::Shots))?;
            let s = sample_arrivals(&path, component, method, &mut seed_split(seed, k, StreamRole::Arrivals))?;
            Ok(s.len() as f64)
        })
        .collect()
}

/// `Var(count) / E(count)` of the arrival count on `[0, horizon]` for component 0.
pub fn dispersion_index(spec: &ShotNoiseSpec, horizon: f64, reps: usize, seed: u64) -> Result<EstimateWithCI> {
    if reps < 1000 {
        return Err(Error::invalid("reps", format!("at least 1000 replications required, got {reps}")));
    }
    let counts = arrival_counts(spec, 0, horizon, reps, seed, ArrivalMethod::Thinning)?;
    Ok(dispersion_estimate(&counts, seed))
}
