//! Exponentially decaying shot noise: exact path simulation and moments.
//!
//! `Λ_i(t) = Λ_i(0) e^{-r_i t} + Σ_k B_{k,i} e^{-r_i (t - t_k)}` where the
//! epochs `t_k` form a Poisson(ν) process shared by all components.

use std::io::{self, Write};

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize};

use crate::distributions::ShotLawVector;
use crate::error::{Error, Result};
use crate::rng::{seed_split, RngStream, StreamRole};

#[derive(Deserialize)]
#[serde(untagged)]
enum ScalarOrVec {
    Scalar(f64),
    Vec(Vec<f64>),
}

fn scalar_or_vec<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<f64>, D::Error> {
    Ok(match ScalarOrVec::deserialize(d)? {
        ScalarOrVec::Scalar(x) => vec![x],
        ScalarOrVec::Vec(v) => v,
    })
}

/// Parameters of a (possibly multivariate) shot-noise intensity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShotNoiseSpec {
    pub nu: f64,
    /// Decay rate per component; a scalar is broadcast to every component.
    #[serde(deserialize_with = "scalar_or_vec")]
    pub r: Vec<f64>,
    pub shots: ShotLawVector,
    /// Initial level per component; empty means all zero.
    #[serde(default, deserialize_with = "scalar_or_vec")]
    pub lambda0: Vec<f64>,
}

impl ShotNoiseSpec {
    /// One-component spec with `Λ(0) = 0`.
    pub fn scalar(nu: f64, r: f64, law: crate::distributions::ShotLaw) -> Self {
        Self {
            nu,
            r: vec![r],
            shots: ShotLawVector::scalar(law),
            lambda0: vec![0.0],
        }
    }

    pub fn with_lambda0(mut self, lambda0: Vec<f64>) -> Self {
        self.lambda0 = lambda0;
        self
    }

    pub fn dim(&self) -> usize {
        self.shots.dim()
    }

    /// Fill in broadcast decay rates and default initial levels, then validate.
    pub fn normalized(mut self) -> Result<Self> {
        let d = self.dim();
        if self.r.len() == 1 && d > 1 {
            self.r = vec![self.r[0]; d];
        }
        if self.lambda0.is_empty() {
            self.lambda0 = vec![0.0; d];
        } else if self.lambda0.len() == 1 && d > 1 {
            self.lambda0 = vec![self.lambda0[0]; d];
        }
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.nu.is_finite() && self.nu > 0.0) {
            return Err(Error::invalid("nu", format!("must be positive, got {}", self.nu)));
        }
        self.shots.validate()?;
        let d = self.dim();
        if self.r.len() != d && self.r.len() != 1 {
            return Err(Error::invalid("r", format!("expected {d} decay rates, got {}", self.r.len())));
        }
        if let Some(i) = self.r.iter().position(|r| !(r.is_finite() && *r > 0.0)) {
            return Err(Error::invalid(format!("r[{i}]"), "must be positive"));
        }
        if self.lambda0.len() > 1 && self.lambda0.len() != d {
            return Err(Error::invalid(
                "lambda0",
                format!("expected {d} initial levels, got {}", self.lambda0.len()),
            ));
        }
        if let Some(i) = self.lambda0.iter().position(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(Error::invalid(format!("lambda0[{i}]"), "must be nonnegative"));
        }
        Ok(())
    }

    /// Decay rate of component `i`, broadcasting a single rate.
    #[inline]
    pub fn rate(&self, i: usize) -> f64 {
        if self.r.len() == 1 {
            self.r[0]
        } else {
            self.r[i]
        }
    }

    /// Initial level of component `i`; missing entries are zero and a single
    /// entry is broadcast.
    #[inline]
    pub fn lambda0_at(&self, i: usize) -> f64 {
        if self.lambda0.len() == 1 {
            return self.lambda0[0];
        }
        self.lambda0.get(i).copied().unwrap_or(0.0)
    }
}

/// One realization of the shot-noise process on `[0, horizon]`.
#[derive(Clone, Debug)]
pub struct ShotNoisePath {
    pub spec: ShotNoiseSpec,
    pub horizon: f64,
    pub shot_epochs: Vec<f64>,
    /// Row-major `epochs × d` shot sizes.
    sizes: Vec<f64>,
    /// Row-major `epochs × d` levels just after each shot.
    post_jump: Vec<f64>,
}

impl ShotNoisePath {
    /// Build a path from explicit epochs and sizes (`sizes[k]` has length d).
    pub fn from_shots(spec: ShotNoiseSpec, horizon: f64, epochs: Vec<f64>, sizes: Vec<Vec<f64>>) -> Result<Self> {
        let d = spec.dim();
        if epochs.len() != sizes.len() {
            return Err(Error::DimensionMismatch {
                expected: epochs.len(),
                got: sizes.len(),
            });
        }
        if epochs.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::invalid("shot_epochs", "must be strictly increasing"));
        }
        if let Some(&e) = epochs.iter().find(|&&e| !(0.0..=horizon).contains(&e)) {
            return Err(Error::OutOfRange { t: e, horizon });
        }
        let mut flat = Vec::with_capacity(d * sizes.len());
        for s in &sizes {
            if s.len() != d {
                return Err(Error::DimensionMismatch { expected: d, got: s.len() });
            }
            flat.extend_from_slice(s);
        }
        Ok(Self::assemble(spec, horizon, epochs, flat))
    }

    fn assemble(spec: ShotNoiseSpec, horizon: f64, shot_epochs: Vec<f64>, sizes: Vec<f64>) -> Self {
        let d = spec.dim();
        let mut post_jump = Vec::with_capacity(sizes.len());
        let mut level: Vec<f64> = (0..d).map(|i| spec.lambda0_at(i)).collect();
        let mut last = 0.0;
        for (k, &e) in shot_epochs.iter().enumerate() {
            for i in 0..d {
                level[i] = level[i] * (-spec.rate(i) * (e - last)).exp() + sizes[k * d + i];
            }
            post_jump.extend_from_slice(&level);
            last = e;
        }
        Self {
            spec,
            horizon,
            shot_epochs,
            sizes,
            post_jump,
        }
    }

    pub fn dim(&self) -> usize {
        self.spec.dim()
    }

    pub fn shot_count(&self) -> usize {
        self.shot_epochs.len()
    }

    pub fn shot_size(&self, k: usize) -> &[f64] {
        let d = self.dim();
        &self.sizes[k * d..(k + 1) * d]
    }

    /// Level of component `i` just after shot `k`.
    pub fn post_jump_level(&self, k: usize, i: usize) -> f64 {
        self.post_jump[k * self.dim() + i]
    }

    /// Index of the last shot at or before `t`, if any.
    pub fn last_shot_before(&self, t: f64) -> Option<usize> {
        self.shot_epochs.partition_point(|&e| e <= t).checked_sub(1)
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if (0.0..=self.horizon).contains(&t) {
            Ok(())
        } else {
            Err(Error::OutOfRange { t, horizon: self.horizon })
        }
    }

    /// `Λ_i(t)` without range checks; right-continuous.
    #[inline]
    pub fn level_component(&self, t: f64, i: usize) -> f64 {
        let r = self.spec.rate(i);
        match self.last_shot_before(t) {
            None => self.spec.lambda0_at(i) * (-r * t).exp(),
            Some(k) => self.post_jump_level(k, i) * (-r * (t - self.shot_epochs[k])).exp(),
        }
    }

    /// `Λ(t)` for every component.
    pub fn level_at(&self, t: f64) -> Result<Vec<f64>> {
        self.check_time(t)?;
        Ok((0..self.dim()).map(|i| self.level_component(t, i)).collect())
    }

    /// `Λ(t)` by summing every shot term directly.
    pub fn level_at_direct(&self, t: f64) -> Result<Vec<f64>> {
        self.check_time(t)?;
        let d = self.dim();
        Ok((0..d)
            .map(|i| {
                let r = self.spec.rate(i);
                let mut s = self.spec.lambda0_at(i) * (-r * t).exp();
                for (k, &e) in self.shot_epochs.iter().enumerate() {
                    if e > t {
                        break;
                    }
                    s += self.sizes[k * d + i] * (-r * (t - e)).exp();
                }
                s
            })
            .collect())
    }

    /// `∫_a^b Λ_i(u) du` for `0 <= a <= b <= horizon`.
    pub fn integrated_component(&self, a: f64, b: f64, i: usize) -> f64 {
        let r = self.spec.rate(i);
        let mut total = 0.0;
        let mut lo = a;
        let mut k = self.shot_epochs.partition_point(|&e| e <= a);
        while lo < b {
            let hi = self.shot_epochs.get(k).copied().filter(|&e| e < b).unwrap_or(b);
            let start = self.level_component(lo, i);
            total += start * -(-r * (hi - lo)).exp_m1() / r;
            lo = hi;
            k += 1;
        }
        total
    }

    /// CSV with a `#` header line carrying the spec, then `epoch,size_1..size_d`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let spec = serde_json::to_string(&self.spec).map_err(io::Error::other)?;
        writeln!(w, "# horizon={} spec={}", self.horizon, spec)?;
        write!(w, "epoch")?;
        for i in 1..=self.dim() {
            write!(w, ",size_{i}")?;
        }
        writeln!(w)?;
        for (k, e) in self.shot_epochs.iter().enumerate() {
            write!(w, "{e}")?;
            for s in self.shot_size(k) {
                write!(w, ",{s}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Simulate one path on `[0, horizon]`.
pub fn simulate_path(spec: &ShotNoiseSpec, horizon: f64, rng: &mut RngStream) -> Result<ShotNoisePath> {
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(Error::invalid("horizon", format!("must be positive, got {horizon}")));
    }
    let spec = spec.clone().normalized()?;
    let d = spec.dim();
    let mut epochs = Vec::new();
    let mut sizes = Vec::new();
    let mut buf = vec![0.0; d];
    let mut t = rng.exp1() / spec.nu;
    while t <= horizon {
        spec.shots.sample_into(rng, &mut buf);
        epochs.push(t);
        sizes.extend_from_slice(&buf);
        t += rng.exp1() / spec.nu;
    }
    Ok(ShotNoisePath::assemble(spec, horizon, epochs, sizes))
}

/// Simulate `reps` independent paths, replication `k` using the shot stream of `(seed, k)`.
pub fn simulate_paths(spec: &ShotNoiseSpec, horizon: f64, seed: u64, reps: usize) -> Result<Vec<ShotNoisePath>> {
    (0..reps)
        .into_par_iter()
        .map(|k| simulate_path(spec, horizon, &mut seed_split(seed, k as u64, StreamRole::Shots)))
        .collect()
}

// ---------------------------------------------------------------------------
// Moments

pub fn mean_at(spec: &ShotNoiseSpec, t: f64) -> Vec<f64> {
    (0..spec.dim()).map(|i| mean_component(spec, i, t)).collect()
}

pub fn variance_at(spec: &ShotNoiseSpec, t: f64) -> Vec<f64> {
    (0..spec.dim()).map(|i| variance_component(spec, i, t)).collect()
}

pub fn stationary_mean(spec: &ShotNoiseSpec) -> Vec<f64> {
    (0..spec.dim()).map(|i| spec.nu * spec.shots.mean(i) / spec.rate(i)).collect()
}

pub fn stationary_variance(spec: &ShotNoiseSpec) -> Vec<f64> {
    (0..spec.dim())
        .map(|i| spec.nu * spec.shots.second_moment(i) / (2.0 * spec.rate(i)))
        .collect()
}

pub(crate) fn mean_component(spec: &ShotNoiseSpec, i: usize, t: f64) -> f64 {
    let r = spec.rate(i);
    let m = spec.nu * spec.shots.mean(i) / r;
    spec.lambda0_at(i) * (-r * t).exp() - m * (-r * t).exp_m1()
}

pub(crate) fn variance_component(spec: &ShotNoiseSpec, i: usize, t: f64) -> f64 {
    let r = spec.rate(i);
    -spec.nu * spec.shots.second_moment(i) / (2.0 * r) * (-2.0 * r * t).exp_m1()
}

/// `Cov(Λ(t), Λ(t + δ))` for a one-component spec.
pub fn autocovariance(spec: &ShotNoiseSpec, t: f64, delta: f64) -> Result<f64> {
    if spec.dim() != 1 {
        return Err(Error::DimensionMismatch { expected: 1, got: spec.dim() });
    }
    if !(delta >= 0.0) {
        return Err(Error::Domain(format!("lag must be nonnegative, got {delta}")));
    }
    Ok((-spec.rate(0) * delta).exp() * variance_component(spec, 0, t))
}

/// `Cov(Λ_1(t), Λ_2(t + δ))` for a two-component spec with simultaneous shots.
pub fn cross_covariance(spec: &ShotNoiseSpec, t: f64, delta: f64) -> Result<f64> {
    if spec.dim() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, got: spec.dim() });
    }
    component_covariance(spec, 0, 1, t, delta)
}

/// `Cov(Λ_i(t), Λ_j(t + δ))` for any pair of components.
pub fn component_covariance(spec: &ShotNoiseSpec, i: usize, j: usize, t: f64, delta: f64) -> Result<f64> {
    if !(delta >= 0.0) {
        return Err(Error::Domain(format!("lag must be nonnegative, got {delta}")));
    }
    let (ri, rj) = (spec.rate(i), spec.rate(j));
    let cross = spec.shots.cross_moment(i, j)?;
    Ok((-rj * delta).exp() * spec.nu * cross / (ri + rj) * -(-(ri + rj) * t).exp_m1())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::{ShotLaw, ShotLawVector};
    use crate::stats::{covariance_estimate, mean_estimate, variance_estimate};
    use rand::Rng;

    fn exp_spec() -> ShotNoiseSpec {
        ShotNoiseSpec::scalar(2.0, 1.0, ShotLaw::Exponential { mean: 1.0 })
    }

    fn coupled(r1: f64, r2: f64, law: ShotLaw) -> ShotNoiseSpec {
        ShotNoiseSpec {
            nu: 1.0,
            r: vec![r1, r2],
            shots: ShotLawVector::comonotone(vec![law, law]),
            lambda0: vec![],
        }
        .normalized()
        .unwrap()
    }

    #[test]
    fn stationary_examples() {
        let s = exp_spec();
        assert_eq!(stationary_mean(&s), vec![2.0]);
        assert_eq!(stationary_variance(&s), vec![2.0]);
        assert_eq!(mean_at(&s, 0.0), vec![0.0]);
        assert_eq!(variance_at(&s, 0.0), vec![0.0]);
        let a = autocovariance(&s, 1e3, std::f64::consts::LN_2).unwrap();
        assert!((a - 1.0).abs() < 1e-12);
        assert!(autocovariance(&s, 1e3, 60.0).unwrap() < 1e-20);
        assert_eq!(autocovariance(&s, 2.0, 0.0).unwrap(), variance_at(&s, 2.0)[0]);
    }

    #[test]
    fn mean_increases_to_stationary() {
        let s = exp_spec();
        let mut prev = 0.0;
        for k in 1..200 {
            let m = mean_at(&s, k as f64 * 0.1)[0];
            assert!(m > prev && m < 2.0);
            prev = m;
        }
        assert!((mean_at(&s, 50.0)[0] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn cross_covariance_examples() {
        let s = coupled(1.0, 2.0, ShotLaw::Deterministic { value: 1.0 });
        assert!((cross_covariance(&s, 1e3, 0.0).unwrap() - 1.0 / 3.0).abs() < 1e-14);
        assert_eq!(cross_covariance(&s, 0.0, 0.5).unwrap(), 0.0);
        let same = coupled(1.5, 1.5, ShotLaw::Exponential { mean: 0.8 });
        let single = ShotNoiseSpec::scalar(1.0, 1.5, ShotLaw::Exponential { mean: 0.8 });
        for (t, d) in [(0.3, 0.0), (2.0, 0.7), (5.0, 3.0)] {
            let c = cross_covariance(&same, t, d).unwrap();
            let a = autocovariance(&single, t, d).unwrap();
            assert!((c - a).abs() < 1e-14 * a.max(1.0));
        }
        assert!(autocovariance(&s, 1.0, 0.0).is_err());
    }

    #[test]
    fn level_examples() {
        let spec = ShotNoiseSpec::scalar(1.0, 1.0, ShotLaw::Deterministic { value: 3.0 }).with_lambda0(vec![5.0]);
        let empty = ShotNoisePath::from_shots(spec.clone(), 5.0, vec![], vec![]).unwrap();
        assert!((empty.level_at(std::f64::consts::LN_2).unwrap()[0] - 2.5).abs() < 1e-14);
        let spec0 = spec.with_lambda0(vec![0.0]);
        let one = ShotNoisePath::from_shots(spec0, 5.0, vec![1.0], vec![vec![3.0]]).unwrap();
        assert!((one.level_at(2.0).unwrap()[0] - 3.0 * (-1f64).exp()).abs() < 1e-14);
        // right-continuity at the epoch
        assert_eq!(one.level_at(1.0).unwrap()[0], 3.0);
        assert!(one.level_at(5.5).is_err());
        assert!(one.level_at(-0.1).is_err());
    }

    #[test]
    fn shared_shot_component_ratio() {
        let s = coupled(1.0, 2.0, ShotLaw::Deterministic { value: 1.0 });
        let p = ShotNoisePath::from_shots(s, 10.0, vec![1.5], vec![vec![1.0, 1.0]]).unwrap();
        for t in [1.5, 2.0, 4.0, 9.0] {
            let l = p.level_at(t).unwrap();
            let ratio = l[0] / l[1];
            assert!((ratio - (1.0 * (t - 1.5)).exp()).abs() < 1e-12 * ratio);
        }
    }

    #[test]
    fn tiny_rate_gives_empty_path() {
        let spec = ShotNoiseSpec::scalar(1e-12, 1.0, ShotLaw::Exponential { mean: 1.0 }).with_lambda0(vec![4.0]);
        let p = simulate_path(&spec, 10.0, &mut seed_split(1, 0, StreamRole::Shots)).unwrap();
        assert_eq!(p.shot_count(), 0);
        assert!((p.level_at(3.0).unwrap()[0] - 4.0 * (-3f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn simulation_is_deterministic() {
        let s = exp_spec();
        let a = simulate_path(&s, 20.0, &mut seed_split(42, 7, StreamRole::Shots)).unwrap();
        let b = simulate_path(&s, 20.0, &mut seed_split(42, 7, StreamRole::Shots)).unwrap();
        assert_eq!(a.shot_epochs, b.shot_epochs);
        assert!(simulate_path(&s, 0.0, &mut seed_split(1, 1, StreamRole::Shots)).is_err());
    }

    #[test]
    fn incremental_level_matches_direct_sum() {
        let spec = ShotNoiseSpec {
            nu: 5.0,
            r: vec![0.7, 3.0],
            shots: ShotLawVector::independent(vec![
                ShotLaw::Gamma { shape: 2.0, scale: 0.5 },
                ShotLaw::Exponential { mean: 1.0 },
            ]),
            lambda0: vec![1.0, 2.0],
        };
        let mut u = seed_split(9, 0, StreamRole::Arrivals);
        for rep in 0..20 {
            let p = simulate_path(&spec, 30.0, &mut seed_split(9, rep, StreamRole::Shots)).unwrap();
            for _ in 0..50 {
                let t = 30.0 * u.random::<f64>();
                let a = p.level_at(t).unwrap();
                let b = p.level_at_direct(t).unwrap();
                for i in 0..2 {
                    assert!((a[i] - b[i]).abs() <= 1e-10 * b[i].max(1e-300), "{} vs {}", a[i], b[i]);
                }
            }
        }
    }

    #[test]
    fn integrated_level_matches_quadrature() {
        use crate::quadrature::{integrate_with_breaks, QuadratureConfig};
        let p = simulate_path(&exp_spec(), 10.0, &mut seed_split(4, 0, StreamRole::Shots)).unwrap();
        let (a, b) = (0.37, 8.2);
        let q = integrate_with_breaks(|u| p.level_component(u, 0), a, b, &p.shot_epochs, &QuadratureConfig::tight()).unwrap();
        assert!((p.integrated_component(a, b, 0) - q.value).abs() < 1e-10);
    }

    #[test]
    fn shot_count_mean_is_poisson() {
        let s = exp_spec();
        let paths = simulate_paths(&s, 3.0, 11, 10_000).unwrap();
        let counts: Vec<f64> = paths.iter().map(|p| p.shot_count() as f64).collect();
        assert!(mean_estimate(&counts, 11).within(6.0, 4.0));
    }

    #[test]
    fn moments_match_monte_carlo() {
        let spec = ShotNoiseSpec::scalar(2.0, 1.0, ShotLaw::Gamma { shape: 2.0, scale: 0.5 }).with_lambda0(vec![1.5]);
        let paths = simulate_paths(&spec, 4.0, 21, 100_000).unwrap();
        for t in [0.5, 1.5, 4.0] {
            let xs: Vec<f64> = paths.iter().map(|p| p.level_component(t, 0)).collect();
            let m = mean_estimate(&xs, 21);
            let v = variance_estimate(&xs, 21);
            assert!(m.within(mean_at(&spec, t)[0], 4.0), "mean at {t}: {m:?}");
            assert!(v.within(variance_at(&spec, t)[0], 4.0), "variance at {t}: {v:?}");
        }
        let (t, d) = (1.0, 0.8);
        let xs: Vec<f64> = paths.iter().map(|p| p.level_component(t, 0)).collect();
        let ys: Vec<f64> = paths.iter().map(|p| p.level_component(t + d, 0)).collect();
        let c = covariance_estimate(&xs, &ys, 21);
        assert!(c.within(autocovariance(&spec, t, d).unwrap(), 4.0), "{c:?}");
    }

    #[test]
    fn cross_covariance_matches_monte_carlo() {
        let spec = coupled(1.0, 2.0, ShotLaw::Deterministic { value: 1.0 });
        let paths = simulate_paths(&spec, 12.0, 31, 100_000).unwrap();
        for (t, d) in [(10.0, 0.0), (1.0, 0.5)] {
            let xs: Vec<f64> = paths.iter().map(|p| p.level_component(t, 0)).collect();
            let ys: Vec<f64> = paths.iter().map(|p| p.level_component(t + d, 1)).collect();
            let c = covariance_estimate(&xs, &ys, 31);
            assert!(c.within(cross_covariance(&spec, t, d).unwrap(), 4.0), "({t},{d}): {c:?}");
        }
    }

    #[test]
    fn spec_accepts_scalar_decay_rate() {
        let s: ShotNoiseSpec = serde_json::from_str(
            r#"{"nu":1.0,"r":2.0,"shots":{"components":[{"kind":"exponential","mean":1.0},{"kind":"deterministic","value":1.0}],"coupling":"comonotone"}}"#,
        )
        .unwrap();
        let s = s.normalized().unwrap();
        assert_eq!(s.r, vec![2.0, 2.0]);
        assert_eq!(s.lambda0, vec![0.0, 0.0]);
        assert!(ShotNoiseSpec::scalar(-1.0, 1.0, ShotLaw::Exponential { mean: 1.0 }).validate().is_err());
    }

    #[test]
    fn csv_has_header_and_rows() {
        let p = simulate_path(&exp_spec(), 5.0, &mut seed_split(2, 0, StreamRole::Shots)).unwrap();
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[0].starts_with("# horizon=5"));
        assert_eq!(lines[1], "epoch,size_1");
        assert_eq!(lines.len(), 2 + p.shot_count());
    }
}
