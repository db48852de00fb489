//! Monte Carlo estimators with standard errors, and the goodness-of-fit
//! statistics used to compare samplers against formulas.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

/// A Monte Carlo point estimate with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateWithCI {
    pub estimate: f64,
    pub std_error: f64,
    pub reps: usize,
    pub seed: u64,
}

impl EstimateWithCI {
    /// Standardized distance to a reference value. Zero SE with an exact match
    /// gives 0; zero SE with a mismatch gives infinity.
    pub fn z_score(&self, reference: f64) -> f64 {
        let d = self.estimate - reference;
        if self.std_error > 0.0 {
            d / self.std_error
        } else if d == 0.0 {
            0.0
        } else {
            f64::INFINITY * d.signum()
        }
    }

    pub fn within(&self, reference: f64, z_max: f64) -> bool {
        self.z_score(reference).abs() <= z_max
    }

    /// Two-sided normal confidence interval.
    pub fn ci(&self, level: f64) -> (f64, f64) {
        let q = normal_quantile(0.5 + 0.5 * level);
        (self.estimate - q * self.std_error, self.estimate + q * self.std_error)
    }
}

pub fn normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64
}

pub fn mean_estimate(xs: &[f64], seed: u64) -> EstimateWithCI {
    let n = xs.len();
    EstimateWithCI {
        estimate: mean(xs),
        std_error: (variance(xs) / n as f64).sqrt(),
        reps: n,
        seed,
    }
}

/// Sample variance with the large-sample SE `sqrt((m4 - s^4) / n)`.
pub fn variance_estimate(xs: &[f64], seed: u64) -> EstimateWithCI {
    let n = xs.len();
    let m = mean(xs);
    let s2 = variance(xs);
    let m4 = xs.iter().map(|x| (x - m).powi(4)).sum::<f64>() / n as f64;
    EstimateWithCI {
        estimate: s2,
        std_error: ((m4 - s2 * s2).max(0.0) / n as f64).sqrt(),
        reps: n,
        seed,
    }
}

/// Sample covariance; SE from the spread of the centred cross products.
pub fn covariance_estimate(xs: &[f64], ys: &[f64], seed: u64) -> EstimateWithCI {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len();
    let (mx, my) = (mean(xs), mean(ys));
    let prods: Vec<f64> = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).collect();
    let c = prods.iter().sum::<f64>() / (n - 1) as f64;
    EstimateWithCI {
        estimate: c,
        std_error: (variance(&prods) / n as f64).sqrt(),
        reps: n,
        seed,
    }
}

/// Pearson correlation with a delta-method (influence function) SE.
pub fn correlation_estimate(xs: &[f64], ys: &[f64], seed: u64) -> EstimateWithCI {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len();
    let (mx, my) = (mean(xs), mean(ys));
    let sx = variance(xs).sqrt();
    let sy = variance(ys).sqrt();
    let rho = covariance_estimate(xs, ys, seed).estimate / (sx * sy);
    let infl: Vec<f64> = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let a = (x - mx) / sx;
            let b = (y - my) / sy;
            a * b - 0.5 * rho * (a * a + b * b)
        })
        .collect();
    EstimateWithCI {
        estimate: rho,
        std_error: (variance(&infl) / n as f64).sqrt(),
        reps: n,
        seed,
    }
}

/// Dispersion index Var/Mean with a delta-method SE.
pub fn dispersion_estimate(xs: &[f64], seed: u64) -> EstimateWithCI {
    let n = xs.len();
    let m = mean(xs);
    let s2 = variance(xs);
    let ratio = s2 / m;
    let infl: Vec<f64> = xs
        .iter()
        .map(|x| ((x - m).powi(2) - s2) / m - s2 * (x - m) / (m * m))
        .collect();
    EstimateWithCI {
        estimate: ratio,
        std_error: (variance(&infl) / n as f64).sqrt(),
        reps: n,
        seed,
    }
}

/// Two-sample Kolmogorov–Smirnov distance sup |F_a - F_b|.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// One-sample KS distance against a CDF.
pub fn ks_one_sample<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> f64 {
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    s.iter().enumerate().fold(0.0, |d, (i, &x)| {
        let f = cdf(x);
        d.max((f - i as f64 / n).abs()).max(((i + 1) as f64 / n - f).abs())
    })
}

/// Asymptotic Kolmogorov tail probability with the Stephens small-sample correction.
pub fn ks_p_value(d: f64, n_eff: f64) -> f64 {
    let sq = n_eff.sqrt();
    let lambda = (sq + 0.12 + 0.11 / sq) * d;
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=200 {
        let term = sign * (-2.0 * (k as f64 * lambda).powi(2)).exp();
        sum += term;
        if term.abs() < 1e-16 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

pub fn ks_two_sample_p_value(a: &[f64], b: &[f64]) -> (f64, f64) {
    let d = ks_two_sample(a, b);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    (d, ks_p_value(d, na * nb / (na + nb)))
}

/// Dvoretzky–Kiefer–Wolfowitz half-width for `n` samples at the given confidence.
pub fn dkw_epsilon(n: usize, confidence: f64) -> f64 {
    ((2.0 / (1.0 - confidence)).ln() / (2.0 * n as f64)).sqrt()
}

/// Upper tail probability of a chi-square statistic.
pub fn chi_square_p_value(statistic: f64, dof: usize) -> f64 {
    let chi = ChiSquared::new(dof as f64).expect("positive degrees of freedom");
    1.0 - chi.cdf(statistic)
}

/// Chi-square goodness of fit of integer counts against Poisson(mean), pooling
/// cells so every expected count is at least 5. Returns (statistic, dof, p-value).
pub fn poisson_chi_square(counts: &[u64], mean: f64) -> (f64, usize, f64) {
    let n = counts.len() as f64;
    let max = counts.iter().copied().max().unwrap_or(0) as usize;
    let mut observed = vec![0.0; max + 2];
    for &c in counts {
        observed[c as usize] += 1.0;
    }
    let mut pmf = Vec::with_capacity(max + 2);
    let mut p = (-mean).exp();
    for k in 0..=max {
        pmf.push(p);
        p *= mean / (k + 1) as f64;
    }
    // last cell collects the upper tail
    let tail = (1.0 - pmf.iter().sum::<f64>()).max(0.0);
    pmf.push(tail);

    let mut cells: Vec<(f64, f64)> = Vec::new();
    let (mut o_acc, mut e_acc) = (0.0, 0.0);
    for (o, q) in observed.iter().zip(&pmf) {
        o_acc += o;
        e_acc += q * n;
        if e_acc >= 5.0 {
            cells.push((o_acc, e_acc));
            o_acc = 0.0;
            e_acc = 0.0;
        }
    }
    if e_acc > 0.0 || o_acc > 0.0 {
        match cells.last_mut() {
            Some(last) => {
                last.0 += o_acc;
                last.1 += e_acc;
            }
            None => cells.push((o_acc, e_acc)),
        }
    }
    let stat: f64 = cells.iter().map(|(o, e)| (o - e).powi(2) / e).sum();
    let dof = cells.len().saturating_sub(1).max(1);
    (stat, dof, chi_square_p_value(stat, dof))
}
