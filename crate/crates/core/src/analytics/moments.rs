//! Factorial moments from a transform by one-sided differences at `z = 1`.

use crate::error::{Error, Result};
use crate::netsim::TransformQuery;

/// Base step of the difference quotients.
pub const PGF_STEP: f64 = 1e-4;

/// `E N_j(t) e^{-<s,Λ(t)>}` (order 1) or `E N_j(N_j - 1) e^{-<s,Λ(t)>}` (order 2)
/// for node `node`, from backward differences in `z_node` at 1 with steps `h`
/// and `h/2` combined by Richardson extrapolation. Other coordinates of `query`
/// are kept as given; `query.z[node]` must be 1.
pub fn pgf_moments<F>(mut eval: F, query: &TransformQuery, node: usize, order: u8) -> Result<f64>
where
    F: FnMut(&TransformQuery) -> Result<f64>,
{
    if node >= query.z.len() {
        return Err(Error::DimensionMismatch {
            expected: node + 1,
            got: query.z.len(),
        });
    }
    if query.z[node] != 1.0 {
        return Err(Error::Domain(format!("moments are taken at z = 1, got z = {}", query.z[node])));
    }
    let mut at = |z: f64| -> Result<f64> {
        let mut q = query.clone();
        q.z[node] = z;
        eval(&q)
    };
    let x0 = at(1.0)?;
    let quotient = |h: f64, at: &mut dyn FnMut(f64) -> Result<f64>| -> Result<f64> {
        Ok(match order {
            1 => (x0 - at(1.0 - h)?) / h,
            2 => (x0 - 2.0 * at(1.0 - h)? + at(1.0 - 2.0 * h)?) / (h * h),
            _ => return Err(Error::invalid("order", format!("must be 1 or 2, got {order}"))),
        })
    };
    let coarse = quotient(PGF_STEP, &mut at)?;
    let fine = quotient(PGF_STEP / 2.0, &mut at)?;
    let v = 2.0 * fine - coarse;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite(format!("difference quotient of order {order}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytics::single::{joint_transform, mean_n, var_n};
    use crate::distributions::{ServiceLaw, ShotLaw};
    use crate::quadrature::QuadratureConfig;
    use crate::shotnoise::ShotNoiseSpec;

    #[test]
    fn poisson_pgf() {
        let m = 3.2;
        let q = TransformQuery::new(1.0, vec![1.0], vec![]);
        let pgf = |q: &TransformQuery| Ok((m * (q.z[0] - 1.0)).exp());
        assert!((pgf_moments(pgf, &q, 0, 1).unwrap() - m).abs() < 1e-7);
        assert!((pgf_moments(pgf, &q, 0, 2).unwrap() - m * m).abs() < 1e-5);
        assert!(pgf_moments(pgf, &q, 0, 3).is_err());
    }

    #[test]
    fn moments_of_the_queue_transform() {
        let spec = ShotNoiseSpec::scalar(2.0, 1.0, ShotLaw::Exponential { mean: 1.0 });
        let svc = ServiceLaw::Exponential { rate: 2.0 };
        let t = 1.5;
        let cfg = QuadratureConfig::tight();
        let eval = |q: &TransformQuery| joint_transform(&spec, &svc, q, &cfg);
        let q = TransformQuery::new(t, vec![1.0], vec![0.0]);
        let m1 = pgf_moments(eval, &q, 0, 1).unwrap();
        let m2 = pgf_moments(eval, &q, 0, 2).unwrap();
        let mean = mean_n(&spec, &svc, t).unwrap();
        let var = var_n(&spec, &svc, t, &cfg).unwrap();
        assert!((m1 - mean).abs() < 1e-4 * mean);
        assert!((m2 + m1 - m1 * m1 - var).abs() < 1e-3 * var);
    }

    #[test]
    fn degenerate_intensity_has_zero_moments() {
        let spec = ShotNoiseSpec::scalar(1e-12, 1.0, ShotLaw::Exponential { mean: 1.0 });
        let svc = ServiceLaw::Exponential { rate: 1.0 };
        let cfg = QuadratureConfig::tight();
        let q = TransformQuery::new(2.0, vec![1.0], vec![0.0]);
        for order in [1, 2] {
            let m = pgf_moments(|q: &TransformQuery| joint_transform(&spec, &svc, q, &cfg), &q, 0, order).unwrap();
            // second differences amplify round-off by h^-2
            assert!(m.abs() < if order == 1 { 1e-9 } else { 1e-5 });
        }
    }
}
