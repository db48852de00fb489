//! Numerical evaluation of transforms, moments and covariances.
//!
//! Transforms reduce to `exp(ν ∫_0^t (β(g(v)) - 1) dv)` where `g` contains an
//! inner integral of the occupancy weights; both levels use adaptive
//! Gauss–Kronrod quadrature, with the inner integral cached at cell
//! boundaries (see [`kernel`]).

mod covariance;
pub(crate) mod kernel;
mod loops;
mod moments;
mod single;
mod tandem;

use std::io::{self, Write};

use rayon::prelude::*;
use serde::Serialize;

pub use crate::netsim::TransformQuery;
pub use crate::quadrature::{Integral, QuadratureConfig};
use crate::error::Result;

pub use covariance::{cov_m1, cov_m2, cov_tandem, intensity_covariance, m2_simultaneous_term};
pub use loops::{loop_mean, loop_probs_closed, loop_probs_series, loop_transform, loop_truncation, LoopProbabilities};
pub use moments::{pgf_moments, PGF_STEP};
pub use single::{
    exact_mean_var_exponential, generic_transform, generic_transform_with_breaks, h_function, integrated_intensity_variance,
    joint_transform, joint_transform_detailed, mean_n, var_n,
};
pub use tandem::{
    f_m2, f_tandem, network_transform, network_transform_m1, network_transform_m1_detailed, network_transform_m2,
    network_transform_m2_detailed, occupancy_probs, OccupancyProbabilities,
};

/// One evaluated query.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BatchRow {
    pub query: TransformQuery,
    pub value: f64,
    pub abs_err: f64,
}

/// Evaluate queries in parallel; rows keep the input order.
pub fn evaluate_batch<F>(queries: &[TransformQuery], eval: F) -> Result<Vec<BatchRow>>
where
    F: Fn(&TransformQuery) -> Result<Integral> + Sync,
{
    queries
        .par_iter()
        .map(|q| {
            eval(q).map(|i| BatchRow {
                query: q.clone(),
                value: i.value,
                abs_err: i.abs_err,
            })
        })
        .collect()
}

/// CSV with columns `t, z_1.., s_1.., value, abs_err_estimate`; the column
/// counts follow the first row.
pub fn write_batch_csv<W: Write>(rows: &[BatchRow], mut w: W) -> io::Result<()> {
    let (nz, ns) = rows.first().map(|r| (r.query.z.len(), r.query.s.len())).unwrap_or((0, 0));
    write!(w, "t")?;
    for i in 1..=nz {
        write!(w, ",z_{i}")?;
    }
    for i in 1..=ns {
        write!(w, ",s_{i}")?;
    }
    writeln!(w, ",value,abs_err_estimate")?;
    for r in rows {
        write!(w, "{}", r.query.t)?;
        for z in &r.query.z {
            write!(w, ",{z}")?;
        }
        for s in &r.query.s {
            write!(w, ",{s}")?;
        }
        writeln!(w, ",{},{:e}", r.value, r.abs_err)?;
    }
    Ok(())
}
