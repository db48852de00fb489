//! Shot-noise driven Cox arrivals feeding infinite-server queues.
//!
//! The crate couples two independent routes to the same quantities:
//!
//! - exact Monte Carlo: shot-noise intensity paths ([`shotnoise`]), Cox arrival
//!   sampling by thinning or inversion ([`coxarrivals`]) and event-driven
//!   simulation of single queues, tandems, parallel tandems and the two-node
//!   loop ([`netsim`]);
//! - numerical analytics: joint PGF/LST transforms, moments and covariances
//!   evaluated by nested adaptive quadrature ([`analytics`]).
//!
//! [`fcltlab`] runs the heavy-traffic scaling experiments (fluid limit,
//! diffusion-scaled job counts and the limiting Gaussian process).
//!
//! Every random quantity is drawn from a stream obtained with
//! [`rng::seed_split`], so a `(seed, replication, role)` triple fully
//! determines an output.

pub mod analytics;
pub mod coxarrivals;
pub mod distributions;
pub mod error;
pub mod fcltlab;
pub mod netsim;
pub mod quadrature;
pub mod rng;
pub mod shotnoise;
pub mod stats;

pub use error::{Error, Result};
