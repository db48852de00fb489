//! Counter-based random streams.
//!
//! A stream is a ChaCha8 keystream whose 256-bit key is the injective packing
//! of `(master seed, replication index, role)`. ChaCha is a counter-mode
//! generator, so distinct triples give distinct keystreams and no state is
//! shared between replications or roles.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// What a stream is used for. Roles never share a stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StreamRole {
    Shots,
    Arrivals,
    Services,
    Routing,
    LimitSde,
}

impl StreamRole {
    pub const ALL: [StreamRole; 5] = [
        StreamRole::Shots,
        StreamRole::Arrivals,
        StreamRole::Services,
        StreamRole::Routing,
        StreamRole::LimitSde,
    ];

    fn tag(self) -> u64 {
        match self {
            StreamRole::Shots => 1,
            StreamRole::Arrivals => 2,
            StreamRole::Services => 3,
            StreamRole::Routing => 4,
            StreamRole::LimitSde => 5,
        }
    }
}

const DOMAIN_TAG: &[u8; 8] = b"sncox\x00v1";

#[derive(Clone, Debug)]
pub struct RngStream(ChaCha8Rng);

impl RngStream {
    /// Uniform variate on the open interval (0, 1).
    #[inline]
    pub fn open01(&mut self) -> f64 {
        ((self.0.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// Unit-rate exponential variate.
    #[inline]
    pub fn exp1(&mut self) -> f64 {
        -self.open01().ln()
    }
}

impl RngCore for RngStream {
    #[inline]
    fn next_u32(&mut self) -> u32 {
        self.0.next_u32()
    }

    #[inline]
    fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.0.fill_bytes(dst)
    }
}

/// Derive the stream for one `(master, replication, role)` triple.
pub fn seed_split(master: u64, replication: u64, role: StreamRole) -> RngStream {
    let mut key = [0u8; 32];
    key[0..8].copy_from_slice(&master.to_le_bytes());
    key[8..16].copy_from_slice(&replication.to_le_bytes());
    key[16..24].copy_from_slice(&role.tag().to_le_bytes());
    key[24..32].copy_from_slice(DOMAIN_TAG);
    RngStream(ChaCha8Rng::from_seed(key))
}

/// All per-replication streams bundled together.
#[derive(Clone, Debug)]
pub struct ReplicationStreams {
    pub shots: RngStream,
    pub arrivals: RngStream,
    pub services: RngStream,
    pub routing: RngStream,
}

impl ReplicationStreams {
    pub fn new(master: u64, replication: u64) -> Self {
        Self {
            shots: seed_split(master, replication, StreamRole::Shots),
            arrivals: seed_split(master, replication, StreamRole::Arrivals),
            services: seed_split(master, replication, StreamRole::Services),
            routing: seed_split(master, replication, StreamRole::Routing),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn same_triple_same_stream() {
        let mut a = seed_split(7, 3, StreamRole::Services);
        let mut b = seed_split(7, 3, StreamRole::Services);
        for _ in 0..1000 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn distinct_triples_share_no_outputs() {
        let triples = [
            (7u64, 3u64, StreamRole::Services),
            (7, 3, StreamRole::Shots),
            (7, 4, StreamRole::Services),
            (8, 3, StreamRole::Services),
        ];
        let n = 1_000_000;
        let mut first: HashSet<u64> = HashSet::with_capacity(n);
        let mut s = seed_split(triples[0].0, triples[0].1, triples[0].2);
        for _ in 0..n {
            first.insert(s.next_u64());
        }
        for &(m, i, r) in &triples[1..] {
            let mut other = seed_split(m, i, r);
            for _ in 0..n {
                assert!(!first.contains(&other.next_u64()));
            }
        }
    }

    #[test]
    fn shot_and_service_streams_uncorrelated() {
        let n = 200_000;
        let mut a = seed_split(11, 0, StreamRole::Shots);
        let mut b = seed_split(11, 0, StreamRole::Services);
        let (mut sx, mut sy, mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for _ in 0..n {
            let x = a.open01();
            let y = b.open01();
            sx += x;
            sy += y;
            sxy += x * y;
            sxx += x * x;
            syy += y * y;
        }
        let nf = n as f64;
        let cov = sxy / nf - sx / nf * sy / nf;
        let corr = cov / ((sxx / nf - (sx / nf).powi(2)) * (syy / nf - (sy / nf).powi(2))).sqrt();
        // Under independence the sample correlation has SE ~ 1/sqrt(n).
        assert!(corr.abs() < 4.0 / nf.sqrt(), "corr = {corr}");
    }

    #[test]
    fn open01_stays_inside_unit_interval() {
        let mut s = seed_split(0, 0, StreamRole::Arrivals);
        for _ in 0..100_000 {
            let u = s.open01();
            assert!(u > 0.0 && u < 1.0);
        }
    }
}
