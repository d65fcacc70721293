//! Independent, addressable random streams for the stochastic primitives.
//!
//! Each replication owns one ChaCha8 key derived from `(seed, replication)`.
//! Within that key, stream ids partition the primitives: buffer `k`
//! interarrivals use id `k`, activity `j` services use `m + j`, and
//! activity `j` routing uses `m + n + j`. ChaCha's block counter is the
//! position inside a stream, so a draw depends only on
//! `(seed, replication, stream, counter)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::dist::Sampler;
use super::NetworkSpec;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StreamError {
    #[error("buffer {0} has zero arrival rate")]
    ZeroRate(usize),
}

/// Identifies one of the `2n + m` primitive sequences.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StreamId {
    Interarrival(usize),
    Service(usize),
    Routing(usize),
}

impl StreamId {
    pub fn index(self, num_buffers: usize, num_activities: usize) -> u64 {
        match self {
            StreamId::Interarrival(k) => k as u64,
            StreamId::Service(j) => (num_buffers + j) as u64,
            StreamId::Routing(j) => (num_buffers + num_activities + j) as u64,
        }
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// 256-bit ChaCha key for one replication.
pub fn replication_key(seed: u64, replication: u64) -> [u8; 32] {
    let mut state = seed ^ replication.rotate_left(32) ^ 0xC2B2_AE3D_27D4_EB4F;
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    // mix the replication in a second time so nearby (seed, rep) pairs diverge
    let salt = splitmix64(&mut replication.clone());
    for (i, b) in salt.to_le_bytes().iter().enumerate() {
        key[i] ^= b;
    }
    key
}

/// One addressable substream.
#[derive(Debug, Clone)]
pub struct Substream {
    rng: ChaCha8Rng,
    draws: u64,
}

impl Substream {
    pub fn new(seed: u64, replication: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::from_seed(replication_key(seed, replication));
        rng.set_stream(stream);
        Self { rng, draws: 0 }
    }

    pub fn draws(&self) -> u64 {
        self.draws
    }

    pub(crate) fn sample(&mut self, sampler: &Sampler) -> f64 {
        self.draws += 1;
        sampler.sample(&mut self.rng)
    }

    pub fn uniform(&mut self) -> f64 {
        self.draws += 1;
        self.rng.random::<f64>()
    }
}

/// All primitive sequences of one replication of a network.
#[derive(Debug, Clone)]
pub struct PrimitiveStreams {
    seed: u64,
    replication: u64,
    arrival_rate: Vec<f64>,
    mean_service: Vec<f64>,
    cumulative_routing: Vec<Vec<f64>>,
    interarrival: Vec<Option<(Substream, Sampler)>>,
    service: Vec<(Substream, Sampler)>,
    routing: Vec<Substream>,
}

impl PrimitiveStreams {
    pub fn new(net: &NetworkSpec, seed: u64, replication: u64) -> Self {
        let m = net.num_buffers();
        let n = net.num_activities();
        let stream = |id: StreamId| Substream::new(seed, replication, id.index(m, n));
        let interarrival = (0..m)
            .map(|k| {
                if net.arrival_rate[k] > 0.0 {
                    let dist = net.interarrival_dist[k]
                        .as_ref()
                        .expect("validated network has an interarrival law for every arriving buffer");
                    Some((stream(StreamId::Interarrival(k)), dist.sampler()))
                } else {
                    None
                }
            })
            .collect();
        let service = (0..n)
            .map(|j| (stream(StreamId::Service(j)), net.service_dist[j].sampler()))
            .collect();
        let routing = (0..n).map(|j| stream(StreamId::Routing(j))).collect();
        let cumulative_routing = net
            .routing
            .iter()
            .map(|row| {
                row.iter()
                    .scan(0.0, |acc, p| {
                        *acc += p;
                        Some(*acc)
                    })
                    .collect()
            })
            .collect();
        Self {
            seed,
            replication,
            arrival_rate: net.arrival_rate.clone(),
            mean_service: net.mean_service.clone(),
            cumulative_routing,
            interarrival,
            service,
            routing,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn replication(&self) -> u64 {
        self.replication
    }

    /// `u_k(i) = ubar_k(i) / lambda_k`.
    pub fn draw_interarrival(&mut self, k: usize) -> Result<f64, StreamError> {
        let rate = self.arrival_rate[k];
        match self.interarrival[k].as_mut() {
            Some((stream, sampler)) => Ok(stream.sample(sampler) / rate),
            None => Err(StreamError::ZeroRate(k)),
        }
    }

    /// `v_j(i) = m_j vbar_j(i)`.
    pub fn draw_service(&mut self, j: usize) -> f64 {
        let (stream, sampler) = &mut self.service[j];
        self.mean_service[j] * stream.sample(sampler)
    }

    /// Destination buffer of a job finishing activity `j`; `None` means exit.
    pub fn draw_route(&mut self, j: usize) -> Option<usize> {
        let cumulative = &self.cumulative_routing[j];
        if cumulative.last().is_none_or(|&total| total <= 0.0) {
            return None;
        }
        let u = self.routing[j].uniform();
        cumulative.iter().position(|&c| u < c)
    }

    pub fn draw_counter(&self, id: StreamId) -> u64 {
        match id {
            StreamId::Interarrival(k) => self.interarrival[k].as_ref().map_or(0, |(s, _)| s.draws()),
            StreamId::Service(j) => self.service[j].0.draws(),
            StreamId::Routing(j) => self.routing[j].draws(),
        }
    }
}
