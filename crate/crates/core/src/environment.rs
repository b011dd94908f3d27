//! Synthetic data-generating process: contexts, mean rewards, and noisy
//! reward draws, all driven by seeded ChaCha streams.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{dot, Action, Context};

/// The rng used everywhere in the crate.
pub type SimRng = ChaCha8Rng;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ThetaError {
    #[error("theta has {len} entries; expected an odd length 2*d1+1 >= 3")]
    BadLength { len: usize },
    #[error("theta entry {index} is not finite")]
    NonFinite { index: usize },
}

/// Outcome-model parameters `(β₀, β₁, γ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theta {
    pub beta0: Vec<f64>,
    pub beta1: Vec<f64>,
    pub gamma: f64,
}

impl Theta {
    /// Parameter vector of the two-covariate simulation.
    pub fn simulation_default() -> Self {
        Self::from_flat(&[
            0.3, -0.1, 0.3, 0.5, -0.2, 0.7, 0.2, 0.7, 0.1, -0.3, 0.5, 0.3, 0.6,
        ])
        .expect("default theta is well formed")
    }

    /// Splits `(β₀ᵀ, β₁ᵀ, γ)` laid out flat.
    pub fn from_flat(values: &[f64]) -> Result<Self, ThetaError> {
        let len = values.len();
        if len < 3 || len % 2 == 0 {
            return Err(ThetaError::BadLength { len });
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(ThetaError::NonFinite { index });
        }
        let d1 = (len - 1) / 2;
        Ok(Self {
            beta0: values[..d1].to_vec(),
            beta1: values[d1..2 * d1].to_vec(),
            gamma: values[2 * d1],
        })
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.dim());
        v.extend_from_slice(&self.beta0);
        v.extend_from_slice(&self.beta1);
        v.push(self.gamma);
        v
    }

    /// Feature dimension `d1`.
    pub fn feature_dim(&self) -> usize {
        self.beta0.len()
    }

    /// Full dimension `d = 2 d1 + 1`.
    pub fn dim(&self) -> usize {
        2 * self.beta0.len() + 1
    }

    /// `β₁ − β₀`
    pub fn effect(&self) -> Vec<f64> {
        self.beta1
            .iter()
            .zip(&self.beta0)
            .map(|(b1, b0)| b1 - b0)
            .collect()
    }

    /// `φᵀ(β₁ − β₀)`
    pub fn treatment_score(&self, features: &[f64]) -> f64 {
        dot(features, &self.beta1) - dot(features, &self.beta0)
    }
}

/// `μ(x, κ, a) = (1−a)φᵀβ₀ + aφᵀβ₁ + κγ`
pub fn mean_reward(theta: &Theta, features: &[f64], kappa: f64, action: Action) -> f64 {
    let arm = if action == 1 { &theta.beta1 } else { &theta.beta0 };
    dot(features, arm) + kappa * theta.gamma
}

/// How contexts are produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ContextLaw {
    /// `x1 ~ N(0,1)` truncated to `[-x1_bound, x1_bound]`, `x2 ~ U(x2_low, x2_high)`.
    Synthetic {
        x1_bound: f64,
        x2_low: f64,
        x2_high: f64,
    },
    /// Uniform resampling with replacement from a fixed pool.
    Empirical {
        #[serde(skip)]
        pool: Arc<Vec<Context>>,
    },
}

impl Default for ContextLaw {
    fn default() -> Self {
        ContextLaw::Synthetic {
            x1_bound: 10.0,
            x2_low: 0.0,
            x2_high: 2.0,
        }
    }
}

impl ContextLaw {
    pub fn raw_dim(&self) -> usize {
        match self {
            ContextLaw::Synthetic { .. } => 2,
            ContextLaw::Empirical { pool } => pool.first().map_or(0, Context::dim),
        }
    }
}

/// Full description of the simulated environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpSpec {
    pub theta: Theta,
    pub noise_sd0: f64,
    pub noise_sd1: f64,
    pub context_law: ContextLaw,
}

impl Default for DgpSpec {
    fn default() -> Self {
        Self {
            theta: Theta::simulation_default(),
            noise_sd0: 0.1,
            noise_sd1: 0.1,
            context_law: ContextLaw::default(),
        }
    }
}

impl DgpSpec {
    pub fn noise_sd(&self, action: Action) -> f64 {
        if action == 1 {
            self.noise_sd1
        } else {
            self.noise_sd0
        }
    }
}

/// Standard normal restricted to `[-bound, bound]` by rejection.
pub fn truncated_standard_normal<R: Rng + ?Sized>(rng: &mut R, bound: f64) -> f64 {
    loop {
        let x: f64 = rng.sample(StandardNormal);
        if x.abs() <= bound {
            return x;
        }
    }
}

pub fn sample_context<R: Rng + ?Sized>(law: &ContextLaw, rng: &mut R) -> Context {
    match law {
        ContextLaw::Synthetic {
            x1_bound,
            x2_low,
            x2_high,
        } => {
            let x1 = truncated_standard_normal(rng, *x1_bound);
            let x2 = rng.gen_range(*x2_low..=*x2_high);
            Context::pair(x1, x2)
        }
        ContextLaw::Empirical { pool } => {
            assert!(!pool.is_empty(), "empirical context pool is empty");
            pool[rng.gen_range(0..pool.len())].clone()
        }
    }
}

/// `μ(x, κ, a) + e`, `e ~ N(0, σ_a²)`.
pub fn draw_reward<R: Rng + ?Sized>(
    spec: &DgpSpec,
    features: &[f64],
    kappa: f64,
    action: Action,
    rng: &mut R,
) -> f64 {
    let e: f64 = rng.sample(StandardNormal);
    reward_from_noise(spec, features, kappa, action, e)
}

/// Reward given an already-drawn standard normal variate. Lets episodes
/// consume one noise draw per step no matter which action is taken.
pub fn reward_from_noise(spec: &DgpSpec, features: &[f64], kappa: f64, action: Action, std_noise: f64) -> f64 {
    mean_reward(&spec.theta, features, kappa, action) + spec.noise_sd(action) * std_noise
}

/// Stream ids within one episode seed.
const CONTEXT_STREAM: u64 = 0;
const NOISE_STREAM: u64 = 1;
const EXPLORE_STREAM_BASE: u64 = 2;

/// Independent random streams for one episode.
///
/// Contexts and noise depend only on the episode seed, so episodes run with
/// the same seed under different policies see identical context and noise
/// sequences. Exploration draws use a per-policy stream.
#[derive(Debug, Clone)]
pub struct EpisodeStreams {
    pub contexts: SimRng,
    pub noise: SimRng,
    pub explore: SimRng,
}

impl EpisodeStreams {
    pub fn new(seed: u64, policy_code: u64) -> Self {
        Self {
            contexts: stream(seed, CONTEXT_STREAM),
            noise: stream(seed, NOISE_STREAM),
            explore: stream(seed, EXPLORE_STREAM_BASE + policy_code),
        }
    }
}

pub fn stream(seed: u64, id: u64) -> SimRng {
    let mut rng = SimRng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Episode seed of replication `rep` under base seed `base`:
/// `mix64(base ^ mix64(rep + 1))`. The policy index does not enter the
/// episode seed; it selects the exploration stream instead.
pub fn replication_seed(base: u64, rep: u64) -> u64 {
    mix64(base ^ mix64(rep.wrapping_add(1)))
}
