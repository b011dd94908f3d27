//! One episode of the exploration algorithm: deterministic warm-up blocks,
//! ε-greedy decisions on refreshed estimates, and queued force pulls when
//! the normalized Gram matrix loses eigenvalue mass.

use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::environment::{reward_from_noise, sample_context, DgpSpec, EpisodeStreams, Theta};
use crate::estimator::{GramAccumulator, ThetaHat};
use crate::features::{build_design, build_design_without_kappa, Action, Context, QuadraticFeatureMap};
use crate::interference::{InterferenceError, KappaState, WeightScheme, ZetaTable};
use crate::linalg::SymMatrix;
use crate::policies::{
    epsilon_greedy_propensity, myopic_action, naive_action, oracle_action, PolicyKind,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RunError {
    #[error("invalid config `{key}`: {message}")]
    Config { key: String, message: String },
    #[error(transparent)]
    Interference(#[from] InterferenceError),
}

fn config_err(key: &str, message: impl Into<String>) -> RunError {
    RunError::Config {
        key: key.to_string(),
        message: message.into(),
    }
}

/// Exploration-rate schedules, clamped to `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum EpsSchedule {
    /// `p · ln t / √t`
    LogSqrt { p: f64 },
    /// `p · ln ln t / √t`
    LogLogSqrt { p: f64 },
    /// `p · t^(−α)`
    Power { p: f64, alpha: f64 },
    Constant { value: f64 },
}

impl Default for EpsSchedule {
    fn default() -> Self {
        EpsSchedule::LogSqrt { p: 0.1 }
    }
}

/// `ε_t` for the given schedule.
pub fn epsilon(t: u64, schedule: &EpsSchedule) -> f64 {
    let tf = t as f64;
    let raw = match *schedule {
        EpsSchedule::LogSqrt { p } => p * tf.ln() / tf.sqrt(),
        EpsSchedule::LogLogSqrt { p } => p * tf.ln().ln() / tf.sqrt(),
        EpsSchedule::Power { p, alpha } => p * tf.powf(-alpha),
        EpsSchedule::Constant { value } => value,
    };
    if raw.is_nan() {
        0.0
    } else {
        raw.clamp(0.0, 1.0)
    }
}

/// Warm-up assignment: action 1 on `((i−1)T0/L, (2i−1)T0/2L]`, action 0 on
/// `((2i−1)T0/2L, iT0/L]`, for `i = 1..L`. Exact in integers: step `t` lies
/// in half-interval `j = ⌈2L t / T0⌉`, and odd `j` means action 1.
pub fn warmup_action(t: u64, warmup: u64, intervals: u64) -> Action {
    debug_assert!(t >= 1 && t <= warmup);
    let num = 2 * intervals as u128 * t as u128;
    let j = num.div_ceil(warmup as u128);
    (j % 2 == 1) as Action
}

/// `λ ≤ C·ε`
pub fn check_trigger(clip_stat: f64, clip: f64, eps: f64) -> bool {
    clip_stat <= clip * eps
}

/// Force action 1 when κ is at or below the threshold, else 0.
pub fn force_direction(kappa: f64, kappa0: f64) -> Action {
    (kappa <= kappa0) as Action
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Horizon `T`.
    pub horizon: u64,
    /// Warm-up length `T0`.
    pub warmup: u64,
    /// Number of warm-up interval pairs `L`.
    pub intervals: u64,
    /// Extra forced steps per trigger `K` (a trigger forces `K + 1` steps).
    pub force_pulls: u64,
    /// Clipping constant `C`.
    pub clip: f64,
    /// Force-direction threshold `κ0`.
    pub kappa0: f64,
    pub eps: EpsSchedule,
    pub scheme: WeightScheme,
    pub dgp: DgpSpec,
    pub policy: PolicyKind,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            horizon: 10_000,
            warmup: 50,
            intervals: 8,
            force_pulls: 50,
            clip: 0.01,
            kappa0: 0.5,
            eps: EpsSchedule::default(),
            scheme: WeightScheme::GrowingLinear { rho: 0.2 },
            dgp: DgpSpec::default(),
            policy: PolicyKind::Front,
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn feature_map(&self) -> QuadraticFeatureMap {
        QuadraticFeatureMap::new(self.dgp.context_law.raw_dim())
    }

    pub fn validate(&self) -> Result<(), RunError> {
        if self.horizon == 0 {
            return Err(config_err("horizon", "must be at least 1"));
        }
        if self.intervals == 0 {
            return Err(config_err("intervals", "must be at least 1"));
        }
        if self.warmup >= self.horizon {
            return Err(config_err(
                "warmup",
                format!("warm-up {} must be below horizon {}", self.warmup, self.horizon),
            ));
        }
        if self.warmup < 2 * self.intervals {
            return Err(config_err(
                "warmup,intervals",
                format!(
                    "warm-up {} cannot be split into 2*intervals = {} nonempty blocks",
                    self.warmup,
                    2 * self.intervals
                ),
            ));
        }
        if !(self.clip > 0.0 && self.clip.is_finite()) {
            return Err(config_err("clip", "must be positive"));
        }
        if self.force_pulls == 0 {
            return Err(config_err("force_pulls", "must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.kappa0) {
            return Err(config_err("kappa0", "must lie in [0, 1]"));
        }
        self.scheme
            .validate()
            .map_err(|e| config_err("scheme", e.to_string()))?;
        let sd_ok = |v: f64| v >= 0.0 && v.is_finite();
        if !sd_ok(self.dgp.noise_sd0) {
            return Err(config_err("dgp.noise_sd0", "must be finite and nonnegative"));
        }
        if !sd_ok(self.dgp.noise_sd1) {
            return Err(config_err("dgp.noise_sd1", "must be finite and nonnegative"));
        }
        let d1 = self.feature_map().output_dim();
        if self.dgp.theta.feature_dim() != d1 {
            return Err(config_err(
                "dgp.theta",
                format!(
                    "theta has {} entries; the feature map needs {}",
                    self.dgp.theta.dim(),
                    2 * d1 + 1
                ),
            ));
        }
        Ok(())
    }
}

/// Why an action was taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionSource {
    Warmup,
    Policy,
    Explore,
    Force,
}

impl ActionSource {
    pub fn name(&self) -> &'static str {
        match self {
            ActionSource::Warmup => "warmup",
            ActionSource::Policy => "policy",
            ActionSource::Explore => "explore",
            ActionSource::Force => "force",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: u64,
    pub context: Context,
    pub feature_hash: u64,
    pub action: Action,
    pub forced: bool,
    pub source: ActionSource,
    pub kappa: f64,
    pub zeta: f64,
    pub propensity: f64,
    pub reward: f64,
    pub eps: f64,
    pub clip_stat: Option<f64>,
}

/// Estimate (and, when requested, its sandwich covariance) at a checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub t: u64,
    pub theta_hat: Option<ThetaHat>,
    pub sandwich: Option<SymMatrix>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeLog {
    pub policy: PolicyKind,
    pub seed: u64,
    pub scheme: WeightScheme,
    pub steps: Vec<StepRecord>,
    pub snapshots: Vec<Snapshot>,
    /// Every forced step after warm-up.
    pub force_pulls: Vec<u64>,
    /// Steps at which the clipping trigger fired.
    pub triggers: Vec<u64>,
    pub final_theta_hat: Option<ThetaHat>,
}

impl EpisodeLog {
    pub fn horizon(&self) -> u64 {
        self.steps.len() as u64
    }

    pub fn actions(&self) -> Vec<Action> {
        self.steps.iter().map(|s| s.action).collect()
    }

    /// Number of forced steps after warm-up among the first `t` steps.
    pub fn force_pulls_up_to(&self, t: u64) -> usize {
        self.force_pulls.iter().filter(|&&s| s <= t).count()
    }
}

/// What to record beyond the per-step log.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Steps at which to snapshot the estimate.
    pub checkpoints: Vec<u64>,
    /// Also compute the sandwich covariance at each checkpoint.
    pub sandwich: bool,
    /// Compute `λ_min` on every post-warm-up step instead of only when the
    /// cheap positive-definiteness test is inconclusive.
    pub record_clip_stat: bool,
}

/// Runs one episode, building the ζ table on the fly.
pub fn run_episode(cfg: &RunConfig) -> Result<EpisodeLog, RunError> {
    cfg.validate()?;
    let table = ZetaTable::new(cfg.scheme, cfg.horizon)?;
    run_episode_with(cfg, &RunOptions::default(), &table)
}

fn feature_hash(features: &[f64]) -> u64 {
    // FNV-1a over the raw bits
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for v in features {
        for b in v.to_bits().to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h
}

/// Runs one episode against a precomputed ζ table for the same scheme and
/// horizon.
pub fn run_episode_with(cfg: &RunConfig, opts: &RunOptions, table: &ZetaTable) -> Result<EpisodeLog, RunError> {
    cfg.validate()?;
    if table.scheme() != &cfg.scheme || table.horizon() != cfg.horizon {
        return Err(config_err("scheme", "zeta table was built for a different scheme or horizon"));
    }
    let map = cfg.feature_map();
    let d1 = map.output_dim();
    let with_kappa = cfg.policy.models_interference();
    let design = |f: &[f64], a: Action, kappa: f64| -> Vec<f64> {
        if with_kappa {
            build_design(f, a, kappa)
        } else {
            build_design_without_kappa(f, a)
        }
    };

    let mut streams = EpisodeStreams::new(cfg.seed, cfg.policy.code());
    let mut kappa_state = KappaState::new(cfg.scheme);
    let mut acc = GramAccumulator::new(if with_kappa { 2 * d1 + 1 } else { 2 * d1 });
    let mut estimate: Option<Vec<f64>> = None;
    let mut forced_left = 0u64;
    let mut forced_dir: Action = 0;

    let mut checkpoints = opts.checkpoints.clone();
    checkpoints.sort_unstable();
    checkpoints.dedup();
    let mut next_checkpoint = checkpoints.iter().peekable();

    let mut log = EpisodeLog {
        policy: cfg.policy,
        seed: cfg.seed,
        scheme: cfg.scheme,
        steps: Vec::with_capacity(cfg.horizon as usize),
        snapshots: Vec::with_capacity(checkpoints.len()),
        force_pulls: Vec::new(),
        triggers: Vec::new(),
        final_theta_hat: None,
    };

    for t in 1..=cfg.horizon {
        // fixed per-step consumption: one context, one noise variate, two uniforms
        let context = sample_context(&cfg.dgp.context_law, &mut streams.contexts);
        let std_noise: f64 = streams.noise.sample(StandardNormal);
        let u_explore: f64 = streams.explore.gen();
        let u_coin: f64 = streams.explore.gen();

        let features = map.apply(&context);
        let kappa = kappa_state.next_kappa();
        let zeta = table.zeta(t);
        let eps = epsilon(t, &cfg.eps);
        let mut clip_stat = None;

        let (action, source, propensity) = if cfg.policy == PolicyKind::Oracle {
            let a = oracle_action(&cfg.dgp.theta, &features, zeta);
            (a, ActionSource::Policy, a as f64)
        } else if t <= cfg.warmup {
            let a = warmup_action(t, cfg.warmup, cfg.intervals);
            (a, ActionSource::Warmup, a as f64)
        } else if forced_left > 0 {
            forced_left -= 1;
            (forced_dir, ActionSource::Force, forced_dir as f64)
        } else {
            if let Ok(th) = acc.solve() {
                estimate = Some(th.values);
            }
            let greedy = estimate
                .as_deref()
                .map(|est| greedy_action(cfg.policy, est, &features, kappa, zeta));
            let (mut a, mut source, mut prop) = match greedy {
                Some(g) if u_explore >= eps => (g, ActionSource::Policy, epsilon_greedy_propensity(g, eps)),
                Some(g) => ((u_coin < 0.5) as Action, ActionSource::Explore, epsilon_greedy_propensity(g, eps)),
                // no invertible fit yet: explore uniformly
                None => ((u_coin < 0.5) as Action, ActionSource::Explore, 0.5),
            };
            let candidate = design(&features, a, kappa);
            let threshold = cfg.clip * eps;
            let (fire, lambda) = if opts.record_clip_stat {
                let lambda = acc.clipping_check(Some(&candidate), f64::INFINITY).1;
                let lambda = lambda.expect("infinite threshold always computes the eigenvalue");
                (check_trigger(lambda, cfg.clip, eps), Some(lambda))
            } else {
                acc.clipping_check(Some(&candidate), threshold)
            };
            clip_stat = lambda;
            if fire {
                forced_dir = force_direction(kappa, cfg.kappa0);
                forced_left = cfg.force_pulls;
                log.triggers.push(t);
                a = forced_dir;
                source = ActionSource::Force;
                prop = a as f64;
            }
            (a, source, prop)
        };

        let reward = reward_from_noise(&cfg.dgp, &features, kappa, action, std_noise);
        acc.update(&design(&features, action, kappa), reward)
            .expect("design dimension is fixed per episode");
        kappa_state.push(action);

        let forced = matches!(source, ActionSource::Warmup | ActionSource::Force);
        if source == ActionSource::Force {
            log.force_pulls.push(t);
        }
        log.steps.push(StepRecord {
            t,
            feature_hash: feature_hash(&features),
            context,
            action,
            forced,
            source,
            kappa,
            zeta,
            propensity,
            reward,
            eps,
            clip_stat,
        });

        while next_checkpoint.peek().is_some_and(|&&c| c <= t) {
            let c = *next_checkpoint.next().unwrap();
            if c == t {
                log.snapshots.push(snapshot(&acc, t, opts.sandwich));
            }
        }
    }
    log.final_theta_hat = acc.solve().ok();
    Ok(log)
}

fn snapshot(acc: &GramAccumulator, t: u64, with_sandwich: bool) -> Snapshot {
    let theta_hat = acc.solve().ok();
    let sandwich = match (&theta_hat, with_sandwich) {
        (Some(th), true) => acc.sandwich(th).ok().map(|s| s.matrix),
        _ => None,
    };
    Snapshot {
        t,
        theta_hat,
        sandwich,
    }
}

fn greedy_action(policy: PolicyKind, estimate: &[f64], features: &[f64], kappa: f64, zeta: f64) -> Action {
    match policy {
        PolicyKind::Naive => naive_action(estimate, features),
        PolicyKind::Front | PolicyKind::Myopic | PolicyKind::Oracle => {
            let theta = Theta::from_flat(estimate).expect("estimate has 2*d1+1 entries");
            if policy == PolicyKind::Myopic {
                myopic_action(&theta, features, kappa)
            } else {
                oracle_action(&theta, features, zeta)
            }
        }
    }
}

/// Shared ζ tables keyed by (scheme, horizon), for running many episodes.
pub fn shared_zeta_table(scheme: WeightScheme, horizon: u64) -> Result<Arc<ZetaTable>, RunError> {
    Ok(Arc::new(ZetaTable::new(scheme, horizon)?))
}
