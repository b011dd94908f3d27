//! Decision rules. Every rule breaks an exact-zero score toward action 1.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::environment::{mean_reward, Theta};
use crate::features::{dot, Action};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    /// Knows θ and acts on `φᵀ(β₁−β₀) + ζₜγ`.
    Oracle,
    /// Plug-in version of the oracle rule under ε-greedy exploration.
    Front,
    /// Maximizes the estimated immediate reward only.
    Myopic,
    /// Fits a model without the interference term.
    Naive,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 4] = [
        PolicyKind::Oracle,
        PolicyKind::Front,
        PolicyKind::Myopic,
        PolicyKind::Naive,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            PolicyKind::Oracle => "oracle",
            PolicyKind::Front => "front",
            PolicyKind::Myopic => "myopic",
            PolicyKind::Naive => "naive",
        }
    }

    /// Stable index used to pick the exploration stream.
    pub fn code(&self) -> u64 {
        match self {
            PolicyKind::Oracle => 0,
            PolicyKind::Front => 1,
            PolicyKind::Myopic => 2,
            PolicyKind::Naive => 3,
        }
    }

    /// Whether the policy fits the interference column.
    pub fn models_interference(&self) -> bool {
        !matches!(self, PolicyKind::Naive)
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "oracle" | "optimal" => Ok(PolicyKind::Oracle),
            "front" => Ok(PolicyKind::Front),
            "myopic" => Ok(PolicyKind::Myopic),
            "naive" => Ok(PolicyKind::Naive),
            other => Err(format!(
                "unknown policy '{other}' (expected oracle, front, myopic, naive)"
            )),
        }
    }
}

#[inline]
fn indicator(score: f64) -> Action {
    (score >= 0.0) as Action
}

/// `𝕀{φᵀ(β₁−β₀) + ζₜγ ≥ 0}`
pub fn oracle_action(theta: &Theta, features: &[f64], zeta: f64) -> Action {
    indicator(theta.treatment_score(features) + zeta * theta.gamma)
}

/// `(1−ε)·greedy + ε/2`
pub fn epsilon_greedy_propensity(greedy: Action, eps: f64) -> f64 {
    (1.0 - eps) * greedy as f64 + eps / 2.0
}

/// `π̂ = (1−ε)𝕀{φᵀ(β̂₁−β̂₀) + ζₜγ̂ ≥ 0} + ε/2`
pub fn front_propensity(theta_hat: &Theta, features: &[f64], zeta: f64, eps: f64) -> f64 {
    epsilon_greedy_propensity(oracle_action(theta_hat, features, zeta), eps)
}

/// `𝕀{μ̂(x,κ,1) − μ̂(x,κ,0) ≥ 0}`. The `κγ̂` terms cancel in the difference.
pub fn myopic_action(theta_hat: &Theta, features: &[f64], kappa: f64) -> Action {
    indicator(mean_reward(theta_hat, features, kappa, 1) - mean_reward(theta_hat, features, kappa, 0))
}

/// `𝕀{φᵀ(β̃₁−β̃₀) ≥ 0}` for the κ-free model with coefficients `(β̃₀ᵀ, β̃₁ᵀ)`.
pub fn naive_action(theta_naive: &[f64], features: &[f64]) -> Action {
    let d1 = features.len();
    assert_eq!(theta_naive.len(), 2 * d1, "naive model must have 2*d1 coefficients");
    indicator(dot(features, &theta_naive[d1..]) - dot(features, &theta_naive[..d1]))
}
