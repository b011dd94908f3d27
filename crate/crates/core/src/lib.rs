//! Sequential decision making when past actions shift future outcomes:
//! interference weights, online least squares with sandwich inference,
//! a clipped ε-greedy exploration loop, and regret accounting.

pub mod environment;
pub mod estimator;
pub mod features;
pub mod interference;
pub mod linalg;
pub mod metrics;
pub mod policies;
pub mod runner;
pub mod semisynth;

pub use environment::{ContextLaw, DgpSpec, Theta};
pub use estimator::{GramAccumulator, SandwichCov, ThetaHat};
pub use features::{Action, Context, QuadraticFeatureMap};
pub use interference::{KappaState, WeightScheme, ZetaTable};
pub use policies::PolicyKind;
pub use runner::{run_episode, run_episode_with, EpisodeLog, RunConfig, RunOptions};
