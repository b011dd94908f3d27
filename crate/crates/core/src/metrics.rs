//! Regret accounting, reward curves, κₜ diagnostics, and the Monte Carlo
//! inference summary.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::environment::{mean_reward, Theta};
use crate::estimator::{normal_critical_value, EstimatorError, VARIANCE_TOLERANCE};
use crate::features::QuadraticFeatureMap;
use crate::interference::ZetaTable;
use crate::linalg::SymMatrix;
use crate::policies::oracle_action;
use crate::runner::EpisodeLog;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("inference summary needs at least one run")]
    NoRuns,
    #[error("runs are at different sample sizes ({0} and {1})")]
    MixedTimes(usize, usize),
    #[error("run {run} has {got} coordinates, expected {expected}")]
    DimensionMismatch { run: usize, expected: usize, got: usize },
    #[error("log horizon {log} does not match zeta table horizon {table}")]
    HorizonMismatch { log: u64, table: u64 },
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
}

/// Per-step and cumulative regrets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretLedger {
    pub r1_terms: Vec<f64>,
    pub r2_terms: Vec<f64>,
    pub r1_cumulative: Vec<f64>,
    pub r2_cumulative: Vec<f64>,
}

impl RegretLedger {
    pub fn r1_at(&self, t: u64) -> f64 {
        self.r1_cumulative[(t - 1) as usize]
    }

    pub fn r2_at(&self, t: u64) -> f64 {
        self.r2_cumulative[(t - 1) as usize]
    }
}

fn cumulative(terms: &[f64]) -> Vec<f64> {
    terms
        .iter()
        .scan(0.0, |acc, v| {
            *acc += v;
            Some(*acc)
        })
        .collect()
}

fn check_horizon(log: &EpisodeLog, table: &ZetaTable) -> Result<(), MetricsError> {
    if log.horizon() != table.horizon() {
        return Err(MetricsError::HorizonMismatch {
            log: log.horizon(),
            table: table.horizon(),
        });
    }
    Ok(())
}

/// Shared mismatch indicator `𝕀{a_t ≠ 𝕀(φᵀ(β₁−β₀) + ζ_tγ ≥ 0)}` together
/// with the treatment score `φᵀ(β₁−β₀)`.
fn mismatches<'a>(
    log: &'a EpisodeLog,
    theta: &'a Theta,
    table: &'a ZetaTable,
) -> impl Iterator<Item = (u64, f64, bool)> + 'a {
    log.steps.iter().map(move |s| {
        let f = QuadraticFeatureMap::new(s.context.dim()).apply(&s.context);
        let zeta = table.zeta(s.t);
        let score = theta.treatment_score(&f);
        (s.t, score, s.action != oracle_action(theta, &f, zeta))
    })
}

/// Per-step `|φᵀ(β₁−β₀) + ζ_t^{(T)}γ| · mismatch_t` with ζ truncated at T.
pub fn regret_r1(log: &EpisodeLog, theta: &Theta, table: &ZetaTable) -> Result<Vec<f64>, MetricsError> {
    check_horizon(log, table)?;
    Ok(mismatches(log, theta, table)
        .map(|(t, score, wrong)| {
            if wrong {
                (score + table.zeta_truncated(t) * theta.gamma).abs()
            } else {
                0.0
            }
        })
        .collect())
}

/// Per-step `|φᵀ(β₁−β₀) + ζ_tγ| · mismatch_t`.
pub fn regret_r2(log: &EpisodeLog, theta: &Theta, table: &ZetaTable) -> Result<Vec<f64>, MetricsError> {
    check_horizon(log, table)?;
    Ok(mismatches(log, theta, table)
        .map(|(t, score, wrong)| {
            if wrong {
                (score + table.zeta(t) * theta.gamma).abs()
            } else {
                0.0
            }
        })
        .collect())
}

pub fn regret_ledger(log: &EpisodeLog, theta: &Theta, table: &ZetaTable) -> Result<RegretLedger, MetricsError> {
    let r1_terms = regret_r1(log, theta, table)?;
    let r2_terms = regret_r2(log, theta, table)?;
    Ok(RegretLedger {
        r1_cumulative: cumulative(&r1_terms),
        r2_cumulative: cumulative(&r2_terms),
        r1_terms,
        r2_terms,
    })
}

/// Realized-by-T regret from a coupled oracle episode on the same contexts:
/// `Σ_t μ(x_t, κ*_t, a*_t) − μ(x_t, κ_t, a_t)`.
///
/// Equals the sum of *signed* terms `(a*_t − a_t)(φᵀ(β₁−β₀) + ζ_t^{(T)}γ)`;
/// it matches [`regret_r1`] whenever no truncated score changes sign.
pub fn regret_r1_coupled(log: &EpisodeLog, oracle_log: &EpisodeLog, theta: &Theta) -> f64 {
    assert_eq!(log.steps.len(), oracle_log.steps.len(), "logs must share a horizon");
    log.steps
        .iter()
        .zip(&oracle_log.steps)
        .map(|(s, o)| {
            assert_eq!(s.context, o.context, "coupled logs must share the context stream");
            let f = QuadraticFeatureMap::new(s.context.dim()).apply(&s.context);
            mean_reward(theta, &f, o.kappa, o.action) - mean_reward(theta, &f, s.kappa, s.action)
        })
        .sum()
}

/// Prefix means of the logged rewards.
pub fn cumulative_average_reward(log: &EpisodeLog) -> Vec<f64> {
    let mut total = 0.0;
    log.steps
        .iter()
        .enumerate()
        .map(|(i, s)| {
            total += s.reward;
            total / (i + 1) as f64
        })
        .collect()
}

/// Mean and sample standard deviation of κₜ over the last `tail_fraction`
/// of the steps.
pub fn kappa_diagnostic(log: &EpisodeLog, tail_fraction: f64) -> (f64, f64) {
    assert!(tail_fraction > 0.0 && tail_fraction < 1.0, "tail fraction must lie in (0, 1)");
    let n = log.steps.len();
    let keep = ((n as f64 * tail_fraction).ceil() as usize).clamp(1, n);
    let tail: Vec<f64> = log.steps[n - keep..].iter().map(|s| s.kappa).collect();
    mean_sd(&tail)
}

/// Mean and sample (n−1) standard deviation; sd is 0 for fewer than two values.
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

/// One replication's estimate and covariance at sample size `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct InferenceRun {
    pub theta_hat: Vec<f64>,
    pub cov: SymMatrix,
    pub t: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoordinateSummary {
    pub index: usize,
    pub truth: f64,
    pub mean_estimate: f64,
    pub bias: f64,
    pub mcsd: f64,
    pub mean_se: f64,
    /// `None` when the Monte Carlo sd is zero.
    pub se_mcsd_ratio: Option<f64>,
    pub coverage: f64,
    pub degenerate_mcsd: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceReport {
    pub t: usize,
    pub level: f64,
    pub replications: usize,
    pub coordinates: Vec<CoordinateSummary>,
}

impl InferenceReport {
    pub fn degenerate_coordinates(&self) -> Vec<usize> {
        self.coordinates
            .iter()
            .filter(|c| c.degenerate_mcsd)
            .map(|c| c.index)
            .collect()
    }
}

/// Bias, Monte Carlo sd, mean standard error, their ratio, and Wald
/// coverage for every coordinate. A single run has no spread, so every
/// coordinate comes back flagged as degenerate.
pub fn inference_eval(runs: &[InferenceRun], truth: &[f64], level: f64) -> Result<InferenceReport, MetricsError> {
    if runs.is_empty() {
        return Err(MetricsError::NoRuns);
    }
    let t = runs[0].t;
    let d = truth.len();
    for (i, r) in runs.iter().enumerate() {
        if r.t != t {
            return Err(MetricsError::MixedTimes(t, r.t));
        }
        if r.theta_hat.len() != d || r.cov.dim() != d {
            return Err(MetricsError::DimensionMismatch {
                run: i,
                expected: d,
                got: r.theta_hat.len(),
            });
        }
    }
    let z = normal_critical_value(level)?;
    let mut coordinates = Vec::with_capacity(d);
    for (j, &truth_j) in truth.iter().enumerate() {
        let estimates: Vec<f64> = runs.iter().map(|r| r.theta_hat[j]).collect();
        let (mean_estimate, mut mcsd) = mean_sd(&estimates);
        // rounding in the mean can leave a tiny spread among identical values
        if estimates.iter().all(|v| *v == estimates[0]) {
            mcsd = 0.0;
        }
        let mut se_sum = 0.0;
        let mut covered = 0usize;
        for r in runs {
            let var = r.cov.get(j, j);
            if var < -VARIANCE_TOLERANCE {
                return Err(EstimatorError::NonPositiveVariance { index: j, value: var }.into());
            }
            let se = (var.max(0.0) / t as f64).sqrt();
            se_sum += se;
            if (r.theta_hat[j] - truth_j).abs() <= z * se {
                covered += 1;
            }
        }
        let mean_se = se_sum / runs.len() as f64;
        let degenerate = mcsd == 0.0;
        coordinates.push(CoordinateSummary {
            index: j,
            truth: truth_j,
            mean_estimate,
            bias: mean_estimate - truth_j,
            mcsd,
            mean_se,
            se_mcsd_ratio: if degenerate { None } else { Some(mean_se / mcsd) },
            coverage: covered as f64 / runs.len() as f64,
            degenerate_mcsd: degenerate,
        });
    }
    Ok(InferenceReport {
        t,
        level,
        replications: runs.len(),
        coordinates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::Context;
    use crate::interference::WeightScheme;
    use crate::policies::PolicyKind;
    use crate::runner::{ActionSource, StepRecord};

    fn step(t: u64, x1: f64, x2: f64, action: u8, reward: f64, kappa: f64) -> StepRecord {
        StepRecord {
            t,
            context: Context::pair(x1, x2),
            feature_hash: 0,
            action,
            forced: false,
            source: ActionSource::Policy,
            kappa,
            zeta: 0.0,
            propensity: action as f64,
            reward,
            eps: 0.0,
            clip_stat: None,
        }
    }

    fn log_of(steps: Vec<StepRecord>) -> EpisodeLog {
        EpisodeLog {
            policy: PolicyKind::Front,
            seed: 0,
            scheme: WeightScheme::FixedWindow { window: 2 },
            steps,
            snapshots: vec![],
            force_pulls: vec![],
            triggers: vec![],
            final_theta_hat: None,
        }
    }

    #[test]
    fn hand_built_three_step_regret() {
        // FixedWindow(2), T = 3: ζ_t = 1; truncated ζ = (1, 0.5, 0).
        // Intercept-only context (0, 0): score = β₁[0] − β₀[0] = -0.1, γ = 0.6,
        // so a* = 1{-0.1 + 0.6 ≥ 0} = 1 at every step.
        let theta = Theta::simulation_default();
        let table = ZetaTable::new(WeightScheme::FixedWindow { window: 2 }, 3).unwrap();
        let log = log_of(vec![
            step(1, 0.0, 0.0, 0, 0.0, 0.0),
            step(2, 0.0, 0.0, 1, 0.0, 0.0),
            step(3, 0.0, 0.0, 0, 0.0, 0.5),
        ]);
        let l = regret_ledger(&log, &theta, &table).unwrap();
        // R1 terms: |−0.1 + 0.6·1| = 0.5, 0, |−0.1 + 0| = 0.1
        assert!((l.r1_terms[0] - 0.5).abs() < 1e-12);
        assert_eq!(l.r1_terms[1], 0.0);
        assert!((l.r1_terms[2] - 0.1).abs() < 1e-12);
        // R2 terms: 0.5, 0, 0.5
        assert!((l.r2_at(3) - 1.0).abs() < 1e-12);
        assert!((l.r1_at(3) - 0.6).abs() < 1e-12);
    }

    #[test]
    fn single_wrong_step_adds_its_score() {
        // x = (0.5, 0): φ = (1, .5, 0, .25, 0, 0), score = −0.1 + 0.4 − 0.2 = 0.1;
        // with γ = 0 the oracle picks 1 and a wrong 0 costs exactly 0.1... use γ=0.3, ζ=1 → 0.4
        let mut theta = Theta::simulation_default();
        theta.gamma = 0.3;
        let table = ZetaTable::new(WeightScheme::FixedWindow { window: 1 }, 1).unwrap();
        let log = log_of(vec![step(1, 0.5, 0.0, 0, 0.0, 0.0)]);
        let r2 = regret_r2(&log, &theta, &table).unwrap();
        assert!((r2[0] - 0.4).abs() < 1e-12);
    }

    #[test]
    fn cumulative_rewards() {
        let log = log_of(vec![step(1, 0.0, 0.0, 0, 0.0, 0.0), step(2, 0.0, 0.0, 0, 2.0, 0.0)]);
        assert_eq!(cumulative_average_reward(&log), vec![0.0, 1.0]);
        let ones = log_of((1..=5).map(|t| step(t, 0.0, 0.0, 0, 1.0, 0.0)).collect());
        assert_eq!(cumulative_average_reward(&ones), vec![1.0; 5]);
    }

    #[test]
    fn kappa_diagnostic_on_constant_log() {
        let log = log_of((1..=50).map(|t| step(t, 0.0, 0.0, 1, 1.0, 1.0)).collect());
        assert_eq!(kappa_diagnostic(&log, 0.1), (1.0, 0.0));
    }

    #[test]
    fn identical_runs_are_degenerate() {
        let run = InferenceRun {
            theta_hat: vec![1.0, 2.0],
            cov: SymMatrix::identity(2),
            t: 100,
        };
        let report = inference_eval(&[run.clone(), run.clone(), run], &[1.0, 2.0], 0.95).unwrap();
        assert_eq!(report.degenerate_coordinates(), vec![0, 1]);
        assert!(report.coordinates.iter().all(|c| c.se_mcsd_ratio.is_none()));
        assert!(report.coordinates.iter().all(|c| c.coverage == 1.0));
    }

    #[test]
    fn inference_input_errors() {
        let run = InferenceRun {
            theta_hat: vec![1.0],
            cov: SymMatrix::identity(1),
            t: 10,
        };
        assert_eq!(inference_eval(&[], &[1.0], 0.95), Err(MetricsError::NoRuns));
        let single = inference_eval(&[run.clone()], &[1.0], 0.95).unwrap();
        assert_eq!(single.degenerate_coordinates(), vec![0]);
        let other = InferenceRun { t: 11, ..run.clone() };
        assert!(matches!(
            inference_eval(&[run, other], &[1.0], 0.95),
            Err(MetricsError::MixedTimes(10, 11))
        ));
    }
}
