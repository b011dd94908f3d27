use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use front_core::environment::replication_seed;
use front_core::metrics::{
    cumulative_average_reward, inference_eval, kappa_diagnostic, regret_ledger, regret_r1_coupled, InferenceReport,
    InferenceRun, MetricsError,
};
use front_core::runner::{run_episode_with, EpisodeLog, RunConfig, RunError, RunOptions};
use front_core::semisynth::{
    calibrate, fixture_records, ingest, replay, CalibrationReport, IngestReport, SemisynthError,
};
use front_core::{PolicyKind, WeightScheme, ZetaTable};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::config::{ConfigError, ExperimentSpec};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Run(#[from] RunError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Semisynth(#[from] SemisynthError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("worker pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Formats a value with 12 significant digits, then prints the shortest
/// decimal that reads back to the rounded value.
pub fn fmt_num(v: f64) -> String {
    if !v.is_finite() {
        return v.to_string();
    }
    let rounded: f64 = format!("{v:.11e}").parse().expect("formatted float parses");
    rounded.to_string()
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(io_err(path))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_file(path, text.as_bytes())
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(io_err(dir))
}

fn run_parallel<T, F>(workers: usize, count: u64, f: F) -> Result<Vec<T>, CliError>
where
    T: Send,
    F: Fn(u64) -> Result<T, CliError> + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new().num_threads(workers).build()?;
    pool.install(|| (0..count).into_par_iter().map(f).collect())
}

fn mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let (sum, n) = values.into_iter().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    sum / n as f64
}

/// Names of the coordinates of `(β₀, β₁, γ)`.
pub fn coordinate_names(d1: usize) -> Vec<String> {
    (0..d1)
        .map(|j| format!("beta0_{j}"))
        .chain((0..d1).map(|j| format!("beta1_{j}")))
        .chain(std::iter::once("gamma".to_string()))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckpointStats {
    pub t: u64,
    pub avg_reward: f64,
    pub r1: f64,
    pub r2: f64,
    pub r1_per_step: f64,
    pub r2_per_step: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolicySummary {
    pub policy: PolicyKind,
    pub seeds: Vec<u64>,
    /// Seed-averaged series.
    pub checkpoints: Vec<CheckpointStats>,
    /// Post-warm-up forced steps per replication.
    pub force_pulls: Vec<usize>,
    pub force_pulls_mean: f64,
    pub triggers_mean: f64,
    pub final_theta_hat_mean: Option<Vec<f64>>,
    pub kappa_tail_mean: f64,
    /// sd of κₜ over the tail of each replication.
    pub kappa_tail_sd: Vec<f64>,
    pub kappa_tail_sd_mean: f64,
    pub coupled_r1_mean: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulateSummary {
    pub horizon: u64,
    pub base_seed: u64,
    pub replications: u64,
    pub scheme: WeightScheme,
    pub checkpoints: Vec<u64>,
    pub policies: Vec<PolicySummary>,
}

impl SimulateSummary {
    pub fn policy(&self, p: PolicyKind) -> Option<&PolicySummary> {
        self.policies.iter().find(|s| s.policy == p)
    }
}

struct RepResult {
    seed: u64,
    rewards: Vec<f64>,
    r1: Vec<f64>,
    r2: Vec<f64>,
    force_pulls: usize,
    triggers: usize,
    final_theta: Option<Vec<f64>>,
    kappa: (f64, f64),
    coupled_r1: Option<f64>,
    steps_csv: Option<Vec<u8>>,
}

fn steps_csv(log: &EpisodeLog, r1: &[f64], r2: &[f64]) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["t", "action", "forced", "source", "kappa", "zeta", "reward", "eps", "r1_term", "r2_term"])?;
    for (i, s) in log.steps.iter().enumerate() {
        w.write_record([
            s.t.to_string(),
            s.action.to_string(),
            (s.forced as u8).to_string(),
            s.source.name().to_string(),
            fmt_num(s.kappa),
            fmt_num(s.zeta),
            fmt_num(s.reward),
            fmt_num(s.eps),
            fmt_num(r1[i]),
            fmt_num(r2[i]),
        ])?;
    }
    w.into_inner().map_err(|e| CliError::Csv(e.into_error().into()))
}

fn episode_config(spec: &ExperimentSpec, policy: PolicyKind, seed: u64) -> RunConfig {
    RunConfig {
        policy,
        seed,
        ..spec.run.clone()
    }
}

fn simulate_rep(spec: &ExperimentSpec, table: &ZetaTable, policy: PolicyKind, rep: u64) -> Result<RepResult, CliError> {
    let seed = replication_seed(spec.run.seed, rep);
    let cfg = episode_config(spec, policy, seed);
    let log = run_episode_with(&cfg, &RunOptions::default(), table)?;
    let ledger = regret_ledger(&log, &cfg.dgp.theta, table)?;
    let avg = cumulative_average_reward(&log);
    let at = |series: &[f64]| -> Vec<f64> { spec.checkpoints.iter().map(|&t| series[(t - 1) as usize]).collect() };
    let coupled_r1 = if spec.coupled_regret {
        let oracle = run_episode_with(&episode_config(spec, PolicyKind::Oracle, seed), &RunOptions::default(), table)?;
        Some(regret_r1_coupled(&log, &oracle, &cfg.dgp.theta))
    } else {
        None
    };
    let steps = if spec.write_steps {
        Some(steps_csv(&log, &ledger.r1_terms, &ledger.r2_terms)?)
    } else {
        None
    };
    Ok(RepResult {
        seed,
        rewards: at(&avg),
        r1: at(&ledger.r1_cumulative),
        r2: at(&ledger.r2_cumulative),
        force_pulls: log.force_pulls.len(),
        triggers: log.triggers.len(),
        final_theta: log.final_theta_hat.as_ref().map(|th| th.values.clone()),
        kappa: kappa_diagnostic(&log, spec.kappa_tail),
        coupled_r1,
        steps_csv: steps,
    })
}

fn summarize(spec: &ExperimentSpec, policy: PolicyKind, reps: &[RepResult]) -> PolicySummary {
    let checkpoints = spec
        .checkpoints
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let r1 = mean(reps.iter().map(|r| r.r1[i]));
            let r2 = mean(reps.iter().map(|r| r.r2[i]));
            CheckpointStats {
                t,
                avg_reward: mean(reps.iter().map(|r| r.rewards[i])),
                r1,
                r2,
                r1_per_step: r1 / t as f64,
                r2_per_step: r2 / t as f64,
            }
        })
        .collect();
    let thetas: Vec<&Vec<f64>> = reps.iter().filter_map(|r| r.final_theta.as_ref()).collect();
    let final_theta_hat_mean = thetas.first().map(|first| {
        (0..first.len())
            .map(|j| mean(thetas.iter().map(|th| th[j])))
            .collect()
    });
    PolicySummary {
        policy,
        seeds: reps.iter().map(|r| r.seed).collect(),
        checkpoints,
        force_pulls: reps.iter().map(|r| r.force_pulls).collect(),
        force_pulls_mean: mean(reps.iter().map(|r| r.force_pulls as f64)),
        triggers_mean: mean(reps.iter().map(|r| r.triggers as f64)),
        final_theta_hat_mean,
        kappa_tail_mean: mean(reps.iter().map(|r| r.kappa.0)),
        kappa_tail_sd: reps.iter().map(|r| r.kappa.1).collect(),
        kappa_tail_sd_mean: mean(reps.iter().map(|r| r.kappa.1)),
        coupled_r1_mean: spec
            .coupled_regret
            .then(|| mean(reps.iter().map(|r| r.coupled_r1.unwrap_or(f64::NAN)))),
    }
}

/// Runs every policy for every replication, writes per-step CSVs (when
/// enabled) and `summary.json`.
pub fn cmd_simulate(spec: &ExperimentSpec) -> Result<SimulateSummary, CliError> {
    spec.validate()?;
    ensure_dir(&spec.output_dir)?;
    let table = Arc::new(ZetaTable::new(spec.run.scheme, spec.run.horizon).map_err(RunError::from)?);
    let width = spec.replications.saturating_sub(1).to_string().len().max(3);
    let mut policies = Vec::with_capacity(spec.policies.len());
    for &policy in &spec.policies {
        let mut reps = run_parallel(spec.workers, spec.replications, |rep| simulate_rep(spec, &table, policy, rep))?;
        for (rep, r) in reps.iter_mut().enumerate() {
            if let Some(bytes) = r.steps_csv.take() {
                let path = spec.output_dir.join(format!("steps_{}_rep{rep:0width$}.csv", policy.name()));
                write_file(&path, &bytes)?;
            }
        }
        policies.push(summarize(spec, policy, &reps));
    }
    let summary = SimulateSummary {
        horizon: spec.run.horizon,
        base_seed: spec.run.seed,
        replications: spec.replications,
        scheme: spec.run.scheme,
        checkpoints: spec.checkpoints.clone(),
        policies,
    };
    write_json(&spec.output_dir.join("summary.json"), &summary)?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckpointInference {
    pub t: u64,
    /// Replications with an invertible Gram matrix at this checkpoint.
    pub usable_runs: usize,
    pub report: InferenceReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InferenceSummary {
    pub policy: PolicyKind,
    pub horizon: u64,
    pub base_seed: u64,
    pub replications: u64,
    pub scheme: WeightScheme,
    pub level: f64,
    pub coordinate_names: Vec<String>,
    pub checkpoints: Vec<CheckpointInference>,
}

impl InferenceSummary {
    pub fn at(&self, t: u64) -> Option<&CheckpointInference> {
        self.checkpoints.iter().find(|c| c.t == t)
    }
}

/// Monte Carlo evaluation of the sandwich intervals for FRONT: writes
/// `inference.json` and `inference.csv`.
pub fn cmd_infer(spec: &ExperimentSpec) -> Result<InferenceSummary, CliError> {
    spec.validate()?;
    if spec.policies != [PolicyKind::Front] {
        return Err(ConfigError::new("policies", "inference runs FRONT only").into());
    }
    ensure_dir(&spec.output_dir)?;
    let table = ZetaTable::new(spec.run.scheme, spec.run.horizon).map_err(RunError::from)?;
    let opts = RunOptions {
        checkpoints: spec.checkpoints.clone(),
        sandwich: true,
        record_clip_stat: false,
    };
    let per_rep = run_parallel(spec.workers, spec.replications, |rep| {
        let cfg = episode_config(spec, PolicyKind::Front, replication_seed(spec.run.seed, rep));
        let log = run_episode_with(&cfg, &opts, &table)?;
        Ok(log
            .snapshots
            .into_iter()
            .map(|s| match (s.theta_hat, s.sandwich) {
                (Some(th), Some(cov)) => Some(InferenceRun {
                    theta_hat: th.values,
                    cov,
                    t: s.t as usize,
                }),
                _ => None,
            })
            .collect::<Vec<_>>())
    })?;

    let truth = spec.run.dgp.theta.to_flat();
    let names = coordinate_names(spec.run.dgp.theta.feature_dim());
    let mut checkpoints = Vec::with_capacity(spec.checkpoints.len());
    for (i, &t) in spec.checkpoints.iter().enumerate() {
        let runs: Vec<InferenceRun> = per_rep.iter().filter_map(|snaps| snaps[i].clone()).collect();
        if runs.is_empty() {
            continue;
        }
        checkpoints.push(CheckpointInference {
            t,
            usable_runs: runs.len(),
            report: inference_eval(&runs, &truth, spec.level)?,
        });
    }
    let summary = InferenceSummary {
        policy: PolicyKind::Front,
        horizon: spec.run.horizon,
        base_seed: spec.run.seed,
        replications: spec.replications,
        scheme: spec.run.scheme,
        level: spec.level,
        coordinate_names: names.clone(),
        checkpoints,
    };

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "checkpoint",
        "coord",
        "name",
        "truth",
        "mean_estimate",
        "bias",
        "mcsd",
        "mean_se",
        "ratio",
        "coverage",
        "degenerate",
    ])?;
    for c in &summary.checkpoints {
        for coord in &c.report.coordinates {
            w.write_record([
                c.t.to_string(),
                coord.index.to_string(),
                names[coord.index].clone(),
                fmt_num(coord.truth),
                fmt_num(coord.mean_estimate),
                fmt_num(coord.bias),
                fmt_num(coord.mcsd),
                fmt_num(coord.mean_se),
                coord.se_mcsd_ratio.map(fmt_num).unwrap_or_default(),
                fmt_num(coord.coverage),
                (coord.degenerate_mcsd as u8).to_string(),
            ])?;
        }
    }
    let bytes = w.into_inner().map_err(|e| CliError::Csv(e.into_error().into()))?;
    write_file(&spec.output_dir.join("inference.csv"), &bytes)?;
    write_json(&spec.output_dir.join("inference.json"), &summary)?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ZetaRow {
    pub t: u64,
    pub zeta: Option<f64>,
    pub error: Option<String>,
}

/// ζₜ at each requested `t`; failures are reported on their own row.
pub fn zeta_rows(scheme: &WeightScheme, t_list: &[u64]) -> Vec<ZetaRow> {
    t_list
        .iter()
        .map(|&t| match scheme.zeta(t) {
            Ok(z) => ZetaRow {
                t,
                zeta: Some(z),
                error: None,
            },
            Err(e) => ZetaRow {
                t,
                zeta: None,
                error: Some(e.to_string()),
            },
        })
        .collect()
}

/// Writes `zeta.csv` with columns `t, zeta, error`.
pub fn cmd_zeta(scheme: &WeightScheme, t_list: &[u64], out_dir: &Path) -> Result<Vec<ZetaRow>, CliError> {
    if t_list.is_empty() {
        return Err(ConfigError::new("t_list", "is empty").into());
    }
    scheme
        .validate()
        .map_err(|e| ConfigError::new("scheme", e.to_string()))?;
    ensure_dir(out_dir)?;
    let rows = zeta_rows(scheme, t_list);
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["t", "zeta", "error"])?;
    for r in &rows {
        w.write_record([
            r.t.to_string(),
            r.zeta.map(fmt_num).unwrap_or_default(),
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Csv(e.into_error().into()))?;
    write_file(&out_dir.join("zeta.csv"), &bytes)?;
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProfitSummary {
    pub policy: PolicyKind,
    /// Seed-averaged cumulative average profit at the horizon.
    pub final_avg_profit: f64,
    /// Mean of the seed-averaged series over the last quarter of steps.
    pub tail_avg_profit: f64,
    pub force_pulls_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SemisynthSummary {
    pub source: String,
    pub horizon: u64,
    pub base_seed: u64,
    pub replications: u64,
    pub ingest: IngestReport,
    pub calibration: CalibrationReport,
    pub policies: Vec<ProfitSummary>,
    #[serde(skip)]
    pub series: Vec<Vec<f64>>,
}

impl SemisynthSummary {
    pub fn policy(&self, p: PolicyKind) -> Option<&ProfitSummary> {
        self.policies.iter().find(|s| s.policy == p)
    }
}

/// Ingest, calibrate, and replay every policy; writes `calibration.json`,
/// `profit.csv` (seed-averaged cumulative average profit per policy), and
/// `summary.json`. Uses the bundled fixture when no data path is set.
pub fn cmd_semisynth(spec: &ExperimentSpec) -> Result<SemisynthSummary, CliError> {
    spec.validate()?;
    ensure_dir(&spec.output_dir)?;
    let (records, report, source) = match &spec.data {
        Some(path) => {
            let (r, rep) = ingest(path, &spec.columns)?;
            (r, rep, path.display().to_string())
        }
        None => {
            let (r, rep) = fixture_records();
            (r, rep, "bundled fixture".to_string())
        }
    };
    let model = calibrate(&records, spec.run.scheme)?;
    let calibration = model.report();
    write_json(
        &spec.output_dir.join("calibration.json"),
        &serde_json::json!({ "source": source, "ingest": report, "model": calibration }),
    )?;

    let base = RunConfig {
        scheme: model.scheme,
        dgp: model.dgp(),
        ..spec.run.clone()
    };
    let table = ZetaTable::new(model.scheme, base.horizon).map_err(RunError::from)?;
    let horizon = base.horizon as usize;
    let mut policies = Vec::with_capacity(spec.policies.len());
    let mut series = Vec::with_capacity(spec.policies.len());
    for &policy in &spec.policies {
        let reps = run_parallel(spec.workers, spec.replications, |rep| {
            let cfg = RunConfig {
                policy,
                seed: replication_seed(spec.run.seed, rep),
                ..base.clone()
            };
            let log = replay(&model, &cfg, &table)?;
            Ok((cumulative_average_reward(&log), log.force_pulls.len()))
        })?;
        let averaged: Vec<f64> = (0..horizon).map(|i| mean(reps.iter().map(|(s, _)| s[i]))).collect();
        let tail_start = horizon - horizon / 4;
        policies.push(ProfitSummary {
            policy,
            final_avg_profit: averaged[horizon - 1],
            tail_avg_profit: mean(averaged[tail_start..].iter().copied()),
            force_pulls_mean: mean(reps.iter().map(|(_, f)| *f as f64)),
        });
        series.push(averaged);
    }

    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["t".to_string()];
    header.extend(spec.policies.iter().map(|p| p.name().to_string()));
    w.write_record(&header)?;
    for i in 0..horizon {
        let mut row = vec![(i + 1).to_string()];
        row.extend(series.iter().map(|s| fmt_num(s[i])));
        w.write_record(&row)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Csv(e.into_error().into()))?;
    write_file(&spec.output_dir.join("profit.csv"), &bytes)?;

    let summary = SemisynthSummary {
        source,
        horizon: base.horizon,
        base_seed: spec.run.seed,
        replications: spec.replications,
        ingest: report,
        calibration,
        policies,
        series,
    };
    write_json(&spec.output_dir.join("summary.json"), &summary)?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twelve_significant_digits() {
        assert_eq!(fmt_num(0.1), "0.1");
        assert_eq!(fmt_num(1.0 / 3.0), "0.333333333333");
        assert_eq!(fmt_num(2.0), "2");
        assert_eq!(fmt_num(-1234.56789012345), "-1234.56789012");
        assert_eq!(fmt_num(1e-20 / 3.0), "0.00000000000000000000333333333333");
    }

    #[test]
    fn names_cover_all_coordinates() {
        let n = coordinate_names(6);
        assert_eq!(n.len(), 13);
        assert_eq!(n[0], "beta0_0");
        assert_eq!(n[6], "beta1_0");
        assert_eq!(n[12], "gamma");
    }
}
