use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use front_cli::config::{parse_policy_list, parse_scheme, parse_t_list};
use front_cli::{cmd_infer, cmd_semisynth, cmd_simulate, cmd_zeta, parse_config, CliError, ConfigError, Overrides, Profile};
use front_core::WeightScheme;

#[derive(Parser)]
#[command(name = "front", version, about = "Online policy experiments under temporal interference")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Subcommand)]
enum Command {
    /// Run every policy for every replication; write step logs and a summary.
    Simulate,
    /// Monte Carlo coverage of the sandwich Wald intervals.
    Infer,
    /// Tabulate ζₜ for a weight scheme.
    Zeta,
    /// Calibrate on hotel records and replay the policies.
    Semisynth,
}

#[derive(Args)]
struct Common {
    /// TOML config file with dotted sections.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    reps: Option<u64>,
    /// Comma-separated policy names.
    #[arg(long, global = true)]
    policy: Option<String>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Hotel records CSV (semisynth).
    #[arg(long, global = true)]
    data: Option<PathBuf>,
    /// `t1,t2,...` or `start:end:step` (zeta).
    #[arg(long = "t-list", global = true)]
    t_list: Option<String>,
    /// Worker threads for replications.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// e.g. `growing_linear:0.2`, `fixed_window:20`, `growing_power:20,0.2`.
    #[arg(long, global = true, value_parser = parse_scheme)]
    scheme: Option<WeightScheme>,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let c = cli.common;
    let policies = c
        .policy
        .map(|s| parse_policy_list(&s).map_err(|m| ConfigError::new("--policy", m)))
        .transpose()?;
    let t_list = c
        .t_list
        .map(|s| parse_t_list(&s).map_err(|m| ConfigError::new("--t-list", m)))
        .transpose()?;
    let overrides = Overrides {
        seed: c.seed,
        reps: c.reps,
        policies,
        out: c.out,
        data: c.data,
        t_list,
        workers: c.workers,
        scheme: c.scheme,
    };
    let profile = match cli.command {
        Command::Simulate => Profile::Simulate,
        Command::Infer => Profile::Infer,
        Command::Zeta => Profile::Zeta,
        Command::Semisynth => Profile::Semisynth,
    };
    let spec = parse_config(c.config.as_deref(), &overrides, profile)?;
    let out = spec.output_dir.display();
    match profile {
        Profile::Simulate => {
            let s = cmd_simulate(&spec)?;
            for p in &s.policies {
                let last = p.checkpoints.last().expect("at least one checkpoint");
                println!(
                    "{:<7} avg reward {:.4}  R1/T {:.4}  R2/T {:.4}  force pulls {:.1}",
                    p.policy.name(),
                    last.avg_reward,
                    last.r1_per_step,
                    last.r2_per_step,
                    p.force_pulls_mean
                );
            }
        }
        Profile::Infer => {
            let s = cmd_infer(&spec)?;
            for c in &s.checkpoints {
                let cov: Vec<f64> = c.report.coordinates.iter().map(|x| x.coverage).collect();
                let lo = cov.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = cov.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                println!("t={:<7} runs {:<5} coverage [{lo:.3}, {hi:.3}]", c.t, c.usable_runs);
            }
        }
        Profile::Zeta => {
            for r in cmd_zeta(&spec.run.scheme, &spec.t_list, &spec.output_dir)? {
                match (r.zeta, r.error) {
                    (Some(z), _) => println!("{:>10}  {z:.6}", r.t),
                    (None, e) => println!("{:>10}  error: {}", r.t, e.unwrap_or_default()),
                }
            }
        }
        Profile::Semisynth => {
            let s = cmd_semisynth(&spec)?;
            println!("{}: {} rows retained, {} dropped", s.source, s.ingest.retained, s.ingest.dropped.len());
            for p in &s.policies {
                println!(
                    "{:<7} avg profit {:.3}  last-quarter mean {:.3}",
                    p.policy.name(),
                    p.final_avg_profit,
                    p.tail_avg_profit
                );
            }
        }
    }
    eprintln!("wrote {out}");
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
