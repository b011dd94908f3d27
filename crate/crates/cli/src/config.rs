//! Experiment configuration: built-in defaults per subcommand, then a flat
//! TOML file with dotted sections, then command-line overrides.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use front_core::environment::{ContextLaw, Theta};
use front_core::runner::{EpsSchedule, RunConfig, RunError};
use front_core::semisynth::ColumnMap;
use front_core::{PolicyKind, WeightScheme};
use thiserror::Error;
use toml::Value;

#[derive(Debug, Clone, PartialEq, Error)]
#[error("config key `{key}`: {message}")]
pub struct ConfigError {
    pub key: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(key: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            key: key.into(),
            message: message.into(),
        }
    }
}

impl From<RunError> for ConfigError {
    fn from(e: RunError) -> Self {
        match e {
            RunError::Config { key, message } => ConfigError { key, message },
            other => ConfigError::new("scheme", other.to_string()),
        }
    }
}

/// Which subcommand the spec is for; each has its own defaults.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Profile {
    Simulate,
    Infer,
    Zeta,
    Semisynth,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    /// Base run configuration; `policy` and `seed` are set per replication.
    pub run: RunConfig,
    pub replications: u64,
    pub checkpoints: Vec<u64>,
    pub output_dir: PathBuf,
    pub policies: Vec<PolicyKind>,
    pub workers: usize,
    /// Wald interval level.
    pub level: f64,
    /// Write one CSV per (policy, replication).
    pub write_steps: bool,
    /// Also compute regret against a coupled oracle episode.
    pub coupled_regret: bool,
    /// Fraction of steps used by the κ diagnostic.
    pub kappa_tail: f64,
    pub columns: ColumnMap,
    pub data: Option<PathBuf>,
    pub t_list: Vec<u64>,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub reps: Option<u64>,
    pub policies: Option<Vec<PolicyKind>>,
    pub out: Option<PathBuf>,
    pub data: Option<PathBuf>,
    pub t_list: Option<Vec<u64>>,
    pub workers: Option<usize>,
    pub scheme: Option<WeightScheme>,
}

/// `{T/16, T/8, T/4, T/2, T}` without zeros or duplicates.
pub fn default_checkpoints(horizon: u64) -> Vec<u64> {
    let mut v: Vec<u64> = [16, 8, 4, 2, 1].iter().map(|d| horizon / d).filter(|&t| t > 0).collect();
    v.dedup();
    v
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

impl ExperimentSpec {
    pub fn defaults(profile: Profile) -> Self {
        let mut run = RunConfig::default();
        let mut replications = 20;
        let mut policies = PolicyKind::ALL.to_vec();
        match profile {
            Profile::Simulate | Profile::Zeta => {}
            Profile::Infer => {
                run.horizon = 5000;
                replications = 200;
                policies = vec![PolicyKind::Front];
            }
            Profile::Semisynth => {
                run.horizon = 20_000;
                run.warmup = 200;
                run.scheme = WeightScheme::GrowingSqrt { rho: 5.0 };
            }
        }
        Self {
            checkpoints: default_checkpoints(run.horizon),
            run,
            replications,
            output_dir: PathBuf::from("out"),
            policies,
            workers: default_workers(),
            level: 0.95,
            write_steps: profile == Profile::Simulate,
            coupled_regret: false,
            kappa_tail: 0.1,
            columns: ColumnMap::default(),
            data: None,
            t_list: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.run.validate()?;
        if self.replications == 0 {
            return Err(ConfigError::new("reps", "must be at least 1"));
        }
        if self.policies.is_empty() {
            return Err(ConfigError::new("policies", "list is empty"));
        }
        if let Some(&c) = self.checkpoints.iter().find(|&&c| c == 0 || c > self.run.horizon) {
            return Err(ConfigError::new(
                "checkpoints",
                format!("{c} is outside [1, {}]", self.run.horizon),
            ));
        }
        if self.workers == 0 {
            return Err(ConfigError::new("workers", "must be at least 1"));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(ConfigError::new("level", "must lie in (0, 1)"));
        }
        if !(self.kappa_tail > 0.0 && self.kappa_tail < 1.0) {
            return Err(ConfigError::new("kappa_tail", "must lie in (0, 1)"));
        }
        Ok(())
    }
}

/// Reads an optional config file, applies overrides, and validates.
pub fn parse_config(path: Option<&Path>, overrides: &Overrides, profile: Profile) -> Result<ExperimentSpec, ConfigError> {
    let text = match path {
        Some(p) => fs::read_to_string(p).map_err(|e| ConfigError::new("--config", format!("{}: {e}", p.display())))?,
        None => String::new(),
    };
    parse_config_str(&text, overrides, profile)
}

pub fn parse_config_str(text: &str, overrides: &Overrides, profile: Profile) -> Result<ExperimentSpec, ConfigError> {
    let table: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| ConfigError::new("--config", e.message().to_string()))?;
    let mut flat = BTreeMap::new();
    flatten("", &table, &mut flat);

    let mut spec = ExperimentSpec::defaults(profile);
    let mut checkpoints_set = false;
    let mut scheme_keys = BTreeMap::new();
    let mut eps_keys = BTreeMap::new();
    let mut law_keys = BTreeMap::new();

    for (key, value) in &flat {
        let k = key.as_str();
        match k {
            "horizon" => spec.run.horizon = get_u64(k, value)?,
            "warmup" => spec.run.warmup = get_u64(k, value)?,
            "intervals" => spec.run.intervals = get_u64(k, value)?,
            "force_pulls" => spec.run.force_pulls = get_u64(k, value)?,
            "clip" => spec.run.clip = get_f64(k, value)?,
            "kappa0" => spec.run.kappa0 = get_f64(k, value)?,
            "seed" => spec.run.seed = get_u64(k, value)?,
            "reps" => spec.replications = get_u64(k, value)?,
            "workers" => spec.workers = get_u64(k, value)? as usize,
            "level" => spec.level = get_f64(k, value)?,
            "kappa_tail" => spec.kappa_tail = get_f64(k, value)?,
            "write_steps" => spec.write_steps = get_bool(k, value)?,
            "coupled_regret" => spec.coupled_regret = get_bool(k, value)?,
            "out" => spec.output_dir = PathBuf::from(get_str(k, value)?),
            "data" => spec.data = Some(PathBuf::from(get_str(k, value)?)),
            "policies" => spec.policies = get_policies(k, value)?,
            "checkpoints" => {
                spec.checkpoints = get_u64_list(k, value)?;
                checkpoints_set = true;
            }
            "t_list" => {
                spec.t_list = match value {
                    Value::String(s) => parse_t_list(s).map_err(|m| ConfigError::new(k, m))?,
                    other => get_u64_list(k, other)?,
                }
            }
            "dgp.noise_sd0" => spec.run.dgp.noise_sd0 = get_f64(k, value)?,
            "dgp.noise_sd1" => spec.run.dgp.noise_sd1 = get_f64(k, value)?,
            "dgp.theta" => {
                let flat_theta = get_f64_list(k, value)?;
                spec.run.dgp.theta = Theta::from_flat(&flat_theta).map_err(|e| ConfigError::new(k, e.to_string()))?;
            }
            "dgp.x1_bound" | "dgp.x2_low" | "dgp.x2_high" => {
                law_keys.insert(k, get_f64(k, value)?);
            }
            "scheme.kind" => {
                scheme_keys.insert(k, value.clone());
            }
            "scheme.rho" | "scheme.window" | "scheme.scale" | "scheme.exponent" => {
                scheme_keys.insert(k, value.clone());
            }
            "eps.form" | "eps.p" | "eps.alpha" | "eps.value" => {
                eps_keys.insert(k, value.clone());
            }
            _ if k.starts_with("col.") => {
                let field = &k[4..];
                let header = get_str(k, value)?;
                if !spec.columns.set(field, header) {
                    return Err(ConfigError::new(k, "unknown column field"));
                }
            }
            _ => return Err(ConfigError::new(k, "unknown key")),
        }
    }

    if !scheme_keys.is_empty() {
        spec.run.scheme = build_scheme(&scheme_keys, spec.run.scheme)?;
    }
    if !eps_keys.is_empty() {
        spec.run.eps = build_eps(&eps_keys)?;
    }
    if !law_keys.is_empty() {
        let ContextLaw::Synthetic {
            mut x1_bound,
            mut x2_low,
            mut x2_high,
        } = ContextLaw::default()
        else {
            unreachable!("default law is synthetic")
        };
        for (k, v) in law_keys {
            match k {
                "dgp.x1_bound" => x1_bound = v,
                "dgp.x2_low" => x2_low = v,
                _ => x2_high = v,
            }
        }
        if !(x1_bound > 0.0 && x2_low < x2_high) {
            return Err(ConfigError::new("dgp.x1_bound,dgp.x2_low,dgp.x2_high", "empty context support"));
        }
        spec.run.dgp.context_law = ContextLaw::Synthetic {
            x1_bound,
            x2_low,
            x2_high,
        };
    }

    if let Some(seed) = overrides.seed {
        spec.run.seed = seed;
    }
    if let Some(reps) = overrides.reps {
        spec.replications = reps;
    }
    if let Some(p) = &overrides.policies {
        spec.policies = p.clone();
    }
    if let Some(out) = &overrides.out {
        spec.output_dir = out.clone();
    }
    if let Some(data) = &overrides.data {
        spec.data = Some(data.clone());
    }
    if let Some(t) = &overrides.t_list {
        spec.t_list = t.clone();
    }
    if let Some(w) = overrides.workers {
        spec.workers = w;
    }
    if let Some(s) = overrides.scheme {
        spec.run.scheme = s;
    }

    if !checkpoints_set {
        spec.checkpoints = default_checkpoints(spec.run.horizon);
    }
    spec.checkpoints.sort_unstable();
    spec.checkpoints.dedup();
    spec.validate()?;
    Ok(spec)
}

fn flatten(prefix: &str, table: &toml::Table, out: &mut BTreeMap<String, Value>) {
    for (k, v) in table {
        let key = if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        };
        match v {
            Value::Table(t) => flatten(&key, t, out),
            other => {
                out.insert(key, other.clone());
            }
        }
    }
}

fn get_u64(key: &str, v: &Value) -> Result<u64, ConfigError> {
    match v {
        Value::Integer(i) if *i >= 0 => Ok(*i as u64),
        _ => Err(ConfigError::new(key, "expected a nonnegative integer")),
    }
}

fn get_f64(key: &str, v: &Value) -> Result<f64, ConfigError> {
    match v {
        Value::Float(f) => Ok(*f),
        Value::Integer(i) => Ok(*i as f64),
        _ => Err(ConfigError::new(key, "expected a number")),
    }
}

fn get_bool(key: &str, v: &Value) -> Result<bool, ConfigError> {
    v.as_bool().ok_or_else(|| ConfigError::new(key, "expected true or false"))
}

fn get_str<'a>(key: &str, v: &'a Value) -> Result<&'a str, ConfigError> {
    v.as_str().ok_or_else(|| ConfigError::new(key, "expected a string"))
}

fn get_array<'a>(key: &str, v: &'a Value) -> Result<&'a Vec<Value>, ConfigError> {
    v.as_array().ok_or_else(|| ConfigError::new(key, "expected an array"))
}

fn get_u64_list(key: &str, v: &Value) -> Result<Vec<u64>, ConfigError> {
    get_array(key, v)?.iter().map(|x| get_u64(key, x)).collect()
}

fn get_f64_list(key: &str, v: &Value) -> Result<Vec<f64>, ConfigError> {
    get_array(key, v)?.iter().map(|x| get_f64(key, x)).collect()
}

fn get_policies(key: &str, v: &Value) -> Result<Vec<PolicyKind>, ConfigError> {
    match v {
        Value::String(s) => parse_policy_list(s).map_err(|m| ConfigError::new(key, m)),
        Value::Array(items) => items
            .iter()
            .map(|x| get_str(key, x)?.parse().map_err(|m: String| ConfigError::new(key, m)))
            .collect(),
        _ => Err(ConfigError::new(key, "expected a list of policy names")),
    }
}

/// `front,myopic` style list.
pub fn parse_policy_list(s: &str) -> Result<Vec<PolicyKind>, String> {
    let mut out: Vec<PolicyKind> = Vec::new();
    for part in s.split(',').filter(|p| !p.trim().is_empty()) {
        let p: PolicyKind = part.parse()?;
        if !out.contains(&p) {
            out.push(p);
        }
    }
    if out.is_empty() {
        return Err("no policies given".into());
    }
    Ok(out)
}

/// `100,200,500` or `start:end:step` (inclusive end).
pub fn parse_t_list(s: &str) -> Result<Vec<u64>, String> {
    let s = s.trim();
    let num = |x: &str| x.trim().parse::<u64>().map_err(|_| format!("`{x}` is not a nonnegative integer"));
    let list = if s.contains(':') {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(format!("range `{s}` must look like start:end:step"));
        }
        let (start, end, step) = (num(parts[0])?, num(parts[1])?, num(parts[2])?);
        if step == 0 {
            return Err("range step must be positive".into());
        }
        (start..=end).step_by(step as usize).collect()
    } else {
        s.split(',').filter(|p| !p.trim().is_empty()).map(num).collect::<Result<Vec<_>, _>>()?
    };
    if list.is_empty() {
        return Err("t-list is empty".into());
    }
    if list.contains(&0) {
        return Err("t must be at least 1".into());
    }
    Ok(list)
}

/// `fixed_window:20`, `growing_linear:0.2`, `growing_sqrt:5`,
/// `growing_power:20,0.2`.
pub fn parse_scheme(s: &str) -> Result<WeightScheme, String> {
    let (kind, args) = s.split_once(':').ok_or_else(|| format!("scheme `{s}` must look like kind:params"))?;
    let nums: Vec<f64> = args
        .split(',')
        .map(|x| x.trim().parse::<f64>().map_err(|_| format!("`{x}` is not a number")))
        .collect::<Result<_, _>>()?;
    let scheme = match (kind.trim(), nums.as_slice()) {
        ("fixed_window", [w]) if *w >= 0.0 && w.fract() == 0.0 => WeightScheme::FixedWindow { window: *w as u64 },
        ("growing_linear", [rho]) => WeightScheme::GrowingLinear { rho: *rho },
        ("growing_sqrt", [rho]) => WeightScheme::GrowingSqrt { rho: *rho },
        ("growing_power", [scale, exponent]) => WeightScheme::GrowingPower {
            scale: *scale,
            exponent: *exponent,
        },
        _ => return Err(format!("cannot read scheme `{s}`")),
    };
    scheme.validate().map_err(|e| e.to_string())?;
    Ok(scheme)
}

fn build_scheme(keys: &BTreeMap<&str, Value>, current: WeightScheme) -> Result<WeightScheme, ConfigError> {
    let kind = match keys.get("scheme.kind") {
        Some(v) => get_str("scheme.kind", v)?.to_string(),
        None => current.kind_name().to_string(),
    };
    let num = |k: &str| -> Result<Option<f64>, ConfigError> { keys.get(k).map(|v| get_f64(k, v)).transpose() };
    let require = |k: &str| -> Result<f64, ConfigError> {
        num(k)?.ok_or_else(|| ConfigError::new(k, format!("required for scheme `{kind}`")))
    };
    let allowed: &[&str] = match kind.as_str() {
        "fixed_window" => &["scheme.kind", "scheme.window"],
        "growing_linear" | "growing_sqrt" => &["scheme.kind", "scheme.rho"],
        "growing_power" => &["scheme.kind", "scheme.scale", "scheme.exponent"],
        other => return Err(ConfigError::new("scheme.kind", format!("unknown scheme `{other}`"))),
    };
    if let Some(extra) = keys.keys().find(|k| !allowed.contains(k)) {
        return Err(ConfigError::new(*extra, format!("not a parameter of scheme `{kind}`")));
    }
    let scheme = match kind.as_str() {
        "fixed_window" => WeightScheme::FixedWindow {
            window: match keys.get("scheme.window") {
                Some(v) => get_u64("scheme.window", v)?,
                None => return Err(ConfigError::new("scheme.window", "required for scheme `fixed_window`")),
            },
        },
        "growing_linear" => WeightScheme::GrowingLinear { rho: require("scheme.rho")? },
        "growing_sqrt" => WeightScheme::GrowingSqrt { rho: require("scheme.rho")? },
        _ => WeightScheme::GrowingPower {
            scale: require("scheme.scale")?,
            exponent: require("scheme.exponent")?,
        },
    };
    scheme
        .validate()
        .map_err(|e| ConfigError::new("scheme", e.to_string()))?;
    Ok(scheme)
}

fn build_eps(keys: &BTreeMap<&str, Value>) -> Result<EpsSchedule, ConfigError> {
    let form = match keys.get("eps.form") {
        Some(v) => get_str("eps.form", v)?,
        None => "log_sqrt",
    };
    let num = |k: &str, default: f64| -> Result<f64, ConfigError> {
        keys.get(k).map_or(Ok(default), |v| get_f64(k, v))
    };
    let allowed: &[&str] = match form {
        "log_sqrt" | "loglog_sqrt" => &["eps.form", "eps.p"],
        "power" => &["eps.form", "eps.p", "eps.alpha"],
        "constant" => &["eps.form", "eps.value"],
        other => return Err(ConfigError::new("eps.form", format!("unknown schedule `{other}`"))),
    };
    if let Some(extra) = keys.keys().find(|k| !allowed.contains(k)) {
        return Err(ConfigError::new(*extra, format!("not a parameter of schedule `{form}`")));
    }
    let schedule = match form {
        "log_sqrt" => EpsSchedule::LogSqrt { p: num("eps.p", 0.1)? },
        "loglog_sqrt" => EpsSchedule::LogLogSqrt { p: num("eps.p", 0.1)? },
        "power" => EpsSchedule::Power {
            p: num("eps.p", 1.0)?,
            alpha: num("eps.alpha", 0.3)?,
        },
        _ => EpsSchedule::Constant {
            value: num("eps.value", 0.1)?,
        },
    };
    let p = match schedule {
        EpsSchedule::LogSqrt { p } | EpsSchedule::LogLogSqrt { p } | EpsSchedule::Power { p, .. } => p,
        EpsSchedule::Constant { value } => value,
    };
    if !(p.is_finite() && p >= 0.0) {
        return Err(ConfigError::new("eps.p", "must be finite and nonnegative"));
    }
    Ok(schedule)
}
