//! Hotel purchase records: ingest, ordinal encoding, profit, a batch OLS
//! calibration of the interference model, and bootstrap replay.

use std::collections::HashMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::environment::{ContextLaw, DgpSpec, Theta};
use crate::estimator::{EstimatorError, GramAccumulator};
use crate::features::{build_design, Context, QuadraticFeatureMap};
use crate::interference::{KappaState, WeightScheme};
use crate::runner::{run_episode_with, EpisodeLog, RunConfig, RunError, RunOptions};
use crate::interference::ZetaTable;

/// Schema-compatible synthetic records shipped for tests and demos.
pub const FIXTURE_CSV: &str = include_str!("../data/hotel_fixture.csv");

/// Reward noise sd used when replaying a calibrated model.
pub const REPLAY_NOISE_SD: f64 = 10.0;

#[derive(Debug, Error)]
pub enum SemisynthError {
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("no usable rows ({dropped} dropped)")]
    NoUsableRows { dropped: usize },
    #[error("calibration needs at least {need} rows, got {got}")]
    TooFewRows { need: usize, got: usize },
    #[error("calibration design is not invertible: {0}")]
    NotInvertible(EstimatorError),
    #[error(transparent)]
    Run(#[from] RunError),
}

/// Header names for each field.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnMap {
    pub room_type: String,
    pub rate_type: String,
    pub advance_days: String,
    pub party_size: String,
    pub nightly_rate: String,
    pub rooms: String,
    pub nights: String,
    pub purchased: String,
}

impl Default for ColumnMap {
    fn default() -> Self {
        Self {
            room_type: "room_type".into(),
            rate_type: "rate_type".into(),
            advance_days: "advance_days".into(),
            party_size: "party_size".into(),
            nightly_rate: "nightly_rate".into(),
            rooms: "rooms".into(),
            nights: "nights".into(),
            purchased: "purchased".into(),
        }
    }
}

impl ColumnMap {
    /// Sets one field by its canonical name. Returns false for unknown fields.
    pub fn set(&mut self, field: &str, header: &str) -> bool {
        let slot = match field {
            "room_type" => &mut self.room_type,
            "rate_type" => &mut self.rate_type,
            "advance_days" => &mut self.advance_days,
            "party_size" => &mut self.party_size,
            "nightly_rate" => &mut self.nightly_rate,
            "rooms" => &mut self.rooms,
            "nights" => &mut self.nights,
            "purchased" => &mut self.purchased,
            _ => return false,
        };
        *slot = header.to_string();
        true
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HotelRecord {
    pub room_type: String,
    /// 1-based rank of the room type by mean nightly rate.
    pub room_rank: u32,
    pub rate_type: String,
    pub rate_rank: u32,
    pub advance_days_raw: f64,
    /// `ln(1 + days)`
    pub advance_days: f64,
    pub party_size: f64,
    pub nightly_rate: f64,
    pub rooms: u32,
    pub nights: u32,
    pub purchased: bool,
}

impl HotelRecord {
    /// `(room rank, log advance days, party size, rate rank)`
    pub fn context(&self) -> Context {
        Context::new(vec![
            self.room_rank as f64,
            self.advance_days,
            self.party_size,
            self.rate_rank as f64,
        ])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroppedRow {
    /// 1-based data row number (header excluded).
    pub row: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct IngestReport {
    pub total_rows: usize,
    pub retained: usize,
    pub not_purchased: usize,
    pub dropped: Vec<DroppedRow>,
}

struct RawRow {
    room_type: String,
    rate_type: String,
    advance_days_raw: f64,
    party_size: f64,
    nightly_rate: f64,
    rooms: u32,
    nights: u32,
}

fn parse_flag(s: &str) -> Option<bool> {
    match s.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "y" | "t" => Some(true),
        "0" | "false" | "no" | "n" | "f" => Some(false),
        _ => None,
    }
}

fn parse_nonneg(field: &str, s: &str) -> Result<f64, String> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|_| format!("{field}: cannot parse `{s}`"))?;
    if !v.is_finite() || v < 0.0 {
        return Err(format!("{field}: `{s}` is not a finite nonnegative number"));
    }
    Ok(v)
}

fn parse_count(field: &str, s: &str) -> Result<u32, String> {
    let v: u32 = s
        .trim()
        .parse()
        .map_err(|_| format!("{field}: cannot parse `{s}` as a count"))?;
    if v == 0 {
        return Err(format!("{field}: must be at least 1"));
    }
    Ok(v)
}

fn parse_label(field: &str, s: &str) -> Result<String, String> {
    let t = s.trim();
    if t.is_empty() {
        return Err(format!("{field}: empty"));
    }
    Ok(t.to_string())
}

pub fn ingest(path: &Path, columns: &ColumnMap) -> Result<(Vec<HotelRecord>, IngestReport), SemisynthError> {
    let file = File::open(path).map_err(|source| SemisynthError::Io {
        path: path.display().to_string(),
        source,
    })?;
    ingest_reader(file, columns)
}

pub fn ingest_str(text: &str, columns: &ColumnMap) -> Result<(Vec<HotelRecord>, IngestReport), SemisynthError> {
    ingest_reader(text.as_bytes(), columns)
}

/// Parses, filters to purchased rows, and ranks room and rate types by their
/// mean nightly rate. Malformed rows are reported, not fatal.
pub fn ingest_reader<R: Read>(reader: R, columns: &ColumnMap) -> Result<(Vec<HotelRecord>, IngestReport), SemisynthError> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let index = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| SemisynthError::MissingColumn(name.to_string()))
    };
    let ix = [
        index(&columns.room_type)?,
        index(&columns.rate_type)?,
        index(&columns.advance_days)?,
        index(&columns.party_size)?,
        index(&columns.nightly_rate)?,
        index(&columns.rooms)?,
        index(&columns.nights)?,
        index(&columns.purchased)?,
    ];

    let mut report = IngestReport::default();
    let mut rows = Vec::new();
    for (i, result) in rdr.records().enumerate() {
        let row = i + 1;
        report.total_rows += 1;
        let rec = match result {
            Ok(r) => r,
            Err(e) => {
                report.dropped.push(DroppedRow {
                    row,
                    reason: e.to_string(),
                });
                continue;
            }
        };
        let field = |k: usize| rec.get(ix[k]).unwrap_or("");
        let parsed = (|| -> Result<Option<RawRow>, String> {
            let purchased = parse_flag(field(7)).ok_or_else(|| format!("purchased: cannot parse `{}`", field(7)))?;
            if !purchased {
                return Ok(None);
            }
            Ok(Some(RawRow {
                room_type: parse_label("room_type", field(0))?,
                rate_type: parse_label("rate_type", field(1))?,
                advance_days_raw: parse_nonneg("advance_days", field(2))?,
                party_size: parse_nonneg("party_size", field(3))?,
                nightly_rate: parse_nonneg("nightly_rate", field(4))?,
                rooms: parse_count("rooms", field(5))?,
                nights: parse_count("nights", field(6))?,
            }))
        })();
        match parsed {
            Ok(Some(r)) => rows.push(r),
            Ok(None) => report.not_purchased += 1,
            Err(reason) => report.dropped.push(DroppedRow { row, reason }),
        }
    }
    if rows.is_empty() {
        return Err(SemisynthError::NoUsableRows {
            dropped: report.dropped.len(),
        });
    }

    let room_ranks = ordinal_ranks(rows.iter().map(|r| (r.room_type.as_str(), r.nightly_rate)));
    let rate_ranks = ordinal_ranks(rows.iter().map(|r| (r.rate_type.as_str(), r.nightly_rate)));
    let records: Vec<HotelRecord> = rows
        .into_iter()
        .map(|r| HotelRecord {
            room_rank: room_ranks[&r.room_type],
            rate_rank: rate_ranks[&r.rate_type],
            advance_days: r.advance_days_raw.ln_1p(),
            room_type: r.room_type,
            rate_type: r.rate_type,
            advance_days_raw: r.advance_days_raw,
            party_size: r.party_size,
            nightly_rate: r.nightly_rate,
            rooms: r.rooms,
            nights: r.nights,
            purchased: true,
        })
        .collect();
    report.retained = records.len();
    Ok((records, report))
}

/// Ranks labels 1..k by ascending mean rate. Ties fall back to the label,
/// compared numerically when every label is a number.
pub fn ordinal_ranks<'a>(pairs: impl Iterator<Item = (&'a str, f64)>) -> HashMap<String, u32> {
    let mut sums: HashMap<&str, (f64, usize)> = HashMap::new();
    for (label, rate) in pairs {
        let e = sums.entry(label).or_insert((0.0, 0));
        e.0 += rate;
        e.1 += 1;
    }
    let numeric = sums.keys().all(|l| l.parse::<f64>().is_ok());
    let mut means: Vec<(&str, f64)> = sums.into_iter().map(|(l, (s, n))| (l, s / n as f64)).collect();
    means.sort_by(|a, b| {
        a.1.total_cmp(&b.1).then_with(|| {
            if numeric {
                a.0.parse::<f64>().unwrap().total_cmp(&b.0.parse::<f64>().unwrap())
            } else {
                a.0.cmp(b.0)
            }
        })
    });
    means
        .into_iter()
        .enumerate()
        .map(|(i, (l, _))| (l.to_string(), i as u32 + 1))
        .collect()
}

/// Writes records back out under the default column names. Ingesting the
/// output reproduces the same records.
pub fn write_normalized<W: Write>(records: &[HotelRecord], writer: W) -> Result<(), SemisynthError> {
    let cols = ColumnMap::default();
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        &cols.room_type,
        &cols.rate_type,
        &cols.advance_days,
        &cols.party_size,
        &cols.nightly_rate,
        &cols.rooms,
        &cols.nights,
        &cols.purchased,
    ])?;
    for r in records {
        w.write_record([
            r.room_type.clone(),
            r.rate_type.clone(),
            r.advance_days_raw.to_string(),
            r.party_size.to_string(),
            r.nightly_rate.to_string(),
            r.rooms.to_string(),
            r.nights.to_string(),
            "1".to_string(),
        ])?;
    }
    w.flush().map_err(|source| SemisynthError::Io {
        path: "<normalized output>".into(),
        source,
    })?;
    Ok(())
}

/// `(rate − cost) · rooms · nights`
pub fn profit(nightly_rate: f64, cost: f64, rooms: u32, nights: u32) -> f64 {
    (nightly_rate - cost) * rooms as f64 * nights as f64
}

/// Per-room-type lowest and mean nightly rate.
fn room_rate_stats(records: &[HotelRecord]) -> HashMap<&str, (f64, f64)> {
    let mut acc: HashMap<&str, (f64, f64, usize)> = HashMap::new();
    for r in records {
        let e = acc.entry(r.room_type.as_str()).or_insert((f64::INFINITY, 0.0, 0));
        e.0 = e.0.min(r.nightly_rate);
        e.1 += r.nightly_rate;
        e.2 += 1;
    }
    acc.into_iter().map(|(k, (min, sum, n))| (k, (min, sum / n as f64))).collect()
}

/// Action, κ, and profit for each record in arrival order.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationData {
    pub contexts: Vec<Context>,
    pub actions: Vec<u8>,
    pub kappas: Vec<f64>,
    pub profits: Vec<f64>,
}

pub fn calibration_data(records: &[HotelRecord], scheme: WeightScheme) -> CalibrationData {
    let stats = room_rate_stats(records);
    let mut kappa = KappaState::new(scheme);
    let mut out = CalibrationData {
        contexts: Vec::with_capacity(records.len()),
        actions: Vec::with_capacity(records.len()),
        kappas: Vec::with_capacity(records.len()),
        profits: Vec::with_capacity(records.len()),
    };
    for r in records {
        let (cost, mean) = stats[r.room_type.as_str()];
        let a = (r.nightly_rate > mean) as u8;
        out.kappas.push(kappa.next_kappa());
        kappa.push(a);
        out.actions.push(a);
        out.contexts.push(r.context());
        out.profits.push(profit(r.nightly_rate, cost, r.rooms, r.nights));
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibratedModel {
    pub theta_fit: Theta,
    pub noise_sd: f64,
    pub scheme: WeightScheme,
    pub contexts: Arc<Vec<Context>>,
    pub residual_sd: f64,
    pub treated_fraction: f64,
}

/// Flat, serializable summary of a calibration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub theta: Vec<f64>,
    pub feature_dim: usize,
    pub dim: usize,
    pub noise_sd: f64,
    pub residual_sd: f64,
    pub records: usize,
    pub treated_fraction: f64,
    pub scheme: WeightScheme,
}

impl CalibratedModel {
    pub fn report(&self) -> CalibrationReport {
        CalibrationReport {
            theta: self.theta_fit.to_flat(),
            feature_dim: self.theta_fit.feature_dim(),
            dim: self.theta_fit.dim(),
            noise_sd: self.noise_sd,
            residual_sd: self.residual_sd,
            records: self.contexts.len(),
            treated_fraction: self.treated_fraction,
            scheme: self.scheme,
        }
    }

    pub fn dgp(&self) -> DgpSpec {
        DgpSpec {
            theta: self.theta_fit.clone(),
            noise_sd0: self.noise_sd,
            noise_sd1: self.noise_sd,
            context_law: ContextLaw::Empirical {
                pool: Arc::clone(&self.contexts),
            },
        }
    }
}

/// Fits `(β₀, β₁, γ)` by batch least squares on the records in arrival order.
pub fn calibrate(records: &[HotelRecord], scheme: WeightScheme) -> Result<CalibratedModel, SemisynthError> {
    let raw_dim = 4;
    let map = QuadraticFeatureMap::new(raw_dim);
    let d = 2 * map.output_dim() + 1;
    if records.len() < d + 1 {
        return Err(SemisynthError::TooFewRows {
            need: d + 1,
            got: records.len(),
        });
    }
    let data = calibration_data(records, scheme);
    let mut acc = GramAccumulator::new(d);
    for i in 0..records.len() {
        let f = map.apply(&data.contexts[i]);
        acc.update(&build_design(&f, data.actions[i], data.kappas[i]), data.profits[i])
            .expect("fixed design dimension");
    }
    let fit = acc.solve().map_err(SemisynthError::NotInvertible)?;
    let sse: f64 = acc
        .rows()
        .map(|(z, y)| {
            let r = y - crate::features::dot(z, &fit.values);
            r * r
        })
        .sum();
    let residual_sd = (sse / (records.len() - d) as f64).sqrt();
    let treated = data.actions.iter().filter(|&&a| a == 1).count();
    Ok(CalibratedModel {
        theta_fit: Theta::from_flat(&fit.values).expect("fit has 2*d1+1 finite entries"),
        noise_sd: REPLAY_NOISE_SD,
        scheme,
        contexts: Arc::new(data.contexts),
        residual_sd,
        treated_fraction: treated as f64 / records.len() as f64,
    })
}

/// Replay defaults: `T = 2·10⁴`, `T0 = 200`, `L = 8`, `K = 50`, `C = 0.01`.
pub fn replay_config(model: &CalibratedModel) -> RunConfig {
    RunConfig {
        horizon: 20_000,
        warmup: 200,
        intervals: 8,
        force_pulls: 50,
        clip: 0.01,
        scheme: model.scheme,
        dgp: model.dgp(),
        ..RunConfig::default()
    }
}

/// Runs one episode on the calibrated model: contexts are bootstrap draws
/// from the calibration rows and rewards are `N(zᵀθ_fit, noise_sd²)`.
pub fn replay(model: &CalibratedModel, cfg: &RunConfig, table: &ZetaTable) -> Result<EpisodeLog, SemisynthError> {
    let cfg = RunConfig {
        scheme: model.scheme,
        dgp: model.dgp(),
        ..cfg.clone()
    };
    Ok(run_episode_with(&cfg, &RunOptions::default(), table)?)
}

/// Records from the bundled fixture.
pub fn fixture_records() -> (Vec<HotelRecord>, IngestReport) {
    ingest_str(FIXTURE_CSV, &ColumnMap::default()).expect("bundled fixture parses")
}
