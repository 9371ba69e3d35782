//! On-disk run artifacts.
//!
//! A run directory holds:
//!
//! | file              | columns                                                        |
//! |-------------------|----------------------------------------------------------------|
//! | `config.toml`     | the full validated config                                      |
//! | `priceSeries.csv` | `time,price`                                                   |
//! | `depthSeries.csv` | `time,buy_depth,sell_depth`                                    |
//! | `trades.csv`      | `time,price,buyer_owner,seller_owner,buy_order_id,sell_order_id` |
//! | `fills.csv`       | `time,algo_index,price,price_minus_fundamental`                |
//! | `spoofEvents.csv` | `time,action,count`                                            |
//! | `weights.csv`     | `time,agent,w1,w2` (only when a weight trace was requested)    |
//! | `summary.json`    | [`RunSummary`]                                                 |
//!
//! Writers are deterministic: the same run always produces the same bytes.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigError, RawConfig};
use crate::engine::{OrderCounts, RunResult, SimConfig, WeightSample};
use crate::execution::FillRecord;
use crate::metrics::{summarize, MetricsSummary};
use crate::orderbook::{Price, Time, Trade};
use crate::scenarios::SpoofEvent;

pub const SCHEMA_VERSION: u32 = 1;
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

pub const CONFIG_FILE: &str = "config.toml";
pub const PRICE_FILE: &str = "priceSeries.csv";
pub const DEPTH_FILE: &str = "depthSeries.csv";
pub const TRADES_FILE: &str = "trades.csv";
pub const FILLS_FILE: &str = "fills.csv";
pub const SPOOF_FILE: &str = "spoofEvents.csv";
pub const WEIGHTS_FILE: &str = "weights.csv";
pub const SUMMARY_FILE: &str = "summary.json";

#[derive(Debug, Error)]
pub enum PersistError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{path}: unsupported schema version {found} (expected {SCHEMA_VERSION})")]
    Schema { path: PathBuf, found: u32 },
    #[error("{path}: config hash {found} does not match config.toml ({expected})")]
    HashMismatch { path: PathBuf, expected: String, found: String },
    #[error("{path}: {what}")]
    Malformed { path: PathBuf, what: String },
}

/// Contents of `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub schema_version: u32,
    pub tool_version: String,
    pub config_hash: String,
    pub scenario: String,
    pub algo: String,
    pub seed: u64,
    pub counts: OrderCounts,
    pub metrics: MetricsSummary,
}

impl RunSummary {
    pub fn new(cfg: &SimConfig, run: &RunResult) -> RunSummary {
        RunSummary {
            schema_version: SCHEMA_VERSION,
            tool_version: TOOL_VERSION.to_string(),
            config_hash: cfg.hash(),
            scenario: cfg.scenario.kind.to_string(),
            algo: algo_label(cfg).to_string(),
            seed: run.seed,
            counts: run.counts,
            metrics: summarize(cfg, run),
        }
    }
}

/// A run read back from disk.
#[derive(Debug, Clone)]
pub struct StoredRun {
    pub dir: PathBuf,
    pub config: SimConfig,
    pub run: RunResult,
    pub summary: RunSummary,
}

pub fn algo_label(cfg: &SimConfig) -> &'static str {
    cfg.algo.map_or("none", |a| a.kind.as_str())
}

/// `<root>/<scenario>/<algo>/<seed>`.
pub fn run_dir(root: &Path, cfg: &SimConfig) -> PathBuf {
    root.join(cfg.scenario.kind.as_str())
        .join(algo_label(cfg))
        .join(cfg.seed.to_string())
}

#[derive(Serialize, Deserialize)]
struct PriceRow {
    time: Time,
    price: Price,
}

#[derive(Serialize, Deserialize)]
struct DepthRow {
    time: Time,
    buy_depth: u32,
    sell_depth: u32,
}

#[derive(Serialize, Deserialize)]
struct FillRow {
    time: Time,
    algo_index: u32,
    price: Price,
    price_minus_fundamental: Price,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PersistError + '_ {
    move |source| PersistError::Io { path: path.to_path_buf(), source }
}

fn write_csv<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>, header: &[&str]) -> Result<(), PersistError> {
    let csv_err = |source| PersistError::Csv { path: path.to_path_buf(), source };
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(csv_err)?;
    // Written by hand so that empty tables still carry their columns.
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.serialize(row).map_err(csv_err)?;
    }
    w.flush().map_err(io_err(path))
}

fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, PersistError> {
    let csv_err = |source| PersistError::Csv { path: path.to_path_buf(), source };
    csv::Reader::from_path(path)
        .map_err(csv_err)?
        .deserialize()
        .collect::<Result<Vec<T>, _>>()
        .map_err(csv_err)
}

/// Writes every artifact of `run` into `dir`, creating it if needed.
pub fn write_run(dir: &Path, cfg: &SimConfig, run: &RunResult) -> Result<RunSummary, PersistError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let summary = RunSummary::new(cfg, run);

    let path = dir.join(CONFIG_FILE);
    fs::write(&path, cfg.to_toml()).map_err(io_err(&path))?;

    let steps = || 1..=run.steps() as Time;
    write_csv(
        &dir.join(PRICE_FILE),
        steps().zip(&run.price_series).map(|(time, &price)| PriceRow { time, price }),
        &["time", "price"],
    )?;
    write_csv(
        &dir.join(DEPTH_FILE),
        steps()
            .zip(run.buy_depth.iter().zip(&run.sell_depth))
            .map(|(time, (&buy_depth, &sell_depth))| DepthRow { time, buy_depth, sell_depth }),
        &["time", "buy_depth", "sell_depth"],
    )?;
    write_csv(
        &dir.join(TRADES_FILE),
        &run.trades,
        &["time", "price", "buyer_owner", "seller_owner", "buy_order_id", "sell_order_id"],
    )?;
    let pf = cfg.fundamental_price;
    write_csv(
        &dir.join(FILLS_FILE),
        run.fills.iter().map(|f| FillRow {
            time: f.time,
            algo_index: f.algo_index,
            price: f.price,
            price_minus_fundamental: f.price - pf,
        }),
        &["time", "algo_index", "price", "price_minus_fundamental"],
    )?;
    write_csv(&dir.join(SPOOF_FILE), &run.spoof_events, &["time", "action", "count"])?;
    let weights = dir.join(WEIGHTS_FILE);
    if run.weight_trace.is_empty() {
        // A stale trace from an earlier run would otherwise survive.
        if weights.exists() {
            fs::remove_file(&weights).map_err(io_err(&weights))?;
        }
    } else {
        write_csv(&weights, &run.weight_trace, &["time", "agent", "w1", "w2"])?;
    }

    let path = dir.join(SUMMARY_FILE);
    let mut text = serde_json::to_string_pretty(&summary)
        .map_err(|source| PersistError::Json { path: path.clone(), source })?;
    text.push('\n');
    fs::write(&path, text).map_err(io_err(&path))?;
    Ok(summary)
}

pub fn read_summary(path: &Path) -> Result<RunSummary, PersistError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let summary: RunSummary =
        serde_json::from_str(&text).map_err(|source| PersistError::Json { path: path.to_path_buf(), source })?;
    if summary.schema_version != SCHEMA_VERSION {
        return Err(PersistError::Schema { path: path.to_path_buf(), found: summary.schema_version });
    }
    Ok(summary)
}

/// Reads a run directory written by [`write_run`].
pub fn read_run(dir: &Path) -> Result<StoredRun, PersistError> {
    let config = RawConfig::load(&dir.join(CONFIG_FILE))?.validate()?;
    let summary_path = dir.join(SUMMARY_FILE);
    let summary = read_summary(&summary_path)?;
    let expected = config.hash();
    if summary.config_hash != expected {
        return Err(PersistError::HashMismatch {
            path: summary_path,
            expected,
            found: summary.config_hash,
        });
    }

    let price_path = dir.join(PRICE_FILE);
    let prices: Vec<PriceRow> = read_csv(&price_path)?;
    let depth_path = dir.join(DEPTH_FILE);
    let depths: Vec<DepthRow> = read_csv(&depth_path)?;
    if depths.len() != prices.len() {
        return Err(PersistError::Malformed {
            path: depth_path,
            what: format!("{} rows but the price series has {}", depths.len(), prices.len()),
        });
    }
    let fills: Vec<FillRow> = read_csv(&dir.join(FILLS_FILE))?;
    let trades: Vec<Trade> = read_csv(&dir.join(TRADES_FILE))?;
    let spoof_events: Vec<SpoofEvent> = read_csv(&dir.join(SPOOF_FILE))?;
    let weights = dir.join(WEIGHTS_FILE);
    let weight_trace: Vec<WeightSample> = if weights.exists() { read_csv(&weights)? } else { Vec::new() };

    let run = RunResult {
        seed: summary.seed,
        price_series: prices.iter().map(|r| r.price).collect(),
        buy_depth: depths.iter().map(|r| r.buy_depth).collect(),
        sell_depth: depths.iter().map(|r| r.sell_depth).collect(),
        trades,
        fills: fills
            .iter()
            .map(|f| FillRecord { time: f.time, algo_index: f.algo_index, price: f.price })
            .collect(),
        counts: summary.counts,
        spoof_events,
        weight_trace,
    };
    Ok(StoredRun { dir: dir.to_path_buf(), config, run, summary })
}

/// Every run directory below `root` (any directory holding a summary),
/// in sorted path order.
pub fn find_runs(root: &Path) -> Result<Vec<PathBuf>, PersistError> {
    let mut found = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        if dir.join(SUMMARY_FILE).is_file() && dir.join(CONFIG_FILE).is_file() {
            found.push(dir.clone());
        }
        for entry in fs::read_dir(&dir).map_err(io_err(&dir))? {
            let entry = entry.map_err(io_err(&dir))?;
            if entry.file_type().map_err(io_err(&dir))?.is_dir() {
                stack.push(entry.path());
            }
        }
    }
    found.sort();
    Ok(found)
}

/// Outcome of recomputing a stored run's metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportCheck {
    pub dir: PathBuf,
    pub stored: MetricsSummary,
    pub recomputed: MetricsSummary,
}

impl ReportCheck {
    pub fn matches(&self) -> bool {
        // Compared as JSON so that NaN fields (serialised as null) agree.
        serde_json::to_value(&self.stored).ok() == serde_json::to_value(&self.recomputed).ok()
    }
}

pub fn recompute(stored: &StoredRun) -> ReportCheck {
    ReportCheck {
        dir: stored.dir.clone(),
        stored: stored.summary.metrics.clone(),
        recomputed: summarize(&stored.config, &stored.run),
    }
}
