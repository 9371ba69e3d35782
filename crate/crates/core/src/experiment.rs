//! Paired AA/OAA experiments.
//!
//! For each OAA decision interval on the grid, an OAA batch runs first. Its
//! mean order count fixes the AA decision interval, and the AA batch then
//! runs on the same seeds. Each grid point yields one [`PairedRow`]. A grid
//! of several intervals traces trading cost against order count.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{run_batch_map, EngineError, RunResult, SimConfig};
use crate::execution::{equalize_order_counts, AlgoKind, Equalization, ExecAlgoConfig, ExecError};
use crate::metrics::{fill_share, falling_interval, interval_averages, retreat_interval, summarize, MetricsSummary};
use crate::persist::{PersistError, SCHEMA_VERSION, TOOL_VERSION};
use crate::scenarios::ScenarioKind;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("cannot equalise order counts at OAA interval {interval}")]
    Equalize {
        interval: u64,
        #[source]
        source: ExecError,
    },
    #[error(transparent)]
    Persist(#[from] PersistError),
    #[error("empty {0}")]
    Empty(&'static str),
}

/// Across-seed mean and sample standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub sd: f64,
    pub n: usize,
}

impl Stat {
    /// `None` for an empty sample. The deviation of a single value is 0.
    pub fn of(xs: &[f64]) -> Option<Stat> {
        let n = xs.len();
        if n == 0 {
            return None;
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        let sd = if n > 1 {
            (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Some(Stat { mean, sd, n })
    }
}

/// The stretch of a run the OAA is expected to buy in: the fall after a
/// crash, or the retreat after a surge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalRecord {
    /// Half-open series positions.
    pub start: usize,
    pub end: usize,
    pub avg_price: f64,
    /// Share of this run's fills inside the interval.
    pub fill_share: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub seed: u64,
    pub config_hash: String,
    pub metrics: MetricsSummary,
    pub interval: Option<IntervalRecord>,
}

impl RunRecord {
    pub fn new(cfg: &SimConfig, run: &RunResult) -> RunRecord {
        RunRecord {
            seed: run.seed,
            config_hash: cfg.hash(),
            metrics: summarize(cfg, run),
            interval: scenario_interval(cfg, run),
        }
    }

    pub fn orders(&self) -> f64 {
        self.metrics.n_fills as f64
    }
}

pub fn scenario_interval(cfg: &SimConfig, run: &RunResult) -> Option<IntervalRecord> {
    let from = cfg.scenario.window_start.saturating_sub(1) as usize;
    let (start, end) = match cfg.scenario.kind {
        ScenarioKind::Crash => falling_interval(&run.price_series, from)?,
        ScenarioKind::Surge => retreat_interval(&run.price_series, from)?,
        ScenarioKind::Stable | ScenarioKind::Spoof => return None,
    };
    let avg = interval_averages(run, start, end).ok()?;
    Some(IntervalRecord {
        start,
        end,
        avg_price: avg.avg_price,
        fill_share: fill_share(&run.fills, start, end),
    })
}

/// One algorithm type at one decision interval across the seed set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmResult {
    pub kind: AlgoKind,
    pub decision_interval: u64,
    pub orders: Stat,
    /// Over runs with at least one fill.
    pub tc: Option<Stat>,
    /// Whole-run average market price.
    pub avg_price: Stat,
    pub interval_avg_price: Option<Stat>,
    pub interval_fill_share: Option<Stat>,
    pub runs: Vec<RunRecord>,
}

impl ArmResult {
    pub fn from_runs(kind: AlgoKind, decision_interval: u64, runs: Vec<RunRecord>) -> Option<ArmResult> {
        let col = |f: &dyn Fn(&RunRecord) -> Option<f64>| runs.iter().filter_map(f).collect::<Vec<_>>();
        Some(ArmResult {
            kind,
            decision_interval,
            orders: Stat::of(&col(&|r| Some(r.orders())))?,
            tc: Stat::of(&col(&|r| r.metrics.tc)),
            avg_price: Stat::of(&col(&|r| Some(r.metrics.avg_market_price)))?,
            interval_avg_price: Stat::of(&col(&|r| r.interval.map(|i| i.avg_price))),
            interval_fill_share: Stat::of(&col(&|r| r.interval.and_then(|i| i.fill_share))),
            runs,
        })
    }

    pub fn order_counts(&self) -> Vec<u64> {
        self.runs.iter().map(|r| r.metrics.n_fills).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedRow {
    pub oaa_interval: u64,
    pub equalization: Equalization,
    pub oaa: ArmResult,
    pub aa: ArmResult,
}

impl PairedRow {
    /// `TC(OAA) - TC(AA)`.
    pub fn tc_gap(&self) -> Option<f64> {
        Some(self.oaa.tc?.mean - self.aa.tc?.mean)
    }

    /// Pooled standard deviation of the two TC samples.
    pub fn pooled_tc_sd(&self) -> Option<f64> {
        let (a, b) = (self.aa.tc?, self.oaa.tc?);
        if a.n + b.n < 3 {
            return None;
        }
        let ss = (a.n - 1) as f64 * a.sd.powi(2) + (b.n - 1) as f64 * b.sd.powi(2);
        Some((ss / (a.n + b.n - 2) as f64).sqrt())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub tool_version: String,
    pub scenario: ScenarioKind,
    /// Hash of the template config (before the algorithm is attached).
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub rows: Vec<PairedRow>,
}

#[derive(Debug, Clone)]
pub struct ExperimentPlan {
    /// Scenario and market parameters. Its `algo`, if any, supplies the
    /// algorithm settings other than kind and interval.
    pub base: SimConfig,
    pub oaa_intervals: Vec<u64>,
    pub seeds: Vec<u64>,
    pub workers: usize,
}

impl ExperimentPlan {
    fn algo(&self, kind: AlgoKind, interval: u64) -> ExecAlgoConfig {
        let template = self.base.algo.unwrap_or_else(|| ExecAlgoConfig::new(kind, interval));
        ExecAlgoConfig { kind, decision_interval: interval, ..template }
    }

    pub fn arm_config(&self, kind: AlgoKind, interval: u64) -> SimConfig {
        self.base.with_algo(Some(self.algo(kind, interval)))
    }
}

/// Receives every finished run before it is dropped.
pub type RunSink<'a> = dyn FnMut(&SimConfig, &RunResult) -> Result<(), PersistError> + 'a;

/// Runs one arm. Seeds are processed `workers` at a time so that at most
/// that many full traces are alive when a sink is attached.
pub fn run_arm(
    cfg: &SimConfig,
    seeds: &[u64],
    workers: usize,
    mut sink: Option<&mut RunSink>,
) -> Result<Vec<RunRecord>, ExperimentError> {
    if seeds.is_empty() {
        return Err(ExperimentError::Empty("seed list"));
    }
    let keep = sink.is_some();
    let mut records = Vec::with_capacity(seeds.len());
    let chunk = if keep { workers.max(1) } else { seeds.len() };
    // Duplicates across chunks would slip past the per-batch check.
    for (i, s) in seeds.iter().enumerate() {
        if seeds[..i].contains(s) {
            return Err(EngineError::DuplicateSeed(*s).into());
        }
    }
    for part in seeds.chunks(chunk) {
        let out = run_batch_map(cfg, part, workers, |c, r| (RunRecord::new(c, &r), keep.then_some(r)))?;
        for (record, run) in out {
            if let (Some(sink), Some(run)) = (sink.as_deref_mut(), run) {
                sink(&cfg.with_seed(record.seed), &run)?;
            }
            records.push(record);
        }
    }
    Ok(records)
}

/// Runs the OAA batch at `oaa_interval`, equalises, then runs the AA batch.
pub fn run_pair(
    plan: &ExperimentPlan,
    oaa_interval: u64,
    mut sink: Option<&mut RunSink>,
) -> Result<PairedRow, ExperimentError> {
    let oaa_cfg = plan.arm_config(AlgoKind::Oaa, oaa_interval);
    let oaa_runs = run_arm(&oaa_cfg, &plan.seeds, plan.workers, sink.as_deref_mut())?;
    let oaa = ArmResult::from_runs(AlgoKind::Oaa, oaa_interval, oaa_runs).ok_or(ExperimentError::Empty("OAA arm"))?;
    let equalization = equalize_order_counts(&oaa.order_counts(), plan.base.t_e, &oaa_cfg.algo.expect("arm has algo"))
        .map_err(|source| ExperimentError::Equalize { interval: oaa_interval, source })?;
    let aa_cfg = plan.arm_config(AlgoKind::Aa, equalization.aa_interval);
    let aa_runs = run_arm(&aa_cfg, &plan.seeds, plan.workers, sink)?;
    let aa = ArmResult::from_runs(AlgoKind::Aa, equalization.aa_interval, aa_runs).ok_or(ExperimentError::Empty("AA arm"))?;
    Ok(PairedRow { oaa_interval, equalization, oaa, aa })
}

pub fn run_experiment(plan: &ExperimentPlan, mut sink: Option<&mut RunSink>) -> Result<ExperimentReport, ExperimentError> {
    if plan.oaa_intervals.is_empty() {
        return Err(ExperimentError::Empty("interval grid"));
    }
    let rows = plan
        .oaa_intervals
        .iter()
        .map(|l| run_pair(plan, *l, sink.as_deref_mut()))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ExperimentReport {
        schema_version: SCHEMA_VERSION,
        tool_version: TOOL_VERSION.to_string(),
        scenario: plan.base.scenario.kind,
        config_hash: plan.base.hash(),
        seeds: plan.seeds.clone(),
        rows,
    })
}

/// OAA decision intervals that land near the order counts of the reference
/// tables under the default parameters.
pub fn default_intervals(kind: ScenarioKind) -> Vec<u64> {
    match kind {
        ScenarioKind::Stable => vec![STABLE_LOW_INTERVAL, STABLE_HIGH_INTERVAL],
        ScenarioKind::Crash => vec![CRASH_INTERVAL],
        ScenarioKind::Surge => vec![SURGE_INTERVAL],
        ScenarioKind::Spoof => vec![SPOOF_INTERVAL],
    }
}

pub const STABLE_LOW_INTERVAL: u64 = 500;
pub const STABLE_HIGH_INTERVAL: u64 = 125;
pub const CRASH_INTERVAL: u64 = 700;
pub const SURGE_INTERVAL: u64 = 460;
pub const SPOOF_INTERVAL: u64 = 510;

/// Default sweep grid, from sparse to dense ordering.
pub const SWEEP_INTERVALS: [u64; 5] = [1_000, 500, 250, 150, 100];

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(String::new, |v| v.to_string())
}

/// Table-shaped CSV: one line per (grid point, metric) with AA and OAA
/// mean/sd side by side.
pub fn table_csv(report: &ExperimentReport) -> String {
    let mut out = String::from("oaa_interval,aa_interval,metric,aa_mean,aa_sd,oaa_mean,oaa_sd\n");
    for row in &report.rows {
        let metrics: [(&str, Option<Stat>, Option<Stat>); 3] = [
            ("orders", Some(row.aa.orders), Some(row.oaa.orders)),
            ("tc", row.aa.tc, row.oaa.tc),
            ("avg_price", Some(row.aa.avg_price), Some(row.oaa.avg_price)),
        ];
        for (name, aa, oaa) in metrics {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                row.oaa_interval,
                row.aa.decision_interval,
                name,
                fmt_opt(aa.map(|s| s.mean)),
                fmt_opt(aa.map(|s| s.sd)),
                fmt_opt(oaa.map(|s| s.mean)),
                fmt_opt(oaa.map(|s| s.sd)),
            ));
        }
    }
    out
}

/// Trading cost against order count, one line per grid point.
pub fn sweep_csv(report: &ExperimentReport) -> String {
    let mut out =
        String::from("oaa_interval,aa_interval,orders_oaa,orders_aa,tc_oaa,tc_oaa_sd,tc_aa,tc_aa_sd,tc_gap\n");
    for row in &report.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            row.oaa_interval,
            row.aa.decision_interval,
            row.oaa.orders.mean,
            row.aa.orders.mean,
            fmt_opt(row.oaa.tc.map(|s| s.mean)),
            fmt_opt(row.oaa.tc.map(|s| s.sd)),
            fmt_opt(row.aa.tc.map(|s| s.mean)),
            fmt_opt(row.aa.tc.map(|s| s.sd)),
            fmt_opt(row.tc_gap()),
        ));
    }
    out
}

/// Crash/surge interval analysis: where the OAA bought versus the whole run.
pub fn interval_csv(report: &ExperimentReport) -> String {
    let mut out = String::from(
        "oaa_interval,interval_avg_price_oaa,all_avg_price_oaa,all_avg_price_aa,oaa_fill_share,aa_fill_share\n",
    );
    for row in &report.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            row.oaa_interval,
            fmt_opt(row.oaa.interval_avg_price.map(|s| s.mean)),
            row.oaa.avg_price.mean,
            row.aa.avg_price.mean,
            fmt_opt(row.oaa.interval_fill_share.map(|s| s.mean)),
            fmt_opt(row.aa.interval_fill_share.map(|s| s.mean)),
        ));
    }
    out
}

/// Per-run metrics for every arm.
pub fn runs_csv(report: &ExperimentReport) -> String {
    let mut out = String::from("oaa_interval,algo,decision_interval,seed,orders,tc,avg_price,kurtosis,obi_concordance\n");
    for row in &report.rows {
        for arm in [&row.oaa, &row.aa] {
            for r in &arm.runs {
                out.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{}\n",
                    row.oaa_interval,
                    arm.kind.as_str(),
                    arm.decision_interval,
                    r.seed,
                    r.metrics.n_fills,
                    fmt_opt(r.metrics.tc),
                    r.metrics.avg_market_price,
                    fmt_opt(r.metrics.kurtosis),
                    r.metrics.obi_concordance,
                ));
            }
        }
    }
    out
}
