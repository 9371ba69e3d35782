//! Execution-algorithm agents.
//!
//! A plain agent (AA) sends a one-share market buy on every decision turn.
//! The imbalance-aware agent (OAA) only buys when buy depth strictly exceeds
//! sell depth inside the depth window. Decision turns start at `start_time`
//! and recur every `decision_interval` steps, rotating through the agents.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::orderbook::{OrderBook, Price, Side, Time};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlgoKind {
    Aa,
    Oaa,
}

impl AlgoKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AlgoKind::Aa => "aa",
            AlgoKind::Oaa => "oaa",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecAlgoConfig {
    pub kind: AlgoKind,
    pub count: u32,
    pub decision_interval: u64,
    pub start_time: Time,
    pub depth_window: Price,
}

impl ExecAlgoConfig {
    pub fn new(kind: AlgoKind, decision_interval: u64) -> ExecAlgoConfig {
        ExecAlgoConfig {
            kind,
            count: 10,
            decision_interval,
            start_time: 100_000,
            depth_window: 50,
        }
    }

    /// Number of decision turns in steps `1..=horizon`.
    pub fn decision_turns(&self, horizon: Time) -> u64 {
        if horizon < self.start_time || self.decision_interval == 0 {
            return 0;
        }
        (horizon - self.start_time) / self.decision_interval + 1
    }
}

/// One market buy filled for an algorithm agent. `algo_index` is 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FillRecord {
    pub time: Time,
    pub algo_index: u32,
    pub price: Price,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    PlaceMarketBuy,
    NoOrder,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Turn {
    Normal,
    /// Decision turn of algorithm agent `k`, 1-based.
    Algo(u32),
}

pub fn decide(kind: AlgoKind, book: &OrderBook, window: Price) -> Decision {
    match kind {
        AlgoKind::Aa => Decision::PlaceMarketBuy,
        AlgoKind::Oaa => {
            if book.depth(Side::Buy, window, true) > book.depth(Side::Sell, window, true) {
                Decision::PlaceMarketBuy
            } else {
                Decision::NoOrder
            }
        }
    }
}

pub fn schedule_turn(t: Time, cfg: &ExecAlgoConfig) -> Turn {
    if t < cfg.start_time || cfg.count == 0 || cfg.decision_interval == 0 {
        return Turn::Normal;
    }
    let since = t - cfg.start_time;
    if !since.is_multiple_of(cfg.decision_interval) {
        return Turn::Normal;
    }
    let slot = since / cfg.decision_interval;
    Turn::Algo((slot % cfg.count as u64) as u32 + 1)
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExecError {
    #[error("no OAA order counts to equalise against")]
    EmptyCounts,
    #[error("run {0} recorded zero OAA orders")]
    ZeroCount(usize),
    #[error("target of {target} orders exceeds the {span} steps available after activation")]
    InfeasibleTarget { target: u64, span: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Equalization {
    pub mean_oaa_orders: f64,
    pub target: u64,
    pub aa_interval: u64,
    pub implied_aa_orders: u64,
}

/// Picks the AA decision interval so that the AA order count matches the
/// mean OAA order count over a seed set.
pub fn equalize_order_counts(
    oaa_counts: &[u64],
    horizon: Time,
    cfg: &ExecAlgoConfig,
) -> Result<Equalization, ExecError> {
    if oaa_counts.is_empty() {
        return Err(ExecError::EmptyCounts);
    }
    if let Some(i) = oaa_counts.iter().position(|c| *c == 0) {
        return Err(ExecError::ZeroCount(i));
    }
    let mean = oaa_counts.iter().sum::<u64>() as f64 / oaa_counts.len() as f64;
    let target = mean.round() as u64;
    let span = horizon.saturating_sub(cfg.start_time);
    if target > span {
        return Err(ExecError::InfeasibleTarget { target, span });
    }
    // The schedule includes the activation step, so span / l undercounts by
    // one. Search near the nominal interval for the closest actual count.
    let ideal = span as f64 / target as f64;
    let nominal = (ideal.round() as u64).max(1);
    let turns = |l: u64| ExecAlgoConfig { decision_interval: l, ..*cfg }.decision_turns(horizon);
    let aa_interval = (nominal.saturating_sub(1).max(1)..=nominal + nominal / target + 1)
        .min_by(|a, b| {
            let key = |l: u64| (turns(l).abs_diff(target), (l as f64 - ideal).abs());
            key(*a).partial_cmp(&key(*b)).expect("finite")
        })
        .expect("non-empty range");
    Ok(Equalization {
        mean_oaa_orders: mean,
        target,
        aa_interval,
        implied_aa_orders: turns(aa_interval),
    })
}
