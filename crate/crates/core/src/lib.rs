//! Artificial stock market with normal agents and execution-algorithm agents,
//! used to compare a plain periodic buyer against one that only buys when the
//! order book leans toward buyers.
//!
//! The crate is organised bottom-up:
//!
//! * [`orderbook`]: continuous double auction with price-time priority.
//! * [`agents`]: normal agents (fundamental / technical / noise mix with learning).
//! * [`execution`]: the AA and OAA algorithm agents and order-count matching.
//! * [`scenarios`]: crash, surge and spoofing environments.
//! * [`engine`]: the deterministic step loop and batch runner.
//! * [`metrics`]: trading cost, stylized facts, OBI concordance.
//! * [`experiment`]: the two-phase OAA-then-AA protocol and interval sweeps.
//! * [`persist`]: CSV/JSON run artifacts.

pub mod agents;
pub mod config;
pub mod engine;
pub mod execution;
pub mod experiment;
pub mod metrics;
pub mod orderbook;
pub mod persist;
pub mod rng;
pub mod scenarios;

pub use config::{ConfigError, RawConfig};
pub use engine::{run_batch, run_simulation, RunResult, SimConfig};
pub use execution::{AlgoKind, ExecAlgoConfig};
pub use metrics::MetricsSummary;
pub use orderbook::{Order, OrderBook, OrderId, Owner, Price, Side, Time, Trade};
pub use scenarios::{ScenarioConfig, ScenarioKind};
