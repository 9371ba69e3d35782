//! Config file / CLI override handling.
//!
//! [`RawConfig`] mirrors every [`SimConfig`] field as an optional flat key so
//! that one struct serves both the TOML file and the command-line flags.
//! Missing keys take the default parameter set; unknown keys are rejected.

use std::fmt;
use std::path::Path;

use clap::Args;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::agents::AgentParams;
use crate::engine::SimConfig;
use crate::execution::{AlgoKind, ExecAlgoConfig};
use crate::scenarios::{ScenarioConfig, ScenarioKind};

/// Decision interval used when none is given. Lands in the low order
/// frequency regime for OAA in a stable market.
pub const DEFAULT_DECISION_INTERVAL: u64 = 500;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldError {
    pub field: &'static str,
    pub message: String,
}

impl fmt::Display for FieldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid configuration:\n{}", list(.0))]
    Invalid(Vec<FieldError>),
    #[error("cannot read config file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse config file {path}: {message}")]
    Parse { path: String, message: String },
}

fn list(errors: &[FieldError]) -> String {
    errors.iter().map(|e| format!("  - {e}")).collect::<Vec<_>>().join("\n")
}

impl ConfigError {
    pub fn fields(&self) -> Vec<&'static str> {
        match self {
            ConfigError::Invalid(errs) => errs.iter().map(|e| e.field).collect(),
            _ => Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, Args)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    /// Master RNG seed
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Number of normal agents
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_normal_agents: Option<u32>,
    /// Number of algorithm agents
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_algo_agents: Option<u32>,
    /// Algorithm agent type: none, aa or oaa
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub algo: Option<String>,
    /// Steps between algorithm decision turns
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub decision_interval: Option<u64>,
    /// First step with an algorithm decision turn
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub start_time: Option<u64>,
    /// Depth/OBI window in ticks
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub depth_window: Option<i64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub w1_max: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub w2_max: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub u_max: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau_max: Option<u64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_eps: Option<f64>,
    /// Order price dispersion relative to the expected price
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub est: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tick_size: Option<i64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fundamental_price: Option<i64>,
    /// Learning lookback in steps
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_l: Option<u64>,
    /// Order lifetime in steps
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_c: Option<u64>,
    /// Final step
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_e: Option<u64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k_l: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_l: Option<f64>,
    /// Market environment: stable, crash, surge or spoof
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scenario: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window_start: Option<u64>,
    /// Exclusive end of the crash/surge window
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window_end: Option<u64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub forced_order_probability: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub forced_sell_price: Option<i64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub forced_buy_price: Option<i64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spoof_cycle: Option<u64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spoof_count: Option<u32>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spoof_placement_window: Option<i64>,
    /// Steps between price samples for return statistics
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub return_sampling_interval: Option<u64>,
}

macro_rules! merge_fields {
    ($dst:ident, $src:ident; $($f:ident),* $(,)?) => {
        $( if $src.$f.is_some() { $dst.$f = $src.$f.clone(); } )*
    };
}

impl RawConfig {
    pub fn from_toml_str(text: &str, origin: &str) -> Result<RawConfig, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: origin.to_string(),
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<RawConfig, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        RawConfig::from_toml_str(&text, &path.display().to_string())
    }

    /// Fields set in `other` win.
    pub fn merged(mut self, other: &RawConfig) -> RawConfig {
        merge_fields!(self, other;
            seed, n_normal_agents, n_algo_agents, algo, decision_interval, start_time,
            depth_window, w1_max, w2_max, u_max, tau_max, sigma_eps, est, tick_size,
            fundamental_price, t_l, t_c, t_e, k_l, delta_l, scenario, window_start,
            window_end, forced_order_probability, forced_sell_price, forced_buy_price,
            spoof_cycle, spoof_count, spoof_placement_window, return_sampling_interval);
        self
    }

    /// Applies defaults and checks every field. All violations are reported.
    pub fn validate(&self) -> Result<SimConfig, ConfigError> {
        let mut errors = Vec::new();
        let d = SimConfig::default();
        let da = d.agents;
        let ds = ScenarioConfig::new(ScenarioKind::Stable);

        let scenario_kind = match self.scenario.as_deref() {
            None => ScenarioKind::Stable,
            Some(s) => s.parse().unwrap_or_else(|msg| {
                errors.push(FieldError { field: "scenario", message: msg });
                ScenarioKind::Stable
            }),
        };
        let algo_kind = match self.algo.as_deref() {
            None | Some("oaa") => Some(AlgoKind::Oaa),
            Some("aa") => Some(AlgoKind::Aa),
            Some("none") => None,
            Some(other) => {
                errors.push(FieldError {
                    field: "algo",
                    message: format!("unknown algorithm `{other}` (expected none, aa or oaa)"),
                });
                None
            }
        };
        let depth_window = self.depth_window.unwrap_or(d.depth_window);
        let cfg = SimConfig {
            agents: AgentParams {
                w1_max: self.w1_max.unwrap_or(da.w1_max),
                w2_max: self.w2_max.unwrap_or(da.w2_max),
                u_max: self.u_max.unwrap_or(da.u_max),
                tau_max: self.tau_max.unwrap_or(da.tau_max),
                sigma_eps: self.sigma_eps.unwrap_or(da.sigma_eps),
                est: self.est.unwrap_or(da.est),
                t_l: self.t_l.unwrap_or(da.t_l),
                k_l: self.k_l.unwrap_or(da.k_l),
                delta_l: self.delta_l.unwrap_or(da.delta_l),
            },
            tick_size: self.tick_size.unwrap_or(d.tick_size),
            fundamental_price: self.fundamental_price.unwrap_or(d.fundamental_price),
            t_c: self.t_c.unwrap_or(d.t_c),
            t_e: self.t_e.unwrap_or(d.t_e),
            n_normal_agents: self.n_normal_agents.unwrap_or(d.n_normal_agents),
            algo: algo_kind.map(|kind| ExecAlgoConfig {
                kind,
                count: self.n_algo_agents.unwrap_or(10),
                decision_interval: self.decision_interval.unwrap_or(DEFAULT_DECISION_INTERVAL),
                start_time: self.start_time.unwrap_or(100_000),
                depth_window,
            }),
            scenario: ScenarioConfig {
                kind: scenario_kind,
                window_start: self.window_start.unwrap_or(ds.window_start),
                window_end: self.window_end.unwrap_or(ds.window_end),
                forced_order_probability: self
                    .forced_order_probability
                    .unwrap_or(ds.forced_order_probability),
                forced_sell_price: self.forced_sell_price.unwrap_or(ds.forced_sell_price),
                forced_buy_price: self.forced_buy_price.unwrap_or(ds.forced_buy_price),
                spoof_cycle: self.spoof_cycle.unwrap_or(ds.spoof_cycle),
                spoof_count: self.spoof_count.unwrap_or(ds.spoof_count),
                spoof_placement_window: self
                    .spoof_placement_window
                    .unwrap_or(ds.spoof_placement_window),
            },
            depth_window,
            seed: self.seed.unwrap_or(d.seed),
            return_sampling_interval: self
                .return_sampling_interval
                .unwrap_or(d.return_sampling_interval),
        };
        errors.extend(cfg.field_errors());
        if errors.is_empty() {
            Ok(cfg)
        } else {
            Err(ConfigError::Invalid(errors))
        }
    }

    /// Fully populated raw form of a validated config.
    pub fn from_sim(cfg: &SimConfig) -> RawConfig {
        let a = &cfg.agents;
        let s = &cfg.scenario;
        let algo = cfg.algo.as_ref();
        RawConfig {
            seed: Some(cfg.seed),
            n_normal_agents: Some(cfg.n_normal_agents),
            n_algo_agents: algo.map(|x| x.count),
            algo: Some(algo.map_or("none", |x| x.kind.as_str()).to_string()),
            decision_interval: algo.map(|x| x.decision_interval),
            start_time: algo.map(|x| x.start_time),
            depth_window: Some(cfg.depth_window),
            w1_max: Some(a.w1_max),
            w2_max: Some(a.w2_max),
            u_max: Some(a.u_max),
            tau_max: Some(a.tau_max),
            sigma_eps: Some(a.sigma_eps),
            est: Some(a.est),
            tick_size: Some(cfg.tick_size),
            fundamental_price: Some(cfg.fundamental_price),
            t_l: Some(a.t_l),
            t_c: Some(cfg.t_c),
            t_e: Some(cfg.t_e),
            k_l: Some(a.k_l),
            delta_l: Some(a.delta_l),
            scenario: Some(s.kind.as_str().to_string()),
            window_start: Some(s.window_start),
            window_end: Some(s.window_end),
            forced_order_probability: Some(s.forced_order_probability),
            forced_sell_price: Some(s.forced_sell_price),
            forced_buy_price: Some(s.forced_buy_price),
            spoof_cycle: Some(s.spoof_cycle),
            spoof_count: Some(s.spoof_count),
            spoof_placement_window: Some(s.spoof_placement_window),
            return_sampling_interval: Some(cfg.return_sampling_interval),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let errors = self.field_errors();
        if errors.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(errors))
        }
    }

    fn field_errors(&self) -> Vec<FieldError> {
        let mut errors = Vec::new();
        let mut check = |ok: bool, field: &'static str, message: &str| {
            if !ok {
                errors.push(FieldError { field, message: message.to_string() });
            }
        };
        let a = &self.agents;
        let finite_nonneg = |x: f64| x.is_finite() && x >= 0.0;
        check(a.w1_max.is_finite() && a.w1_max > 0.0, "w1_max", "must be positive");
        check(a.w2_max.is_finite() && a.w2_max > 0.0, "w2_max", "must be positive");
        check(finite_nonneg(a.u_max), "u_max", "must be non-negative");
        check(a.tau_max >= 1, "tau_max", "must be at least 1");
        check(finite_nonneg(a.sigma_eps), "sigma_eps", "must be non-negative");
        check(finite_nonneg(a.est), "est", "must be non-negative");
        check(a.t_l >= 1, "t_l", "must be at least 1");
        check(finite_nonneg(a.k_l), "k_l", "must be non-negative");
        check((0.0..=1.0).contains(&a.delta_l), "delta_l", "must lie in [0, 1]");
        check(self.tick_size >= 1, "tick_size", "must be at least 1");
        check(self.fundamental_price >= 1, "fundamental_price", "must be at least 1");
        check(self.t_c >= 1, "t_c", "must be at least 1");
        check(self.t_e >= 1, "t_e", "must be at least 1");
        check(self.n_normal_agents >= 1, "n_normal_agents", "must be at least 1");
        check(self.depth_window >= 1, "depth_window", "must be at least 1");
        check(self.return_sampling_interval >= 1, "return_sampling_interval", "must be at least 1");
        if let Some(algo) = &self.algo {
            check(algo.count >= 1, "n_algo_agents", "must be at least 1");
            check(algo.decision_interval >= 1, "decision_interval", "must be at least 1");
            check(algo.depth_window >= 1, "depth_window", "must be at least 1");
        }
        let s = &self.scenario;
        check(
            (0.0..=1.0).contains(&s.forced_order_probability),
            "forced_order_probability",
            "must lie in [0, 1]",
        );
        check(s.window_start < s.window_end, "window_end", "must be after window_start");
        check(s.forced_sell_price >= 1, "forced_sell_price", "must be at least 1");
        check(s.forced_buy_price >= 1, "forced_buy_price", "must be at least 1");
        check(s.spoof_cycle >= 1, "spoof_cycle", "must be at least 1");
        check(s.spoof_placement_window >= 1, "spoof_placement_window", "must be at least 1");
        errors
    }

    /// Canonical TOML text of the config; hashed for provenance.
    pub fn to_toml(&self) -> String {
        toml::to_string(&RawConfig::from_sim(self)).expect("raw config serialises")
    }

    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }
}
