//! The simulation loop.
//!
//! Every step hosts exactly one agent action. Within a step the order of
//! effects is: expiry, spoof maintenance, agent action, recording. Normal
//! agents take turns round-robin; algorithm agents take the steps assigned
//! by [`schedule_turn`].

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{
    order_from_expectation, AgentParams, AgentRng, MarketView, NormalAgentState, OrderDecision,
    OrderIntent,
};
use crate::config::ConfigError;
use crate::execution::{decide, schedule_turn, Decision, ExecAlgoConfig, FillRecord, Turn};
use crate::orderbook::{BookError, Order, OrderBook, Owner, Price, Side, Time, Trade};
use crate::scenarios::{maybe_force_order, ScenarioConfig, ScenarioKind, ScenarioRng, SpoofEvent, Spoofer};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub agents: AgentParams,
    pub tick_size: Price,
    pub fundamental_price: Price,
    pub t_c: Time,
    pub t_e: Time,
    pub n_normal_agents: u32,
    /// `None` runs the market without algorithm agents.
    pub algo: Option<ExecAlgoConfig>,
    pub scenario: ScenarioConfig,
    /// Window for the recorded depth series.
    pub depth_window: Price,
    pub seed: u64,
    pub return_sampling_interval: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            agents: AgentParams::default(),
            tick_size: 1,
            fundamental_price: 10_000,
            t_c: 20_000,
            t_e: 400_000,
            n_normal_agents: 990,
            algo: None,
            scenario: ScenarioConfig::new(ScenarioKind::Stable),
            depth_window: 50,
            seed: 1,
            return_sampling_interval: 100,
        }
    }
}

impl SimConfig {
    pub fn with_seed(&self, seed: u64) -> SimConfig {
        SimConfig { seed, ..*self }
    }

    pub fn with_algo(&self, algo: Option<ExecAlgoConfig>) -> SimConfig {
        SimConfig { algo, ..*self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct OrderCounts {
    pub normal_orders: u64,
    pub forced_orders: u64,
    pub skipped_turns: u64,
    pub algo_turns: u64,
    pub algo_orders: u64,
    pub no_liquidity: u64,
    pub expired: u64,
    pub spoof_placed: u64,
    pub spoof_cancelled: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightSample {
    pub time: Time,
    pub agent: u32,
    pub w1: f64,
    pub w2: f64,
}

/// Full trace of one run. Series are indexed by `step - 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub seed: u64,
    pub price_series: Vec<Price>,
    pub buy_depth: Vec<u32>,
    pub sell_depth: Vec<u32>,
    pub trades: Vec<Trade>,
    pub fills: Vec<FillRecord>,
    pub counts: OrderCounts,
    pub spoof_events: Vec<SpoofEvent>,
    pub weight_trace: Vec<WeightSample>,
}

impl RunResult {
    pub fn steps(&self) -> usize {
        self.price_series.len()
    }

    /// Signed order book imbalance recorded at the end of each step.
    pub fn obi_series(&self) -> impl Iterator<Item = i64> + '_ {
        self.buy_depth
            .iter()
            .zip(&self.sell_depth)
            .map(|(b, s)| *b as i64 - *s as i64)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Sample every agent's weights each time `t` is a multiple of this.
    pub weight_trace_every: Option<Time>,
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("seed {0} appears more than once in the batch")]
    DuplicateSeed(u64),
    #[error("could not build worker pool: {0}")]
    Pool(String),
}

pub struct Simulation {
    cfg: SimConfig,
    opts: RunOptions,
    book: OrderBook,
    agents: Vec<NormalAgentState>,
    view: MarketView,
    agent_rng: AgentRng,
    scenario_rng: ScenarioRng,
    spoofer: Spoofer,
    next_agent: usize,
    t: Time,
    buy_depth: Vec<u32>,
    sell_depth: Vec<u32>,
    fills: Vec<FillRecord>,
    counts: OrderCounts,
    spoof_events: Vec<SpoofEvent>,
    weight_trace: Vec<WeightSample>,
}

impl Simulation {
    pub fn new(cfg: &SimConfig, opts: RunOptions) -> Result<Simulation, ConfigError> {
        cfg.validate()?;
        let steps = cfg.t_e as usize;
        Ok(Simulation {
            cfg: *cfg,
            opts,
            book: OrderBook::new(),
            agents: NormalAgentState::population(&cfg.agents, cfg.n_normal_agents as usize, cfg.seed),
            view: MarketView::with_capacity(cfg.fundamental_price, steps + 1),
            agent_rng: AgentRng::new(cfg.seed),
            scenario_rng: ScenarioRng::new(cfg.seed),
            spoofer: Spoofer::new(),
            next_agent: 0,
            t: 0,
            buy_depth: Vec::with_capacity(steps),
            sell_depth: Vec::with_capacity(steps),
            fills: Vec::new(),
            counts: OrderCounts::default(),
            spoof_events: Vec::new(),
            weight_trace: Vec::new(),
        })
    }

    pub fn book(&self) -> &OrderBook {
        &self.book
    }

    pub fn agents(&self) -> &[NormalAgentState] {
        &self.agents
    }

    pub fn now(&self) -> Time {
        self.t
    }

    pub fn is_done(&self) -> bool {
        self.t >= self.cfg.t_e
    }

    /// Advances one step. Returns who acted.
    pub fn step(&mut self) -> Turn {
        self.t += 1;
        let t = self.t;

        self.counts.expired += self.book.expire_orders(t) as u64;

        let (tick, event) = self.spoofer.tick(&self.cfg.scenario, &mut self.book, t);
        self.counts.spoof_placed += tick.placed as u64;
        self.counts.spoof_cancelled += tick.cancelled as u64;
        self.spoof_events.extend(event);

        let turn = match &self.cfg.algo {
            Some(algo) => schedule_turn(t, algo),
            None => Turn::Normal,
        };
        match turn {
            Turn::Algo(k) => self.algo_turn(k),
            Turn::Normal => self.normal_turn(),
        }

        let price = self.book.last_trade_price().unwrap_or(self.cfg.fundamental_price);
        self.view.push(price);
        let w = self.cfg.depth_window;
        self.buy_depth.push(self.book.depth(Side::Buy, w, true) as u32);
        self.sell_depth.push(self.book.depth(Side::Sell, w, true) as u32);

        if let Some(every) = self.opts.weight_trace_every {
            if every > 0 && t.is_multiple_of(every) {
                self.weight_trace.extend(self.agents.iter().enumerate().map(|(j, a)| WeightSample {
                    time: t,
                    agent: j as u32,
                    w1: a.w1,
                    w2: a.w2,
                }));
            }
        }
        turn
    }

    fn algo_turn(&mut self, k: u32) {
        let algo = self.cfg.algo.expect("algorithm turn without algorithm agents");
        self.counts.algo_turns += 1;
        if decide(algo.kind, &self.book, algo.depth_window) == Decision::NoOrder {
            return;
        }
        match self.book.submit_market(Side::Buy, Owner::Algo(k - 1), self.t) {
            Ok(trade) => {
                self.counts.algo_orders += 1;
                self.fills.push(FillRecord {
                    time: self.t,
                    algo_index: k,
                    price: trade.price,
                });
            }
            Err(BookError::NoLiquidity) => self.counts.no_liquidity += 1,
            Err(e) => unreachable!("market order rejected: {e}"),
        }
    }

    fn normal_turn(&mut self) {
        let t = self.t;
        let j = self.next_agent;
        self.next_agent = (j + 1) % self.agents.len();
        let params = &self.cfg.agents;
        let agent = &mut self.agents[j];

        let (r1, r2) = agent.strategy_returns(&self.view, t);
        agent.learn(r1, r2, &self.view, t, params, &mut self.agent_rng);
        debug_assert!((0.0..=params.w1_max).contains(&agent.w1));
        debug_assert!((0.0..=params.w2_max).contains(&agent.w2));

        // The model order is always drawn so that the agent streams stay
        // aligned whether or not a forced order replaces it.
        let eps = self.agent_rng.noise(params.sigma_eps);
        let model = match agent.combine(r1, r2, eps) {
            Ok(re) => order_from_expectation(re, &self.view, t, params, self.cfg.tick_size, &mut self.agent_rng),
            Err(_) => OrderDecision::Skip,
        };
        let forced = maybe_force_order(&self.cfg.scenario, t, &mut self.scenario_rng);

        let intent = match (forced, model) {
            (Some(f), _) => {
                self.counts.forced_orders += 1;
                OrderIntent { side: f.side, price: f.price }
            }
            (None, OrderDecision::Place(intent)) => {
                self.counts.normal_orders += 1;
                intent
            }
            (None, OrderDecision::Skip) => {
                self.counts.skipped_turns += 1;
                return;
            }
        };
        let id = self.book.next_order_id();
        let order = Order::limit(id, intent.side, intent.price, Owner::Normal(j as u32), t, self.cfg.t_c);
        self.book
            .submit_limit(order)
            .expect("agent orders are validated before submission");
    }

    pub fn finish(self) -> RunResult {
        let price_series = self.view.series()[1..].to_vec();
        RunResult {
            seed: self.cfg.seed,
            price_series,
            buy_depth: self.buy_depth,
            sell_depth: self.sell_depth,
            trades: self.book.into_tape(),
            fills: self.fills,
            counts: self.counts,
            spoof_events: self.spoof_events,
            weight_trace: self.weight_trace,
        }
    }
}

pub fn run_simulation(cfg: &SimConfig) -> Result<RunResult, ConfigError> {
    run_simulation_with(cfg, RunOptions::default())
}

pub fn run_simulation_with(cfg: &SimConfig, opts: RunOptions) -> Result<RunResult, ConfigError> {
    let mut sim = Simulation::new(cfg, opts)?;
    while !sim.is_done() {
        sim.step();
    }
    Ok(sim.finish())
}

/// Runs one simulation per seed on at most `workers` threads and maps each
/// result through `f` inside the worker. Output is in seed order.
pub fn run_batch_map<T, F>(cfg: &SimConfig, seeds: &[u64], workers: usize, f: F) -> Result<Vec<T>, EngineError>
where
    T: Send,
    F: Fn(&SimConfig, RunResult) -> T + Sync,
{
    for (i, s) in seeds.iter().enumerate() {
        if seeds[..i].contains(s) {
            return Err(EngineError::DuplicateSeed(*s));
        }
    }
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| EngineError::Pool(e.to_string()))?;
    pool.install(|| {
        seeds
            .par_iter()
            .map(|seed| {
                let run_cfg = cfg.with_seed(*seed);
                let result = run_simulation(&run_cfg)?;
                Ok(f(&run_cfg, result))
            })
            .collect()
    })
}

pub fn run_batch(cfg: &SimConfig, seeds: &[u64], workers: usize) -> Result<Vec<RunResult>, EngineError> {
    run_batch_map(cfg, seeds, workers, |_, r| r)
}
