//! Normal agents: a learned mix of fundamental, technical and noise
//! strategies that emits one-share limit orders.
//!
//! Each turn runs the learning update first and then the order process:
//!
//! ```text
//! re = (w1*r1 + w2*r2 + u*eps) / (w1 + w2 + u)
//! r1 = ln(Pf / P[t-1])          r2 = ln(P[t-1] / P[t-1-tau])
//! Pe = P[t-1] * exp(re)         Po ~ Normal(Pe, Pe * est)
//! ```
//!
//! An order price below `Pe` becomes a buy, above `Pe` a sell.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::orderbook::{Price, Side, Time};
use crate::rng::{substream, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentParams {
    pub w1_max: f64,
    pub w2_max: f64,
    pub u_max: f64,
    pub tau_max: u64,
    pub sigma_eps: f64,
    /// Order-price spread as a fraction of `Pe`. Values much below ~0.01
    /// leave too little resting depth for the market to absorb a shock.
    pub est: f64,
    pub t_l: u64,
    pub k_l: f64,
    pub delta_l: f64,
}

impl Default for AgentParams {
    fn default() -> Self {
        AgentParams {
            w1_max: 1.0,
            w2_max: 10.0,
            u_max: 1.0,
            tau_max: 10_000,
            sigma_eps: 0.06,
            est: 0.07,
            t_l: 10_000,
            k_l: 4.0,
            delta_l: 0.01,
        }
    }
}

#[derive(Debug, Error, Clone, Copy, PartialEq)]
pub enum AgentError {
    #[error("strategy weights sum to zero")]
    DegenerateWeights,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalAgentState {
    /// Fundamental weight, in `[0, w1_max]`.
    pub w1: f64,
    /// Technical weight, in `[0, w2_max]`.
    pub w2: f64,
    /// Noise weight; fixed after initialisation.
    pub u: f64,
    /// Technical lookback in steps, in `[1, tau_max]`.
    pub tau: u64,
}

/// Market price history seen by the agents.
///
/// Index 0 holds `P0 = Pf`. Queries before 0 return `Pf`; queries past the
/// last recorded step return the last price. Returns whose lookback starts
/// before step 0 are zero: an agent has no signal until its window fits in
/// the recorded history.
#[derive(Debug, Clone)]
pub struct MarketView {
    fundamental: Price,
    ln_fundamental: f64,
    prices: Vec<Price>,
    log_prices: Vec<f64>,
}

impl MarketView {
    pub fn new(fundamental: Price) -> MarketView {
        let ln_f = (fundamental as f64).ln();
        MarketView {
            fundamental,
            ln_fundamental: ln_f,
            prices: vec![fundamental],
            log_prices: vec![ln_f],
        }
    }

    pub fn with_capacity(fundamental: Price, steps: usize) -> MarketView {
        let mut view = MarketView::new(fundamental);
        view.prices.reserve(steps);
        view.log_prices.reserve(steps);
        view
    }

    /// Builds a view from an explicit history where `history[0]` is `P0`.
    pub fn from_history(fundamental: Price, history: &[Price]) -> MarketView {
        let mut view = MarketView::new(fundamental);
        if let Some((first, rest)) = history.split_first() {
            view.prices[0] = *first;
            view.log_prices[0] = (*first as f64).ln();
            rest.iter().for_each(|p| view.push(*p));
        }
        view
    }

    pub fn fundamental(&self) -> Price {
        self.fundamental
    }

    /// Appends the market price for the next step.
    pub fn push(&mut self, price: Price) {
        self.prices.push(price);
        self.log_prices.push((price as f64).ln());
    }

    /// Last recorded step index.
    pub fn now(&self) -> Time {
        (self.prices.len() - 1) as Time
    }

    pub fn price_at(&self, t: i64) -> Price {
        if t < 0 {
            self.fundamental
        } else {
            let i = (t as usize).min(self.prices.len() - 1);
            self.prices[i]
        }
    }

    fn ln_price_at(&self, t: i64) -> f64 {
        if t < 0 {
            self.ln_fundamental
        } else {
            let i = (t as usize).min(self.log_prices.len() - 1);
            self.log_prices[i]
        }
    }

    /// `ln(P[t] / P[t - lag])`, or 0 when `t - lag < 0`.
    pub fn log_return(&self, t: i64, lag: u64) -> f64 {
        if t - (lag as i64) < 0 {
            return 0.0;
        }
        self.ln_price_at(t) - self.ln_price_at(t - lag as i64)
    }

    pub fn series(&self) -> &[Price] {
        &self.prices
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Expectation {
    pub re: f64,
    pub r1: f64,
    pub r2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OrderIntent {
    pub side: Side,
    pub price: Price,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OrderDecision {
    Place(OrderIntent),
    Skip,
}

/// Uniform draws consumed by one learning update. Drawn unconditionally so
/// the stream position depends only on the number of turns taken.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearnDraws {
    pub q: [f64; 2],
    pub reset_roll: [f64; 2],
    pub reset_value: [f64; 2],
}

/// Per-run random state for all normal-agent turns.
#[derive(Debug, Clone)]
pub struct AgentRng {
    learning: ChaCha8Rng,
    noise: ChaCha8Rng,
    order_price: ChaCha8Rng,
}

impl AgentRng {
    pub fn new(seed: u64) -> AgentRng {
        AgentRng {
            learning: substream(seed, Stream::Learning),
            noise: substream(seed, Stream::ExpectationNoise),
            order_price: substream(seed, Stream::OrderPrice),
        }
    }

    pub fn learn_draws(&mut self) -> LearnDraws {
        let r = &mut self.learning;
        LearnDraws {
            q: [r.random(), r.random()],
            reset_roll: [r.random(), r.random()],
            reset_value: [r.random(), r.random()],
        }
    }

    pub fn noise(&mut self, sigma: f64) -> f64 {
        let z: f64 = StandardNormal.sample(&mut self.noise);
        z * sigma
    }

    pub fn order_price(&mut self, mean: f64, sd: f64) -> f64 {
        match Normal::new(mean, sd) {
            Ok(dist) => dist.sample(&mut self.order_price),
            Err(_) => mean,
        }
    }
}

impl NormalAgentState {
    pub fn random<R: Rng + ?Sized>(params: &AgentParams, rng: &mut R) -> NormalAgentState {
        NormalAgentState {
            w1: rng.random::<f64>() * params.w1_max,
            w2: rng.random::<f64>() * params.w2_max,
            u: rng.random::<f64>() * params.u_max,
            tau: rng.random_range(1..=params.tau_max.max(1)),
        }
    }

    /// Draws a whole population from the agent-initialisation substream.
    pub fn population(params: &AgentParams, n: usize, seed: u64) -> Vec<NormalAgentState> {
        let mut rng = substream(seed, Stream::AgentInit);
        (0..n).map(|_| NormalAgentState::random(params, &mut rng)).collect()
    }

    /// Fundamental and technical strategy returns at step `t`.
    pub fn strategy_returns(&self, view: &MarketView, t: Time) -> (f64, f64) {
        let prev = t as i64 - 1;
        let r1 = view.ln_fundamental - view.ln_price_at(prev);
        let r2 = view.log_return(prev, self.tau);
        (r1, r2)
    }

    /// Expected return for a given noise realisation `eps`.
    pub fn expected_return_with(
        &self,
        view: &MarketView,
        t: Time,
        eps: f64,
    ) -> Result<Expectation, AgentError> {
        let (r1, r2) = self.strategy_returns(view, t);
        Ok(Expectation {
            re: self.combine(r1, r2, eps)?,
            r1,
            r2,
        })
    }

    pub fn expected_return(
        &self,
        view: &MarketView,
        t: Time,
        params: &AgentParams,
        rng: &mut AgentRng,
    ) -> Result<Expectation, AgentError> {
        let eps = rng.noise(params.sigma_eps);
        self.expected_return_with(view, t, eps)
    }

    pub fn combine(&self, r1: f64, r2: f64, eps: f64) -> Result<f64, AgentError> {
        let denom = self.w1 + self.w2 + self.u;
        if denom <= 0.0 {
            return Err(AgentError::DegenerateWeights);
        }
        Ok((self.w1 * r1 + self.w2 * r2 + self.u * eps) / denom)
    }

    /// Learning update against the realised return over `t_l` steps.
    pub fn learn(
        &mut self,
        r1: f64,
        r2: f64,
        view: &MarketView,
        t: Time,
        params: &AgentParams,
        rng: &mut AgentRng,
    ) {
        let r_l = view.log_return(t as i64 - 1, params.t_l);
        let draws = rng.learn_draws();
        self.learn_with([r1, r2], r_l, params, &draws);
    }

    pub fn learn_with(&mut self, r: [f64; 2], r_l: f64, params: &AgentParams, draws: &LearnDraws) {
        let maxes = [params.w1_max, params.w2_max];
        for (i, w) in [&mut self.w1, &mut self.w2].into_iter().enumerate() {
            // sign(0) is undefined; neither reward nor penalise.
            if r[i] != 0.0 && r_l != 0.0 {
                let step = params.k_l * r_l.abs() * draws.q[i];
                if (r[i] > 0.0) == (r_l > 0.0) {
                    *w += step * (maxes[i] - *w);
                } else {
                    *w -= step * *w;
                }
                *w = w.clamp(0.0, maxes[i]);
            }
            if draws.reset_roll[i] < params.delta_l {
                *w = draws.reset_value[i] * maxes[i];
            }
        }
    }
}

/// Expected price `Pe = P[t-1] * exp(re)`.
pub fn expected_price(re: f64, view: &MarketView, t: Time) -> f64 {
    view.price_at(t as i64 - 1) as f64 * re.exp()
}

/// Turns an order-price draw into a one-share order. The buy/sell choice is
/// made on the unrounded values.
pub fn order_from_draw(expected: f64, drawn: f64, tick: Price) -> OrderDecision {
    let side = if drawn < expected {
        Side::Buy
    } else if drawn > expected {
        Side::Sell
    } else {
        return OrderDecision::Skip;
    };
    match round_to_tick(drawn, tick) {
        Some(price) => OrderDecision::Place(OrderIntent { side, price }),
        None => OrderDecision::Skip,
    }
}

pub fn order_from_expectation(
    re: f64,
    view: &MarketView,
    t: Time,
    params: &AgentParams,
    tick: Price,
    rng: &mut AgentRng,
) -> OrderDecision {
    let pe = expected_price(re, view, t);
    let po = rng.order_price(pe, pe * params.est);
    order_from_draw(pe, po, tick)
}

/// Nearest multiple of `tick`; `None` below one tick.
/// Largest price an order may carry. Keeps book arithmetic and price sums
/// exact in both `i64` and `f64`.
pub const MAX_ORDER_PRICE: Price = 1 << 53;

pub fn round_to_tick(price: f64, tick: Price) -> Option<Price> {
    if !price.is_finite() {
        return None;
    }
    let ticks = (price / tick as f64).round();
    if ticks < 1.0 || ticks * tick as f64 > MAX_ORDER_PRICE as f64 {
        return None;
    }
    Some(ticks as Price * tick)
}
