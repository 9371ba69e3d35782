//! Naive reference matcher and random operation scripts shared by the
//! integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::Path;

use obisim::engine::SimConfig;
use obisim::execution::{AlgoKind, ExecAlgoConfig};
use obisim::orderbook::{BookError, Order, OrderBook, OrderId, Owner, Price, Side, Time, Trade};
use obisim::scenarios::{ScenarioConfig, ScenarioKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Linear-scan order book: every query walks the full resting list.
#[derive(Debug, Default, Clone)]
pub struct NaiveBook {
    pub resting: Vec<Order>,
    pub tape: Vec<Trade>,
    next_id: u64,
}

impl NaiveBook {
    pub fn next_order_id(&mut self) -> OrderId {
        let id = OrderId(self.next_id);
        self.next_id += 1;
        id
    }

    fn best_index(&self, side: Side) -> Option<usize> {
        let better = |a: &Order, b: &Order| match side {
            Side::Buy => (-a.price, a.placed_at, a.id.0) < (-b.price, b.placed_at, b.id.0),
            Side::Sell => (a.price, a.placed_at, a.id.0) < (b.price, b.placed_at, b.id.0),
        };
        let mut best: Option<usize> = None;
        for (i, o) in self.resting.iter().enumerate() {
            if o.side == side && best.is_none_or(|b| better(o, &self.resting[b])) {
                best = Some(i);
            }
        }
        best
    }

    pub fn best(&self, side: Side) -> Option<Price> {
        self.best_index(side).map(|i| self.resting[i].price)
    }

    fn trade(&mut self, side: Side, id: OrderId, owner: Owner, time: Time, resting: Order) -> Trade {
        let t = match side {
            Side::Buy => Trade {
                time,
                price: resting.price,
                buyer: owner,
                seller: resting.owner,
                buy_order_id: id,
                sell_order_id: resting.id,
            },
            Side::Sell => Trade {
                time,
                price: resting.price,
                buyer: resting.owner,
                seller: owner,
                buy_order_id: resting.id,
                sell_order_id: id,
            },
        };
        self.tape.push(t);
        t
    }

    pub fn submit_limit(&mut self, order: Order) -> Option<Trade> {
        self.next_id = self.next_id.max(order.id.0 + 1);
        let opp = order.side.opposite();
        if let Some(i) = self.best_index(opp) {
            let p = self.resting[i].price;
            let crosses = match order.side {
                Side::Buy => order.price >= p,
                Side::Sell => order.price <= p,
            };
            if crosses {
                let resting = self.resting.remove(i);
                return Some(self.trade(order.side, order.id, order.owner, order.placed_at, resting));
            }
        }
        self.resting.push(order);
        None
    }

    pub fn submit_market(&mut self, side: Side, owner: Owner, time: Time) -> Option<Trade> {
        let i = self.best_index(side.opposite())?;
        let resting = self.resting.remove(i);
        let id = self.next_order_id();
        Some(self.trade(side, id, owner, time, resting))
    }

    pub fn expire(&mut self, now: Time) -> usize {
        let before = self.resting.len();
        self.resting.retain(|o| o.is_spoof || o.cancel_at > now);
        before - self.resting.len()
    }

    pub fn cancel(&mut self, id: OrderId) -> Option<Order> {
        let i = self.resting.iter().position(|o| o.id == id)?;
        Some(self.resting.remove(i))
    }

    pub fn depth(&self, side: Side, window: Price, include_spoof: bool) -> u64 {
        let Some(best) = self.best(side) else { return 0 };
        let (lo, hi) = match side {
            Side::Buy => (best - window, best),
            Side::Sell => (best, best + window),
        };
        self.resting
            .iter()
            .filter(|o| o.side == side && (lo..=hi).contains(&o.price) && (include_spoof || !o.is_spoof))
            .count() as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Op {
    Limit { side: Side, price: Price, lifetime: Time },
    Market { side: Side },
    Spoof { price: Price },
    /// Cancel the n-th order ever submitted (modulo count).
    Cancel { nth: usize },
    Advance { dt: Time },
}

pub fn random_ops(rng: &mut impl Rng, len: usize) -> Vec<Op> {
    let side = |rng: &mut dyn rand::RngCore| if rng.random_bool(0.5) { Side::Buy } else { Side::Sell };
    (0..len)
        .map(|_| match rng.random_range(0..100) {
            0..=54 => Op::Limit {
                side: side(rng),
                price: rng.random_range(9_990..=10_010),
                lifetime: rng.random_range(1..=15),
            },
            55..=69 => Op::Market { side: side(rng) },
            70..=74 => Op::Spoof { price: rng.random_range(9_985..=10_000) },
            75..=84 => Op::Cancel { nth: rng.random_range(0..64) },
            _ => Op::Advance { dt: rng.random_range(0..=4) },
        })
        .collect()
}

pub fn ops_for_seed(seed: u64) -> Vec<Op> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len = rng.random_range(1..=50);
    random_ops(&mut rng, len)
}

/// Replays `ops` into both books, comparing observable state after every
/// operation. Returns the first divergence.
pub fn replay_against_reference(ops: &[Op]) -> Result<Vec<Trade>, String> {
    let mut book = OrderBook::new();
    let mut naive = NaiveBook::default();
    let mut now: Time = 1;
    let mut ids: Vec<OrderId> = Vec::new();
    for (step, op) in ops.iter().enumerate() {
        match *op {
            Op::Limit { side, price, lifetime } => {
                let id = book.next_order_id();
                let nid = naive.next_order_id();
                if id != nid {
                    return Err(format!("step {step}: id {id:?} vs {nid:?}"));
                }
                let order = Order::limit(id, side, price, Owner::Normal(step as u32), now, lifetime);
                book.submit_limit(order.clone()).map_err(|e| format!("step {step}: {e}"))?;
                naive.submit_limit(order);
                ids.push(id);
            }
            Op::Market { side } => {
                let got = book.submit_market(side, Owner::Algo(1), now);
                let want = naive.submit_market(side, Owner::Algo(1), now);
                match (got, want) {
                    (Ok(a), Some(b)) if a == b => {}
                    (Err(BookError::NoLiquidity), None) => {}
                    (a, b) => return Err(format!("step {step}: market {a:?} vs {b:?}")),
                }
            }
            Op::Spoof { price } => {
                let id = book.next_order_id();
                naive.next_order_id();
                let order = Order::spoof(id, price, now);
                book.submit_limit(order.clone()).map_err(|e| format!("step {step}: {e}"))?;
                naive.submit_limit(order);
                ids.push(id);
            }
            Op::Cancel { nth } => {
                if !ids.is_empty() {
                    let id = ids[nth % ids.len()];
                    let a = book.cancel(id);
                    let b = naive.cancel(id);
                    if a != b {
                        return Err(format!("step {step}: cancel {a:?} vs {b:?}"));
                    }
                }
            }
            Op::Advance { dt } => {
                now += dt;
                let a = book.expire_orders(now);
                let b = naive.expire(now);
                if a != b {
                    return Err(format!("step {step}: expired {a} vs {b}"));
                }
            }
        }
        if book.tape() != naive.tape.as_slice() {
            return Err(format!("step {step}: tapes differ"));
        }
        for side in [Side::Buy, Side::Sell] {
            let best = if side == Side::Buy { book.best_bid() } else { book.best_ask() };
            if best != naive.best(side) {
                return Err(format!("step {step}: best {side:?} {best:?} vs {:?}", naive.best(side)));
            }
            for (w, spoof) in [(0, true), (3, false), (50, true)] {
                if book.depth(side, w, spoof) != naive.depth(side, w, spoof) {
                    return Err(format!("step {step}: depth {side:?} w={w}"));
                }
            }
        }
        if book.len() != naive.resting.len() || book.is_crossed() {
            return Err(format!("step {step}: size or crossed book"));
        }
    }
    Ok(naive.tape)
}

/// A 30k-step market with algorithm and scenario times scaled down tenfold.
/// Order lifetime stays at its default: much shorter lifetimes leave the
/// book too thin and the price runs away.
pub fn small_config(kind: ScenarioKind, algo: Option<(AlgoKind, u64)>) -> SimConfig {
    let scenario = ScenarioConfig {
        window_start: 10_000,
        window_end: 13_000,
        spoof_cycle: 2_000,
        ..ScenarioConfig::new(kind)
    };
    SimConfig {
        t_e: 30_000,
        scenario,
        algo: algo.map(|(k, l)| ExecAlgoConfig { start_time: 10_000, ..ExecAlgoConfig::new(k, l) }),
        ..SimConfig::default()
    }
}

/// File name to contents for every file directly inside `dir`.
pub fn dir_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .expect("readable run dir")
        .map(|e| {
            let e = e.expect("dir entry");
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).expect("readable file"))
        })
        .collect()
}

pub mod checks;
