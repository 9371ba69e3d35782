//! Market environments layered on top of the stable baseline.
//!
//! * Crash / surge: inside `[window_start, window_end)` each normal-agent turn
//!   is replaced, with a fixed probability, by a sell at `forced_sell_price`
//!   (crash) or a buy at `forced_buy_price` (surge).
//! * Spoof: from `window_start` on, alternating `spoof_cycle`-long phases
//!   keep `spoof_count` buy orders laddered just below the best genuine bid
//!   (on) or none at all (off).

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::orderbook::{MatchOutcome, Order, OrderBook, OrderId, Price, Side, Time};
use crate::rng::{substream, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioKind {
    Stable,
    Crash,
    Surge,
    Spoof,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 4] =
        [ScenarioKind::Stable, ScenarioKind::Crash, ScenarioKind::Surge, ScenarioKind::Spoof];

    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioKind::Stable => "stable",
            ScenarioKind::Crash => "crash",
            ScenarioKind::Surge => "surge",
            ScenarioKind::Spoof => "spoof",
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScenarioKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ScenarioKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown scenario `{s}` (expected stable, crash, surge or spoof)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub kind: ScenarioKind,
    pub window_start: Time,
    /// Exclusive end of the crash/surge injection window.
    pub window_end: Time,
    pub forced_order_probability: f64,
    pub forced_sell_price: Price,
    pub forced_buy_price: Price,
    pub spoof_cycle: Time,
    pub spoof_count: u32,
    pub spoof_placement_window: Price,
}

impl ScenarioConfig {
    pub fn new(kind: ScenarioKind) -> ScenarioConfig {
        ScenarioConfig {
            kind,
            window_start: 100_000,
            window_end: 130_000,
            forced_order_probability: 0.20,
            forced_sell_price: 1,
            forced_buy_price: 100_000,
            spoof_cycle: 10_000,
            spoof_count: 1_000,
            spoof_placement_window: 50,
        }
    }

    pub fn in_injection_window(&self, t: Time) -> bool {
        (self.window_start..self.window_end).contains(&t)
    }

    /// Whether spoof orders should be in the book at step `t`.
    pub fn spoof_on(&self, t: Time) -> bool {
        self.kind == ScenarioKind::Spoof
            && t >= self.window_start
            && self.spoof_cycle > 0
            && ((t - self.window_start) / self.spoof_cycle).is_multiple_of(2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ForcedOrder {
    pub side: Side,
    pub price: Price,
}

/// Forced order for a uniform `roll` in `[0, 1)`.
pub fn maybe_force_order_with(cfg: &ScenarioConfig, t: Time, roll: f64) -> Option<ForcedOrder> {
    let side = match cfg.kind {
        ScenarioKind::Crash => Side::Sell,
        ScenarioKind::Surge => Side::Buy,
        ScenarioKind::Stable | ScenarioKind::Spoof => return None,
    };
    if !cfg.in_injection_window(t) || roll >= cfg.forced_order_probability {
        return None;
    }
    let price = match side {
        Side::Sell => cfg.forced_sell_price,
        Side::Buy => cfg.forced_buy_price,
    };
    Some(ForcedOrder { side, price })
}

#[derive(Debug, Clone)]
pub struct ScenarioRng(ChaCha8Rng);

impl ScenarioRng {
    pub fn new(seed: u64) -> ScenarioRng {
        ScenarioRng(substream(seed, Stream::Scenario))
    }
}

/// Draws only inside the injection window of a crash or surge scenario.
pub fn maybe_force_order(cfg: &ScenarioConfig, t: Time, rng: &mut ScenarioRng) -> Option<ForcedOrder> {
    if !matches!(cfg.kind, ScenarioKind::Crash | ScenarioKind::Surge) || !cfg.in_injection_window(t) {
        return None;
    }
    let roll: f64 = rng.0.random();
    maybe_force_order_with(cfg, t, roll)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SpoofTick {
    pub placed: u32,
    pub cancelled: u32,
}

/// Phase change of the spoofer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpoofEvent {
    pub time: Time,
    pub action: SpoofAction,
    pub count: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpoofAction {
    On,
    Off,
}

/// Keeps the spoof ladder in sync with the book.
#[derive(Debug, Clone, Default)]
pub struct Spoofer {
    ladder: BTreeMap<Price, Vec<OrderId>>,
    anchor: Option<Price>,
    seen_fills: u64,
    was_on: bool,
}

impl Spoofer {
    pub fn new() -> Spoofer {
        Spoofer::default()
    }

    pub fn live_orders(&self) -> usize {
        self.ladder.values().map(Vec::len).sum()
    }

    /// Per-level quota for a ladder anchored at `anchor`: `count` orders spread
    /// round-robin over `[anchor - window, anchor - 1]`, extra orders going to
    /// the levels nearest the anchor.
    pub fn target_ladder(cfg: &ScenarioConfig, anchor: Price) -> Vec<(Price, u32)> {
        let top = anchor - 1;
        let bottom = (anchor - cfg.spoof_placement_window).max(1);
        if top < bottom || cfg.spoof_count == 0 {
            return Vec::new();
        }
        let levels = (top - bottom + 1) as u32;
        let base = cfg.spoof_count / levels;
        let extra = cfg.spoof_count % levels;
        (bottom..=top)
            .rev()
            .enumerate()
            .map(|(i, p)| (p, base + u32::from((i as u32) < extra)))
            .filter(|(_, n)| *n > 0)
            .collect()
    }

    /// Once-per-step maintenance. Returns the book mutations performed and,
    /// on a phase switch, the matching event.
    pub fn tick(
        &mut self,
        cfg: &ScenarioConfig,
        book: &mut OrderBook,
        t: Time,
    ) -> (SpoofTick, Option<SpoofEvent>) {
        if cfg.kind != ScenarioKind::Spoof || t < cfg.window_start {
            return (SpoofTick::default(), None);
        }
        let on = cfg.spoof_on(t);
        let mut tick = SpoofTick::default();
        if !on {
            tick.cancelled = self.clear(book);
        } else {
            match book.best_genuine_bid() {
                None => tick.cancelled = self.clear(book),
                Some(anchor) => tick = self.repeg(cfg, book, t, anchor),
            }
        }
        let event = (on != self.was_on).then(|| SpoofEvent {
            time: t,
            action: if on { SpoofAction::On } else { SpoofAction::Off },
            count: self.live_orders() as u64,
        });
        self.was_on = on;
        (tick, event)
    }

    fn clear(&mut self, book: &mut OrderBook) -> u32 {
        let mut n = 0;
        for id in std::mem::take(&mut self.ladder).into_values().flatten() {
            if book.cancel(id).is_some() {
                n += 1;
            }
        }
        self.anchor = None;
        n
    }

    fn repeg(&mut self, cfg: &ScenarioConfig, book: &mut OrderBook, t: Time, anchor: Price) -> SpoofTick {
        let fills = book.spoof_fills();
        if self.anchor == Some(anchor) && fills == self.seen_fills {
            return SpoofTick::default();
        }
        let mut tick = SpoofTick::default();
        if fills != self.seen_fills {
            for ids in self.ladder.values_mut() {
                ids.retain(|id| book.contains(*id));
            }
        }
        let target = Spoofer::target_ladder(cfg, anchor);
        let keep: BTreeMap<Price, u32> = target.iter().copied().collect();

        let stale: Vec<Price> = self.ladder.keys().filter(|p| !keep.contains_key(p)).copied().collect();
        for price in stale {
            for id in self.ladder.remove(&price).unwrap_or_default() {
                if book.cancel(id).is_some() {
                    tick.cancelled += 1;
                }
            }
        }
        for (price, quota) in target {
            let ids = self.ladder.entry(price).or_default();
            while ids.len() > quota as usize {
                let id = ids.pop().expect("non-empty");
                if book.cancel(id).is_some() {
                    tick.cancelled += 1;
                }
            }
            while ids.len() < quota as usize {
                let id = book.next_order_id();
                let outcome = book
                    .submit_limit(Order::spoof(id, price, t))
                    .expect("spoof order is well-formed");
                debug_assert_eq!(outcome, MatchOutcome::Rested);
                ids.push(id);
                tick.placed += 1;
            }
        }
        self.ladder.retain(|_, ids| !ids.is_empty());
        self.anchor = Some(anchor);
        self.seen_fills = fills;
        tick
    }
}
