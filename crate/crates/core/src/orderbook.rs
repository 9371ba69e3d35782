//! Continuous double auction order book for one-share orders.
//!
//! Orders match on price priority, then time priority (placement time, ties
//! broken by order id). Every order carries a cancel deadline and is removed
//! by [`OrderBook::expire_orders`] once that deadline is reached. Spoof
//! orders are ordinary book entries except that they never age out; their
//! lifecycle belongs to the scenario layer.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, HashMap, VecDeque};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Price in integer ticks.
pub type Price = i64;
/// Simulation time step.
pub type Time = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct OrderId(pub u64);

impl fmt::Display for OrderId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Buy,
    Sell,
}

impl Side {
    pub fn opposite(self) -> Side {
        match self {
            Side::Buy => Side::Sell,
            Side::Sell => Side::Buy,
        }
    }
}

/// Who placed an order. Indices are zero-based internally.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Owner {
    Normal(u32),
    Algo(u32),
    Spoofer,
}

impl fmt::Display for Owner {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Owner::Normal(j) => write!(f, "na{j}"),
            Owner::Algo(k) => write!(f, "algo{k}"),
            Owner::Spoofer => f.write_str("spoofer"),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("unrecognised owner tag `{0}`")]
pub struct ParseOwnerError(String);

impl FromStr for Owner {
    type Err = ParseOwnerError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || ParseOwnerError(s.to_string());
        if s == "spoofer" {
            Ok(Owner::Spoofer)
        } else if let Some(rest) = s.strip_prefix("algo") {
            rest.parse().map(Owner::Algo).map_err(|_| err())
        } else if let Some(rest) = s.strip_prefix("na") {
            rest.parse().map(Owner::Normal).map_err(|_| err())
        } else {
            Err(err())
        }
    }
}

impl Serialize for Owner {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Owner {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Order {
    pub id: OrderId,
    pub side: Side,
    pub price: Price,
    pub quantity: u32,
    pub owner: Owner,
    pub placed_at: Time,
    pub cancel_at: Time,
    pub is_spoof: bool,
}

impl Order {
    /// A one-share limit order that lives for `lifetime` steps.
    pub fn limit(
        id: OrderId,
        side: Side,
        price: Price,
        owner: Owner,
        placed_at: Time,
        lifetime: Time,
    ) -> Order {
        Order {
            id,
            side,
            price,
            quantity: 1,
            owner,
            placed_at,
            cancel_at: placed_at.saturating_add(lifetime),
            is_spoof: false,
        }
    }

    /// A spoof buy order; never expires on its own.
    pub fn spoof(id: OrderId, price: Price, placed_at: Time) -> Order {
        Order {
            id,
            side: Side::Buy,
            price,
            quantity: 1,
            owner: Owner::Spoofer,
            placed_at,
            cancel_at: Time::MAX,
            is_spoof: true,
        }
    }
}

/// One executed share. The price is always the resting order's limit price.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trade {
    pub time: Time,
    pub price: Price,
    #[serde(rename = "buyer_owner")]
    pub buyer: Owner,
    #[serde(rename = "seller_owner")]
    pub seller: Owner,
    pub buy_order_id: OrderId,
    pub sell_order_id: OrderId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatchOutcome {
    Traded(Trade),
    Rested,
}

impl MatchOutcome {
    pub fn trade(&self) -> Option<&Trade> {
        match self {
            MatchOutcome::Traded(t) => Some(t),
            MatchOutcome::Rested => None,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BookError {
    #[error("order price must be at least one tick, got {0}")]
    NonPositivePrice(Price),
    #[error("order quantity must be 1, got {0}")]
    InvalidQuantity(u32),
    #[error("cancel time {cancel_at} must be after placement time {placed_at}")]
    InvalidCancelTime { placed_at: Time, cancel_at: Time },
    #[error("order {0} is already resting in the book")]
    DuplicateOrder(OrderId),
    #[error("no resting liquidity on the opposite side")]
    NoLiquidity,
}

#[derive(Debug, Default, Clone)]
struct Level {
    // Sorted by (placed_at, id). May still hold entries for orders that
    // already left the book; `live` is exact.
    queue: VecDeque<(Time, OrderId)>,
    live: u32,
    spoof: u32,
}

#[derive(Debug, Default, Clone)]
pub struct OrderBook {
    bids: BTreeMap<Price, Level>,
    asks: BTreeMap<Price, Level>,
    resting: HashMap<OrderId, Order>,
    expiry: BinaryHeap<Reverse<(Time, OrderId)>>,
    last_trade_price: Option<Price>,
    tape: Vec<Trade>,
    next_id: u64,
    spoof_fills: u64,
}

impl OrderBook {
    pub fn new() -> OrderBook {
        OrderBook::default()
    }

    /// Hands out a fresh order id.
    pub fn next_order_id(&mut self) -> OrderId {
        let id = OrderId(self.next_id);
        self.next_id += 1;
        id
    }

    pub fn best_bid(&self) -> Option<Price> {
        self.bids.last_key_value().map(|(p, _)| *p)
    }

    pub fn best_ask(&self) -> Option<Price> {
        self.asks.first_key_value().map(|(p, _)| *p)
    }

    /// Highest bid level holding at least one non-spoof order.
    pub fn best_genuine_bid(&self) -> Option<Price> {
        self.bids
            .iter()
            .rev()
            .find(|(_, lvl)| lvl.live > lvl.spoof)
            .map(|(p, _)| *p)
    }

    pub fn last_trade_price(&self) -> Option<Price> {
        self.last_trade_price
    }

    pub fn tape(&self) -> &[Trade] {
        &self.tape
    }

    pub fn into_tape(self) -> Vec<Trade> {
        self.tape
    }

    /// Number of spoof orders that have been executed against so far.
    pub fn spoof_fills(&self) -> u64 {
        self.spoof_fills
    }

    pub fn len(&self) -> usize {
        self.resting.len()
    }

    pub fn is_empty(&self) -> bool {
        self.resting.is_empty()
    }

    pub fn contains(&self, id: OrderId) -> bool {
        self.resting.contains_key(&id)
    }

    pub fn order(&self, id: OrderId) -> Option<&Order> {
        self.resting.get(&id)
    }

    pub fn resting_orders(&self) -> impl Iterator<Item = &Order> {
        self.resting.values()
    }

    pub fn spoof_count(&self) -> u64 {
        self.bids.values().map(|l| l.spoof as u64).sum()
    }

    pub fn is_crossed(&self) -> bool {
        matches!((self.best_bid(), self.best_ask()), (Some(b), Some(a)) if b >= a)
    }

    /// Submits a one-share limit order. A crossing order trades once against
    /// the best-priced, oldest opposite order; otherwise it rests.
    pub fn submit_limit(&mut self, order: Order) -> Result<MatchOutcome, BookError> {
        if order.price < 1 {
            return Err(BookError::NonPositivePrice(order.price));
        }
        if order.quantity != 1 {
            return Err(BookError::InvalidQuantity(order.quantity));
        }
        if order.cancel_at <= order.placed_at {
            return Err(BookError::InvalidCancelTime {
                placed_at: order.placed_at,
                cancel_at: order.cancel_at,
            });
        }
        if self.resting.contains_key(&order.id) {
            return Err(BookError::DuplicateOrder(order.id));
        }
        self.next_id = self.next_id.max(order.id.0 + 1);

        let crosses = match order.side {
            Side::Buy => self.best_ask().is_some_and(|a| order.price >= a),
            Side::Sell => self.best_bid().is_some_and(|b| order.price <= b),
        };
        if crosses {
            let resting = self.take_best(order.side.opposite()).expect("crossing side is non-empty");
            let trade = self.record_trade(&order.side, order.id, order.owner, order.placed_at, resting);
            return Ok(MatchOutcome::Traded(trade));
        }
        self.rest(order);
        Ok(MatchOutcome::Rested)
    }

    /// Executes one share against the best opposite order. Leaves the book
    /// untouched and returns [`BookError::NoLiquidity`] if that side is empty.
    pub fn submit_market(&mut self, side: Side, owner: Owner, time: Time) -> Result<Trade, BookError> {
        let resting = self.take_best(side.opposite()).ok_or(BookError::NoLiquidity)?;
        let id = self.next_order_id();
        Ok(self.record_trade(&side, id, owner, time, resting))
    }

    /// Removes every non-spoof order whose cancel time is at or before `now`.
    pub fn expire_orders(&mut self, now: Time) -> usize {
        let mut removed = 0;
        while let Some(Reverse((cancel_at, id))) = self.expiry.peek().copied() {
            if cancel_at > now {
                break;
            }
            self.expiry.pop();
            if self.cancel(id).is_some() {
                removed += 1;
            }
        }
        removed
    }

    /// Pulls a resting order out of the book.
    pub fn cancel(&mut self, id: OrderId) -> Option<Order> {
        let order = self.resting.remove(&id)?;
        let side = match order.side {
            Side::Buy => &mut self.bids,
            Side::Sell => &mut self.asks,
        };
        let level = side.get_mut(&order.price).expect("resting order has a level");
        level.live -= 1;
        if order.is_spoof {
            level.spoof -= 1;
        }
        if level.live == 0 {
            side.remove(&order.price);
        } else {
            if level.queue.back().map(|e| e.1) == Some(id) {
                level.queue.pop_back();
            }
            if level.queue.len() > 2 * level.live as usize + 64 {
                let resting = &self.resting;
                level.queue.retain(|(_, i)| resting.contains_key(i));
            }
        }
        Some(order)
    }

    /// Resting orders on `side` within `window` ticks of the best quote,
    /// best-quote level included. Zero when the side is empty.
    pub fn depth(&self, side: Side, window: Price, include_spoof: bool) -> u64 {
        let count = |lvl: &Level| {
            if include_spoof {
                lvl.live as u64
            } else {
                (lvl.live - lvl.spoof) as u64
            }
        };
        match side {
            Side::Buy => match self.best_bid() {
                Some(best) => self.bids.range(best - window..=best).map(|(_, l)| count(l)).sum(),
                None => 0,
            },
            Side::Sell => match self.best_ask() {
                Some(best) => self.asks.range(best..=best + window).map(|(_, l)| count(l)).sum(),
                None => 0,
            },
        }
    }

    /// Order book imbalance: buy depth minus sell depth, spoof orders included.
    pub fn obi(&self, window: Price) -> i64 {
        self.depth(Side::Buy, window, true) as i64 - self.depth(Side::Sell, window, true) as i64
    }

    fn rest(&mut self, order: Order) {
        let side = match order.side {
            Side::Buy => &mut self.bids,
            Side::Sell => &mut self.asks,
        };
        let level = side.entry(order.price).or_default();
        let key = (order.placed_at, order.id);
        if level.queue.back().is_none_or(|last| *last <= key) {
            level.queue.push_back(key);
        } else {
            let at = level.queue.partition_point(|e| *e < key);
            level.queue.insert(at, key);
        }
        level.live += 1;
        if order.is_spoof {
            level.spoof += 1;
        } else {
            self.expiry.push(Reverse((order.cancel_at, order.id)));
        }
        self.resting.insert(order.id, order);
    }

    fn take_best(&mut self, side: Side) -> Option<Order> {
        let (price, map) = match side {
            Side::Buy => (self.best_bid()?, &mut self.bids),
            Side::Sell => (self.best_ask()?, &mut self.asks),
        };
        let level = map.get_mut(&price).expect("best level exists");
        let order = loop {
            let (_, id) = level.queue.pop_front().expect("live level has a queued order");
            if let Some(order) = self.resting.remove(&id) {
                break order;
            }
        };
        level.live -= 1;
        if order.is_spoof {
            level.spoof -= 1;
        }
        if level.live == 0 {
            map.remove(&price);
        }
        Some(order)
    }

    fn record_trade(
        &mut self,
        aggressor_side: &Side,
        aggressor_id: OrderId,
        aggressor: Owner,
        time: Time,
        resting: Order,
    ) -> Trade {
        let trade = match aggressor_side {
            Side::Buy => Trade {
                time,
                price: resting.price,
                buyer: aggressor,
                seller: resting.owner,
                buy_order_id: aggressor_id,
                sell_order_id: resting.id,
            },
            Side::Sell => Trade {
                time,
                price: resting.price,
                buyer: resting.owner,
                seller: aggressor,
                buy_order_id: resting.id,
                sell_order_id: aggressor_id,
            },
        };
        if resting.is_spoof {
            self.spoof_fills += 1;
        }
        self.last_trade_price = Some(trade.price);
        self.tape.push(trade);
        trade
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn limit(book: &mut OrderBook, side: Side, price: Price, t: Time) -> MatchOutcome {
        let id = book.next_order_id();
        book.submit_limit(Order::limit(id, side, price, Owner::Normal(0), t, 20_000))
            .unwrap()
    }

    #[test]
    fn buy_into_empty_book_rests() {
        let mut book = OrderBook::new();
        assert_eq!(limit(&mut book, Side::Buy, 9_999, 1), MatchOutcome::Rested);
        assert_eq!(book.best_bid(), Some(9_999));
        assert!(book.tape().is_empty());
    }

    #[test]
    fn time_priority_within_level() {
        let mut book = OrderBook::new();
        // The t=5 order arrives first; placement time still decides priority.
        let late = Order::limit(OrderId(0), Side::Sell, 10_001, Owner::Normal(1), 5, 100);
        let early = Order::limit(OrderId(1), Side::Sell, 10_001, Owner::Normal(2), 3, 100);
        book.submit_limit(late).unwrap();
        book.submit_limit(early.clone()).unwrap();
        let out = book
            .submit_limit(Order::limit(OrderId(2), Side::Buy, 10_002, Owner::Normal(3), 6, 100))
            .unwrap();
        let trade = *out.trade().unwrap();
        assert_eq!(trade.price, 10_001);
        assert_eq!(trade.sell_order_id, early.id);
        assert_eq!(book.last_trade_price(), Some(10_001));
    }

    #[test]
    fn aggressive_sell_executes_at_resting_price() {
        let mut book = OrderBook::new();
        limit(&mut book, Side::Buy, 10_000, 1);
        let out = limit(&mut book, Side::Sell, 1, 2);
        assert_eq!(out.trade().unwrap().price, 10_000);
        assert!(book.is_empty());
    }

    #[test]
    fn market_buy_takes_best_ask() {
        let mut book = OrderBook::new();
        limit(&mut book, Side::Sell, 10_005, 1);
        limit(&mut book, Side::Sell, 10_003, 2);
        let trade = book.submit_market(Side::Buy, Owner::Algo(0), 3).unwrap();
        assert_eq!(trade.price, 10_003);
        assert_eq!(trade.buyer, Owner::Algo(0));
        assert_eq!(book.best_ask(), Some(10_005));
    }

    #[test]
    fn market_buy_without_asks_is_noop() {
        let mut book = OrderBook::new();
        limit(&mut book, Side::Buy, 9_000, 1);
        assert_eq!(
            book.submit_market(Side::Buy, Owner::Algo(0), 2),
            Err(BookError::NoLiquidity)
        );
        assert_eq!(book.len(), 1);
        assert!(book.tape().is_empty());
        assert_eq!(book.last_trade_price(), None);
    }

    #[test]
    fn rejects_bad_orders() {
        let mut book = OrderBook::new();
        let mut o = Order::limit(OrderId(0), Side::Buy, 0, Owner::Normal(0), 0, 10);
        assert_eq!(book.submit_limit(o.clone()), Err(BookError::NonPositivePrice(0)));
        o.price = 5;
        o.quantity = 2;
        assert_eq!(book.submit_limit(o.clone()), Err(BookError::InvalidQuantity(2)));
        o.quantity = 1;
        o.cancel_at = 0;
        assert!(matches!(
            book.submit_limit(o.clone()),
            Err(BookError::InvalidCancelTime { .. })
        ));
        o.cancel_at = 10;
        book.submit_limit(o.clone()).unwrap();
        assert_eq!(book.submit_limit(o), Err(BookError::DuplicateOrder(OrderId(0))));
    }

    #[test]
    fn expiry_boundary() {
        let mut book = OrderBook::new();
        limit(&mut book, Side::Buy, 9_000, 0);
        assert_eq!(book.expire_orders(19_999), 0);
        assert_eq!(book.len(), 1);
        assert_eq!(book.expire_orders(20_000), 1);
        assert!(book.is_empty());
    }

    #[test]
    fn expiry_removes_only_aged_orders() {
        let mut book = OrderBook::new();
        for t in 0..3 {
            let id = book.next_order_id();
            book.submit_limit(Order::limit(id, Side::Buy, 100 + t as Price, Owner::Normal(0), t, 2))
                .unwrap();
        }
        assert_eq!(book.expire_orders(3), 2);
        assert_eq!(book.best_bid(), Some(102));
    }

    #[test]
    fn spoof_orders_never_expire() {
        let mut book = OrderBook::new();
        let id = book.next_order_id();
        book.submit_limit(Order::spoof(id, 9_990, 0)).unwrap();
        assert_eq!(book.expire_orders(1_000_000), 0);
        assert!(book.contains(id));
    }

    #[test]
    fn depth_counts_window_inclusive_of_best() {
        let mut book = OrderBook::new();
        assert_eq!(book.depth(Side::Buy, 50, true), 0);
        for (price, n) in [(10_000, 3), (9_960, 2), (9_940, 1)] {
            for _ in 0..n {
                limit(&mut book, Side::Buy, price, 1);
            }
        }
        assert_eq!(book.depth(Side::Buy, 50, true), 5);
        for price in [10_010, 10_020, 10_050, 10_060, 10_061] {
            limit(&mut book, Side::Sell, price, 2);
        }
        // Asks within [10_010, 10_060]: four orders.
        assert_eq!(book.depth(Side::Sell, 50, true), 4);
        assert_eq!(book.obi(50), 1);
    }

    #[test]
    fn depth_spoof_visibility() {
        let mut book = OrderBook::new();
        limit(&mut book, Side::Buy, 10_000, 1);
        for i in 0..1_000 {
            let id = book.next_order_id();
            book.submit_limit(Order::spoof(id, 9_950 + (i % 50), 1)).unwrap();
        }
        assert_eq!(book.depth(Side::Buy, 50, true), 1_001);
        assert_eq!(book.depth(Side::Buy, 50, false), 1);
        assert_eq!(book.spoof_count(), 1_000);
        assert_eq!(book.best_genuine_bid(), Some(10_000));
    }

    #[test]
    fn cancel_keeps_levels_consistent() {
        let mut book = OrderBook::new();
        let a = book.next_order_id();
        let b = book.next_order_id();
        book.submit_limit(Order::limit(a, Side::Sell, 10, Owner::Normal(0), 0, 5)).unwrap();
        book.submit_limit(Order::limit(b, Side::Sell, 10, Owner::Normal(1), 0, 5)).unwrap();
        assert!(book.cancel(a).is_some());
        assert!(book.cancel(a).is_none());
        let trade = book.submit_market(Side::Buy, Owner::Algo(1), 1).unwrap();
        assert_eq!(trade.sell_order_id, b);
        assert_eq!(book.best_ask(), None);
    }

    #[test]
    fn owner_round_trips_through_text() {
        for owner in [Owner::Normal(989), Owner::Algo(3), Owner::Spoofer] {
            assert_eq!(owner.to_string().parse::<Owner>().unwrap(), owner);
        }
        assert!("bank7".parse::<Owner>().is_err());
    }
}
