//! Run statistics: trading cost, stylized facts, OBI/return concordance and
//! interval averages.
//!
//! Intervals are half-open ranges of series positions; position `i` holds
//! the state at the end of step `i + 1`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{RunResult, SimConfig};
use crate::execution::FillRecord;
use crate::orderbook::Price;

pub const ACF_LAGS: usize = 5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("no algorithm-agent fills to average")]
    NoFills,
    #[error("series has zero variance")]
    DegenerateSeries,
    #[error("series too short: need at least {need} values, got {got}")]
    TooShort { need: usize, got: usize },
    #[error("empty interval [{start}, {end})")]
    EmptyInterval { start: usize, end: usize },
}

/// Mean of `fill price - fundamental` over all algorithm fills.
pub fn trading_cost(fills: &[FillRecord], fundamental: Price) -> Result<f64, MetricsError> {
    if fills.is_empty() {
        return Err(MetricsError::NoFills);
    }
    let total: f64 = fills.iter().map(|f| (f.price - fundamental) as f64).sum();
    Ok(total / fills.len() as f64)
}

/// Log returns of a price path sampled every `interval` steps.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnSeries {
    pub values: Vec<f64>,
}

impl ReturnSeries {
    /// `initial` is the price before the first recorded step.
    pub fn from_prices(initial: Price, prices: &[Price], interval: usize) -> ReturnSeries {
        let interval = interval.max(1);
        let mut prev = initial as f64;
        let values = prices
            .iter()
            .skip(interval - 1)
            .step_by(interval)
            .map(|p| {
                let p = *p as f64;
                let r = (p / prev).ln();
                prev = p;
                r
            })
            .collect();
        ReturnSeries { values }
    }
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Fourth standardised moment minus 3 (zero for a normal distribution).
pub fn excess_kurtosis(x: &[f64]) -> Result<f64, MetricsError> {
    if x.len() < 4 {
        return Err(MetricsError::TooShort { need: 4, got: x.len() });
    }
    let m = mean(x);
    let (mut m2, mut m4) = (0.0, 0.0);
    for v in x {
        let d = (v - m) * (v - m);
        m2 += d;
        m4 += d * d;
    }
    let n = x.len() as f64;
    m2 /= n;
    m4 /= n;
    if m2 <= 0.0 {
        return Err(MetricsError::DegenerateSeries);
    }
    Ok(m4 / (m2 * m2) - 3.0)
}

/// Sample autocorrelation of `x` at lags `1..=max_lag`.
pub fn autocorrelation(x: &[f64], max_lag: usize) -> Result<Vec<f64>, MetricsError> {
    if x.len() <= max_lag + 1 {
        return Err(MetricsError::TooShort { need: max_lag + 2, got: x.len() });
    }
    let m = mean(x);
    let centred: Vec<f64> = x.iter().map(|v| v - m).collect();
    let denom: f64 = centred.iter().map(|d| d * d).sum();
    if denom <= 0.0 {
        return Err(MetricsError::DegenerateSeries);
    }
    Ok((1..=max_lag)
        .map(|lag| {
            let num: f64 = centred[lag..].iter().zip(&centred).map(|(a, b)| a * b).sum();
            num / denom
        })
        .collect())
}

/// Autocorrelation of squared returns; the volatility-clustering statistic.
pub fn sq_return_autocorr(returns: &[f64], max_lag: usize) -> Result<Vec<f64>, MetricsError> {
    let sq: Vec<f64> = returns.iter().map(|r| r * r).collect();
    autocorrelation(&sq, max_lag)
}

/// Concordant minus discordant (OBI sign, next-step price move) pairs.
/// Steps with zero OBI or an unchanged price count for neither.
pub fn obi_concordance_series<I>(obi: I, prices: &[Price]) -> i64
where
    I: IntoIterator<Item = i64>,
{
    obi.into_iter()
        .zip(prices.windows(2))
        .map(|(o, w)| o.signum() * (w[1] - w[0]).signum())
        .sum()
}

pub fn obi_concordance(run: &RunResult) -> i64 {
    obi_concordance_series(run.obi_series(), &run.price_series)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalAverages {
    pub avg_price: f64,
    pub avg_buy_depth: f64,
    pub avg_sell_depth: f64,
}

pub fn interval_averages(run: &RunResult, start: usize, end: usize) -> Result<IntervalAverages, MetricsError> {
    if start >= end || end > run.steps() {
        return Err(MetricsError::EmptyInterval { start, end });
    }
    let n = (end - start) as f64;
    let avg = |s: &mut dyn Iterator<Item = f64>| s.sum::<f64>() / n;
    Ok(IntervalAverages {
        avg_price: avg(&mut run.price_series[start..end].iter().map(|p| *p as f64)),
        avg_buy_depth: avg(&mut run.buy_depth[start..end].iter().map(|d| *d as f64)),
        avg_sell_depth: avg(&mut run.sell_depth[start..end].iter().map(|d| *d as f64)),
    })
}

/// From `from` to the first position of the lowest price at or after it:
/// the stretch over which a crash unwinds.
pub fn falling_interval(prices: &[Price], from: usize) -> Option<(usize, usize)> {
    let (offset, _) = prices
        .get(from..)?
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.cmp(b.1).then(a.0.cmp(&b.0)))?;
    Some((from, from + offset + 1))
}

/// From the first position of the highest price at or after `from` to the
/// following low: the stretch over which a surge unwinds.
pub fn retreat_interval(prices: &[Price], from: usize) -> Option<(usize, usize)> {
    let (offset, _) = prices
        .get(from..)?
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))?;
    let peak = from + offset;
    let (_, end) = falling_interval(prices, peak)?;
    Some((peak, end))
}

/// Share of fills whose step falls in the series positions `[start, end)`.
pub fn fill_share(fills: &[FillRecord], start: usize, end: usize) -> Option<f64> {
    if fills.is_empty() {
        return None;
    }
    let inside = fills
        .iter()
        .filter(|f| (start..end).contains(&(f.time as usize - 1)))
        .count();
    Some(inside as f64 / fills.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub n_fills: u64,
    pub algo_turns: u64,
    pub tc: Option<f64>,
    pub kurtosis: Option<f64>,
    pub acf_sq_returns: Option<Vec<f64>>,
    pub obi_concordance: i64,
    pub n_trades: u64,
    pub mean_trade_price: Option<f64>,
    /// Mean market price over the whole run.
    pub avg_market_price: f64,
    /// Mean market price from the algorithm activation step to the end.
    pub avg_active_price: Option<f64>,
    pub avg_buy_depth: f64,
    pub avg_sell_depth: f64,
}

pub fn summarize(cfg: &SimConfig, run: &RunResult) -> MetricsSummary {
    let returns = ReturnSeries::from_prices(
        cfg.fundamental_price,
        &run.price_series,
        cfg.return_sampling_interval as usize,
    );
    let whole = interval_averages(run, 0, run.steps()).ok();
    let active = cfg
        .algo
        .and_then(|a| interval_averages(run, a.start_time.saturating_sub(1) as usize, run.steps()).ok());
    let mean_trade_price = (!run.trades.is_empty())
        .then(|| run.trades.iter().map(|t| t.price as f64).sum::<f64>() / run.trades.len() as f64);
    MetricsSummary {
        n_fills: run.fills.len() as u64,
        algo_turns: run.counts.algo_turns,
        tc: trading_cost(&run.fills, cfg.fundamental_price).ok(),
        kurtosis: excess_kurtosis(&returns.values).ok(),
        acf_sq_returns: sq_return_autocorr(&returns.values, ACF_LAGS).ok(),
        obi_concordance: obi_concordance(run),
        n_trades: run.trades.len() as u64,
        mean_trade_price,
        avg_market_price: whole.map_or(f64::NAN, |w| w.avg_price),
        avg_active_price: active.map(|a| a.avg_price),
        avg_buy_depth: whole.map_or(f64::NAN, |w| w.avg_buy_depth),
        avg_sell_depth: whole.map_or(f64::NAN, |w| w.avg_sell_depth),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::OrderCounts;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn fills(prices: &[Price]) -> Vec<FillRecord> {
        prices
            .iter()
            .enumerate()
            .map(|(i, p)| FillRecord { time: i as u64 + 1, algo_index: 1, price: *p })
            .collect()
    }

    fn normals(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    fn run_with(prices: Vec<Price>, buy: Vec<u32>, sell: Vec<u32>) -> RunResult {
        RunResult {
            seed: 0,
            price_series: prices,
            buy_depth: buy,
            sell_depth: sell,
            trades: Vec::new(),
            fills: Vec::new(),
            counts: OrderCounts::default(),
            spoof_events: Vec::new(),
            weight_trace: Vec::new(),
        }
    }

    #[test]
    fn trading_cost_examples() {
        assert_eq!(trading_cost(&fills(&[10_010, 10_020]), 10_000), Ok(15.0));
        assert_eq!(trading_cost(&fills(&[10_000, 10_000]), 10_000), Ok(0.0));
        assert_eq!(trading_cost(&fills(&[9_500]), 10_000), Ok(-500.0));
        assert_eq!(trading_cost(&[], 10_000), Err(MetricsError::NoFills));
    }

    #[test]
    fn kurtosis_baselines() {
        let k = excess_kurtosis(&normals(100_000, 1)).unwrap();
        assert!(k.abs() < 0.1, "{k}");
        let two_point: Vec<f64> = (0..1_000).map(|i| if i % 2 == 0 { -1.0 } else { 1.0 }).collect();
        assert!((excess_kurtosis(&two_point).unwrap() + 2.0).abs() < 1e-12);
        assert_eq!(excess_kurtosis(&[3.0; 10]), Err(MetricsError::DegenerateSeries));
        assert!(matches!(excess_kurtosis(&[1.0, 2.0]), Err(MetricsError::TooShort { .. })));
    }

    #[test]
    fn white_noise_has_no_volatility_clustering() {
        let x = normals(20_000, 2);
        let bound = 3.0 / (x.len() as f64).sqrt();
        for c in sq_return_autocorr(&x, 5).unwrap() {
            assert!(c.abs() < bound, "{c}");
        }
    }

    #[test]
    fn regime_switching_volatility_clusters() {
        let z = normals(20_000, 3);
        let x: Vec<f64> = z
            .iter()
            .enumerate()
            .map(|(i, v)| if (i / 100) % 2 == 0 { *v } else { 5.0 * v })
            .collect();
        let acf = sq_return_autocorr(&x, 5).unwrap();
        // x^2 has regime means 1 and 25 (between variance 144) and within
        // variances 2 and 1250 (mean 626), so lag-1 acf ~ 144 / 770.
        let expect = 144.0 / 770.0 * 0.99;
        assert!((acf[0] - expect).abs() < 0.05, "{acf:?}");
        assert!(acf.iter().all(|c| *c > 0.0));
    }

    #[test]
    fn return_sampling() {
        let r = ReturnSeries::from_prices(100, &[101, 102, 103, 104, 105, 106], 2);
        assert_eq!(r.values.len(), 3);
        assert!((r.values[0] - (102f64 / 100.0).ln()).abs() < 1e-15);
        assert!((r.values[2] - (106f64 / 104.0).ln()).abs() < 1e-15);
    }

    #[test]
    fn concordance_examples() {
        assert_eq!(obi_concordance_series(vec![3, -2, 5, 1], &[10, 10, 10, 10]), 0);
        // Positive OBI before each of the four up-ticks, zero OBI elsewhere.
        let prices = [100, 101, 101, 102, 102, 102, 103, 103, 104, 104];
        let obi = [5, 0, 2, 0, 0, 7, 0, 1, 0, 0];
        assert_eq!(obi_concordance_series(obi, &prices), 4);
        assert_eq!(obi_concordance_series([1, -1, 1], &[10, 9, 8, 9]), 1);
    }

    #[test]
    fn interval_averages_examples() {
        let run = run_with(vec![10_000; 4], vec![1, 2, 3, 4], vec![4, 4, 4, 4]);
        let a = interval_averages(&run, 0, 4).unwrap();
        assert_eq!(a.avg_price, 10_000.0);
        assert_eq!(a.avg_buy_depth, 2.5);
        let run = run_with(vec![9_000, 10_000], vec![0, 0], vec![0, 0]);
        assert_eq!(interval_averages(&run, 0, 2).unwrap().avg_price, 9_500.0);
        assert!(interval_averages(&run, 1, 1).is_err());
        assert!(interval_averages(&run, 0, 3).is_err());
    }

    #[test]
    fn crash_and_surge_intervals() {
        let prices = [100, 99, 90, 80, 80, 85, 95];
        assert_eq!(falling_interval(&prices, 1), Some((1, 4)));
        let surge = [100, 110, 130, 130, 120, 105, 108];
        assert_eq!(retreat_interval(&surge, 0), Some((2, 6)));
        assert_eq!(fill_share(&fills(&[1, 1, 1, 1]), 0, 2), Some(0.5));
    }
}
