//! Invariant checks shared by the property suites and the acceptance run.
//! Each returns a short description on success and the first violation on
//! failure.

use obisim::agents::{AgentParams, LearnDraws, NormalAgentState};
use obisim::execution::FillRecord;
use obisim::metrics::{autocorrelation, excess_kurtosis, sq_return_autocorr, trading_cost};
use obisim::orderbook::{Order, OrderBook, Owner, Side};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use super::random_ops;
use super::Op;

/// Runs `steps` learning updates on one agent with adversarial inputs and
/// checks that both weights stay inside `[0, max]` after every step.
pub fn weight_bounds(steps: usize, seed: u64) -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = AgentParams::default();
    let mut agent = NormalAgentState::random(&params, &mut rng);
    let (mut hit_top, mut hit_zero) = (0u64, 0u64);
    for i in 0..steps {
        // Mix ordinary returns with extreme ones that would overshoot
        // without clamping.
        let scale = if rng.random_bool(0.01) { 10.0 } else { 0.01 };
        let r = [rng.random_range(-1.0..1.0) * scale, rng.random_range(-1.0..1.0) * scale];
        let r_l = rng.random_range(-1.0..1.0) * scale;
        let draws = LearnDraws {
            q: [rng.random(), rng.random()],
            reset_roll: [rng.random(), rng.random()],
            reset_value: [rng.random(), rng.random()],
        };
        agent.learn_with(r, r_l, &params, &draws);
        let ok = (0.0..=params.w1_max).contains(&agent.w1) && (0.0..=params.w2_max).contains(&agent.w2);
        if !ok {
            return Err(format!("step {i}: w1={} w2={}", agent.w1, agent.w2));
        }
        hit_top += u64::from(agent.w2 == params.w2_max);
        hit_zero += u64::from(agent.w2 == 0.0);
    }
    Ok(format!("{steps} steps, w2 at max {hit_top} times, at zero {hit_zero} times"))
}

/// `depth`/`obi` identities on random books: OBI is the depth difference,
/// depth is monotone in the window, and excluding spoof orders never adds.
pub fn depth_obi_identities(sequences: u64) -> Result<String, String> {
    for seed in 0..sequences {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ops = random_ops(&mut rng, 50);
        let mut book = OrderBook::new();
        let mut t = 1;
        for op in ops {
            match op {
                Op::Limit { side, price, lifetime } => {
                    let id = book.next_order_id();
                    book.submit_limit(Order::limit(id, side, price, Owner::Normal(0), t, lifetime))
                        .map_err(|e| e.to_string())?;
                }
                Op::Spoof { price } => {
                    let id = book.next_order_id();
                    book.submit_limit(Order::spoof(id, price, t)).map_err(|e| e.to_string())?;
                }
                Op::Advance { dt } => {
                    t += dt;
                    book.expire_orders(t);
                }
                _ => {}
            }
            for w in [0, 1, 5, 50] {
                let (b, s) = (book.depth(Side::Buy, w, true), book.depth(Side::Sell, w, true));
                let ok = book.obi(w) == b as i64 - s as i64
                    && book.depth(Side::Buy, w + 1, true) >= b
                    && book.depth(Side::Sell, w + 1, true) >= s
                    && book.depth(Side::Buy, w, false) <= b
                    && b + s <= book.len() as u64;
                if !ok {
                    return Err(format!("seed {seed}, window {w}: depth identity broken"));
                }
            }
        }
    }
    Ok(format!("{sequences} random books"))
}

/// Shifting every fill price by `c` shifts TC by `c`; raising the
/// fundamental by `c` lowers it by `c`.
pub fn tc_translation_covariance(cases: u64) -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for case in 0..cases {
        let n = rng.random_range(1..200);
        let fills: Vec<FillRecord> = (0..n)
            .map(|i| FillRecord { time: i, algo_index: 1, price: rng.random_range(9_000..11_000) })
            .collect();
        let c: i64 = rng.random_range(-500..500);
        let base = trading_cost(&fills, 10_000).map_err(|e| e.to_string())?;
        let shifted: Vec<FillRecord> = fills.iter().map(|f| FillRecord { price: f.price + c, ..*f }).collect();
        let up = trading_cost(&shifted, 10_000).map_err(|e| e.to_string())?;
        let down = trading_cost(&fills, 10_000 + c).map_err(|e| e.to_string())?;
        if (up - base - c as f64).abs() > 1e-9 || (base - down - c as f64).abs() > 1e-9 {
            return Err(format!("case {case}: base {base}, shifted {up}, fundamental+c {down}, c {c}"));
        }
    }
    Ok(format!("{cases} fill sets"))
}

/// Kurtosis and autocorrelation on series whose population values are
/// known: Gaussian (0), Laplace (3), AR(1) (phi^k) and a GARCH(1,1) path
/// (fat tails, positive squared-return autocorrelation).
pub fn stylized_fact_baselines() -> Result<String, String> {
    let n = 200_000;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let gauss: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    let k = excess_kurtosis(&gauss).map_err(|e| e.to_string())?;
    if k.abs() > 0.05 {
        return Err(format!("gaussian kurtosis {k}"));
    }
    let band = 4.0 / (n as f64).sqrt();
    if let Some(a) = sq_return_autocorr(&gauss, 5).map_err(|e| e.to_string())?.iter().find(|a| a.abs() > band) {
        return Err(format!("gaussian squared-return acf {a} outside +-{band}"));
    }

    let laplace: Vec<f64> = (0..n)
        .map(|_| {
            let u: f64 = rng.random_range(-0.5..0.5);
            -u.signum() * (1.0 - 2.0 * u.abs()).ln()
        })
        .collect();
    let k = excess_kurtosis(&laplace).map_err(|e| e.to_string())?;
    if (k - 3.0).abs() > 0.3 {
        return Err(format!("laplace kurtosis {k}, expected 3"));
    }

    let phi = 0.6;
    let mut x = 0.0;
    let ar: Vec<f64> = gauss.iter().map(|e| {
        x = phi * x + e;
        x
    }).collect();
    let acf = autocorrelation(&ar, 3).map_err(|e| e.to_string())?;
    for (lag, a) in acf.iter().enumerate() {
        let want = f64::powi(phi, lag as i32 + 1);
        if (a - want).abs() > 0.02 {
            return Err(format!("AR(1) acf lag {} = {a}, expected {want}", lag + 1));
        }
    }

    let noise = Normal::new(0.0, 1.0).expect("valid");
    let (omega, alpha, beta): (f64, f64, f64) = (1e-6, 0.1, 0.85);
    let mut var = omega / (1.0 - alpha - beta);
    let garch: Vec<f64> = (0..n)
        .map(|_| {
            let r = var.sqrt() * noise.sample(&mut rng);
            var = omega + alpha * r * r + beta * var;
            r
        })
        .collect();
    let k = excess_kurtosis(&garch).map_err(|e| e.to_string())?;
    let acf = sq_return_autocorr(&garch, 5).map_err(|e| e.to_string())?;
    if k <= 0.0 || acf.iter().any(|a| *a <= 0.0) {
        return Err(format!("garch kurtosis {k}, squared-return acf {acf:?}"));
    }
    Ok(format!("gaussian, laplace, AR(1) and GARCH baselines on {n} points"))
}
