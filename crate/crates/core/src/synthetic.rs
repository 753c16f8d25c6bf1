//! Deterministic synthetic option chains used as fixtures and as the
//! packaged stand-in for a real quote snapshot.
//!
//! Mid prices come from Black-Scholes with a flat volatility and zero rates;
//! spreads widen with the premium and quantities vary pseudo-randomly but
//! reproducibly per quote.

use statrs::function::erf::erfc;

use crate::instruments::{Market, OptionKind, Quote, DEFAULT_LOT_SIZE};
use crate::scenario::BASE_SPOT;

pub const CHAIN_VOLATILITY: f64 = 0.13;
pub const TICK: f64 = 0.05;
/// Maturity dates of periods 1 and 2, as printed in tickers.
pub const MATURITY_DATES: [&str; 2] = ["4/21/2017", "5/19/2017"];
pub const CHAIN_HORIZONS: [f64; 2] = [31.0 / 365.0, 59.0 / 365.0];
/// Strike of the planted put-call pair.
pub const PLANTED_STRIKE: f64 = 2350.0;
/// Riskless profit per option of the planted pair when the index trades
/// without cost.
pub const PLANTED_EDGE: f64 = 1.0;

#[derive(Clone, Debug, PartialEq)]
pub struct ChainSpec {
    pub spot: f64,
    pub volatility: f64,
    pub horizons: Vec<f64>,
    pub dates: Vec<String>,
    pub call_strikes: Vec<f64>,
    pub put_strikes: Vec<f64>,
}

impl Default for ChainSpec {
    fn default() -> Self {
        let strikes: Vec<f64> = (0..=20).map(|k| 1500.0 + 50.0 * k as f64).collect();
        ChainSpec {
            spot: BASE_SPOT,
            volatility: CHAIN_VOLATILITY,
            horizons: CHAIN_HORIZONS.to_vec(),
            dates: MATURITY_DATES.iter().map(|s| s.to_string()).collect(),
            call_strikes: strikes.clone(),
            put_strikes: strikes,
        }
    }
}

fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Black-Scholes price with zero rates and dividends.
pub fn black_scholes(kind: OptionKind, spot: f64, strike: f64, vol: f64, years: f64) -> f64 {
    let sd = vol * years.sqrt();
    let d1 = (spot / strike).ln() / sd + 0.5 * sd;
    let d2 = d1 - sd;
    let call = spot * std_normal_cdf(d1) - strike * std_normal_cdf(d2);
    match kind {
        OptionKind::Call => call,
        OptionKind::Put => call - spot + strike,
    }
}

pub fn ticker(date: &str, kind: OptionKind, strike: f64) -> String {
    let letter = match kind {
        OptionKind::Call => 'C',
        OptionKind::Put => 'P',
    };
    format!("SPX US {date} {letter}{strike} Index")
}

// splitmix64 finalizer
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Reproducible quantity in `20..=400` contracts.
fn quantity(kind: OptionKind, strike: f64, maturity: usize, side: u64) -> f64 {
    let k = match kind {
        OptionKind::Call => 1,
        OptionKind::Put => 2,
    };
    let key = (strike as u64) << 8 | (maturity as u64) << 4 | k << 2 | side;
    20.0 + (mix(key) % 381) as f64
}

fn floor_tick(x: f64) -> f64 {
    ((x / TICK) + 1e-9).floor() * TICK
}

fn ceil_tick(x: f64) -> f64 {
    ((x / TICK) - 1e-9).ceil() * TICK
}

fn round_cents(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

fn make_quote(spec: &ChainSpec, kind: OptionKind, strike: f64, maturity: usize) -> Quote {
    let mid = black_scholes(kind, spec.spot, strike, spec.volatility, spec.horizons[maturity - 1]);
    let half = 0.5 + 0.01 * mid;
    let bid = round_cents(floor_tick(mid - half).max(0.0));
    let ask = round_cents(ceil_tick(mid + half).max(TICK));
    Quote {
        id: ticker(&spec.dates[maturity - 1], kind, strike),
        kind,
        strike,
        maturity,
        bid_price: bid,
        ask_price: ask,
        bid_qty: quantity(kind, strike, maturity, 0),
        ask_qty: quantity(kind, strike, maturity, 1),
    }
}

/// Calls then puts for each maturity, strikes ascending.
pub fn chain(spec: &ChainSpec) -> Market {
    let mut quotes = Vec::new();
    for maturity in 1..=spec.horizons.len() {
        for &k in &spec.call_strikes {
            quotes.push(make_quote(spec, OptionKind::Call, k, maturity));
        }
        for &k in &spec.put_strikes {
            quotes.push(make_quote(spec, OptionKind::Put, k, maturity));
        }
    }
    Market {
        quotes,
        lot_size: DEFAULT_LOT_SIZE,
    }
}

/// The packaged desk-scale chain: strikes 1500 to 2500 in steps of 50.
pub fn default_chain() -> Market {
    chain(&ChainSpec::default())
}

/// The default chain with the second-maturity pair at [`PLANTED_STRIKE`]
/// requoted so that buying the call at the ask, selling the put at the bid
/// and shorting the index locks in [`PLANTED_EDGE`] per option when the
/// index trades without cost. No quote is crossed.
pub fn planted_arbitrage_chain() -> Market {
    let mut market = default_chain();
    let forward_cost = BASE_SPOT - PLANTED_STRIKE - PLANTED_EDGE;
    let find = |m: &Market, kind| {
        m.quotes
            .iter()
            .position(|q| q.kind == kind && q.strike == PLANTED_STRIKE && q.maturity == 2)
            .expect("planted strike is quoted")
    };
    let c = find(&market, OptionKind::Call);
    let p = find(&market, OptionKind::Put);
    let put_bid = market.quotes[p].bid_price;
    let call_ask = round_cents(put_bid + forward_cost);
    let call = &mut market.quotes[c];
    call.ask_price = call_ask;
    call.bid_price = call.bid_price.min(round_cents(call_ask - 1.0));
    market
}

/// Two opposite quotes on the same option with the bid of one above the
/// ask of the other.
pub fn crossed_chain() -> Market {
    let mut market = default_chain();
    let mut twin = market.quotes[market.quotes.len() / 2].clone();
    twin.bid_price = market.quotes[market.quotes.len() / 2].ask_price + 5.0;
    twin.ask_price = twin.bid_price + 1.0;
    market.quotes.push(twin);
    market
}

/// One call at `strike` maturing at period 2 with zero spread and unlimited
/// depth, priced at the chain's Black-Scholes mid.
pub fn replication_chain(strike: f64) -> Market {
    let spec = ChainSpec::default();
    let price = round_cents(black_scholes(OptionKind::Call, spec.spot, strike, spec.volatility, spec.horizons[1]));
    Market {
        quotes: vec![Quote {
            id: ticker(&spec.dates[1], OptionKind::Call, strike),
            kind: OptionKind::Call,
            strike,
            maturity: 2,
            bid_price: price,
            ask_price: price,
            bid_qty: f64::INFINITY,
            ask_qty: f64::INFINITY,
        }],
        lot_size: DEFAULT_LOT_SIZE,
    }
}

/// Full-depth chain: calls 500 to 2500 and puts 1555 to 2500 in steps of 5
/// for both maturities.
pub fn paper_scale_chain() -> Market {
    let spec = ChainSpec {
        call_strikes: (0..=400).map(|k| 500.0 + 5.0 * k as f64).collect(),
        put_strikes: (0..=189).map(|k| 1555.0 + 5.0 * k as f64).collect(),
        ..ChainSpec::default()
    };
    chain(&spec)
}
