//! Quoted derivatives: two-sided quotes with finite depth, their
//! piecewise-linear acquisition cost and maturity payoffs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Options per exchange contract unless configured otherwise.
pub const DEFAULT_LOT_SIZE: f64 = 100.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptionKind {
    Call,
    Put,
}

impl OptionKind {
    pub fn payoff(self, strike: f64, level: f64) -> f64 {
        match self {
            OptionKind::Call => (level - strike).max(0.0),
            OptionKind::Put => (strike - level).max(0.0),
        }
    }
}

/// One two-sided option quote.
///
/// Prices are per option; quantities are in contracts as quoted by the
/// exchange and are converted to options through the market lot size.
/// Crossed quotes (`bid_price > ask_price`) are representable on purpose.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Quote {
    pub id: String,
    pub kind: OptionKind,
    pub strike: f64,
    /// Period index in `1..=T`.
    pub maturity: usize,
    pub bid_price: f64,
    pub ask_price: f64,
    /// Contracts available at the bid. May be `f64::INFINITY`.
    pub bid_qty: f64,
    /// Contracts available at the ask. May be `f64::INFINITY`.
    pub ask_qty: f64,
}

impl Quote {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        id: impl Into<String>,
        kind: OptionKind,
        strike: f64,
        maturity: usize,
        bid_price: f64,
        ask_price: f64,
        bid_qty: f64,
        ask_qty: f64,
    ) -> Result<Self> {
        let quote = Quote {
            id: id.into(),
            kind,
            strike,
            maturity,
            bid_price,
            ask_price,
            bid_qty,
            ask_qty,
        };
        quote.validate()?;
        Ok(quote)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.strike > 0.0 && self.strike.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "quote {}: strike must be positive, got {}",
                self.id, self.strike
            )));
        }
        if self.maturity == 0 {
            return Err(Error::InvalidInput(format!(
                "quote {}: maturity period must be at least 1",
                self.id
            )));
        }
        if !(self.bid_qty >= 0.0 && self.ask_qty >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "quote {}: quantities must be nonnegative",
                self.id
            )));
        }
        if !(self.bid_price.is_finite() && self.ask_price.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "quote {}: prices must be finite",
                self.id
            )));
        }
        Ok(())
    }

    pub fn crossed(&self) -> bool {
        self.bid_price > self.ask_price
    }

    pub fn spread(&self) -> f64 {
        self.ask_price - self.bid_price
    }

    pub fn payoff_at(&self, level: f64) -> f64 {
        self.kind.payoff(self.strike, level)
    }
}

/// Cost in USD of acquiring `qty` options (negative for a sale).
///
/// Buying is charged at the ask and selling at the bid, so the cost is
/// positively homogeneous and, for uncrossed quotes, convex.
pub fn acquisition_cost(quote: &Quote, qty: f64) -> f64 {
    if qty >= 0.0 {
        quote.ask_price * qty
    } else {
        quote.bid_price * qty
    }
}

/// Admissible position interval, in options.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PositionBox {
    pub lower: f64,
    pub upper: f64,
}

impl PositionBox {
    pub fn contains(&self, qty: f64) -> bool {
        self.lower <= qty && qty <= self.upper
    }
}

/// `[-bid_qty * lot_size, ask_qty * lot_size]`.
pub fn position_bounds(quote: &Quote, lot_size: f64) -> PositionBox {
    debug_assert!(lot_size > 0.0);
    PositionBox {
        lower: -quote.bid_qty * lot_size,
        upper: quote.ask_qty * lot_size,
    }
}

/// Payoff per option at each period `1..=T` along `path`; zero except at
/// the quote's maturity.
pub fn quoted_payoff(quote: &Quote, path: &[f64]) -> Result<Vec<f64>> {
    if quote.maturity > path.len() {
        return Err(Error::PathLength {
            expected: quote.maturity,
            got: path.len(),
        });
    }
    let mut flows = vec![0.0; path.len()];
    flows[quote.maturity - 1] = quote.payoff_at(path[quote.maturity - 1]);
    Ok(flows)
}

/// The perfectly liquid cash account: unit price, unit payoff at the
/// horizon, zero interest, no position limits.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CashAsset;

impl CashAsset {
    pub const UNIT_PRICE: f64 = 1.0;
    pub const PAYOFF: f64 = 1.0;
}

/// The set of quoted hedging instruments together with the lot size that
/// converts quoted contract quantities into options.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Market {
    pub quotes: Vec<Quote>,
    pub lot_size: f64,
}

impl Market {
    pub fn new(quotes: Vec<Quote>, lot_size: f64) -> Result<Self> {
        if !(lot_size > 0.0 && lot_size.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "lot size must be positive, got {lot_size}"
            )));
        }
        for quote in &quotes {
            quote.validate()?;
        }
        Ok(Market { quotes, lot_size })
    }

    pub fn empty(lot_size: f64) -> Self {
        Market {
            quotes: Vec::new(),
            lot_size,
        }
    }

    pub fn position_box(&self, index: usize) -> PositionBox {
        position_bounds(&self.quotes[index], self.lot_size)
    }

    pub fn horizon(&self) -> usize {
        self.quotes.iter().map(|q| q.maturity).max().unwrap_or(0)
    }

    /// Sorted, deduplicated strikes of the quotes maturing at `period`.
    pub fn strikes_at(&self, period: usize) -> Vec<f64> {
        let mut strikes: Vec<f64> = self
            .quotes
            .iter()
            .filter(|q| q.maturity == period)
            .map(|q| q.strike)
            .collect();
        strikes.sort_by(f64::total_cmp);
        strikes.dedup();
        strikes
    }

    /// A copy without the calls struck at `strike` maturing at `maturity`.
    pub fn without_call(&self, strike: f64, maturity: usize) -> Market {
        Market {
            quotes: self
                .quotes
                .iter()
                .filter(|q| !(q.kind == OptionKind::Call && q.strike == strike && q.maturity == maturity))
                .cloned()
                .collect(),
            lot_size: self.lot_size,
        }
    }

    /// Multiplies every quoted quantity by `factor`.
    pub fn with_scaled_quantities(&self, factor: f64) -> Market {
        let mut market = self.clone();
        for q in &mut market.quotes {
            q.bid_qty *= factor;
            q.ask_qty *= factor;
        }
        market
    }

    pub fn has_crossed_quotes(&self) -> bool {
        self.quotes.iter().any(Quote::crossed)
    }
}
