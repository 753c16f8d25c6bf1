//! Claims to be priced: a vanilla call, four two-period path-dependent
//! options, and a tabulated custom payout.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_CONTRACT_SIZE: f64 = 100.0;
pub const DEFAULT_DIGITAL_LEVEL: f64 = 10.0;

/// Payout table keyed by the exact bit patterns of the path coordinates.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CustomTable {
    periods: usize,
    values: HashMap<Vec<u64>, f64>,
}

impl CustomTable {
    pub fn new(periods: usize) -> Self {
        CustomTable {
            periods,
            values: HashMap::new(),
        }
    }

    pub fn from_rows(periods: usize, rows: impl IntoIterator<Item = (Vec<f64>, f64)>) -> Result<Self> {
        let mut table = CustomTable::new(periods);
        for (path, payout) in rows {
            table.insert(&path, payout)?;
        }
        Ok(table)
    }

    pub fn insert(&mut self, path: &[f64], payout: f64) -> Result<()> {
        if path.len() != self.periods {
            return Err(Error::PathLength {
                expected: self.periods,
                got: path.len(),
            });
        }
        self.values.insert(key(path), payout);
        Ok(())
    }

    pub fn get(&self, path: &[f64]) -> Option<f64> {
        self.values.get(&key(path)).copied()
    }

    pub fn periods(&self) -> usize {
        self.periods
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

fn key(path: &[f64]) -> Vec<u64> {
    // +0.0 and -0.0 must hash alike
    path.iter().map(|x| (x + 0.0).to_bits()).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub enum ClaimKind {
    VanillaCall { strike: f64 },
    KnockoutCall { strike: f64, barrier: f64 },
    AsianCall { strike: f64 },
    LookbackCall { strike: f64 },
    LookbackDigital { strike: f64, payout_level: f64 },
    Custom(CustomTable),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BreakpointKind {
    Kink,
    Jump,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Breakpoint {
    pub level: f64,
    pub kind: BreakpointKind,
}

impl Breakpoint {
    pub fn kink(level: f64) -> Self {
        Breakpoint {
            level,
            kind: BreakpointKind::Kink,
        }
    }

    pub fn jump(level: f64) -> Self {
        Breakpoint {
            level,
            kind: BreakpointKind::Jump,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Claim {
    pub kind: ClaimKind,
    /// Options per contract. Payouts are per option; callers scale.
    pub contract_size: f64,
}

impl Claim {
    pub fn new(kind: ClaimKind) -> Result<Self> {
        Self::with_contract_size(kind, DEFAULT_CONTRACT_SIZE)
    }

    pub fn with_contract_size(kind: ClaimKind, contract_size: f64) -> Result<Self> {
        let positive = |v: f64, what: &str| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidInput(format!("{what} must be positive, got {v}")))
            }
        };
        positive(contract_size, "contract size")?;
        match &kind {
            ClaimKind::VanillaCall { strike }
            | ClaimKind::AsianCall { strike }
            | ClaimKind::LookbackCall { strike } => positive(*strike, "strike")?,
            ClaimKind::KnockoutCall { strike, barrier } => {
                positive(*strike, "strike")?;
                positive(*barrier, "barrier")?;
            }
            ClaimKind::LookbackDigital {
                strike,
                payout_level,
            } => {
                positive(*strike, "strike")?;
                positive(*payout_level, "digital payout level")?;
            }
            ClaimKind::Custom(_) => {}
        }
        Ok(Claim {
            kind,
            contract_size,
        })
    }

    pub fn vanilla_call(strike: f64) -> Self {
        Self::new(ClaimKind::VanillaCall { strike }).expect("valid vanilla call")
    }

    pub fn knockout_call(strike: f64, barrier: f64) -> Self {
        Self::new(ClaimKind::KnockoutCall { strike, barrier }).expect("valid knockout call")
    }

    pub fn asian_call(strike: f64) -> Self {
        Self::new(ClaimKind::AsianCall { strike }).expect("valid asian call")
    }

    pub fn lookback_call(strike: f64) -> Self {
        Self::new(ClaimKind::LookbackCall { strike }).expect("valid lookback call")
    }

    pub fn lookback_digital(strike: f64) -> Self {
        Self::new(ClaimKind::LookbackDigital {
            strike,
            payout_level: DEFAULT_DIGITAL_LEVEL,
        })
        .expect("valid lookback digital")
    }

    /// The four path-dependent claims and the vanilla call, all struck at
    /// `strike`, the knockout with barrier `barrier`.
    pub fn standard_set(strike: f64, barrier: f64) -> Vec<Claim> {
        vec![
            Claim::vanilla_call(strike),
            Claim::knockout_call(strike, barrier),
            Claim::asian_call(strike),
            Claim::lookback_call(strike),
            Claim::lookback_digital(strike),
        ]
    }

    pub fn label(&self) -> String {
        match &self.kind {
            ClaimKind::VanillaCall { strike } => format!("vanilla_call K={strike}"),
            ClaimKind::KnockoutCall { strike, barrier } => {
                format!("knockout_call K={strike} B={barrier}")
            }
            ClaimKind::AsianCall { strike } => format!("asian_call K={strike}"),
            ClaimKind::LookbackCall { strike } => format!("lookback_call K={strike}"),
            ClaimKind::LookbackDigital {
                strike,
                payout_level,
            } => format!("lookback_digital K={strike} level={payout_level}"),
            ClaimKind::Custom(t) => format!("custom ({} rows)", t.len()),
        }
    }

    /// Number of periods the built-in payoffs are written on.
    pub fn periods(&self) -> usize {
        match &self.kind {
            ClaimKind::Custom(t) => t.periods(),
            _ => 2,
        }
    }

    /// Payout per option along `path = (X_1, ..., X_T)`, paid at `T`.
    pub fn payout(&self, path: &[f64]) -> Result<f64> {
        if let ClaimKind::Custom(table) = &self.kind {
            return table
                .get(path)
                .ok_or_else(|| Error::MissingCustomValue(path.to_vec()));
        }
        if path.len() != 2 {
            return Err(Error::PathLength {
                expected: 2,
                got: path.len(),
            });
        }
        let (x1, x2) = (path[0], path[1]);
        let value = match &self.kind {
            ClaimKind::VanillaCall { strike } => (x2 - strike).max(0.0),
            ClaimKind::KnockoutCall { strike, barrier } => {
                if x1 < *barrier {
                    (x2 - strike).max(0.0)
                } else {
                    0.0
                }
            }
            ClaimKind::AsianCall { strike } => (0.5 * (x1 + x2) - strike).max(0.0),
            ClaimKind::LookbackCall { strike } => (x1 - strike).max(0.0).max((x2 - strike).max(0.0)),
            ClaimKind::LookbackDigital {
                strike,
                payout_level,
            } => {
                if x1 >= *strike || x2 >= *strike {
                    *payout_level
                } else {
                    0.0
                }
            }
            ClaimKind::Custom(_) => unreachable!(),
        };
        Ok(value)
    }

    /// Per-period levels where the payout is not smooth. Custom claims
    /// carry no metadata and return an empty list.
    pub fn breakpoints(&self) -> Vec<Vec<Breakpoint>> {
        match &self.kind {
            ClaimKind::VanillaCall { strike } => vec![vec![], vec![Breakpoint::kink(*strike)]],
            ClaimKind::KnockoutCall { strike, barrier } => {
                vec![vec![Breakpoint::jump(*barrier)], vec![Breakpoint::kink(*strike)]]
            }
            ClaimKind::AsianCall { strike } | ClaimKind::LookbackCall { strike } => {
                vec![vec![Breakpoint::kink(*strike)], vec![Breakpoint::kink(*strike)]]
            }
            ClaimKind::LookbackDigital { strike, .. } => {
                vec![vec![Breakpoint::jump(*strike)], vec![Breakpoint::jump(*strike)]]
            }
            ClaimKind::Custom(_) => Vec::new(),
        }
    }
}

/// A position in a claim: `units` contracts of `claim`, positive for a
/// liability (sold claim), negative for an asset (bought claim).
#[derive(Clone, Debug, PartialEq)]
pub struct Liability {
    pub claim: Claim,
    pub units: f64,
}

impl Liability {
    pub fn new(claim: Claim, units: f64) -> Self {
        Liability { claim, units }
    }

    /// Cash owed at the horizon along `path`, in USD.
    pub fn amount(&self, path: &[f64]) -> Result<f64> {
        if self.units == 0.0 {
            return Ok(0.0);
        }
        Ok(self.units * self.claim.contract_size * self.claim.payout(path)?)
    }

    pub fn negated(&self) -> Self {
        Liability {
            claim: self.claim.clone(),
            units: -self.units,
        }
    }

    /// Options referenced by this position.
    pub fn options(&self) -> f64 {
        self.units * self.claim.contract_size
    }
}
