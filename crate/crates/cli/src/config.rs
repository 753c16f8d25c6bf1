//! Run configuration, read from JSON. Every field has a default and unknown
//! fields are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use semistatic::claims::{Claim, ClaimKind, CustomTable, Liability, DEFAULT_CONTRACT_SIZE, DEFAULT_DIGITAL_LEVEL};
use semistatic::galerkin::Frictions;
use semistatic::instruments::{Market, DEFAULT_LOT_SIZE};
use semistatic::pricing::{AgentSpec, PricingSetup, DEFAULT_INITIAL_WEALTH, DEFAULT_RISK_AVERSION};
use semistatic::scenario::{VgParams, DEFAULT_TRUNCATION};
use semistatic::solver::SolveSettings;
use semistatic::synthetic;

use crate::error::{CliError, Result};
use crate::ingest::{read_quotes, MaturityCalendar};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub agent: AgentConfig,
    pub model: VgParams,
    pub market: MarketConfig,
    pub grid: GridConfig,
    pub solver: SolveSettings,
    pub claim: ClaimConfig,
    pub flags: Flags,
    pub simulation: SimulationConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    pub initial_wealth: f64,
    pub risk_aversion: f64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            initial_wealth: DEFAULT_INITIAL_WEALTH,
            risk_aversion: DEFAULT_RISK_AVERSION,
        }
    }
}

/// Built-in quote chains.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Fixture {
    /// Strikes 1500 to 2500 in steps of 50, both maturities.
    #[default]
    Synthetic,
    /// The synthetic chain with one put-call pair mispriced against the index.
    Planted,
    /// The synthetic chain plus a quote whose bid exceeds another ask.
    Crossed,
}

impl Fixture {
    pub fn file_name(self) -> &'static str {
        match self {
            Fixture::Synthetic => "synthetic_chain.csv",
            Fixture::Planted => "planted_arbitrage.csv",
            Fixture::Crossed => "crossed_chain.csv",
        }
    }

    /// The packaged CSV text.
    pub fn csv(self) -> &'static str {
        match self {
            Fixture::Synthetic => include_str!("../data/synthetic_chain.csv"),
            Fixture::Planted => include_str!("../data/planted_arbitrage.csv"),
            Fixture::Crossed => include_str!("../data/crossed_chain.csv"),
        }
    }

    /// The chain the packaged CSV was generated from.
    pub fn market(self) -> Market {
        match self {
            Fixture::Synthetic => synthetic::default_chain(),
            Fixture::Planted => synthetic::planted_arbitrage_chain(),
            Fixture::Crossed => synthetic::crossed_chain(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MarketConfig {
    /// Quote file; the packaged `fixture` is used when absent.
    pub quotes: Option<PathBuf>,
    pub fixture: Fixture,
    /// Options per contract of the quoted instruments.
    pub lot_size: f64,
    /// Maturity dates of periods `1..=T` as `M/D/YYYY`.
    pub maturities: Vec<String>,
    /// Proportional index trading cost in percent; frictionless when absent.
    pub delta_pct: Option<f64>,
    pub truncation: (f64, f64),
}

impl Default for MarketConfig {
    fn default() -> Self {
        MarketConfig {
            quotes: None,
            fixture: Fixture::default(),
            lot_size: DEFAULT_LOT_SIZE,
            maturities: synthetic::MATURITY_DATES.iter().map(|s| s.to_string()).collect(),
            delta_pct: None,
            truncation: DEFAULT_TRUNCATION,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    /// One box per period, overriding `market.truncation`.
    pub truncation_per_period: Option<Vec<(f64, f64)>>,
    pub dynamic_trading: bool,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            truncation_per_period: None,
            dynamic_trading: true,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum ClaimType {
    VanillaCall,
    #[default]
    KnockoutCall,
    AsianCall,
    LookbackCall,
    LookbackDigital,
    /// Payout table over the grid points, read from `table`.
    Custom,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClaimConfig {
    pub kind: ClaimType,
    pub strike: f64,
    pub barrier: f64,
    pub payout_level: f64,
    /// CSV with columns `x1..xT,payout` for `custom` claims.
    pub table: Option<PathBuf>,
    /// Contracts; negative for a long position.
    pub units: f64,
    pub contract_size: f64,
}

impl Default for ClaimConfig {
    fn default() -> Self {
        ClaimConfig {
            kind: ClaimType::default(),
            strike: 2350.0,
            barrier: 2400.0,
            payout_level: DEFAULT_DIGITAL_LEVEL,
            table: None,
            units: 1.0,
            contract_size: DEFAULT_CONTRACT_SIZE,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Flags {
    /// Drop the calls struck at the claim strike from the hedging instruments.
    pub exclude_claim_strike: bool,
    /// Ignore `market.delta_pct`.
    pub frictionless: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub paths: usize,
    pub seed: u64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig { paths: 10_000, seed: 1 }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(CliError::Config(msg));
        if self.market.maturities.len() != self.model.horizons.len() {
            return bad(format!(
                "{} maturity dates for {} model horizons",
                self.market.maturities.len(),
                self.model.horizons.len()
            ));
        }
        MaturityCalendar::new(&self.market.maturities).map_err(CliError::Config)?;
        for (lo, hi) in self.truncation() {
            if !(lo > 0.0 && lo < hi && hi.is_finite()) {
                return bad(format!("truncation box ({lo}, {hi}) must satisfy 0 < lo < hi < inf"));
            }
        }
        if let Some(boxes) = &self.grid.truncation_per_period {
            if boxes.len() != self.model.horizons.len() {
                return bad(format!("{} truncation boxes for {} periods", boxes.len(), self.model.horizons.len()));
            }
        }
        if let Some(d) = self.market.delta_pct {
            if self.flags.frictionless {
                return bad("delta_pct and the frictionless flag are mutually exclusive".into());
            }
            if !(d >= 0.0 && d.is_finite()) {
                return bad(format!("delta_pct must be a nonnegative number, got {d}"));
            }
        }
        if !self.claim.units.is_finite() {
            return bad(format!("claim units must be finite, got {}", self.claim.units));
        }
        if self.claim.kind == ClaimType::Custom && self.claim.table.is_none() {
            return bad("custom claims need a payout table".into());
        }
        if self.flags.exclude_claim_strike && self.claim.kind == ClaimType::Custom {
            return bad("custom claims have no strike to exclude".into());
        }
        self.agent_spec().validate()?;
        self.model.validate()?;
        self.solver.validate()?;
        Ok(())
    }

    pub fn calendar(&self) -> Result<MaturityCalendar> {
        MaturityCalendar::new(&self.market.maturities).map_err(CliError::Config)
    }

    pub fn truncation(&self) -> Vec<(f64, f64)> {
        self.grid
            .truncation_per_period
            .clone()
            .unwrap_or_else(|| vec![self.market.truncation])
    }

    pub fn frictions(&self) -> Frictions {
        match self.market.delta_pct {
            Some(delta_pct) if !self.flags.frictionless => Frictions::TransactionCost { delta_pct },
            _ => Frictions::Frictionless,
        }
    }

    pub fn agent_spec(&self) -> AgentSpec {
        AgentSpec {
            initial_wealth: self.agent.initial_wealth,
            risk_aversion: self.agent.risk_aversion,
            baseline: Vec::new(),
        }
    }

    /// Quotes from the configured file or the packaged fixture, minus the
    /// excluded strike.
    pub fn market(&self) -> Result<Market> {
        let calendar = self.calendar()?;
        let quotes = match &self.market.quotes {
            Some(path) => {
                let file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
                read_quotes(file, &calendar)?
            }
            None => read_quotes(self.market.fixture.csv().as_bytes(), &calendar)?,
        };
        let market = Market::new(quotes, self.market.lot_size)?;
        if market.horizon() > self.model.horizons.len() {
            return Err(CliError::Config(format!(
                "quotes mature at period {} beyond the model horizon",
                market.horizon()
            )));
        }
        Ok(if self.flags.exclude_claim_strike {
            market.without_call(self.claim.strike, self.model.horizons.len())
        } else {
            market
        })
    }

    pub fn setup(&self) -> Result<PricingSetup> {
        self.validate()?;
        let mut setup = PricingSetup::new(self.market()?, self.model.clone(), self.agent_spec());
        setup.truncation = self.truncation();
        setup.frictions = self.frictions();
        setup.settings = self.solver.clone();
        setup.dynamic_trading = self.grid.dynamic_trading;
        Ok(setup)
    }

    pub fn claim(&self) -> Result<Liability> {
        let c = &self.claim;
        let kind = match c.kind {
            ClaimType::VanillaCall => ClaimKind::VanillaCall { strike: c.strike },
            ClaimType::KnockoutCall => ClaimKind::KnockoutCall {
                strike: c.strike,
                barrier: c.barrier,
            },
            ClaimType::AsianCall => ClaimKind::AsianCall { strike: c.strike },
            ClaimType::LookbackCall => ClaimKind::LookbackCall { strike: c.strike },
            ClaimType::LookbackDigital => ClaimKind::LookbackDigital {
                strike: c.strike,
                payout_level: c.payout_level,
            },
            ClaimType::Custom => {
                let path = c.table.as_deref().ok_or_else(|| CliError::Config("custom claim without table".into()))?;
                ClaimKind::Custom(read_custom_table(path, self.model.horizons.len())?)
            }
        };
        Ok(Liability::new(Claim::with_contract_size(kind, c.contract_size)?, c.units))
    }
}

/// Reads `x1,...,xT,payout` rows; the header names are not checked.
pub fn read_custom_table(path: &Path, periods: usize) -> Result<CustomTable> {
    let file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != periods + 1 {
            return Err(CliError::Config(format!(
                "{} line {line}: expected {} columns, found {}",
                path.display(),
                periods + 1,
                record.len()
            )));
        }
        let values = record
            .iter()
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| CliError::Config(format!("{} line {line}: {e}", path.display())))?;
        rows.push((values[..periods].to_vec(), values[periods]));
    }
    Ok(CustomTable::from_rows(periods, rows)?)
}
