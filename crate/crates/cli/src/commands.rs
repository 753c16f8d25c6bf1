//! Subcommands. Each prints a JSON summary on stdout and, with `--out`,
//! writes its tables into that directory.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use semistatic::claims::Liability;
use semistatic::galerkin::{AssembledProgram, IndexPosition};
use semistatic::instruments::Market;
use semistatic::pricing::{Optimum, Pricer};
use semistatic::scenario::simulate_paths;
use semistatic::solver::{write_trace_csv, SolveStatus};

use crate::config::{ClaimType, Fixture, RunConfig};
use crate::error::{CliError, Result};
use crate::ingest::write_quotes;

pub const CONFIG_ENV: &str = "SEMISTATIC_CONFIG";

/// Semi-static hedging and indifference pricing against a quoted option chain.
#[derive(Debug, Parser)]
#[command(name = "semistatic", version)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// JSON run configuration.
    #[arg(long, global = true, env = CONFIG_ENV)]
    pub config: Option<PathBuf>,
    /// Quote CSV; overrides the configured quotes.
    #[arg(long, global = true)]
    pub quotes: Option<PathBuf>,
    /// Packaged quote chain used when no quote file is given.
    #[arg(long, global = true, value_enum)]
    pub fixture: Option<Fixture>,
    /// Proportional index trading cost in percent.
    #[arg(long, global = true, conflicts_with = "frictionless", allow_negative_numbers = true)]
    pub delta_pct: Option<f64>,
    /// Trade the index without cost.
    #[arg(long, global = true)]
    pub frictionless: bool,
    /// Drop the calls struck at the claim strike from the hedging instruments.
    #[arg(long, global = true)]
    pub exclude_strike: bool,
    /// Seed of the out-of-sample simulation.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, value_enum)]
    pub claim: Option<ClaimType>,
    #[arg(long, global = true)]
    pub strike: Option<f64>,
    #[arg(long, global = true)]
    pub barrier: Option<f64>,
    /// Contracts of the claim; negative for a long position.
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub units: Option<f64>,
    #[arg(long, global = true)]
    pub risk_aversion: Option<f64>,
    /// Directory for the CSV and JSON artifacts.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Write the Newton trace of the main solve to `trace.csv` in `--out`.
    #[arg(long, global = true)]
    pub trace: bool,
    /// Report errors as a JSON object on stderr.
    #[arg(long, global = true)]
    pub error_json: bool,
    /// Worker threads; the output does not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the hedging problem for the configured claim.
    Optimize,
    /// Indifference, superhedging and subhedging prices of the claim.
    Price,
    /// Change of the optimal portfolio caused by selling the claim.
    Hedge,
    /// Cheapest portfolio dominating the claim on the grid.
    Superhedge,
    /// Dearest portfolio dominated by the claim on the grid.
    Subhedge,
    /// Search for an arbitrage strategy.
    Arbitrage {
        /// Exit 0 when arbitrage is found and 2 when it is not.
        #[arg(long)]
        expect_arbitrage: bool,
    },
    /// Terminal wealth of the optimal strategy on simulated paths.
    Simulate {
        #[arg(long)]
        paths: Option<usize>,
    },
    /// The quadrature grid as CSV.
    Grid,
    /// Print the effective configuration.
    Config,
    /// Print the quote chain as CSV.
    ExportChain,
}

/// Outcome of a subcommand that completed without error.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Success,
    /// Infeasible hedge or an unexpected arbitrage result.
    Flagged,
}

impl Outcome {
    pub fn exit_code(self) -> u8 {
        match self {
            Outcome::Success => 0,
            Outcome::Flagged => 2,
        }
    }
}

impl GlobalArgs {
    /// Loads the configuration and applies the command-line overrides.
    pub fn config(&self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(q) = &self.quotes {
            c.market.quotes = Some(q.clone());
        }
        if let Some(f) = self.fixture {
            c.market.fixture = f;
            c.market.quotes = None;
        }
        if let Some(d) = self.delta_pct {
            c.market.delta_pct = Some(d);
            c.flags.frictionless = false;
        }
        if self.frictionless {
            c.market.delta_pct = None;
            c.flags.frictionless = true;
        }
        c.flags.exclude_claim_strike |= self.exclude_strike;
        if let Some(s) = self.seed {
            c.simulation.seed = s;
        }
        if let Some(k) = self.claim {
            c.claim.kind = k;
        }
        if let Some(k) = self.strike {
            c.claim.strike = k;
        }
        if let Some(b) = self.barrier {
            c.claim.barrier = b;
        }
        if let Some(u) = self.units {
            c.claim.units = u;
        }
        if let Some(r) = self.risk_aversion {
            c.agent.risk_aversion = r;
        }
        c.solver.trace |= self.trace;
        Ok(c)
    }
}

struct Artifacts<'a> {
    dir: Option<&'a Path>,
}

impl Artifacts<'_> {
    fn write(&self, name: &str, body: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
        let Some(dir) = self.dir else { return Ok(()) };
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        let path = dir.join(name);
        let file = File::create(&path).map_err(|e| CliError::io(&path, e))?;
        let mut w = BufWriter::new(file);
        body(&mut w)?;
        w.flush().map_err(|e| CliError::io(&path, e))
    }

    fn json<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        self.write(name, |w| {
            serde_json::to_writer_pretty(&mut *w, value)?;
            writeln!(w).map_err(|e| CliError::io(name, e))
        })
    }
}

fn print_json<T: Serialize>(out: &mut dyn Write, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(&mut *out, value)?;
    writeln!(out).map_err(|e| CliError::io("<stdout>", e))
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

#[derive(Serialize)]
struct OptimizeSummary {
    claim: String,
    units: f64,
    status: SolveStatus,
    objective: f64,
    log_objective: f64,
    /// `-log(phi) / kappa`: the cash amount with the same expected loss.
    certainty_equivalent: f64,
    cash: f64,
    quantity_constraints_active: bool,
    grid_points: usize,
    variables: usize,
    outer_iterations: usize,
    newton_steps: usize,
}

fn write_portfolio(
    w: &mut dyn Write,
    market: &Market,
    positions: &[f64],
    cash: f64,
    lower_upper: bool,
) -> Result<()> {
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(["instrument", "kind", "strike", "maturity", "bid_price", "ask_price", "lower", "upper", "position"])?;
    for (i, (q, x)) in market.quotes.iter().zip(positions).enumerate() {
        let b = market.position_box(i);
        let kind = format!("{:?}", q.kind).to_lowercase();
        let (lower, upper) = if lower_upper {
            (b.lower.to_string(), b.upper.to_string())
        } else {
            (String::new(), String::new())
        };
        csv.write_record([
            q.id.clone(),
            kind,
            q.strike.to_string(),
            q.maturity.to_string(),
            q.bid_price.to_string(),
            q.ask_price.to_string(),
            lower,
            upper,
            x.to_string(),
        ])?;
    }
    csv.write_record(["cash", "cash", "", "", "1", "1", "", "", &cash.to_string()])?;
    csv.flush().map_err(csv::Error::from)?;
    Ok(())
}

fn write_strategy(w: &mut dyn Write, index: &[IndexPosition]) -> Result<()> {
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(["period", "cell", "lower", "upper", "units"])?;
    for p in index {
        csv.write_record([
            p.period.to_string(),
            p.cell.to_string(),
            p.lower.to_string(),
            p.upper.to_string(),
            p.units.to_string(),
        ])?;
    }
    csv.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// One row per grid point with the levels and `value(point)`.
fn write_surface(
    w: &mut dyn Write,
    program: &AssembledProgram,
    column: &str,
    mut value: impl FnMut(&[f64]) -> Result<f64>,
) -> Result<()> {
    let mut csv = csv::Writer::from_writer(w);
    let mut header: Vec<String> = (1..=program.periods()).map(|t| format!("X{t}")).collect();
    header.push(column.to_string());
    csv.write_record(&header)?;
    for i in 0..program.num_grid_points() {
        let path = program.grid_point(i);
        let mut row: Vec<String> = path.iter().map(|x| x.to_string()).collect();
        row.push(value(path)?.to_string());
        csv.write_record(&row)?;
    }
    csv.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Payout of the portfolio alone: claim amount minus loss.
fn portfolio_payout(o: &Optimum, claims: &[Liability], path: &[f64]) -> Result<f64> {
    let owed: f64 = claims.iter().map(|c| c.amount(path)).sum::<semistatic::Result<f64>>()?;
    Ok(owed - o.program.loss_at(&o.solution.x, path)?)
}

fn claims_of(claim: &Liability) -> Vec<Liability> {
    if claim.units == 0.0 {
        Vec::new()
    } else {
        vec![claim.clone()]
    }
}

pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<Outcome> {
    let config = cli.global.config()?;
    let artifacts = Artifacts {
        dir: cli.global.out.as_deref(),
    };
    match &cli.command {
        Command::Config => {
            print_json(out, &config)?;
            Ok(Outcome::Success)
        }
        Command::ExportChain => {
            config.validate()?;
            // without a quote file the chain comes from its generator, which
            // is how the packaged CSVs are produced
            let quotes = match &config.market.quotes {
                Some(_) => config.market()?.quotes,
                None => config.market.fixture.market().quotes,
            };
            write_quotes(&mut *out, &quotes, &config.calendar()?)?;
            Ok(Outcome::Success)
        }
        Command::Grid => {
            let pricer = Pricer::new(config.setup()?, &claims_of(&config.claim()?))?;
            pricer.grid().write_csv(&mut *out).map_err(|e| CliError::io("<stdout>", e))?;
            Ok(Outcome::Success)
        }
        Command::Optimize => optimize(&config, &artifacts, out),
        Command::Price => {
            let claim = config.claim()?;
            let pricer = Pricer::new(config.setup()?, std::slice::from_ref(&claim))?;
            let report = pricer.price_report(&claim)?;
            artifacts.json("price.json", &report)?;
            print_json(out, &report)?;
            Ok(Outcome::Success)
        }
        Command::Hedge => hedge(&config, &artifacts, out),
        Command::Superhedge | Command::Subhedge => {
            let claim = config.claim()?;
            let setup = config.setup()?;
            let market = setup.market.clone();
            let pricer = Pricer::new(setup, std::slice::from_ref(&claim))?;
            let (name, result) = if matches!(cli.command, Command::Superhedge) {
                ("superhedge", pricer.superhedge(&claim)?)
            } else {
                ("subhedge", pricer.subhedge(&claim)?)
            };
            #[derive(Serialize)]
            struct HedgeSummary {
                side: &'static str,
                claim: String,
                status: SolveStatus,
                /// Total USD, absent when no such portfolio exists.
                cost: Option<f64>,
                cost_per_option: Option<f64>,
                truncation: Vec<(f64, f64)>,
            }
            let summary = HedgeSummary {
                side: name,
                claim: claim.claim.label(),
                status: result.status,
                cost: finite(result.cost),
                cost_per_option: finite(result.cost / claim.options()),
                truncation: pricer.grid().truncation.clone(),
            };
            artifacts.json(&format!("{name}.json"), &summary)?;
            if result.status == SolveStatus::Optimal {
                artifacts.write("portfolio.csv", |w| {
                    write_portfolio(w, &market, &result.option_positions, result.cash, true)
                })?;
                artifacts.write("strategy.csv", |w| write_strategy(w, &result.index))?;
            }
            print_json(out, &summary)?;
            Ok(if result.status == SolveStatus::Optimal {
                Outcome::Success
            } else {
                Outcome::Flagged
            })
        }
        Command::Arbitrage { expect_arbitrage } => {
            let setup = config.setup()?;
            let market = setup.market.clone();
            let pricer = Pricer::new(setup, &[])?;
            let found = pricer.find_arbitrage(config.agent.initial_wealth)?;
            #[derive(Serialize)]
            struct ArbitrageSummary {
                found: bool,
                strong: Option<bool>,
                expected_excess: Option<f64>,
                min_excess: Option<f64>,
            }
            let summary = ArbitrageSummary {
                found: found.is_some(),
                strong: found.as_ref().map(|a| a.strong),
                expected_excess: found.as_ref().map(|a| a.expected_excess),
                min_excess: found.as_ref().map(|a| a.min_excess),
            };
            artifacts.json("arbitrage.json", &summary)?;
            if let Some(a) = &found {
                artifacts.write("portfolio.csv", |w| write_portfolio(w, &market, &a.option_positions, a.cash, true))?;
                artifacts.write("strategy.csv", |w| write_strategy(w, &a.index))?;
            }
            print_json(out, &summary)?;
            Ok(if found.is_some() == *expect_arbitrage {
                Outcome::Success
            } else {
                Outcome::Flagged
            })
        }
        Command::Simulate { paths } => simulate(&config, paths.unwrap_or(config.simulation.paths), &artifacts, out),
    }
}

fn solve(config: &RunConfig) -> Result<(Pricer, Liability, Optimum)> {
    let claim = config.claim()?;
    let claims = claims_of(&claim);
    let pricer = Pricer::new(config.setup()?, &claims)?;
    let optimum = pricer.optimum(&claims, config.agent.initial_wealth)?;
    Ok((pricer, claim, optimum))
}

fn optimize(config: &RunConfig, artifacts: &Artifacts, out: &mut dyn Write) -> Result<Outcome> {
    let (pricer, claim, o) = solve(config)?;
    let claims = claims_of(&claim);
    let summary = OptimizeSummary {
        claim: claim.claim.label(),
        units: claim.units,
        status: o.solution.status,
        objective: o.value(),
        log_objective: o.log_value(),
        certainty_equivalent: -o.log_value() / o.program.kappa,
        cash: o.cash(),
        quantity_constraints_active: o.quantity_constraints_active(),
        grid_points: pricer.grid().len(),
        variables: o.program.num_variables(),
        outer_iterations: o.solution.outer_iterations,
        newton_steps: o.solution.newton_steps,
    };
    artifacts.json("optimize.json", &summary)?;
    let market = &pricer.setup().market;
    artifacts.write("portfolio.csv", |w| write_portfolio(w, market, &o.option_positions(), o.cash(), true))?;
    artifacts.write("strategy.csv", |w| write_strategy(w, &o.index_positions()))?;
    artifacts.write("surface.csv", |w| {
        write_surface(w, &o.program, "payout", |p| portfolio_payout(&o, &claims, p))
    })?;
    if config.solver.trace {
        artifacts.write("trace.csv", |w| {
            write_trace_csv(&o.solution.trace, &mut *w).map_err(|e| CliError::io("trace.csv", e))
        })?;
    }
    print_json(out, &summary)?;
    Ok(Outcome::Success)
}

fn hedge(config: &RunConfig, artifacts: &Artifacts, out: &mut dyn Write) -> Result<Outcome> {
    let claim = config.claim()?;
    let pricer = Pricer::new(config.setup()?, std::slice::from_ref(&claim))?;
    let w = config.agent.initial_wealth;
    let without = pricer.optimum(&[], w)?;
    let with = pricer.optimum(std::slice::from_ref(&claim), w)?;
    let dx: Vec<f64> = with
        .option_positions()
        .iter()
        .zip(without.option_positions())
        .map(|(a, b)| a - b)
        .collect();
    let mut dz = with.index_positions();
    for (p, q) in dz.iter_mut().zip(without.index_positions()) {
        p.units -= q.units;
    }
    let dcash = with.cash() - without.cash();
    #[derive(Serialize)]
    struct HedgeSummary {
        claim: String,
        units: f64,
        /// Seller indifference price, total USD.
        seller_price: f64,
        cash_change: f64,
        /// Expected hedge error and its root mean square under the grid measure.
        mean_hedge_error: f64,
        rms_hedge_error: f64,
    }
    let grid = pricer.grid();
    let mut errors = Vec::with_capacity(grid.len());
    for i in 0..grid.len() {
        let p = grid.point(i);
        errors.push(with.program.loss_at(&with.solution.x, p)? - without.program.loss_at(&without.solution.x, p)?);
    }
    let mean: f64 = errors.iter().zip(&grid.masses).map(|(e, m)| e * m).sum();
    let rms = errors.iter().zip(&grid.masses).map(|(e, m)| e * e * m).sum::<f64>().sqrt();
    let summary = HedgeSummary {
        claim: claim.claim.label(),
        units: claim.units,
        seller_price: (with.log_value() - without.log_value()) / with.program.kappa,
        cash_change: dcash,
        mean_hedge_error: mean,
        rms_hedge_error: rms,
    };
    artifacts.json("hedge.json", &summary)?;
    let market = &pricer.setup().market;
    artifacts.write("portfolio.csv", |w| write_portfolio(w, market, &dx, dcash, false))?;
    artifacts.write("strategy.csv", |w| write_strategy(w, &dz))?;
    let mut k = 0;
    artifacts.write("surface.csv", |w| {
        write_surface(w, &with.program, "hedge_error", |_| {
            k += 1;
            Ok(errors[k - 1])
        })
    })?;
    print_json(out, &summary)?;
    Ok(Outcome::Success)
}

fn simulate(config: &RunConfig, n: usize, artifacts: &Artifacts, out: &mut dyn Write) -> Result<Outcome> {
    let (_, claim, o) = solve(config)?;
    let paths = simulate_paths(&config.model, n, config.simulation.seed)?;
    let wealth: Vec<f64> = paths
        .iter()
        .map(|p| o.terminal_wealth(p))
        .collect::<semistatic::Result<_>>()?;
    artifacts.write("simulation.csv", |w| {
        let mut csv = csv::Writer::from_writer(w);
        let mut header = vec!["path".to_string()];
        header.extend((1..=paths.iter().next().map_or(0, <[f64]>::len)).map(|t| format!("X{t}")));
        header.push("terminal_wealth".into());
        csv.write_record(&header)?;
        for (i, (p, v)) in paths.iter().zip(&wealth).enumerate() {
            let mut row = vec![i.to_string()];
            row.extend(p.iter().map(|x| x.to_string()));
            row.push(v.to_string());
            csv.write_record(&row)?;
        }
        csv.flush().map_err(csv::Error::from)?;
        Ok(())
    })?;
    #[derive(Serialize)]
    struct SimulationSummary {
        claim: String,
        paths: usize,
        seed: u64,
        mean: f64,
        std_dev: f64,
        min: f64,
        max: f64,
        /// Sample mean of the loss `exp(-kappa * terminal wealth)`.
        expected_loss: f64,
    }
    let count = wealth.len().max(1) as f64;
    let mean = wealth.iter().sum::<f64>() / count;
    let var = wealth.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (count - 1.0).max(1.0);
    let kappa = o.program.kappa;
    let summary = SimulationSummary {
        claim: claim.claim.label(),
        paths: n,
        seed: config.simulation.seed,
        mean,
        std_dev: var.sqrt(),
        min: wealth.iter().copied().fold(f64::INFINITY, f64::min),
        max: wealth.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        expected_loss: wealth.iter().map(|v| (-kappa * v).exp()).sum::<f64>() / count,
    };
    artifacts.json("simulation.json", &summary)?;
    print_json(out, &summary)?;
    Ok(Outcome::Success)
}
