//! Optimal values, utility-indifference prices, super- and subhedging costs
//! and arbitrage detection.
//!
//! All prices here are totals in USD for the whole position unless a name
//! says otherwise; [`PriceReport`] also carries per-option figures.

use std::sync::OnceLock;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::claims::{Breakpoint, Liability};
use crate::error::{Error, Result};
use crate::galerkin::{assemble, AssembledProgram, Frictions, IndexPosition, ProgramInputs, Variable};
use crate::instruments::Market;
use crate::scenario::{build_grid, market_node_sets, QuadratureGrid, VgParams, DEFAULT_TRUNCATION};
use crate::solver::{minimize, solve_lp, ConvexProgram, Objective, SolveSettings, SolveStatus, Solution};

pub const DEFAULT_INITIAL_WEALTH: f64 = 100_000.0;
pub const DEFAULT_RISK_AVERSION: f64 = 2.0;
/// Relative slack allowed in the price ordering checks.
pub const ORDERING_TOLERANCE: f64 = 1e-6;
/// Expected excess, relative to wealth, above which arbitrage is reported.
pub const ARBITRAGE_THRESHOLD: f64 = 1e-6;
/// Pointwise slack, relative to wealth, of the weak-arbitrage program.
pub const ARBITRAGE_SLACK: f64 = 1e-9;

/// Investor with loss function `exp(lambda * c / w_bar)`.
#[derive(Clone, Debug, PartialEq)]
pub struct AgentSpec {
    pub initial_wealth: f64,
    pub risk_aversion: f64,
    /// Liability held before any pricing question is asked.
    pub baseline: Vec<Liability>,
}

impl Default for AgentSpec {
    fn default() -> Self {
        AgentSpec {
            initial_wealth: DEFAULT_INITIAL_WEALTH,
            risk_aversion: DEFAULT_RISK_AVERSION,
            baseline: Vec::new(),
        }
    }
}

impl AgentSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.initial_wealth > 0.0 && self.initial_wealth.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "initial wealth must be positive, got {}",
                self.initial_wealth
            )));
        }
        if !(self.risk_aversion > 0.0 && self.risk_aversion.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "risk aversion must be positive, got {}",
                self.risk_aversion
            )));
        }
        Ok(())
    }

    /// Loss scale, fixed at the reference wealth.
    pub fn kappa(&self) -> f64 {
        self.risk_aversion / self.initial_wealth
    }
}

#[derive(Clone, Debug)]
pub struct PricingSetup {
    pub market: Market,
    pub model: VgParams,
    pub agent: AgentSpec,
    /// One box per period, or a single box shared by all periods.
    pub truncation: Vec<(f64, f64)>,
    pub frictions: Frictions,
    pub settings: SolveSettings,
    pub dynamic_trading: bool,
}

impl PricingSetup {
    pub fn new(market: Market, model: VgParams, agent: AgentSpec) -> Self {
        PricingSetup {
            market,
            model,
            agent,
            truncation: vec![DEFAULT_TRUNCATION],
            frictions: Frictions::Frictionless,
            settings: SolveSettings::default(),
            dynamic_trading: true,
        }
    }

    pub fn with_frictions(mut self, frictions: Frictions) -> Self {
        self.frictions = frictions;
        self
    }

    pub fn with_market(&self, market: Market) -> Self {
        PricingSetup {
            market,
            ..self.clone()
        }
    }
}

/// Buyer or seller side of an indifference price.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Buy,
    Sell,
}

/// Solution of the utility-maximization problem.
#[derive(Clone, Debug)]
pub struct Optimum {
    pub program: AssembledProgram,
    pub solution: Solution,
}

impl Optimum {
    /// Optimal expected loss `phi`.
    pub fn value(&self) -> f64 {
        self.solution.objective
    }

    pub fn log_value(&self) -> f64 {
        self.solution.log_objective
    }

    pub fn option_positions(&self) -> Vec<f64> {
        self.program.option_positions(&self.solution.x)
    }

    pub fn cash(&self) -> f64 {
        self.program.cash_position(&self.solution.x)
    }

    pub fn index_positions(&self) -> Vec<IndexPosition> {
        self.program.index_positions(&self.solution.x)
    }

    /// Whether any option position sits at a quantity limit.
    pub fn quantity_constraints_active(&self) -> bool {
        quantity_limits_hit(&self.program, &self.solution.x)
    }

    /// Terminal wealth along an arbitrary path.
    pub fn terminal_wealth(&self, path: &[f64]) -> Result<f64> {
        Ok(-self.program.loss_at(&self.solution.x, path)?)
    }
}

fn quantity_limits_hit(program: &AssembledProgram, x: &[f64]) -> bool {
    let near = |v: f64, bound: f64| bound.is_finite() && (v - bound).abs() <= 1e-6 * bound.abs().max(1.0);
    program.variables.iter().enumerate().any(|(j, v)| match v {
        Variable::OptionBuy { .. } | Variable::OptionSell { .. } => near(x[j], program.upper[j]),
        Variable::OptionNet { .. } => near(x[j], program.upper[j]) || near(x[j], program.lower[j]),
        _ => false,
    })
}

/// Least-cost portfolio dominating a liability on the grid.
#[derive(Clone, Debug, Serialize)]
pub struct HedgeResult {
    /// Total USD; `+inf` when no dominating portfolio exists on the grid,
    /// `-inf` when the cost is unbounded below.
    pub cost: f64,
    pub status: SolveStatus,
    pub option_positions: Vec<f64>,
    pub cash: f64,
    pub index: Vec<IndexPosition>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Arbitrage {
    /// Whether the payout exceeds the initial wealth by a positive margin in
    /// every grid scenario (as opposed to only weakly with positive mean).
    pub strong: bool,
    pub wealth: f64,
    /// Expected payout minus wealth under the grid measure.
    pub expected_excess: f64,
    /// Smallest payout minus wealth over the grid.
    pub min_excess: f64,
    pub option_positions: Vec<f64>,
    pub cash: f64,
    pub index: Vec<IndexPosition>,
}

/// Pricing engine bound to one setup and one grid.
pub struct Pricer {
    setup: PricingSetup,
    grid: QuadratureGrid,
    // optimum without claims at the reference wealth
    base: OnceLock<Optimum>,
}

fn merged_breakpoints(liabilities: &[&Liability], periods: usize) -> Vec<Vec<Breakpoint>> {
    let mut out = vec![Vec::new(); periods];
    for l in liabilities {
        for (t, bps) in l.claim.breakpoints().into_iter().enumerate().take(periods) {
            out[t].extend(bps);
        }
    }
    out
}

impl Pricer {
    /// Builds the grid over the market strikes and the breakpoints of the
    /// baseline and every claim in `claims`.
    pub fn new(setup: PricingSetup, claims: &[Liability]) -> Result<Pricer> {
        setup.agent.validate()?;
        setup.model.validate()?;
        setup.settings.validate()?;
        let periods = setup.model.periods();
        let strike_sets: Vec<Vec<f64>> = (1..=periods).map(|t| setup.market.strikes_at(t)).collect();
        let all: Vec<&Liability> = setup.agent.baseline.iter().chain(claims).collect();
        let breakpoints = merged_breakpoints(&all, periods);
        let nodes = market_node_sets(&setup.model, &strike_sets, &breakpoints, &setup.truncation)?;
        let grid = build_grid(&setup.model, &nodes, &breakpoints, &setup.truncation)?;
        Ok(Pricer { setup, grid, base: OnceLock::new() })
    }

    pub fn setup(&self) -> &PricingSetup {
        &self.setup
    }

    pub fn grid(&self) -> &QuadratureGrid {
        &self.grid
    }

    fn wealth(&self) -> f64 {
        self.setup.agent.initial_wealth
    }

    /// Program for the baseline plus `extra`, with the given budget.
    pub fn program(&self, extra: &[Liability], budget: f64) -> Result<AssembledProgram> {
        let liabilities: Vec<Liability> = self.setup.agent.baseline.iter().chain(extra).cloned().collect();
        assemble(&ProgramInputs {
            market: &self.setup.market,
            liabilities: &liabilities,
            grid: &self.grid,
            kappa: self.setup.agent.kappa(),
            budget,
            frictions: self.setup.frictions,
            dynamic_trading: self.setup.dynamic_trading,
        })
    }

    /// `phi(budget, baseline + extra)` together with the optimal decision.
    pub fn optimum(&self, extra: &[Liability], budget: f64) -> Result<Optimum> {
        let program = self.program(extra, budget)?;
        let solution = minimize(&program.to_convex_program(), &self.setup.settings)?
            .require_optimal("utility maximization")?;
        Ok(Optimum { program, solution })
    }

    /// The claim-free optimum at the reference wealth, solved once.
    pub fn baseline(&self) -> Result<&Optimum> {
        if let Some(o) = self.base.get() {
            return Ok(o);
        }
        let o = self.optimum(&[], self.wealth())?;
        Ok(self.base.get_or_init(|| o))
    }

    fn log_value(&self, extra: &[Liability], budget: f64) -> Result<f64> {
        if extra.is_empty() && budget == self.wealth() {
            return Ok(self.baseline()?.log_value());
        }
        Ok(self.optimum(extra, budget)?.log_value())
    }

    /// Seller's indifference price from the exponential-loss identity.
    pub fn indifference_sell(&self, claim: &Liability) -> Result<f64> {
        let w = self.wealth();
        let base = self.log_value(&[], w)?;
        let with = self.log_value(std::slice::from_ref(claim), w)?;
        Ok((with - base) / self.setup.agent.kappa())
    }

    /// Buyer's indifference price from the exponential-loss identity.
    pub fn indifference_buy(&self, claim: &Liability) -> Result<f64> {
        let w = self.wealth();
        let base = self.log_value(&[], w)?;
        let without = self.log_value(&[claim.negated()], w)?;
        Ok((base - without) / self.setup.agent.kappa())
    }

    /// Indifference price by bisection on the budget. Makes no use of the
    /// exponential form beyond monotonicity of `phi` in wealth.
    pub fn indifference_bisection(&self, claim: &Liability, side: Side) -> Result<f64> {
        let w = self.wealth();
        let target = self.log_value(&[], w)?;
        let (extra, sign) = match side {
            Side::Sell => (claim.clone(), 1.0),
            Side::Buy => (claim.negated(), -1.0),
        };
        let extra = [extra];
        // gap(p) is decreasing in p
        let gap = |p: f64| -> Result<f64> { Ok(sign * (self.log_value(&extra, w + sign * p)? - target)) };

        let g0 = gap(0.0)?;
        if g0 == 0.0 {
            return Ok(0.0);
        }
        let mut step = 1e-3 * w;
        let (mut lo, mut hi);
        let mut doublings = 0;
        if g0 > 0.0 {
            lo = 0.0;
            hi = step;
            while gap(hi)? > 0.0 {
                lo = hi;
                step *= 2.0;
                hi += step;
                doublings += 1;
                if doublings >= 60 {
                    return Err(Error::BracketExpansion(doublings));
                }
            }
        } else {
            hi = 0.0;
            lo = -step;
            while gap(lo)? < 0.0 {
                hi = lo;
                step *= 2.0;
                lo -= step;
                doublings += 1;
                if doublings >= 60 {
                    return Err(Error::BracketExpansion(doublings));
                }
            }
        }
        while hi - lo > 1e-8 * w {
            let mid = 0.5 * (lo + hi);
            if gap(mid)? > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    fn dominating_lp(&self, program: &AssembledProgram) -> ConvexProgram {
        // loss rows a_i(x) = offset_i + A_i x must be nonpositive
        let a = program.loss_matrix();
        let rhs: Vec<f64> = program.offsets.iter().map(|o| -o).collect();
        ConvexProgram {
            objective: Objective::Linear {
                cost: program.budget_row.clone(),
                constant: 0.0,
            },
            constraints: a,
            rhs,
            lower: program.lower.clone(),
            upper: program.upper.clone(),
        }
    }

    fn hedge_from(&self, program: &AssembledProgram, solution: &Solution) -> HedgeResult {
        let cost = match solution.status {
            SolveStatus::Optimal => solution.objective,
            SolveStatus::Infeasible => f64::INFINITY,
            SolveStatus::Unbounded => f64::NEG_INFINITY,
            SolveStatus::MaxIter => solution.objective,
        };
        let usable = solution.x.iter().all(|v| v.is_finite());
        HedgeResult {
            cost,
            status: solution.status,
            option_positions: if usable {
                program.option_positions(&solution.x)
            } else {
                Vec::new()
            },
            cash: if usable { program.cash_position(&solution.x) } else { f64::NAN },
            index: if usable { program.index_positions(&solution.x) } else { Vec::new() },
        }
    }

    /// Least cost of a portfolio whose payout covers `claim` at every grid
    /// point. The baseline liability is ignored.
    pub fn superhedge(&self, claim: &Liability) -> Result<HedgeResult> {
        let liabilities = [claim.clone()];
        let program = assemble(&ProgramInputs {
            market: &self.setup.market,
            liabilities: &liabilities,
            grid: &self.grid,
            kappa: self.setup.agent.kappa(),
            budget: self.wealth(),
            frictions: self.setup.frictions,
            dynamic_trading: self.setup.dynamic_trading,
        })?;
        let solution = solve_lp(&self.dominating_lp(&program), &self.setup.settings)?;
        Ok(self.hedge_from(&program, &solution))
    }

    /// Greatest revenue from a portfolio whose payout plus `claim` is
    /// nonnegative at every grid point.
    pub fn subhedge(&self, claim: &Liability) -> Result<HedgeResult> {
        let mut r = self.superhedge(&claim.negated())?;
        r.cost = -r.cost;
        Ok(r)
    }

    /// Looks for a portfolio costing at most `wealth` whose payout is at
    /// least `wealth` on the whole grid and exceeds it on average.
    pub fn find_arbitrage(&self, wealth: f64) -> Result<Option<Arbitrage>> {
        let program = assemble(&ProgramInputs {
            market: &self.setup.market,
            liabilities: &[],
            grid: &self.grid,
            kappa: self.setup.agent.kappa(),
            budget: wealth,
            frictions: self.setup.frictions,
            dynamic_trading: self.setup.dynamic_trading,
        })?;
        let a = program.loss_matrix();
        let (m, n) = a.shape();
        let masses: Vec<f64> = program.log_masses.iter().map(|v| v.exp()).collect();
        let settings = &self.setup.settings;

        // strong arbitrage: maximize s subject to payout_i - wealth >= s
        let mut g = DMatrix::zeros(m + 1, n + 1);
        g.view_mut((0, 0), (m, n)).copy_from(&a);
        g.view_mut((0, n), (m, 1)).fill(1.0);
        for j in 0..n {
            g[(m, j)] = program.budget_row[j];
        }
        let mut rhs = vec![-wealth; m];
        rhs.push(wealth);
        let mut cost = vec![0.0; n + 1];
        cost[n] = -1.0;
        let mut lower = program.lower.clone();
        lower.push(f64::NEG_INFINITY);
        let mut upper = program.upper.clone();
        upper.push(wealth);
        let strong = solve_lp(
            &ConvexProgram {
                objective: Objective::Linear { cost, constant: 0.0 },
                constraints: g,
                rhs,
                lower,
                upper,
            },
            settings,
        )?;
        let threshold = ARBITRAGE_THRESHOLD * wealth;
        match strong.status {
            SolveStatus::Optimal | SolveStatus::MaxIter => {}
            other => {
                return Err(Error::Solver {
                    status: other,
                    detail: "strong arbitrage program".into(),
                })
            }
        }
        if -strong.objective > threshold {
            // an interior of {payout >= wealth} exists; pick its utility optimum
            let mut convex = program.to_convex_program();
            let mut g = DMatrix::zeros(m + 1, n);
            g.view_mut((0, 0), (1, n)).copy_from(&convex.constraints);
            g.view_mut((1, 0), (m, n)).copy_from(&a);
            convex.constraints = g;
            convex.rhs.extend(std::iter::repeat_n(-wealth, m));
            let sol = minimize(&convex, settings)?;
            let x = if sol.is_optimal() { sol.x } else { strong.x[..n].to_vec() };
            return Ok(Some(self.describe_arbitrage(&program, &a, &masses, &x, wealth, true)));
        }

        // weak arbitrage: maximize expected payout subject to payout_i >= wealth - slack
        let slack = ARBITRAGE_SLACK * wealth;
        let mean_row: Vec<f64> = (0..n).map(|j| (0..m).map(|i| masses[i] * a[(i, j)]).sum()).collect();
        let mut g = DMatrix::zeros(m + 1, n);
        g.view_mut((0, 0), (m, n)).copy_from(&a);
        for j in 0..n {
            g[(m, j)] = program.budget_row[j];
        }
        let mut rhs = vec![-wealth + slack; m];
        rhs.push(wealth);
        let weak = solve_lp(
            &ConvexProgram {
                objective: Objective::Linear {
                    cost: mean_row,
                    constant: 0.0,
                },
                constraints: g,
                rhs,
                lower: program.lower.clone(),
                upper: program.upper.clone(),
            },
            settings,
        )?;
        match weak.status {
            SolveStatus::Unbounded => {
                let x: Vec<f64> = weak.x.clone();
                let mut arb = self.describe_arbitrage(&program, &a, &masses, &x, wealth, false);
                arb.expected_excess = f64::INFINITY;
                Ok(Some(arb))
            }
            SolveStatus::Optimal | SolveStatus::MaxIter => {
                let expected_excess = -weak.objective - wealth;
                if expected_excess > threshold {
                    Ok(Some(self.describe_arbitrage(&program, &a, &masses, &weak.x, wealth, false)))
                } else {
                    Ok(None)
                }
            }
            SolveStatus::Infeasible => Ok(None),
        }
    }

    fn describe_arbitrage(
        &self,
        program: &AssembledProgram,
        a: &DMatrix<f64>,
        masses: &[f64],
        x: &[f64],
        wealth: f64,
        strong: bool,
    ) -> Arbitrage {
        let xv = nalgebra::DVector::from_column_slice(x);
        let payout = -(a * xv);
        let expected: f64 = payout.iter().zip(masses).map(|(p, m)| p * m).sum();
        let min = payout.iter().copied().fold(f64::INFINITY, f64::min);
        Arbitrage {
            strong,
            wealth,
            expected_excess: expected - wealth,
            min_excess: min - wealth,
            option_positions: program.option_positions(x),
            cash: program.cash_position(x),
            index: program.index_positions(x),
        }
    }

    /// All four prices of `claim` plus diagnostics.
    pub fn price_report(&self, claim: &Liability) -> Result<PriceReport> {
        let w = self.wealth();
        let kappa = self.setup.agent.kappa();
        let base = self.baseline()?;
        let sold = self.optimum(std::slice::from_ref(claim), w)?;
        let bought = self.optimum(&[claim.negated()], w)?;
        let seller = (sold.log_value() - base.log_value()) / kappa;
        let buyer = (base.log_value() - bought.log_value()) / kappa;
        let sup = self.superhedge(claim)?;
        let sub = self.subhedge(claim)?;
        let arbitrage = self.find_arbitrage(w)?;

        let tol = ORDERING_TOLERANCE * w;
        let ordering_holds =
            sub.cost <= buyer + tol && buyer <= seller + tol && seller <= sup.cost + tol;
        let scale = claim.units * claim.claim.contract_size;
        let leg = |name: &str, s: &Solution| LegDiagnostics {
            leg: name.to_string(),
            status: s.status,
            log_objective: s.log_objective,
            outer_iterations: s.outer_iterations,
            newton_steps: s.newton_steps,
        };
        Ok(PriceReport {
            claim: claim.claim.label(),
            units: claim.units,
            contract_size: claim.claim.contract_size,
            buyer_price: buyer / scale,
            seller_price: seller / scale,
            subhedge_price: sub.cost / scale,
            superhedge_price: sup.cost / scale,
            totals: PriceTotals {
                buyer,
                seller,
                subhedge: sub.cost,
                superhedge: sup.cost,
            },
            legs: vec![
                leg("baseline", &base.solution),
                leg("sell", &sold.solution),
                leg("buy", &bought.solution),
            ],
            hedge_status: [sub.status, sup.status],
            flags: ReportFlags {
                quantity_constraints_active: base.quantity_constraints_active()
                    || sold.quantity_constraints_active()
                    || bought.quantity_constraints_active(),
                arbitrage_detected: arbitrage.is_some(),
                ordering_holds,
                truncation: self.grid.truncation.clone(),
                frictions: self.setup.frictions,
                grid_points: self.grid.len(),
            },
        })
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct PriceTotals {
    pub buyer: f64,
    pub seller: f64,
    pub subhedge: f64,
    pub superhedge: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct LegDiagnostics {
    pub leg: String,
    pub status: SolveStatus,
    pub log_objective: f64,
    pub outer_iterations: usize,
    pub newton_steps: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct ReportFlags {
    pub quantity_constraints_active: bool,
    pub arbitrage_detected: bool,
    /// `subhedge <= buyer <= seller <= superhedge` within tolerance.
    pub ordering_holds: bool,
    /// Super- and subhedging costs hold on this box only.
    pub truncation: Vec<(f64, f64)>,
    pub frictions: Frictions,
    pub grid_points: usize,
}

/// Prices per option (totals divided by units times contract size).
#[derive(Clone, Debug, Serialize)]
pub struct PriceReport {
    pub claim: String,
    pub units: f64,
    pub contract_size: f64,
    pub buyer_price: f64,
    pub seller_price: f64,
    pub subhedge_price: f64,
    pub superhedge_price: f64,
    pub totals: PriceTotals,
    pub legs: Vec<LegDiagnostics>,
    /// Status of the subhedging and superhedging programs.
    pub hedge_status: [SolveStatus; 2],
    pub flags: ReportFlags,
}

/// `phi(budget, baseline + claim)`.
pub fn optimal_value(setup: &PricingSetup, claim: Option<&Liability>, budget: f64) -> Result<f64> {
    let claims: Vec<Liability> = claim.into_iter().cloned().collect();
    Ok(Pricer::new(setup.clone(), &claims)?.optimum(&claims, budget)?.value())
}

pub fn indifference_sell(setup: &PricingSetup, claim: &Liability) -> Result<f64> {
    Pricer::new(setup.clone(), std::slice::from_ref(claim))?.indifference_sell(claim)
}

pub fn indifference_buy(setup: &PricingSetup, claim: &Liability) -> Result<f64> {
    Pricer::new(setup.clone(), std::slice::from_ref(claim))?.indifference_buy(claim)
}

pub fn indifference_bisection(setup: &PricingSetup, claim: &Liability, side: Side) -> Result<f64> {
    Pricer::new(setup.clone(), std::slice::from_ref(claim))?.indifference_bisection(claim, side)
}

pub fn superhedge_cost(setup: &PricingSetup, claim: &Liability) -> Result<HedgeResult> {
    Pricer::new(setup.clone(), std::slice::from_ref(claim))?.superhedge(claim)
}

pub fn subhedge_cost(setup: &PricingSetup, claim: &Liability) -> Result<HedgeResult> {
    Pricer::new(setup.clone(), std::slice::from_ref(claim))?.subhedge(claim)
}

pub fn find_arbitrage(setup: &PricingSetup, wealth: f64) -> Result<Option<Arbitrage>> {
    Pricer::new(setup.clone(), &[])?.find_arbitrage(wealth)
}

pub fn price_report(setup: &PricingSetup, claim: &Liability) -> Result<PriceReport> {
    Pricer::new(setup.clone(), std::slice::from_ref(claim))?.price_report(claim)
}

