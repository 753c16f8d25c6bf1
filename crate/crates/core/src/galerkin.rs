//! Discretization of the semi-static hedging problem.
//!
//! Dynamic index positions are restricted to functions of the current index
//! level that are constant between consecutive quoted strikes. Together with
//! the option positions and cash this gives a finite decision vector, and
//! the loss at every grid point is an affine function of it.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::claims::Liability;
use crate::error::{Error, Result};
use crate::instruments::Market;
use crate::scenario::QuadratureGrid;
use crate::solver::{ConvexProgram, ExpSum, Objective};

/// Friction regime for trading the index.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Frictions {
    #[default]
    Frictionless,
    /// Proportional cost in percent of the traded notional.
    TransactionCost { delta_pct: f64 },
}

impl Frictions {
    pub fn delta_pct(&self) -> f64 {
        match self {
            Frictions::Frictionless => 0.0,
            Frictions::TransactionCost { delta_pct } => *delta_pct,
        }
    }
}

/// Indicator of the cell `[lower, upper)` of the strikes of period `period`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BasisElement {
    pub period: usize,
    pub cell: usize,
    pub lower: f64,
    pub upper: f64,
}

pub fn basis_value(b: &BasisElement, t: usize, x: f64) -> f64 {
    if t == b.period && x >= b.lower && x < b.upper {
        1.0
    } else {
        0.0
    }
}

/// Per-period strike lists for the rebalance dates `1..T`. Period `s` has
/// `N_s + 1` cells `[K_n, K_{n+1})` with `K_0 = 0` and `K_{N+1} = inf`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Basis {
    strikes: Vec<Vec<f64>>,
}

impl Basis {
    pub fn new(mut strikes: Vec<Vec<f64>>) -> Self {
        for s in &mut strikes {
            s.sort_by(f64::total_cmp);
            s.dedup();
        }
        Basis { strikes }
    }

    /// Strikes quoted at each rebalance date of a `periods`-period problem.
    pub fn from_market(market: &Market, periods: usize) -> Self {
        Basis::new((1..periods).map(|s| market.strikes_at(s)).collect())
    }

    pub fn rebalance_periods(&self) -> usize {
        self.strikes.len()
    }

    pub fn strikes(&self, period: usize) -> &[f64] {
        &self.strikes[period - 1]
    }

    pub fn cells(&self, period: usize) -> usize {
        self.strikes[period - 1].len() + 1
    }

    /// Index of the cell containing `x`; cells are closed on the left.
    pub fn cell(&self, period: usize, x: f64) -> usize {
        self.strikes[period - 1].partition_point(|&k| k <= x)
    }

    pub fn cell_bounds(&self, period: usize, cell: usize) -> (f64, f64) {
        let k = &self.strikes[period - 1];
        let lower = if cell == 0 { 0.0 } else { k[cell - 1] };
        let upper = if cell == k.len() { f64::INFINITY } else { k[cell] };
        (lower, upper)
    }

    pub fn elements(&self) -> Vec<BasisElement> {
        let mut out = Vec::new();
        for s in 1..=self.rebalance_periods() {
            for n in 0..self.cells(s) {
                let (lower, upper) = self.cell_bounds(s, n);
                out.push(BasisElement {
                    period: s,
                    cell: n,
                    lower,
                    upper,
                });
            }
        }
        out
    }

    /// Number of basis elements, `sum_s (N_s + 1)`.
    pub fn dimension(&self) -> usize {
        (1..=self.rebalance_periods()).map(|s| self.cells(s)).sum()
    }
}

/// Index position `sum_n coeffs[n] * 1{x in cell n}` at period `s`.
pub fn strategy_position(basis: &Basis, coeffs: &[f64], s: usize, x: f64) -> f64 {
    coeffs[basis.cell(s, x)]
}

/// One coordinate of the decision vector. Option quantities are in options,
/// index quantities in index units, cash in USD.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Variable {
    /// Options bought at the ask.
    OptionBuy { quote: usize },
    /// Options sold at the bid.
    OptionSell { quote: usize },
    /// Net position in a quote whose bid equals its ask.
    OptionNet { quote: usize },
    Cash,
    /// Index units held from `period` to `period + 1` while the index sits
    /// in `cell` at `period`.
    Index { period: usize, cell: usize },
    /// Index units bought at `period` in `cell` and held to the horizon.
    IndexBuy { period: usize, cell: usize },
    /// Index units sold at `period` in `cell` and bought back at the horizon.
    IndexSell { period: usize, cell: usize },
    /// Net trade at `period` in `cell` when trading is costless.
    IndexNet { period: usize, cell: usize },
}

impl Variable {
    pub fn is_option(&self) -> bool {
        matches!(
            self,
            Variable::OptionBuy { .. } | Variable::OptionSell { .. } | Variable::OptionNet { .. }
        )
    }

    pub fn is_index(&self) -> bool {
        matches!(
            self,
            Variable::Index { .. }
                | Variable::IndexBuy { .. }
                | Variable::IndexSell { .. }
                | Variable::IndexNet { .. }
        )
    }
}

/// Everything needed to assemble a hedging program.
#[derive(Clone, Debug)]
pub struct ProgramInputs<'a> {
    pub market: &'a Market,
    /// Complete liability, baseline included.
    pub liabilities: &'a [Liability],
    pub grid: &'a QuadratureGrid,
    /// Loss scale `lambda / w_bar`.
    pub kappa: f64,
    pub budget: f64,
    pub frictions: Frictions,
    /// Whether the index may be traded at all.
    pub dynamic_trading: bool,
}

/// The discretized hedging problem.
///
/// The loss at path `X` is `offset(X) + sum_j coefficient(j, X) * x_j`,
/// where the offset is the liability payout and the coefficients are minus
/// the payoffs of the hedging positions.
#[derive(Clone, Debug)]
pub struct AssembledProgram {
    pub variables: Vec<Variable>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub budget_row: Vec<f64>,
    pub budget: f64,
    pub kappa: f64,
    pub frictions: Frictions,
    pub basis: Basis,
    pub liabilities: Vec<Liability>,
    pub offsets: Vec<f64>,
    pub log_masses: Vec<f64>,
    market: Market,
    spot: f64,
    periods: usize,
    points: Vec<f64>,
}

#[derive(Clone, Debug, Serialize)]
struct ProgramDump<'a> {
    variables: &'a [Variable],
    lower: &'a [Option<f64>],
    upper: &'a [Option<f64>],
    budget_row: &'a [f64],
    budget: f64,
    kappa: f64,
    grid_points: usize,
    constraints: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    rows: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    offsets: Option<&'a [f64]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    masses: Option<Vec<f64>>,
}

pub fn assemble(inputs: &ProgramInputs) -> Result<AssembledProgram> {
    let ProgramInputs {
        market,
        liabilities,
        grid,
        kappa,
        budget,
        frictions,
        dynamic_trading,
    } = *inputs;
    if !(kappa > 0.0 && kappa.is_finite()) {
        return Err(Error::InvalidInput(format!("loss scale must be positive, got {kappa}")));
    }
    if !budget.is_finite() {
        return Err(Error::InvalidInput(format!("budget must be finite, got {budget}")));
    }
    let delta = frictions.delta_pct();
    if delta < 0.0 || delta.is_nan() {
        return Err(Error::NegativeTransactionCost(delta));
    }
    let periods = grid.periods();
    if market.horizon() > periods {
        return Err(Error::InvalidInput(format!(
            "quotes mature at period {} but the grid has {periods} periods",
            market.horizon()
        )));
    }
    let basis = Basis::from_market(market, periods);
    if dynamic_trading {
        for s in 1..periods {
            for &k in basis.strikes(s) {
                if !grid.contains_node(s, k) {
                    return Err(Error::StrikeMismatch { period: s, strike: k });
                }
            }
        }
    }

    let mut variables = Vec::new();
    let mut lower = Vec::new();
    let mut upper = Vec::new();
    let mut budget_row = Vec::new();
    let mut push = |v: Variable, l: f64, u: f64, b: f64| {
        variables.push(v);
        lower.push(l);
        upper.push(u);
        budget_row.push(b);
    };
    for (j, q) in market.quotes.iter().enumerate() {
        let bounds = market.position_box(j);
        if q.bid_price == q.ask_price {
            push(Variable::OptionNet { quote: j }, bounds.lower, bounds.upper, q.ask_price);
        } else {
            push(Variable::OptionBuy { quote: j }, 0.0, bounds.upper, q.ask_price);
            push(Variable::OptionSell { quote: j }, 0.0, -bounds.lower, -q.bid_price);
        }
    }
    push(Variable::Cash, f64::NEG_INFINITY, f64::INFINITY, 1.0);
    if dynamic_trading {
        for t in 0..periods {
            let cells = if t == 0 { 1 } else { basis.cells(t) };
            for cell in 0..cells {
                match frictions {
                    Frictions::Frictionless => {
                        push(Variable::Index { period: t, cell }, f64::NEG_INFINITY, f64::INFINITY, 0.0)
                    }
                    Frictions::TransactionCost { delta_pct } if delta_pct == 0.0 => {
                        push(Variable::IndexNet { period: t, cell }, f64::NEG_INFINITY, f64::INFINITY, 0.0)
                    }
                    Frictions::TransactionCost { .. } => {
                        push(Variable::IndexBuy { period: t, cell }, 0.0, f64::INFINITY, 0.0);
                        push(Variable::IndexSell { period: t, cell }, 0.0, f64::INFINITY, 0.0);
                    }
                }
            }
        }
    }

    let mut offsets = Vec::with_capacity(grid.len());
    for path in grid.points() {
        let mut total = 0.0;
        for l in liabilities {
            total += l.amount(path)?;
        }
        offsets.push(total);
    }

    Ok(AssembledProgram {
        variables,
        lower,
        upper,
        budget_row,
        budget,
        kappa,
        frictions,
        basis,
        liabilities: liabilities.to_vec(),
        offsets,
        log_masses: grid.log_masses.clone(),
        market: market.clone(),
        spot: grid.spot,
        periods,
        points: grid.points().flatten().copied().collect(),
    })
}

/// Frictionless program with the market's strikes as Galerkin basis.
pub fn assemble_frictionless(
    market: &Market,
    liabilities: &[Liability],
    kappa: f64,
    budget: f64,
    grid: &QuadratureGrid,
) -> Result<AssembledProgram> {
    assemble(&ProgramInputs {
        market,
        liabilities,
        grid,
        kappa,
        budget,
        frictions: Frictions::Frictionless,
        dynamic_trading: true,
    })
}

/// Program with a proportional cost of `delta_pct` percent on index trades.
pub fn assemble_transaction_cost(
    market: &Market,
    liabilities: &[Liability],
    kappa: f64,
    budget: f64,
    grid: &QuadratureGrid,
    delta_pct: f64,
) -> Result<AssembledProgram> {
    if delta_pct < 0.0 || delta_pct.is_nan() {
        return Err(Error::NegativeTransactionCost(delta_pct));
    }
    assemble(&ProgramInputs {
        market,
        liabilities,
        grid,
        kappa,
        budget,
        frictions: Frictions::TransactionCost { delta_pct },
        dynamic_trading: true,
    })
}

impl AssembledProgram {
    pub fn num_variables(&self) -> usize {
        self.variables.len()
    }

    pub fn num_grid_points(&self) -> usize {
        self.offsets.len()
    }

    pub fn periods(&self) -> usize {
        self.periods
    }

    pub fn market(&self) -> &Market {
        &self.market
    }

    /// Budget row plus every finite side of every variable box.
    pub fn num_constraints(&self) -> usize {
        1 + self.lower.iter().filter(|v| v.is_finite()).count()
            + self.upper.iter().filter(|v| v.is_finite()).count()
    }

    pub fn grid_point(&self, i: usize) -> &[f64] {
        &self.points[i * self.periods..(i + 1) * self.periods]
    }

    fn level(&self, path: &[f64], t: usize) -> f64 {
        if t == 0 {
            self.spot
        } else {
            path[t - 1]
        }
    }

    fn in_cell(&self, path: &[f64], t: usize, cell: usize) -> bool {
        t == 0 || self.basis.cell(t, path[t - 1]) == cell
    }

    /// Loss coefficient of variable `j` along `path`, which need not be a
    /// grid point.
    pub fn coefficient(&self, j: usize, path: &[f64]) -> f64 {
        let horizon = path[self.periods - 1];
        match self.variables[j] {
            Variable::OptionBuy { quote } | Variable::OptionNet { quote } => {
                let q = &self.market.quotes[quote];
                -q.payoff_at(path[q.maturity - 1])
            }
            Variable::OptionSell { quote } => {
                let q = &self.market.quotes[quote];
                q.payoff_at(path[q.maturity - 1])
            }
            Variable::Cash => -1.0,
            Variable::Index { period, cell } => {
                if self.in_cell(path, period, cell) {
                    -(path[period] - self.level(path, period))
                } else {
                    0.0
                }
            }
            Variable::IndexBuy { period, cell } => {
                if self.in_cell(path, period, cell) {
                    let d = self.frictions.delta_pct() / 100.0;
                    (1.0 + d) * self.level(path, period) - horizon
                } else {
                    0.0
                }
            }
            Variable::IndexSell { period, cell } => {
                if self.in_cell(path, period, cell) {
                    let d = self.frictions.delta_pct() / 100.0;
                    horizon - (1.0 - d) * self.level(path, period)
                } else {
                    0.0
                }
            }
            Variable::IndexNet { period, cell } => {
                if self.in_cell(path, period, cell) {
                    self.level(path, period) - horizon
                } else {
                    0.0
                }
            }
        }
    }

    pub fn loss_row(&self, path: &[f64]) -> Vec<f64> {
        (0..self.num_variables()).map(|j| self.coefficient(j, path)).collect()
    }

    /// Loss of decision `x` along an arbitrary path.
    pub fn loss_at(&self, x: &[f64], path: &[f64]) -> Result<f64> {
        if path.len() != self.periods {
            return Err(Error::PathLength {
                expected: self.periods,
                got: path.len(),
            });
        }
        let mut loss = 0.0;
        for l in &self.liabilities {
            loss += l.amount(path)?;
        }
        for (j, xj) in x.iter().enumerate() {
            loss += self.coefficient(j, path) * xj;
        }
        Ok(loss)
    }

    /// Dense grid-point by variable matrix of loss coefficients.
    pub fn loss_matrix(&self) -> DMatrix<f64> {
        let m = self.num_grid_points();
        let n = self.num_variables();
        let mut a = DMatrix::zeros(m, n);
        for j in 0..n {
            for i in 0..m {
                a[(i, j)] = self.coefficient(j, self.grid_point(i));
            }
        }
        a
    }

    /// Expected exponential loss subject to the budget row.
    pub fn to_convex_program(&self) -> ConvexProgram {
        let n = self.num_variables();
        ConvexProgram {
            objective: Objective::ExpSum(ExpSum {
                rows: self.loss_matrix(),
                offsets: self.offsets.clone(),
                log_masses: self.log_masses.clone(),
                kappa: self.kappa,
            }),
            constraints: DMatrix::from_row_slice(1, n, &self.budget_row),
            rhs: vec![self.budget],
            lower: self.lower.clone(),
            upper: self.upper.clone(),
        }
    }

    pub fn with_budget(&self, budget: f64) -> AssembledProgram {
        AssembledProgram {
            budget,
            ..self.clone()
        }
    }

    /// Net option positions, one per quote.
    pub fn option_positions(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.market.quotes.len()];
        for (v, xj) in self.variables.iter().zip(x) {
            match *v {
                Variable::OptionBuy { quote } | Variable::OptionNet { quote } => out[quote] += xj,
                Variable::OptionSell { quote } => out[quote] -= xj,
                _ => {}
            }
        }
        out
    }

    pub fn cash_position(&self, x: &[f64]) -> f64 {
        self.variables
            .iter()
            .zip(x)
            .filter(|(v, _)| **v == Variable::Cash)
            .map(|(_, xj)| *xj)
            .sum()
    }

    /// Net index quantity per (period, cell): holdings in the frictionless
    /// layout, trades (buys minus sells) otherwise.
    pub fn index_positions(&self, x: &[f64]) -> Vec<IndexPosition> {
        let mut out: Vec<IndexPosition> = Vec::new();
        for (v, xj) in self.variables.iter().zip(x) {
            let (period, cell, sign) = match *v {
                Variable::Index { period, cell }
                | Variable::IndexBuy { period, cell }
                | Variable::IndexNet { period, cell } => (period, cell, 1.0),
                Variable::IndexSell { period, cell } => (period, cell, -1.0),
                _ => continue,
            };
            match out.iter_mut().find(|p| p.period == period && p.cell == cell) {
                Some(p) => p.units += sign * xj,
                None => {
                    let (lower, upper) = if period == 0 {
                        (0.0, f64::INFINITY)
                    } else {
                        self.basis.cell_bounds(period, cell)
                    };
                    out.push(IndexPosition {
                        period,
                        cell,
                        lower,
                        upper,
                        units: sign * xj,
                    });
                }
            }
        }
        out
    }

    /// Budget consumed by `x`.
    pub fn cost(&self, x: &[f64]) -> f64 {
        self.budget_row.iter().zip(x).map(|(b, xj)| b * xj).sum()
    }

    /// Diagnostic JSON of the variable layout and, optionally, every row.
    pub fn dump_json(&self, include_rows: bool) -> String {
        let finite = |v: &Vec<f64>| v.iter().map(|x| x.is_finite().then_some(*x)).collect::<Vec<_>>();
        let lower = finite(&self.lower);
        let upper = finite(&self.upper);
        let dump = ProgramDump {
            variables: &self.variables,
            lower: &lower,
            upper: &upper,
            budget_row: &self.budget_row,
            budget: self.budget,
            kappa: self.kappa,
            grid_points: self.num_grid_points(),
            constraints: self.num_constraints(),
            rows: include_rows.then(|| (0..self.num_grid_points()).map(|i| self.loss_row(self.grid_point(i))).collect()),
            offsets: include_rows.then_some(self.offsets.as_slice()),
            masses: include_rows.then(|| self.log_masses.iter().map(|v| v.exp()).collect()),
        };
        serde_json::to_string_pretty(&dump).expect("program dump serializes")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct IndexPosition {
    pub period: usize,
    pub cell: usize,
    pub lower: f64,
    pub upper: f64,
    pub units: f64,
}
