//! Log-barrier interior-point solver for programs of the form
//!
//! ```text
//! minimize    f(x)
//! subject to  G x <= h,  lower <= x <= upper
//! ```
//!
//! where `f` is either linear or an exponential sum `sum_i m_i exp(kappa a_i(x))`
//! with affine `a_i`. Bounds may be infinite.

mod barrier;
mod objective;

use std::io::Write;
use std::time::Duration;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use barrier::{minimize, solve_lp};
pub use objective::{log_objective_and_gradient, objective_and_gradient};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveSettings {
    /// Relative duality-gap target: the solve stops once the barrier gap
    /// bound falls below `tolerance * max(1, |objective|)`, where an
    /// exponential-sum objective is measured on the log scale.
    pub tolerance: f64,
    /// Factor applied to `1/t` after each centering.
    pub barrier_reduction: f64,
    pub max_outer: usize,
    pub max_newton: usize,
    pub backtrack_ratio: f64,
    pub sufficient_decrease: f64,
    /// Iterates beyond this sup-norm are taken as evidence of unboundedness.
    pub unbounded_threshold: f64,
    /// Record one trace row per Newton step.
    pub trace: bool,
}

impl Default for SolveSettings {
    fn default() -> Self {
        SolveSettings {
            tolerance: 1e-11,
            barrier_reduction: 0.2,
            max_outer: 60,
            max_newton: 50,
            backtrack_ratio: 0.5,
            sufficient_decrease: 1e-4,
            unbounded_threshold: 1e13,
            trace: false,
        }
    }
}

impl SolveSettings {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| v > 0.0 && v < 1.0;
        if !(unit(self.tolerance)
            && unit(self.barrier_reduction)
            && unit(self.backtrack_ratio)
            && unit(self.sufficient_decrease)
            && self.max_outer > 0
            && self.max_newton > 0
            && self.unbounded_threshold > 0.0)
        {
            return Err(Error::InvalidInput(format!("invalid solver settings: {self:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    MaxIter,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TraceRecord {
    pub iteration: usize,
    pub objective: f64,
    pub step: f64,
    pub barrier_weight: f64,
}

pub fn write_trace_csv<W: Write>(trace: &[TraceRecord], mut out: W) -> std::io::Result<()> {
    writeln!(out, "iteration,objective,step,barrier_weight")?;
    for r in trace {
        writeln!(out, "{},{:e},{:e},{:e}", r.iteration, r.objective, r.step, r.barrier_weight)?;
    }
    Ok(())
}

#[derive(Clone, Debug, Serialize)]
pub struct Solution {
    pub x: Vec<f64>,
    /// `sum_i m_i exp(kappa a_i)` or `c'x + constant`.
    pub objective: f64,
    /// Natural log of an exponential-sum objective; equal to `objective`
    /// for linear programs.
    pub log_objective: f64,
    /// Multipliers of the rows of `G x <= h`, in objective units.
    pub duals: Vec<f64>,
    /// Lagrangian lower bound for linear programs.
    pub dual_bound: Option<f64>,
    pub status: SolveStatus,
    pub outer_iterations: usize,
    pub newton_steps: usize,
    #[serde(skip)]
    pub trace: Vec<TraceRecord>,
    #[serde(skip)]
    pub wall_time: Duration,
}

impl Solution {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }

    /// Turns a non-optimal status into an error.
    pub fn require_optimal(self, context: &str) -> Result<Solution> {
        if self.is_optimal() {
            Ok(self)
        } else {
            Err(Error::Solver {
                status: self.status,
                detail: context.to_string(),
            })
        }
    }
}

/// `sum_i exp(log_masses_i + kappa (rows x + offsets)_i)`.
#[derive(Clone, Debug)]
pub struct ExpSum {
    pub rows: DMatrix<f64>,
    pub offsets: Vec<f64>,
    pub log_masses: Vec<f64>,
    pub kappa: f64,
}

#[derive(Clone, Debug)]
pub enum Objective {
    ExpSum(ExpSum),
    Linear { cost: Vec<f64>, constant: f64 },
}

#[derive(Clone, Debug)]
pub struct ConvexProgram {
    pub objective: Objective,
    pub constraints: DMatrix<f64>,
    pub rhs: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl ConvexProgram {
    pub fn num_variables(&self) -> usize {
        self.lower.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.num_variables();
        let bad = |msg: String| Err(Error::InvalidInput(msg));
        if self.upper.len() != n {
            return bad("bound vectors differ in length".into());
        }
        if self.constraints.ncols() != n || self.constraints.nrows() != self.rhs.len() {
            return bad(format!(
                "constraint matrix is {}x{}, expected {}x{n}",
                self.constraints.nrows(),
                self.constraints.ncols(),
                self.rhs.len()
            ));
        }
        match &self.objective {
            Objective::ExpSum(e) => {
                let m = e.rows.nrows();
                if e.rows.ncols() != n || e.offsets.len() != m || e.log_masses.len() != m {
                    return bad("exponential-sum dimensions are inconsistent".into());
                }
                if !(e.kappa > 0.0 && e.kappa.is_finite()) {
                    return bad(format!("kappa must be positive, got {}", e.kappa));
                }
                if e.rows.iter().chain(&e.offsets).any(|v| !v.is_finite())
                    || e.log_masses.iter().any(|v| v.is_nan() || *v == f64::INFINITY)
                {
                    return bad("exponential-sum data must be finite".into());
                }
            }
            Objective::Linear { cost, constant } => {
                if cost.len() != n {
                    return bad("cost vector has the wrong length".into());
                }
                if cost.iter().any(|v| !v.is_finite()) || !constant.is_finite() {
                    return bad("cost must be finite".into());
                }
            }
        }
        if self.constraints.iter().chain(&self.rhs).any(|v| !v.is_finite()) {
            return bad("constraint data must be finite".into());
        }
        for j in 0..n {
            let (l, u) = (self.lower[j], self.upper[j]);
            if l.is_nan() || u.is_nan() || l > u || l == f64::INFINITY || u == f64::NEG_INFINITY {
                return bad(format!("variable {j} has bounds [{l}, {u}]"));
            }
        }
        Ok(())
    }
}
