use std::time::Instant;

use nalgebra::{Cholesky, DMatrix, DVector};

use super::objective::log_sum_exp;
use super::{ConvexProgram, Objective, SolveSettings, SolveStatus, Solution, TraceRecord};
use crate::error::{Error, Result};

// fraction of the distance to the boundary a step may cover
const BOUNDARY_FRACTION: f64 = 0.99;
// Newton decrement targets: intermediate barrier stages only need to stay
// near the central path, the last one is centered tightly
const LOOSE_CENTERING: f64 = 1e-3;
const CENTERING_TOL: f64 = 1e-10;
const PHASE1_TOL: f64 = 1e-7;

enum Obj {
    // log-sum-exp of kappa * rows x + base
    Exp {
        rows: DMatrix<f64>,
        base: DVector<f64>,
        kappa: f64,
    },
    Lin {
        cost: DVector<f64>,
        constant: f64,
    },
}

/// Program over the free variables only, with dead rows removed.
struct Reduced {
    obj: Obj,
    g: DMatrix<f64>,
    h: DVector<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

struct Evaluated {
    f: f64,
    grad: DVector<f64>,
    // log softmax weights of an exponential sum
    log_weights: Option<DVector<f64>>,
}

struct Outcome {
    x: DVector<f64>,
    t: f64,
    status: SolveStatus,
    outer: usize,
    newton: usize,
}

impl Reduced {
    fn n(&self) -> usize {
        self.lower.len()
    }

    fn barrier_terms(&self) -> usize {
        self.g.nrows()
            + self.lower.iter().filter(|v| v.is_finite()).count()
            + self.upper.iter().filter(|v| v.is_finite()).count()
    }

    fn evaluate(&self, x: &DVector<f64>) -> Evaluated {
        match &self.obj {
            Obj::Exp { rows, base, kappa } => {
                let z = rows * x * *kappa + base;
                let lse = log_sum_exp(z.as_slice());
                let lw = z.add_scalar(-lse);
                let p = lw.map(f64::exp);
                Evaluated {
                    f: lse,
                    grad: rows.tr_mul(&p) * *kappa,
                    log_weights: Some(lw),
                }
            }
            Obj::Lin { cost, .. } => Evaluated {
                f: cost.dot(x),
                grad: cost.clone(),
                log_weights: None,
            },
        }
    }

    fn objective_hessian(&self, ev: &Evaluated) -> DMatrix<f64> {
        match &self.obj {
            Obj::Exp { rows, kappa, .. } => {
                let lw = ev.log_weights.as_ref().expect("exp objective has weights");
                // rows this far below the heaviest one vanish in double precision
                let top = lw.max();
                let kept: Vec<usize> = (0..lw.len()).filter(|&i| lw[i] > top - NEGLIGIBLE_LOG_WEIGHT).collect();
                let mut scaled = rows.select_rows(&kept);
                for (k, mut row) in scaled.row_iter_mut().enumerate() {
                    row *= (0.5 * lw[kept[k]]).exp() * *kappa;
                }
                let mut hess = gram(&scaled);
                hess.ger(-1.0, &ev.grad, &ev.grad, 1.0);
                hess
            }
            Obj::Lin { .. } => DMatrix::zeros(self.n(), self.n()),
        }
    }

    /// Change of the objective along `dir` for a step `alpha`, computed
    /// without cancellation.
    fn objective_change(&self, ev: &Evaluated, slope: &DVector<f64>, alpha: f64) -> f64 {
        match &self.obj {
            Obj::Exp { .. } => {
                let lw = ev.log_weights.as_ref().expect("exp objective has weights");
                let shifted: Vec<f64> = lw.iter().zip(slope.iter()).map(|(w, s)| w + alpha * s).collect();
                log_sum_exp(&shifted)
            }
            Obj::Lin { .. } => alpha * slope[0],
        }
    }

    fn objective_slope(&self, dir: &DVector<f64>) -> DVector<f64> {
        match &self.obj {
            Obj::Exp { rows, kappa, .. } => rows * dir * *kappa,
            Obj::Lin { cost, .. } => DVector::from_element(1, cost.dot(dir)),
        }
    }

    fn row_slacks(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.h - &self.g * x
    }

    fn strictly_feasible(&self, x: &DVector<f64>) -> bool {
        let rows_ok = self.row_slacks(x).iter().all(|&s| s > 0.0);
        let box_ok = (0..self.n()).all(|j| x[j] > self.lower[j] && x[j] < self.upper[j]);
        rows_ok && box_ok
    }

    fn gap_scale(&self, f: f64) -> f64 {
        match &self.obj {
            Obj::Exp { .. } => f.abs().max(1.0),
            Obj::Lin { constant, .. } => (f + constant).abs().max(1.0),
        }
    }
}

fn interior_start(lower: f64, upper: f64) -> f64 {
    match (lower.is_finite(), upper.is_finite()) {
        (true, true) => lower + (0.5 * (upper - lower)).min(1.0),
        (true, false) => lower + 1.0,
        (false, true) => upper - 1.0,
        (false, false) => 0.0,
    }
}

const GRAM_BLOCK: usize = 32;
const NEGLIGIBLE_LOG_WEIGHT: f64 = 40.0;

/// `a^T a`, forming only the upper block triangle.
fn gram(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.ncols();
    if n <= GRAM_BLOCK {
        return a.transpose() * a;
    }
    let at = a.transpose();
    let mut out = DMatrix::zeros(n, n);
    for c0 in (0..n).step_by(GRAM_BLOCK) {
        let w0 = GRAM_BLOCK.min(n - c0);
        let block = at.rows(c0, w0) * a.columns(c0, n - c0);
        out.view_mut((c0, c0), (w0, n - c0)).copy_from(&block);
    }
    out.fill_lower_triangle_with_upper_triangle();
    out
}

/// Solves `H d = -g` for symmetric positive semidefinite `H` with Jacobi
/// scaling and escalating diagonal regularization.
fn newton_direction(mut hess: DMatrix<f64>, grad: &DVector<f64>) -> Option<DVector<f64>> {
    let n = grad.len();
    let scale: DVector<f64> = DVector::from_iterator(
        n,
        (0..n).map(|j| {
            let d = hess[(j, j)];
            if d > 0.0 && d.is_finite() {
                1.0 / d.sqrt()
            } else {
                1.0
            }
        }),
    );
    for j in 0..n {
        for i in 0..n {
            hess[(i, j)] *= scale[i] * scale[j];
        }
    }
    let rhs = -grad.component_mul(&scale);
    let mut reg = 0.0;
    loop {
        let mut m = hess.clone();
        for j in 0..n {
            m[(j, j)] += reg;
        }
        if let Some(chol) = Cholesky::new(m) {
            let y = chol.solve(&rhs);
            if y.iter().all(|v| v.is_finite()) {
                return Some(y.component_mul(&scale));
            }
        }
        reg = if reg == 0.0 { 1e-14 } else { reg * 100.0 };
        if reg > 1.0 {
            return None;
        }
    }
}

struct Engine<'a> {
    p: &'a Reduced,
    settings: &'a SolveSettings,
    trace: Vec<TraceRecord>,
    newton_total: usize,
    // stop as soon as coordinate .0 falls to .1 or below
    stop_below: Option<(usize, f64)>,
}

enum Centering {
    Centered,
    Unbounded,
    Stopped,
}

impl Engine<'_> {
    fn center(&mut self, x: &mut DVector<f64>, t: f64, tol: f64) -> Centering {
        let p = self.p;
        let n = p.n();
        for _ in 0..self.settings.max_newton {
            let ev = p.evaluate(x);
            let slack = p.row_slacks(x);
            let inv: DVector<f64> = slack.map(|s| 1.0 / s);
            let mut grad = &ev.grad * t + p.g.tr_mul(&inv);
            let mut hess = p.objective_hessian(&ev) * t;
            if p.g.nrows() > 0 {
                let mut scaled = p.g.clone();
                for (i, mut row) in scaled.row_iter_mut().enumerate() {
                    row *= inv[i];
                }
                hess += gram(&scaled);
            }
            for j in 0..n {
                if p.lower[j].is_finite() {
                    let d = 1.0 / (x[j] - p.lower[j]);
                    grad[j] -= d;
                    hess[(j, j)] += d * d;
                }
                if p.upper[j].is_finite() {
                    let d = 1.0 / (p.upper[j] - x[j]);
                    grad[j] += d;
                    hess[(j, j)] += d * d;
                }
            }
            let Some(dir) = newton_direction(hess, &grad) else {
                return Centering::Centered;
            };
            let decrement = -grad.dot(&dir);
            if !(decrement > 2.0 * tol) {
                return Centering::Centered;
            }

            // slack rates along dir for every barrier term
            let row_rate = -(&p.g * &dir);
            let mut alpha_max: f64 = 1.0;
            let mut limit = |s: f64, ds: f64| {
                if ds < 0.0 {
                    alpha_max = alpha_max.min(-BOUNDARY_FRACTION * s / ds);
                }
            };
            for (s, ds) in slack.iter().zip(row_rate.iter()) {
                limit(*s, *ds);
            }
            for j in 0..n {
                if p.lower[j].is_finite() {
                    limit(x[j] - p.lower[j], dir[j]);
                }
                if p.upper[j].is_finite() {
                    limit(p.upper[j] - x[j], -dir[j]);
                }
            }

            let slope = p.objective_slope(&dir);
            let barrier_change = |alpha: f64| -> f64 {
                let mut total = 0.0;
                for (s, ds) in slack.iter().zip(row_rate.iter()) {
                    total -= (alpha * ds / s).ln_1p();
                }
                for j in 0..n {
                    if p.lower[j].is_finite() {
                        total -= (alpha * dir[j] / (x[j] - p.lower[j])).ln_1p();
                    }
                    if p.upper[j].is_finite() {
                        total -= (-alpha * dir[j] / (p.upper[j] - x[j])).ln_1p();
                    }
                }
                total
            };
            let mut alpha = alpha_max;
            let mut accepted = false;
            while alpha > 1e-12 {
                let change = t * p.objective_change(&ev, &slope, alpha) + barrier_change(alpha);
                if change <= -self.settings.sufficient_decrease * alpha * decrement {
                    accepted = true;
                    break;
                }
                alpha *= self.settings.backtrack_ratio;
            }
            if !accepted {
                // no measurable progress left at this barrier weight
                return Centering::Centered;
            }
            x.axpy(alpha, &dir, 1.0);
            self.newton_total += 1;
            if self.settings.trace {
                self.trace.push(TraceRecord {
                    iteration: self.newton_total,
                    objective: p.evaluate(x).f,
                    step: alpha,
                    barrier_weight: t,
                });
            }
            if let Some((j, target)) = self.stop_below {
                if x[j] <= target {
                    return Centering::Stopped;
                }
            }
            if x.amax() > self.settings.unbounded_threshold {
                return Centering::Unbounded;
            }
        }
        Centering::Centered
    }

    fn run(&mut self, mut x: DVector<f64>) -> Outcome {
        let p = self.p;
        let m = p.barrier_terms() as f64;
        if m == 0.0 {
            let status = match &p.obj {
                Obj::Lin { cost, .. } if cost.amax() > 0.0 => SolveStatus::Unbounded,
                Obj::Lin { .. } => SolveStatus::Optimal,
                Obj::Exp { .. } => match self.center(&mut x, 1.0, CENTERING_TOL) {
                    Centering::Unbounded => SolveStatus::Unbounded,
                    _ => SolveStatus::Optimal,
                },
            };
            return Outcome {
                x,
                t: f64::INFINITY,
                status,
                outer: 1,
                newton: self.newton_total,
            };
        }

        let mut t = self.initial_weight(&x);
        for outer in 1..=self.settings.max_outer {
            let mut centered = self.center(&mut x, t, LOOSE_CENTERING);
            let last = m / t <= self.settings.tolerance * p.gap_scale(p.evaluate(&x).f);
            if last && matches!(centered, Centering::Centered) {
                centered = self.center(&mut x, t, CENTERING_TOL);
            }
            let status = match centered {
                Centering::Unbounded => SolveStatus::Unbounded,
                Centering::Stopped => SolveStatus::Optimal,
                Centering::Centered => SolveStatus::MaxIter,
            };
            if status != SolveStatus::MaxIter {
                return Outcome {
                    x,
                    t,
                    status,
                    outer,
                    newton: self.newton_total,
                };
            }
            let f = p.evaluate(&x).f;
            if m / t <= self.settings.tolerance * p.gap_scale(f) {
                return Outcome {
                    x,
                    t,
                    status: SolveStatus::Optimal,
                    outer,
                    newton: self.newton_total,
                };
            }
            t /= self.settings.barrier_reduction;
        }
        Outcome {
            x,
            t,
            status: SolveStatus::MaxIter,
            outer: self.settings.max_outer,
            newton: self.newton_total,
        }
    }

    /// Barrier weight balancing the objective and barrier gradients.
    fn initial_weight(&self, x: &DVector<f64>) -> f64 {
        let p = self.p;
        let ev = p.evaluate(x);
        let inv = p.row_slacks(x).map(|s| 1.0 / s);
        let mut gb = p.g.tr_mul(&inv);
        for j in 0..p.n() {
            if p.lower[j].is_finite() {
                gb[j] -= 1.0 / (x[j] - p.lower[j]);
            }
            if p.upper[j].is_finite() {
                gb[j] += 1.0 / (p.upper[j] - x[j]);
            }
        }
        // the initial gap bound m/t should not exceed the objective's scale,
        // or free variables drift far out along the first central point
        let floor = p.barrier_terms() as f64 / (p.gap_scale(ev.f) + 1.0);
        let gf = ev.grad.norm();
        let balance = if gf > 0.0 { gb.norm() / gf } else { 1.0 };
        balance.max(floor).clamp(1e-10, 1e10)
    }
}

struct Reduction {
    problem: Reduced,
    free: Vec<usize>,
    fixed_values: Vec<f64>,
    kept_rows: Vec<usize>,
}

fn reduce(program: &ConvexProgram) -> std::result::Result<Reduction, SolveStatus> {
    let n = program.num_variables();
    let g = &program.constraints;
    let column_is_null = |j: usize| -> bool {
        let obj_zero = match &program.objective {
            Objective::ExpSum(e) => e.rows.column(j).iter().all(|&v| v == 0.0),
            Objective::Linear { cost, .. } => cost[j] == 0.0,
        };
        obj_zero && g.column(j).iter().all(|&v| v == 0.0)
    };
    let mut fixed_values = vec![0.0; n];
    let mut free = Vec::new();
    for j in 0..n {
        let (l, u) = (program.lower[j], program.upper[j]);
        if l == u {
            fixed_values[j] = l;
        } else if column_is_null(j) {
            fixed_values[j] = if l.is_finite() {
                l
            } else if u.is_finite() {
                u
            } else {
                0.0
            };
        } else {
            free.push(j);
        }
    }
    let fixed: Vec<usize> = (0..n).filter(|j| !free.contains(j)).collect();
    let fixed_vec = DVector::from_vec(fixed_values.clone());
    let select = |m: &DMatrix<f64>| m.select_columns(free.iter());

    let mut h = DVector::from_column_slice(&program.rhs);
    for &j in &fixed {
        if fixed_values[j] != 0.0 {
            h.axpy(-fixed_values[j], &g.column(j).into_owned(), 1.0);
        }
    }
    let gf = select(g);
    let mut kept_rows = Vec::new();
    let scale = 1.0 + program.rhs.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    for i in 0..gf.nrows() {
        if gf.row(i).iter().any(|&v| v != 0.0) {
            kept_rows.push(i);
        } else if h[i] < -1e-12 * scale {
            return Err(SolveStatus::Infeasible);
        }
    }
    let g_red = gf.select_rows(kept_rows.iter());
    let h_red = DVector::from_iterator(kept_rows.len(), kept_rows.iter().map(|&i| h[i]));

    let obj = match &program.objective {
        Objective::ExpSum(e) => {
            let shift = &e.rows * &fixed_vec;
            let base = DVector::from_iterator(
                e.offsets.len(),
                (0..e.offsets.len()).map(|i| e.log_masses[i] + e.kappa * (e.offsets[i] + shift[i])),
            );
            Obj::Exp {
                rows: select(&e.rows),
                base,
                kappa: e.kappa,
            }
        }
        Objective::Linear { cost, constant } => {
            let fixed_cost: f64 = fixed.iter().map(|&j| cost[j] * fixed_values[j]).sum();
            Obj::Lin {
                cost: DVector::from_iterator(free.len(), free.iter().map(|&j| cost[j])),
                constant: constant + fixed_cost,
            }
        }
    };
    Ok(Reduction {
        problem: Reduced {
            obj,
            g: g_red,
            h: h_red,
            lower: free.iter().map(|&j| program.lower[j]).collect(),
            upper: free.iter().map(|&j| program.upper[j]).collect(),
        },
        free,
        fixed_values,
        kept_rows,
    })
}

/// Finds a strictly feasible point by minimizing the largest row violation.
fn phase_one(
    p: &Reduced,
    x0: &DVector<f64>,
    settings: &SolveSettings,
) -> std::result::Result<(DVector<f64>, usize), SolveStatus> {
    let n = p.n();
    let k = p.g.nrows();
    let hmax = p.h.amax();
    let floor = -(1.0 + hmax);
    let mut g = DMatrix::zeros(k, n + 1);
    g.view_mut((0, 0), (k, n)).copy_from(&p.g);
    g.column_mut(n).fill(-1.0);
    let mut cost = DVector::zeros(n + 1);
    cost[n] = 1.0;
    // keep zero-cost directions that loosen every row from running away
    let radius = 1e3 * (1.0 + hmax + x0.amax());
    let mut lower: Vec<f64> = (0..n)
        .map(|j| if p.lower[j].is_finite() { p.lower[j] } else { x0[j] - radius })
        .collect();
    lower.push(floor);
    let mut upper: Vec<f64> = (0..n)
        .map(|j| if p.upper[j].is_finite() { p.upper[j] } else { x0[j] + radius })
        .collect();
    upper.push(f64::INFINITY);
    let aux = Reduced {
        obj: Obj::Lin { cost, constant: 0.0 },
        g,
        h: p.h.clone(),
        lower,
        upper,
    };
    let violation = (&p.g * x0 - &p.h).max();
    let mut start = x0.clone().insert_row(n, 0.0);
    start[n] = (violation + 1.0).max(floor + 1.0);
    let aux_settings = SolveSettings {
        tolerance: PHASE1_TOL,
        trace: false,
        ..settings.clone()
    };
    let mut engine = Engine {
        p: &aux,
        settings: &aux_settings,
        trace: Vec::new(),
        newton_total: 0,
        stop_below: Some((n, 0.5 * floor)),
    };
    let out = engine.run(start);
    let s = out.x[n];
    if s > -1e-9 * (1.0 + hmax) {
        return Err(SolveStatus::Infeasible);
    }
    let x = out.x.rows(0, n).into_owned();
    if !p.strictly_feasible(&x) {
        return Err(SolveStatus::Infeasible);
    }
    Ok((x, out.newton))
}

/// Minimizes a convex program with the log-barrier method.
///
/// Errors are reserved for malformed input; solver outcomes such as
/// infeasibility are reported through [`Solution::status`].
pub fn minimize(program: &ConvexProgram, settings: &SolveSettings) -> Result<Solution> {
    program.validate()?;
    settings.validate()?;
    let started = Instant::now();
    let n = program.num_variables();
    let k = program.rhs.len();

    let failed = |status: SolveStatus, newton: usize| Solution {
        x: vec![f64::NAN; n],
        objective: f64::NAN,
        log_objective: f64::NAN,
        duals: vec![f64::NAN; k],
        dual_bound: None,
        status,
        outer_iterations: 0,
        newton_steps: newton,
        trace: Vec::new(),
        wall_time: started.elapsed(),
    };

    let red = match reduce(program) {
        Ok(r) => r,
        Err(status) => return Ok(failed(status, 0)),
    };
    let p = &red.problem;
    let mut x0 = DVector::from_iterator(p.n(), (0..p.n()).map(|j| interior_start(p.lower[j], p.upper[j])));
    let mut phase_one_steps = 0;
    let needs_phase_one = p
        .row_slacks(&x0)
        .iter()
        .zip(p.h.iter())
        .any(|(s, h)| *s <= 1e-6 * (1.0 + h.abs()));
    if needs_phase_one {
        match phase_one(p, &x0, settings) {
            Ok((x, steps)) => {
                x0 = x;
                phase_one_steps = steps;
            }
            Err(status) => return Ok(failed(status, 0)),
        }
    }

    let mut engine = Engine {
        p,
        settings,
        trace: Vec::new(),
        newton_total: phase_one_steps,
        stop_below: None,
    };
    let out = engine.run(x0);

    let mut x = red.fixed_values.clone();
    for (pos, &j) in red.free.iter().enumerate() {
        x[j] = out.x[pos];
    }
    let ev = p.evaluate(&out.x);
    let m = p.barrier_terms() as f64;
    let slack = p.row_slacks(&out.x);
    let mut duals = vec![0.0; k];
    let (objective, log_objective, unit) = match &p.obj {
        Obj::Exp { .. } => (ev.f.exp(), ev.f, ev.f.exp()),
        Obj::Lin { constant, .. } => (ev.f + constant, ev.f + constant, 1.0),
    };
    if out.t.is_finite() {
        for (pos, &i) in red.kept_rows.iter().enumerate() {
            duals[i] = unit / (out.t * slack[pos]);
        }
    }
    let dual_bound = match &p.obj {
        Obj::Lin { .. } if out.status == SolveStatus::Optimal => {
            Some(if out.t.is_finite() { objective - m / out.t } else { objective })
        }
        _ => None,
    };
    Ok(Solution {
        x,
        objective,
        log_objective,
        duals,
        dual_bound,
        status: out.status,
        outer_iterations: out.outer,
        newton_steps: out.newton,
        trace: engine.trace,
        wall_time: started.elapsed(),
    })
}

/// [`minimize`] restricted to linear objectives.
pub fn solve_lp(program: &ConvexProgram, settings: &SolveSettings) -> Result<Solution> {
    match program.objective {
        Objective::Linear { .. } => minimize(program, settings),
        Objective::ExpSum(_) => Err(Error::InvalidInput("solve_lp needs a linear objective".into())),
    }
}
