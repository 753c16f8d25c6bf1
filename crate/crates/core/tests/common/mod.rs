//! Independent reference computations shared by the integration tests and
//! the acceptance target. Nothing here calls into the solver.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use semistatic::galerkin::{AssembledProgram, Frictions, Variable};
use semistatic::instruments::OptionKind;
use semistatic::solver::{ConvexProgram, ExpSum, Objective};

const GOLDEN: f64 = 0.618_033_988_749_894_9;

/// Golden-section minimum of a unimodal `f` on `[a, b]`.
pub fn golden_section(f: &mut dyn FnMut(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let mut c = b - GOLDEN * (b - a);
    let mut d = a + GOLDEN * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while b - a > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - GOLDEN * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + GOLDEN * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    (x, f(x))
}

/// Small exponential-sum instance with boxes and at most one row
/// `c'x <= b` with `c >= 0`.
#[derive(Clone, Debug)]
pub struct ExpInstance {
    pub rows: Vec<Vec<f64>>,
    pub offsets: Vec<f64>,
    pub masses: Vec<f64>,
    pub kappa: f64,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub budget: Option<(Vec<f64>, f64)>,
}

impl ExpInstance {
    pub fn n(&self) -> usize {
        self.lower.len()
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.rows
            .iter()
            .zip(&self.offsets)
            .zip(&self.masses)
            .map(|((r, o), m)| {
                let a: f64 = o + r.iter().zip(x).map(|(ri, xi)| ri * xi).sum::<f64>();
                m * (self.kappa * a).exp()
            })
            .sum()
    }

    pub fn random(rng: &mut impl Rng, n: usize, points: usize, with_budget: bool) -> ExpInstance {
        assert!(points >= 2 * n);
        let mut rows = Vec::new();
        // one row pointing each way along every axis keeps the sum coercive
        for j in 0..n {
            for sign in [1.0, -1.0] {
                let mut r: Vec<f64> = (0..n).map(|_| rng.random_range(-0.3..0.3)).collect();
                r[j] = sign * rng.random_range(0.5..1.5);
                rows.push(r);
            }
        }
        while rows.len() < points {
            rows.push((0..n).map(|_| rng.random_range(-1.0..1.0)).collect());
        }
        let offsets = (0..points).map(|_| rng.random_range(-1.0..1.0)).collect();
        let raw: Vec<f64> = (0..points).map(|_| rng.random_range(0.05..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let masses = raw.iter().map(|m| m / total).collect();
        let lower = (0..n).map(|_| rng.random_range(-3.0..-0.5)).collect();
        let upper = (0..n).map(|_| rng.random_range(0.5..3.0)).collect();
        let budget = with_budget.then(|| {
            let c: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
            (c, rng.random_range(0.2..1.5))
        });
        ExpInstance {
            rows,
            offsets,
            masses,
            kappa: rng.random_range(0.5..2.0),
            lower,
            upper,
            budget,
        }
    }

    pub fn program(&self) -> ConvexProgram {
        let n = self.n();
        let m = self.rows.len();
        let (constraints, rhs) = match &self.budget {
            Some((c, b)) => (DMatrix::from_row_slice(1, n, c), vec![*b]),
            None => (DMatrix::zeros(0, n), Vec::new()),
        };
        ConvexProgram {
            objective: Objective::ExpSum(ExpSum {
                rows: DMatrix::from_fn(m, n, |i, j| self.rows[i][j]),
                offsets: self.offsets.clone(),
                log_masses: self.masses.iter().map(|v| v.ln()).collect(),
                kappa: self.kappa,
            }),
            constraints,
            rhs,
            lower: self.lower.clone(),
            upper: self.upper.clone(),
        }
    }

    /// Feasible interval of coordinate `k` given the leading coordinates,
    /// with the trailing ones free inside their boxes.
    fn interval(&self, prefix: &[f64]) -> (f64, f64) {
        let k = prefix.len();
        let (lo, mut hi) = (self.lower[k], self.upper[k]);
        if let Some((c, b)) = &self.budget {
            let used: f64 = prefix.iter().zip(c).map(|(x, ci)| x * ci).sum();
            let rest: f64 = (k + 1..self.n()).map(|j| c[j] * self.lower[j]).sum();
            if c[k] > 0.0 {
                hi = hi.min((b - used - rest) / c[k]);
            }
        }
        (lo, hi)
    }

    fn nested(&self, prefix: &mut Vec<f64>, tol: f64) -> f64 {
        let (lo, hi) = self.interval(prefix);
        if hi <= lo {
            prefix.push(lo);
            let v = if prefix.len() == self.n() {
                self.value(prefix)
            } else {
                self.nested(prefix, tol)
            };
            prefix.pop();
            return v;
        }
        let mut f = |t: f64| {
            prefix.push(t);
            let v = if prefix.len() == self.n() {
                self.value(prefix)
            } else {
                self.nested(prefix, tol)
            };
            prefix.pop();
            v
        };
        golden_section(&mut f, lo, hi, tol).1
    }

    /// Minimizer by nested golden-section search over the feasible set.
    pub fn golden_oracle(&self, tol: f64) -> (Vec<f64>, f64) {
        let mut x = Vec::new();
        while x.len() < self.n() {
            let (lo, hi) = self.interval(&x);
            let mut prefix = x.clone();
            let mut f = |t: f64| {
                prefix.push(t);
                let v = if prefix.len() == self.n() {
                    self.value(&prefix)
                } else {
                    self.nested(&mut prefix, tol)
                };
                prefix.pop();
                v
            };
            let t = if hi > lo { golden_section(&mut f, lo, hi, tol).0 } else { lo };
            x.push(t);
        }
        let v = self.value(&x);
        (x, v)
    }

    /// Smallest value over a uniform grid of the feasible set.
    pub fn grid_oracle(&self, steps: usize) -> (Vec<f64>, f64) {
        let n = self.n();
        let mut best = (Vec::new(), f64::INFINITY);
        let total = (steps + 1).pow(n as u32);
        for idx in 0..total {
            let mut rem = idx;
            let x: Vec<f64> = (0..n)
                .map(|j| {
                    let k = rem % (steps + 1);
                    rem /= steps + 1;
                    self.lower[j] + (self.upper[j] - self.lower[j]) * k as f64 / steps as f64
                })
                .collect();
            if let Some((c, b)) = &self.budget {
                if x.iter().zip(c).map(|(a, b)| a * b).sum::<f64>() > *b {
                    continue;
                }
            }
            let v = self.value(&x);
            if v < best.1 {
                best = (x, v);
            }
        }
        best
    }
}

/// Random bounded LP `min c'x, Gx <= h, l <= x <= u` with `x = 0` strictly
/// feasible.
#[derive(Clone, Debug)]
pub struct LpInstance {
    pub cost: Vec<f64>,
    pub g: Vec<Vec<f64>>,
    pub h: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

pub struct Vertex {
    pub x: Vec<f64>,
    pub value: f64,
    /// No other vertex attains the optimal value.
    pub unique: bool,
}

impl LpInstance {
    pub fn random(rng: &mut impl Rng, n: usize, rows: usize) -> LpInstance {
        LpInstance {
            cost: (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
            g: (0..rows).map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).collect(),
            h: (0..rows).map(|_| rng.random_range(0.5..2.0)).collect(),
            lower: (0..n).map(|_| rng.random_range(-5.0..-1.0)).collect(),
            upper: (0..n).map(|_| rng.random_range(1.0..5.0)).collect(),
        }
    }

    pub fn program(&self) -> ConvexProgram {
        let n = self.cost.len();
        ConvexProgram {
            objective: Objective::Linear {
                cost: self.cost.clone(),
                constant: 0.0,
            },
            constraints: DMatrix::from_fn(self.g.len(), n, |i, j| self.g[i][j]),
            rhs: self.h.clone(),
            lower: self.lower.clone(),
            upper: self.upper.clone(),
        }
    }

    /// Best basic feasible solution over every choice of `n` active rows.
    pub fn vertex_oracle(&self) -> Vertex {
        let n = self.cost.len();
        let mut rows: Vec<(Vec<f64>, f64)> = self.g.iter().cloned().zip(self.h.iter().copied()).collect();
        for j in 0..n {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            rows.push((e.clone(), self.upper[j]));
            e[j] = -1.0;
            rows.push((e, -self.lower[j]));
        }
        let mut vertices: Vec<(Vec<f64>, f64)> = Vec::new();
        for subset in combinations(rows.len(), n) {
            let a = DMatrix::from_fn(n, n, |i, j| rows[subset[i]].0[j]);
            let b = DVector::from_iterator(n, subset.iter().map(|&i| rows[i].1));
            let Some(x) = a.lu().solve(&b) else { continue };
            let feasible = rows
                .iter()
                .all(|(r, h)| r.iter().zip(x.iter()).map(|(a, b)| a * b).sum::<f64>() <= h + 1e-9);
            if feasible {
                let v = self.cost.iter().zip(x.iter()).map(|(c, x)| c * x).sum();
                vertices.push((x.as_slice().to_vec(), v));
            }
        }
        let best = vertices
            .iter()
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("bounded LP has a vertex")
            .clone();
        let unique = vertices.iter().all(|(x, v)| {
            *v > best.1 + 1e-9 || x.iter().zip(&best.0).all(|(a, b)| (a - b).abs() < 1e-9)
        });
        Vertex {
            x: best.0,
            value: best.1,
            unique,
        }
    }
}

pub fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::new(), &mut out);
    out
}

pub fn vanilla(kind: OptionKind, strike: f64, level: f64) -> f64 {
    match kind {
        OptionKind::Call => (level - strike).max(0.0),
        OptionKind::Put => (strike - level).max(0.0),
    }
}

/// Loss `claims - terminal wealth` along `path`, computed from positions
/// rather than from the assembled rows.
pub fn direct_loss(program: &AssembledProgram, x: &[f64], path: &[f64], spot: f64, claims: f64) -> f64 {
    let market = program.market();
    let periods = path.len();
    let mut net = vec![0.0; market.quotes.len()];
    let mut cash = 0.0;
    // per (period, cell): net holding or (buys, sells)
    let mut hold = std::collections::HashMap::new();
    let mut buys = std::collections::HashMap::new();
    let mut sells = std::collections::HashMap::new();
    for (v, xj) in program.variables.iter().zip(x) {
        match *v {
            Variable::OptionBuy { quote } | Variable::OptionNet { quote } => net[quote] += xj,
            Variable::OptionSell { quote } => net[quote] -= xj,
            Variable::Cash => cash += xj,
            Variable::Index { period, cell } | Variable::IndexNet { period, cell } => {
                hold.insert((period, cell), *xj);
            }
            Variable::IndexBuy { period, cell } => {
                buys.insert((period, cell), *xj);
            }
            Variable::IndexSell { period, cell } => {
                sells.insert((period, cell), *xj);
            }
        }
    }
    let mut wealth = cash;
    for (q, n) in market.quotes.iter().zip(&net) {
        wealth += n * vanilla(q.kind, q.strike, path[q.maturity - 1]);
    }
    let level = |t: usize| if t == 0 { spot } else { path[t - 1] };
    let cell = |t: usize| if t == 0 { 0 } else { program.basis.cell(t, path[t - 1]) };
    match program.frictions {
        Frictions::Frictionless => {
            for t in 0..periods {
                let z = hold.get(&(t, cell(t))).copied().unwrap_or(0.0);
                wealth += z * (level(t + 1) - level(t));
            }
        }
        Frictions::TransactionCost { delta_pct } => {
            let d = delta_pct / 100.0;
            let mut z = 0.0;
            for t in 0..periods {
                let key = (t, cell(t));
                if let Some(net) = hold.get(&key) {
                    // costless split collapsed to one variable
                    wealth -= net * level(t);
                    z += net;
                } else {
                    let b = buys.get(&key).copied().unwrap_or(0.0);
                    let s = sells.get(&key).copied().unwrap_or(0.0);
                    wealth -= (1.0 + d) * level(t) * b - (1.0 - d) * level(t) * s;
                    z += b - s;
                }
            }
            wealth += z * level(periods);
        }
    }
    claims - wealth
}
