use std::io::Write;

use rayon::prelude::*;

use super::{vg_log_increment_log_density, VgParams};
use crate::claims::{Breakpoint, BreakpointKind};
use crate::error::{Error, Result};

pub const DEFAULT_TRUNCATION: (f64, f64) = (1000.0, 3000.0);

/// Relative offset of the two nodes placed on either side of a jump.
pub const JUMP_BRACKET: f64 = 1e-9;

/// Strike-grid quadrature for expectations over index paths.
///
/// Points are the Cartesian product of per-period node lists, enumerated with
/// the last period varying fastest.
#[derive(Clone, Debug)]
pub struct QuadratureGrid {
    pub spot: f64,
    pub nodes: Vec<Vec<f64>>,
    pub cell_widths: Vec<Vec<f64>>,
    pub truncation: Vec<(f64, f64)>,
    points: Vec<f64>,
    node_index: Vec<u32>,
    pub weights: Vec<f64>,
    pub log_density: Vec<f64>,
    pub masses: Vec<f64>,
    pub log_masses: Vec<f64>,
    /// Sum of `weight * density` before normalization.
    pub raw_mass: f64,
}

impl QuadratureGrid {
    pub fn periods(&self) -> usize {
        self.nodes.len()
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        let t = self.periods();
        &self.points[i * t..(i + 1) * t]
    }

    /// Positions of the coordinates of point `i` in the per-period node lists.
    pub fn node_indices(&self, i: usize) -> &[u32] {
        let t = self.periods();
        &self.node_index[i * t..(i + 1) * t]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.points.chunks(self.periods())
    }

    pub fn contains_node(&self, period: usize, level: f64) -> bool {
        self.nodes[period - 1].iter().any(|&x| x == level)
    }

    /// Writes one row per grid point: coordinates, weight, density, mass.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let header: Vec<String> = (1..=self.periods()).map(|t| format!("x{t}")).collect();
        writeln!(out, "{},weight,density,mass", header.join(","))?;
        for i in 0..self.len() {
            for x in self.point(i) {
                write!(out, "{x},")?;
            }
            writeln!(
                out,
                "{},{:e},{:e}",
                self.weights[i],
                self.log_density[i].exp(),
                self.masses[i]
            )?;
        }
        Ok(())
    }
}

fn period_nodes(levels: &[f64], breakpoints: &[Breakpoint], lo: f64, hi: f64) -> Vec<f64> {
    let mut nodes: Vec<f64> = levels.to_vec();
    for b in breakpoints {
        match b.kind {
            BreakpointKind::Kink => nodes.push(b.level),
            BreakpointKind::Jump => {
                nodes.push(b.level * (1.0 - JUMP_BRACKET));
                nodes.push(b.level * (1.0 + JUMP_BRACKET));
            }
        }
    }
    nodes.retain(|&x| x > lo && x < hi);
    nodes.sort_by(f64::total_cmp);
    nodes.dedup();
    nodes
}

fn midpoint_cells(nodes: &[f64], lo: f64, hi: f64) -> Vec<f64> {
    let n = nodes.len();
    (0..n)
        .map(|k| {
            let left = if k == 0 { lo } else { 0.5 * (nodes[k - 1] + nodes[k]) };
            let right = if k + 1 == n { hi } else { 0.5 * (nodes[k] + nodes[k + 1]) };
            right - left
        })
        .collect()
}

fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

fn broadcast_truncation(truncation: &[(f64, f64)], periods: usize) -> Result<Vec<(f64, f64)>> {
    let boxes = match truncation.len() {
        1 => vec![truncation[0]; periods],
        n if n == periods => truncation.to_vec(),
        n => {
            return Err(Error::Grid(format!(
                "expected 1 or {periods} truncation intervals, got {n}"
            )))
        }
    };
    for &(lo, hi) in &boxes {
        if !(lo >= 0.0 && hi > lo && hi.is_finite()) {
            return Err(Error::Grid(format!("degenerate truncation [{lo}, {hi}]")));
        }
    }
    Ok(boxes)
}

/// Builds the quadrature grid over the given per-period levels.
///
/// `breakpoints` may be shorter than `strike_sets`; missing periods have no
/// breakpoints. `truncation` holds one box per period or a single shared one.
pub fn build_grid(
    params: &VgParams,
    strike_sets: &[Vec<f64>],
    breakpoints: &[Vec<Breakpoint>],
    truncation: &[(f64, f64)],
) -> Result<QuadratureGrid> {
    params.validate()?;
    let periods = strike_sets.len();
    if periods == 0 {
        return Err(Error::Grid("no periods".into()));
    }
    if periods > params.periods() {
        return Err(Error::Grid(format!(
            "{periods} periods requested but the model has {} horizons",
            params.periods()
        )));
    }
    if breakpoints.len() > periods {
        return Err(Error::Grid("breakpoints given for more periods than strike sets".into()));
    }
    let boxes = broadcast_truncation(truncation, periods)?;

    let mut nodes = Vec::with_capacity(periods);
    let mut widths = Vec::with_capacity(periods);
    for t in 0..periods {
        let (lo, hi) = boxes[t];
        let bps = breakpoints.get(t).map(Vec::as_slice).unwrap_or(&[]);
        let n = period_nodes(&strike_sets[t], bps, lo, hi);
        if n.is_empty() {
            return Err(Error::Grid(format!("period {} has no nodes inside [{lo}, {hi}]", t + 1)));
        }
        widths.push(midpoint_cells(&n, lo, hi));
        nodes.push(n);
    }

    // transition[t][p * n_t + k]: log density of moving from previous node p
    // (the spot for t = 0) to node k of period t + 1
    let mut transitions = Vec::with_capacity(periods);
    for t in 0..periods {
        let dt = params.period_length(t + 1);
        let from: Vec<f64> = if t == 0 { vec![params.spot] } else { nodes[t - 1].clone() };
        let to = &nodes[t];
        let table: Result<Vec<Vec<f64>>> = from
            .par_iter()
            .map(|&p| {
                to.iter()
                    .map(|&x| Ok(vg_log_increment_log_density(params, dt, (x / p).ln())? - x.ln()))
                    .collect()
            })
            .collect();
        transitions.push(table?.concat());
    }

    let sizes: Vec<usize> = nodes.iter().map(Vec::len).collect();
    let count = sizes.iter().try_fold(1usize, |acc, &n| acc.checked_mul(n));
    let count = count.ok_or_else(|| Error::Grid("grid too large".into()))?;

    let mut node_index = vec![0u32; count * periods];
    node_index
        .par_chunks_mut(periods)
        .enumerate()
        .for_each(|(i, idx)| {
            let mut rest = i;
            for t in (0..periods).rev() {
                idx[t] = (rest % sizes[t]) as u32;
                rest /= sizes[t];
            }
        });

    let mut points = vec![0.0; count * periods];
    let mut weights = vec![0.0; count];
    let mut log_density = vec![0.0; count];
    points
        .par_chunks_mut(periods)
        .zip(weights.par_iter_mut())
        .zip(log_density.par_iter_mut())
        .zip(node_index.par_chunks(periods))
        .for_each(|(((pt, w), ld), idx)| {
            let mut weight = 1.0;
            let mut logd = 0.0;
            let mut prev = 0usize;
            for t in 0..periods {
                let k = idx[t] as usize;
                pt[t] = nodes[t][k];
                weight *= widths[t][k];
                logd += transitions[t][prev * sizes[t] + k];
                prev = k;
            }
            *w = weight;
            *ld = logd;
        });

    let log_raw: Vec<f64> = weights
        .iter()
        .zip(&log_density)
        .map(|(w, ld)| w.ln() + ld)
        .collect();
    let log_total = log_sum_exp(&log_raw);
    if !log_total.is_finite() {
        return Err(Error::Grid("grid carries no probability mass".into()));
    }
    let log_masses: Vec<f64> = log_raw.iter().map(|v| v - log_total).collect();
    let masses: Vec<f64> = log_masses.iter().map(|v| v.exp()).collect();

    Ok(QuadratureGrid {
        spot: params.spot,
        nodes,
        cell_widths: widths,
        truncation: boxes,
        points,
        node_index,
        weights,
        log_density,
        masses,
        log_masses,
        raw_mass: log_total.exp(),
    })
}

/// Standard deviations of the log-level covered by regularly spaced nodes.
pub const COVERAGE_SDS: f64 = 4.0;

/// Per-period node levels for hedging problems.
///
/// Each period gets its strikes, extra nodes continuing the strike spacing
/// until the model's bulk of mass (`COVERAGE_SDS` standard deviations of the
/// log-level) is covered, and two tail nodes placed between the outermost
/// node of all periods and the truncation bounds, moving further out with
/// each period.
///
/// Without the extension the edge cells would be wide exactly where the
/// density is not negligible. Without the tail nodes the last node of a
/// period has no grid successor above (or below) it, so index trading from
/// that node would have a one-sided payoff and the hedging problem would be
/// unbounded.
pub fn market_node_sets(
    params: &VgParams,
    strike_sets: &[Vec<f64>],
    breakpoints: &[Vec<Breakpoint>],
    truncation: &[(f64, f64)],
) -> Result<Vec<Vec<f64>>> {
    let periods = strike_sets.len();
    if periods > params.periods() {
        return Err(Error::Grid(format!(
            "{periods} periods requested but the model has {} horizons",
            params.periods()
        )));
    }
    let boxes = broadcast_truncation(truncation, periods)?;
    let spacing = typical_spacing(strike_sets);
    let spot = params.spot;

    let mut sets: Vec<Vec<f64>> = Vec::with_capacity(periods);
    for (t, strikes) in strike_sets.iter().enumerate() {
        let (lo, hi) = boxes[t];
        let (mean, var) = params.log_increment_moments(params.horizons[t]);
        let band = COVERAGE_SDS * var.sqrt();
        let band_lo = (spot.ln() + mean - band).exp().max(lo);
        let band_hi = (spot.ln() + mean + band).exp().min(hi);
        let mut levels = strikes.clone();
        if let Some(h) = spacing {
            let first = strikes.iter().copied().fold(spot, f64::min);
            let last = strikes.iter().copied().fold(spot, f64::max);
            let mut x = last + h;
            while x < band_hi {
                levels.push(x);
                x += h;
            }
            let mut x = first - h;
            while x > band_lo {
                levels.push(x);
                x -= h;
            }
        }
        sets.push(levels);
    }

    let mut low = spot;
    let mut high = spot;
    let bps = breakpoints.iter().flatten().map(|b| b.level);
    for x in sets.iter().flatten().copied().chain(bps) {
        low = low.min(x);
        high = high.max(x);
    }
    let steps = (periods + 1) as f64;
    for (t, levels) in sets.iter_mut().enumerate() {
        let (lo, hi) = boxes[t];
        let frac = (t + 1) as f64 / steps;
        if low > lo {
            levels.push(low - (low - lo) * frac);
        }
        if high < hi {
            levels.push(high + (hi - high) * frac);
        }
        levels.sort_by(f64::total_cmp);
        levels.dedup();
    }
    Ok(sets)
}

/// Median gap between consecutive strikes over all periods.
fn typical_spacing(strike_sets: &[Vec<f64>]) -> Option<f64> {
    let mut gaps: Vec<f64> = strike_sets
        .iter()
        .flat_map(|s| s.windows(2).map(|w| w[1] - w[0]))
        .filter(|g| *g > 0.0)
        .collect();
    if gaps.is_empty() {
        return None;
    }
    gaps.sort_by(f64::total_cmp);
    Some(gaps[gaps.len() / 2])
}
