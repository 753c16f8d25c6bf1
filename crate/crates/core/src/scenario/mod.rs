//! Variance-gamma model of the index, the strike-grid quadrature used to
//! approximate expectations, and Monte Carlo path simulation.

mod density;
mod grid;
mod simulate;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use density::{path_density, path_log_density, vg_log_increment_density, vg_log_increment_log_density};
pub use grid::{build_grid, market_node_sets, QuadratureGrid, COVERAGE_SDS, DEFAULT_TRUNCATION, JUMP_BRACKET};
pub use simulate::{simulate_paths, SimulatedPaths};

/// Base-case variance-gamma view of the index.
pub const BASE_THETA: f64 = 0.0;
pub const BASE_SIGMA: f64 = 0.1206;
pub const BASE_NU: f64 = 0.0031;
pub const BASE_SPOT: f64 = 2360.0;

/// Parameters of `log X_t = log X_0 + theta * G_t + sigma * W(G_t)` where
/// `G` is a gamma subordinator with unit mean rate and variance rate `nu`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VgParams {
    pub theta: f64,
    pub sigma: f64,
    pub nu: f64,
    pub spot: f64,
    /// Year fractions of the periods `1..=T`, strictly increasing.
    pub horizons: Vec<f64>,
}

impl Default for VgParams {
    fn default() -> Self {
        VgParams {
            theta: BASE_THETA,
            sigma: BASE_SIGMA,
            nu: BASE_NU,
            spot: BASE_SPOT,
            // 21 Mar 2017 to 21 Apr 2017 and to 19 May 2017, act/365
            horizons: vec![31.0 / 365.0, 59.0 / 365.0],
        }
    }
}

impl VgParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidInput(msg));
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return bad(format!("sigma must be positive, got {}", self.sigma));
        }
        if !(self.nu > 0.0 && self.nu.is_finite()) {
            return bad(format!("nu must be positive, got {}", self.nu));
        }
        if !(self.spot > 0.0 && self.spot.is_finite()) {
            return bad(format!("spot must be positive, got {}", self.spot));
        }
        if !self.theta.is_finite() {
            return bad("theta must be finite".into());
        }
        if self.horizons.is_empty() {
            return bad("at least one horizon is required".into());
        }
        let mut prev = 0.0;
        for &h in &self.horizons {
            if !(h > prev && h.is_finite()) {
                return bad(format!("horizons must be positive and strictly increasing: {:?}", self.horizons));
            }
            prev = h;
        }
        Ok(())
    }

    pub fn periods(&self) -> usize {
        self.horizons.len()
    }

    /// Length in years of period `t` (1-based).
    pub fn period_length(&self, t: usize) -> f64 {
        let prev = if t == 1 { 0.0 } else { self.horizons[t - 2] };
        self.horizons[t - 1] - prev
    }

    /// Mean and variance of the log-increment over `dt`.
    pub fn log_increment_moments(&self, dt: f64) -> (f64, f64) {
        (self.theta * dt, (self.sigma * self.sigma + self.theta * self.theta * self.nu) * dt)
    }
}
