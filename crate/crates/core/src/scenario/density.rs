use std::f64::consts::PI;

use statrs::function::gamma::ln_gamma;

use super::VgParams;
use crate::error::{Error, Result};
use crate::quadrature::integrate;

// a ln a - a - ln Gamma(a), the log normalizer of a Gamma(a, 1/a) density
fn gamma_log_normalizer(a: f64) -> f64 {
    if a >= 10.0 {
        let a2 = a * a;
        let a3 = a2 * a;
        let a5 = a3 * a2;
        let a7 = a5 * a2;
        0.5 * (a / (2.0 * PI)).ln() - 1.0 / (12.0 * a) + 1.0 / (360.0 * a3) - 1.0 / (1260.0 * a5)
            + 1.0 / (1680.0 * a7)
    } else {
        a * a.ln() - a - ln_gamma(a)
    }
}

/// Log of the density of `log(X_{t+dt} / X_t)` at `u`.
///
/// The variance-gamma law is a normal mean-variance mixture over the gamma
/// time change `g`. The mixture integral is evaluated in `y = ln(g / dt)`,
/// where the integrand is log-concave with a closed-form mode.
pub fn vg_log_increment_log_density(params: &VgParams, dt: f64, u: f64) -> Result<f64> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Density(format!("period length must be positive, got {dt}")));
    }
    if !u.is_finite() {
        return Err(Error::Density(format!("log-increment must be finite, got {u}")));
    }
    let s2 = params.sigma * params.sigma;
    let a = dt / params.nu;
    let big_a = u * u / (2.0 * s2 * dt);
    let b_drift = params.theta * params.theta * dt / (2.0 * s2);
    let big_b = a + b_drift;
    if big_a == 0.0 && a <= 0.5 {
        return Err(Error::Density(format!("density is unbounded at zero for shape {a}")));
    }
    let constant = -0.5 * (2.0 * PI * s2 * dt).ln() + u * params.theta / s2 + gamma_log_normalizer(a);
    let ell = |y: f64| -> f64 {
        -0.5 * y - big_a * (-y).exp() - b_drift * y.exp() + a * (y - y.exp_m1())
    };

    // stationary point of ell: B r^2 - (a - 1/2) r - A = 0 with r = e^y
    let c = a - 0.5;
    let disc = (c * c + 4.0 * big_a * big_b).sqrt();
    let r_star = if c >= 0.0 { (c + disc) / (2.0 * big_b) } else { 2.0 * big_a / (disc - c) };
    let y_star = r_star.ln();
    let peak = ell(y_star);
    let curvature = big_a / r_star + big_b * r_star;
    let h = 1.0 / curvature.sqrt();

    let cutoff = peak - 50.0;
    let mut lo = y_star - h;
    let mut step = h;
    while ell(lo) > cutoff {
        step *= 2.0;
        lo -= step;
    }
    let mut hi = y_star + h;
    step = h;
    while ell(hi) > cutoff {
        step *= 2.0;
        hi += step;
    }
    let r = integrate(|y| (ell(y) - peak).exp(), lo, hi, 1e-15 * h, 1e-13, 2000);
    let value = constant + peak + r.value.ln();
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::Density(format!("non-finite density at u = {u}, dt = {dt}")))
    }
}

pub fn vg_log_increment_density(params: &VgParams, dt: f64, u: f64) -> Result<f64> {
    vg_log_increment_log_density(params, dt, u).map(f64::exp)
}

/// Log of the joint density of the levels `(X_1, ..., X_t)` of a path.
pub fn path_log_density(params: &VgParams, path: &[f64]) -> Result<f64> {
    if path.len() > params.periods() {
        return Err(Error::PathLength {
            expected: params.periods(),
            got: path.len(),
        });
    }
    let mut prev = params.spot;
    let mut total = 0.0;
    for (i, &x) in path.iter().enumerate() {
        if !(x > 0.0) {
            return Err(Error::NonPositiveLevel(x));
        }
        let dt = params.period_length(i + 1);
        total += vg_log_increment_log_density(params, dt, (x / prev).ln())? - x.ln();
        prev = x;
    }
    Ok(total)
}

pub fn path_density(params: &VgParams, path: &[f64]) -> Result<f64> {
    path_log_density(params, path).map(f64::exp)
}
