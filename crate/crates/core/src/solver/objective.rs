use nalgebra::{DVector, DVectorView};

use super::{ConvexProgram, ExpSum, Objective};
use crate::error::{Error, Result};

pub(crate) fn log_sum_exp(z: &[f64]) -> f64 {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Normalized weights `exp(z_i - lse(z))`.
pub(crate) fn softmax(z: &[f64], lse: f64) -> Vec<f64> {
    z.iter().map(|v| (v - lse).exp()).collect()
}

impl ExpSum {
    /// `log m_i + kappa a_i(x)` for every row.
    pub fn exponents(&self, x: &[f64]) -> Vec<f64> {
        let a = &self.rows * DVectorView::from_slice(x, x.len());
        a.iter()
            .zip(&self.offsets)
            .zip(&self.log_masses)
            .map(|((ai, o), lm)| lm + self.kappa * (ai + o))
            .collect()
    }

    pub fn log_value(&self, x: &[f64]) -> f64 {
        log_sum_exp(&self.exponents(x))
    }

    /// Log value and gradient of the log value.
    pub fn log_value_and_gradient(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let z = self.exponents(x);
        let lse = log_sum_exp(&z);
        let p = DVector::from_vec(softmax(&z, lse));
        let g = self.rows.tr_mul(&p) * self.kappa;
        (lse, g.as_slice().to_vec())
    }
}

fn check_point(program: &ConvexProgram, x: &[f64]) -> Result<()> {
    if x.len() != program.num_variables() {
        return Err(Error::InvalidInput(format!(
            "point has {} coordinates, program has {} variables",
            x.len(),
            program.num_variables()
        )));
    }
    for (j, &v) in x.iter().enumerate() {
        if !(v >= program.lower[j] && v <= program.upper[j]) {
            return Err(Error::InvalidInput(format!(
                "coordinate {j} = {v} outside [{}, {}]",
                program.lower[j], program.upper[j]
            )));
        }
    }
    Ok(())
}

/// Objective value and gradient at `x`. The exponential sum is accumulated
/// in log-sum-exp form, so the value is `inf` only when the true value
/// exceeds the double range.
pub fn objective_and_gradient(program: &ConvexProgram, x: &[f64]) -> Result<(f64, Vec<f64>)> {
    check_point(program, x)?;
    match &program.objective {
        Objective::ExpSum(e) => {
            let (lse, g) = e.log_value_and_gradient(x);
            let v = lse.exp();
            Ok((v, g.into_iter().map(|gj| gj * v).collect()))
        }
        Objective::Linear { cost, constant } => {
            let v = cost.iter().zip(x).map(|(c, xi)| c * xi).sum::<f64>() + constant;
            Ok((v, cost.clone()))
        }
    }
}

/// Like [`objective_and_gradient`] but for the natural log of an
/// exponential-sum objective. Linear objectives are returned unchanged.
pub fn log_objective_and_gradient(program: &ConvexProgram, x: &[f64]) -> Result<(f64, Vec<f64>)> {
    check_point(program, x)?;
    match &program.objective {
        Objective::ExpSum(e) => Ok(e.log_value_and_gradient(x)),
        Objective::Linear { .. } => objective_and_gradient(program, x),
    }
}
