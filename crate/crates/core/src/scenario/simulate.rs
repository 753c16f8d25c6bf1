use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Gamma, StandardNormal};
use rayon::prelude::*;

use super::VgParams;
use crate::error::{Error, Result};

/// Simulated index paths stored row-major, one row of `periods` levels each.
#[derive(Clone, Debug, PartialEq)]
pub struct SimulatedPaths {
    pub periods: usize,
    levels: Vec<f64>,
}

impl SimulatedPaths {
    pub fn len(&self) -> usize {
        self.levels.len() / self.periods
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn path(&self, i: usize) -> &[f64] {
        &self.levels[i * self.periods..(i + 1) * self.periods]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.levels.chunks(self.periods)
    }
}

/// Draws `n` paths over all model horizons. Path `i` uses its own ChaCha
/// stream derived from `seed` and `i`, so output does not depend on the
/// number of worker threads.
pub fn simulate_paths(params: &VgParams, n: usize, seed: u64) -> Result<SimulatedPaths> {
    params.validate()?;
    let periods = params.periods();
    let gammas = (1..=periods)
        .map(|t| Gamma::new(params.period_length(t) / params.nu, params.nu))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| Error::InvalidInput(format!("gamma time change: {e}")))?;
    let mut levels = vec![0.0; n * periods];
    levels
        .par_chunks_mut(periods)
        .enumerate()
        .for_each(|(i, row)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let mut log_level = params.spot.ln();
            for (x, gamma) in row.iter_mut().zip(&gammas) {
                let g: f64 = rng.sample(gamma);
                let z: f64 = rng.sample(StandardNormal);
                log_level += params.theta * g + params.sigma * g.sqrt() * z;
                *x = log_level.exp();
            }
        });
    Ok(SimulatedPaths { periods, levels })
}
