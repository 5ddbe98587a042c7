use rayon::prelude::*;

use super::training::{run_training, TrainRunConfig};
use crate::error::Result;

/// Episodes over which sweep runs are scored.
pub const SWEEP_EPISODES: usize = 125;

/// One row of `sweep.csv`.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub param: String,
    pub value: String,
    pub seed: u64,
    pub mean_reward: f64,
}

/// Trains one run per (parameter value, seed), each truncated at
/// [`SWEEP_EPISODES`] episodes, and reports the mean episode reward.
///
/// `grid` maps configuration keys (e.g. `net.n_latent`) to the values tried.
pub fn run_hparam_sweep(base: &TrainRunConfig, grid: &[(String, Vec<String>)], seeds: &[u64]) -> Result<Vec<SweepRow>> {
    let mut jobs = Vec::new();
    for (param, values) in grid {
        for value in values {
            for &seed in seeds {
                let mut cfg = base.clone();
                cfg.set(param, value)?;
                cfg.seed = seed;
                cfg.episode_budget = SWEEP_EPISODES;
                cfg.stop_on_success = false;
                cfg.validate()?;
                jobs.push((param.clone(), value.clone(), cfg));
            }
        }
    }
    jobs.into_par_iter()
        .map(|(param, value, cfg)| {
            let outcome = run_training(&cfg)?;
            Ok(SweepRow {
                param,
                value,
                seed: cfg.seed,
                mean_reward: outcome.mean_reward(SWEEP_EPISODES),
            })
        })
        .collect()
}
