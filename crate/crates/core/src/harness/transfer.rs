use rayon::prelude::*;

use super::training::{run_episode, EpisodeResult, EpisodeRngs, TrainRunConfig};
use crate::controller::{RewardSpec, Target};
use crate::error::{Error, Result};
use crate::model::ModelParams;

#[derive(Clone, Debug, PartialEq)]
pub struct TransferConfig {
    pub amplitudes: Vec<f64>,
    pub periods: Vec<f64>,
    pub trials: usize,
    pub max_steps: usize,
}

impl Default for TransferConfig {
    fn default() -> Self {
        Self {
            amplitudes: vec![0.5],
            periods: vec![100.0, 500.0, 1000.0],
            trials: 20,
            max_steps: 5000,
        }
    }
}

impl TransferConfig {
    pub fn validate(&self) -> Result<()> {
        if self.amplitudes.is_empty() || self.amplitudes.iter().any(|a| !a.is_finite()) {
            return Err(Error::invalid("transfer.amplitudes", format!("{:?}", self.amplitudes), "a nonempty list of finite values"));
        }
        if self.periods.is_empty() || self.periods.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
            return Err(Error::invalid("transfer.periods", format!("{:?}", self.periods), "a nonempty list of values > 0"));
        }
        if self.trials == 0 {
            return Err(Error::invalid("transfer.trials", 0, ">= 1"));
        }
        if self.max_steps == 0 {
            return Err(Error::invalid("transfer.max_steps", 0, ">= 1"));
        }
        Ok(())
    }
}

/// One row of `transfer.csv`.
#[derive(Clone, Debug, PartialEq)]
pub struct TransferTrial {
    pub amplitude: f64,
    pub period: f64,
    pub trial: usize,
    pub hold_time: usize,
    pub mean_tracking_error: f64,
}

/// Aggregate over the trials of one (amplitude, period) cell.
#[derive(Clone, Debug, PartialEq)]
pub struct TransferCell {
    pub amplitude: f64,
    pub period: f64,
    pub trials: usize,
    pub mean_hold: f64,
    pub median_hold: f64,
    pub p10_hold: f64,
    pub mean_tracking_error: f64,
}

/// Reward spec that follows `amplitude * sin(2 pi t / period)`.
pub fn sinusoid_spec(base: &RewardSpec, amplitude: f64, period: f64) -> RewardSpec {
    RewardSpec {
        target_x: Target::Sinusoid { amplitude, period },
        ..*base
    }
}

/// A single trial. The trial seed depends only on the run seed and the
/// trial index, so every cell sees the same initial conditions.
pub fn transfer_trial(
    params: &ModelParams,
    base: &TrainRunConfig,
    amplitude: f64,
    period: f64,
    trial: usize,
    max_steps: usize,
) -> Result<TransferTrial> {
    let spec = sinusoid_spec(&base.reward, amplitude, period);
    let mut rngs = EpisodeRngs::from_streams(&base.streams().child(trial as u64));
    let ep = run_episode(&base.env, params, &spec, &base.descent, max_steps, 0, &mut rngs)?;
    Ok(TransferTrial {
        amplitude,
        period,
        trial,
        hold_time: ep.hold_time(),
        mean_tracking_error: ep.mean_tracking_error,
    })
}

/// Runs `episodes` episodes under `base.reward`, capped at
/// `base.env.max_steps`. Episode `i` draws from child stream `i`, so a
/// constant-target evaluation replays the corresponding transfer trials.
pub fn run_evaluation(params: &ModelParams, base: &TrainRunConfig, episodes: usize) -> Result<Vec<EpisodeResult>> {
    base.reward.validate()?;
    (0..episodes)
        .into_par_iter()
        .map(|i| {
            let mut rngs = EpisodeRngs::from_streams(&base.streams().child(i as u64));
            run_episode(&base.env, params, &base.reward, &base.descent, base.env.max_steps, 0, &mut rngs)
        })
        .collect()
}

/// Runs every (amplitude, period, trial) combination.
pub fn run_transfer_eval(params: &ModelParams, base: &TrainRunConfig, cfg: &TransferConfig) -> Result<Vec<TransferTrial>> {
    cfg.validate()?;
    let jobs: Vec<(f64, f64, usize)> = cfg
        .amplitudes
        .iter()
        .flat_map(|&a| cfg.periods.iter().flat_map(move |&t| (0..cfg.trials).map(move |k| (a, t, k))))
        .collect();
    jobs.par_iter()
        .map(|&(a, t, k)| transfer_trial(params, base, a, t, k, cfg.max_steps))
        .collect()
}

pub fn summarize_transfer(trials: &[TransferTrial]) -> Vec<TransferCell> {
    let mut cells: Vec<TransferCell> = Vec::new();
    let mut keys: Vec<(f64, f64)> = Vec::new();
    for t in trials {
        if !keys.iter().any(|&(a, p)| a == t.amplitude && p == t.period) {
            keys.push((t.amplitude, t.period));
        }
    }
    for (a, p) in keys {
        let rows: Vec<&TransferTrial> = trials.iter().filter(|t| t.amplitude == a && t.period == p).collect();
        let mut holds: Vec<f64> = rows.iter().map(|t| t.hold_time as f64).collect();
        holds.sort_by(|x, y| x.total_cmp(y));
        let n = holds.len() as f64;
        cells.push(TransferCell {
            amplitude: a,
            period: p,
            trials: rows.len(),
            mean_hold: holds.iter().sum::<f64>() / n,
            median_hold: percentile(&holds, 0.5),
            p10_hold: percentile(&holds, 0.1),
            mean_tracking_error: rows.iter().map(|t| t.mean_tracking_error).sum::<f64>() / n,
        });
    }
    cells
}

/// Linear-interpolated percentile of sorted values.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}
