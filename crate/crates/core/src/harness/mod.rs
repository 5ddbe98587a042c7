//! Collect/train loop over the agent's own experience and the experiment
//! suites built on it.

mod memory;
mod sweep;
mod training;
mod transfer;

pub use memory::{sample_batch, valid_starts, EpisodeRecord, Padding, ReplayMemory, Sample, Transition};
pub use sweep::{run_hparam_sweep, SweepRow, SWEEP_EPISODES};
pub use training::{
    run_episode, run_training, run_training_with, train_cycle, CycleReport, EpisodeLog, EpisodeResult, EpisodeRngs,
    TrainRunConfig, TrainingOutcome,
};
pub use transfer::{
    run_evaluation, run_transfer_eval, sinusoid_spec, summarize_transfer, transfer_trial, TransferCell, TransferConfig, TransferTrial,
};
