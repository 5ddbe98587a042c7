//! CSV and text outputs. Every file is written to a temporary sibling and
//! renamed into place.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::config::RunConfiguration;
use crate::error::{Error, Result};
use crate::harness::{EpisodeLog, EpisodeResult, SweepRow, TrainingOutcome, TransferTrial};

pub fn atomic_write(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, contents).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn curve_csv(curve: &[EpisodeLog]) -> String {
    let mut s = String::from("episode,reward,cycle,loss_mean\n");
    for e in curve {
        let loss = e.loss_mean.map(|l| l.to_string()).unwrap_or_default();
        let _ = writeln!(s, "{},{},{},{}", e.episode, e.reward, e.cycle, loss);
    }
    s
}

pub fn summary_text(outcome: &TrainingOutcome, cfg: &RunConfiguration) -> String {
    let first = outcome
        .first_perfect
        .map(|e| e.to_string())
        .unwrap_or_else(|| "none".to_string());
    format!(
        "first_perfect_episode = {first}\nsolved = {}\nepisodes = {}\nmean_reward = {}\nconfig_hash = {}\nseed = {}\n",
        outcome.solved(),
        outcome.curve.len(),
        outcome.mean_reward(outcome.curve.len()),
        cfg.hash(),
        cfg.train.seed
    )
}

pub fn transfer_csv(trials: &[TransferTrial]) -> String {
    let mut s = String::from("A,T,trial,hold_time,mean_tracking_error\n");
    for t in trials {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            t.amplitude, t.period, t.trial, t.hold_time, t.mean_tracking_error
        );
    }
    s
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from("param,value,seed,mean_reward_125\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{},{}", r.param, r.value, r.seed, r.mean_reward);
    }
    s
}

pub fn eval_csv(episodes: &[EpisodeResult]) -> String {
    let mut s = String::from("episode,hold_time,terminal,mean_tracking_error\n");
    for (i, e) in episodes.iter().enumerate() {
        let _ = writeln!(
            s,
            "{},{},{},{}",
            i + 1,
            e.hold_time(),
            e.record.terminal.as_str(),
            e.mean_tracking_error
        );
    }
    s
}

/// Writes the training outputs: `curve.csv`, `summary.txt`, `manifest.txt`.
pub fn emit_training(dir: &Path, outcome: &TrainingOutcome, cfg: &RunConfiguration) -> Result<Vec<PathBuf>> {
    let files = [
        ("curve.csv", curve_csv(&outcome.curve)),
        ("summary.txt", summary_text(outcome, cfg)),
        ("manifest.txt", cfg.manifest_text()),
    ];
    write_all(dir, &files)
}

pub fn emit_transfer(dir: &Path, trials: &[TransferTrial], cfg: &RunConfiguration) -> Result<Vec<PathBuf>> {
    write_all(
        dir,
        &[
            ("transfer.csv", transfer_csv(trials)),
            ("manifest.txt", cfg.manifest_text()),
        ],
    )
}

pub fn emit_sweep(dir: &Path, rows: &[SweepRow], cfg: &RunConfiguration) -> Result<Vec<PathBuf>> {
    write_all(
        dir,
        &[("sweep.csv", sweep_csv(rows)), ("manifest.txt", cfg.manifest_text())],
    )
}

pub fn emit_eval(dir: &Path, episodes: &[EpisodeResult], cfg: &RunConfiguration) -> Result<Vec<PathBuf>> {
    write_all(
        dir,
        &[("eval.csv", eval_csv(episodes)), ("manifest.txt", cfg.manifest_text())],
    )
}

fn write_all(dir: &Path, files: &[(&str, String)]) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for (name, contents) in files {
        let path = dir.join(name);
        atomic_write(&path, contents.as_bytes())?;
        written.push(path);
    }
    Ok(written)
}
