use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use genctl::checkpoint::{self, Checkpoint};
use genctl::config::RunConfiguration;
use genctl::harness::{
    run_evaluation, run_hparam_sweep, run_training_with, run_transfer_eval, summarize_transfer,
};
use genctl::metrics;
use genctl_server::{ServeConfig, Session, SessionConfig};

#[derive(Parser)]
#[command(name = "genctl", version, about = "Cart-pole control from a generative model of the future")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a controller from scratch on its own experience.
    Train(Common),
    /// Run episodes from a checkpoint under the configured reward.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 20)]
        episodes: usize,
        /// Sinusoidal position target `A,T`.
        #[arg(long, value_name = "A,T", allow_hyphen_values = true)]
        sinusoid: Option<String>,
    },
    /// Track sinusoidal targets with a controller trained on balancing.
    Transfer {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Single-cell amplitude; defaults to the configured grid.
        #[arg(long, allow_hyphen_values = true)]
        amplitude: Option<String>,
        /// Single-cell period; defaults to the configured grid.
        #[arg(long, allow_hyphen_values = true)]
        period: Option<String>,
    },
    /// Train one run per grid value and seed; score the first 125 episodes.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// `key=v1,v2,...`, repeatable.
        #[arg(long = "grid", value_name = "KEY=VALUES", required = true)]
        grid: Vec<String>,
        /// Comma-separated seeds.
        #[arg(long, default_value = "0,1,2,3,4")]
        seeds: String,
    },
    /// Host a live steering session for a checkpoint.
    Serve {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value_t = 1.0)]
        speed: f64,
        #[arg(long, value_name = "A,T", allow_hyphen_values = true)]
        sinusoid: Option<String>,
        /// Static UI bundle directory.
        #[arg(long, default_value = "ui/dist")]
        ui_dir: PathBuf,
    },
    /// Check analytic gradients against finite differences.
    Gradcheck {
        #[arg(long, default_value_t = 20)]
        graphs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

/// Configuration sources shared by every run. Precedence: defaults (or the
/// checkpoint's configuration) < `--config` < `--set` < named flags.
#[derive(Args, Clone, Default)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    /// `key=value` override, repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, allow_hyphen_values = true)]
    n_latent: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    alpha: Option<String>,
    /// Episode budget for training.
    #[arg(long = "budget")]
    budget: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn overrides(&self) -> Result<Vec<(String, String)>> {
        let mut out = Vec::new();
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .with_context(|| format!("--set expects KEY=VALUE, got `{kv}`"))?;
            out.push((k.trim().to_string(), v.trim().to_string()));
        }
        let mut named = |key: &str, value: Option<String>| {
            if let Some(v) = value {
                out.push((key.to_string(), v));
            }
        };
        named("seed", self.seed.map(|s| s.to_string()));
        named("net.n_latent", self.n_latent.clone());
        named("descent.alpha", self.alpha.clone());
        named("train.episode_budget", self.budget.map(|b| b.to_string()));
        named("output_dir", self.out.as_ref().map(|p| p.display().to_string()));
        Ok(out)
    }

    /// Layers the sources on top of `base`.
    fn resolve(&self, base: RunConfiguration, extra: &[(String, String)]) -> Result<RunConfiguration> {
        let mut cfg = base;
        if let Some(path) = &self.config {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            cfg.apply_text(&text).with_context(|| format!("in {}", path.display()))?;
        }
        for (k, v) in self.overrides()?.iter().chain(extra) {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn split_pair(flag: &str, text: &str) -> Result<(String, String)> {
    let (a, t) = text
        .split_once(',')
        .with_context(|| format!("{flag} expects A,T, got `{text}`"))?;
    Ok((a.trim().to_string(), t.trim().to_string()))
}

/// Loads a checkpoint and layers the run sources on its configuration.
/// Network shape keys must not change.
fn from_checkpoint(path: &Path, common: &Common, extra: &[(String, String)]) -> Result<(Checkpoint, RunConfiguration)> {
    let ckpt = checkpoint::load(path).with_context(|| format!("loading checkpoint {}", path.display()))?;
    let mut base = ckpt.config.clone();
    base.output_dir = RunConfiguration::default().output_dir;
    let cfg = common.resolve(base, extra)?;
    if cfg.train.net != ckpt.params.net {
        bail!("net.* settings cannot differ from the checkpoint's");
    }
    Ok((ckpt, cfg))
}

fn train(common: &Common) -> Result<()> {
    let cfg = common.resolve(RunConfiguration::default(), &[])?;
    let dir = PathBuf::from(&cfg.output_dir);
    let started = Instant::now();
    let outcome = run_training_with(&cfg.train, |report| {
        let rewards: Vec<String> = report.episodes.iter().map(|e| e.reward.to_string()).collect();
        eprintln!(
            "cycle {:>3}  episodes {:>4}  rewards [{}]  loss {:.5}  {:.0}s",
            report.cycle,
            report.episodes_done,
            rewards.join(" "),
            report.loss_mean.unwrap_or(f64::NAN),
            started.elapsed().as_secs_f64()
        );
        if cfg.checkpoint_every > 0 && report.cycle % cfg.checkpoint_every == 0 {
            checkpoint::save(&dir.join(format!("checkpoint-cycle{:04}.bin", report.cycle)), report.params, &cfg)?;
        }
        Ok(())
    })?;
    checkpoint::save(&dir.join("checkpoint.bin"), &outcome.params, &cfg)?;
    metrics::emit_training(&dir, &outcome, &cfg)?;
    match outcome.first_perfect {
        Some(e) => println!("first perfect episode: {e}"),
        None => println!("no perfect episode within {} episodes", outcome.curve.len()),
    }
    println!("mean reward: {:.1}", outcome.mean_reward(outcome.curve.len()));
    println!("outputs: {}", dir.display());
    Ok(())
}

fn eval(common: &Common, path: &Path, episodes: usize, sinusoid: Option<&str>) -> Result<()> {
    let mut extra = Vec::new();
    if let Some(text) = sinusoid {
        let (a, t) = split_pair("--sinusoid", text)?;
        extra.push(("reward.target".to_string(), format!("sin:{a},{t}")));
    }
    let (ckpt, cfg) = from_checkpoint(path, common, &extra)?;
    let results = run_evaluation(&ckpt.params, &cfg.train, episodes)?;
    for (i, r) in results.iter().enumerate() {
        println!(
            "episode {:>3}  hold {:>5}  {}  tracking {:.4}",
            i + 1,
            r.hold_time(),
            r.record.terminal.as_str(),
            r.mean_tracking_error
        );
    }
    let dir = PathBuf::from(&cfg.output_dir);
    metrics::emit_eval(&dir, &results, &cfg)?;
    println!("outputs: {}", dir.display());
    Ok(())
}

fn transfer(common: &Common, path: &Path, amplitude: Option<&str>, period: Option<&str>) -> Result<()> {
    let mut extra = Vec::new();
    if let Some(a) = amplitude {
        extra.push(("transfer.amplitudes".to_string(), a.to_string()));
    }
    if let Some(t) = period {
        extra.push(("transfer.periods".to_string(), t.to_string()));
    }
    let (ckpt, cfg) = from_checkpoint(path, common, &extra)?;
    let trials = run_transfer_eval(&ckpt.params, &cfg.train, &cfg.transfer)?;
    println!("{:>6} {:>7} {:>10} {:>10} {:>10} {:>10}", "A", "T", "mean_hold", "median", "p10", "tracking");
    for c in summarize_transfer(&trials) {
        println!(
            "{:>6} {:>7} {:>10.1} {:>10.1} {:>10.1} {:>10.4}",
            c.amplitude, c.period, c.mean_hold, c.median_hold, c.p10_hold, c.mean_tracking_error
        );
    }
    let dir = PathBuf::from(&cfg.output_dir);
    metrics::emit_transfer(&dir, &trials, &cfg)?;
    println!("outputs: {}", dir.display());
    Ok(())
}

fn sweep(common: &Common, grid: &[String], seeds: &str) -> Result<()> {
    let cfg = common.resolve(RunConfiguration::default(), &[])?;
    let mut parsed = Vec::new();
    for g in grid {
        let (key, values) = g
            .split_once('=')
            .with_context(|| format!("--grid expects KEY=V1,V2, got `{g}`"))?;
        let values: Vec<String> = values.split(',').map(|v| v.trim().to_string()).collect();
        parsed.push((key.trim().to_string(), values));
    }
    let seeds: Vec<u64> = seeds
        .split(',')
        .map(|s| s.trim().parse().with_context(|| format!("bad seed `{s}`")))
        .collect::<Result<_>>()?;
    let rows = run_hparam_sweep(&cfg.train, &parsed, &seeds)?;
    for r in &rows {
        println!("{} = {:<8} seed {:>3}  mean reward {:.1}", r.param, r.value, r.seed, r.mean_reward);
    }
    let dir = PathBuf::from(&cfg.output_dir);
    metrics::emit_sweep(&dir, &rows, &cfg)?;
    println!("outputs: {}", dir.display());
    Ok(())
}

struct ServeArgs<'a> {
    checkpoint: &'a Path,
    host: &'a str,
    port: u16,
    speed: f64,
    sinusoid: Option<&'a str>,
    ui_dir: &'a Path,
}

fn serve(common: &Common, args: ServeArgs<'_>) -> Result<()> {
    if !(args.speed.is_finite() && args.speed > 0.0) {
        bail!("invalid value for --speed: got {}, expected > 0", args.speed);
    }
    let mut extra = Vec::new();
    if let Some(text) = args.sinusoid {
        let (a, t) = split_pair("--sinusoid", text)?;
        extra.push(("reward.target".to_string(), format!("sin:{a},{t}")));
    }
    let (ckpt, cfg) = from_checkpoint(args.checkpoint, common, &extra)?;
    let addr: SocketAddr = format!("{}:{}", args.host, args.port)
        .parse()
        .with_context(|| format!("bad address {}:{}", args.host, args.port))?;
    let session = Session::new(
        Arc::new(ckpt.params),
        SessionConfig {
            env: cfg.train.env,
            descent: cfg.train.descent,
            reward: cfg.train.reward,
            max_steps: usize::MAX,
            speed: args.speed,
            seed: cfg.train.seed,
        },
    );
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async {
        let server = genctl_server::start(
            session,
            ServeConfig {
                addr,
                ui_dir: Some(args.ui_dir.to_path_buf()),
            },
        )
        .await?;
        println!("serving on http://{} (websocket at /ws); ctrl-c to stop", server.local_addr());
        tokio::signal::ctrl_c().await?;
        server.shutdown().await;
        Ok(())
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Train(common) => train(common),
        Command::Eval {
            common,
            checkpoint,
            episodes,
            sinusoid,
        } => eval(common, checkpoint, *episodes, sinusoid.as_deref()),
        Command::Transfer {
            common,
            checkpoint,
            amplitude,
            period,
        } => transfer(common, checkpoint, amplitude.as_deref(), period.as_deref()),
        Command::Sweep { common, grid, seeds } => sweep(common, grid, seeds),
        Command::Serve {
            common,
            checkpoint,
            port,
            host,
            speed,
            sinusoid,
            ui_dir,
        } => serve(
            common,
            ServeArgs {
                checkpoint,
                host,
                port: *port,
                speed: *speed,
                sinusoid: sinusoid.as_deref(),
                ui_dir,
            },
        ),
        Command::Gradcheck { graphs, seed } => gradcheck::run(*graphs, *seed),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

mod gradcheck;
