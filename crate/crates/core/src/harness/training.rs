use rand_chacha::ChaCha8Rng;

use super::memory::{sample_batch, EpisodeRecord, Padding, ReplayMemory, Transition};
use crate::autodiff::AdamConfig;
use crate::cartpole::{CartPole, EnvConfig, TerminalReason};
use crate::controller::{policy_step, ControllerState, DescentConfig, RewardSpec};
use crate::error::{Error, Result};
use crate::model::{Batch, ModelParams, NetConfig};
use crate::rng::{SeedStreams, Stream};

/// Everything one training run needs.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainRunConfig {
    pub episodes_per_cycle: usize,
    pub steps_per_cycle: usize,
    pub batch_size: usize,
    pub episode_budget: usize,
    pub padding: Padding,
    /// End the run right after the first perfect episode.
    pub stop_on_success: bool,
    pub net: NetConfig,
    pub adam: AdamConfig,
    pub descent: DescentConfig,
    /// `env.max_steps` is the per-episode cap.
    pub env: EnvConfig,
    pub reward: RewardSpec,
    pub seed: u64,
}

impl Default for TrainRunConfig {
    fn default() -> Self {
        Self {
            episodes_per_cycle: 5,
            steps_per_cycle: 400,
            batch_size: 1000,
            episode_budget: 125,
            padding: Padding::FreezeTerminal,
            stop_on_success: false,
            net: NetConfig::default(),
            adam: AdamConfig::default(),
            descent: DescentConfig::default(),
            env: EnvConfig::default(),
            reward: RewardSpec::default(),
            seed: 0,
        }
    }
}

impl TrainRunConfig {
    pub fn validate(&self) -> Result<()> {
        for (key, v) in [
            ("train.episodes_per_cycle", self.episodes_per_cycle),
            ("train.steps_per_cycle", self.steps_per_cycle),
            ("train.batch_size", self.batch_size),
            ("train.episode_budget", self.episode_budget),
        ] {
            if v == 0 {
                return Err(Error::invalid(key, v, ">= 1"));
            }
        }
        if self.episode_budget < self.episodes_per_cycle {
            return Err(Error::invalid(
                "train.episode_budget",
                self.episode_budget,
                ">= train.episodes_per_cycle",
            ));
        }
        let adam = &self.adam;
        if !(adam.learning_rate.is_finite() && adam.learning_rate > 0.0) {
            return Err(Error::invalid("train.learning_rate", adam.learning_rate, "> 0"));
        }
        for (key, b) in [("train.beta1", adam.beta1), ("train.beta2", adam.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::invalid(key, b, "in [0, 1)"));
            }
        }
        if !(adam.epsilon.is_finite() && adam.epsilon > 0.0) {
            return Err(Error::invalid("train.epsilon", adam.epsilon, "> 0"));
        }
        self.net.validate()?;
        self.descent.validate()?;
        self.env.validate()?;
        self.reward.validate()
    }

    pub fn streams(&self) -> SeedStreams {
        SeedStreams::new(self.seed)
    }
}

/// Random streams consumed while acting in the environment.
#[derive(Clone, Debug)]
pub struct EpisodeRngs {
    pub env: ChaCha8Rng,
    pub latent: ChaCha8Rng,
    pub action: ChaCha8Rng,
}

impl EpisodeRngs {
    pub fn from_streams(s: &SeedStreams) -> Self {
        Self {
            env: s.rng(Stream::EnvInit),
            latent: s.rng(Stream::LatentInit),
            action: s.rng(Stream::ActionSampling),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeResult {
    pub record: EpisodeRecord,
    /// Mean of `|x_t - x0(t)|` over the visited states after each step.
    pub mean_tracking_error: f64,
    pub replans: u64,
}

impl EpisodeResult {
    pub fn hold_time(&self) -> usize {
        self.record.len()
    }
}

/// Resets `env`, starts a fresh controller and acts until the episode ends
/// or `max_steps` is reached. Step indices seen by the cost start at `t0`.
#[allow(clippy::too_many_arguments)]
pub fn run_episode(
    env_config: &EnvConfig,
    params: &ModelParams,
    spec: &RewardSpec,
    descent: &DescentConfig,
    max_steps: usize,
    t0: usize,
    rngs: &mut EpisodeRngs,
) -> Result<EpisodeResult> {
    let mut env = CartPole::new(EnvConfig {
        max_steps,
        ..*env_config
    });
    let initial = env.reset(&mut rngs.env);
    let mut cs = ControllerState::fresh(params.net.n_latent, &mut rngs.latent);
    let mut transitions = Vec::new();
    let mut state = initial;
    let mut t = t0;
    let mut tracking = 0.0;
    let terminal = loop {
        let action = policy_step(&mut cs, state, params, spec, descent, t, &mut rngs.action)?;
        let out = env.step(action)?;
        t += 1;
        state = out.state;
        tracking += (state.x - spec.target_x.at(t)).abs();
        transitions.push(Transition { action, state });
        if let Some(reason) = out.terminal {
            break reason;
        }
    };
    let n = transitions.len();
    Ok(EpisodeResult {
        record: EpisodeRecord {
            initial,
            transitions,
            terminal,
        },
        mean_tracking_error: tracking / n as f64,
        replans: cs.replans,
    })
}

/// `steps_per_cycle` train steps, each on a freshly sampled batch. Returns
/// the mean loss.
pub fn train_cycle(
    params: &mut ModelParams,
    memory: &ReplayMemory,
    cfg: &TrainRunConfig,
    batch_rng: &mut ChaCha8Rng,
    noise_rng: &mut ChaCha8Rng,
) -> Result<f64> {
    if memory.is_empty() {
        return Err(Error::invalid("memory", 0, "at least one episode"));
    }
    let mut total = 0.0;
    for _ in 0..cfg.steps_per_cycle {
        let samples = sample_batch(memory, cfg.batch_size, params.net.n_future, cfg.padding, batch_rng);
        let pairs: Vec<_> = samples.into_iter().map(|s| (s.current, s.window)).collect();
        let batch = Batch::from_samples(&pairs, params.net.sensor_scale)?;
        total += params.train_step(&batch, noise_rng)?;
    }
    Ok(total / cfg.steps_per_cycle as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeLog {
    /// 1-based.
    pub episode: usize,
    /// Episode length.
    pub reward: usize,
    /// 1-based collect/train cycle the episode was collected in.
    pub cycle: usize,
    /// Mean loss of the training phase that followed, if one ran.
    pub loss_mean: Option<f64>,
    pub terminal: TerminalReason,
}

pub struct CycleReport<'a> {
    pub cycle: usize,
    pub episodes_done: usize,
    pub loss_mean: Option<f64>,
    /// Episodes collected in this cycle.
    pub episodes: &'a [EpisodeLog],
    pub params: &'a ModelParams,
}

#[derive(Clone, Debug)]
pub struct TrainingOutcome {
    pub curve: Vec<EpisodeLog>,
    /// 1-based index of the first perfect episode.
    pub first_perfect: Option<usize>,
    pub params: ModelParams,
    pub memory: ReplayMemory,
}

impl TrainingOutcome {
    pub fn solved(&self) -> bool {
        self.first_perfect.is_some()
    }

    pub fn mean_reward(&self, first_n: usize) -> f64 {
        let n = first_n.min(self.curve.len());
        if n == 0 {
            return 0.0;
        }
        self.curve[..n].iter().map(|e| e.reward as f64).sum::<f64>() / n as f64
    }
}

pub fn run_training(cfg: &TrainRunConfig) -> Result<TrainingOutcome> {
    run_training_with(cfg, |_| Ok(()))
}

/// Alternates collecting `episodes_per_cycle` episodes with the current
/// model and training on the whole memory, until the episode budget is
/// spent. `on_cycle` sees the parameters after every training phase.
pub fn run_training_with(
    cfg: &TrainRunConfig,
    mut on_cycle: impl FnMut(&CycleReport<'_>) -> Result<()>,
) -> Result<TrainingOutcome> {
    cfg.validate()?;
    let streams = cfg.streams();
    let mut params = ModelParams::init(cfg.net, cfg.adam, &mut streams.rng(Stream::WeightInit))?;
    let mut rngs = EpisodeRngs::from_streams(&streams);
    let mut batch_rng = streams.rng(Stream::BatchSampling);
    let mut noise_rng = streams.rng(Stream::Noise);
    let mut memory = ReplayMemory::new();
    let mut curve: Vec<EpisodeLog> = Vec::new();
    let mut first_perfect = None;
    let max_steps = cfg.env.max_steps;

    let mut cycle = 0;
    while curve.len() < cfg.episode_budget {
        cycle += 1;
        let cycle_start = curve.len();
        let mut stop = false;
        for _ in 0..cfg.episodes_per_cycle.min(cfg.episode_budget - curve.len()) {
            let ep = run_episode(&cfg.env, &params, &cfg.reward, &cfg.descent, max_steps, 0, &mut rngs)?;
            let perfect = ep.record.is_perfect(max_steps);
            curve.push(EpisodeLog {
                episode: curve.len() + 1,
                reward: ep.record.len(),
                cycle,
                loss_mean: None,
                terminal: ep.record.terminal,
            });
            memory.push(ep.record);
            if perfect && first_perfect.is_none() {
                first_perfect = Some(curve.len());
                if cfg.stop_on_success {
                    stop = true;
                    break;
                }
            }
        }
        if stop {
            break;
        }
        let loss = train_cycle(&mut params, &memory, cfg, &mut batch_rng, &mut noise_rng)?;
        for log in &mut curve[cycle_start..] {
            log.loss_mean = Some(loss);
        }
        on_cycle(&CycleReport {
            cycle,
            episodes_done: curve.len(),
            loss_mean: Some(loss),
            episodes: &curve[cycle_start..],
            params: &params,
        })?;
    }

    Ok(TrainingOutcome {
        curve,
        first_perfect,
        params,
        memory,
    })
}
