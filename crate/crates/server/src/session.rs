//! Simulation state of one steering session. Everything here is
//! synchronous and owned by a single thread; the network layer only feeds
//! it control messages and forwards the frames it produces.

use std::sync::Arc;

use genctl::cartpole::{CartPole, EnvConfig};
use genctl::controller::{policy_step, ControllerState, DescentConfig, RewardSpec, Target};
use genctl::harness::EpisodeRngs;
use genctl::model::ModelParams;
use genctl::rng::SeedStreams;
use genctl::Result;

use crate::protocol::{plan_steps, ControlMessage, EpisodeStats, ServerMessage, WeightsMsg};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RunMode {
    Running,
    Paused,
}

#[derive(Clone, Debug)]
pub struct SessionConfig {
    pub env: EnvConfig,
    pub descent: DescentConfig,
    pub reward: RewardSpec,
    /// Episode length cap; episodes that reach it restart like falls do.
    pub max_steps: usize,
    pub speed: f64,
    pub seed: u64,
}

pub struct Session {
    params: Arc<ModelParams>,
    cfg: SessionConfig,
    env: CartPole,
    controller: ControllerState,
    spec: RewardSpec,
    rngs: EpisodeRngs,
    t: usize,
    mode: RunMode,
    speed: f64,
    seq: u64,
    stats: EpisodeStats,
    tracking_sum: f64,
}

impl Session {
    /// The first episode draws its randomness exactly like trial 0 of a
    /// transfer evaluation with the same seed.
    pub fn new(params: Arc<ModelParams>, cfg: SessionConfig) -> Self {
        let rngs = EpisodeRngs::from_streams(&SeedStreams::new(cfg.seed).child(0));
        let env = CartPole::new(EnvConfig {
            max_steps: cfg.max_steps,
            ..cfg.env
        });
        let controller = ControllerState::new(genctl::model::LatentVector::zeros(params.net.n_latent));
        let mut session = Self {
            spec: cfg.reward,
            speed: cfg.speed,
            params,
            cfg,
            env,
            controller,
            rngs,
            t: 0,
            mode: RunMode::Running,
            seq: 0,
            stats: EpisodeStats::default(),
            tracking_sum: 0.0,
        };
        session.start_episode();
        session
    }

    fn start_episode(&mut self) {
        self.env.reset(&mut self.rngs.env);
        self.controller = ControllerState::fresh(self.params.net.n_latent, &mut self.rngs.latent);
        self.t = 0;
        self.tracking_sum = 0.0;
        self.stats.episode += 1;
        self.stats.steps = 0;
        self.stats.mean_tracking_error = 0.0;
    }

    pub fn mode(&self) -> RunMode {
        self.mode
    }

    pub fn speed(&self) -> f64 {
        self.speed
    }

    pub fn spec(&self) -> &RewardSpec {
        &self.spec
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn controller(&self) -> &ControllerState {
        &self.controller
    }

    pub fn stats(&self) -> EpisodeStats {
        self.stats
    }

    /// Wall-clock seconds between frames.
    pub fn frame_period(&self) -> f64 {
        self.cfg.env.tau / self.speed
    }

    /// Follows `amplitude * sin(2 pi t / period)` until the next `set_target`.
    pub fn scripted_target(&mut self, amplitude: f64, period: f64) {
        self.spec.target_x = Target::Sinusoid { amplitude, period };
    }

    /// Applies one control message. Invalid messages leave the session
    /// untouched.
    pub fn apply(&mut self, msg: ControlMessage) -> std::result::Result<(), String> {
        msg.validate()?;
        match msg {
            ControlMessage::SetTarget { x0 } => self.spec.target_x = Target::Constant(x0),
            ControlMessage::SetWeights { gx, gv, gtheta, gomega } => {
                self.spec.gamma_x = gx;
                self.spec.gamma_v = gv;
                self.spec.gamma_theta = gtheta;
                self.spec.gamma_omega = gomega;
            }
            ControlMessage::SetSinusoid { amplitude, period } => self.scripted_target(amplitude, period),
            ControlMessage::Pause => self.mode = RunMode::Paused,
            ControlMessage::Resume => self.mode = RunMode::Running,
            ControlMessage::Reset => self.start_episode(),
            ControlMessage::SetSpeed { mult } => self.speed = mult,
        }
        Ok(())
    }

    pub fn hello(&self) -> ServerMessage {
        ServerMessage::Hello {
            n_future: self.params.net.n_future,
            tau: self.cfg.env.tau,
            position_limit: self.cfg.env.position_limit,
            angle_limit: self.cfg.env.angle_limit,
            weights: WeightsMsg::from(&self.spec),
            speed: self.speed,
            paused: self.mode == RunMode::Paused,
        }
    }

    /// Advances one simulation step and returns its frame. The frame shows
    /// the state the step produced; if that state ends the episode the next
    /// episode starts before the following step.
    pub fn step(&mut self) -> Result<ServerMessage> {
        let action = policy_step(
            &mut self.controller,
            self.env.state(),
            &self.params,
            &self.spec,
            &self.cfg.descent,
            self.t,
            &mut self.rngs.action,
        )?;
        let out = self.env.step(action)?;
        self.t += 1;
        let target_x = self.spec.target_x.at(self.t);
        self.tracking_sum += (out.state.x - target_x).abs();
        self.stats.steps = self.t;
        self.stats.mean_tracking_error = self.tracking_sum / self.t as f64;
        self.seq += 1;

        let plan = self.controller.plan.as_ref().map(plan_steps).unwrap_or_default();
        let frame = ServerMessage::Frame {
            seq: self.seq,
            t: self.t,
            state: out.state.into(),
            target_x,
            q_value: self.controller.q,
            plan,
            stats: self.stats,
        };
        if let Some(reason) = out.terminal {
            self.stats.last_hold = Some(self.t);
            self.stats.best_hold = self.stats.best_hold.max(self.t);
            if reason.is_failure() {
                self.stats.falls += 1;
            }
            self.start_episode();
        }
        Ok(frame)
    }
}
