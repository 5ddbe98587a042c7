//! Cart-pole balancing environment with the classic constants: frictionless
//! cart, explicit Euler integration, termination on pole angle or cart
//! position, and a step cap that is reported separately from failure.

use rand::Rng;

use crate::error::{Error, Result};

/// Physical state of cart and pole.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CartState {
    /// Cart position (m).
    pub x: f64,
    /// Cart velocity (m/s).
    pub v: f64,
    /// Pole angle from vertical (rad).
    pub theta: f64,
    /// Pole angular velocity (rad/s).
    pub omega: f64,
}

impl CartState {
    pub fn new(x: f64, v: f64, theta: f64, omega: f64) -> Self {
        Self { x, v, theta, omega }
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.x, self.v, self.theta, self.omega]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

impl std::ops::Neg for CartState {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.x, -self.v, -self.theta, -self.omega)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Action {
    Left,
    Right,
}

impl Action {
    /// Network encoding: left is -1, right is +1.
    pub fn encode(self) -> f64 {
        match self {
            Action::Left => -1.0,
            Action::Right => 1.0,
        }
    }

    pub fn mirrored(self) -> Self {
        match self {
            Action::Left => Action::Right,
            Action::Right => Action::Left,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TerminalReason {
    /// Pole angle beyond the limit.
    Angle,
    /// Cart outside the track.
    Position,
    /// Episode reached `max_steps` without failing.
    Cap,
}

impl TerminalReason {
    pub fn is_failure(self) -> bool {
        !matches!(self, TerminalReason::Cap)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TerminalReason::Angle => "angle",
            TerminalReason::Position => "position",
            TerminalReason::Cap => "cap",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnvConfig {
    pub gravity: f64,
    pub cart_mass: f64,
    pub pole_mass: f64,
    /// Half the pole length (m).
    pub pole_half_length: f64,
    pub force: f64,
    /// Integration timestep (s).
    pub tau: f64,
    /// Failure threshold on |theta| (rad).
    pub angle_limit: f64,
    /// Failure threshold on |x| (m).
    pub position_limit: f64,
    pub max_steps: usize,
    /// Initial components are drawn from `U(-init_range, init_range)`.
    pub init_range: f64,
}

impl Default for EnvConfig {
    /// The 500-step balancing task.
    fn default() -> Self {
        Self {
            gravity: 9.8,
            cart_mass: 1.0,
            pole_mass: 0.1,
            pole_half_length: 0.5,
            force: 10.0,
            tau: 0.02,
            angle_limit: 12.0 * 2.0 * std::f64::consts::PI / 360.0,
            position_limit: 2.4,
            max_steps: 500,
            init_range: 0.05,
        }
    }
}

impl EnvConfig {
    /// 200-step variant of the task.
    pub fn short() -> Self {
        Self {
            max_steps: 200,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("env.gravity", self.gravity),
            ("env.cart_mass", self.cart_mass),
            ("env.pole_mass", self.pole_mass),
            ("env.pole_half_length", self.pole_half_length),
            ("env.force", self.force),
            ("env.tau", self.tau),
            ("env.angle_limit", self.angle_limit),
            ("env.position_limit", self.position_limit),
            ("env.init_range", self.init_range),
        ];
        for (key, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::invalid(key, value, "> 0"));
            }
        }
        if self.max_steps == 0 {
            return Err(Error::invalid("env.max_steps", 0, ">= 1"));
        }
        Ok(())
    }

    /// One Euler step of the cart-pole equations of motion.
    pub fn transition(&self, s: CartState, action: Action) -> Result<CartState> {
        if !s.is_finite() {
            return Err(Error::NonFinite(format!("cart state {s:?}")));
        }
        let force = match action {
            Action::Right => self.force,
            Action::Left => -self.force,
        };
        let total_mass = self.cart_mass + self.pole_mass;
        let polemass_length = self.pole_mass * self.pole_half_length;
        let (sin, cos) = s.theta.sin_cos();
        let temp = (force + polemass_length * s.omega * s.omega * sin) / total_mass;
        let theta_acc = (self.gravity * sin - cos * temp)
            / (self.pole_half_length * (4.0 / 3.0 - self.pole_mass * cos * cos / total_mass));
        let x_acc = temp - polemass_length * theta_acc * cos / total_mass;
        Ok(CartState {
            x: s.x + self.tau * s.v,
            v: s.v + self.tau * x_acc,
            theta: s.theta + self.tau * s.omega,
            omega: s.omega + self.tau * theta_acc,
        })
    }

    /// Why an episode at `state` after `step_count` steps is over, if it is.
    /// Failure takes precedence over the step cap.
    pub fn terminal_reason(&self, state: &CartState, step_count: usize) -> Option<TerminalReason> {
        if state.theta.abs() > self.angle_limit {
            Some(TerminalReason::Angle)
        } else if state.x.abs() > self.position_limit {
            Some(TerminalReason::Position)
        } else if step_count >= self.max_steps {
            Some(TerminalReason::Cap)
        } else {
            None
        }
    }

    pub fn is_terminal(&self, state: &CartState, step_count: usize) -> bool {
        self.terminal_reason(state, step_count).is_some()
    }

    pub fn sample_initial<R: Rng + ?Sized>(&self, rng: &mut R) -> CartState {
        let r = self.init_range;
        let mut draw = || rng.random_range(-r..r);
        CartState {
            x: draw(),
            v: draw(),
            theta: draw(),
            omega: draw(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepOutcome {
    pub state: CartState,
    pub terminal: Option<TerminalReason>,
}

/// Stateful environment instance: current state plus step counter.
#[derive(Clone, Debug)]
pub struct CartPole {
    config: EnvConfig,
    state: CartState,
    steps: usize,
}

impl CartPole {
    pub fn new(config: EnvConfig) -> Self {
        Self {
            config,
            state: CartState::default(),
            steps: 0,
        }
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn state(&self) -> CartState {
        self.state
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn reset<R: Rng + ?Sized>(&mut self, rng: &mut R) -> CartState {
        self.state = self.config.sample_initial(rng);
        self.steps = 0;
        self.state
    }

    /// Places the environment at a given state with the step counter zeroed.
    pub fn reset_to(&mut self, state: CartState) {
        self.state = state;
        self.steps = 0;
    }

    pub fn step(&mut self, action: Action) -> Result<StepOutcome> {
        self.state = self.config.transition(self.state, action)?;
        self.steps += 1;
        Ok(StepOutcome {
            state: self.state,
            terminal: self.config.terminal_reason(&self.state, self.steps),
        })
    }
}
