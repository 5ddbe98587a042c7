//! Control by gradient descent on the generative model's latent space.
//!
//! A cost over the final predicted state of a decoded window is minimized
//! with respect to the latent point. The optimum is carried over between
//! replans, and the plan's action values are read as probabilities of
//! pushing right.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::autodiff::{DeviationTerm, Graph, Penalty};
use crate::cartpole::{Action, CartState};
use crate::error::{Error, Result};
use crate::model::{scale_cart_state, FutureWindow, LatentVector, ModelParams, Representation, STEP_DIM};
use crate::tensor::Tensor;

/// Target cart position as a function of the absolute step index.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Target {
    Constant(f64),
    /// `amplitude * sin(2 pi t / period)`
    Sinusoid { amplitude: f64, period: f64 },
}

impl Target {
    pub fn at(&self, t: usize) -> f64 {
        match *self {
            Target::Constant(x) => x,
            Target::Sinusoid { amplitude, period } => {
                amplitude * (2.0 * std::f64::consts::PI * t as f64 / period).sin()
            }
        }
    }
}

/// Cost weights and targets. Hot-swappable: nothing in the model depends on it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RewardSpec {
    pub gamma_x: f64,
    pub gamma_v: f64,
    pub gamma_theta: f64,
    pub gamma_omega: f64,
    pub target_x: Target,
    pub theta0: f64,
}

impl Default for RewardSpec {
    fn default() -> Self {
        Self {
            gamma_x: 1.2,
            gamma_v: 1.8,
            gamma_theta: 3.0,
            gamma_omega: 0.8,
            target_x: Target::Constant(0.0),
            theta0: 0.0,
        }
    }
}

impl RewardSpec {
    pub fn validate(&self) -> Result<()> {
        for (key, w) in [
            ("reward.gamma_x", self.gamma_x),
            ("reward.gamma_v", self.gamma_v),
            ("reward.gamma_theta", self.gamma_theta),
            ("reward.gamma_omega", self.gamma_omega),
        ] {
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::invalid(key, w, "finite and >= 0"));
            }
        }
        if !self.theta0.is_finite() {
            return Err(Error::invalid("reward.theta0", self.theta0, "finite"));
        }
        match self.target_x {
            Target::Constant(x) if !x.is_finite() => Err(Error::invalid("reward.target", x, "finite")),
            Target::Sinusoid { amplitude, .. } if !amplitude.is_finite() => {
                Err(Error::invalid("reward.target", amplitude, "finite"))
            }
            Target::Sinusoid { period, .. } if !(period.is_finite() && period > 0.0) => {
                Err(Error::invalid("reward.target", period, "> 0"))
            }
            _ => Ok(()),
        }
    }

    /// Cost terms over the last step of a scaled, flattened window.
    pub fn deviation_terms(&self, n_future: usize, sensor_scale: f64, t_end: usize) -> [DeviationTerm; 4] {
        let base = (n_future - 1) * STEP_DIM;
        let term = |offset: usize, scale: f64, target: f64, weight: f64, penalty: Penalty| DeviationTerm {
            col: base + offset,
            scale,
            target,
            weight,
            penalty,
        };
        [
            term(1, 1.0 / sensor_scale, self.target_x.at(t_end), self.gamma_x, Penalty::Abs),
            term(2, 1.0, 0.0, self.gamma_v, Penalty::Square),
            term(3, 1.0 / sensor_scale, self.theta0, self.gamma_theta, Penalty::Square),
            term(4, 1.0, 0.0, self.gamma_omega, Penalty::Square),
        ]
    }
}

/// Cost of a raw window: the weighted deviation of its final state, with the
/// position target sampled at `t_end`.
pub fn cost_q(window: &FutureWindow, spec: &RewardSpec, t_end: usize) -> f64 {
    debug_assert_eq!(window.representation, Representation::Raw);
    let Some([x, v, theta, omega]) = window.final_state() else {
        return 0.0;
    };
    spec.gamma_x * (x - spec.target_x.at(t_end)).abs()
        + spec.gamma_v * v * v
        + spec.gamma_theta * (theta - spec.theta0).powi(2)
        + spec.gamma_omega * omega * omega
}

/// Whether the normalized cost-gradient term lowers (`Descend`) or raises
/// (`Ascend`) the cost.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DescentSign {
    Descend,
    Ascend,
}

impl DescentSign {
    pub fn as_str(self) -> &'static str {
        match self {
            DescentSign::Descend => "descend",
            DescentSign::Ascend => "ascend",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "descend" => Some(DescentSign::Descend),
            "ascend" => Some(DescentSign::Ascend),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DescentConfig {
    /// L1-normalized step length.
    pub alpha: f64,
    /// Pull toward the origin.
    pub beta: f64,
    pub steps: usize,
    pub sign: DescentSign,
}

impl Default for DescentConfig {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            beta: 0.001,
            steps: 100,
            sign: DescentSign::Descend,
        }
    }
}

impl DescentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(Error::invalid("descent.alpha", self.alpha, "> 0"));
        }
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(Error::invalid("descent.beta", self.beta, ">= 0"));
        }
        if self.steps == 0 {
            return Err(Error::invalid("descent.steps", 0, ">= 1"));
        }
        Ok(())
    }
}

/// Cost and gradient of the cost with respect to the latent point.
pub struct CostEval {
    pub q: f64,
    pub grad: Vec<f64>,
    /// Decoded window in scaled form.
    pub window: Vec<f64>,
}

/// Decodes `z` against `current_scaled` and differentiates the cost.
pub fn evaluate_cost(
    params: &ModelParams,
    z: &LatentVector,
    current_scaled: [f64; 4],
    spec: &RewardSpec,
    t_end: usize,
) -> Result<CostEval> {
    let net = &params.net;
    let mut g = Graph::new();
    let p = params.leaves(&mut g);
    let zi = g.leaf(Tensor::vector(z.0.clone()));
    let si = g.leaf(Tensor::vector(current_scaled.to_vec()));
    let w = params.decoder_graph(&mut g, &p, zi, si)?;
    let q = g.deviation(w, &spec.deviation_terms(net.n_future, net.sensor_scale, t_end))?;
    let grad = g.backward(q, &[zi])?.remove(0).into_data();
    Ok(CostEval {
        q: g.value(q).item(),
        grad,
        window: g.value(w).data().to_vec(),
    })
}

/// The update applied to `z` for a given cost gradient.
pub fn latent_update(z: &LatentVector, grad: &[f64], cfg: &DescentConfig) -> LatentVector {
    let norm: f64 = grad.iter().map(|g| g.abs()).sum();
    let direction = match cfg.sign {
        DescentSign::Descend => -1.0,
        DescentSign::Ascend => 1.0,
    };
    LatentVector(
        z.0.iter()
            .zip(grad)
            .map(|(&zi, &gi)| {
                let step = if norm > 0.0 { direction * cfg.alpha * gi / norm } else { 0.0 };
                zi + step - cfg.beta * zi
            })
            .collect(),
    )
}

#[derive(Clone, Debug, PartialEq)]
pub struct Descent {
    pub z: LatentVector,
    /// Plan decoded at `z`, raw form.
    pub plan: FutureWindow,
    pub q: f64,
    /// Cost before each step and after the last, `steps + 1` values.
    pub trace: Vec<f64>,
}

/// Runs `cfg.steps` latent updates from `z0` and returns the final latent,
/// its decoded plan and cost. The position target is read at `t + n_future`,
/// the absolute index of the plan's final state.
pub fn descend_latent(
    z0: &LatentVector,
    current: CartState,
    params: &ModelParams,
    spec: &RewardSpec,
    cfg: &DescentConfig,
    t: usize,
) -> Result<Descent> {
    let net = &params.net;
    if z0.dim() != net.n_latent {
        return Err(Error::ShapeMismatch {
            op: "descend_latent",
            left: vec![net.n_latent],
            right: vec![z0.dim()],
        });
    }
    let current_scaled = scale_cart_state(current, net.sensor_scale);
    let t_end = t + net.n_future;
    let mut z = z0.clone();
    let mut trace = Vec::with_capacity(cfg.steps + 1);
    for _ in 0..cfg.steps {
        let eval = evaluate_cost(params, &z, current_scaled, spec, t_end)?;
        trace.push(eval.q);
        z = latent_update(&z, &eval.grad, cfg);
        if !z.is_finite() {
            return Err(Error::NonFinite(format!("latent vector {:?}", z.0)));
        }
    }
    let last = evaluate_cost(params, &z, current_scaled, spec, t_end)?;
    trace.push(last.q);
    let plan = FutureWindow::from_flat(&last.window, Representation::Scaled).unscaled(net.sensor_scale);
    Ok(Descent {
        z,
        plan,
        q: last.q,
        trace,
    })
}

/// Probability of pushing right for a decoded action value.
pub fn action_probability(a: f64) -> f64 {
    ((a + 1.0) / 2.0).clamp(0.0, 1.0)
}

pub fn sample_action<R: Rng + ?Sized>(p_right: f64, rng: &mut R) -> Action {
    if rng.random::<f64>() < p_right {
        Action::Right
    } else {
        Action::Left
    }
}

pub fn init_latent<R: Rng + ?Sized>(n_latent: usize, rng: &mut R) -> LatentVector {
    LatentVector((0..n_latent).map(|_| StandardNormal.sample(rng)).collect())
}

/// Per-episode controller memory.
#[derive(Clone, Debug, PartialEq)]
pub struct ControllerState {
    /// Warm-start latent, the optimum of the last replan.
    pub z: LatentVector,
    /// Latest optimized plan, raw form.
    pub plan: Option<FutureWindow>,
    /// Cost of the latest plan.
    pub q: f64,
    pub cursor: usize,
    /// Frames seen; replanning happens on even frames.
    pub frame: u64,
    pub replans: u64,
}

impl ControllerState {
    pub fn new(z: LatentVector) -> Self {
        Self {
            z,
            plan: None,
            q: f64::NAN,
            cursor: 0,
            frame: 0,
            replans: 0,
        }
    }

    /// Fresh state with a random initial latent.
    pub fn fresh<R: Rng + ?Sized>(n_latent: usize, rng: &mut R) -> Self {
        Self::new(init_latent(n_latent, rng))
    }
}

/// Chooses the action for the observed state at step `t`.
///
/// Even frames replan from the carried latent; odd frames consume the next
/// action of the stored plan.
pub fn policy_step<R: Rng + ?Sized>(
    cs: &mut ControllerState,
    observed: CartState,
    params: &ModelParams,
    spec: &RewardSpec,
    cfg: &DescentConfig,
    t: usize,
    rng: &mut R,
) -> Result<Action> {
    if cs.frame % 2 == 0 || cs.plan.is_none() {
        let d = descend_latent(&cs.z, observed, params, spec, cfg, t)?;
        cs.z = d.z;
        cs.q = d.q;
        cs.plan = Some(d.plan);
        cs.cursor = 0;
        cs.replans += 1;
    }
    let plan = cs.plan.as_ref().ok_or(Error::EmptyPlan("controller has no plan"))?;
    let step = plan
        .steps
        .get(cs.cursor)
        .ok_or(Error::EmptyPlan("plan cursor ran past the end of the plan"))?;
    let action = sample_action(action_probability(step.action), rng);
    cs.cursor = (cs.cursor + 1).min(plan.len().saturating_sub(1));
    cs.frame += 1;
    Ok(action)
}
