//! Recurrent auto-encoder over future (action, state) windows.
//!
//! The encoder maps a flattened window to a latent point. The decoder maps
//! (latent, current state) back to a window, so the same latent point can
//! decode differently depending on where the cart currently is. Training
//! iterates encode -> noise -> decode `n_recurrent` times end-to-end.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

use crate::autodiff::{AdamConfig, AdamState, Graph, NodeId};
use crate::cartpole::CartState;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Components per window step: the action followed by the 4 state values.
pub const STEP_DIM: usize = 5;
pub const STATE_DIM: usize = 4;

/// Which recurrent reconstructions enter the loss.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LossMode {
    /// Mean over all `n_recurrent` reconstructions.
    AllIterations,
    /// Only the last reconstruction.
    FinalOnly,
}

impl LossMode {
    pub fn as_str(self) -> &'static str {
        match self {
            LossMode::AllIterations => "all",
            LossMode::FinalOnly => "final",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "all" => Some(LossMode::AllIterations),
            "final" => Some(LossMode::FinalOnly),
            _ => None,
        }
    }
}

/// How squared reconstruction errors are reduced within one window.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorReduction {
    /// Summed over the window's components, then averaged over the batch.
    Window,
    /// Averaged over every component of the batch.
    Element,
}

impl ErrorReduction {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorReduction::Window => "window",
            ErrorReduction::Element => "element",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "window" => Some(ErrorReduction::Window),
            "element" => Some(ErrorReduction::Element),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NetConfig {
    /// Steps per generated future window.
    pub n_future: usize,
    pub n_latent: usize,
    pub n_hidden: usize,
    /// Std of the Gaussian noise added to latents during training.
    pub sigma: f64,
    pub n_recurrent: usize,
    pub l1_scale: f64,
    /// Factor applied to the x and theta sensors before they reach the net.
    pub sensor_scale: f64,
    pub loss_mode: LossMode,
    pub error_reduction: ErrorReduction,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            n_future: 16,
            n_latent: 2,
            n_hidden: 256,
            sigma: 0.2,
            n_recurrent: 7,
            l1_scale: 5e-4,
            sensor_scale: 10.0,
            loss_mode: LossMode::AllIterations,
            error_reduction: ErrorReduction::Window,
        }
    }
}

impl NetConfig {
    pub fn validate(&self) -> Result<()> {
        for (key, v) in [
            ("net.n_future", self.n_future),
            ("net.n_latent", self.n_latent),
            ("net.n_hidden", self.n_hidden),
            ("net.n_recurrent", self.n_recurrent),
        ] {
            if v == 0 {
                return Err(Error::invalid(key, v, ">= 1"));
            }
        }
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return Err(Error::invalid("net.sigma", self.sigma, ">= 0"));
        }
        if !(self.l1_scale.is_finite() && self.l1_scale >= 0.0) {
            return Err(Error::invalid("net.l1_scale", self.l1_scale, ">= 0"));
        }
        if !(self.sensor_scale.is_finite() && self.sensor_scale > 0.0) {
            return Err(Error::invalid("net.sensor_scale", self.sensor_scale, "> 0"));
        }
        Ok(())
    }

    pub fn window_len(&self) -> usize {
        self.n_future * STEP_DIM
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Representation {
    Raw,
    Scaled,
}

/// One (action, resulting state) entry of a window. The action is always in
/// encoded form (-1 left, +1 right for recorded data; anything for model
/// output).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WindowStep {
    pub action: f64,
    pub state: [f64; STATE_DIM],
}

#[derive(Clone, Debug, PartialEq)]
pub struct FutureWindow {
    pub steps: Vec<WindowStep>,
    pub representation: Representation,
}

impl FutureWindow {
    pub fn from_flat(data: &[f64], representation: Representation) -> Self {
        let steps = data
            .chunks_exact(STEP_DIM)
            .map(|c| WindowStep {
                action: c[0],
                state: [c[1], c[2], c[3], c[4]],
            })
            .collect();
        Self { steps, representation }
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.steps.len() * STEP_DIM);
        for s in &self.steps {
            out.push(s.action);
            out.extend_from_slice(&s.state);
        }
        out
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn final_state(&self) -> Option<[f64; STATE_DIM]> {
        self.steps.last().map(|s| s.state)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        match self.representation {
            Representation::Scaled => self.clone(),
            Representation::Raw => Self {
                steps: self
                    .steps
                    .iter()
                    .map(|s| WindowStep {
                        action: s.action,
                        state: scale_state(s.state, factor),
                    })
                    .collect(),
                representation: Representation::Scaled,
            },
        }
    }

    pub fn unscaled(&self, factor: f64) -> Self {
        match self.representation {
            Representation::Raw => self.clone(),
            Representation::Scaled => Self {
                steps: self
                    .steps
                    .iter()
                    .map(|s| WindowStep {
                        action: s.action,
                        state: unscale_state(s.state, factor),
                    })
                    .collect(),
                representation: Representation::Raw,
            },
        }
    }
}

/// Multiplies x and theta by `factor`; velocities pass through.
pub fn scale_state(s: [f64; STATE_DIM], factor: f64) -> [f64; STATE_DIM] {
    [s[0] * factor, s[1], s[2] * factor, s[3]]
}

pub fn unscale_state(s: [f64; STATE_DIM], factor: f64) -> [f64; STATE_DIM] {
    [s[0] / factor, s[1], s[2] / factor, s[3]]
}

pub fn scale_cart_state(s: CartState, factor: f64) -> [f64; STATE_DIM] {
    scale_state(s.to_array(), factor)
}

#[derive(Clone, Debug, PartialEq)]
pub struct LatentVector(pub Vec<f64>);

impl LatentVector {
    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

/// `z + sigma * n` with `n` standard normal per component.
pub fn inject_noise<R: Rng + ?Sized>(z: &LatentVector, sigma: f64, rng: &mut R) -> LatentVector {
    LatentVector(
        z.0.iter()
            .map(|v| {
                let n: f64 = StandardNormal.sample(rng);
                v + sigma * n
            })
            .collect(),
    )
}

/// Scaled training batch: conditioning states `[batch, 4]` and target
/// windows `[batch, n_future * 5]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub current: Tensor,
    pub windows: Tensor,
}

impl Batch {
    /// Builds a scaled batch from raw (state, window) samples.
    pub fn from_samples(samples: &[(CartState, FutureWindow)], sensor_scale: f64) -> Result<Self> {
        let n = samples.len();
        let width = samples.first().map(|(_, w)| w.len() * STEP_DIM).unwrap_or(0);
        let mut current = Vec::with_capacity(n * STATE_DIM);
        let mut windows = Vec::with_capacity(n * width);
        for (s, w) in samples {
            if w.len() * STEP_DIM != width {
                return Err(Error::ShapeMismatch {
                    op: "batch windows",
                    left: vec![width],
                    right: vec![w.len() * STEP_DIM],
                });
            }
            current.extend_from_slice(&scale_cart_state(*s, sensor_scale));
            windows.extend(w.scaled(sensor_scale).to_flat());
        }
        Ok(Self {
            current: Tensor::matrix(n, STATE_DIM, current)?,
            windows: Tensor::matrix(n, width, windows)?,
        })
    }

    pub fn len(&self) -> usize {
        self.current.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

const ENCODER_LAYERS: usize = 4;
const DECODER_LAYERS: usize = 4;

/// Encoder and decoder weights plus their Adam moments.
///
/// Tensor order: `enc0..enc3` then `dec0..dec3`, each as (weight, bias).
/// Weights are `[out, in]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub net: NetConfig,
    pub tensors: Vec<Tensor>,
    pub names: Vec<String>,
    pub adam: AdamState,
}

fn layer_dims(net: &NetConfig) -> Vec<(String, usize, usize)> {
    let h = net.n_hidden;
    let w = net.window_len();
    vec![
        ("enc0".to_string(), w, h),
        ("enc1".to_string(), h, h),
        ("enc2".to_string(), h, h),
        ("enc3".to_string(), h, net.n_latent),
        ("dec0".to_string(), net.n_latent + STATE_DIM, h),
        ("dec1".to_string(), h, h),
        ("dec2".to_string(), h, h),
        ("dec3".to_string(), h, w),
    ]
}

impl ModelParams {
    /// Glorot-uniform weights, zero biases.
    pub fn init<R: Rng + ?Sized>(net: NetConfig, adam: AdamConfig, rng: &mut R) -> Result<Self> {
        net.validate()?;
        let mut tensors = Vec::new();
        let mut names = Vec::new();
        for (name, fan_in, fan_out) in layer_dims(&net) {
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let dist = Uniform::new_inclusive(-limit, limit).expect("finite limit");
            let w: Vec<f64> = (0..fan_in * fan_out).map(|_| dist.sample(rng)).collect();
            tensors.push(Tensor::matrix(fan_out, fan_in, w)?);
            tensors.push(Tensor::vector(vec![0.0; fan_out]));
            names.push(format!("{name}.w"));
            names.push(format!("{name}.b"));
        }
        let adam = AdamState::new(adam, &tensors);
        Ok(Self {
            net,
            tensors,
            names,
            adam,
        })
    }

    /// All-zero parameters.
    pub fn zeros(net: NetConfig, adam: AdamConfig) -> Result<Self> {
        net.validate()?;
        let mut tensors = Vec::new();
        let mut names = Vec::new();
        for (name, fan_in, fan_out) in layer_dims(&net) {
            tensors.push(Tensor::zeros(&[fan_out, fan_in]));
            tensors.push(Tensor::zeros(&[fan_out]));
            names.push(format!("{name}.w"));
            names.push(format!("{name}.b"));
        }
        let adam = AdamState::new(adam, &tensors);
        Ok(Self {
            net,
            tensors,
            names,
            adam,
        })
    }

    /// Checks tensor shapes against the network configuration.
    pub fn validate(&self) -> Result<()> {
        let dims = layer_dims(&self.net);
        if self.tensors.len() != 2 * dims.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} tensors, found {}",
                2 * dims.len(),
                self.tensors.len()
            )));
        }
        for (i, (_, fan_in, fan_out)) in dims.iter().enumerate() {
            let (w, b) = (&self.tensors[2 * i], &self.tensors[2 * i + 1]);
            if w.shape() != [*fan_out, *fan_in] || b.shape() != [*fan_out] {
                return Err(Error::ShapeMismatch {
                    op: "model layer",
                    left: vec![*fan_out, *fan_in],
                    right: w.shape().to_vec(),
                });
            }
        }
        Ok(())
    }

    /// Indices of weight matrices (biases excluded), the L1 penalty's scope.
    fn weight_indices(&self) -> impl Iterator<Item = usize> {
        (0..ENCODER_LAYERS + DECODER_LAYERS).map(|l| 2 * l)
    }

    pub fn weight_l1(&self) -> f64 {
        self.weight_indices().map(|i| self.tensors[i].l1_norm()).sum()
    }

    /// Bit-level digest of all weights and optimizer state.
    pub fn fingerprint(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        let all = self
            .tensors
            .iter()
            .chain(&self.adam.first)
            .chain(&self.adam.second);
        for t in all {
            for v in t.data() {
                h.update(v.to_bits().to_le_bytes());
            }
        }
        h.update(self.adam.step.to_le_bytes());
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Registers every parameter as a borrowed leaf.
    pub fn leaves<'a>(&'a self, g: &mut Graph<'a>) -> Vec<NodeId> {
        self.tensors.iter().map(|t| g.leaf_ref(t)).collect()
    }

    fn stack(&self, g: &mut Graph<'_>, p: &[NodeId], first_layer: usize, x: NodeId) -> Result<NodeId> {
        let mut h = x;
        for l in 0..4 {
            let idx = 2 * (first_layer + l);
            h = g.affine(p[idx], p[idx + 1], h)?;
            if l < 3 {
                h = g.tanh(h)?;
            }
        }
        Ok(h)
    }

    /// Encoder on a graph: scaled windows `[batch, n_future*5]` to latents.
    pub fn encoder_graph(&self, g: &mut Graph<'_>, p: &[NodeId], windows: NodeId) -> Result<NodeId> {
        self.stack(g, p, 0, windows)
    }

    /// Decoder on a graph: latents and scaled current states to windows.
    pub fn decoder_graph(&self, g: &mut Graph<'_>, p: &[NodeId], z: NodeId, current: NodeId) -> Result<NodeId> {
        let input = g.concat(z, current)?;
        self.stack(g, p, ENCODER_LAYERS, input)
    }

    /// Deterministic encoding of one scaled window.
    pub fn encode(&self, window: &FutureWindow) -> Result<LatentVector> {
        if window.representation != Representation::Scaled || window.len() != self.net.n_future {
            return Err(Error::ShapeMismatch {
                op: "encode",
                left: vec![self.net.n_future],
                right: vec![window.len()],
            });
        }
        let mut g = Graph::new();
        let p = self.leaves(&mut g);
        let x = g.leaf(Tensor::vector(window.to_flat()));
        let z = self.encoder_graph(&mut g, &p, x)?;
        Ok(LatentVector(g.value(z).data().to_vec()))
    }

    /// Decodes a latent point conditioned on a scaled current state.
    pub fn decode(&self, z: &LatentVector, current_scaled: [f64; STATE_DIM]) -> Result<FutureWindow> {
        if z.dim() != self.net.n_latent {
            return Err(Error::ShapeMismatch {
                op: "decode",
                left: vec![self.net.n_latent],
                right: vec![z.dim()],
            });
        }
        let mut g = Graph::new();
        let p = self.leaves(&mut g);
        let zi = g.leaf(Tensor::vector(z.0.clone()));
        let si = g.leaf(Tensor::vector(current_scaled.to_vec()));
        let w = self.decoder_graph(&mut g, &p, zi, si)?;
        Ok(FutureWindow::from_flat(g.value(w).data(), Representation::Scaled))
    }

    /// Iterates encode -> noise -> decode starting from `window`.
    pub fn recurrent_reconstruct<R: Rng + ?Sized>(
        &self,
        window: &FutureWindow,
        current_scaled: [f64; STATE_DIM],
        n_recurrent: usize,
        sigma: f64,
        rng: &mut R,
    ) -> Result<Vec<FutureWindow>> {
        let mut out = Vec::with_capacity(n_recurrent);
        let mut w = window.clone();
        for _ in 0..n_recurrent.max(1) {
            let z = inject_noise(&self.encode(&w)?, sigma, rng);
            w = self.decode(&z, current_scaled)?;
            out.push(w.clone());
        }
        Ok(out)
    }

    /// Records the full training objective on `g`.
    ///
    /// `noise` holds one `[batch, n_latent]` sample per recurrent iteration.
    /// Returns the loss node and the parameter leaves.
    pub fn loss_graph<'a>(
        &'a self,
        g: &mut Graph<'a>,
        batch: &'a Batch,
        noise: Vec<Tensor>,
    ) -> Result<(NodeId, Vec<NodeId>)> {
        let p = self.leaves(g);
        let target = g.leaf_ref(&batch.windows);
        let current = g.leaf_ref(&batch.current);
        let iterations = noise.len();
        let mut w = target;
        let mut loss: Option<NodeId> = None;
        for (i, n) in noise.into_iter().enumerate() {
            let z = self.encoder_graph(g, &p, w)?;
            let z = g.add_noise(z, n)?;
            w = self.decoder_graph(g, &p, z, current)?;
            let counted = match self.net.loss_mode {
                LossMode::AllIterations => true,
                LossMode::FinalOnly => i + 1 == iterations,
            };
            if counted {
                let mse = g.mse(w, target)?;
                let per_window = match self.net.error_reduction {
                    ErrorReduction::Window => self.net.window_len() as f64,
                    ErrorReduction::Element => 1.0,
                };
                let weight = match self.net.loss_mode {
                    LossMode::AllIterations => per_window / iterations as f64,
                    LossMode::FinalOnly => per_window,
                };
                let term = g.scale(mse, weight)?;
                loss = Some(match loss {
                    Some(acc) => g.add(acc, term)?,
                    None => term,
                });
            }
        }
        let weights: Vec<NodeId> = self.weight_indices().map(|i| p[i]).collect();
        let l1 = g.l1(&weights, self.net.l1_scale)?;
        let total = match loss {
            Some(acc) => g.add(acc, l1)?,
            None => l1,
        };
        Ok((total, p))
    }

    fn draw_noise<R: Rng + ?Sized>(&self, rows: usize, rng: &mut R) -> Vec<Tensor> {
        let n = self.net.n_latent;
        (0..self.net.n_recurrent)
            .map(|_| {
                let data = (0..rows * n)
                    .map(|_| {
                        let v: f64 = StandardNormal.sample(rng);
                        self.net.sigma * v
                    })
                    .collect();
                Tensor::matrix(rows, n, data).expect("noise shape")
            })
            .collect()
    }

    /// Training objective on a batch with freshly drawn latent noise.
    pub fn training_loss<R: Rng + ?Sized>(&self, batch: &Batch, rng: &mut R) -> Result<f64> {
        let noise = self.draw_noise(batch.len(), rng);
        let mut g = Graph::new();
        let (loss, _) = self.loss_graph(&mut g, batch, noise)?;
        Ok(g.value(loss).item())
    }

    /// One forward/backward/Adam update. Returns the pre-update loss.
    pub fn train_step<R: Rng + ?Sized>(&mut self, batch: &Batch, rng: &mut R) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::invalid("batch", 0, "a nonempty batch"));
        }
        if batch.windows.cols() != self.net.window_len() {
            return Err(Error::ShapeMismatch {
                op: "train_step",
                left: vec![self.net.window_len()],
                right: batch.windows.shape().to_vec(),
            });
        }
        let noise = self.draw_noise(batch.len(), rng);
        let (loss, grads) = {
            let mut g = Graph::new();
            let (loss, p) = self.loss_graph(&mut g, batch, noise)?;
            let value = g.value(loss).item();
            if !value.is_finite() {
                return Err(Error::NonFinite(format!(
                    "training loss {value}; {}",
                    batch_stats(batch)
                )));
            }
            (value, g.backward(loss, &p)?)
        };
        self.adam.update(&mut self.tensors, &grads, &self.names)?;
        Ok(loss)
    }
}

fn batch_stats(batch: &Batch) -> String {
    let describe = |t: &Tensor| {
        let d = t.data();
        let finite = d.iter().filter(|v| v.is_finite()).count();
        let (lo, hi) = d
            .iter()
            .filter(|v| v.is_finite())
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        let mean = d.iter().filter(|v| v.is_finite()).sum::<f64>() / finite.max(1) as f64;
        format!("{finite}/{} finite, min {lo:.4}, max {hi:.4}, mean {mean:.4}", d.len())
    };
    format!(
        "batch of {}: states [{}], windows [{}]",
        batch.len(),
        describe(&batch.current),
        describe(&batch.windows)
    )
}
