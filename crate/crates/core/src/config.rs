//! Flat `key = value` run configuration.
//!
//! Nested fields use dotted keys (`net.n_latent`). `#` starts a comment.
//! The same dialect is used for config files and run manifests; a manifest
//! additionally carries `hash` and `artifact_version`.

use std::fmt::Display;
use std::str::FromStr;

use crate::controller::{DescentSign, Target};
use crate::error::{Error, Result};
use crate::harness::{Padding, TrainRunConfig, TransferConfig};
use crate::model::{ErrorReduction, LossMode};

pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Keys that only appear in manifests and are not configuration.
const META_KEYS: [&str; 2] = ["hash", "artifact_version"];

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfiguration {
    pub train: TrainRunConfig,
    pub transfer: TransferConfig,
    pub output_dir: String,
    /// Write a checkpoint every this many cycles; 0 writes only the final one.
    pub checkpoint_every: usize,
}

impl Default for RunConfiguration {
    fn default() -> Self {
        Self {
            train: TrainRunConfig::default(),
            transfer: TransferConfig::default(),
            output_dir: "runs/latest".to_string(),
            checkpoint_every: 0,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str, expected: &str) -> Result<T> {
    value.trim().parse().map_err(|_| Error::invalid(key, value, expected))
}

fn parse_list(key: &str, value: &str) -> Result<Vec<f64>> {
    value
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| parse(key, s, "a comma-separated list of numbers"))
        .collect()
}

fn fmt_list(values: &[f64]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

impl TrainRunConfig {
    /// Sets one dotted key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        const NUM: &str = "a number";
        const INT: &str = "a non-negative integer";
        let v = value.trim();
        match key {
            "seed" => self.seed = parse(key, v, INT)?,
            "net.n_future" => self.net.n_future = parse(key, v, INT)?,
            "net.n_latent" => self.net.n_latent = parse(key, v, INT)?,
            "net.n_hidden" => self.net.n_hidden = parse(key, v, INT)?,
            "net.sigma" => self.net.sigma = parse(key, v, NUM)?,
            "net.n_recurrent" => self.net.n_recurrent = parse(key, v, INT)?,
            "net.l1_scale" => self.net.l1_scale = parse(key, v, NUM)?,
            "net.sensor_scale" => self.net.sensor_scale = parse(key, v, NUM)?,
            "net.error_reduction" => {
                self.net.error_reduction =
                    ErrorReduction::parse(v).ok_or_else(|| Error::invalid(key, v, "`window` or `element`"))?
            }
            "net.loss_mode" => {
                self.net.loss_mode = LossMode::parse(v).ok_or_else(|| Error::invalid(key, v, "`all` or `final`"))?
            }
            "train.learning_rate" => self.adam.learning_rate = parse(key, v, NUM)?,
            "train.beta1" => self.adam.beta1 = parse(key, v, NUM)?,
            "train.beta2" => self.adam.beta2 = parse(key, v, NUM)?,
            "train.epsilon" => self.adam.epsilon = parse(key, v, NUM)?,
            "train.steps_per_cycle" => self.steps_per_cycle = parse(key, v, INT)?,
            "train.episodes_per_cycle" => self.episodes_per_cycle = parse(key, v, INT)?,
            "train.batch_size" => self.batch_size = parse(key, v, INT)?,
            "train.episode_budget" => self.episode_budget = parse(key, v, INT)?,
            "train.padding" => {
                self.padding = Padding::parse(v).ok_or_else(|| Error::invalid(key, v, "`freeze` or `skip`"))?
            }
            "train.stop_on_success" => self.stop_on_success = parse(key, v, "`true` or `false`")?,
            "descent.alpha" => self.descent.alpha = parse(key, v, NUM)?,
            "descent.beta" => self.descent.beta = parse(key, v, NUM)?,
            "descent.steps" => self.descent.steps = parse(key, v, INT)?,
            "descent.sign" => {
                self.descent.sign =
                    DescentSign::parse(v).ok_or_else(|| Error::invalid(key, v, "`descend` or `ascend`"))?
            }
            "reward.gamma_x" => self.reward.gamma_x = parse(key, v, NUM)?,
            "reward.gamma_v" => self.reward.gamma_v = parse(key, v, NUM)?,
            "reward.gamma_theta" => self.reward.gamma_theta = parse(key, v, NUM)?,
            "reward.gamma_omega" => self.reward.gamma_omega = parse(key, v, NUM)?,
            "reward.theta0" => self.reward.theta0 = parse(key, v, NUM)?,
            "reward.target" => self.reward.target_x = parse_target(key, v)?,
            "env.gravity" => self.env.gravity = parse(key, v, NUM)?,
            "env.cart_mass" => self.env.cart_mass = parse(key, v, NUM)?,
            "env.pole_mass" => self.env.pole_mass = parse(key, v, NUM)?,
            "env.pole_half_length" => self.env.pole_half_length = parse(key, v, NUM)?,
            "env.force" => self.env.force = parse(key, v, NUM)?,
            "env.tau" => self.env.tau = parse(key, v, NUM)?,
            "env.angle_limit" => self.env.angle_limit = parse(key, v, NUM)?,
            "env.position_limit" => self.env.position_limit = parse(key, v, NUM)?,
            "env.max_steps" => self.env.max_steps = parse(key, v, INT)?,
            "env.init_range" => self.env.init_range = parse(key, v, NUM)?,
            _ => return Err(Error::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    /// Every key with its canonical textual value, in a fixed order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        fn s(v: impl Display) -> String {
            v.to_string()
        }
        vec![
            ("seed", s(self.seed)),
            ("net.n_future", s(self.net.n_future)),
            ("net.n_latent", s(self.net.n_latent)),
            ("net.n_hidden", s(self.net.n_hidden)),
            ("net.sigma", s(self.net.sigma)),
            ("net.n_recurrent", s(self.net.n_recurrent)),
            ("net.l1_scale", s(self.net.l1_scale)),
            ("net.sensor_scale", s(self.net.sensor_scale)),
            ("net.loss_mode", s(self.net.loss_mode.as_str())),
            ("net.error_reduction", s(self.net.error_reduction.as_str())),
            ("train.learning_rate", s(self.adam.learning_rate)),
            ("train.beta1", s(self.adam.beta1)),
            ("train.beta2", s(self.adam.beta2)),
            ("train.epsilon", s(self.adam.epsilon)),
            ("train.steps_per_cycle", s(self.steps_per_cycle)),
            ("train.episodes_per_cycle", s(self.episodes_per_cycle)),
            ("train.batch_size", s(self.batch_size)),
            ("train.episode_budget", s(self.episode_budget)),
            ("train.padding", s(self.padding.as_str())),
            ("train.stop_on_success", s(self.stop_on_success)),
            ("descent.alpha", s(self.descent.alpha)),
            ("descent.beta", s(self.descent.beta)),
            ("descent.steps", s(self.descent.steps)),
            ("descent.sign", s(self.descent.sign.as_str())),
            ("reward.gamma_x", s(self.reward.gamma_x)),
            ("reward.gamma_v", s(self.reward.gamma_v)),
            ("reward.gamma_theta", s(self.reward.gamma_theta)),
            ("reward.gamma_omega", s(self.reward.gamma_omega)),
            ("reward.theta0", s(self.reward.theta0)),
            ("reward.target", format_target(&self.reward.target_x)),
            ("env.gravity", s(self.env.gravity)),
            ("env.cart_mass", s(self.env.cart_mass)),
            ("env.pole_mass", s(self.env.pole_mass)),
            ("env.pole_half_length", s(self.env.pole_half_length)),
            ("env.force", s(self.env.force)),
            ("env.tau", s(self.env.tau)),
            ("env.angle_limit", s(self.env.angle_limit)),
            ("env.position_limit", s(self.env.position_limit)),
            ("env.max_steps", s(self.env.max_steps)),
            ("env.init_range", s(self.env.init_range)),
        ]
    }
}

/// `0.5` for a constant target, `sin:A,T` for `A sin(2 pi t / T)`.
pub fn parse_target(key: &str, v: &str) -> Result<Target> {
    const EXPECTED: &str = "a number or `sin:AMPLITUDE,PERIOD`";
    if let Some(rest) = v.strip_prefix("sin:") {
        let parts = parse_list(key, rest)?;
        match parts.as_slice() {
            [amplitude, period] => Ok(Target::Sinusoid {
                amplitude: *amplitude,
                period: *period,
            }),
            _ => Err(Error::invalid(key, v, EXPECTED)),
        }
    } else {
        Ok(Target::Constant(parse(key, v, EXPECTED)?))
    }
}

pub fn format_target(t: &Target) -> String {
    match t {
        Target::Constant(x) => x.to_string(),
        Target::Sinusoid { amplitude, period } => format!("sin:{amplitude},{period}"),
    }
}

/// Splits config text into `(line, key, value)` triples.
pub fn parse_kv(text: &str) -> Result<Vec<(usize, String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::ConfigSyntax {
            line: i + 1,
            message: format!("expected `key = value`, got `{line}`"),
        })?;
        let key = k.trim();
        if key.is_empty() {
            return Err(Error::ConfigSyntax {
                line: i + 1,
                message: "empty key".to_string(),
            });
        }
        out.push((i + 1, key.to_string(), v.trim().to_string()));
    }
    Ok(out)
}

impl RunConfiguration {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "output_dir" => self.output_dir = v.to_string(),
            "checkpoint_every" => self.checkpoint_every = parse(key, v, "a non-negative integer")?,
            "transfer.amplitudes" => self.transfer.amplitudes = parse_list(key, v)?,
            "transfer.periods" => self.transfer.periods = parse_list(key, v)?,
            "transfer.trials" => self.transfer.trials = parse(key, v, "a non-negative integer")?,
            "transfer.max_steps" => self.transfer.max_steps = parse(key, v, "a non-negative integer")?,
            _ => self.train.set(key, v)?,
        }
        Ok(())
    }

    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let mut out = self.train.entries();
        out.push(("transfer.amplitudes", fmt_list(&self.transfer.amplitudes)));
        out.push(("transfer.periods", fmt_list(&self.transfer.periods)));
        out.push(("transfer.trials", self.transfer.trials.to_string()));
        out.push(("transfer.max_steps", self.transfer.max_steps.to_string()));
        out.push(("output_dir", self.output_dir.clone()));
        out.push(("checkpoint_every", self.checkpoint_every.to_string()));
        out
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.transfer.validate()
    }

    /// Applies a config text on top of `self`. Manifest metadata keys are
    /// accepted and ignored.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (line, key, value) in parse_kv(text)? {
            if META_KEYS.contains(&key.as_str()) {
                continue;
            }
            self.set(&key, &value).map_err(|e| match e {
                Error::UnknownKey(_) | Error::InvalidValue { .. } => Error::ConfigSyntax {
                    line,
                    message: e.to_string(),
                },
                other => other,
            })?;
        }
        Ok(())
    }

    /// Defaults, then the config file text, then `key = value` overrides.
    pub fn from_sources(file_text: Option<&str>, overrides: &[(String, String)]) -> Result<Self> {
        let mut cfg = Self::default();
        if let Some(text) = file_text {
            cfg.apply_text(text)?;
        }
        for (k, v) in overrides {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Canonical text of all configuration keys.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.entries() {
            s.push_str(k);
            s.push_str(" = ");
            s.push_str(&v);
            s.push('\n');
        }
        s
    }

    /// Content hash of the canonical text, excluding where outputs go.
    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        for (k, v) in self.entries() {
            if k == "output_dir" {
                continue;
            }
            h.update(k.as_bytes());
            h.update(b"=");
            h.update(v.as_bytes());
            h.update(b"\n");
        }
        h.finalize().iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    /// Canonical text plus `hash` and `artifact_version`.
    pub fn manifest_text(&self) -> String {
        format!(
            "# genctl run manifest\n{}hash = {}\nartifact_version = {}\n",
            self.to_text(),
            self.hash(),
            ARTIFACT_VERSION
        )
    }
}
