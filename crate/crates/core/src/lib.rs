//! Control from a generative model of the future.
//!
//! A recurrent auto-encoder learns the joint distribution of the next few
//! (action, state) pairs of a cart-pole, conditioned on the current state.
//! At run time actions come from gradient descent on its latent space
//! against a cost that can be swapped at any moment without retraining.

pub mod autodiff;
pub mod cartpole;
pub mod checkpoint;
pub mod config;
pub mod controller;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod selftest;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::Tensor;
