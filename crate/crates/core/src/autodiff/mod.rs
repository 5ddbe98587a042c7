//! Reverse-mode differentiation over dense `f64` tensors and the Adam
//! optimizer used to train the generative model.

mod adam;
mod gradcheck;
mod graph;

pub use adam::{AdamConfig, AdamState};
pub use gradcheck::finite_difference_check;
pub use graph::{forward_affine, DeviationTerm, Graph, NodeId, Penalty};
