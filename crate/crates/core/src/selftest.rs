//! Finite-difference self-test of the autodiff engine, as run by the
//! `gradcheck` command.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::autodiff::{finite_difference_check, AdamConfig, DeviationTerm, Graph, NodeId, Penalty};
use crate::error::Result;
use crate::model::{Batch, ModelParams, NetConfig};
use crate::tensor::Tensor;

pub const TOLERANCE: f64 = 1e-4;
const EPS: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub max_relative_error: f64,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.max_relative_error < TOLERANCE
    }
}

fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], spread: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-spread..spread)).collect()).expect("shape")
}

/// A two-layer batched net with a concat branch, noise and a mixed head.
fn composite(rng: &mut ChaCha8Rng) -> Result<(Graph<'static>, NodeId, Vec<NodeId>)> {
    let mut g = Graph::new();
    let rows = rng.random_range(1..4);
    let (n_in, n_mid, n_side) = (rng.random_range(2..5), rng.random_range(2..5), rng.random_range(1..3));
    let x = g.leaf(uniform(rng, &[rows, n_in], 1.0));
    let w1 = g.leaf(uniform(rng, &[n_mid, n_in], 0.8));
    let b1 = g.leaf(uniform(rng, &[n_mid], 0.3));
    let side = g.leaf(uniform(rng, &[rows, n_side], 0.5));
    let w2 = g.leaf(uniform(rng, &[3, n_mid + n_side], 0.8));
    let b2 = g.leaf(uniform(rng, &[3], 0.3));
    let target = g.leaf(uniform(rng, &[rows, 3], 1.0));

    let h = g.affine(w1, b1, x)?;
    let h = g.tanh(h)?;
    let noise = uniform(rng, &[rows, n_mid], 0.2);
    let h = g.add_noise(h, noise)?;
    let h = g.concat(h, side)?;
    let y = g.affine(w2, b2, h)?;
    let y = g.scale(y, rng.random_range(0.5..2.0))?;
    let mse = g.mse(y, target)?;
    let reg = g.l1(&[w1, w2], 0.01)?;
    let dev = g.deviation(
        y,
        &[
            DeviationTerm {
                col: 0,
                scale: 1.0,
                target: 4.0,
                weight: 0.7,
                penalty: Penalty::Abs,
            },
            DeviationTerm {
                col: 2,
                scale: 0.5,
                target: 0.1,
                weight: 1.3,
                penalty: Penalty::Square,
            },
        ],
    )?;
    let out = g.add(mse, reg)?;
    let out = g.add(out, dev)?;
    Ok((g, out, vec![x, w1, b1, side, w2, b2, target]))
}

/// Checks `graphs` random composite graphs and the training loss of a tiny
/// network. Each result carries the worst error over all leaves.
pub fn run(graphs: usize, seed: u64) -> Result<Vec<CheckResult>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for i in 0..graphs {
        let (mut g, output, leaves) = composite(&mut rng)?;
        let mut worst: f64 = 0.0;
        for leaf in leaves {
            worst = worst.max(finite_difference_check(&mut g, output, leaf, EPS)?);
        }
        out.push(CheckResult {
            name: format!("composite graph {}", i + 1),
            max_relative_error: worst,
        });
    }

    let net = NetConfig {
        n_future: 3,
        n_hidden: 6,
        n_recurrent: 3,
        ..NetConfig::default()
    };
    let params = ModelParams::init(net, AdamConfig::default(), &mut rng)?;
    let rows = 4;
    let batch = Batch {
        current: uniform(&mut rng, &[rows, 4], 1.0),
        windows: uniform(&mut rng, &[rows, net.window_len()], 1.0),
    };
    let noise = (0..net.n_recurrent)
        .map(|_| {
            let data = (0..rows * net.n_latent)
                .map(|_| {
                    let n: f64 = StandardNormal.sample(&mut rng);
                    net.sigma * n
                })
                .collect();
            Tensor::matrix(rows, net.n_latent, data)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut g = Graph::new();
    let (loss, p) = params.loss_graph(&mut g, &batch, noise)?;
    let mut worst: f64 = 0.0;
    for leaf in p {
        worst = worst.max(finite_difference_check(&mut g, loss, leaf, EPS)?);
    }
    out.push(CheckResult {
        name: "training loss, tiny network".into(),
        max_relative_error: worst,
    });
    Ok(out)
}
