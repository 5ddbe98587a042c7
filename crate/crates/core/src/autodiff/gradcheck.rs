use super::graph::{Graph, NodeId};
use crate::error::Result;

/// Largest per-component relative error between the analytic gradient of
/// `output` with respect to `leaf` and a central finite difference.
///
/// The error of one component is `|a - c| / (|a| + |c| + 1e-12)`, which is
/// 0 when both vanish. The graph is restored to its original leaf value.
pub fn finite_difference_check(graph: &mut Graph<'_>, output: NodeId, leaf: NodeId, eps: f64) -> Result<f64> {
    let analytic = graph.backward(output, &[leaf])?.remove(0);
    let original = graph.value(leaf).clone();
    let mut worst: f64 = 0.0;
    for k in 0..original.len() {
        let mut plus = original.clone();
        plus.data_mut()[k] += eps;
        graph.set_leaf(leaf, plus)?;
        graph.recompute();
        let f_plus = graph.value(output).item();

        let mut minus = original.clone();
        minus.data_mut()[k] -= eps;
        graph.set_leaf(leaf, minus)?;
        graph.recompute();
        let f_minus = graph.value(output).item();

        let central = (f_plus - f_minus) / (2.0 * eps);
        let a = analytic.data()[k];
        let err = (a - central).abs() / (a.abs() + central.abs() + 1e-12);
        worst = worst.max(err);
    }
    graph.set_leaf(leaf, original)?;
    graph.recompute();
    Ok(worst)
}
