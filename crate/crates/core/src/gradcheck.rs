//! Central finite-difference verification of the backward pass.
//!
//! Runs in 64-bit mode only: with h = 1e-5 the truncation and rounding error
//! of a central difference sits far below the 1e-4 acceptance threshold, so
//! any flagged parameter is a wrong derivative rule, not noise.

use crate::error::{Error, Result};
use crate::graph::{Gradients, Graph, NodeId};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy)]
pub struct FdSettings {
    /// Central-difference step.
    pub h: f64,
    /// Per-element relative error above this flags the parameter.
    pub tolerance: f64,
}

impl Default for FdSettings {
    fn default() -> Self {
        FdSettings { h: 1e-5, tolerance: 1e-4 }
    }
}

/// Worst element of one parameter.
#[derive(Debug, Clone)]
pub struct FdEntry {
    pub name: String,
    pub max_rel_err: f64,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Debug, Clone)]
pub struct FdReport {
    pub tolerance: f64,
    pub entries: Vec<FdEntry>,
}

impl FdReport {
    pub fn max_rel_err(&self) -> f64 {
        self.entries.iter().map(|e| e.max_rel_err).fold(0.0, f64::max)
    }

    pub fn failures(&self) -> impl Iterator<Item = &FdEntry> {
        self.entries.iter().filter(move |e| e.max_rel_err > self.tolerance)
    }

    pub fn passed(&self) -> bool {
        self.failures().next().is_none()
    }
}

/// Relative error with a floor that keeps difference-quotient rounding noise
/// on near-zero gradients from registering.
fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-3)
}

/// Compare the graph's own backward pass against central differences.
pub fn finite_difference_check(
    graph: &mut Graph<f64>,
    loss: NodeId,
    settings: FdSettings,
) -> Result<FdReport> {
    let analytic = graph.backward(loss)?;
    fd_compare(graph, loss, &analytic, settings)
}

/// Compare externally supplied gradients (normally from `backward`, or a
/// deliberately corrupted copy in mutation tests) against central differences.
pub fn fd_compare(
    graph: &mut Graph<f64>,
    loss: NodeId,
    analytic: &Gradients<f64>,
    settings: FdSettings,
) -> Result<FdReport> {
    if !(settings.h > 0.0) {
        return Err(Error::InvalidArg(format!("fd step must be positive, got {}", settings.h)));
    }
    let names: Vec<String> = graph.param_names().map(str::to_string).collect();
    let mut entries = Vec::with_capacity(names.len());
    for name in &names {
        let a = analytic
            .get(name)
            .ok_or_else(|| Error::InvalidArg(format!("no gradient supplied for parameter {name:?}")))?
            .clone();
        let id = param_node(graph, name)?;
        let mut worst = FdEntry {
            name: name.clone(),
            max_rel_err: 0.0,
            worst_index: 0,
            analytic: a.data().first().copied().unwrap_or(0.0),
            numeric: 0.0,
        };
        for i in 0..a.len() {
            let orig = graph.leaf_value_mut(id)?.data()[i];
            graph.leaf_value_mut(id)?.data_mut()[i] = orig + settings.h;
            graph.recompute_forward()?;
            let f_plus = graph.value(loss).item();
            graph.leaf_value_mut(id)?.data_mut()[i] = orig - settings.h;
            graph.recompute_forward()?;
            let f_minus = graph.value(loss).item();
            graph.leaf_value_mut(id)?.data_mut()[i] = orig;
            let numeric = (f_plus - f_minus) / (2.0 * settings.h);
            let err = rel_err(a.data()[i], numeric);
            if err >= worst.max_rel_err {
                worst.max_rel_err = err;
                worst.worst_index = i;
                worst.analytic = a.data()[i];
                worst.numeric = numeric;
            }
        }
        entries.push(worst);
    }
    // Leave the graph in its unperturbed state.
    graph.recompute_forward()?;
    Ok(FdReport { tolerance: settings.tolerance, entries })
}

fn param_node(graph: &Graph<f64>, name: &str) -> Result<NodeId> {
    graph
        .param_node_id(name)
        .ok_or_else(|| Error::InvalidArg(format!("unknown parameter {name:?}")))
}

/// Convenience used by tests: perturb one element of one gradient tensor.
pub fn corrupt_gradient(grads: &Gradients<f64>, name: &str, index: usize, delta: f64) -> Result<Gradients<f64>> {
    let mut entries = grads.entries().to_vec();
    let entry = entries
        .iter_mut()
        .find(|(n, _)| n == name)
        .ok_or_else(|| Error::InvalidArg(format!("unknown parameter {name:?}")))?;
    let mut data = entry.1.data().to_vec();
    data[index] += delta;
    entry.1 = Tensor::new(entry.1.shape().to_vec(), data)?;
    Ok(Gradients::from_entries(entries))
}
