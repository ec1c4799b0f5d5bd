use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::dist::LabelDistribution;
use crate::inference::pnsp::pnsp_from_joint;
use crate::inference::semantic::sl_label_dist;
use crate::logic::InferenceTable;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layer {
    Pnsp,
    Sl,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Extremality {
    Holds,
    Violated,
    /// The endpoints predict the same label, so there is nothing to check.
    Skipped,
}

pub fn layer_output(layer: Layer, q: &[f64], table: &InferenceTable) -> Result<LabelDistribution> {
    match layer {
        Layer::Pnsp => pnsp_from_joint(q, table),
        Layer::Sl => sl_label_dist(q, table),
    }
}

/// Compares the layer's top label probability on the mixture
/// `lambda * c + (1 - lambda) * c2` of one-hot concept vectors with the
/// best of the two endpoints.
pub fn check_extremality(
    layer: Layer,
    c: &[u32],
    c2: &[u32],
    lambda: f64,
    table: &InferenceTable,
) -> Result<Extremality> {
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(Error::InvalidArgument(format!("lambda must lie in (0,1), got {lambda}")));
    }
    let space = table.concepts();
    if !space.contains(c) || !space.contains(c2) {
        return Err(Error::InvalidArgument("concept vector outside the space".into()));
    }
    let (i, j) = (space.index_of(c), space.index_of(c2));
    let vertex = |k: usize| {
        let mut q = vec![0.0; space.size()];
        q[k] = 1.0;
        layer_output(layer, &q, table)
    };
    let (a, b) = (vertex(i)?, vertex(j)?);
    if a.argmax() == b.argmax() {
        return Ok(Extremality::Skipped);
    }
    let mut q = vec![0.0; space.size()];
    q[i] += lambda;
    q[j] += 1.0 - lambda;
    let mixed = layer_output(layer, &q, table)?;
    Ok(if mixed.max() < a.max().max(b.max()) {
        Extremality::Holds
    } else {
        Extremality::Violated
    })
}
