//! Abduction: replace the predicted concepts with the nearest concept vector
//! that entails the observed label and train on it as a pseudo-label.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::dist::{ConceptDistribution, ConceptLogits, JointForward};
use crate::logic::InferenceTable;
use crate::numeric::log_softmax;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Distance {
    #[default]
    Hamming,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieBreak {
    #[default]
    Lexicographic,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AbductionConfig {
    pub distance: Distance,
    pub tie_break: TieBreak,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Abduction {
    pub concept: Vec<u32>,
    pub distance: u32,
}

fn hamming(a: &[u32], b: &[u32]) -> u32 {
    a.iter().zip(b).filter(|(x, y)| x != y).count() as u32
}

/// Nearest concept vector to `target` consistent with label index `y`.
pub fn abduce_from(target: &[u32], y: usize, table: &InferenceTable, cfg: AbductionConfig) -> Result<Abduction> {
    let Distance::Hamming = cfg.distance;
    let TieBreak::Lexicographic = cfg.tie_break;
    let mut best: Option<Abduction> = None;
    for ci in 0..table.concepts().size() {
        if !table.is_consistent(ci, y) {
            continue;
        }
        let c = table.concepts().vector_of(ci);
        let d = hamming(&c, target);
        // strict improvement keeps the lexicographically first among ties
        if best.as_ref().is_none_or(|b| d < b.distance) {
            best = Some(Abduction { concept: c, distance: d });
            if d == 0 {
                break;
            }
        }
    }
    best.ok_or(Error::EmptyCandidates)
}

pub fn abduce(
    p: &ConceptDistribution,
    y: usize,
    table: &InferenceTable,
    cfg: AbductionConfig,
) -> Result<Abduction> {
    p.validate(table.concepts())?;
    abduce_from(&p.argmax(table.concepts()), y, table, cfg)
}

/// Cross-entropy against the abduced pseudo-label, with its gradient. The
/// pseudo-label is held fixed during differentiation.
pub fn abl_loss_and_grad(
    logits: &ConceptLogits,
    y: usize,
    table: &InferenceTable,
    tau: f64,
) -> Result<(f64, ConceptLogits, Vec<u32>)> {
    logits.validate(table.concepts())?;
    let p = ConceptDistribution::from_logits(logits, tau);
    let pseudo = abduce(&p, y, table, AbductionConfig::default())?.concept;
    let (loss, grad) = pseudo_label_loss(logits, &pseudo, table, tau);
    Ok((loss, grad, pseudo))
}

/// `-log p(target)` under the extractor and its logit gradient.
pub(crate) fn pseudo_label_loss(
    logits: &ConceptLogits,
    target: &[u32],
    table: &InferenceTable,
    tau: f64,
) -> (f64, ConceptLogits) {
    match logits {
        ConceptLogits::PerSlot(z) => {
            let mut loss = 0.0;
            let grads = z
                .iter()
                .zip(target)
                .map(|(s, t)| {
                    loss -= log_softmax(s, tau)[*t as usize];
                    let mut g = crate::numeric::softmax(s, tau);
                    g[*t as usize] -= 1.0;
                    g.into_iter().map(|v| v / tau).collect()
                })
                .collect();
            (loss, ConceptLogits::PerSlot(grads))
        }
        ConceptLogits::Joint(z) => {
            let ti = table.concepts().index_of(target);
            let fwd = JointForward::new(logits, table.concepts(), tau);
            let loss = -log_softmax(z, tau)[ti];
            let mut g: Vec<f64> = fwd.q.iter().map(|v| v / tau).collect();
            g[ti] -= 1.0 / tau;
            (loss, ConceptLogits::Joint(g))
        }
    }
}
