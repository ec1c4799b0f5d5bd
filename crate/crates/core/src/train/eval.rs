use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{collapse_metric, rs_risk, ConceptRemap};
use crate::error::{Error, Result};
use crate::inference::{pnsp_from_joint, LabelDistribution};
use crate::logic::{InferenceTable, Space};
use crate::numeric::{argmax, entropy};
use crate::train::data::Dataset;
use crate::train::model::ConceptModel;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub n: usize,
    pub label_accuracy: f64,
    /// Fraction of samples whose most probable concept vector is the ground truth.
    pub concept_accuracy: f64,
    pub slot_accuracy: Vec<f64>,
    pub concept_nll: f64,
    pub label_nll: f64,
    pub rs_risk: f64,
    /// One minus distinct predicted vectors over distinct ground-truth vectors.
    pub collapse: f64,
    pub slot_collapse: Vec<f64>,
    /// `confusion[slot][truth][predicted]` counts.
    pub confusion: Vec<Vec<Vec<f64>>>,
    pub mean_entropy: f64,
    pub slot_entropy: Vec<f64>,
}

struct Row {
    label_ok: bool,
    label_nll: f64,
    concept_nll: f64,
    pred: Vec<u32>,
    slot_pred: Vec<u32>,
    slot_entropy: Vec<f64>,
}

pub fn evaluate(model: &dyn ConceptModel, data: &Dataset) -> Result<EvalMetrics> {
    if data.is_empty() {
        return Err(Error::InvalidArgument("cannot evaluate on an empty dataset".into()));
    }
    let space = data.table.concepts();
    let rows: Vec<Row> = (0..data.len())
        .into_par_iter()
        .map(|i| -> Result<Row> {
            let p = model.predict(&data.inputs[i]);
            let q = p.concepts.joint(space);
            let y = data.labels[i];
            let probs = match p.label_probs {
                Some(l) => l,
                None => pnsp_from_joint(&q, &data.table)?.probs,
            };
            let marg = p.concepts.marginals(space);
            Ok(Row {
                label_ok: argmax(&probs) == y,
                label_nll: -probs[y].max(f64::MIN_POSITIVE).ln(),
                concept_nll: -q[space.index_of(&data.concepts[i])].max(f64::MIN_POSITIVE).ln(),
                pred: p.concepts.argmax(space),
                slot_pred: marg.iter().map(|m| argmax(m) as u32).collect(),
                slot_entropy: marg.iter().map(|m| entropy(m)).collect(),
            })
        })
        .collect::<Result<_>>()?;
    let n = rows.len() as f64;
    let k = space.len();
    let cards = space.cards();
    let mut confusion: Vec<Vec<Vec<f64>>> = cards.iter().map(|c| vec![vec![0.0; *c as usize]; *c as usize]).collect();
    let mut slot_entropy = vec![0.0; k];
    let mut slot_hits = vec![0.0; k];
    for (r, g) in rows.iter().zip(&data.concepts) {
        for s in 0..k {
            confusion[s][g[s] as usize][r.slot_pred[s] as usize] += 1.0;
            slot_entropy[s] += r.slot_entropy[s] / n;
            slot_hits[s] += (r.slot_pred[s] == g[s]) as u8 as f64;
        }
    }
    let truth: BTreeSet<&Vec<u32>> = data.concepts.iter().collect();
    let predicted: BTreeSet<&Vec<u32>> = rows.iter().map(|r| &r.pred).collect();
    let concept_nll = rows.iter().map(|r| r.concept_nll).sum::<f64>() / n;
    let label_nll = rows.iter().map(|r| r.label_nll).sum::<f64>() / n;
    Ok(EvalMetrics {
        n: rows.len(),
        label_accuracy: rows.iter().filter(|r| r.label_ok).count() as f64 / n,
        concept_accuracy: rows.iter().zip(&data.concepts).filter(|(r, g)| r.pred == **g).count() as f64 / n,
        slot_accuracy: slot_hits.iter().map(|h| h / n).collect(),
        concept_nll,
        label_nll,
        rs_risk: rs_risk(concept_nll, label_nll),
        collapse: (1.0 - predicted.len() as f64 / truth.len() as f64).max(0.0),
        slot_collapse: confusion.iter().map(|c| collapse_metric(c)).collect::<Result<_>>()?,
        confusion,
        mean_entropy: slot_entropy.iter().sum::<f64>() / k as f64,
        slot_entropy,
    })
}

/// Average concept distribution of the model on the inputs rendered from
/// each support vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalAlpha {
    pub support: Vec<Vec<u32>>,
    /// One distribution over the joint concept space per support vector.
    pub rows: Vec<Vec<f64>>,
}

impl EmpiricalAlpha {
    pub fn row(&self, g: &[u32]) -> Option<&[f64]> {
        self.support.iter().position(|s| s == g).map(|i| self.rows[i].as_slice())
    }

    /// The deterministic remap sending each support vector to its most
    /// probable image.
    pub fn argmax_remap(&self, space: &Space) -> ConceptRemap {
        ConceptRemap::FullTable {
            pairs: self
                .support
                .iter()
                .zip(&self.rows)
                .map(|(g, r)| (g.clone(), space.vector_of(argmax(r))))
                .collect(),
        }
    }

    /// Label distribution of each row under the probabilistic-logic layer.
    pub fn label_dists(&self, table: &InferenceTable) -> Result<Vec<LabelDistribution>> {
        self.rows.iter().map(|r| pnsp_from_joint(r, table)).collect()
    }
}

pub fn estimate_alpha(model: &dyn ConceptModel, data: &Dataset) -> Result<EmpiricalAlpha> {
    let space = data.table.concepts();
    let support = data.task.support_vectors();
    let rows = support
        .par_iter()
        .map(|g| {
            let idx: Vec<usize> = (0..data.len()).filter(|i| data.concepts[*i] == *g).collect();
            if idx.is_empty() {
                return Err(Error::InvalidArgument(format!("support vector {g:?} is absent from the dataset")));
            }
            let mut row = vec![0.0; space.size()];
            for i in &idx {
                for (a, v) in row.iter_mut().zip(model.predict(&data.inputs[*i]).concepts.joint(space)) {
                    *a += v;
                }
            }
            let z: f64 = row.iter().sum();
            Ok(row.into_iter().map(|v| v / z).collect())
        })
        .collect::<Result<_>>()?;
    Ok(EmpiricalAlpha { support, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::FamilyBase;
    use crate::logic::parse_task;
    use crate::train::data::{generate_dataset, SyntheticTaskConfig};
    use crate::train::model::{Oracle, OracleMap};

    fn xor_data() -> Dataset {
        let task = parse_task("concept A : 2; concept B : 2; label Y : 2; knowledge { (A=1 ^ B=1) <-> Y=1 }").unwrap();
        generate_dataset(&task, &SyntheticTaskConfig { samples_per_support_vector: 4, ..Default::default() }).unwrap()
    }

    fn oracle(d: &Dataset, map: OracleMap) -> Oracle {
        Oracle { renderer: d.renderer.clone(), space: d.table.concepts().clone(), map }
    }

    #[test]
    fn perfect_flip_and_uniform() {
        let d = xor_data();
        let support = d.task.support_vectors();
        let id = ConceptRemap::identity(d.table.concepts(), &support, FamilyBase::SharedSlot);
        let m = evaluate(&oracle(&d, OracleMap::Remap(id)), &d).unwrap();
        assert_eq!((m.label_accuracy, m.concept_accuracy, m.collapse), (1.0, 1.0, 0.0));
        assert!(m.rs_risk <= 0.0);

        let flip = ConceptRemap::SharedSlot { map: vec![(0, 1), (1, 0)] };
        let m = evaluate(&oracle(&d, OracleMap::Remap(flip.clone())), &d).unwrap();
        assert_eq!((m.label_accuracy, m.concept_accuracy), (1.0, 0.0));
        assert!(m.rs_risk > 0.0);
        let a = estimate_alpha(&oracle(&d, OracleMap::Remap(flip)), &d).unwrap();
        assert_eq!(a.row(&[0, 1]).unwrap(), &[0.0, 0.0, 1.0, 0.0]);

        let u = evaluate(&oracle(&d, OracleMap::Uniform), &d).unwrap();
        assert!((u.label_nll - 2f64.ln()).abs() < 1e-12);
        assert!((u.mean_entropy - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn missing_support_vector() {
        let mut d = xor_data();
        d.inputs.truncate(4);
        d.concepts.truncate(4);
        d.labels.truncate(4);
        assert!(estimate_alpha(&oracle(&d, OracleMap::Uniform), &d).is_err());
        d.inputs.clear();
        assert!(evaluate(&oracle(&d, OracleMap::Uniform), &d).is_err());
    }
}
