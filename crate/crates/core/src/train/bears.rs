use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::ConceptDistribution;
use crate::numeric::entropy;
use crate::train::data::Dataset;
use crate::train::eval::{evaluate, EvalMetrics};
use crate::train::model::{ConceptModel, Extractor, ModelConfig, Prediction};
use crate::train::objective::{Extras, Mitigation, TrainConfig};
use crate::train::trainer::{build_extractor, train_with, EpochRecord};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    #[serde(default = "default_members")]
    pub members: usize,
    /// Weight of the pairwise-agreement penalty against earlier members.
    #[serde(default = "default_diversity")]
    pub diversity: f64,
    /// Weight of the entropy add-on given to every member.
    #[serde(default = "default_entropy")]
    pub entropy: f64,
    /// Members below this training label accuracy are dropped.
    #[serde(default = "default_floor")]
    pub accuracy_floor: f64,
}

fn default_members() -> usize {
    5
}

fn default_diversity() -> f64 {
    1.0
}

fn default_entropy() -> f64 {
    0.1
}

fn default_floor() -> f64 {
    0.9
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            members: default_members(),
            diversity: default_diversity(),
            entropy: default_entropy(),
            accuracy_floor: default_floor(),
        }
    }
}

/// Uniform average of member predictions.
#[derive(Clone, Debug)]
pub struct Ensemble {
    pub members: Vec<Extractor>,
}

impl ConceptModel for Ensemble {
    fn predict(&self, x: &[f64]) -> Prediction {
        let r = self.members.len() as f64;
        let mut joint: Vec<f64> = Vec::new();
        let mut labels: Option<Vec<f64>> = None;
        for m in &self.members {
            let p = m.predict(x);
            let space_size: usize = m.cards.iter().map(|k| *k as usize).product();
            let q = match &p.concepts {
                ConceptDistribution::Tabular { probs, .. } => probs.clone(),
                ConceptDistribution::Factorized { slots, .. } => crate::inference::product_table(slots, space_size),
            };
            if joint.is_empty() {
                joint = vec![0.0; q.len()];
            }
            for (a, v) in joint.iter_mut().zip(&q) {
                *a += v / r;
            }
            if let Some(l) = p.label_probs {
                let acc = labels.get_or_insert_with(|| vec![0.0; l.len()]);
                for (a, v) in acc.iter_mut().zip(&l) {
                    *a += v / r;
                }
            }
        }
        Prediction {
            concepts: ConceptDistribution::Tabular { probs: joint, temperature: None },
            label_probs: labels,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExcludedMember {
    pub index: usize,
    pub label_accuracy: f64,
}

#[derive(Clone, Debug)]
pub struct BearsOutcome {
    pub ensemble: Ensemble,
    /// Mean entropy of the averaged prediction, per concept slot.
    pub slot_entropy: Vec<f64>,
    pub member_metrics: Vec<EvalMetrics>,
    pub trajectories: Vec<Vec<EpochRecord>>,
    pub excluded: Vec<ExcludedMember>,
}

/// Per-slot mean over the dataset of the entropy of the model's marginals.
pub fn slot_entropy(model: &dyn ConceptModel, data: &Dataset) -> Vec<f64> {
    let space = data.table.concepts();
    let n = data.len() as f64;
    let per: Vec<Vec<f64>> = data
        .inputs
        .par_iter()
        .map(|x| model.predict(x).concepts.marginals(space).iter().map(|m| entropy(m)).collect())
        .collect();
    let mut out = vec![0.0; space.len()];
    for h in &per {
        for (o, v) in out.iter_mut().zip(h) {
            *o += v / n;
        }
    }
    out
}

/// Trains `r` members in sequence. Member `j` gets the entropy add-on and a
/// penalty on its agreement with the members kept so far.
pub fn train_bears_ensemble(
    r: usize,
    model: &ModelConfig,
    data: &Dataset,
    cfg: &TrainConfig,
    ens: &EnsembleConfig,
) -> Result<BearsOutcome> {
    if !(2..=16).contains(&r) {
        return Err(Error::InvalidArgument(format!("ensemble size must lie in 2..=16, got {r}")));
    }
    let mut member_cfg = cfg.clone();
    if ens.entropy > 0.0 {
        member_cfg.mitigations.push(Mitigation::Entropy { weight: ens.entropy });
    }
    let mut kept: Vec<Extractor> = Vec::new();
    let mut member_metrics = Vec::new();
    let mut trajectories = Vec::new();
    let mut excluded = Vec::new();
    for j in 0..r {
        let c = TrainConfig { seed: cfg.seed.wrapping_add(j as u64), ..member_cfg.clone() };
        let e = build_extractor(model, data, &c, c.seed.wrapping_mul(0x9e37_79b9).wrapping_add(j as u64))?;
        let extras = Extras { annotations: Vec::new(), peers: &kept, diversity: ens.diversity };
        let out = train_with(e, data, &c, &extras)?;
        let m = evaluate(&out.extractor, data)?;
        trajectories.push(out.trajectory);
        if m.label_accuracy < ens.accuracy_floor {
            excluded.push(ExcludedMember { index: j, label_accuracy: m.label_accuracy });
        } else {
            kept.push(out.extractor);
        }
        member_metrics.push(m);
    }
    if kept.is_empty() {
        return Err(Error::Divergence("no ensemble member reached the label-accuracy floor".into()));
    }
    let ensemble = Ensemble { members: kept };
    Ok(BearsOutcome {
        slot_entropy: slot_entropy(&ensemble, data),
        ensemble,
        member_metrics,
        trajectories,
        excluded,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Query {
    pub sample: usize,
    pub slot: usize,
    pub entropy: f64,
}

/// Samples whose input vector has not been seen earlier in the dataset.
fn distinct_inputs(data: &Dataset) -> Vec<usize> {
    let mut seen: Vec<&Vec<f64>> = Vec::new();
    let mut out = Vec::new();
    for (i, x) in data.inputs.iter().enumerate() {
        if !seen.contains(&x) {
            seen.push(x);
            out.push(i);
        }
    }
    out
}

/// The `budget` most uncertain `(sample, slot)` pairs under the model, over
/// distinct inputs; ties go to the smaller sample, then the smaller slot.
pub fn select_queries(model: &dyn ConceptModel, data: &Dataset, budget: usize) -> Result<Vec<Query>> {
    if budget == 0 {
        return Err(Error::InvalidArgument("query budget must be positive".into()));
    }
    let space = data.table.concepts();
    let mut all: Vec<Query> = distinct_inputs(data)
        .par_iter()
        .flat_map_iter(|i| {
            let m = model.predict(&data.inputs[*i]).concepts.marginals(space);
            m.into_iter()
                .enumerate()
                .map(|(slot, p)| Query { sample: *i, slot, entropy: entropy(&p) })
                .collect::<Vec<_>>()
        })
        .collect();
    all.sort_by(|a, b| {
        b.entropy
            .total_cmp(&a.entropy)
            .then(a.sample.cmp(&b.sample))
            .then(a.slot.cmp(&b.slot))
    });
    all.truncate(budget);
    Ok(all)
}

/// `budget` distinct `(sample, slot)` pairs drawn uniformly over distinct inputs.
pub fn random_queries(data: &Dataset, budget: usize, seed: u64) -> Result<Vec<Query>> {
    if budget == 0 {
        return Err(Error::InvalidArgument("query budget must be positive".into()));
    }
    let k = data.task.concepts().len();
    let mut all: Vec<Query> = distinct_inputs(data)
        .into_iter()
        .flat_map(|i| (0..k).map(move |slot| Query { sample: i, slot, entropy: 0.0 }))
        .collect();
    all.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    all.truncate(budget);
    Ok(all)
}

/// Annotation pairs for training: each query labels its slot on every
/// sample whose input equals the queried one.
pub fn expand_annotations(data: &Dataset, queries: &[Query]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for q in queries {
        let x = &data.inputs[q.sample];
        for (i, other) in data.inputs.iter().enumerate() {
            if other == x && !out.contains(&(i, q.slot)) {
                out.push((i, q.slot));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logic::parse_task;
    use crate::train::data::{generate_dataset, SyntheticTaskConfig};

    #[test]
    fn bounds() {
        let t = parse_task("concept A : 4; label Y : 4; knowledge { Y == A }").unwrap();
        let d = generate_dataset(&t, &SyntheticTaskConfig::default()).unwrap();
        let cfg = TrainConfig::default();
        assert!(train_bears_ensemble(1, &ModelConfig::default(), &d, &cfg, &EnsembleConfig::default()).is_err());
        assert!(train_bears_ensemble(17, &ModelConfig::default(), &d, &cfg, &EnsembleConfig::default()).is_err());
        assert!(random_queries(&d, 0, 0).is_err());
    }

    #[test]
    fn bijection_members_agree() {
        let t = parse_task("concept A : 4; label Y : 4; knowledge { Y == A }").unwrap();
        let d = generate_dataset(&t, &SyntheticTaskConfig { samples_per_support_vector: 4, ..Default::default() }).unwrap();
        let cfg = TrainConfig { epochs: 300, ..Default::default() };
        let ens = EnsembleConfig { members: 3, entropy: 0.01, diversity: 0.1, ..Default::default() };
        let out = train_bears_ensemble(3, &ModelConfig::default(), &d, &cfg, &ens).unwrap();
        assert!(out.excluded.is_empty());
        assert!(out.slot_entropy[0] <= 0.1, "{:?}", out.slot_entropy);
        let q = select_queries(&out.ensemble, &d, 2).unwrap();
        assert_eq!(q.len(), 2);
        assert!(select_queries(&out.ensemble, &d, 0).is_err());
        // duplicates of one input are queried once
        assert!(q.iter().all(|x| x.sample % 4 == 0));
    }
}
