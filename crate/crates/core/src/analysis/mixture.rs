use serde::{Deserialize, Serialize};

use crate::analysis::remap::ConceptRemap;
use crate::error::{Error, Result};
use crate::inference::pnsp_from_joint;
use crate::logic::{InferenceTable, Space};

/// Convex combination of deterministic remaps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StochasticRemap {
    pub remaps: Vec<ConceptRemap>,
    pub weights: Vec<f64>,
}

pub fn mix_remaps(remaps: Vec<ConceptRemap>, weights: Vec<f64>) -> Result<StochasticRemap> {
    if remaps.is_empty() {
        return Err(Error::InvalidArgument("a mixture needs at least one remap".into()));
    }
    if remaps.len() != weights.len() {
        return Err(Error::InvalidArgument(format!(
            "{} remaps but {} weights",
            remaps.len(),
            weights.len()
        )));
    }
    crate::logic::task::validate_distribution(&weights)?;
    Ok(StochasticRemap { remaps, weights })
}

impl StochasticRemap {
    /// Distribution over the concept space assigned to `g`.
    pub fn output_at(&self, g: &[u32], space: &Space) -> Result<Vec<f64>> {
        let mut q = vec![0.0; space.size()];
        for (a, w) in self.remaps.iter().zip(&self.weights) {
            let c = a.apply(g)?;
            if !space.contains(&c) {
                return Err(Error::InvalidArgument(format!("image {c:?} is outside the concept space")));
            }
            q[space.index_of(&c)] += w;
        }
        Ok(q)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixtureCheck {
    /// Predicted labels are one-hot at the ground truth on every support
    /// vector.
    pub label_preserving: bool,
    /// Label preserving and not the identity.
    pub is_rs: bool,
    /// Largest total-variation distance from the one-hot ground-truth label.
    pub max_tv: f64,
}

pub fn verify_mixture_is_rs(
    mix: &StochasticRemap,
    table: &InferenceTable,
    support: &[Vec<u32>],
) -> Result<MixtureCheck> {
    let space = table.concepts();
    let mut max_tv: f64 = 0.0;
    let mut moved = false;
    for g in support {
        let gi = space.index_of(g);
        let q = mix.output_at(g, space)?;
        if q[gi] < 1.0 - 1e-12 {
            moved = true;
        }
        let tv = match (table.label_of(gi), pnsp_from_joint(&q, table)) {
            (Some(y), Ok(d)) => {
                let mut target = vec![0.0; d.probs.len()];
                target[y] = 1.0;
                d.total_variation(&target)
            }
            _ => 1.0,
        };
        max_tv = max_tv.max(tv);
    }
    let label_preserving = max_tv <= 1e-9;
    Ok(MixtureCheck {
        label_preserving,
        is_rs: label_preserving && moved,
        max_tv,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::family::FamilyBase;
    use crate::logic::{build_beta_star, parse_task};

    fn boia() -> InferenceTable {
        build_beta_star(
            &parse_task("concept C_red : 2; concept C_ped : 2; label Y : 2;\nknowledge { (C_ped=1 | C_red=1) <-> Y=0 }")
                .unwrap(),
        )
        .unwrap()
    }

    fn table(pairs: &[([u32; 2], [u32; 2])]) -> ConceptRemap {
        ConceptRemap::FullTable {
            pairs: pairs.iter().map(|(a, b)| (a.to_vec(), b.to_vec())).collect(),
        }
    }

    #[test]
    fn split_between_red_and_ped() {
        let t = boia();
        let support: Vec<Vec<u32>> = t.concepts().vectors().collect();
        let to_red = table(&[([0, 0], [0, 0]), ([0, 1], [1, 0]), ([1, 0], [1, 0]), ([1, 1], [1, 0])]);
        let to_ped = table(&[([0, 0], [0, 0]), ([0, 1], [0, 1]), ([1, 0], [0, 1]), ([1, 1], [0, 1])]);
        let mix = mix_remaps(vec![to_red, to_ped], vec![0.5, 0.5]).unwrap();
        let q = mix.output_at(&[1, 1], t.concepts()).unwrap();
        assert_eq!(q, vec![0.0, 0.5, 0.5, 0.0]);
        let check = verify_mixture_is_rs(&mix, &t, &support).unwrap();
        assert!(check.is_rs);

        let bad = table(&[([0, 0], [1, 1]), ([0, 1], [0, 1]), ([1, 0], [1, 0]), ([1, 1], [1, 1])]);
        let id = ConceptRemap::identity(t.concepts(), &support, FamilyBase::FullTable);
        let mix = mix_remaps(vec![id.clone(), bad], vec![0.7, 0.3]).unwrap();
        assert!(!verify_mixture_is_rs(&mix, &t, &support).unwrap().label_preserving);

        let alone = verify_mixture_is_rs(&mix_remaps(vec![id], vec![1.0]).unwrap(), &t, &support).unwrap();
        assert!(alone.label_preserving && !alone.is_rs);
    }

    #[test]
    fn weights_are_validated() {
        assert!(mix_remaps(vec![], vec![]).is_err());
        let id = ConceptRemap::SharedSlot { map: vec![(0, 0)] };
        assert!(mix_remaps(vec![id.clone()], vec![0.9]).is_err());
        assert!(mix_remaps(vec![id], vec![1.0, 0.0]).is_err());
    }
}
