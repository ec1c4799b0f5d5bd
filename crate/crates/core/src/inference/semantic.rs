//! Semantic Loss: the negative log of the concept mass consistent with the
//! observed label, used as a regularizer next to a direct label head.

use crate::error::{Error, Result};
use crate::inference::dist::{ConceptDistribution, ConceptLogits, JointForward, LabelDistribution};
use crate::logic::InferenceTable;
use crate::numeric::{log_softmax, softmax};

fn consistent_mass(q: &[f64], y: usize, table: &InferenceTable) -> f64 {
    q.iter()
        .enumerate()
        .filter(|(c, _)| table.is_consistent(*c, y))
        .map(|(_, p)| p)
        .sum()
}

pub fn semantic_loss(p: &ConceptDistribution, y: usize, table: &InferenceTable) -> Result<f64> {
    p.validate(table.concepts())?;
    let s = consistent_mass(&p.joint(table.concepts()), y, table);
    if s <= 0.0 {
        return Err(Error::InfiniteLoss);
    }
    Ok((-s.ln()).max(0.0))
}

/// Label distribution read off the Semantic Loss layer: the consistent mass
/// of each label, normalized, with no splitting of multi-valued rows.
pub fn sl_label_dist(q: &[f64], table: &InferenceTable) -> Result<LabelDistribution> {
    let mut probs: Vec<f64> = (0..table.labels().size())
        .map(|y| consistent_mass(q, y, table))
        .collect();
    let z: f64 = probs.iter().sum();
    if z <= 0.0 {
        return Err(Error::NoReachableLabel);
    }
    for p in &mut probs {
        *p /= z;
    }
    Ok(LabelDistribution { probs })
}

/// Semantic Loss and its gradient with respect to the joint concept table.
pub(crate) fn sl_joint_grad(q: &[f64], y: usize, table: &InferenceTable) -> Result<(f64, Vec<f64>)> {
    let s = consistent_mass(q, y, table);
    if s <= 0.0 {
        return Err(Error::InfiniteLoss);
    }
    let grad = (0..q.len())
        .map(|c| if table.is_consistent(c, y) { -1.0 / s } else { 0.0 })
        .collect();
    Ok(((-s.ln()).max(0.0), grad))
}

#[derive(Clone, Debug)]
pub struct JointObjective {
    pub loss: f64,
    pub concept_grads: Vec<ConceptLogits>,
    pub label_grads: Vec<Vec<f64>>,
}

/// Batch mean of the label head's cross-entropy plus `mu` times the
/// Semantic Loss of the concept distribution.
pub fn sl_joint_objective(
    concept_logits: &[ConceptLogits],
    label_logits: &[Vec<f64>],
    labels: &[usize],
    mu: f64,
    table: &InferenceTable,
    tau: f64,
) -> Result<JointObjective> {
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(Error::InvalidArgument(format!("mu must be positive, got {mu}")));
    }
    let n = labels.len();
    if n == 0 || concept_logits.len() != n || label_logits.len() != n {
        return Err(Error::InvalidArgument("batch parts must be nonempty and equally long".into()));
    }
    let ny = table.labels().size();
    let mut loss = 0.0;
    let mut concept_grads = Vec::with_capacity(n);
    let mut label_grads = Vec::with_capacity(n);
    for ((z, h), y) in concept_logits.iter().zip(label_logits).zip(labels) {
        z.validate(table.concepts())?;
        if h.len() != ny || *y >= ny {
            return Err(Error::InvalidArgument("label head or label out of shape".into()));
        }
        let ce = -log_softmax(h, 1.0)[*y];
        let mut dh = softmax(h, 1.0);
        dh[*y] -= 1.0;
        let fwd = JointForward::new(z, table.concepts(), tau);
        let (sl, mut dq) = sl_joint_grad(&fwd.q, *y, table)?;
        loss += ce + mu * sl;
        for g in &mut dq {
            *g *= mu / n as f64;
        }
        concept_grads.push(fwd.backward(&dq, table.concepts()));
        label_grads.push(dh.into_iter().map(|g| g / n as f64).collect());
    }
    Ok(JointObjective {
        loss: loss / n as f64,
        concept_grads,
        label_grads,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logic::{build_beta_star, parse_task};
    use crate::numeric::{central_difference, relative_error};

    fn boia() -> InferenceTable {
        build_beta_star(
            &parse_task("concept C_red : 2; concept C_ped : 2; label Y : 2;\nknowledge { (C_ped=1 | C_red=1) <-> Y=0 }")
                .unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn uniform_stop_loss() {
        let t = boia();
        let p = ConceptDistribution::tabular(vec![0.25; 4]).unwrap();
        assert!((semantic_loss(&p, 0, &t).unwrap() + 0.75f64.ln()).abs() < 1e-12);
        let onehot = ConceptDistribution::one_hot(t.concepts(), &[1, 0]);
        assert_eq!(semantic_loss(&onehot, 0, &t).unwrap(), 0.0);
        let go = ConceptDistribution::one_hot(t.concepts(), &[0, 0]);
        assert!(matches!(semantic_loss(&go, 0, &t), Err(Error::InfiniteLoss)));
    }

    #[test]
    fn mu_must_be_positive() {
        let t = boia();
        let z = vec![ConceptLogits::PerSlot(vec![vec![0.0, 0.0], vec![0.0, 0.0]])];
        let err = sl_joint_objective(&z, &[vec![0.0, 0.0]], &[0], 0.0, &t, 1.0);
        assert!(matches!(err, Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn consistent_one_hots_leave_cross_entropy() {
        let t = boia();
        let z = vec![ConceptLogits::PerSlot(vec![vec![0.0, 900.0], vec![900.0, 0.0]])];
        let h = vec![vec![0.4, -0.3]];
        let out = sl_joint_objective(&z, &h, &[0], 2.0, &t, 1.0).unwrap();
        assert!((out.loss + log_softmax(&h[0], 1.0)[0]).abs() < 1e-12);
    }

    #[test]
    fn gradient_matches_differences() {
        let t = boia();
        let z = vec![
            ConceptLogits::PerSlot(vec![vec![0.3, -0.2], vec![0.5, 0.1]]),
            ConceptLogits::PerSlot(vec![vec![-0.3, 0.9], vec![0.2, -0.6]]),
        ];
        let h = vec![vec![0.1, 0.2], vec![-0.5, 0.4]];
        let labels = [0, 1];
        let out = sl_joint_objective(&z, &h, &labels, 0.7, &t, 1.0).unwrap();
        let mut flat: Vec<f64> = z.iter().flat_map(|l| l.flatten()).collect();
        flat.extend(h.iter().flatten());
        let f = |x: &[f64]| {
            let zs: Vec<ConceptLogits> = (0..2).map(|i| z[i].reshape(&x[i * 4..i * 4 + 4])).collect();
            let hs: Vec<Vec<f64>> = (0..2).map(|i| x[8 + i * 2..10 + i * 2].to_vec()).collect();
            sl_joint_objective(&zs, &hs, &labels, 0.7, &t, 1.0).unwrap().loss
        };
        let numeric = central_difference(&mut { f }, &flat, 1e-4);
        let mut analytic: Vec<f64> = out.concept_grads.iter().flat_map(|g| g.flatten()).collect();
        analytic.extend(out.label_grads.iter().flatten());
        assert!(relative_error(&analytic, &numeric) < 1e-6);
    }
}
