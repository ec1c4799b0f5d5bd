//! Probabilistic inference layer: a label's probability is the concept mass
//! that entails it.

use crate::error::{Error, Result};
use crate::inference::dist::{ConceptDistribution, ConceptLogits, JointForward, LabelDistribution};
use crate::logic::InferenceTable;

/// Share of concept vector `c`'s mass that goes to each consistent label.
/// Multi-valued rows split their mass uniformly.
fn unnormalized(q: &[f64], table: &InferenceTable) -> Vec<f64> {
    let mut out = vec![0.0; table.labels().size()];
    for (c, p) in q.iter().enumerate() {
        let ys = table.consistent(c);
        if *p == 0.0 || ys.is_empty() {
            continue;
        }
        let share = p / ys.len() as f64;
        for y in ys {
            out[*y as usize] += share;
        }
    }
    out
}

pub fn pnsp_from_joint(q: &[f64], table: &InferenceTable) -> Result<LabelDistribution> {
    let mut probs = unnormalized(q, table);
    let z: f64 = probs.iter().sum();
    if z <= 0.0 {
        return Err(Error::NoReachableLabel);
    }
    for p in &mut probs {
        *p /= z;
    }
    Ok(LabelDistribution { probs })
}

pub fn pnsp_label_dist(p: &ConceptDistribution, table: &InferenceTable) -> Result<LabelDistribution> {
    p.validate(table.concepts())?;
    pnsp_from_joint(&p.joint(table.concepts()), table)
}

/// Gradient of `-log P(y)` with respect to the joint concept table.
pub(crate) fn nll_joint_grad(q: &[f64], y: usize, table: &InferenceTable) -> Result<(f64, Vec<f64>)> {
    let mut a = 0.0;
    let mut z = 0.0;
    for (c, p) in q.iter().enumerate() {
        let ys = table.consistent(c);
        if ys.is_empty() {
            continue;
        }
        z += p;
        if table.is_consistent(c, y) {
            a += p / ys.len() as f64;
        }
    }
    if a <= 0.0 {
        return Err(Error::InfiniteLoss);
    }
    let grad = (0..q.len())
        .map(|c| {
            let ys = table.consistent(c);
            if ys.is_empty() {
                return 0.0;
            }
            let w = if table.is_consistent(c, y) { 1.0 / ys.len() as f64 } else { 0.0 };
            -w / a + 1.0 / z
        })
        .collect();
    Ok(((z / a).ln().max(0.0), grad))
}

/// Negative log-likelihood of label index `y` and its gradient with respect
/// to the logits (which are divided by `tau` before the softmax).
pub fn pnsp_nll_and_grad(
    logits: &ConceptLogits,
    y: usize,
    table: &InferenceTable,
    tau: f64,
) -> Result<(f64, ConceptLogits)> {
    logits.validate(table.concepts())?;
    if y >= table.labels().size() {
        return Err(Error::InvalidArgument(format!("label index {y} out of range")));
    }
    let fwd = JointForward::new(logits, table.concepts(), tau);
    let (loss, dq) = nll_joint_grad(&fwd.q, y, table)?;
    Ok((loss, fwd.backward(&dq, table.concepts())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logic::{build_beta_star, parse_task, InferenceTable};
    use crate::numeric::{central_difference, relative_error};

    fn table(text: &str) -> InferenceTable {
        build_beta_star(&parse_task(text).unwrap()).unwrap()
    }

    const BOIA: &str = "concept C_red : 2; concept C_ped : 2; label Y : 2;\nknowledge { (C_ped=1 | C_red=1) <-> Y=0 }";

    #[test]
    fn boia_stop_probability() {
        let t = table(BOIA);
        let p = ConceptDistribution::factorized(vec![vec![0.1, 0.9], vec![0.8, 0.2]]).unwrap();
        let d = pnsp_label_dist(&p, &t).unwrap();
        assert!((d.probs[0] - (1.0 - 0.1 * 0.8)).abs() < 1e-12);
    }

    #[test]
    fn vertices_map_to_table() {
        let t = table(BOIA);
        for c in t.concepts().vectors() {
            let d = pnsp_label_dist(&ConceptDistribution::one_hot(t.concepts(), &c), &t).unwrap();
            let y = t.label_of(t.concepts().index_of(&c)).unwrap();
            assert_eq!(d.probs[y], 1.0);
        }
    }

    #[test]
    fn sum_split_mass() {
        let t = table("concept A : 3; concept B : 3; label Y : 5; knowledge { Y == A + B }");
        let mut q = vec![0.0; 9];
        q[1] = 0.5;
        q[2] = 0.5;
        let d = pnsp_label_dist(&ConceptDistribution::tabular(q).unwrap(), &t).unwrap();
        assert_eq!(d.probs, vec![0.0, 0.5, 0.5, 0.0, 0.0]);
    }

    #[test]
    fn one_hot_logits_give_zero_loss() {
        let t = table(BOIA);
        let logits = ConceptLogits::PerSlot(vec![vec![0.0, 800.0], vec![800.0, 0.0]]);
        let (loss, grad) = pnsp_nll_and_grad(&logits, 0, &t, 1.0).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grad.flatten().iter().all(|g| g.abs() < 1e-300));
    }

    #[test]
    fn unreachable_label_is_infinite_loss() {
        let t = InferenceTable::compile(
            &parse_task("concept A : 2; label Y : 3; knowledge { Y == A }").unwrap(),
        )
        .unwrap();
        let logits = ConceptLogits::PerSlot(vec![vec![0.1, 0.2]]);
        assert!(matches!(pnsp_nll_and_grad(&logits, 2, &t, 1.0), Err(Error::InfiniteLoss)));
    }

    #[test]
    fn gradient_matches_differences_on_a_multivalued_table() {
        let t = InferenceTable::compile(
            &parse_task("concept A : 3; concept B : 2; label Y : 2; knowledge { A=0 -> Y=1 }").unwrap(),
        )
        .unwrap();
        for logits in [
            ConceptLogits::PerSlot(vec![vec![0.3, -0.7, 1.1], vec![0.2, -0.4]]),
            ConceptLogits::Joint(vec![0.1, -0.2, 0.5, 0.9, -1.0, 0.0]),
        ] {
            let (_, g) = pnsp_nll_and_grad(&logits, 0, &t, 1.5).unwrap();
            let numeric = central_difference(
                &mut |x| pnsp_nll_and_grad(&logits.reshape(x), 0, &t, 1.5).unwrap().0,
                &logits.flatten(),
                1e-4,
            );
            assert!(relative_error(&g.flatten(), &numeric) < 1e-6);
        }
    }
}
