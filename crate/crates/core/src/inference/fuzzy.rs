//! Product real logic over binary concepts. The truth degree of `C=1` is the
//! probability of value 1; labels are clamped to crisp values.

use std::ops::{Add, Mul, Sub};

use crate::error::{Error, Result};
use crate::inference::dist::{ConceptDistribution, ConceptLogits};
use crate::logic::{Connective, Formula, InferenceTable, TaskSpec};
use crate::numeric::{softmax, softmax_backward};

/// Value with one tangent component, for forward-mode derivatives.
#[derive(Clone, Copy, Debug, PartialEq)]
struct Dual {
    v: f64,
    d: f64,
}

impl Dual {
    fn constant(v: f64) -> Self {
        Self { v, d: 0.0 }
    }
}

impl Add for Dual {
    type Output = Dual;
    fn add(self, o: Dual) -> Dual {
        Dual {
            v: self.v + o.v,
            d: self.d + o.d,
        }
    }
}

impl Sub for Dual {
    type Output = Dual;
    fn sub(self, o: Dual) -> Dual {
        Dual {
            v: self.v - o.v,
            d: self.d - o.d,
        }
    }
}

impl Mul for Dual {
    type Output = Dual;
    fn mul(self, o: Dual) -> Dual {
        Dual {
            v: self.v * o.v,
            d: self.d * o.v + self.v * o.d,
        }
    }
}

fn degree(f: &Formula, atom: &dyn Fn(usize, u32) -> Dual) -> Dual {
    let one = Dual::constant(1.0);
    match f {
        Formula::Const(b) => Dual::constant(if *b { 1.0 } else { 0.0 }),
        Formula::Atom { var, value } => atom(*var, *value),
        Formula::Not(g) => one - degree(g, atom),
        Formula::Binary { op, lhs, rhs } => {
            let a = degree(lhs, atom);
            let b = degree(rhs, atom);
            let implies = |a: Dual, b: Dual| one - a + a * b;
            match op {
                Connective::And => a * b,
                Connective::Or => a + b - a * b,
                Connective::Implies => implies(a, b),
                Connective::Iff => implies(a, b) * implies(b, a),
                Connective::Xor => one - implies(a, b) * implies(b, a),
            }
        }
        Formula::Compare { .. } => unreachable!("knowledge is desugared before fuzzy evaluation"),
    }
}

fn check_binary(task: &TaskSpec) -> Result<()> {
    if let Some(v) = task.concepts().vars().iter().find(|v| v.card != 2) {
        return Err(Error::Unsupported(format!(
            "fuzzy semantics needs binary concepts, `{}` has cardinality {}",
            v.name, v.card
        )));
    }
    Ok(())
}

/// Evaluates with concept truth degrees `t` (probability of value 1) and the
/// tangent seeded on slot `seed`.
fn satisfaction(task: &TaskSpec, t: &[f64], y: &[u32], seed: Option<usize>) -> Dual {
    let k = t.len();
    degree(task.desugared(), &|var, value| {
        if var < k {
            let d = if seed == Some(var) { 1.0 } else { 0.0 };
            let pos = Dual { v: t[var], d };
            if value == 1 {
                pos
            } else {
                Dual::constant(1.0) - pos
            }
        } else {
            Dual::constant(if y[var - k] == value { 1.0 } else { 0.0 })
        }
    })
}

fn check_labels(task: &TaskSpec, y: &[u32]) -> Result<()> {
    if !task.labels().contains(y) {
        return Err(Error::InvalidArgument(format!("label vector {y:?} is not in the label space")));
    }
    Ok(())
}

/// Degree to which the knowledge holds under `p` with labels fixed to `y`.
pub fn fuzzy_satisfaction(p: &ConceptDistribution, y: &[u32], task: &TaskSpec) -> Result<f64> {
    check_binary(task)?;
    check_labels(task, y)?;
    p.validate(task.concepts())?;
    if let ConceptDistribution::Tabular { .. } = p {
        return Err(Error::Unsupported("fuzzy semantics needs a factorized distribution".into()));
    }
    let t: Vec<f64> = p.marginals(task.concepts()).iter().map(|s| s[1]).collect();
    Ok(satisfaction(task, &t, y, None).v)
}

/// Loss `1 - satisfaction` and its gradient with respect to per-slot logits.
pub fn ltn_loss_and_grad(
    logits: &ConceptLogits,
    y: &[u32],
    task: &TaskSpec,
    tau: f64,
) -> Result<(f64, ConceptLogits)> {
    check_binary(task)?;
    check_labels(task, y)?;
    logits.validate(task.concepts())?;
    let z = match logits {
        ConceptLogits::PerSlot(z) => z,
        ConceptLogits::Joint(_) => {
            return Err(Error::Unsupported("fuzzy semantics needs per-slot concept heads".into()))
        }
    };
    let probs: Vec<Vec<f64>> = z.iter().map(|s| softmax(s, tau)).collect();
    let t: Vec<f64> = probs.iter().map(|p| p[1]).collect();
    let loss = 1.0 - satisfaction(task, &t, y, None).v;
    let grad = probs
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let dt = -satisfaction(task, &t, y, Some(i)).d;
            softmax_backward(p, &[0.0, dt], tau)
        })
        .collect();
    Ok((loss, ConceptLogits::PerSlot(grad)))
}

/// Most probable concept vector, then the first label that satisfies the
/// knowledge with it (the first label overall if none does).
pub fn ltn_inference(p: &ConceptDistribution, table: &InferenceTable) -> Result<Vec<u32>> {
    p.validate(table.concepts())?;
    let c = p.argmax(table.concepts());
    let ci = table.concepts().index_of(&c);
    let y = table.consistent(ci).first().copied().unwrap_or(0);
    Ok(table.labels().vector_of(y as usize))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logic::{build_beta_star, evaluate, parse_task, Assignment};

    fn p(ts: &[f64]) -> ConceptDistribution {
        ConceptDistribution::factorized(ts.iter().map(|t| vec![1.0 - t, *t]).collect()).unwrap()
    }

    #[test]
    fn crisp_inputs_match_boolean_semantics() {
        let task = parse_task(
            "concept A : 2; concept B : 2; concept C : 2; label Y : 3;\n\
             knowledge { ((A=1 ^ B=0) -> Y=2) & (C=1 <-> !(Y=0)) | (A=1 & B=1 & C=1) }",
        )
        .unwrap();
        for c in task.concepts().vectors() {
            for y in task.labels().vectors() {
                let ts: Vec<f64> = c.iter().map(|v| *v as f64).collect();
                let fuzzy = fuzzy_satisfaction(&p(&ts), &y, &task).unwrap();
                let crisp = evaluate(task.desugared(), &Assignment::total(&c, &y)).unwrap();
                assert_eq!(fuzzy, if crisp { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn product_logic_values() {
        let or = parse_task("concept A : 2; concept B : 2; label Y : 2; knowledge { A=1 | B=1 }").unwrap();
        assert!((fuzzy_satisfaction(&p(&[0.5, 0.5]), &[0], &or).unwrap() - 0.75).abs() < 1e-12);
        let contra = parse_task("concept A : 2; label Y : 2; knowledge { A=1 & !(A=1) }").unwrap();
        assert!((fuzzy_satisfaction(&p(&[0.5]), &[0], &contra).unwrap() - 0.25).abs() < 1e-12);
    }

    #[test]
    fn categorical_concepts_are_unsupported() {
        let task = parse_task("concept A : 3; label Y : 3; knowledge { Y == A }").unwrap();
        let q = ConceptDistribution::factorized(vec![vec![0.2, 0.3, 0.5]]).unwrap();
        assert!(matches!(fuzzy_satisfaction(&q, &[0], &task), Err(Error::Unsupported(_))));
    }

    #[test]
    fn inference_reads_the_table_at_the_argmax() {
        let task = parse_task(
            "concept C_red : 2; concept C_ped : 2; label Y : 2;\nknowledge { (C_ped=1 | C_red=1) <-> Y=0 }",
        )
        .unwrap();
        let t = build_beta_star(&task).unwrap();
        assert_eq!(ltn_inference(&p(&[0.9, 0.2]), &t).unwrap(), vec![0]);
        assert_eq!(ltn_inference(&p(&[0.5, 0.5]), &t).unwrap(), vec![1]);
    }
}
