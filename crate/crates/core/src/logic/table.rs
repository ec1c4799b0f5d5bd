use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::logic::space::{ConceptSpace, LabelSpace};
use crate::logic::task::TaskSpec;

/// For every concept vector, the labels it is consistent with under the
/// knowledge. Indices refer to the lexicographic order of each space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InferenceTable {
    concepts: ConceptSpace,
    labels: LabelSpace,
    consistent: Vec<Vec<u32>>,
    support: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Unambiguity {
    Unambiguous,
    Ambiguous { witness: (u32, u32) },
}

impl InferenceTable {
    /// Builds consistency sets for all of the concept space without any
    /// determinism check. The knowledge is partially evaluated once per
    /// concept vector and the residual is checked against every label.
    pub fn compile(task: &TaskSpec) -> Result<Self> {
        let nc = task.concepts().size();
        let ny = task.labels().size();
        let joint = nc as u128 * ny as u128;
        if joint > task.cap() as u128 {
            return Err(Error::CapExceeded {
                size: joint,
                cap: task.cap() as u128,
            });
        }
        let k = task.concepts().len();
        let labels: Vec<Vec<u32>> = task.labels().vectors().collect();
        let consistent = (0..nc)
            .into_par_iter()
            .map(|ci| {
                let c = task.concepts().vector_of(ci);
                let residual = task
                    .desugared()
                    .simplify(&|v| (v < k).then(|| c[v]));
                labels
                    .iter()
                    .enumerate()
                    .filter(|(_, y)| {
                        residual
                            .eval(&|v| y.get(v - k).copied())
                            .expect("residual mentions labels only")
                    })
                    .map(|(yi, _)| yi as u32)
                    .collect()
            })
            .collect();
        Ok(Self {
            concepts: task.concepts().clone(),
            labels: task.labels().clone(),
            consistent,
            support: task.support().to_vec(),
        })
    }

    pub fn concepts(&self) -> &ConceptSpace {
        &self.concepts
    }

    pub fn labels(&self) -> &LabelSpace {
        &self.labels
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    /// Label indices consistent with concept index `c`.
    pub fn consistent(&self, c: usize) -> &[u32] {
        &self.consistent[c]
    }

    pub fn is_consistent(&self, c: usize, y: usize) -> bool {
        self.consistent[c].binary_search(&(y as u32)).is_ok()
    }

    /// The unique consistent label, when there is exactly one.
    pub fn label_of(&self, c: usize) -> Option<usize> {
        match self.consistent[c].as_slice() {
            [y] => Some(*y as usize),
            _ => None,
        }
    }

    /// Vector form of [`label_of`](Self::label_of).
    pub fn beta(&self, c: &[u32]) -> Option<Vec<u32>> {
        self.label_of(self.concepts.index_of(c))
            .map(|y| self.labels.vector_of(y))
    }

    /// True when every support vector has exactly one consistent label.
    pub fn is_deterministic(&self) -> bool {
        self.support.iter().all(|c| self.consistent[*c].len() == 1)
    }

    /// Number of concept vectors inconsistent with label `y`.
    pub fn inconsistent_count(&self, y: usize) -> usize {
        (0..self.concepts.size())
            .filter(|c| !self.is_consistent(*c, y))
            .count()
    }
}

/// Compiles the ground-truth inference map and checks that it is a function
/// on the support.
pub fn build_beta_star(task: &TaskSpec) -> Result<InferenceTable> {
    let table = InferenceTable::compile(task)?;
    if table.consistent.iter().all(|s| s.is_empty()) {
        return Err(Error::Unsatisfiable);
    }
    let empty: Vec<Vec<u32>> = table
        .support
        .iter()
        .filter(|c| table.consistent[**c].is_empty())
        .map(|c| table.concepts.vector_of(*c))
        .collect();
    if !empty.is_empty() {
        return Err(Error::NoConsistentLabel(empty));
    }
    let offenders: Vec<_> = table
        .support
        .iter()
        .filter(|c| table.consistent[**c].len() > 1)
        .map(|c| {
            let ys = table.consistent[*c]
                .iter()
                .map(|y| table.labels.vector_of(*y as usize))
                .collect();
            (table.concepts.vector_of(*c), ys)
        })
        .collect();
    if !offenders.is_empty() {
        return Err(Error::DeterminismViolation(offenders));
    }
    Ok(table)
}

/// Looks for two distinct symbols whose constant concept vectors share a
/// label. Returns the lexicographically first such pair.
pub fn check_k_unambiguity(table: &InferenceTable, k: usize) -> Result<Unambiguity> {
    if k != table.concepts.len() {
        return Err(Error::InvalidArgument(format!(
            "k = {k} but the task has {} concept slots",
            table.concepts.len()
        )));
    }
    let card = table
        .concepts
        .homogeneous_card()
        .ok_or(Error::HeterogeneousDomains)?;
    let sets: Vec<&[u32]> = (0..card)
        .map(|v| table.consistent(table.concepts.index_of(&vec![v; k])))
        .collect();
    for a in 0..card as usize {
        for b in a + 1..card as usize {
            if sets[a].iter().any(|y| sets[b].contains(y)) {
                return Ok(Unambiguity::Ambiguous {
                    witness: (a as u32, b as u32),
                });
            }
        }
    }
    Ok(Unambiguity::Unambiguous)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logic::parse::parse_task;

    fn table(text: &str) -> Result<InferenceTable> {
        build_beta_star(&parse_task(text).unwrap())
    }

    #[test]
    fn boia_truth_table() {
        let t = table("concept C_red : 2; concept C_ped : 2; label Y : 2;\nknowledge { (C_ped=1 | C_red=1) <-> Y=0 }").unwrap();
        assert_eq!(t.beta(&[0, 0]), Some(vec![1]));
        for c in [[0, 1], [1, 0], [1, 1]] {
            assert_eq!(t.beta(&c), Some(vec![0]));
        }
    }

    #[test]
    fn digit_sum_is_deterministic() {
        let t = table("concept C1 : 10; concept C2 : 10; label Y : 19; knowledge { Y == C1 + C2 }").unwrap();
        assert!(t.is_deterministic());
        assert_eq!(t.support().len(), 100);
        assert_eq!(t.beta(&[7, 8]), Some(vec![15]));
    }

    #[test]
    fn implication_is_not_deterministic() {
        match table("concept C1 : 2; label Y : 2; knowledge { C1=0 -> Y=0 }") {
            Err(Error::DeterminismViolation(off)) => {
                assert_eq!(off, vec![(vec![1], vec![vec![0], vec![1]])]);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_label_inside_support_is_fatal() {
        let text = "concept A : 2; label Y : 2; knowledge { A=1 & Y=1 }";
        assert!(matches!(table(text), Err(Error::NoConsistentLabel(v)) if v == vec![vec![0]]));
        let outside = "concept A : 2; label Y : 2; support { (1); } knowledge { A=1 & Y=1 }";
        assert!(table(outside).is_ok());
    }

    #[test]
    fn unambiguity_verdicts() {
        let xor = table("concept A : 2; concept B : 2; label Y : 2; knowledge { (A=1 ^ B=1) <-> Y=1 }").unwrap();
        assert_eq!(
            check_k_unambiguity(&xor, 2).unwrap(),
            Unambiguity::Ambiguous { witness: (0, 1) }
        );
        let sum = table("concept A : 10; concept B : 10; label Y : 19; knowledge { Y == A + B }").unwrap();
        assert_eq!(check_k_unambiguity(&sum, 2).unwrap(), Unambiguity::Unambiguous);
        let id = table("concept A : 3; label Y : 3; knowledge { Y == A }").unwrap();
        assert_eq!(check_k_unambiguity(&id, 1).unwrap(), Unambiguity::Unambiguous);
        let mixed = table("concept A : 2; concept B : 3; label Y : 4; knowledge { Y == A + B }").unwrap();
        assert!(matches!(check_k_unambiguity(&mixed, 2), Err(Error::HeterogeneousDomains)));
    }
}
