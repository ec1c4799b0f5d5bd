use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::logic::{InferenceTable, TaskSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeComplexity {
    pub value: f64,
    /// The label distribution the expectation was taken under.
    pub label_dist: Vec<f64>,
    /// Labels with positive probability and no consistent concept vector.
    pub warnings: Vec<String>,
}

/// Label distribution induced by the task: the ground-truth concept weights
/// pushed through the table, or uniform over the labels of the support.
pub fn default_label_dist(task: &TaskSpec, table: &InferenceTable) -> Result<Vec<f64>> {
    let ny = table.labels().size();
    let mut out = vec![0.0; ny];
    let labels: Vec<usize> = task
        .support()
        .iter()
        .map(|g| {
            table.label_of(*g).ok_or_else(|| {
                Error::InvalidTask(format!(
                    "support vector {:?} has no unique label",
                    table.concepts().vector_of(*g)
                ))
            })
        })
        .collect::<Result<_>>()?;
    match task.ground_truth() {
        Some(w) => {
            for (y, p) in labels.iter().zip(w) {
                out[*y] += p;
            }
        }
        None => {
            let mut seen = labels.clone();
            seen.sort_unstable();
            seen.dedup();
            for y in &seen {
                out[*y] = 1.0 / seen.len() as f64;
            }
        }
    }
    Ok(out)
}

/// Expected number of concept vectors that the knowledge rules out once
/// the label is known.
pub fn knowledge_complexity(
    task: &TaskSpec,
    table: &InferenceTable,
    label_dist: Option<&[f64]>,
) -> Result<KnowledgeComplexity> {
    let dist = match label_dist {
        Some(d) => {
            if d.len() != table.labels().size() {
                return Err(Error::InvalidDistribution(format!(
                    "{} label weights for {} labels",
                    d.len(),
                    table.labels().size()
                )));
            }
            crate::logic::task::validate_distribution(d)?;
            d.to_vec()
        }
        None => default_label_dist(task, table)?,
    };
    let n = table.concepts().size();
    let mut value = 0.0;
    let mut warnings = Vec::new();
    for (y, p) in dist.iter().enumerate() {
        if *p == 0.0 {
            continue;
        }
        let bad = table.inconsistent_count(y);
        if bad == n {
            warnings.push(format!(
                "label {:?} has positive probability but no consistent concept vector",
                table.labels().vector_of(y)
            ));
        }
        value += p * bad as f64;
    }
    Ok(KnowledgeComplexity {
        value,
        label_dist: dist,
        warnings,
    })
}

/// Concept risk minus label risk. Infinite inputs propagate; two infinite
/// risks give NaN.
pub fn rs_risk(concept_nll: f64, label_nll: f64) -> f64 {
    concept_nll - label_nll
}

/// `1 - p/m` where `p` counts the columns of the `m x m` confusion matrix
/// that receive any mass.
pub fn collapse_metric(confusion: &[Vec<f64>]) -> Result<f64> {
    let m = confusion.len();
    if m == 0 || confusion.iter().any(|r| r.len() != m) {
        return Err(Error::InvalidArgument("confusion matrix must be square and nonempty".into()));
    }
    if confusion.iter().flatten().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::InvalidArgument("confusion entries must be finite and nonnegative".into()));
    }
    let used = (0..m).filter(|j| confusion.iter().any(|r| r[*j] > 0.0)).count();
    if used == 0 {
        return Err(Error::InvalidArgument("confusion matrix has no mass".into()));
    }
    Ok(1.0 - used as f64 / m as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logic::{build_beta_star, parse_task};

    #[test]
    fn go_stop_complexity() {
        let task = parse_task(
            "concept green : 2; concept red : 2; concept ped : 2; label go : 2;\n\
             knowledge { go=1 <-> (green=1 & red=0 & ped=0) }",
        )
        .unwrap();
        let table = build_beta_star(&task).unwrap();
        let kc = knowledge_complexity(&task, &table, None).unwrap();
        assert_eq!(kc.value, 4.0);
        assert!(kc.value <= 7.0);
        let point = knowledge_complexity(&task, &table, Some(&[0.0, 1.0])).unwrap();
        assert_eq!(point.value, 7.0);
    }

    #[test]
    fn bijection_and_trivial_knowledge() {
        let task = parse_task("concept A : 4; label Y : 4; knowledge { Y == A }").unwrap();
        let table = build_beta_star(&task).unwrap();
        for d in [[0.25; 4], [0.7, 0.1, 0.1, 0.1]] {
            assert!((knowledge_complexity(&task, &table, Some(&d)).unwrap().value - 3.0).abs() < 1e-12);
        }
        let free = parse_task("concept A : 2; label Y : 2; knowledge { A=0 | A=1 }").unwrap();
        let t = crate::logic::InferenceTable::compile(&free).unwrap();
        assert_eq!(knowledge_complexity(&free, &t, Some(&[1.0, 0.0])).unwrap().value, 0.0);
    }

    #[test]
    fn risk_and_collapse() {
        assert_eq!(rs_risk(0.3, 0.3), 0.0);
        assert_eq!(rs_risk(f64::INFINITY, 0.0), f64::INFINITY);
        assert!(rs_risk(0.1, 0.4) < 0.0);
        let eye: Vec<Vec<f64>> = (0..4).map(|i| (0..4).map(|j| (i == j) as u8 as f64).collect()).collect();
        assert_eq!(collapse_metric(&eye).unwrap(), 0.0);
        let one: Vec<Vec<f64>> = (0..4).map(|_| vec![1.0, 0.0, 0.0, 0.0]).collect();
        assert_eq!(collapse_metric(&one).unwrap(), 0.75);
        let two: Vec<Vec<f64>> = (0..4).map(|i| vec![(i < 2) as u8 as f64, 0.0, (i >= 2) as u8 as f64, 0.0]).collect();
        assert_eq!(collapse_metric(&two).unwrap(), 0.5);
        assert!(collapse_metric(&[vec![0.0]]).is_err());
    }
}
