use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::logic::formula::{Assignment, Formula};
use crate::logic::parse::TaskFile;
use crate::logic::space::{ConceptSpace, LabelSpace, Variable};

/// A validated prediction task: spaces, knowledge and ground-truth support.
#[derive(Clone, Debug, PartialEq)]
pub struct TaskSpec {
    concepts: ConceptSpace,
    labels: LabelSpace,
    knowledge: Formula,
    desugared: Formula,
    /// Concept-space indices, sorted and deduplicated.
    support: Vec<usize>,
    /// Aligned with `support`.
    ground_truth: Option<Vec<f64>>,
    cap: u64,
}

impl TaskSpec {
    pub fn new(
        concepts: ConceptSpace,
        labels: LabelSpace,
        knowledge: Formula,
        support: Option<Vec<Vec<u32>>>,
        ground_truth: Option<Vec<f64>>,
        cap: u64,
    ) -> Result<Self> {
        let vars: Vec<Variable> = concepts.vars().iter().chain(labels.vars()).cloned().collect();
        if let Some(v) = knowledge.variables().into_iter().find(|v| *v >= vars.len()) {
            return Err(Error::UndeclaredVariable(format!("#{v}")));
        }
        check_atoms(&knowledge, &vars)?;
        let desugared = knowledge.desugar(&vars, cap)?;

        let (support, ground_truth) = match support {
            None => {
                if ground_truth.is_some() {
                    return Err(Error::InvalidTask(
                        "a ground-truth distribution needs an explicit support".into(),
                    ));
                }
                ((0..concepts.size()).collect(), None)
            }
            Some(rows) => {
                let mut pairs = Vec::with_capacity(rows.len());
                for (i, row) in rows.iter().enumerate() {
                    if !concepts.contains(row) {
                        return Err(Error::InvalidTask(format!(
                            "support vector {row:?} is not in the concept space"
                        )));
                    }
                    pairs.push((concepts.index_of(row), ground_truth.as_ref().map(|d| d.get(i).copied())));
                }
                if let Some(d) = &ground_truth {
                    if d.len() != rows.len() {
                        return Err(Error::InvalidDistribution(format!(
                            "{} weights for {} support vectors",
                            d.len(),
                            rows.len()
                        )));
                    }
                }
                pairs.sort_by_key(|p| p.0);
                let before = pairs.len();
                pairs.dedup_by_key(|p| p.0);
                if ground_truth.is_some() && pairs.len() != before {
                    return Err(Error::InvalidDistribution(
                        "weighted support lists a vector twice".into(),
                    ));
                }
                let idx: Vec<usize> = pairs.iter().map(|p| p.0).collect();
                let dist = ground_truth
                    .is_some()
                    .then(|| pairs.iter().map(|p| p.1.flatten().unwrap()).collect::<Vec<f64>>());
                (idx, dist)
            }
        };
        if support.is_empty() {
            return Err(Error::InvalidTask("support must be nonempty".into()));
        }
        if let Some(d) = &ground_truth {
            validate_distribution(d)?;
        }
        Ok(Self {
            concepts,
            labels,
            knowledge,
            desugared,
            support,
            ground_truth,
            cap,
        })
    }

    pub fn concepts(&self) -> &ConceptSpace {
        &self.concepts
    }

    pub fn labels(&self) -> &LabelSpace {
        &self.labels
    }

    /// Knowledge as written, arithmetic sugar included.
    pub fn knowledge(&self) -> &Formula {
        &self.knowledge
    }

    /// Purely propositional knowledge.
    pub fn desugared(&self) -> &Formula {
        &self.desugared
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn support_vectors(&self) -> Vec<Vec<u32>> {
        self.support.iter().map(|i| self.concepts.vector_of(*i)).collect()
    }

    pub fn ground_truth(&self) -> Option<&[f64]> {
        self.ground_truth.as_deref()
    }

    pub fn cap(&self) -> u64 {
        self.cap
    }

    pub fn is_full_support(&self) -> bool {
        self.support.len() == self.concepts.size()
    }

    /// Concept names followed by label names.
    pub fn variable_names(&self) -> Vec<String> {
        self.concepts
            .vars()
            .iter()
            .chain(self.labels.vars())
            .map(|v| v.name.clone())
            .collect()
    }

    pub fn variables(&self) -> Vec<Variable> {
        self.concepts.vars().iter().chain(self.labels.vars()).cloned().collect()
    }

    /// Same task with a different support (and no ground-truth weights).
    pub fn with_support(&self, support: Vec<Vec<u32>>) -> Result<TaskSpec> {
        TaskSpec::new(
            self.concepts.clone(),
            self.labels.clone(),
            self.knowledge.clone(),
            Some(support),
            None,
            self.cap,
        )
    }

    /// Truth of the knowledge on a total (concepts, labels) assignment.
    pub fn satisfies(&self, concepts: &[u32], labels: &[u32]) -> bool {
        let n = concepts.len();
        self.desugared
            .eval(&|v| if v < n { concepts.get(v).copied() } else { labels.get(v - n).copied() })
            .expect("total assignment")
    }

    pub fn evaluate(&self, a: &Assignment) -> Result<bool> {
        let names = self.variable_names();
        self.desugared
            .eval(&|v| a.get(v))
            .map_err(|v| Error::MissingVariable(names[v].clone()))
    }

    /// Renders the task in the DSL; `parse_task` reads it back unchanged.
    pub fn pretty_print(&self) -> String {
        let mut out = String::new();
        for v in self.concepts.vars() {
            let _ = writeln!(out, "concept {} : {};", v.name, v.card);
        }
        for v in self.labels.vars() {
            let _ = writeln!(out, "label {} : {};", v.name, v.card);
        }
        if !self.is_full_support() || self.ground_truth.is_some() {
            out.push_str("support {\n");
            for (i, idx) in self.support.iter().enumerate() {
                let v = self.concepts.vector_of(*idx);
                let tuple: Vec<String> = v.iter().map(|x| x.to_string()).collect();
                let _ = write!(out, "  ({})", tuple.join(","));
                if let Some(d) = &self.ground_truth {
                    // `{:?}` keeps enough digits to round-trip exactly
                    let _ = write!(out, " @ {:?}", d[i]);
                }
                out.push_str(";\n");
            }
            out.push_str("}\n");
        }
        let names = self.variable_names();
        let _ = writeln!(out, "knowledge {{ {} }}", self.knowledge.display(&names));
        out
    }

    pub fn to_file(&self) -> TaskFile {
        let names = self.variable_names();
        let explicit = !self.is_full_support() || self.ground_truth.is_some();
        TaskFile {
            concepts: self.concepts.vars().to_vec(),
            labels: self.labels.vars().to_vec(),
            support: explicit.then(|| self.support_vectors()),
            ground_truth_dist: self.ground_truth.clone(),
            knowledge: self.knowledge.display(&names).to_string(),
        }
    }
}

fn check_atoms(f: &Formula, vars: &[Variable]) -> Result<()> {
    match f {
        Formula::Atom { var, value } => {
            if *value >= vars[*var].card {
                return Err(Error::OutOfRange {
                    variable: vars[*var].name.clone(),
                    value: *value as i64,
                    card: vars[*var].card,
                });
            }
            Ok(())
        }
        Formula::Not(g) => check_atoms(g, vars),
        Formula::Binary { lhs, rhs, .. } => {
            check_atoms(lhs, vars)?;
            check_atoms(rhs, vars)
        }
        Formula::Const(_) | Formula::Compare { .. } => Ok(()),
    }
}

pub(crate) fn validate_distribution(d: &[f64]) -> Result<()> {
    if d.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(Error::InvalidDistribution("entries must be finite and nonnegative".into()));
    }
    let total: f64 = d.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidDistribution(format!("sums to {total}, expected 1")));
    }
    Ok(())
}

/// Every satisfying (concept vector, label vector), lexicographic in the
/// concatenated vector.
pub fn enumerate_models(task: &TaskSpec) -> Result<Vec<(Vec<u32>, Vec<u32>)>> {
    let joint = task.concepts().size() as u128 * task.labels().size() as u128;
    if joint > task.cap() as u128 {
        return Err(Error::CapExceeded {
            size: joint,
            cap: task.cap() as u128,
        });
    }
    let mut out = Vec::new();
    for c in task.concepts().vectors() {
        for y in task.labels().vectors() {
            if evaluate(task, &c, &y)? {
                out.push((c.clone(), y));
            }
        }
    }
    Ok(out)
}

fn evaluate(task: &TaskSpec, c: &[u32], y: &[u32]) -> Result<bool> {
    crate::logic::formula::evaluate(task.desugared(), &Assignment::total(c, y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logic::parse::parse_task;

    #[test]
    fn boia_has_one_model_per_concept_vector() {
        let t = parse_task(
            "concept C_red : 2; concept C_ped : 2; label Y : 2;\nknowledge { (C_ped=1 | C_red=1) <-> Y=0 }",
        )
        .unwrap();
        let models = enumerate_models(&t).unwrap();
        assert_eq!(models.len(), 4);
        let red = Assignment::total(&[1, 0], &[0]);
        let go = Assignment::total(&[0, 0], &[0]);
        assert!(t.evaluate(&red).unwrap());
        assert!(!t.evaluate(&go).unwrap());
        assert!(matches!(
            t.evaluate(&Assignment::total(&[1, 0], &[])),
            Err(Error::MissingVariable(n)) if n == "Y"
        ));
    }

    #[test]
    fn bit_sum_models() {
        let t = parse_task("concept A : 2; concept B : 2; label S : 3; knowledge { S == A + B }").unwrap();
        let models = enumerate_models(&t).unwrap();
        let flat: Vec<_> = models.iter().map(|(c, y)| (c[0], c[1], y[0])).collect();
        assert_eq!(flat, vec![(0, 0, 0), (0, 1, 1), (1, 0, 1), (1, 1, 2)]);
    }

    #[test]
    fn contradiction_has_no_models() {
        let t = parse_task("concept A : 2; label Y : 2; knowledge { A=0 & !(A=0) }").unwrap();
        assert!(enumerate_models(&t).unwrap().is_empty());
    }

    #[test]
    fn weighted_support_round_trips() {
        let text = "concept A : 3; label Y : 3;\nsupport { (2) @ 0.25; (0) @ 0.75; }\nknowledge { Y == A }";
        let t = parse_task(text).unwrap();
        assert_eq!(t.support(), &[0, 2]);
        assert_eq!(t.ground_truth(), Some(&[0.75, 0.25][..]));
        assert_eq!(parse_task(&t.pretty_print()).unwrap(), t);
        let json = serde_json::to_string(&t.to_file()).unwrap();
        assert_eq!(parse_task(&json).unwrap(), t);
    }

    #[test]
    fn bad_distribution_is_rejected() {
        let text = "concept A : 2; label Y : 2; support { (0) @ 0.5; (1) @ 0.6; } knowledge { Y == A }";
        assert!(matches!(parse_task(text), Err(Error::InvalidDistribution(_))));
    }
}
