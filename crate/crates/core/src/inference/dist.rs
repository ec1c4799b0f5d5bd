use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::logic::Space;
use crate::numeric::{argmax, softmax, softmax_backward};

const TOL: f64 = 1e-9;

/// A point in the concept simplex, either one categorical per slot or a
/// full table over the joint space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConceptDistribution {
    Factorized {
        slots: Vec<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        temperature: Option<f64>,
    },
    Tabular {
        probs: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        temperature: Option<f64>,
    },
}

fn check_simplex(p: &[f64], what: &str) -> Result<()> {
    if p.is_empty() || p.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::InvalidDistribution(format!(
            "{what} must be nonempty with finite nonnegative entries"
        )));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > TOL {
        return Err(Error::InvalidDistribution(format!("{what} sums to {s}")));
    }
    Ok(())
}

impl ConceptDistribution {
    pub fn factorized(slots: Vec<Vec<f64>>) -> Result<Self> {
        for (i, s) in slots.iter().enumerate() {
            check_simplex(s, &format!("slot {i}"))?;
        }
        Ok(Self::Factorized {
            slots,
            temperature: None,
        })
    }

    pub fn tabular(probs: Vec<f64>) -> Result<Self> {
        check_simplex(&probs, "table")?;
        Ok(Self::Tabular {
            probs,
            temperature: None,
        })
    }

    pub fn one_hot(space: &Space, c: &[u32]) -> Self {
        let slots = space
            .vars()
            .iter()
            .zip(c)
            .map(|(v, x)| {
                let mut s = vec![0.0; v.card as usize];
                s[*x as usize] = 1.0;
                s
            })
            .collect();
        Self::Factorized {
            slots,
            temperature: None,
        }
    }

    pub fn from_logits(logits: &ConceptLogits, tau: f64) -> Self {
        let temperature = (tau != 1.0).then_some(tau);
        match logits {
            ConceptLogits::PerSlot(z) => Self::Factorized {
                slots: z.iter().map(|s| softmax(s, tau)).collect(),
                temperature,
            },
            ConceptLogits::Joint(z) => Self::Tabular {
                probs: softmax(z, tau),
                temperature,
            },
        }
    }

    pub fn temperature(&self) -> Option<f64> {
        match self {
            Self::Factorized { temperature, .. } | Self::Tabular { temperature, .. } => *temperature,
        }
    }

    /// Checks shape against `space`.
    pub fn validate(&self, space: &Space) -> Result<()> {
        match self {
            Self::Factorized { slots, .. } => {
                if slots.len() != space.len() {
                    return Err(Error::InvalidDistribution(format!(
                        "{} slots for {} concepts",
                        slots.len(),
                        space.len()
                    )));
                }
                for (i, (s, v)) in slots.iter().zip(space.vars()).enumerate() {
                    if s.len() != v.card as usize {
                        return Err(Error::InvalidDistribution(format!(
                            "slot {i} has {} entries, `{}` has cardinality {}",
                            s.len(),
                            v.name,
                            v.card
                        )));
                    }
                    check_simplex(s, &format!("slot {i}"))?;
                }
            }
            Self::Tabular { probs, .. } => {
                if probs.len() != space.size() {
                    return Err(Error::InvalidDistribution(format!(
                        "table has {} entries for a space of {}",
                        probs.len(),
                        space.size()
                    )));
                }
                check_simplex(probs, "table")?;
            }
        }
        Ok(())
    }

    /// Probability of every joint concept vector, in lexicographic order.
    pub fn joint(&self, space: &Space) -> Vec<f64> {
        match self {
            Self::Tabular { probs, .. } => probs.clone(),
            Self::Factorized { slots, .. } => product_table(slots, space.size()),
        }
    }

    /// Per-slot marginals.
    pub fn marginals(&self, space: &Space) -> Vec<Vec<f64>> {
        match self {
            Self::Factorized { slots, .. } => slots.clone(),
            Self::Tabular { probs, .. } => {
                let mut out: Vec<Vec<f64>> =
                    space.vars().iter().map(|v| vec![0.0; v.card as usize]).collect();
                for (i, p) in probs.iter().enumerate() {
                    for (slot, x) in space.vector_of(i).iter().enumerate() {
                        out[slot][*x as usize] += p;
                    }
                }
                out
            }
        }
    }

    /// Most probable concept vector; ties go to the lexicographically first.
    pub fn argmax(&self, space: &Space) -> Vec<u32> {
        match self {
            Self::Factorized { slots, .. } => slots.iter().map(|s| argmax(s) as u32).collect(),
            Self::Tabular { probs, .. } => space.vector_of(argmax(probs)),
        }
    }
}

/// Product of per-slot categoricals, last slot fastest.
pub fn product_table(slots: &[Vec<f64>], size: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(size);
    out.push(1.0);
    for s in slots {
        let mut next = Vec::with_capacity(out.len() * s.len());
        for a in &out {
            for b in s {
                next.push(a * b);
            }
        }
        out = next;
    }
    out
}

/// A probability table over the label space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelDistribution {
    pub probs: Vec<f64>,
}

impl LabelDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        check_simplex(&probs, "label distribution")?;
        Ok(Self { probs })
    }

    /// Most probable label index; ties go to the first.
    pub fn argmax(&self) -> usize {
        argmax(&self.probs)
    }

    pub fn max(&self) -> f64 {
        self.probs.iter().cloned().fold(0.0, f64::max)
    }

    pub fn total_variation(&self, other: &[f64]) -> f64 {
        0.5 * self.probs.iter().zip(other).map(|(a, b)| (a - b).abs()).sum::<f64>()
    }
}

/// Unnormalized scores feeding a concept distribution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConceptLogits {
    PerSlot(Vec<Vec<f64>>),
    Joint(Vec<f64>),
}

impl ConceptLogits {
    pub fn flatten(&self) -> Vec<f64> {
        match self {
            Self::PerSlot(z) => z.iter().flatten().copied().collect(),
            Self::Joint(z) => z.clone(),
        }
    }

    /// Same shape as `self`, values taken from `flat`.
    pub fn reshape(&self, flat: &[f64]) -> Self {
        match self {
            Self::PerSlot(z) => {
                let mut off = 0;
                Self::PerSlot(
                    z.iter()
                        .map(|s| {
                            let v = flat[off..off + s.len()].to_vec();
                            off += s.len();
                            v
                        })
                        .collect(),
                )
            }
            Self::Joint(_) => Self::Joint(flat.to_vec()),
        }
    }

    pub fn validate(&self, space: &Space) -> Result<()> {
        let ok = match self {
            Self::PerSlot(z) => {
                z.len() == space.len()
                    && z.iter().zip(space.vars()).all(|(s, v)| s.len() == v.card as usize)
            }
            Self::Joint(z) => z.len() == space.size(),
        };
        if !ok {
            return Err(Error::InvalidArgument("logit shape does not match the concept space".into()));
        }
        if self.flatten().iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("logits must be finite".into()));
        }
        Ok(())
    }
}

/// Forward pass from logits to the joint concept table, kept for the
/// backward pass.
pub(crate) struct JointForward {
    pub slots: Option<Vec<Vec<f64>>>,
    pub q: Vec<f64>,
    pub tau: f64,
}

impl JointForward {
    pub fn new(logits: &ConceptLogits, space: &Space, tau: f64) -> Self {
        match logits {
            ConceptLogits::PerSlot(z) => {
                let slots: Vec<Vec<f64>> = z.iter().map(|s| softmax(s, tau)).collect();
                let q = product_table(&slots, space.size());
                Self {
                    slots: Some(slots),
                    q,
                    tau,
                }
            }
            ConceptLogits::Joint(z) => Self {
                slots: None,
                q: softmax(z, tau),
                tau,
            },
        }
    }

    /// Turns `dq` (gradient w.r.t. the joint table) into a logit gradient.
    pub fn backward(&self, dq: &[f64], space: &Space) -> ConceptLogits {
        match &self.slots {
            None => ConceptLogits::Joint(softmax_backward(&self.q, dq, self.tau)),
            Some(slots) => {
                let dp = slot_gradients(slots, dq, space);
                ConceptLogits::PerSlot(
                    slots
                        .iter()
                        .zip(&dp)
                        .map(|(p, g)| softmax_backward(p, g, self.tau))
                        .collect(),
                )
            }
        }
    }
}

/// Gradient w.r.t. each slot's probabilities of `sum_c dq(c) * prod_i p_i(c_i)`,
/// using prefix and suffix products so zero probabilities need no division.
pub(crate) fn slot_gradients(slots: &[Vec<f64>], dq: &[f64], space: &Space) -> Vec<Vec<f64>> {
    let k = slots.len();
    let mut out: Vec<Vec<f64>> = slots.iter().map(|s| vec![0.0; s.len()]).collect();
    let mut prefix = vec![1.0; k + 1];
    let mut suffix = vec![1.0; k + 1];
    for (ci, g) in dq.iter().enumerate() {
        if *g == 0.0 {
            continue;
        }
        let c = space.vector_of(ci);
        for i in 0..k {
            prefix[i + 1] = prefix[i] * slots[i][c[i] as usize];
        }
        for i in (0..k).rev() {
            suffix[i] = suffix[i + 1] * slots[i][c[i] as usize];
        }
        for i in 0..k {
            out[i][c[i] as usize] += g * prefix[i] * suffix[i + 1];
        }
    }
    out
}
