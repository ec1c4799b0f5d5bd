use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::logic::{build_beta_star, InferenceTable, TaskSpec};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Render {
    /// One one-hot block per concept slot.
    #[default]
    Blockwise,
    /// Blockwise followed by a fixed random invertible linear mix.
    Entangled,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticTaskConfig {
    #[serde(default)]
    pub render: Render,
    #[serde(default)]
    pub noise_rate: f64,
    pub samples_per_support_vector: usize,
    #[serde(default)]
    pub seed: u64,
}

impl Default for SyntheticTaskConfig {
    fn default() -> Self {
        Self {
            render: Render::Blockwise,
            noise_rate: 0.0,
            samples_per_support_vector: 10,
            seed: 0,
        }
    }
}

const MIX_STREAM: u64 = 0x6d69_7869_6e67;

/// Maps concept vectors to input vectors and back.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Renderer {
    pub cards: Vec<u32>,
    pub render: Render,
    pub noise_rate: f64,
    /// Row-major `dim x dim` mixing matrix and its inverse.
    mix: Option<(Vec<f64>, Vec<f64>)>,
}

/// Inverse by Gauss-Jordan elimination with partial pivoting; `None` when a
/// pivot falls below `tol`.
fn invert(a: &[f64], n: usize, tol: f64) -> Option<Vec<f64>> {
    let mut m = a.to_vec();
    let mut inv = vec![0.0; n * n];
    for i in 0..n {
        inv[i * n + i] = 1.0;
    }
    for col in 0..n {
        let piv = (col..n).max_by(|x, y| m[x * n + col].abs().total_cmp(&m[y * n + col].abs()))?;
        if m[piv * n + col].abs() < tol {
            return None;
        }
        for j in 0..n {
            m.swap(col * n + j, piv * n + j);
            inv.swap(col * n + j, piv * n + j);
        }
        let d = m[col * n + col];
        for j in 0..n {
            m[col * n + j] /= d;
            inv[col * n + j] /= d;
        }
        for r in 0..n {
            if r != col {
                let f = m[r * n + col];
                if f != 0.0 {
                    for j in 0..n {
                        m[r * n + j] -= f * m[col * n + j];
                        inv[r * n + j] -= f * inv[col * n + j];
                    }
                }
            }
        }
    }
    Some(inv)
}

fn matvec(a: &[f64], x: &[f64]) -> Vec<f64> {
    let n = x.len();
    (0..n).map(|r| (0..n).map(|c| a[r * n + c] * x[c]).sum()).collect()
}

impl Renderer {
    pub fn new(cards: Vec<u32>, render: Render, noise_rate: f64, seed: u64) -> Result<Self> {
        if !(0.0..0.5).contains(&noise_rate) {
            return Err(Error::InvalidArgument(format!("noise rate must lie in [0, 0.5), got {noise_rate}")));
        }
        let dim: usize = cards.iter().map(|k| *k as usize).sum();
        let mix = match render {
            Render::Blockwise => None,
            Render::Entangled => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ MIX_STREAM);
                loop {
                    let a: Vec<f64> = (0..dim * dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
                    if let Some(inv) = invert(&a, dim, 0.05) {
                        break Some((a, inv));
                    }
                }
            }
        };
        Ok(Self {
            cards,
            render,
            noise_rate,
            mix,
        })
    }

    pub fn dim(&self) -> usize {
        self.cards.iter().map(|k| *k as usize).sum()
    }

    /// Offset of each slot's block in the unmixed input.
    pub fn offsets(&self) -> Vec<usize> {
        let mut o = Vec::with_capacity(self.cards.len());
        let mut at = 0;
        for k in &self.cards {
            o.push(at);
            at += *k as usize;
        }
        o
    }

    /// One-hot blocks with each coordinate flipped at the noise rate, then
    /// mixed when entangled.
    pub fn render<R: Rng>(&self, g: &[u32], rng: &mut R) -> Vec<f64> {
        let mut x = vec![0.0; self.dim()];
        for (o, v) in self.offsets().iter().zip(g) {
            x[o + *v as usize] = 1.0;
        }
        if self.noise_rate > 0.0 {
            for v in &mut x {
                if rng.gen::<f64>() < self.noise_rate {
                    *v = 1.0 - *v;
                }
            }
        }
        match &self.mix {
            Some((a, _)) => matvec(a, &x),
            None => x,
        }
    }

    /// Ground-truth concepts recovered from an input: unmix, then the
    /// largest coordinate of each block.
    pub fn decode(&self, x: &[f64]) -> Vec<u32> {
        let x = match &self.mix {
            Some((_, inv)) => matvec(inv, x),
            None => x.to_vec(),
        };
        self.offsets()
            .iter()
            .zip(&self.cards)
            .map(|(o, k)| crate::numeric::argmax(&x[*o..*o + *k as usize]) as u32)
            .collect()
    }
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub task: TaskSpec,
    pub table: InferenceTable,
    pub renderer: Renderer,
    pub inputs: Vec<Vec<f64>>,
    pub concepts: Vec<Vec<u32>>,
    pub labels: Vec<usize>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn label_vector(&self, i: usize) -> Vec<u32> {
        self.table.labels().vector_of(self.labels[i])
    }
}

/// Every support vector rendered `samples_per_support_vector` times, grouped
/// by support vector in support order.
pub fn generate_dataset(task: &TaskSpec, cfg: &SyntheticTaskConfig) -> Result<Dataset> {
    if cfg.samples_per_support_vector == 0 {
        return Err(Error::InvalidArgument("samples_per_support_vector must be positive".into()));
    }
    let table = build_beta_star(task)?;
    let renderer = Renderer::new(task.concepts().cards(), cfg.render, cfg.noise_rate, cfg.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = task.support().len() * cfg.samples_per_support_vector;
    let mut inputs = Vec::with_capacity(n);
    let mut concepts = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for &gi in task.support() {
        let g = task.concepts().vector_of(gi);
        let y = table.label_of(gi).expect("deterministic on the support");
        for _ in 0..cfg.samples_per_support_vector {
            inputs.push(renderer.render(&g, &mut rng));
            concepts.push(g.clone());
            labels.push(y);
        }
    }
    Ok(Dataset {
        task: task.clone(),
        table,
        renderer,
        inputs,
        concepts,
        labels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logic::parse_task;

    fn xor() -> TaskSpec {
        parse_task("concept A : 2; concept B : 2; label Y : 2; knowledge { (A=1 ^ B=1) <-> Y=1 }").unwrap()
    }

    #[test]
    fn noiseless_blocks_are_one_hot() {
        let d = generate_dataset(&xor(), &SyntheticTaskConfig { samples_per_support_vector: 3, ..Default::default() }).unwrap();
        assert_eq!(d.len(), 12);
        for (x, g) in d.inputs.iter().zip(&d.concepts) {
            assert_eq!(x[..2].iter().sum::<f64>(), 1.0);
            assert_eq!(x[2 + g[1] as usize], 1.0);
            assert_eq!(d.renderer.decode(x), *g);
        }
        assert_eq!(d.labels, vec![0, 0, 0, 1, 1, 1, 1, 1, 1, 0, 0, 0]);
    }

    #[test]
    fn seeded_and_invertible() {
        let cfg = SyntheticTaskConfig {
            render: Render::Entangled,
            noise_rate: 0.1,
            samples_per_support_vector: 5,
            seed: 9,
        };
        let a = generate_dataset(&xor(), &cfg).unwrap();
        let b = generate_dataset(&xor(), &cfg).unwrap();
        assert_eq!(a.inputs, b.inputs);
        let clean = generate_dataset(&xor(), &SyntheticTaskConfig { noise_rate: 0.0, ..cfg.clone() }).unwrap();
        for (x, g) in clean.inputs.iter().zip(&clean.concepts) {
            assert_eq!(clean.renderer.decode(x), *g);
            // the mix spreads every block over all coordinates
            assert!(x.iter().filter(|v| v.abs() > 1e-12).count() > 2);
        }
        let high = SyntheticTaskConfig { noise_rate: 0.5, ..cfg };
        assert!(generate_dataset(&xor(), &high).is_err());
    }

    #[test]
    fn inverse_round_trip() {
        let a = vec![2.0, 1.0, 0.0, 1.0, 3.0, 1.0, 0.0, 1.0, 4.0];
        let inv = invert(&a, 3, 1e-9).unwrap();
        let x = vec![0.3, -1.0, 2.0];
        let back = matvec(&inv, &matvec(&a, &x));
        for (u, v) in back.iter().zip(&x) {
            assert!((u - v).abs() < 1e-12);
        }
        assert!(invert(&[1.0, 2.0, 2.0, 4.0], 2, 1e-9).is_none());
    }
}
