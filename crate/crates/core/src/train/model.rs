use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analysis::ConceptRemap;
use crate::error::{Error, Result};
use crate::inference::{ConceptDistribution, ConceptLogits};
use crate::logic::Space;
use crate::numeric::softmax;
use crate::train::data::{Render, Renderer};

/// Dense layer `y = W x + b` with `W` stored row-major (`out x inp`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub inp: usize,
    pub out: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl Linear {
    /// Glorot-uniform weights, zero bias.
    pub fn new<R: Rng>(inp: usize, out: usize, rng: &mut R) -> Self {
        let a = (6.0 / (inp + out) as f64).sqrt();
        Self {
            inp,
            out,
            w: (0..inp * out).map(|_| rng.gen_range(-a..a)).collect(),
            b: vec![0.0; out],
        }
    }

    pub fn zeros(inp: usize, out: usize) -> Self {
        Self {
            inp,
            out,
            w: vec![0.0; inp * out],
            b: vec![0.0; out],
        }
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        (0..self.out)
            .map(|r| self.b[r] + self.w[r * self.inp..(r + 1) * self.inp].iter().zip(x).map(|(w, v)| w * v).sum::<f64>())
            .collect()
    }

    /// Accumulates parameter gradients into `grad` and returns `dL/dx`.
    pub fn backward(&self, x: &[f64], dy: &[f64], grad: &mut Linear) -> Vec<f64> {
        let mut dx = vec![0.0; self.inp];
        for r in 0..self.out {
            let g = dy[r];
            if g == 0.0 {
                continue;
            }
            grad.b[r] += g;
            let row = r * self.inp;
            for c in 0..self.inp {
                grad.w[row + c] += g * x[c];
                dx[c] += g * self.w[row + c];
            }
        }
        dx
    }

    fn len(&self) -> usize {
        self.w.len() + self.b.len()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadMode {
    /// Shared trunk, one categorical head per slot.
    #[default]
    PerSlot,
    /// Shared trunk, one categorical head over the joint space.
    Joint,
    /// One small classifier applied to each slot's input block.
    Disentangled,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    #[serde(default = "default_hidden")]
    pub hidden: usize,
    #[serde(default)]
    pub head_mode: HeadMode,
    #[serde(default = "default_tau")]
    pub tau: f64,
}

fn default_hidden() -> usize {
    16
}

fn default_tau() -> f64 {
    1.0
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden: default_hidden(),
            head_mode: HeadMode::PerSlot,
            tau: 1.0,
        }
    }
}

/// Concept extractor: one tanh hidden layer and linear concept heads, with
/// an optional label head (for Semantic Loss training) and an optional
/// linear decoder from concept marginals back to the input.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Extractor {
    pub mode: HeadMode,
    pub cards: Vec<u32>,
    pub input_dim: usize,
    pub tau: f64,
    pub trunk: Linear,
    pub heads: Vec<Linear>,
    pub label_head: Option<Linear>,
    pub decoder: Option<Linear>,
}

/// Activations kept for the backward pass.
#[derive(Clone, Debug)]
pub struct Forward {
    pub hidden: Vec<Vec<f64>>,
    pub logits: ConceptLogits,
    pub label_logits: Option<Vec<f64>>,
}

impl Extractor {
    pub fn new(
        cfg: &ModelConfig,
        renderer: &Renderer,
        label_head: Option<usize>,
        decoder: bool,
        seed: u64,
    ) -> Result<Self> {
        if cfg.hidden == 0 {
            return Err(Error::InvalidArgument("hidden width must be positive".into()));
        }
        if !(cfg.tau.is_finite() && cfg.tau > 0.0) {
            return Err(Error::InvalidArgument(format!("temperature must be positive, got {}", cfg.tau)));
        }
        if decoder && renderer.render == Render::Entangled {
            return Err(Error::Unsupported("a reconstruction decoder needs the blockwise render".into()));
        }
        let cards = renderer.cards.clone();
        let dim = renderer.dim();
        let h = cfg.hidden;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (trunk, heads, feat) = match cfg.head_mode {
            HeadMode::PerSlot => {
                let trunk = Linear::new(dim, h, &mut rng);
                let heads = cards.iter().map(|k| Linear::new(h, *k as usize, &mut rng)).collect();
                (trunk, heads, h)
            }
            HeadMode::Joint => {
                let size: usize = cards.iter().map(|k| *k as usize).product();
                let trunk = Linear::new(dim, h, &mut rng);
                (trunk, vec![Linear::new(h, size, &mut rng)], h)
            }
            HeadMode::Disentangled => {
                if renderer.render != Render::Blockwise {
                    return Err(Error::Unsupported("disentangled heads need the blockwise render".into()));
                }
                let k = match cards.iter().all(|c| *c == cards[0]) {
                    true => cards[0] as usize,
                    false => return Err(Error::HeterogeneousDomains),
                };
                let trunk = Linear::new(k, h, &mut rng);
                (trunk, vec![Linear::new(h, k, &mut rng)], h * cards.len())
            }
        };
        let label_head = label_head.map(|ny| Linear::new(feat, ny, &mut rng));
        let decoder = decoder.then(|| Linear::new(dim, dim, &mut rng));
        Ok(Self {
            mode: cfg.head_mode,
            cards,
            input_dim: dim,
            tau: cfg.tau,
            trunk,
            heads,
            label_head,
            decoder,
        })
    }

    fn blocks<'a>(&self, x: &'a [f64]) -> Vec<&'a [f64]> {
        match self.mode {
            HeadMode::Disentangled => {
                let k = self.cards[0] as usize;
                x.chunks(k).collect()
            }
            _ => vec![x],
        }
    }

    pub fn forward(&self, x: &[f64]) -> Forward {
        let hidden: Vec<Vec<f64>> = self
            .blocks(x)
            .into_iter()
            .map(|b| self.trunk.forward(b).into_iter().map(f64::tanh).collect())
            .collect();
        let logits = match self.mode {
            HeadMode::PerSlot => ConceptLogits::PerSlot(self.heads.iter().map(|l| l.forward(&hidden[0])).collect()),
            HeadMode::Joint => ConceptLogits::Joint(self.heads[0].forward(&hidden[0])),
            HeadMode::Disentangled => ConceptLogits::PerSlot(hidden.iter().map(|h| self.heads[0].forward(h)).collect()),
        };
        let label_logits = self.label_head.as_ref().map(|l| l.forward(&hidden.concat()));
        Forward {
            hidden,
            logits,
            label_logits,
        }
    }

    /// Same architecture with every parameter zero, used as a gradient buffer.
    pub fn zeros_like(&self) -> Self {
        let z = |l: &Linear| Linear::zeros(l.inp, l.out);
        Self {
            mode: self.mode,
            cards: self.cards.clone(),
            input_dim: self.input_dim,
            tau: self.tau,
            trunk: z(&self.trunk),
            heads: self.heads.iter().map(z).collect(),
            label_head: self.label_head.as_ref().map(z),
            decoder: self.decoder.as_ref().map(z),
        }
    }

    /// Backpropagates logit and label-logit gradients through the network,
    /// accumulating into `grad`.
    pub fn backward(&self, x: &[f64], fwd: &Forward, dlogits: &ConceptLogits, dlabel: Option<&[f64]>, grad: &mut Extractor) {
        let mut dh: Vec<Vec<f64>> = fwd.hidden.iter().map(|h| vec![0.0; h.len()]).collect();
        match (self.mode, dlogits) {
            (HeadMode::PerSlot, ConceptLogits::PerSlot(d)) => {
                for ((l, g), dz) in self.heads.iter().zip(grad.heads.iter_mut()).zip(d) {
                    add(&mut dh[0], &l.backward(&fwd.hidden[0], dz, g));
                }
            }
            (HeadMode::Joint, ConceptLogits::Joint(dz)) => {
                add(&mut dh[0], &self.heads[0].backward(&fwd.hidden[0], dz, &mut grad.heads[0]));
            }
            (HeadMode::Disentangled, ConceptLogits::PerSlot(d)) => {
                for (i, dz) in d.iter().enumerate() {
                    add(&mut dh[i], &self.heads[0].backward(&fwd.hidden[i], dz, &mut grad.heads[0]));
                }
            }
            _ => panic!("logit gradient shape does not match the head mode"),
        }
        if let (Some(l), Some(dy), Some(g)) = (&self.label_head, dlabel, grad.label_head.as_mut()) {
            let dcat = l.backward(&fwd.hidden.concat(), dy, g);
            for (i, chunk) in dcat.chunks(self.trunk.out).enumerate() {
                add(&mut dh[i], chunk);
            }
        }
        for ((b, h), d) in self.blocks(x).into_iter().zip(&fwd.hidden).zip(&dh) {
            let da: Vec<f64> = h.iter().zip(d).map(|(h, d)| d * (1.0 - h * h)).collect();
            self.trunk.backward(b, &da, &mut grad.trunk);
        }
    }

    fn layers(&self) -> Vec<&Linear> {
        let mut v = vec![&self.trunk];
        v.extend(self.heads.iter());
        v.extend(self.label_head.iter());
        v.extend(self.decoder.iter());
        v
    }

    fn layers_mut(&mut self) -> Vec<&mut Linear> {
        let mut v = vec![&mut self.trunk];
        v.extend(self.heads.iter_mut());
        v.extend(self.label_head.iter_mut());
        v.extend(self.decoder.iter_mut());
        v
    }

    pub fn num_params(&self) -> usize {
        self.layers().iter().map(|l| l.len()).sum()
    }

    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in self.layers() {
            out.extend_from_slice(&l.w);
            out.extend_from_slice(&l.b);
        }
        out
    }

    pub fn set_params(&mut self, p: &[f64]) {
        assert_eq!(p.len(), self.num_params(), "parameter vector length");
        let mut at = 0;
        for l in self.layers_mut() {
            let (nw, nb) = (l.w.len(), l.b.len());
            l.w.copy_from_slice(&p[at..at + nw]);
            l.b.copy_from_slice(&p[at + nw..at + nw + nb]);
            at += nw + nb;
        }
    }
}

fn add(acc: &mut [f64], v: &[f64]) {
    for (a, b) in acc.iter_mut().zip(v) {
        *a += b;
    }
}

/// What a model says about one input.
#[derive(Clone, Debug)]
pub struct Prediction {
    pub concepts: ConceptDistribution,
    /// Set when the model has its own label head.
    pub label_probs: Option<Vec<f64>>,
}

pub trait ConceptModel: Sync {
    fn predict(&self, x: &[f64]) -> Prediction;
}

impl ConceptModel for Extractor {
    fn predict(&self, x: &[f64]) -> Prediction {
        let f = self.forward(x);
        Prediction {
            concepts: ConceptDistribution::from_logits(&f.logits, self.tau),
            label_probs: f.label_logits.map(|z| softmax(&z, 1.0)),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum OracleMap {
    /// Decode the ground truth, then apply the remap.
    Remap(ConceptRemap),
    /// Uniform over every slot regardless of the input.
    Uniform,
}

/// Hand-built extractor: the renderer's inverse composed with a fixed remap.
#[derive(Clone, Debug)]
pub struct Oracle {
    pub renderer: Renderer,
    pub space: Space,
    pub map: OracleMap,
}

impl ConceptModel for Oracle {
    fn predict(&self, x: &[f64]) -> Prediction {
        let concepts = match &self.map {
            OracleMap::Remap(a) => {
                let g = self.renderer.decode(x);
                let c = a.apply(&g).unwrap_or(g);
                ConceptDistribution::one_hot(&self.space, &c)
            }
            OracleMap::Uniform => ConceptDistribution::Factorized {
                slots: self.space.cards().iter().map(|k| vec![1.0 / *k as f64; *k as usize]).collect(),
                temperature: None,
            },
        };
        Prediction {
            concepts,
            label_probs: None,
        }
    }
}
