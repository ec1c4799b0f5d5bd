use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::{
    abl_loss_and_grad, ltn_loss_and_grad, pnsp_nll_and_grad, sl_joint_objective, ConceptDistribution, ConceptLogits,
};
use crate::logic::Space;
use crate::numeric::{softmax, softmax_backward};
use crate::train::data::{Dataset, Render};
use crate::train::model::{Extractor, Forward};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Objective {
    /// Label likelihood through the probabilistic-logic layer.
    PnspNll,
    /// Label-head cross-entropy plus `mu` times the Semantic Loss.
    Sl { mu: f64 },
    /// One minus the product-logic satisfaction of the knowledge.
    Ltn,
    /// Cross-entropy against abduced pseudo-labels.
    Abl,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Mitigation {
    /// Rewards high per-slot concept entropy.
    Entropy { weight: f64 },
    /// Softmax temperature of the concept heads.
    Smoothing { tau: f64 },
    /// Squared error of a linear decoder from concept marginals to the input.
    Reconstruction { weight: f64 },
    /// Concept labels for a seeded random fraction of the samples.
    Supervision { fraction: f64, seed: u64 },
    /// Pulls re-rendered copies of a sample together, pushes batch items apart.
    Contrastive { weight: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub objective: Objective,
    #[serde(default)]
    pub mitigations: Vec<Mitigation>,
    #[serde(default = "default_step")]
    pub step_size: f64,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    /// Full batch when absent.
    #[serde(default)]
    pub batch_size: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    /// Training stops once the label NLL on the training set drops below this.
    #[serde(default = "default_target")]
    pub target_nll: f64,
}

fn default_step() -> f64 {
    0.5
}

fn default_epochs() -> usize {
    500
}

fn default_target() -> f64 {
    1e-3
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            objective: Objective::PnspNll,
            mitigations: Vec::new(),
            step_size: default_step(),
            epochs: default_epochs(),
            batch_size: None,
            seed: 0,
            target_nll: default_target(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(self.step_size.is_finite() && self.step_size > 0.0) {
            return bad(format!("step size must be positive, got {}", self.step_size));
        }
        if self.epochs == 0 || self.batch_size == Some(0) {
            return bad("epochs and batch size must be positive".into());
        }
        if let Objective::Sl { mu } = self.objective {
            if !(mu.is_finite() && mu > 0.0) {
                return bad(format!("mu must be positive, got {mu}"));
            }
        }
        for m in &self.mitigations {
            match *m {
                Mitigation::Entropy { weight } | Mitigation::Reconstruction { weight } | Mitigation::Contrastive { weight } => {
                    if !(weight.is_finite() && weight >= 0.0) {
                        return bad(format!("mitigation weight must be nonnegative, got {weight}"));
                    }
                }
                Mitigation::Smoothing { tau } => {
                    if !(tau.is_finite() && tau >= 1.0) {
                        return bad(format!("smoothing temperature must be at least 1, got {tau}"));
                    }
                }
                Mitigation::Supervision { fraction, .. } => {
                    if !(0.0..=1.0).contains(&fraction) {
                        return bad(format!("supervision fraction must lie in [0, 1], got {fraction}"));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn smoothing(&self) -> Option<f64> {
        self.mitigations.iter().find_map(|m| match m {
            Mitigation::Smoothing { tau } => Some(*tau),
            _ => None,
        })
    }

    pub fn wants_decoder(&self) -> bool {
        self.mitigations.iter().any(|m| matches!(m, Mitigation::Reconstruction { .. }))
    }

    fn weight(&self, f: impl Fn(&Mitigation) -> Option<f64>) -> f64 {
        self.mitigations.iter().filter_map(f).sum()
    }
}

/// Inputs to training that come from outside the configuration.
#[derive(Clone, Debug, Default)]
pub struct Extras<'a> {
    /// `(sample, slot)` pairs whose ground-truth concept is revealed.
    pub annotations: Vec<(usize, usize)>,
    /// Frozen models whose concept predictions this one is pushed away from.
    pub peers: &'a [Extractor],
    pub diversity: f64,
}

/// Per-run terms resolved from the configuration and extras.
pub(crate) struct Terms<'a> {
    pub objective: Objective,
    pub entropy: f64,
    pub reconstruction: f64,
    pub contrastive: f64,
    /// `supervised[sample][slot]`.
    pub supervised: Vec<Vec<bool>>,
    pub peers: &'a [Extractor],
    pub diversity: f64,
}

impl<'a> Terms<'a> {
    pub fn new(cfg: &TrainConfig, data: &Dataset, extras: &Extras<'a>) -> Result<Self> {
        cfg.validate()?;
        let k = data.task.concepts().len();
        if cfg.objective == Objective::Ltn && data.task.concepts().cards().iter().any(|c| *c != 2) {
            return Err(Error::Unsupported("fuzzy semantics needs binary concepts".into()));
        }
        if cfg.wants_decoder() && data.renderer.render == Render::Entangled {
            return Err(Error::Unsupported("reconstruction needs the blockwise render".into()));
        }
        let mut supervised = vec![vec![false; k]; data.len()];
        for m in &cfg.mitigations {
            if let Mitigation::Supervision { fraction, seed } = m {
                let mut idx: Vec<usize> = (0..data.len()).collect();
                idx.shuffle(&mut ChaCha8Rng::seed_from_u64(*seed));
                let take = (fraction * data.len() as f64).round() as usize;
                for i in &idx[..take] {
                    supervised[*i].iter_mut().for_each(|s| *s = true);
                }
            }
        }
        for (i, s) in &extras.annotations {
            if *i >= data.len() || *s >= k {
                return Err(Error::InvalidArgument(format!("annotation ({i}, {s}) out of range")));
            }
            supervised[*i][*s] = true;
        }
        if !(extras.diversity.is_finite() && extras.diversity >= 0.0) {
            return Err(Error::InvalidArgument("diversity weight must be nonnegative".into()));
        }
        Ok(Self {
            objective: cfg.objective,
            entropy: cfg.weight(|m| match m {
                Mitigation::Entropy { weight } => Some(*weight),
                _ => None,
            }),
            reconstruction: cfg.weight(|m| match m {
                Mitigation::Reconstruction { weight } => Some(*weight),
                _ => None,
            }),
            contrastive: cfg.weight(|m| match m {
                Mitigation::Contrastive { weight } => Some(*weight),
                _ => None,
            }),
            supervised,
            peers: extras.peers,
            diversity: extras.diversity,
        })
    }
}

pub(crate) fn marginals(logits: &ConceptLogits, space: &Space, tau: f64) -> Vec<Vec<f64>> {
    match logits {
        ConceptLogits::PerSlot(z) => z.iter().map(|s| softmax(s, tau)).collect(),
        ConceptLogits::Joint(_) => ConceptDistribution::from_logits(logits, tau).marginals(space),
    }
}

/// Pulls a gradient with respect to the slot marginals back to the logits.
pub(crate) fn marginal_backward(logits: &ConceptLogits, space: &Space, tau: f64, dm: &[Vec<f64>]) -> ConceptLogits {
    match logits {
        ConceptLogits::PerSlot(z) => ConceptLogits::PerSlot(
            z.iter()
                .zip(dm)
                .map(|(s, d)| softmax_backward(&softmax(s, tau), d, tau))
                .collect(),
        ),
        ConceptLogits::Joint(z) => {
            let q = softmax(z, tau);
            let dq: Vec<f64> = (0..q.len())
                .map(|c| {
                    space
                        .vector_of(c)
                        .iter()
                        .zip(dm)
                        .map(|(v, d)| d[*v as usize])
                        .sum()
                })
                .collect();
            ConceptLogits::Joint(softmax_backward(&q, &dq, tau))
        }
    }
}

fn add_logits(a: &mut ConceptLogits, b: &ConceptLogits) {
    let sum: Vec<f64> = a.flatten().iter().zip(b.flatten()).map(|(x, y)| x + y).collect();
    *a = a.reshape(&sum);
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

const FLOOR: f64 = 1e-300;

/// Loss of one sample (before batch averaging), and its parameter gradient.
fn sample_loss(
    model: &Extractor,
    data: &Dataset,
    terms: &Terms,
    i: usize,
    fwd: &Forward,
    extra_dm: Option<&[Vec<f64>]>,
) -> Result<(f64, Extractor)> {
    let space = data.table.concepts();
    let tau = model.tau;
    let x = &data.inputs[i];
    let y = data.labels[i];
    let (mut loss, mut dlogits, dlabel) = match terms.objective {
        Objective::PnspNll => {
            let (l, g) = pnsp_nll_and_grad(&fwd.logits, y, &data.table, tau)?;
            (l, g, None)
        }
        Objective::Sl { mu } => {
            let h = fwd
                .label_logits
                .clone()
                .ok_or_else(|| Error::InvalidArgument("Semantic Loss training needs a label head".into()))?;
            let o = sl_joint_objective(std::slice::from_ref(&fwd.logits), &[h], &[y], mu, &data.table, tau)?;
            (o.loss, o.concept_grads[0].clone(), Some(o.label_grads[0].clone()))
        }
        Objective::Ltn => {
            let (l, g) = ltn_loss_and_grad(&fwd.logits, &data.label_vector(i), &data.task, tau)?;
            (l, g, None)
        }
        Objective::Abl => {
            let (l, g, _) = abl_loss_and_grad(&fwd.logits, y, &data.table, tau)?;
            (l, g, None)
        }
    };
    let mut grad = model.zeros_like();
    let m = marginals(&fwd.logits, space, tau);
    let k = m.len() as f64;
    let mut dm: Vec<Vec<f64>> = m.iter().map(|s| vec![0.0; s.len()]).collect();
    let mut touched = false;
    if terms.entropy > 0.0 {
        for (s, d) in m.iter().zip(dm.iter_mut()) {
            for (p, g) in s.iter().zip(d.iter_mut()) {
                let p = p.max(FLOOR);
                loss += terms.entropy / k * p * p.ln();
                *g += terms.entropy / k * (p.ln() + 1.0);
            }
        }
        touched = true;
    }
    for (slot, on) in terms.supervised[i].iter().enumerate() {
        if *on {
            let t = data.concepts[i][slot] as usize;
            let p = m[slot][t].max(FLOOR);
            loss -= p.ln();
            dm[slot][t] -= 1.0 / p;
            touched = true;
        }
    }
    if terms.diversity > 0.0 && !terms.peers.is_empty() {
        let c = terms.diversity / (terms.peers.len() as f64 * k);
        for peer in terms.peers {
            let pm = marginals(&peer.forward(x).logits, space, peer.tau);
            for ((s, ps), d) in m.iter().zip(&pm).zip(dm.iter_mut()) {
                loss += c * dot(s, ps);
                for (g, v) in d.iter_mut().zip(ps) {
                    *g += c * v;
                }
            }
        }
        touched = true;
    }
    if terms.reconstruction > 0.0 {
        let dec = model
            .decoder
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("reconstruction needs a decoder".into()))?;
        let flat = m.concat();
        let r = dec.forward(&flat);
        let w = terms.reconstruction / x.len() as f64;
        let dr: Vec<f64> = r.iter().zip(x).map(|(a, b)| 2.0 * w * (a - b)).collect();
        loss += r.iter().zip(x).map(|(a, b)| w * (a - b) * (a - b)).sum::<f64>();
        let dflat = dec.backward(&flat, &dr, grad.decoder.as_mut().expect("decoder gradient buffer"));
        let mut at = 0;
        for d in dm.iter_mut() {
            for g in d.iter_mut() {
                *g += dflat[at];
                at += 1;
            }
        }
        touched = true;
    }
    if let Some(extra) = extra_dm {
        for (d, e) in dm.iter_mut().zip(extra) {
            for (g, v) in d.iter_mut().zip(e) {
                *g += v;
            }
        }
        touched = true;
    }
    if touched {
        add_logits(&mut dlogits, &marginal_backward(&fwd.logits, space, tau, &dm));
    }
    model.backward(x, fwd, &dlogits, dlabel.as_deref(), &mut grad);
    Ok((loss, grad))
}

/// Mean loss over `batch` and its gradient as a flat parameter vector.
/// `positives[j]` is a fresh rendering of the concepts of `batch[j]`, used
/// only by the contrastive term.
pub(crate) fn batch_loss_and_grad(
    model: &Extractor,
    data: &Dataset,
    terms: &Terms,
    batch: &[usize],
    positives: &[Vec<f64>],
) -> Result<(f64, Vec<f64>)> {
    let b = batch.len();
    let space = data.table.concepts();
    let fwd: Vec<Forward> = batch.par_iter().map(|i| model.forward(&data.inputs[*i])).collect();
    let use_con = terms.contrastive > 0.0 && !positives.is_empty();
    let (mut extra, pos_fwd, pos_dm, con_loss) = if use_con {
        let pf: Vec<Forward> = positives.par_iter().map(|x| model.forward(x)).collect();
        let m: Vec<Vec<Vec<f64>>> = fwd.iter().map(|f| marginals(&f.logits, space, model.tau)).collect();
        let mp: Vec<Vec<Vec<f64>>> = pf.iter().map(|f| marginals(&f.logits, space, model.tau)).collect();
        let k = space.len() as f64;
        let w = terms.contrastive;
        let neg = if b > 1 { 1.0 / (b - 1) as f64 } else { 0.0 };
        let mut loss = 0.0;
        let mut dm: Vec<Vec<Vec<f64>>> = m.iter().map(|s| s.iter().map(|v| vec![0.0; v.len()]).collect()).collect();
        let mut dp = dm.clone();
        for a in 0..b {
            for slot in 0..m[a].len() {
                loss -= w / k * dot(&m[a][slot], &mp[a][slot]);
                for (t, v) in m[a][slot].iter().enumerate() {
                    dm[a][slot][t] -= w / k * mp[a][slot][t];
                    dp[a][slot][t] -= w / k * v;
                }
                for o in (0..b).filter(|o| *o != a) {
                    loss += w * neg / k * dot(&m[a][slot], &m[o][slot]);
                    for t in 0..m[a][slot].len() {
                        dm[a][slot][t] += 2.0 * w * neg / k * m[o][slot][t];
                    }
                }
            }
        }
        (dm.into_iter().map(Some).collect::<Vec<_>>(), pf, dp, loss)
    } else {
        (vec![None; b], Vec::new(), Vec::new(), 0.0)
    };
    let parts: Vec<(f64, Vec<f64>)> = batch
        .par_iter()
        .zip(fwd.par_iter())
        .zip(extra.par_iter_mut())
        .map(|((i, f), e)| {
            let (l, g) = sample_loss(model, data, terms, *i, f, e.take().as_deref())?;
            Ok((l, g.params()))
        })
        .collect::<Result<_>>()?;
    let pos_parts: Vec<Vec<f64>> = pos_fwd
        .par_iter()
        .zip(positives.par_iter())
        .zip(pos_dm.par_iter())
        .map(|((f, x), d)| {
            let mut g = model.zeros_like();
            let dl = marginal_backward(&f.logits, space, model.tau, d);
            model.backward(x, f, &dl, None, &mut g);
            g.params()
        })
        .collect();
    let mut loss = con_loss;
    let mut grad = vec![0.0; model.num_params()];
    for (l, g) in &parts {
        loss += l;
        for (a, v) in grad.iter_mut().zip(g) {
            *a += v;
        }
    }
    for g in &pos_parts {
        for (a, v) in grad.iter_mut().zip(g) {
            *a += v;
        }
    }
    let inv = 1.0 / b as f64;
    grad.iter_mut().for_each(|g| *g *= inv);
    Ok((loss * inv, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logic::parse_task;
    use crate::numeric::{central_difference, relative_error};
    use crate::train::data::{generate_dataset, SyntheticTaskConfig};
    use crate::train::model::{HeadMode, ModelConfig};
    use rand::Rng;

    const XOR: &str = "concept A : 2; concept B : 2; label Y : 2; knowledge { (A=1 ^ B=1) <-> Y=1 }";
    const SUM3: &str = "concept C1 : 3; concept C2 : 3; label S : 5; knowledge { S == C1 + C2 }";

    fn check(task: &str, mode: HeadMode, cfg: TrainConfig, annotate: bool, peers: usize) {
        let task = parse_task(task).unwrap();
        let data = generate_dataset(
            &task,
            &SyntheticTaskConfig { noise_rate: 0.1, samples_per_support_vector: 2, seed: 4, ..Default::default() },
        )
        .unwrap();
        let mc = ModelConfig { hidden: 5, head_mode: mode, tau: cfg.smoothing().unwrap_or(1.0) };
        let ny = matches!(cfg.objective, Objective::Sl { .. }).then(|| data.table.labels().size());
        let model = Extractor::new(&mc, &data.renderer, ny, cfg.wants_decoder(), 11).unwrap();
        let others: Vec<Extractor> = (0..peers)
            .map(|s| Extractor::new(&mc, &data.renderer, ny, cfg.wants_decoder(), 100 + s as u64).unwrap())
            .collect();
        let annotations = if annotate { vec![(0, 0), (3, 1), (5, 0)] } else { vec![] };
        let extras = Extras { annotations, peers: &others, diversity: if peers > 0 { 0.7 } else { 0.0 } };
        let terms = Terms::new(&cfg, &data, &extras).unwrap();
        let batch: Vec<usize> = vec![0, 3, 5, 6];
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let positives: Vec<Vec<f64>> = batch
            .iter()
            .map(|i| data.renderer.render(&data.concepts[*i], &mut rng).iter().map(|v| v + rng.gen_range(-0.1..0.1)).collect())
            .collect();
        let p0 = model.params();
        let (_, g) = batch_loss_and_grad(&model, &data, &terms, &batch, &positives).unwrap();
        let mut m = model.clone();
        let num = central_difference(
            &mut |p| {
                m.set_params(p);
                batch_loss_and_grad(&m, &data, &terms, &batch, &positives).unwrap().0
            },
            &p0,
            1e-5,
        );
        let err = relative_error(&g, &num);
        assert!(err < 1e-6, "{:?} {mode:?}: relative error {err}", cfg.objective);
    }

    #[test]
    fn objective_gradients() {
        for obj in [Objective::PnspNll, Objective::Sl { mu: 0.5 }, Objective::Abl] {
            for mode in [HeadMode::PerSlot, HeadMode::Joint, HeadMode::Disentangled] {
                check(SUM3, mode, TrainConfig { objective: obj, ..Default::default() }, false, 0);
            }
        }
        check(XOR, HeadMode::PerSlot, TrainConfig { objective: Objective::Ltn, ..Default::default() }, false, 0);
        check(XOR, HeadMode::Disentangled, TrainConfig { objective: Objective::Ltn, ..Default::default() }, false, 0);
    }

    #[test]
    fn mitigation_gradients() {
        let all = TrainConfig {
            mitigations: vec![
                Mitigation::Entropy { weight: 0.3 },
                Mitigation::Smoothing { tau: 1.5 },
                Mitigation::Reconstruction { weight: 0.8 },
                Mitigation::Supervision { fraction: 0.25, seed: 3 },
                Mitigation::Contrastive { weight: 0.6 },
            ],
            ..Default::default()
        };
        for mode in [HeadMode::PerSlot, HeadMode::Joint, HeadMode::Disentangled] {
            check(SUM3, mode, all.clone(), true, 2);
        }
    }

    #[test]
    fn config_checks() {
        let task = parse_task(SUM3).unwrap();
        let data = generate_dataset(&task, &SyntheticTaskConfig::default()).unwrap();
        let ltn = TrainConfig { objective: Objective::Ltn, ..Default::default() };
        assert!(matches!(Terms::new(&ltn, &data, &Extras::default()), Err(Error::Unsupported(_))));
        let bad = TrainConfig { mitigations: vec![Mitigation::Smoothing { tau: 0.5 }], ..Default::default() };
        assert!(bad.validate().is_err());
        let sup = TrainConfig { mitigations: vec![Mitigation::Supervision { fraction: 1.0, seed: 0 }], ..Default::default() };
        let t = Terms::new(&sup, &data, &Extras::default()).unwrap();
        assert!(t.supervised.iter().flatten().all(|s| *s));
        let json = r#"{"objective":{"kind":"sl","mu":0.5},"mitigations":[{"kind":"entropy","weight":0.1}]}"#;
        let cfg: TrainConfig = serde_json::from_str(json).unwrap();
        assert_eq!(cfg.epochs, 500);
        assert_eq!(cfg.objective, Objective::Sl { mu: 0.5 });
    }
}
