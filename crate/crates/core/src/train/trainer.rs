use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::train::data::Dataset;
use crate::train::eval::evaluate;
use crate::train::model::{Extractor, ModelConfig};
use crate::train::objective::{batch_loss_and_grad, Extras, Objective, Terms, TrainConfig};

const POSITIVE_STREAM: u64 = 0x706f_7369_7469_7665;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub label_nll: f64,
    pub label_accuracy: f64,
    pub concept_accuracy: f64,
    pub mean_entropy: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub extractor: Extractor,
    pub trajectory: Vec<EpochRecord>,
    /// The label NLL reached the target before the epoch limit.
    pub converged: bool,
}

/// Extractor shaped for the configuration: a label head for Semantic Loss,
/// a decoder for reconstruction, the smoothing temperature if any.
pub fn build_extractor(model: &ModelConfig, data: &Dataset, cfg: &TrainConfig, seed: u64) -> Result<Extractor> {
    let mut model = model.clone();
    if let Some(tau) = cfg.smoothing() {
        model.tau = tau;
    }
    let label_head = matches!(cfg.objective, Objective::Sl { .. }).then(|| data.table.labels().size());
    Extractor::new(&model, &data.renderer, label_head, cfg.wants_decoder(), seed)
}

pub fn train(extractor: Extractor, data: &Dataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    train_with(extractor, data, cfg, &Extras::default())
}

/// Gradient descent with a fixed step. Batches are drawn from a shuffle
/// seeded by the configuration, so runs are reproducible bit for bit.
pub fn train_with(mut extractor: Extractor, data: &Dataset, cfg: &TrainConfig, extras: &Extras) -> Result<TrainOutcome> {
    if data.is_empty() {
        return Err(Error::InvalidArgument("cannot train on an empty dataset".into()));
    }
    let terms = Terms::new(cfg, data, extras)?;
    if let Some(tau) = cfg.smoothing() {
        extractor.tau = tau;
    }
    if cfg.wants_decoder() && extractor.decoder.is_none() {
        return Err(Error::InvalidArgument("reconstruction needs an extractor built with a decoder".into()));
    }
    let mut order_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut pos_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ POSITIVE_STREAM);
    let n = data.len();
    let bs = cfg.batch_size.unwrap_or(n).min(n);
    let mut order: Vec<usize> = (0..n).collect();
    let mut trajectory = Vec::new();
    let mut converged = false;
    for epoch in 1..=cfg.epochs {
        if bs < n {
            order.shuffle(&mut order_rng);
        }
        let mut epoch_loss = 0.0;
        for batch in order.chunks(bs) {
            let positives: Vec<Vec<f64>> = if terms.contrastive > 0.0 {
                batch.iter().map(|i| data.renderer.render(&data.concepts[*i], &mut pos_rng)).collect()
            } else {
                Vec::new()
            };
            let (loss, grad) = batch_loss_and_grad(&extractor, data, &terms, batch, &positives).map_err(|e| match e {
                Error::InfiniteLoss | Error::NoReachableLabel => Error::Divergence(format!("epoch {epoch}: {e}")),
                e => e,
            })?;
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Divergence(format!(
                    "epoch {epoch}: loss {loss}, step size {}; lower the step size or the temperature",
                    cfg.step_size
                )));
            }
            epoch_loss += loss * batch.len() as f64 / n as f64;
            let p: Vec<f64> = extractor
                .params()
                .iter()
                .zip(&grad)
                .map(|(w, g)| w - cfg.step_size * g)
                .collect();
            if p.iter().any(|w| !w.is_finite()) {
                return Err(Error::Divergence(format!("epoch {epoch}: parameters left the finite range")));
            }
            extractor.set_params(&p);
        }
        let m = evaluate(&extractor, data)
            .map_err(|e| Error::Divergence(format!("epoch {epoch}: evaluation failed: {e}")))?;
        if !m.label_nll.is_finite() {
            return Err(Error::Divergence(format!("epoch {epoch}: label NLL {}", m.label_nll)));
        }
        trajectory.push(EpochRecord {
            epoch,
            loss: epoch_loss,
            label_nll: m.label_nll,
            label_accuracy: m.label_accuracy,
            concept_accuracy: m.concept_accuracy,
            mean_entropy: m.mean_entropy,
        });
        if m.label_nll < cfg.target_nll {
            converged = true;
            break;
        }
    }
    Ok(TrainOutcome {
        extractor,
        trajectory,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logic::parse_task;
    use crate::train::data::{generate_dataset, SyntheticTaskConfig};
    use crate::train::objective::Mitigation;

    fn xor() -> Dataset {
        let t = parse_task("concept A : 2; concept B : 2; label Y : 2; knowledge { (A=1 ^ B=1) <-> Y=1 }").unwrap();
        generate_dataset(&t, &SyntheticTaskConfig { samples_per_support_vector: 5, ..Default::default() }).unwrap()
    }

    #[test]
    fn xor_learns_and_is_reproducible() {
        let d = xor();
        let cfg = TrainConfig::default();
        let run = || train(build_extractor(&ModelConfig::default(), &d, &cfg, 3).unwrap(), &d, &cfg).unwrap();
        let a = run();
        let b = run();
        assert_eq!(a.trajectory, b.trajectory);
        assert!(a.trajectory.last().unwrap().label_accuracy >= 0.99);
    }

    #[test]
    fn full_supervision_recovers_concepts() {
        let d = xor();
        let cfg = TrainConfig {
            mitigations: vec![Mitigation::Supervision { fraction: 1.0, seed: 0 }],
            ..Default::default()
        };
        let out = train(build_extractor(&ModelConfig::default(), &d, &cfg, 8).unwrap(), &d, &cfg).unwrap();
        assert!(evaluate(&out.extractor, &d).unwrap().concept_accuracy >= 0.99);
    }

    #[test]
    fn entropy_raises_entropy() {
        let d = xor();
        let base = TrainConfig { epochs: 200, ..Default::default() };
        let reg = TrainConfig { mitigations: vec![Mitigation::Entropy { weight: 0.5 }], ..base.clone() };
        let h = |cfg: &TrainConfig| {
            let out = train(build_extractor(&ModelConfig::default(), &d, cfg, 5).unwrap(), &d, cfg).unwrap();
            evaluate(&out.extractor, &d).unwrap().mean_entropy
        };
        assert!(h(&reg) > h(&base));
    }

    #[test]
    fn divergence_is_reported() {
        let d = xor();
        let cfg = TrainConfig { step_size: 1e300, epochs: 3, ..Default::default() };
        let e = build_extractor(&ModelConfig::default(), &d, &cfg, 0).unwrap();
        assert!(matches!(train(e, &d, &cfg), Err(Error::Divergence(_))));
    }
}
