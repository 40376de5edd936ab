//! Two-stage training of the dual encoder.
//!
//! Stage one trains every base parameter with the contrastive objective and
//! prompts bypassed. Stage two freezes the base and updates only the soft
//! prompts. Both stages run a fixed epoch/batch schedule with Adam and a
//! seeded shuffle, so a (seed, config, data) triple always produces the same
//! weights.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::encoder::{
    contrastive_loss, EncoderError, EncoderModel, SoftPrompt, TrainBatch, TrainPair, TrainableSet,
    PROMPT_D, PROMPT_Q,
};
use crate::rng;
use crate::tensor::Tensor;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Default learning rates; prompts tolerate larger steps than the base.
pub const DEFAULT_PRETRAIN_LR: f64 = 1e-3;
pub const DEFAULT_TUNE_LR: f64 = 1e-2;

/// Loss above `10 x` the initial epoch loss for two consecutive epochs
/// aborts training.
const DIVERGENCE_FACTOR: f64 = 10.0;

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("no usable training pairs")]
    NoPairs,
    #[error("training pair for chunk {chunk_id:?} has an empty token sequence")]
    EmptyPair { chunk_id: alloc::string::String },
    #[error("diverged at epoch {epoch}: mean loss {loss} exceeds 10x initial {initial}")]
    Diverged { epoch: usize, loss: f64, initial: f64 },
    #[error(transparent)]
    Encoder(#[from] EncoderError),
}

/// Schedule for one training stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
}

/// Per-epoch mean losses of a completed stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epoch_losses: Vec<f64>,
}

impl TrainLog {
    pub fn initial(&self) -> Option<f64> {
        self.epoch_losses.first().copied()
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.epoch_losses.last().copied()
    }
}

/// Adam with lazily created moment buffers, keyed like the gradient maps.
pub struct Adam {
    step: u64,
    m: BTreeMap<alloc::string::String, Tensor>,
    v: BTreeMap<alloc::string::String, Tensor>,
}

impl Adam {
    pub fn new() -> Self {
        Adam {
            step: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }

    /// Applies one update. Every touched parameter is rounded back to f32
    /// precision so checkpoints reproduce the in-memory values exactly.
    pub fn apply(
        &mut self,
        params: &mut BTreeMap<alloc::string::String, Tensor>,
        grads: &BTreeMap<alloc::string::String, Tensor>,
        lr: f64,
    ) {
        self.step += 1;
        let t = self.step as i32;
        let bias1 = 1.0 - libm::pow(ADAM_BETA1, t as f64);
        let bias2 = 1.0 - libm::pow(ADAM_BETA2, t as f64);
        for (name, grad) in grads {
            let param = params
                .get_mut(name)
                .unwrap_or_else(|| panic!("gradient for unknown parameter {name}"));
            let m = self
                .m
                .entry(name.clone())
                .or_insert_with(|| Tensor::zeros(grad.rows, grad.cols));
            let v = self
                .v
                .entry(name.clone())
                .or_insert_with(|| Tensor::zeros(grad.rows, grad.cols));
            for i in 0..grad.data.len() {
                let g = grad.data[i];
                m.data[i] = ADAM_BETA1 * m.data[i] + (1.0 - ADAM_BETA1) * g;
                v.data[i] = ADAM_BETA2 * v.data[i] + (1.0 - ADAM_BETA2) * g * g;
                let mhat = m.data[i] / bias1;
                let vhat = v.data[i] / bias2;
                let updated = param.data[i] - lr * mhat / (libm::sqrt(vhat) + ADAM_EPS);
                param.data[i] = updated as f32 as f64;
            }
        }
    }
}

impl Default for Adam {
    fn default() -> Self {
        Adam::new()
    }
}

fn validate_pairs(pairs: &[TrainPair]) -> Result<(), TrainError> {
    if pairs.is_empty() {
        return Err(TrainError::NoPairs);
    }
    for p in pairs {
        if p.query_ids.is_empty() || p.doc_ids.is_empty() {
            return Err(TrainError::EmptyPair {
                chunk_id: p.chunk_id.clone(),
            });
        }
    }
    Ok(())
}

/// Shuffles pairs and packs them into batches whose positive chunks are
/// pairwise distinct. Pairs colliding with a batch roll over to later
/// batches; a trailing batch of fewer than 2 pairs is dropped.
pub fn build_batches(
    pairs: &[TrainPair],
    batch_size: usize,
    rng: &mut rng::Rng,
) -> Vec<TrainBatch> {
    assert!(batch_size >= 2, "batch_size must be at least 2");
    let mut queue: Vec<&TrainPair> = pairs.iter().collect();
    queue.shuffle(rng);
    let mut batches = Vec::new();
    while !queue.is_empty() {
        let mut batch = Vec::with_capacity(batch_size);
        let mut seen = BTreeSet::new();
        let mut rest = Vec::new();
        for p in queue {
            if batch.len() < batch_size && seen.insert(p.chunk_id.as_str()) {
                batch.push(p.clone());
            } else {
                rest.push(p);
            }
        }
        queue = rest;
        if batch.len() < 2 {
            break;
        }
        batches.push(TrainBatch::new(batch).expect("batch construction is pre-deduplicated"));
    }
    batches
}

fn run_stage(
    model: &mut EncoderModel,
    prompts: &mut SoftPrompt,
    pairs: &[TrainPair],
    config: &TrainConfig,
    trainable: TrainableSet,
) -> Result<TrainLog, TrainError> {
    validate_pairs(pairs)?;
    let tau = model.config().temperature;
    let mut adam = Adam::new();
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let mut shuffle_rng = rng::substream(config.seed, &[0x626174, epoch as u64]);
        let batches = build_batches(pairs, config.batch_size, &mut shuffle_rng);
        if batches.is_empty() {
            return Err(TrainError::NoPairs);
        }
        let mut loss_sum = 0.0;
        for batch in &batches {
            let (loss, grads) = contrastive_loss(batch, model, prompts, tau, trainable)?;
            loss_sum += loss;
            match trainable {
                TrainableSet::All => adam.apply(model.params_mut(), &grads, config.lr),
                TrainableSet::PromptsOnly => {
                    let mut prompt_params = BTreeMap::new();
                    prompt_params.insert(
                        alloc::string::String::from(PROMPT_Q),
                        core::mem::replace(&mut prompts.prompt_q, Tensor::zeros(0, 0)),
                    );
                    prompt_params.insert(
                        alloc::string::String::from(PROMPT_D),
                        core::mem::replace(&mut prompts.prompt_d, Tensor::zeros(0, 0)),
                    );
                    adam.apply(&mut prompt_params, &grads, config.lr);
                    prompts.prompt_q = prompt_params.remove(PROMPT_Q).unwrap();
                    prompts.prompt_d = prompt_params.remove(PROMPT_D).unwrap();
                }
            }
        }
        let mean = loss_sum / batches.len() as f64;
        epoch_losses.push(mean);
        let initial = epoch_losses[0];
        if epoch >= 1 {
            let prev = epoch_losses[epoch - 1];
            if mean > DIVERGENCE_FACTOR * initial && prev > DIVERGENCE_FACTOR * initial {
                return Err(TrainError::Diverged {
                    epoch,
                    loss: mean,
                    initial,
                });
            }
        }
    }
    Ok(TrainLog { epoch_losses })
}

/// Stage one: trains all base parameters with prompts bypassed. The prompt
/// tensors are left exactly as initialized.
pub fn pretrain(
    model: &mut EncoderModel,
    prompts: &SoftPrompt,
    pairs: &[TrainPair],
    config: &TrainConfig,
) -> Result<TrainLog, TrainError> {
    if config.epochs == 0 {
        return Ok(TrainLog {
            epoch_losses: Vec::new(),
        });
    }
    let mut scratch = prompts.clone();
    run_stage(model, &mut scratch, pairs, config, TrainableSet::All)
}

/// Stage two: updates only the soft prompts against a frozen base.
pub fn prompt_tune(
    model: &EncoderModel,
    prompts: &mut SoftPrompt,
    pairs: &[TrainPair],
    config: &TrainConfig,
) -> Result<TrainLog, TrainError> {
    if config.epochs == 0 {
        return Ok(TrainLog {
            epoch_losses: Vec::new(),
        });
    }
    // The model is only read; a clone guards the signature without copying
    // gradients into it.
    let mut frozen = model.clone();
    let before: Vec<u64> = frozen
        .params()
        .values()
        .flat_map(|t| t.data.iter().map(|v| v.to_bits()))
        .collect();
    let log = run_stage(
        &mut frozen,
        prompts,
        pairs,
        config,
        TrainableSet::PromptsOnly,
    )?;
    let after: Vec<u64> = frozen
        .params()
        .values()
        .flat_map(|t| t.data.iter().map(|v| v.to_bits()))
        .collect();
    debug_assert_eq!(before, after, "prompt tuning must not touch the base");
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::EncoderConfig;

    fn tiny_config() -> EncoderConfig {
        EncoderConfig {
            dim: 16,
            vocab_size: 64,
            layers: 1,
            heads: 2,
            max_seq: 8,
            prompt_len: 2,
            temperature: 0.05,
            seed: 5,
            shared_base: true,
        }
    }

    fn pairs(n: usize) -> Vec<TrainPair> {
        // Query i shares tokens with chunk i, so the task is learnable.
        (0..n)
            .map(|i| {
                let t = (i % 48) as u32;
                TrainPair {
                    query_ids: alloc::vec![t, t + 1, 7],
                    doc_ids: alloc::vec![t, t + 1, t + 2, 9],
                    chunk_id: alloc::format!("c{i}"),
                }
            })
            .collect()
    }

    fn setup() -> (EncoderModel, SoftPrompt) {
        let config = tiny_config();
        let model = EncoderModel::init(config.clone()).unwrap();
        let mut r = rng::substream(config.seed, &[0x70]);
        let prompts = SoftPrompt::init(&config, &mut r);
        (model, prompts)
    }

    #[test]
    fn batches_respect_size_and_distinctness() {
        let mut ps = pairs(10);
        // Duplicate one chunk id to force a rollover.
        ps.push(TrainPair {
            query_ids: alloc::vec![1],
            doc_ids: alloc::vec![2],
            chunk_id: "c0".into(),
        });
        let mut r = rng::substream(3, &[]);
        let batches = build_batches(&ps, 4, &mut r);
        let total: usize = batches.iter().map(TrainBatch::len).sum();
        assert!(total >= 10, "at most one trailing pair may drop");
        for b in &batches {
            assert!(b.len() >= 2 && b.len() <= 4);
            let ids: BTreeSet<&str> =
                b.pairs().iter().map(|p| p.chunk_id.as_str()).collect();
            assert_eq!(ids.len(), b.len());
        }
    }

    #[test]
    fn pretraining_reduces_loss_deterministically() {
        let (mut m1, p1) = setup();
        let cfg = TrainConfig {
            epochs: 4,
            batch_size: 4,
            lr: DEFAULT_PRETRAIN_LR,
            seed: 11,
        };
        let log1 = pretrain(&mut m1, &p1, &pairs(12), &cfg).unwrap();
        assert_eq!(log1.epoch_losses.len(), 4);
        assert!(log1.final_loss().unwrap() < log1.initial().unwrap());

        let (mut m2, p2) = setup();
        let log2 = pretrain(&mut m2, &p2, &pairs(12), &cfg).unwrap();
        assert_eq!(log1, log2);
        for (a, b) in m1.params().values().zip(m2.params().values()) {
            assert!(a.bits_eq(b));
        }
    }

    #[test]
    fn zero_epochs_change_nothing() {
        let (mut model, prompts) = setup();
        let before: Vec<Tensor> = model.params().values().cloned().collect();
        let cfg = TrainConfig {
            epochs: 0,
            batch_size: 4,
            lr: 1e-3,
            seed: 1,
        };
        let log = pretrain(&mut model, &prompts, &pairs(8), &cfg).unwrap();
        assert!(log.epoch_losses.is_empty());
        for (a, b) in before.iter().zip(model.params().values()) {
            assert!(a.bits_eq(b));
        }
    }

    #[test]
    fn prompt_tuning_freezes_base_and_moves_prompts() {
        let (mut model, mut prompts) = setup();
        let pre_cfg = TrainConfig {
            epochs: 2,
            batch_size: 4,
            lr: DEFAULT_PRETRAIN_LR,
            seed: 11,
        };
        pretrain(&mut model, &prompts, &pairs(12), &pre_cfg).unwrap();
        let base_before: Vec<Tensor> = model.params().values().cloned().collect();
        let prompts_before = prompts.clone();
        let tune_cfg = TrainConfig {
            epochs: 2,
            batch_size: 4,
            lr: DEFAULT_TUNE_LR,
            seed: 13,
        };
        prompt_tune(&model, &mut prompts, &pairs(12), &tune_cfg).unwrap();
        for (a, b) in base_before.iter().zip(model.params().values()) {
            assert!(a.bits_eq(b), "base tensor changed during prompt tuning");
        }
        assert!(!prompts.prompt_q.bits_eq(&prompts_before.prompt_q));
        assert!(!prompts.prompt_d.bits_eq(&prompts_before.prompt_d));
    }

    #[test]
    fn empty_pairs_are_rejected() {
        let (mut model, prompts) = setup();
        let cfg = TrainConfig {
            epochs: 1,
            batch_size: 4,
            lr: 1e-3,
            seed: 1,
        };
        assert!(matches!(
            pretrain(&mut model, &prompts, &[], &cfg),
            Err(TrainError::NoPairs)
        ));
        let bad = alloc::vec![
            TrainPair {
                query_ids: alloc::vec![],
                doc_ids: alloc::vec![1],
                chunk_id: "c".into()
            },
            TrainPair {
                query_ids: alloc::vec![1],
                doc_ids: alloc::vec![1],
                chunk_id: "d".into()
            }
        ];
        assert!(matches!(
            pretrain(&mut model, &prompts, &bad, &cfg),
            Err(TrainError::EmptyPair { .. })
        ));
    }

    #[test]
    fn adam_parameters_stay_f32_representable() {
        let (mut model, prompts) = setup();
        let cfg = TrainConfig {
            epochs: 2,
            batch_size: 4,
            lr: 1e-3,
            seed: 2,
        };
        pretrain(&mut model, &prompts, &pairs(8), &cfg).unwrap();
        for t in model.params().values() {
            for &v in &t.data {
                assert_eq!(v, v as f32 as f64);
            }
        }
    }
}
