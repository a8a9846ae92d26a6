//! Teacher-forced training with deterministic batching, dropout and
//! gradient reduction.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use wuyun_core::memidi::{MeMidiSequence, Token, Vocabulary};

use crate::error::NeuroError;
use crate::features::{features, target, Target};
use crate::mat::Scalar;
use crate::model::{stream_rng, CrossSource, Dropout, Memory, Model, Role};
use crate::optim::{Adam, AdamConfig};
use crate::params::Grads;
use crate::tape::Tape;

/// One training sequence; pairs condition the melody on its skeleton.
#[derive(Debug, Clone, PartialEq)]
pub enum Example {
    Lm(MeMidiSequence),
    Pair { skeleton: MeMidiSequence, melody: MeMidiSequence },
}

impl Example {
    fn decoder_tokens(&self) -> &[Token] {
        match self {
            Example::Lm(s) => &s.tokens,
            Example::Pair { melody, .. } => &melody.tokens,
        }
    }

    pub fn role(&self) -> Role {
        match self {
            Example::Lm(_) => Role::SkeletonLm,
            Example::Pair { .. } => Role::InpaintSeq2seq,
        }
    }

    /// Number of predicted tokens.
    pub fn target_count(&self) -> usize {
        self.decoder_tokens().len()
    }
}

/// Loss statistics of one example or batch.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Tally {
    pub loss: f64,
    pub targets: usize,
    pub correct: usize,
    /// Loss a uniform predictor would incur on the same targets.
    pub uniform: f64,
}

impl Tally {
    fn add(&mut self, o: &Tally) {
        self.loss += o.loss;
        self.targets += o.targets;
        self.correct += o.correct;
        self.uniform += o.uniform;
    }

    pub fn mean_loss(&self) -> f64 {
        self.loss / self.targets.max(1) as f64
    }

    pub fn accuracy(&self) -> f64 {
        self.correct as f64 / self.targets.max(1) as f64
    }

    pub fn mean_uniform(&self) -> f64 {
        self.uniform / self.targets.max(1) as f64
    }
}

/// Teacher-forced pass over one example, in `context_len` segments with
/// detached memory between them. Gradients of `scale * loss` are added to
/// `grads` when given.
pub fn example_pass<F: Scalar>(
    model: &Model<F>,
    example: &Example,
    vocab: &Vocabulary,
    mut rng: Option<&mut ChaCha8Rng>,
    scale: F,
    mut grads: Option<&mut Grads<F>>,
) -> Result<Tally, NeuroError> {
    if example.role() != model.config.role {
        return Err(NeuroError::WrongRole {
            expected: model.config.role.name().into(),
            found: example.role().name().into(),
        });
    }
    let dec = example.decoder_tokens();
    if dec.is_empty() {
        return Err(NeuroError::InvalidSequence("empty sequence".into()));
    }
    let mut input = Vec::with_capacity(dec.len());
    input.push(Token::Bos);
    input.extend_from_slice(&dec[..dec.len() - 1]);
    let feats = features(&input, vocab);
    let targets: Vec<Option<Target>> = dec.iter().map(|t| target(t, vocab)).collect();
    let ctx = model.config.context_len;
    let rate = model.config.dropout_rate;
    let mut memory = Memory::<F>::empty(&model.config);
    let mut tally = Tally::default();
    for start in (0..input.len()).step_by(ctx) {
        let end = (start + ctx).min(input.len());
        let mut t = Tape::new(&model.params);
        let mut d = match (rng.as_deref_mut(), rate > 0.0) {
            (Some(r), true) => Some(Dropout { rate, rng: r }),
            _ => None,
        };
        let enc = match example {
            Example::Pair { skeleton, .. } => {
                Some(CrossSource::Node(model.encode_node(&mut t, &skeleton.tokens, vocab, &mut d)?))
            }
            Example::Lm(_) => None,
        };
        let (h, layers) = model.hidden(&mut t, &feats[start..end], &memory, enc, &mut d);
        let parts = model.loss(&mut t, h, &targets[start..end]);
        let loss = t.value(parts.loss).data[0].f64();
        if let Some(g) = grads.as_deref_mut() {
            t.backward_into(parts.loss, scale, g);
        }
        tally.add(&Tally { loss, targets: parts.targets, correct: parts.correct, uniform: parts.uniform });
        memory = Memory { layers, state: memory.state, offset: end };
    }
    Ok(tally)
}

/// Loss and accuracy without dropout or gradients.
pub fn evaluate<F: Scalar>(model: &Model<F>, data: &[Example], vocab: &Vocabulary) -> Result<Tally, NeuroError> {
    let mut total = Tally::default();
    for ex in data {
        total.add(&example_pass(model, ex, vocab, None, F::one(), None)?);
    }
    Ok(total)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub steps: u64,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    /// Stop once a step's batch accuracy reaches this value.
    pub target_accuracy: Option<f64>,
    /// Worker threads computing per-sequence gradients.
    pub workers: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            steps: 1000,
            batch_size: 20,
            adam: AdamConfig::default(),
            seed: 0,
            target_accuracy: None,
            workers: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProgressRow {
    pub step: u64,
    pub loss: f64,
    pub accuracy: f64,
    pub tokens_per_sec: f64,
}

impl ProgressRow {
    pub const CSV_HEADER: &'static str = "step,loss,accuracy,tokens_per_sec";

    pub fn csv(&self) -> String {
        format!("{},{:.6},{:.6},{:.1}", self.step, self.loss, self.accuracy, self.tokens_per_sec)
    }
}

pub struct Trainer {
    pub model: Model<f32>,
    pub adam: Adam,
    pub seed: u64,
    pub step: u64,
    pub vocab_hash: [u8; 32],
}

impl Trainer {
    pub fn new(model: Model<f32>, adam: AdamConfig, seed: u64, vocab: &Vocabulary) -> Self {
        let n = model.params.count();
        Trainer { model, adam: Adam::new(adam, n), seed, step: 0, vocab_hash: vocab.hash() }
    }

    fn batch_gradients(
        &self,
        batch: &[&Example],
        vocab: &Vocabulary,
        workers: usize,
    ) -> Result<(Grads<f32>, Tally), NeuroError> {
        let total_targets: usize = batch.iter().map(|e| e.target_count()).sum();
        let scale = 1.0 / total_targets.max(1) as f32;
        let one = |i: usize| -> Result<(Grads<f32>, Tally), NeuroError> {
            let mut g = Grads::zeros_like(&self.model.params);
            let mut rng = stream_rng(self.seed, self.step, i as u64);
            let tally = example_pass(&self.model, batch[i], vocab, Some(&mut rng), scale, Some(&mut g))?;
            Ok((g, tally))
        };
        let results: Vec<Result<(Grads<f32>, Tally), NeuroError>> = if workers <= 1 || batch.len() < 2 {
            (0..batch.len()).map(one).collect()
        } else {
            let per = batch.len().div_ceil(workers);
            std::thread::scope(|s| {
                let handles: Vec<_> = (0..batch.len())
                    .step_by(per)
                    .map(|lo| {
                        let one = &one;
                        s.spawn(move || (lo..(lo + per).min(batch.len())).map(one).collect::<Vec<_>>())
                    })
                    .collect();
                handles.into_iter().flat_map(|h| h.join().expect("worker panicked")).collect()
            })
        };
        let mut tally = Tally::default();
        let mut parts = Vec::with_capacity(results.len());
        for r in results {
            let (g, t) = r?;
            tally.add(&t);
            parts.push(g);
        }
        let grads = Grads::tree_sum(parts).unwrap_or_else(|| Grads::zeros_like(&self.model.params));
        Ok((grads, tally))
    }

    /// One optimizer step on `batch`.
    pub fn train_step(
        &mut self,
        batch: &[&Example],
        vocab: &Vocabulary,
        workers: usize,
    ) -> Result<ProgressRow, NeuroError> {
        let start = Instant::now();
        let (grads, tally) = self.batch_gradients(batch, vocab, workers)?;
        let loss = tally.mean_loss();
        if !loss.is_finite() {
            return Err(NeuroError::NonFiniteLoss {
                step: self.step,
                detail: format!("summed loss {} over {} targets", tally.loss, tally.targets),
            });
        }
        self.adam.step(&mut self.model.params, &grads);
        self.step += 1;
        let secs = start.elapsed().as_secs_f64().max(1e-9);
        Ok(ProgressRow {
            step: self.step,
            loss,
            accuracy: tally.accuracy(),
            tokens_per_sec: tally.targets as f64 / secs,
        })
    }

    /// Run up to `config.steps` steps, calling `on_step` after each.
    pub fn train<E: From<NeuroError>>(
        &mut self,
        data: &[Example],
        data_vocab_hash: [u8; 32],
        vocab: &Vocabulary,
        config: &TrainConfig,
        mut on_step: impl FnMut(&Trainer, &ProgressRow) -> Result<(), E>,
    ) -> Result<Vec<ProgressRow>, E> {
        if data_vocab_hash != self.vocab_hash {
            return Err(
                NeuroError::VocabMismatch { expected: hex(&self.vocab_hash), found: hex(&data_vocab_hash) }.into()
            );
        }
        if data.is_empty() {
            return Err(NeuroError::InvalidSequence("empty training set".into()).into());
        }
        let n = data.len();
        let bs = config.batch_size.clamp(1, n);
        // Batches depend only on the step count, so a resumed run sees the
        // same examples as an uninterrupted one with the same batch size.
        let seed = self.seed;
        let order_of = move |epoch: u64| {
            let mut order: Vec<usize> = (0..n).collect();
            if bs < n {
                order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ epoch.wrapping_mul(0x9e37_79b9_7f4a_7c15)));
            }
            order
        };
        let consumed = self.step * bs as u64;
        let mut epoch = consumed / n as u64;
        let mut cursor = (consumed % n as u64) as usize;
        let mut order = order_of(epoch);
        let mut curve = Vec::new();
        while self.step < config.steps {
            let mut batch = Vec::with_capacity(bs);
            while batch.len() < bs {
                if cursor == n {
                    epoch += 1;
                    order = order_of(epoch);
                    cursor = 0;
                }
                batch.push(&data[order[cursor]]);
                cursor += 1;
            }
            let row = self.train_step(&batch, vocab, config.workers)?;
            curve.push(row);
            on_step(self, &row)?;
            if config.target_accuracy.is_some_and(|a| row.accuracy >= a) {
                break;
            }
        }
        Ok(curve)
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Mean loss at step zero together with the uniform-predictor bound.
pub fn initial_loss(model: &Model<f32>, data: &[Example], vocab: &Vocabulary) -> Result<(f64, f64), NeuroError> {
    let t = evaluate(model, data, vocab)?;
    Ok((t.mean_loss(), t.mean_uniform()))
}
