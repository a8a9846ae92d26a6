//! Finite-difference verification of reverse-mode gradients in `f64`.
//!
//! Dropout is switched off for the check. Derivatives use the fourth-order
//! central stencil with step 1e-3, whose truncation and rounding errors both
//! stay far below the 1e-4 tolerance on the summed loss. Rounding noise in
//! the numeric derivative is about 1e-13 of the loss, so parameters whose
//! analytic gradient is below 1e-5 of the loss are not sampled.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wuyun_core::memidi::{tokenize, Vocabulary};
use wuyun_core::skeleton::{extract, Strategy};

use crate::model::{Model, ModelConfig, Role};
use crate::params::Grads;
use crate::toy::random_score;
use crate::train::{example_pass, Example};

pub const STEP: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
    /// Parameter tensor and flat index of the worst entry.
    pub worst: Option<(String, usize)>,
    pub loss: f64,
}

/// Random two-piece mini-batch for `role`.
pub fn mini_batch(role: Role, seed: u64, vocab: &Vocabulary) -> Vec<Example> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..2)
        .map(|i| {
            let s = random_score(&mut rng, &format!("g{i}"), 2, role == Role::InpaintSeq2seq, None);
            match role {
                Role::SkeletonLm => Example::Lm(tokenize(&s, true, vocab).expect("tokenizes")),
                Role::InpaintSeq2seq => {
                    let ann = extract(Strategy::Rhythm, &s, seed).expect("extracts");
                    let sk = ann.skeleton_score(&s).expect("mask fits");
                    Example::Pair {
                        skeleton: tokenize(&sk, true, vocab).expect("tokenizes"),
                        melody: tokenize(&s, false, vocab).expect("tokenizes"),
                    }
                }
            }
        })
        .collect()
}

fn total_loss(model: &Model<f64>, batch: &[Example], vocab: &Vocabulary, grads: Option<&mut Grads<f64>>) -> f64 {
    let mut grads = grads;
    batch
        .iter()
        .map(|ex| example_pass(model, ex, vocab, None, 1.0, grads.as_deref_mut()).expect("valid batch").loss)
        .sum()
}

/// Compare analytic and numeric gradients on up to `samples` parameters.
pub fn grad_check(config: &ModelConfig, seed: u64, samples: usize) -> GradCheckReport {
    let vocab = Vocabulary::build();
    let config = ModelConfig { dropout_rate: 0.0, ..config.clone() };
    let mut model = Model::<f64>::new(config.clone(), seed).expect("valid configuration");
    let batch = mini_batch(config.role, seed, &vocab);
    let mut grads = Grads::zeros_like(&model.params);
    let loss = total_loss(&model, &batch, &vocab, Some(&mut grads));
    let flat = grads.flat();
    let floor = 1e-5 * loss.abs().max(1.0);
    let candidates: Vec<usize> = (0..flat.len()).filter(|&i| flat[i].abs() > floor).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let picks: Vec<usize> = if candidates.len() <= samples {
        candidates.clone()
    } else {
        sample(&mut rng, candidates.len(), samples).into_iter().map(|i| candidates[i]).collect()
    };
    let specs = model.params.specs();
    let mut report = GradCheckReport { max_rel_error: 0.0, checked: 0, worst: None, loss };
    for &i in &picks {
        let orig = *model.params.flat_mut(i);
        let at = |d: f64, m: &mut Model<f64>| {
            *m.params.flat_mut(i) = orig + d;
            total_loss(m, &batch, &vocab, None)
        };
        let (p1, m1, p2, m2) =
            (at(STEP, &mut model), at(-STEP, &mut model), at(2.0 * STEP, &mut model), at(-2.0 * STEP, &mut model));
        *model.params.flat_mut(i) = orig;
        let numeric = (8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * STEP);
        let analytic = flat[i];
        let err = (analytic - numeric).abs() / analytic.abs().max(numeric.abs());
        report.checked += 1;
        if err > report.max_rel_error {
            report.max_rel_error = err;
            let s = specs.iter().rev().find(|s| s.offset <= i).expect("index in some tensor");
            report.worst = Some((s.name.clone(), i - s.offset));
        }
    }
    report
}
