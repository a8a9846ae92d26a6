//! Optimizer and training-loop behaviour.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wuyun_core::memidi::Vocabulary;
use wuyun_neuro::gradcheck::mini_batch;
use wuyun_neuro::optim::AdamConfig;
use wuyun_neuro::toy::toy_corpus;
use wuyun_neuro::train::{initial_loss, Example, ProgressRow, TrainConfig, Trainer};
use wuyun_neuro::{Model, ModelConfig, NeuroError, Role};

fn corpus(n: usize, bars: u32) -> Vec<Example> {
    let v = Vocabulary::build();
    toy_corpus(&mut ChaCha8Rng::seed_from_u64(1), n, bars, &v).into_iter().map(Example::Lm).collect()
}

fn run(cfg: ModelConfig, data: &[Example], tc: &TrainConfig) -> (Vec<ProgressRow>, Vec<f32>) {
    let v = Vocabulary::build();
    let mut t = Trainer::new(Model::new(cfg, 7).unwrap(), tc.adam, tc.seed, &v);
    let curve = t.train(data, v.hash(), &v, tc, |_, _| Ok::<_, NeuroError>(())).unwrap();
    (curve, t.model.params.flat())
}

fn losses(c: &[ProgressRow]) -> Vec<(u64, u64, u64)> {
    c.iter().map(|r| (r.step, r.loss.to_bits(), r.accuracy.to_bits())).collect()
}

#[test]
fn zero_learning_rate_leaves_parameters_unchanged() {
    let data = corpus(4, 2);
    let cfg = ModelConfig::tiny(Role::SkeletonLm);
    let before = Model::<f32>::new(cfg.clone(), 7).unwrap().params.flat();
    let tc = TrainConfig {
        steps: 3,
        batch_size: 2,
        adam: AdamConfig { lr: 0.0, ..Default::default() },
        ..Default::default()
    };
    let (curve, after) = run(cfg, &data, &tc);
    assert_eq!(curve.len(), 3);
    assert_eq!(before, after);
}

#[test]
fn initial_loss_is_near_the_uniform_bound() {
    let v = Vocabulary::build();
    for role in [Role::SkeletonLm, Role::InpaintSeq2seq] {
        let model = Model::<f32>::new(ModelConfig::tiny(role), 5).unwrap();
        let data = mini_batch(role, 5, &v);
        let (loss, uniform) = initial_loss(&model, &data, &v).unwrap();
        assert!(((loss - uniform) / uniform).abs() < 0.02, "{role:?}: {loss} vs {uniform}");
    }
}

#[test]
fn same_seed_gives_identical_curves() {
    let data = corpus(6, 2);
    for dropout in [0.0, 0.1] {
        let cfg = ModelConfig { dropout_rate: dropout, ..ModelConfig::tiny(Role::SkeletonLm) };
        let tc = TrainConfig { steps: 6, batch_size: 4, seed: 3, ..Default::default() };
        let (a, pa) = run(cfg.clone(), &data, &tc);
        let (b, pb) = run(cfg, &data, &tc);
        assert_eq!(losses(&a), losses(&b));
        assert_eq!(pa, pb);
    }
}

#[test]
fn worker_count_does_not_change_results() {
    let data = corpus(5, 2);
    let cfg = ModelConfig { dropout_rate: 0.1, ..ModelConfig::tiny(Role::SkeletonLm) };
    let one = TrainConfig { steps: 3, batch_size: 5, workers: 1, ..Default::default() };
    let (a, pa) = run(cfg.clone(), &data, &one);
    let (b, pb) = run(cfg, &data, &TrainConfig { workers: 3, ..one });
    assert_eq!(losses(&a), losses(&b));
    assert_eq!(pa, pb);
}

#[test]
fn seq2seq_training_reduces_loss() {
    let v = Vocabulary::build();
    let data = mini_batch(Role::InpaintSeq2seq, 9, &v);
    let tc = TrainConfig { steps: 25, batch_size: 2, ..Default::default() };
    let (curve, _) = run(ModelConfig::tiny(Role::InpaintSeq2seq), &data, &tc);
    assert!(curve.last().unwrap().loss < 0.7 * curve[0].loss, "{:?}", curve.last());
}

#[test]
fn language_model_training_reduces_loss() {
    let data = corpus(4, 4);
    let tc = TrainConfig { steps: 25, batch_size: 4, ..Default::default() };
    let (curve, _) = run(ModelConfig::tiny(Role::SkeletonLm), &data, &tc);
    assert!(curve.last().unwrap().loss < 0.7 * curve[0].loss);
}

#[test]
fn target_accuracy_stops_early() {
    let data = corpus(2, 2);
    let tc = TrainConfig { steps: 500, batch_size: 2, target_accuracy: Some(0.5), ..Default::default() };
    let (curve, _) = run(ModelConfig::tiny(Role::SkeletonLm), &data, &tc);
    assert!(curve.len() < 500);
    assert!(curve.last().unwrap().accuracy >= 0.5);
}

#[test]
fn non_finite_loss_is_reported() {
    let v = Vocabulary::build();
    let mut model = Model::<f32>::new(ModelConfig::tiny(Role::SkeletonLm), 7).unwrap();
    let id = model.params.id("head.type.b").unwrap();
    model.params.mat_mut(id).data[0] = f32::NAN;
    let mut t = Trainer::new(model, AdamConfig::default(), 0, &v);
    let tc = TrainConfig { steps: 2, batch_size: 2, ..Default::default() };
    let err = t.train(&corpus(2, 2), v.hash(), &v, &tc, |_, _| Ok::<_, NeuroError>(())).unwrap_err();
    assert!(matches!(err, NeuroError::NonFiniteLoss { step: 0, .. }));
}

#[test]
fn vocabulary_mismatch_is_rejected() {
    let v = Vocabulary::build();
    let mut t = Trainer::new(Model::new(ModelConfig::tiny(Role::SkeletonLm), 7).unwrap(), AdamConfig::default(), 0, &v);
    let err = t.train(&corpus(2, 2), [0; 32], &v, &TrainConfig::default(), |_, _| Ok::<_, NeuroError>(())).unwrap_err();
    assert!(matches!(err, NeuroError::VocabMismatch { .. }));
}

#[test]
fn progress_rows_render_as_csv() {
    let r = ProgressRow { step: 3, loss: 1.5, accuracy: 0.25, tokens_per_sec: 100.0 };
    assert_eq!(ProgressRow::CSV_HEADER, "step,loss,accuracy,tokens_per_sec");
    assert_eq!(r.csv(), "3,1.500000,0.250000,100.0");
}
