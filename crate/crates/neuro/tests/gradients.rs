//! Reverse-mode gradients against finite differences.

use wuyun_neuro::gradcheck::grad_check;
use wuyun_neuro::{ModelConfig, Role};

#[test]
fn language_model_gradients() {
    let r = grad_check(&ModelConfig::tiny(Role::SkeletonLm), 1, 250);
    assert!(r.checked >= 200, "{r:?}");
    assert!(r.max_rel_error < 1e-4, "{r:?}");
}

#[test]
fn seq2seq_gradients() {
    let r = grad_check(&ModelConfig::tiny(Role::InpaintSeq2seq), 2, 250);
    assert!(r.checked >= 200, "{r:?}");
    assert!(r.max_rel_error < 1e-4, "{r:?}");
}

#[test]
fn embeddings_and_heads_alone_are_exact() {
    for role in [Role::SkeletonLm, Role::InpaintSeq2seq] {
        let cfg = ModelConfig { n_layers: 0, d_embed: 16, ..ModelConfig::tiny(role) };
        let r = grad_check(&cfg, 3, 250);
        assert!(r.checked >= 200, "{r:?}");
        assert!(r.max_rel_error < 1e-6, "{role:?}: {r:?}");
    }
}

#[test]
fn dropout_configs_are_checked_without_dropout() {
    let cfg = ModelConfig { dropout_rate: 0.3, ..ModelConfig::tiny(Role::SkeletonLm) };
    let r = grad_check(&cfg, 4, 200);
    assert!(r.max_rel_error < 1e-4, "{r:?}");
}
