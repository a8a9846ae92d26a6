//! Structural invariants over random configurations.

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wuyun_core::memidi::{Token, Vocabulary};
use wuyun_neuro::toy::toy_corpus;
use wuyun_neuro::{Memory, Model, ModelConfig, Role};

/// Embedding rows per field: type, tempo, bar, position, pitch, velocity, duration, chord.
const FIELD_ROWS: usize = 8 + 4 + 65 + 97 + 37 + 129 + 70 + 157;

fn expected_count(c: &ModelConfig) -> usize {
    let (d, ff, l) = (c.d_model, c.d_ff, c.n_layers);
    let norm = 2 * d;
    let attn = norm + 4 * d * d;
    let ffn = norm + d * ff + ff + ff * d + d;
    let heads: &[usize] = match c.role {
        Role::SkeletonLm => &[6, 3, 96, 36, 128, 69],
        Role::InpaintSeq2seq => &[6, 3, 96, 156, 36, 128, 69],
    };
    let mut n = FIELD_ROWS * c.d_embed + if c.d_embed != d { c.d_embed * d } else { 0 };
    n += heads.iter().map(|&h| d * h + h).sum::<usize>();
    let stack_norm = if l > 0 { norm } else { 0 };
    n += match c.role {
        Role::SkeletonLm => l * (attn + d * d + 2 * d + ffn) + stack_norm,
        Role::InpaintSeq2seq => l * (attn + ffn) + l * (2 * attn + ffn) + 2 * stack_norm,
    };
    n
}

fn config() -> impl Strategy<Value = ModelConfig> {
    (0usize..3, prop::sample::select(vec![1usize, 2, 4]), 1usize..5, 1usize..40, 1usize..30, any::<bool>()).prop_map(
        |(n_layers, n_heads, width, d_ff, d_embed, lm)| {
            let role = if lm { Role::SkeletonLm } else { Role::InpaintSeq2seq };
            ModelConfig { n_layers, n_heads, d_model: n_heads * width * 2, d_ff, d_embed, ..ModelConfig::tiny(role) }
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn parameter_count_is_closed_form(cfg in config()) {
        let m = Model::<f32>::new(cfg.clone(), 0).unwrap();
        prop_assert_eq!(m.params.count(), expected_count(&cfg));
        prop_assert_eq!(cfg.param_count(), expected_count(&cfg));
    }

    #[test]
    fn logits_are_finite_and_normalize(seed in any::<u64>(), cfg in config()) {
        let v = Vocabulary::build();
        let m = Model::<f32>::new(cfg.clone(), seed).unwrap();
        let seq = toy_corpus(&mut ChaCha8Rng::seed_from_u64(seed), 1, 2, &v).remove(0);
        let mut input = vec![Token::Bos];
        input.extend_from_slice(&seq.tokens[..seq.tokens.len() - 1]);
        let logits = match cfg.role {
            Role::SkeletonLm => m.forward_lm(&input, &Memory::empty(&cfg), &v).unwrap().0,
            Role::InpaintSeq2seq => m.forward_seq2seq(&seq.tokens, &seq.tokens[..4], &v).unwrap(),
        };
        for (_, l) in &logits.heads {
            for r in 0..l.rows {
                let row = l.row(r);
                prop_assert!(row.iter().all(|x| x.is_finite()));
                let max = row.iter().cloned().fold(f32::NEG_INFINITY, f32::max) as f64;
                let z: f64 = row.iter().map(|&x| (x as f64 - max).exp()).sum();
                let total: f64 = row.iter().map(|&x| (x as f64 - max).exp() / z).sum();
                prop_assert!((total - 1.0).abs() < 1e-6);
            }
        }
    }
}

#[test]
fn full_configs_validate() {
    for role in [Role::SkeletonLm, Role::InpaintSeq2seq] {
        let c = ModelConfig::full(role);
        c.validate().unwrap();
        assert_eq!(c.param_count(), expected_count(&c));
    }
    let lm = ModelConfig::full(Role::SkeletonLm);
    assert_eq!(
        (lm.n_layers, lm.n_heads, lm.d_model, lm.d_ff, lm.context_len, lm.memory_len),
        (4, 8, 512, 2048, 512, 512)
    );
    let s2s = ModelConfig::full(Role::InpaintSeq2seq);
    assert_eq!((s2s.n_layers, s2s.n_heads, s2s.d_model, s2s.d_embed), (4, 4, 256, 256));
    assert_eq!((lm.dropout_rate, s2s.dropout_rate), (0.1, 0.1));
}
