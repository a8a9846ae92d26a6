//! Forward-pass properties of both model roles.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use wuyun_core::memidi::{Token, Vocabulary};
use wuyun_neuro::features::{features, Head};
use wuyun_neuro::toy::toy_corpus;
use wuyun_neuro::{Mat, Memory, Model, ModelConfig, NeuroError, Role, Scalar};

fn vocab() -> Vocabulary {
    Vocabulary::build()
}

fn lm_tokens(seed: u64, bars: u32) -> Vec<Token> {
    let v = vocab();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let seq = toy_corpus(&mut rng, 1, bars, &v).remove(0);
    let mut t = vec![Token::Bos];
    t.extend(seq.tokens);
    t
}

/// Replace every parameter by a draw from N(0, std).
fn scramble<F: Scalar>(m: &mut Model<F>, std: f64, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = Normal::new(0.0, std).unwrap();
    let flat: Vec<F> = (0..m.params.count()).map(|_| F::of(n.sample(&mut rng))).collect();
    m.params.set_flat(&flat);
}

// ---------------------------------------------------------------------------
// Plain-loop reference of the language model without memory.

fn p<'a>(m: &'a Model<f64>, name: &str) -> &'a Mat<f64> {
    m.params.mat(m.params.id(name).unwrap_or_else(|| panic!("no parameter {name}")))
}

fn vecmat(x: &[f64], w: &Mat<f64>) -> Vec<f64> {
    (0..w.cols).map(|c| (0..w.rows).map(|r| x[r] * w.at(r, c)).sum()).collect()
}

fn norm(x: &[f64], g: &Mat<f64>, b: &Mat<f64>) -> Vec<f64> {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    x.iter().enumerate().map(|(i, v)| (v - mean) / (var + 1e-5).sqrt() * g.data[i] + b.data[i]).collect()
}

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + ((2.0 / std::f64::consts::PI).sqrt() * (x + 0.044715 * x.powi(3))).tanh())
}

fn encoding(p: usize, d: usize) -> Vec<f64> {
    (0..d)
        .map(|c| {
            let w = (p as f64) / 10000f64.powf((c - c % 2) as f64 / d as f64);
            if c % 2 == 0 {
                w.sin()
            } else {
                w.cos()
            }
        })
        .collect()
}

fn reference_lm(m: &Model<f64>, tokens: &[Token]) -> Vec<(Head, Vec<Vec<f64>>)> {
    let cfg = &m.config;
    let v = vocab();
    let (d, nh) = (cfg.d_model, cfg.n_heads);
    let dh = d / nh;
    let names = ["type", "tempo", "bar", "position", "pitch", "velocity", "duration", "chord"];
    let mut x: Vec<Vec<f64>> = features(tokens, &v)
        .iter()
        .map(|f| {
            let mut e = vec![0.0; cfg.d_embed];
            for (k, name) in names.iter().enumerate() {
                let t = p(m, &format!("emb.{name}"));
                for c in 0..cfg.d_embed {
                    e[c] += t.at(f[k], c);
                }
            }
            if cfg.d_embed != d {
                vecmat(&e, p(m, "emb.proj"))
            } else {
                e
            }
        })
        .collect();
    let n = x.len();
    for l in 0..cfg.n_layers {
        let pre = |s: &str| format!("dec.{l}.{s}");
        let a: Vec<Vec<f64>> = x.iter().map(|r| norm(r, p(m, &pre("attn.ln.g")), p(m, &pre("attn.ln.b")))).collect();
        let q: Vec<_> = a.iter().map(|r| vecmat(r, p(m, &pre("attn.wq")))).collect();
        let k: Vec<_> = a.iter().map(|r| vecmat(r, p(m, &pre("attn.wk")))).collect();
        let val: Vec<_> = a.iter().map(|r| vecmat(r, p(m, &pre("attn.wv")))).collect();
        let rel: Vec<_> = (0..n).map(|dist| vecmat(&encoding(dist, d), p(m, &pre("attn.wr")))).collect();
        let (u, vb) = (p(m, &pre("attn.u")), p(m, &pre("attn.v")));
        let mut out = vec![vec![0.0; d]; n];
        for h in 0..nh {
            let cols = h * dh..(h + 1) * dh;
            for i in 0..n {
                let scores: Vec<f64> = (0..=i)
                    .map(|j| {
                        cols.clone()
                            .map(|c| (q[i][c] + u.data[c]) * k[j][c] + (q[i][c] + vb.data[c]) * rel[i - j][c])
                            .sum::<f64>()
                            / (dh as f64).sqrt()
                    })
                    .collect();
                let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let z: f64 = scores.iter().map(|s| (s - max).exp()).sum();
                for (j, s) in scores.iter().enumerate() {
                    let w = (s - max).exp() / z;
                    for c in cols.clone() {
                        out[i][c] += w * val[j][c];
                    }
                }
            }
        }
        for i in 0..n {
            let o = vecmat(&out[i], p(m, &pre("attn.wo")));
            (0..d).for_each(|c| x[i][c] += o[c]);
            let b = norm(&x[i], p(m, &pre("ffn.ln.g")), p(m, &pre("ffn.ln.b")));
            let mut hdn = vecmat(&b, p(m, &pre("ffn.w1")));
            let b1 = p(m, &pre("ffn.b1"));
            hdn.iter_mut().enumerate().for_each(|(c, v)| *v = gelu(*v + b1.data[c]));
            let f = vecmat(&hdn, p(m, &pre("ffn.w2")));
            let b2 = p(m, &pre("ffn.b2"));
            (0..d).for_each(|c| x[i][c] += f[c] + b2.data[c]);
        }
    }
    if cfg.n_layers > 0 {
        x = x.iter().map(|r| norm(r, p(m, "dec.norm.g"), p(m, "dec.norm.b"))).collect();
    }
    cfg.role
        .heads()
        .iter()
        .map(|&h| {
            let (w, b) = (p(m, &format!("head.{}.w", h.name())), p(m, &format!("head.{}.b", h.name())));
            let rows = x.iter().map(|r| vecmat(r, w).iter().zip(&b.data).map(|(a, c)| a + c).collect()).collect();
            (h, rows)
        })
        .collect()
}

fn diff_to_reference<F: Scalar>(logits: &wuyun_neuro::Logits<F>, reference: &[(Head, Vec<Vec<f64>>)]) -> f64 {
    let mut worst = 0.0f64;
    for (h, rows) in reference {
        let got = logits.get(*h).unwrap();
        for (i, r) in rows.iter().enumerate() {
            for (c, &x) in r.iter().enumerate() {
                worst = worst.max((got.at(i, c).f64() - x).abs());
            }
        }
    }
    worst
}

#[test]
fn memoryless_lm_matches_plain_reference() {
    let v = vocab();
    let tokens = lm_tokens(3, 3);
    for cfg in [
        ModelConfig { memory_len: 0, ..ModelConfig::tiny(Role::SkeletonLm) },
        ModelConfig { memory_len: 0, d_embed: 24, n_layers: 1, n_heads: 4, ..ModelConfig::tiny(Role::SkeletonLm) },
    ] {
        let mut m = Model::<f64>::new(cfg.clone(), 5).unwrap();
        scramble(&mut m, 0.2, 9);
        let reference = reference_lm(&m, &tokens);
        let (logits, mem) = m.forward_lm(&tokens, &Memory::empty(&cfg), &v).unwrap();
        assert_eq!(mem.len(), 0);
        let d64 = diff_to_reference(&logits, &reference);
        assert!(d64 < 1e-9, "f64 max abs diff {d64}");
        let m32: Model<f32> = m.cast();
        let (l32, _) = m32.forward_lm(&tokens, &Memory::empty(&cfg), &v).unwrap();
        let d32 = diff_to_reference(&l32, &reference);
        assert!(d32 < 1e-3, "f32 max abs diff {d32}");
    }
}

#[test]
fn zero_parameters_give_uniform_heads() {
    let v = vocab();
    for role in [Role::SkeletonLm, Role::InpaintSeq2seq] {
        let cfg = ModelConfig::tiny(role);
        let mut m = Model::<f32>::new(cfg.clone(), 1).unwrap();
        m.params.set_flat(&vec![0.0; cfg.param_count()]);
        let tokens = lm_tokens(4, 2);
        let logits = match role {
            Role::SkeletonLm => m.forward_lm(&tokens, &Memory::empty(&cfg), &v).unwrap().0,
            Role::InpaintSeq2seq => m.forward_seq2seq(&tokens[1..], &tokens[1..8], &v).unwrap(),
        };
        for (h, mat) in &logits.heads {
            assert_eq!(mat.cols, h.size());
            assert!(mat.data.iter().all(|&x| x == 0.0), "{h:?}");
        }
    }
}

#[test]
fn chunked_lm_with_memory_matches_whole_sequence() {
    let v = vocab();
    let cfg = ModelConfig::tiny(Role::SkeletonLm);
    let mut m = Model::<f32>::new(cfg.clone(), 11).unwrap();
    scramble(&mut m, 0.1, 12);
    let tokens = lm_tokens(6, 12);
    assert!(tokens.len() > 60 && tokens.len() < cfg.memory_len);
    let (whole, _) = m.forward_lm(&tokens, &Memory::empty(&cfg), &v).unwrap();
    for cut in [1, 17, tokens.len() / 2, tokens.len() - 1] {
        let (a, mem) = m.forward_lm(&tokens[..cut], &Memory::empty(&cfg), &v).unwrap();
        assert_eq!(mem.len(), cut);
        let (b, _) = m.forward_lm(&tokens[cut..], &mem, &v).unwrap();
        let mut worst = 0.0f64;
        for (h, full) in &whole.heads {
            let (pa, pb) = (a.get(*h).unwrap(), b.get(*h).unwrap());
            for r in 0..tokens.len() {
                let got = if r < cut { pa.row(r) } else { pb.row(r - cut) };
                for (x, y) in got.iter().zip(full.row(r)) {
                    worst = worst.max((x - y).abs() as f64);
                }
            }
        }
        assert!(worst < 1e-4, "cut {cut}: max abs diff {worst}");
    }
}

#[test]
fn memory_is_capped() {
    let v = vocab();
    let cfg = ModelConfig { memory_len: 16, ..ModelConfig::tiny(Role::SkeletonLm) };
    let m = Model::<f32>::new(cfg.clone(), 2).unwrap();
    let tokens = lm_tokens(1, 8);
    let (_, mem) = m.forward_lm(&tokens[..30], &Memory::empty(&cfg), &v).unwrap();
    assert_eq!(mem.len(), 16);
    assert_eq!(mem.offset, 30);
    let (_, mem) = m.forward_lm(&tokens[30..33], &mem, &v).unwrap();
    assert_eq!(mem.len(), 16);
}

#[test]
fn input_length_is_checked() {
    let v = vocab();
    let cfg = ModelConfig { context_len: 8, ..ModelConfig::tiny(Role::SkeletonLm) };
    let m = Model::<f32>::new(cfg.clone(), 2).unwrap();
    let tokens = lm_tokens(1, 2);
    assert!(matches!(m.forward_lm(&tokens[..9], &Memory::empty(&cfg), &v), Err(NeuroError::ShapeMismatch(_))));
    assert!(m.forward_lm(&tokens[..8], &Memory::empty(&cfg), &v).is_ok());
}

#[test]
fn softmax_of_every_head_is_normalized() {
    let v = vocab();
    let cfg = ModelConfig::tiny(Role::SkeletonLm);
    let mut m = Model::<f32>::new(cfg.clone(), 3).unwrap();
    scramble(&mut m, 0.3, 4);
    let (logits, _) = m.forward_lm(&lm_tokens(2, 3), &Memory::empty(&cfg), &v).unwrap();
    for (_, l) in &logits.heads {
        for r in 0..l.rows {
            let row = l.row(r);
            assert!(row.iter().all(|x| x.is_finite()));
            let max = row.iter().cloned().fold(f32::NEG_INFINITY, f32::max) as f64;
            let z: f64 = row.iter().map(|&x| (x as f64 - max).exp()).sum();
            let total: f64 = row.iter().map(|&x| (x as f64 - max).exp() / z).sum();
            assert!((total - 1.0).abs() < 1e-6);
        }
    }
}

// ---------------------------------------------------------------------------

fn seq2seq() -> (Model<f32>, Vec<Token>, Vec<Token>) {
    let v = vocab();
    let cfg = ModelConfig::tiny(Role::InpaintSeq2seq);
    let mut m = Model::<f32>::new(cfg, 21).unwrap();
    scramble(&mut m, 0.1, 22);
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let c = toy_corpus(&mut rng, 2, 3, &v);
    (m, c[0].tokens.clone(), c[1].tokens.clone())
}

#[test]
fn empty_prefix_predicts_the_first_token() {
    let (m, skel, _) = seq2seq();
    let l = m.forward_seq2seq(&skel, &[], &vocab()).unwrap();
    assert_eq!(l.rows(), 1);
    assert_eq!(l.heads.len(), Head::ALL.len());
}

#[test]
fn encoder_input_order_matters() {
    let (m, skel, other) = seq2seq();
    let v = vocab();
    let prefix = &other[..6];
    let base = m.forward_seq2seq(&skel, prefix, &v).unwrap();
    let mut swapped = skel.clone();
    let n = swapped.len();
    swapped.swap(2, n - 3);
    let moved = m.forward_seq2seq(&swapped, prefix, &v).unwrap();
    assert!(base.max_abs_diff(&moved) > 1e-5);
}

#[test]
fn conditioning_is_live() {
    let (m, a, b) = seq2seq();
    let v = vocab();
    let prefix = &a[..5];
    let la = m.forward_seq2seq(&a, prefix, &v).unwrap();
    let lb = m.forward_seq2seq(&b, prefix, &v).unwrap();
    assert!(la.max_abs_diff(&lb) > 1e-5);
}

#[test]
fn empty_skeleton_is_rejected() {
    let (m, _, b) = seq2seq();
    assert_eq!(m.forward_seq2seq(&[], &b[..3], &vocab()).unwrap_err(), NeuroError::EmptySkeleton);
}

#[test]
fn roles_are_enforced() {
    let (m, a, _) = seq2seq();
    let v = vocab();
    assert!(matches!(m.forward_lm(&a, &Memory::empty(&m.config), &v), Err(NeuroError::WrongRole { .. })));
}

#[test]
fn chunked_decoder_with_memory_matches_whole_sequence() {
    let (m, skel, mel) = seq2seq();
    let v = vocab();
    let enc = m.encode(&skel, &v).unwrap();
    let mut input = vec![Token::Bos];
    input.extend_from_slice(&mel);
    let (whole, _) = m.forward_decoder(&enc, &input, &Memory::empty(&m.config), &v).unwrap();
    let cut = input.len() / 3;
    let (a, mem) = m.forward_decoder(&enc, &input[..cut], &Memory::empty(&m.config), &v).unwrap();
    let (b, _) = m.forward_decoder(&enc, &input[cut..], &mem, &v).unwrap();
    for (h, full) in &whole.heads {
        for r in 0..input.len() {
            let got = if r < cut { a.get(*h).unwrap().row(r) } else { b.get(*h).unwrap().row(r - cut) };
            for (x, y) in got.iter().zip(full.row(r)) {
                assert!((x - y).abs() < 1e-4);
            }
        }
    }
}
