//! The skeleton language model and the skeleton-to-melody encoder-decoder.
//!
//! Both share the compound input embedding, pre-norm transformer blocks and
//! the factorized output heads. The language model uses relative attention
//! over `[memory | input]`; the encoder-decoder adds sinusoidal absolute
//! positions, a bidirectional encoder and decoder cross-attention.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use wuyun_core::memidi::{Token, Vocabulary};

use crate::error::NeuroError;
use crate::features::{features, Features, Field, Head, StreamState, Target};
use crate::mat::{Mat, Scalar};
use crate::params::ParamStore;
use crate::tape::{Node, Tape, NO_COL};

pub const INIT_STD: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    SkeletonLm,
    InpaintSeq2seq,
}

impl Role {
    pub fn name(self) -> &'static str {
        match self {
            Role::SkeletonLm => "skeleton_lm",
            Role::InpaintSeq2seq => "inpaint_seq2seq",
        }
    }

    pub fn heads(self) -> &'static [Head] {
        match self {
            Role::SkeletonLm => &[Head::Type, Head::Tempo, Head::Position, Head::Pitch, Head::Velocity, Head::Duration],
            Role::InpaintSeq2seq => &Head::ALL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub role: Role,
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_model: usize,
    pub d_ff: usize,
    pub d_embed: usize,
    pub context_len: usize,
    pub memory_len: usize,
    pub dropout_rate: f64,
}

impl ModelConfig {
    /// Small configuration used by tests and desk-scale runs.
    pub fn tiny(role: Role) -> Self {
        ModelConfig {
            role,
            n_layers: 2,
            n_heads: 2,
            d_model: 64,
            d_ff: 256,
            d_embed: 64,
            context_len: 256,
            memory_len: 128,
            dropout_rate: 0.0,
        }
    }

    pub fn full(role: Role) -> Self {
        match role {
            Role::SkeletonLm => ModelConfig {
                role,
                n_layers: 4,
                n_heads: 8,
                d_model: 512,
                d_ff: 2048,
                d_embed: 256,
                context_len: 512,
                memory_len: 512,
                dropout_rate: 0.1,
            },
            Role::InpaintSeq2seq => ModelConfig {
                role,
                n_layers: 4,
                n_heads: 4,
                d_model: 256,
                d_ff: 1024,
                d_embed: 256,
                context_len: 512,
                memory_len: 512,
                dropout_rate: 0.1,
            },
        }
    }

    pub fn validate(&self) -> Result<(), NeuroError> {
        let bad = |m: String| Err(NeuroError::InvalidConfig(m));
        if self.d_model == 0 || self.d_embed == 0 || self.n_heads == 0 {
            return bad("d_model, d_embed and n_heads must be positive".into());
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return bad(format!("d_model {} is not divisible by n_heads {}", self.d_model, self.n_heads));
        }
        if self.n_layers > 0 && self.d_ff == 0 {
            return bad("d_ff must be positive".into());
        }
        if self.context_len == 0 {
            return bad("context_len must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad(format!("dropout_rate {} outside [0, 1)", self.dropout_rate));
        }
        Ok(())
    }

    pub fn d_head(&self) -> usize {
        self.d_model / self.n_heads
    }

    /// Parameter count from the configuration alone.
    pub fn param_count(&self) -> usize {
        let (d, f, e) = (self.d_model, self.d_ff, self.d_embed);
        let embed = e * Field::ALL.iter().map(|f| f.size()).sum::<usize>() + if e != d { e * d } else { 0 };
        let block = 2 * d + 4 * d * d + 2 * d + d * f + f + f * d + d;
        let relative = d * d + 2 * d;
        let cross = 2 * d + 4 * d * d;
        let final_norm = if self.n_layers > 0 { 2 * d } else { 0 };
        let heads: usize = self.role.heads().iter().map(|h| (d + 1) * h.size()).sum();
        let l = self.n_layers;
        match self.role {
            Role::SkeletonLm => embed + l * (block + relative) + final_norm + heads,
            Role::InpaintSeq2seq => embed + l * block + final_norm + l * (block + cross) + final_norm + heads,
        }
    }
}

type NormIds = (usize, usize);

#[derive(Debug, Clone)]
struct AttnIds {
    ln: NormIds,
    wq: usize,
    wk: usize,
    wv: usize,
    wo: usize,
}

#[derive(Debug, Clone)]
struct BlockIds {
    attn: AttnIds,
    /// `W_r`, `u`, `v` of relative attention.
    rel: Option<(usize, usize, usize)>,
    cross: Option<AttnIds>,
    ln2: NormIds,
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
}

#[derive(Debug, Clone)]
struct Layout {
    emb: Vec<usize>,
    proj: Option<usize>,
    enc: Vec<BlockIds>,
    enc_norm: Option<NormIds>,
    dec: Vec<BlockIds>,
    dec_norm: Option<NormIds>,
    heads: Vec<(Head, usize, usize)>,
}

/// Detached per-layer inputs of earlier timesteps together with the
/// stream context needed to embed the next token.
#[derive(Debug, Clone, PartialEq)]
pub struct Memory<F> {
    pub layers: Vec<Mat<F>>,
    pub state: StreamState,
    /// Timesteps consumed so far.
    pub offset: usize,
}

impl<F: Scalar> Memory<F> {
    pub fn empty(config: &ModelConfig) -> Self {
        Memory {
            layers: vec![Mat::zeros(0, config.d_model); config.n_layers],
            state: StreamState::default(),
            offset: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.layers.first().map_or(0, |m| m.rows)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Logits per active head, one row per input timestep.
#[derive(Debug, Clone, PartialEq)]
pub struct Logits<F> {
    pub heads: Vec<(Head, Mat<F>)>,
}

impl<F: Scalar> Logits<F> {
    pub fn get(&self, head: Head) -> Option<&Mat<F>> {
        self.heads.iter().find(|(h, _)| *h == head).map(|(_, m)| m)
    }

    pub fn rows(&self) -> usize {
        self.heads.first().map_or(0, |(_, m)| m.rows)
    }

    pub fn max_abs_diff(&self, other: &Logits<F>) -> f64 {
        self.heads.iter().zip(&other.heads).map(|((_, a), (_, b))| a.max_abs_diff(b)).fold(0.0, f64::max)
    }
}

/// Encoder output with the cross-attention keys and values of every decoder layer.
#[derive(Debug, Clone)]
pub struct Encoded<F> {
    pub output: Mat<F>,
    kv: Vec<(Mat<F>, Mat<F>)>,
}

/// Dropout source for a training forward pass.
pub struct Dropout<'r> {
    pub rate: f64,
    pub rng: &'r mut ChaCha8Rng,
}

fn drop<F: Scalar>(t: &mut Tape<F>, x: Node, d: &mut Option<Dropout>) -> Node {
    match d {
        Some(d) => t.dropout(x, d.rate, d.rng),
        None => x,
    }
}

/// Interleaved sine / cosine encoding of each position.
pub fn sinusoid<F: Scalar>(positions: impl Iterator<Item = usize>, d: usize) -> Mat<F> {
    let pos: Vec<usize> = positions.collect();
    let mut m = Mat::zeros(pos.len(), d);
    for (r, &p) in pos.iter().enumerate() {
        for c in 0..d {
            let freq = 1.0 / 10000f64.powf((2 * (c / 2)) as f64 / d as f64);
            let a = p as f64 * freq;
            m.data[r * d + c] = F::of(if c % 2 == 0 { a.sin() } else { a.cos() });
        }
    }
    m
}

#[derive(Debug, Clone)]
pub struct Model<F> {
    pub config: ModelConfig,
    pub params: ParamStore<F>,
    layout: Layout,
}

/// Summed head losses for one stretch of targets.
pub struct LossParts {
    pub loss: Node,
    pub targets: usize,
    pub correct: usize,
    pub uniform: f64,
}

impl<F: Scalar> Model<F> {
    /// Parameters initialized from `seed`: weights from N(0, 0.02), biases zero, norm gains one.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self, NeuroError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, INIT_STD).expect("positive deviation");
        let mut store = ParamStore::new();
        let (d, e, ff) = (config.d_model, config.d_embed, config.d_ff);
        let w = |store: &mut ParamStore<F>, name: String, r: usize, c: usize, rng: &mut ChaCha8Rng| {
            store.push(name, Mat::from_vec(r, c, (0..r * c).map(|_| F::of(normal.sample(rng))).collect()))
        };
        let zeros = |store: &mut ParamStore<F>, name: String, c: usize| store.push(name, Mat::zeros(1, c));
        let norm = |store: &mut ParamStore<F>, name: &str| {
            (store.push(format!("{name}.g"), Mat::filled(1, d, F::one())), zeros(store, format!("{name}.b"), d))
        };
        let emb =
            Field::ALL.iter().map(|f| w(&mut store, format!("emb.{}", f.name()), f.size(), e, &mut rng)).collect();
        let proj = (e != d).then(|| w(&mut store, "emb.proj".into(), e, d, &mut rng));
        let attn = |store: &mut ParamStore<F>, p: &str, rng: &mut ChaCha8Rng| AttnIds {
            ln: norm(store, &format!("{p}.ln")),
            wq: w(store, format!("{p}.wq"), d, d, rng),
            wk: w(store, format!("{p}.wk"), d, d, rng),
            wv: w(store, format!("{p}.wv"), d, d, rng),
            wo: w(store, format!("{p}.wo"), d, d, rng),
        };
        let block = |store: &mut ParamStore<F>, p: String, relative: bool, cross: bool, rng: &mut ChaCha8Rng| {
            let a = attn(store, &format!("{p}.attn"), rng);
            let rel = relative.then(|| {
                (
                    w(store, format!("{p}.attn.wr"), d, d, rng),
                    w(store, format!("{p}.attn.u"), 1, d, rng),
                    w(store, format!("{p}.attn.v"), 1, d, rng),
                )
            });
            let cross = cross.then(|| attn(store, &format!("{p}.cross"), rng));
            BlockIds {
                attn: a,
                rel,
                cross,
                ln2: norm(store, &format!("{p}.ffn.ln")),
                w1: w(store, format!("{p}.ffn.w1"), d, ff, rng),
                b1: zeros(store, format!("{p}.ffn.b1"), ff),
                w2: w(store, format!("{p}.ffn.w2"), ff, d, rng),
                b2: zeros(store, format!("{p}.ffn.b2"), d),
            }
        };
        let l = config.n_layers;
        let (enc, enc_norm) = match config.role {
            Role::SkeletonLm => (Vec::new(), None),
            Role::InpaintSeq2seq => {
                let blocks = (0..l).map(|i| block(&mut store, format!("enc.{i}"), false, false, &mut rng)).collect();
                (blocks, (l > 0).then(|| norm(&mut store, "enc.norm")))
            }
        };
        let relative = config.role == Role::SkeletonLm;
        let cross = config.role == Role::InpaintSeq2seq;
        let dec = (0..l).map(|i| block(&mut store, format!("dec.{i}"), relative, cross, &mut rng)).collect();
        let dec_norm = (l > 0).then(|| norm(&mut store, "dec.norm"));
        let heads = config
            .role
            .heads()
            .iter()
            .map(|&h| {
                let wi = w(&mut store, format!("head.{}.w", h.name()), d, h.size(), &mut rng);
                (h, wi, zeros(&mut store, format!("head.{}.b", h.name()), h.size()))
            })
            .collect();
        let layout = Layout { emb, proj, enc, enc_norm, dec, dec_norm, heads };
        debug_assert_eq!(store.count(), config.param_count());
        Ok(Model { config, params: store, layout })
    }

    /// Same model with parameters of another precision.
    pub fn cast<G: Scalar>(&self) -> Model<G> {
        Model { config: self.config.clone(), params: self.params.cast(), layout: self.layout.clone() }
    }

    pub fn with_params(config: ModelConfig, params: ParamStore<F>) -> Result<Self, NeuroError> {
        let fresh = Model::<F>::new(config, 0)?;
        if fresh.params.specs() != params.specs() {
            return Err(NeuroError::ShapeMismatch("parameter layout differs from the configuration".into()));
        }
        Ok(Model { params, ..fresh })
    }

    fn expect_role(&self, role: Role) -> Result<(), NeuroError> {
        if self.config.role != role {
            return Err(NeuroError::WrongRole { expected: role.name().into(), found: self.config.role.name().into() });
        }
        Ok(())
    }

    fn norm(&self, t: &mut Tape<F>, x: Node, ids: NormIds) -> Node {
        let (g, b) = (t.param(ids.0), t.param(ids.1));
        t.layer_norm(x, g, b)
    }

    pub fn embed(&self, t: &mut Tape<F>, feats: &[Features], drop_src: &mut Option<Dropout>) -> Node {
        let mut sum = None;
        for (f, &table) in self.layout.emb.iter().enumerate() {
            let ids: Vec<usize> = feats.iter().map(|x| x[f]).collect();
            let tab = t.param(table);
            let g = t.gather_rows(tab, &ids);
            sum = Some(match sum {
                None => g,
                Some(s) => t.add(s, g),
            });
        }
        let mut x = sum.expect("at least one field");
        if let Some(p) = self.layout.proj {
            let w = t.param(p);
            x = t.matmul(x, w);
        }
        drop(t, x, drop_src)
    }

    /// Multi-head attention of `q` (L rows) over `k`, `v` (K rows).
    #[allow(clippy::too_many_arguments)]
    fn attend(
        &self,
        t: &mut Tape<F>,
        q: Node,
        k: Node,
        v: Node,
        rel: Option<(Node, Node, Node)>,
        mask: Option<&[bool]>,
        mem: usize,
        d: &mut Option<Dropout>,
    ) -> Node {
        let (l, kk) = (t.value(q).rows, t.value(k).rows);
        let dh = self.config.d_head();
        let scale = F::of(1.0 / (dh as f64).sqrt());
        let shift: Option<Vec<usize>> = rel.map(|_| {
            (0..l * kk)
                .map(|x| {
                    let (i, j) = (x / kk, x % kk);
                    if j <= mem + i {
                        mem + i - j
                    } else {
                        NO_COL
                    }
                })
                .collect()
        });
        let mut outs = Vec::with_capacity(self.config.n_heads);
        for h in 0..self.config.n_heads {
            let qh = t.slice_cols(q, h * dh, dh);
            let kh = t.slice_cols(k, h * dh, dh);
            let vh = t.slice_cols(v, h * dh, dh);
            let s = match rel {
                Some((r, u, vb)) => {
                    let rh = t.slice_cols(r, h * dh, dh);
                    let uh = t.slice_cols(u, h * dh, dh);
                    let vbh = t.slice_cols(vb, h * dh, dh);
                    let qu = t.add_row(qh, uh);
                    let qv = t.add_row(qh, vbh);
                    let content = t.matmul_nt(qu, kh);
                    let by_dist = t.matmul_nt(qv, rh);
                    let position = t.gather_cols(by_dist, shift.clone().expect("shift table"), kk);
                    t.add(content, position)
                }
                None => t.matmul_nt(qh, kh),
            };
            let s = t.scale(s, scale);
            let p = t.softmax(s, mask);
            let p = drop(t, p, d);
            outs.push(t.matmul(p, vh));
        }
        if outs.len() == 1 {
            outs[0]
        } else {
            t.concat_cols(&outs)
        }
    }

    fn ffn(&self, t: &mut Tape<F>, x: Node, b: &BlockIds, d: &mut Option<Dropout>) -> Node {
        let y = self.norm(t, x, b.ln2);
        let (w1, b1, w2, b2) = (t.param(b.w1), t.param(b.b1), t.param(b.w2), t.param(b.b2));
        let y = t.matmul(y, w1);
        let y = t.add_row(y, b1);
        let y = t.gelu(y);
        let y = t.matmul(y, w2);
        let y = t.add_row(y, b2);
        let y = drop(t, y, d);
        t.add(x, y)
    }

    /// Causal stack over `[memory | x]`; returns the final hidden states and
    /// the updated per-layer memory.
    fn decoder_stack(
        &self,
        t: &mut Tape<F>,
        mut x: Node,
        memory: &[Mat<F>],
        cross: Option<CrossSource<F>>,
        d: &mut Option<Dropout>,
    ) -> (Node, Vec<Mat<F>>) {
        let l = t.value(x).rows;
        let mut new_mem = Vec::with_capacity(self.layout.dec.len());
        for (i, b) in self.layout.dec.iter().enumerate() {
            let m = memory.get(i).map_or(0, |m| m.rows);
            let full = if m > 0 {
                let mn = t.constant(memory[i].clone());
                t.concat_rows(&[mn, x])
            } else {
                x
            };
            let kk = m + l;
            let keep = kk.min(self.config.memory_len);
            let fv = t.value(full);
            new_mem.push(Mat::from_vec(keep, fv.cols, fv.data[(kk - keep) * fv.cols..].to_vec()));
            let a = self.norm(t, full, b.attn.ln);
            let aq = if m > 0 { t.slice_rows(a, m, l) } else { a };
            let (wq, wk, wv, wo) = (t.param(b.attn.wq), t.param(b.attn.wk), t.param(b.attn.wv), t.param(b.attn.wo));
            let q = t.matmul(aq, wq);
            let k = t.matmul(a, wk);
            let v = t.matmul(a, wv);
            let rel = b.rel.map(|(wr, u, vb)| {
                let r = t.constant(sinusoid(0..kk, self.config.d_model));
                let wr = t.param(wr);
                let r = t.matmul(r, wr);
                (r, t.param(u), t.param(vb))
            });
            let mask: Vec<bool> = (0..l * kk).map(|x| x % kk <= m + x / kk).collect();
            let o = self.attend(t, q, k, v, rel, Some(&mask), m, d);
            let o = t.matmul(o, wo);
            let o = drop(t, o, d);
            x = t.add(x, o);
            if let (Some(c), Some(src)) = (&b.cross, cross.as_ref()) {
                let y = self.norm(t, x, c.ln);
                let wq = t.param(c.wq);
                let q = t.matmul(y, wq);
                let (k, v) = match src {
                    CrossSource::Node(enc) => {
                        let (wk, wv) = (t.param(c.wk), t.param(c.wv));
                        (t.matmul(*enc, wk), t.matmul(*enc, wv))
                    }
                    CrossSource::Cached(e) => (t.constant(e.kv[i].0.clone()), t.constant(e.kv[i].1.clone())),
                };
                let o = self.attend(t, q, k, v, None, None, 0, d);
                let wo = t.param(c.wo);
                let o = t.matmul(o, wo);
                let o = drop(t, o, d);
                x = t.add(x, o);
            }
            x = self.ffn(t, x, b, d);
        }
        if let Some(n) = self.layout.dec_norm {
            x = self.norm(t, x, n);
        }
        (x, new_mem)
    }

    fn encoder_stack(&self, t: &mut Tape<F>, feats: &[Features], d: &mut Option<Dropout>) -> Node {
        let x = self.embed(t, feats, d);
        let pos = t.constant(sinusoid(0..feats.len(), self.config.d_model));
        let mut x = t.add(x, pos);
        for b in &self.layout.enc {
            let a = self.norm(t, x, b.attn.ln);
            let (wq, wk, wv, wo) = (t.param(b.attn.wq), t.param(b.attn.wk), t.param(b.attn.wv), t.param(b.attn.wo));
            let q = t.matmul(a, wq);
            let k = t.matmul(a, wk);
            let v = t.matmul(a, wv);
            let o = self.attend(t, q, k, v, None, None, 0, d);
            let o = t.matmul(o, wo);
            let o = drop(t, o, d);
            x = t.add(x, o);
            x = self.ffn(t, x, b, d);
        }
        if let Some(n) = self.layout.enc_norm {
            x = self.norm(t, x, n);
        }
        x
    }

    /// Final hidden states of one stretch of decoder input.
    pub fn hidden(
        &self,
        t: &mut Tape<F>,
        feats: &[Features],
        memory: &Memory<F>,
        cross: Option<CrossSource<F>>,
        d: &mut Option<Dropout>,
    ) -> (Node, Vec<Mat<F>>) {
        let mut x = self.embed(t, feats, d);
        if self.config.role == Role::InpaintSeq2seq {
            let pos = t.constant(sinusoid(memory.offset..memory.offset + feats.len(), self.config.d_model));
            x = t.add(x, pos);
        }
        self.decoder_stack(t, x, &memory.layers, cross, d)
    }

    pub fn encode_node(
        &self,
        t: &mut Tape<F>,
        skeleton: &[Token],
        vocab: &Vocabulary,
        d: &mut Option<Dropout>,
    ) -> Result<Node, NeuroError> {
        self.expect_role(Role::InpaintSeq2seq)?;
        if skeleton.is_empty() {
            return Err(NeuroError::EmptySkeleton);
        }
        Ok(self.encoder_stack(t, &features(skeleton, vocab), d))
    }

    pub fn head_logits(&self, t: &mut Tape<F>, h: Node, head: Head) -> Option<Node> {
        let &(_, w, b) = self.layout.heads.iter().find(|(x, _, _)| *x == head)?;
        let (w, b) = (t.param(w), t.param(b));
        let y = t.matmul(h, w);
        Some(t.add_row(y, b))
    }

    /// Summed cross-entropy of every active head, plus accuracy counts.
    pub fn loss(&self, t: &mut Tape<F>, h: Node, targets: &[Option<Target>]) -> LossParts {
        let mut correct: Vec<bool> = targets.iter().map(Option::is_some).collect();
        let mut total: Option<Node> = None;
        let mut uniform = 0.0;
        for &(head, _, _) in &self.layout.heads {
            let hi = head as usize;
            let rows: Vec<usize> =
                (0..targets.len()).filter(|&r| targets[r].is_some_and(|x| x[hi].is_some())).collect();
            if rows.is_empty() {
                continue;
            }
            uniform += rows.len() as f64 * (head.size() as f64).ln();
            let hr = t.gather_rows(h, &rows);
            let logits = self.head_logits(t, hr, head).expect("head in layout");
            let classes: Vec<Option<usize>> = rows.iter().map(|&r| targets[r].and_then(|x| x[hi])).collect();
            let lv = t.value(logits);
            for (i, &r) in rows.iter().enumerate() {
                if argmax(lv.row(i)) != classes[i].expect("active") {
                    correct[r] = false;
                }
            }
            let ce = t.cross_entropy(logits, &classes);
            total = Some(match total {
                None => ce,
                Some(s) => t.add(s, ce),
            });
        }
        let loss = total.unwrap_or_else(|| t.constant(Mat::scalar(F::zero())));
        LossParts {
            loss,
            targets: targets.iter().filter(|x| x.is_some()).count(),
            correct: correct.iter().filter(|&&c| c).count(),
            uniform,
        }
    }

    fn all_logits(&self, t: &mut Tape<F>, h: Node) -> Logits<F> {
        let heads = self.layout.heads.iter().map(|&(head, _, _)| {
            let n = self.head_logits(t, h, head).expect("head in layout");
            (head, t.value(n).clone())
        });
        Logits { heads: heads.collect() }
    }

    fn check_len(&self, n: usize) -> Result<(), NeuroError> {
        if n > self.config.context_len {
            return Err(NeuroError::ShapeMismatch(format!(
                "input length {n} exceeds context_len {}",
                self.config.context_len
            )));
        }
        if n == 0 {
            return Err(NeuroError::ShapeMismatch("empty input".into()));
        }
        Ok(())
    }

    fn advance(&self, memory: &Memory<F>, tokens: &[Token], vocab: &Vocabulary) -> (Vec<Features>, StreamState) {
        let mut state = memory.state;
        let feats = tokens.iter().map(|tok| state.step(tok, vocab)).collect();
        (feats, state)
    }

    /// Logits for every input position of the language model, continuing from `memory`.
    pub fn forward_lm(
        &self,
        tokens: &[Token],
        memory: &Memory<F>,
        vocab: &Vocabulary,
    ) -> Result<(Logits<F>, Memory<F>), NeuroError> {
        self.expect_role(Role::SkeletonLm)?;
        self.check_len(tokens.len())?;
        let (feats, state) = self.advance(memory, tokens, vocab);
        let mut t = Tape::new(&self.params);
        let (h, layers) = self.hidden(&mut t, &feats, memory, None, &mut None);
        let logits = self.all_logits(&mut t, h);
        Ok((logits, Memory { layers, state, offset: memory.offset + tokens.len() }))
    }

    pub fn encode(&self, skeleton: &[Token], vocab: &Vocabulary) -> Result<Encoded<F>, NeuroError> {
        let mut t = Tape::new(&self.params);
        let enc = self.encode_node(&mut t, skeleton, vocab, &mut None)?;
        let output = t.value(enc).clone();
        let kv = self
            .layout
            .dec
            .iter()
            .map(|b| {
                let c = b.cross.as_ref().expect("decoder blocks carry cross-attention");
                (output.matmul(self.params.mat(c.wk)), output.matmul(self.params.mat(c.wv)))
            })
            .collect();
        Ok(Encoded { output, kv })
    }

    /// Decoder logits for every input position, continuing from `memory`.
    pub fn forward_decoder(
        &self,
        encoded: &Encoded<F>,
        tokens: &[Token],
        memory: &Memory<F>,
        vocab: &Vocabulary,
    ) -> Result<(Logits<F>, Memory<F>), NeuroError> {
        self.expect_role(Role::InpaintSeq2seq)?;
        self.check_len(tokens.len())?;
        let (feats, state) = self.advance(memory, tokens, vocab);
        let mut t = Tape::new(&self.params);
        let (h, layers) = self.hidden(&mut t, &feats, memory, Some(CrossSource::Cached(encoded)), &mut None);
        let logits = self.all_logits(&mut t, h);
        Ok((logits, Memory { layers, state, offset: memory.offset + tokens.len() }))
    }

    /// Decoder logits for `[BOS] + prefix` conditioned on `skeleton`.
    pub fn forward_seq2seq(
        &self,
        skeleton: &[Token],
        prefix: &[Token],
        vocab: &Vocabulary,
    ) -> Result<Logits<F>, NeuroError> {
        let enc = self.encode(skeleton, vocab)?;
        let mut input = vec![Token::Bos];
        input.extend_from_slice(prefix);
        Ok(self.forward_decoder(&enc, &input, &Memory::empty(&self.config), vocab)?.0)
    }
}

/// Where decoder cross-attention reads its keys and values.
#[derive(Clone, Copy)]
pub enum CrossSource<'e, F> {
    Node(Node),
    Cached(&'e Encoded<F>),
}

pub fn argmax<F: Scalar>(row: &[F]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Seeded generator for one `(step, sequence)` pair.
pub fn stream_rng(seed: u64, step: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(step.wrapping_mul(1 << 24).wrapping_add(index));
    let _: u32 = rng.random();
    rng
}
