//! Grammar-masked top-k sampling and unconditional skeleton generation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use wuyun_core::memidi::{EventType, Grammar, MeMidiSequence, TempoClass, Token, Vocabulary};
use wuyun_core::score::Chord;

use crate::error::NeuroError;
use crate::features::Head;
use crate::model::{Logits, Memory, Model, Role};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub top_k: usize,
    pub temperature: f64,
    pub max_bars: u32,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig { top_k: 10, temperature: 0.9, max_bars: 28, seed: 0 }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<(), NeuroError> {
        if self.top_k == 0 {
            return Err(NeuroError::InvalidConfig("top_k must be at least 1".into()));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(NeuroError::InvalidConfig(format!("temperature {} must be positive", self.temperature)));
        }
        if self.max_bars == 0 {
            return Err(NeuroError::InvalidConfig("max_bars must be at least 1".into()));
        }
        Ok(())
    }
}

/// One sampled head decision.
#[derive(Debug, Clone, PartialEq)]
pub struct AuditEntry {
    pub head: Head,
    pub logits: Vec<f32>,
    pub allowed: Vec<bool>,
    pub chosen: usize,
    /// No top-k candidate was grammar-legal.
    pub fallback: bool,
}

/// Indices of the `k` largest values, ties broken by lower index.
pub fn top_k(logits: &[f32], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..logits.len()).collect();
    idx.sort_by(|&a, &b| logits[b].total_cmp(&logits[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

pub struct Sampler {
    pub config: SamplerConfig,
    rng: ChaCha8Rng,
    pub decisions: usize,
    pub fallbacks: usize,
    /// Filled only when auditing is on.
    pub audit: Option<Vec<AuditEntry>>,
}

/// Per-step legality masks for the type head and the constrained attribute heads.
#[derive(Debug, Clone, PartialEq)]
pub struct StepMasks {
    pub types: [bool; 6],
    pub positions: Vec<bool>,
    pub durations: Vec<bool>,
}

impl StepMasks {
    pub fn from_grammar(g: &Grammar, vocab: &Vocabulary) -> Self {
        StepMasks {
            types: g.allowed_types(vocab),
            positions: g.allowed_positions(vocab),
            durations: g.allowed_durations(vocab),
        }
    }
}

impl Sampler {
    pub fn new(config: SamplerConfig) -> Result<Self, NeuroError> {
        config.validate()?;
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        Ok(Sampler { config, rng, decisions: 0, fallbacks: 0, audit: None })
    }

    pub fn with_audit(mut self) -> Self {
        self.audit = Some(Vec::new());
        self
    }

    pub fn fallback_rate(&self) -> f64 {
        if self.decisions == 0 {
            0.0
        } else {
            self.fallbacks as f64 / self.decisions as f64
        }
    }

    /// Sample one class of `head` among the legal members of the top-k set,
    /// or among all legal classes when none of the top-k is legal.
    pub fn choose(&mut self, head: Head, logits: &[f32], allowed: &[bool]) -> Result<usize, NeuroError> {
        assert_eq!(logits.len(), allowed.len());
        if !allowed.iter().any(|&a| a) {
            return Err(NeuroError::GrammarDeadlock(format!("no legal {} class", head.name())));
        }
        let mut cand: Vec<usize> = top_k(logits, self.config.top_k).into_iter().filter(|&i| allowed[i]).collect();
        let fallback = cand.is_empty();
        if fallback {
            cand = (0..logits.len()).filter(|&i| allowed[i]).collect();
        }
        let inv_t = 1.0 / self.config.temperature;
        let max = cand.iter().map(|&i| logits[i] as f64).fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = cand.iter().map(|&i| ((logits[i] as f64 - max) * inv_t).exp()).collect();
        let total: f64 = weights.iter().sum();
        let mut u = self.rng.random::<f64>() * total;
        let mut chosen = *cand.last().expect("non-empty");
        for (&i, &w) in cand.iter().zip(&weights) {
            if u < w {
                chosen = i;
                break;
            }
            u -= w;
        }
        self.decisions += 1;
        if fallback {
            self.fallbacks += 1;
        }
        if let Some(a) = self.audit.as_mut() {
            a.push(AuditEntry { head, logits: logits.to_vec(), allowed: allowed.to_vec(), chosen, fallback });
        }
        Ok(chosen)
    }

    fn head_row(logits: &Logits<f32>, head: Head, row: usize) -> Result<&[f32], NeuroError> {
        logits
            .get(head)
            .map(|m| m.row(row))
            .ok_or_else(|| NeuroError::GrammarDeadlock(format!("model has no {} head", head.name())))
    }

    pub fn choose_type(
        &mut self,
        logits: &Logits<f32>,
        row: usize,
        types: &[bool; 6],
    ) -> Result<EventType, NeuroError> {
        let i = self.choose(Head::Type, Self::head_row(logits, Head::Type, row)?, types)?;
        Ok(EventType::ALL[i])
    }

    /// Attribute values of an event of type `ty`.
    pub fn complete(
        &mut self,
        ty: EventType,
        logits: &Logits<f32>,
        row: usize,
        masks: &StepMasks,
        vocab: &Vocabulary,
    ) -> Result<Token, NeuroError> {
        let pick = |s: &mut Self, head: Head, allowed: Option<&[bool]>| -> Result<usize, NeuroError> {
            let l = Self::head_row(logits, head, row)?;
            let all = vec![true; l.len()];
            s.choose(head, l, allowed.unwrap_or(&all))
        };
        Ok(match ty {
            EventType::Tempo => Token::Tempo(TempoClass::ALL[pick(self, Head::Tempo, None)?]),
            EventType::Bar => Token::Bar,
            EventType::Eos => Token::Eos,
            EventType::Pos => Token::Pos(vocab.positions()[pick(self, Head::Position, Some(&masks.positions))?]),
            EventType::Chord => Token::Chord(Chord::from_index(pick(self, Head::Chord, None)?).expect("chord index")),
            EventType::Note => {
                let pitch = vocab.pitch(pick(self, Head::Pitch, None)?);
                let velocity = pick(self, Head::Velocity, None)? as u8;
                let duration = vocab.durations()[pick(self, Head::Duration, Some(&masks.durations))?];
                Token::Note { pitch, velocity, duration }
            }
        })
    }

    /// Sample a full token under `masks`.
    pub fn next_token(
        &mut self,
        logits: &Logits<f32>,
        row: usize,
        masks: &StepMasks,
        vocab: &Vocabulary,
    ) -> Result<Token, NeuroError> {
        let ty = self.choose_type(logits, row, &masks.types)?;
        self.complete(ty, logits, row, masks, vocab)
    }
}

/// Feed `tokens` through the language model in context-sized pieces.
fn feed_lm(
    model: &Model<f32>,
    tokens: &[Token],
    memory: Memory<f32>,
    vocab: &Vocabulary,
) -> Result<(Logits<f32>, Memory<f32>), NeuroError> {
    let mut memory = memory;
    let mut last = None;
    for chunk in tokens.chunks(model.config.context_len) {
        let (l, m) = model.forward_lm(chunk, &memory, vocab)?;
        memory = m;
        last = Some(l);
    }
    Ok((last.ok_or_else(|| NeuroError::ShapeMismatch("empty input".into()))?, memory))
}

/// Continue `prompt` (skeleton tokens without BOS) until EOS. Prompt tokens
/// skip the strict grid checks that sampled tokens obey.
pub fn sample_skeleton(
    model: &Model<f32>,
    prompt: &[Token],
    sampler: &mut Sampler,
    vocab: &Vocabulary,
) -> Result<MeMidiSequence, NeuroError> {
    if model.config.role != Role::SkeletonLm {
        return Err(NeuroError::WrongRole {
            expected: Role::SkeletonLm.name().into(),
            found: model.config.role.name().into(),
        });
    }
    let mut grammar = Grammar::strict(true, sampler.config.max_bars);
    grammar.accept(&Token::Bos).expect("BOS opens a sequence");
    for (i, t) in prompt.iter().enumerate() {
        grammar.force(t).map_err(|e| NeuroError::InvalidSequence(format!("prompt token {i}: {e}")))?;
    }
    let mut tokens = prompt.to_vec();
    if grammar.is_done() {
        return Ok(MeMidiSequence::new(tokens, true));
    }
    let mut input = vec![Token::Bos];
    input.extend_from_slice(prompt);
    let (mut logits, mut memory) = feed_lm(model, &input, Memory::empty(&model.config), vocab)?;
    loop {
        let row = logits.rows() - 1;
        let tok = sampler.next_token(&logits, row, &StepMasks::from_grammar(&grammar, vocab), vocab)?;
        grammar.accept(&tok).map_err(NeuroError::GrammarDeadlock)?;
        tokens.push(tok);
        if grammar.is_done() {
            break;
        }
        (logits, memory) = model.forward_lm(&[tok], &memory, vocab)?;
    }
    Ok(MeMidiSequence::new(tokens, true))
}
