//! CleanScore <-> event sequence, plus the text and binary sequence files.

use serde::{Deserialize, Serialize};

use crate::error::TokenError;
use crate::preprocess::{grid_conforms, CleanScore, GridClass, QuantizedNote, Tonality};
use crate::score::{ChordAnnotation, BAR_TICKS};

use super::grammar::Grammar;
use super::token::{TempoClass, Token};
use super::vocab::Vocabulary;

pub const DEFAULT_SOURCE_ID: &str = "generated";

/// Piece metadata that has no token of its own.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceMeta {
    pub source_id: String,
    pub tempo_bpm: f64,
    pub minor: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeMidiSequence {
    pub tokens: Vec<Token>,
    pub is_skeleton: bool,
    pub meta: Option<SequenceMeta>,
}

impl MeMidiSequence {
    pub fn new(tokens: Vec<Token>, is_skeleton: bool) -> Self {
        MeMidiSequence { tokens, is_skeleton, meta: None }
    }

    pub fn ids(&self, vocab: &Vocabulary) -> Result<Vec<u32>, TokenError> {
        self.tokens.iter().map(|t| vocab.id(t).ok_or_else(|| TokenError::VocabViolation(t.to_string()))).collect()
    }

    pub fn from_ids(ids: &[u32], is_skeleton: bool, vocab: &Vocabulary) -> Result<Self, TokenError> {
        let tokens = ids
            .iter()
            .map(|&id| vocab.token(id).ok_or_else(|| TokenError::VocabViolation(format!("token id {id}"))))
            .collect::<Result<_, _>>()?;
        Ok(MeMidiSequence::new(tokens, is_skeleton))
    }

    /// Check the whole sequence against the grammar.
    pub fn validate(&self, vocab: &Vocabulary) -> Result<(), TokenError> {
        let mut grammar = Grammar::new(self.is_skeleton);
        for (index, t) in self.tokens.iter().enumerate() {
            if vocab.id(t).is_none() {
                return Err(TokenError::VocabViolation(format!("{t} at token {index}")));
            }
            grammar.accept(t).map_err(|reason| TokenError::GrammarError { index, reason })?;
        }
        if !grammar.is_done() {
            return Err(TokenError::GrammarError { index: self.tokens.len(), reason: "missing EOS".into() });
        }
        Ok(())
    }

    /// Position/duration pairs that break the mixed-precision grid rules,
    /// as token indices of the offending notes.
    pub fn grid_lints(&self) -> Vec<usize> {
        let mut pos = 0;
        let mut out = Vec::new();
        for (i, t) in self.tokens.iter().enumerate() {
            match *t {
                Token::Pos(p) => pos = p,
                Token::Note { duration, .. } if !grid_conforms(pos, duration) => out.push(i),
                _ => {}
            }
        }
        out
    }
}

fn check(vocab: &Vocabulary, token: Token) -> Result<Token, TokenError> {
    vocab.id(&token).map(|_| token).ok_or_else(|| TokenError::VocabViolation(token.to_string()))
}

/// Encode a clean score; with `skeleton_only` chords are left out.
pub fn tokenize(score: &CleanScore, skeleton_only: bool, vocab: &Vocabulary) -> Result<MeMidiSequence, TokenError> {
    let mut tokens = vec![Token::Tempo(TempoClass::of_bpm(score.tempo_bpm)), Token::Bar];
    let chords: &[ChordAnnotation] = if skeleton_only { &[] } else { &score.chords };
    let (mut ci, mut ni) = (0, 0);
    let mut bar = 0;
    loop {
        let next_chord = chords.get(ci).map(|c| c.onset);
        let next_note = score.notes.get(ni).map(|n| n.onset);
        let Some(onset) = next_chord.into_iter().chain(next_note).min() else { break };
        while onset >= (bar + 1) * BAR_TICKS {
            tokens.push(Token::Bar);
            bar += 1;
        }
        tokens.push(check(vocab, Token::Pos(onset - bar * BAR_TICKS))?);
        if next_chord == Some(onset) {
            tokens.push(Token::Chord(chords[ci].chord));
            ci += 1;
        }
        if next_note == Some(onset) {
            let n = &score.notes[ni];
            tokens.push(check(vocab, Token::Note { pitch: n.pitch, velocity: n.velocity, duration: n.duration })?);
            ni += 1;
        }
    }
    for _ in bar + 1..score.bars {
        tokens.push(Token::Bar);
    }
    tokens.push(Token::Eos);
    Ok(MeMidiSequence {
        tokens,
        is_skeleton: skeleton_only,
        meta: Some(SequenceMeta {
            source_id: score.source_id.clone(),
            tempo_bpm: score.tempo_bpm,
            minor: score.tonality == Tonality::AMinor,
        }),
    })
}

/// Decode a grammar-conforming sequence.
///
/// Metadata absent from the tokens comes from `seq.meta`; without it the
/// piece is C major, identified as [`DEFAULT_SOURCE_ID`], with a tempo typical
/// of its tempo class.
pub fn detokenize(seq: &MeMidiSequence, vocab: &Vocabulary) -> Result<CleanScore, TokenError> {
    seq.validate(vocab)?;
    let mut tempo = TempoClass::Medium;
    let mut bars = 0u32;
    let mut pos = 0u32;
    let mut notes = Vec::new();
    let mut chords = Vec::new();
    for t in &seq.tokens {
        match *t {
            Token::Tempo(c) => tempo = c,
            Token::Bar => bars += 1,
            Token::Pos(p) => pos = (bars - 1) * BAR_TICKS + p,
            Token::Chord(chord) => chords.push(ChordAnnotation { onset: pos, chord }),
            Token::Note { pitch, velocity, duration } => notes.push(QuantizedNote {
                onset: pos,
                duration,
                pitch,
                velocity,
                grid: GridClass::of_duration(duration),
            }),
            Token::Pad | Token::Bos | Token::Eos => {}
        }
    }
    let (source_id, tempo_bpm, tonality) = match &seq.meta {
        Some(m) => (
            m.source_id.clone(),
            if TempoClass::of_bpm(m.tempo_bpm) == tempo { m.tempo_bpm } else { tempo.representative_bpm() },
            if m.minor { Tonality::AMinor } else { Tonality::CMajor },
        ),
        None => (DEFAULT_SOURCE_ID.to_string(), tempo.representative_bpm(), Tonality::CMajor),
    };
    CleanScore::new(source_id, tempo_bpm, tonality, bars, notes, chords)
        .map_err(|e| TokenError::GrammarError { index: seq.tokens.len(), reason: e.to_string() })
}

// ---------------------------------------------------------------------------
// Files

/// One token per line; `#` lines carry the header.
pub fn to_text(seq: &MeMidiSequence) -> String {
    let mut out = String::new();
    out.push_str(&format!("# kind: {}\n", if seq.is_skeleton { "skeleton" } else { "melody" }));
    if let Some(m) = &seq.meta {
        out.push_str(&format!("# meta: {}\n", serde_json::to_string(m).expect("meta serializes")));
    }
    for t in &seq.tokens {
        out.push_str(&t.to_string());
        out.push('\n');
    }
    out
}

pub fn from_text(text: &str) -> Result<MeMidiSequence, TokenError> {
    let mut seq = MeMidiSequence::new(Vec::new(), false);
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
        if let Some(header) = line.strip_prefix('#') {
            let header = header.trim();
            if let Some(kind) = header.strip_prefix("kind:") {
                seq.is_skeleton = match kind.trim() {
                    "skeleton" => true,
                    "melody" => false,
                    other => return Err(TokenError::Format(format!("unknown sequence kind {other:?}"))),
                };
            } else if let Some(meta) = header.strip_prefix("meta:") {
                seq.meta = Some(serde_json::from_str(meta.trim()).map_err(|e| TokenError::Format(e.to_string()))?);
            }
            continue;
        }
        seq.tokens.push(line.parse()?);
    }
    Ok(seq)
}

const MAGIC: &[u8; 4] = b"WYSQ";
const BINARY_VERSION: u16 = 1;

/// Little-endian id file: magic, version, kind, vocabulary hash, metadata
/// JSON and the ids.
pub fn to_binary(seq: &MeMidiSequence, vocab: &Vocabulary) -> Result<Vec<u8>, TokenError> {
    let ids = seq.ids(vocab)?;
    let meta = match &seq.meta {
        Some(m) => serde_json::to_vec(m).expect("meta serializes"),
        None => Vec::new(),
    };
    let mut out = Vec::with_capacity(48 + meta.len() + 4 * ids.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&BINARY_VERSION.to_le_bytes());
    out.push(seq.is_skeleton as u8);
    out.push(0);
    out.extend_from_slice(&vocab.hash());
    out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
    out.extend_from_slice(&meta);
    out.extend_from_slice(&(ids.len() as u32).to_le_bytes());
    for id in ids {
        out.extend_from_slice(&id.to_le_bytes());
    }
    Ok(out)
}

pub fn from_binary(bytes: &[u8], vocab: &Vocabulary) -> Result<MeMidiSequence, TokenError> {
    let fail = |m: &str| TokenError::Format(m.to_string());
    let mut at = 0usize;
    let mut take = |n: usize| -> Result<&[u8], TokenError> {
        let s = bytes.get(at..at + n).ok_or_else(|| fail("truncated file"))?;
        at += n;
        Ok(s)
    };
    if take(4)? != MAGIC {
        return Err(fail("bad magic"));
    }
    let version = u16::from_le_bytes(take(2)?.try_into().unwrap());
    if version != BINARY_VERSION {
        return Err(TokenError::Format(format!("unsupported version {version}")));
    }
    let is_skeleton = take(2)?[0] != 0;
    if take(32)? != vocab.hash() {
        return Err(fail("vocabulary hash mismatch"));
    }
    let meta_len = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
    let meta_bytes = take(meta_len)?;
    let meta = if meta_len == 0 {
        None
    } else {
        Some(serde_json::from_slice(meta_bytes).map_err(|e| TokenError::Format(e.to_string()))?)
    };
    let count = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
    let ids: Vec<u32> = take(4 * count)?.chunks_exact(4).map(|c| u32::from_le_bytes(c.try_into().unwrap())).collect();
    let mut seq = MeMidiSequence::from_ids(&ids, is_skeleton, vocab)?;
    seq.meta = meta;
    Ok(seq)
}
