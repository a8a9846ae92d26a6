//! Skeleton-constrained melody decoding.
//!
//! A cursor walks the skeleton's note events in order. Sampling is free
//! until the generated (bar, position) would reach or pass the next event,
//! a bar line would skip it, or the model tries to end early; the event is
//! then written verbatim. Free notes are kept short enough to end before
//! the next event starts.

use wuyun_core::memidi::{EventType, Grammar, MeMidiSequence, Phase, Token, Vocabulary};
use wuyun_core::preprocess::grid_conforms;
use wuyun_core::score::{Chord, ChordAnnotation, BAR_TICKS, BEAT_TICKS};

use crate::error::NeuroError;
use crate::model::{Encoded, Logits, Memory, Model, Role};
use crate::sample::{Sampler, StepMasks};

/// Where chords in the output come from.
#[derive(Debug, Clone, PartialEq)]
pub enum ChordMode {
    Sample,
    /// Written at their reference onsets.
    Copy(Vec<ChordAnnotation>),
    Omit,
}

/// A note of a sequence with its 0-based bar and in-bar position.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NoteEvent {
    pub bar: u32,
    pub pos: u32,
    pub token: Token,
}

impl NoteEvent {
    pub fn onset(&self) -> u32 {
        self.bar * BAR_TICKS + self.pos
    }
}

/// Note events in sequence order.
pub fn note_events(tokens: &[Token]) -> Vec<NoteEvent> {
    let (mut bars, mut pos) = (0u32, 0u32);
    let mut out = Vec::new();
    for t in tokens {
        match t {
            Token::Bar => bars += 1,
            Token::Pos(p) => pos = *p,
            Token::Note { .. } => out.push(NoteEvent { bar: bars.saturating_sub(1), pos, token: *t }),
            _ => {}
        }
    }
    out
}

fn bar_count(tokens: &[Token]) -> u32 {
    tokens.iter().filter(|t| matches!(t, Token::Bar)).count() as u32
}

#[derive(Debug, Clone, PartialEq)]
struct Forced {
    bar: u32,
    pos: u32,
    chord: Option<Chord>,
    note: Option<Token>,
}

impl Forced {
    fn onset(&self) -> u32 {
        self.bar * BAR_TICKS + self.pos
    }
}

struct Decoder<'a> {
    model: &'a Model<f32>,
    vocab: &'a Vocabulary,
    enc: Encoded<f32>,
    grammar: Grammar,
    memory: Memory<f32>,
    logits: Logits<f32>,
    out: Vec<Token>,
}

impl Decoder<'_> {
    fn push(&mut self, tok: Token, forced: bool) -> Result<(), NeuroError> {
        let r = if forced { self.grammar.force(&tok) } else { self.grammar.accept(&tok) };
        r.map_err(|e| NeuroError::GrammarDeadlock(format!("{tok}: {e}")))?;
        self.out.push(tok);
        if !self.grammar.is_done() {
            let (l, m) = self.model.forward_decoder(&self.enc, &[tok], &self.memory, self.vocab)?;
            self.logits = l;
            self.memory = m;
        }
        Ok(())
    }

    fn bar_start(&self) -> u32 {
        self.grammar.bars().saturating_sub(1) * BAR_TICKS
    }

    fn row(&self) -> usize {
        self.logits.rows() - 1
    }
}

/// Generate a melody containing every note of `skeleton`, starting from
/// `prompt` (melody tokens without BOS, normally the first bars of a piece).
pub fn inpaint(
    model: &Model<f32>,
    skeleton: &MeMidiSequence,
    prompt: &[Token],
    chords: &ChordMode,
    sampler: &mut Sampler,
    vocab: &Vocabulary,
) -> Result<MeMidiSequence, NeuroError> {
    if model.config.role != Role::InpaintSeq2seq {
        return Err(NeuroError::WrongRole {
            expected: Role::InpaintSeq2seq.name().into(),
            found: model.config.role.name().into(),
        });
    }
    let max_bars = sampler.config.max_bars;
    let needed = bar_count(&skeleton.tokens);
    if needed > max_bars {
        return Err(NeuroError::SkeletonOverflow { needed, max_bars });
    }
    let tempo = skeleton.tokens.iter().find(|t| matches!(t, Token::Tempo(_))).copied();
    let mut events: Vec<Forced> = note_events(&skeleton.tokens)
        .into_iter()
        .map(|e| Forced { bar: e.bar, pos: e.pos, chord: None, note: Some(e.token) })
        .collect();
    if let ChordMode::Copy(list) = chords {
        for c in list.iter().filter(|c| c.onset < max_bars * BAR_TICKS && c.onset % BEAT_TICKS == 0) {
            let (bar, pos) = (c.onset / BAR_TICKS, c.onset % BAR_TICKS);
            match events.iter_mut().find(|e| e.bar == bar && e.pos == pos) {
                Some(e) => e.chord = Some(c.chord),
                None => events.push(Forced { bar, pos, chord: Some(c.chord), note: None }),
            }
        }
        events.sort_by_key(Forced::onset);
    }

    let mut grammar = Grammar::strict(false, max_bars);
    grammar.accept(&Token::Bos).expect("BOS opens a sequence");
    for (i, t) in prompt.iter().enumerate() {
        grammar.force(t).map_err(|e| NeuroError::PromptConflict(format!("token {i}: {e}")))?;
    }
    let prompt_bars = grammar.bars();
    let prompt_notes = note_events(prompt);
    let mut cursor = 0;
    while cursor < events.len() && events[cursor].bar < prompt_bars {
        let e = &events[cursor];
        if let Some(n) = e.note {
            if !prompt_notes.iter().any(|p| p.bar == e.bar && p.pos == e.pos && p.token == n) {
                return Err(NeuroError::PromptConflict(format!(
                    "skeleton note {n} at bar {} position {} missing from the prompt",
                    e.bar, e.pos
                )));
            }
        }
        cursor += 1;
    }
    if let Some(e) = events.get(cursor) {
        if grammar.note_end() > e.onset() && e.note.is_some() {
            return Err(NeuroError::PromptConflict(format!(
                "prompt note overlaps the skeleton note at tick {}",
                e.onset()
            )));
        }
    }

    let enc = model.encode(&skeleton.tokens, vocab)?;
    let mut input = vec![Token::Bos];
    input.extend_from_slice(prompt);
    let mut memory = Memory::empty(&model.config);
    let mut logits = None;
    for chunk in input.chunks(model.config.context_len) {
        let (l, m) = model.forward_decoder(&enc, chunk, &memory, vocab)?;
        memory = m;
        logits = Some(l);
    }
    let mut d =
        Decoder { model, vocab, enc, grammar, memory, logits: logits.expect("input holds BOS"), out: prompt.to_vec() };
    let sample_chords = matches!(chords, ChordMode::Sample);

    while !d.grammar.is_done() {
        let pending = events.get(cursor).cloned();
        let mut masks = StepMasks::from_grammar(&d.grammar, vocab);
        if !sample_chords {
            masks.types[EventType::Chord.index()] = false;
        }
        keep_playable(&mut masks, &d, sample_chords, vocab);
        if let Some(e) = &pending {
            restrict(&mut masks, &d, e.onset(), sample_chords, vocab);
        }
        let row = d.row();
        let ty = sampler.choose_type(&d.logits, row, &masks.types)?;
        if ty == EventType::Tempo {
            match tempo {
                Some(t) => d.push(t, true)?,
                None => {
                    let t = sampler.complete(ty, &d.logits, row, &masks, vocab)?;
                    d.push(t, false)?;
                }
            }
            continue;
        }
        let Some(e) = pending else {
            let t = sampler.complete(ty, &d.logits, row, &masks, vocab)?;
            d.push(t, false)?;
            continue;
        };
        let force = match ty {
            EventType::Eos => true,
            EventType::Bar => d.grammar.bars() == e.bar + 1,
            EventType::Pos => {
                let t = sampler.complete(ty, &d.logits, row, &masks, vocab)?;
                let Token::Pos(p) = t else { unreachable!("position head yields a position") };
                if d.bar_start() + p >= e.onset() {
                    true
                } else {
                    d.push(t, false)?;
                    continue;
                }
            }
            _ => false,
        };
        if !force {
            let t = sampler.complete(ty, &d.logits, row, &masks, vocab)?;
            d.push(t, false)?;
            continue;
        }
        while d.grammar.bars() < e.bar + 1 {
            d.push(Token::Bar, true)?;
        }
        d.push(Token::Pos(e.pos), true)?;
        match e.chord {
            Some(c) => d.push(Token::Chord(c), true)?,
            None if sample_chords && e.note.is_some() && e.pos % BEAT_TICKS == 0 => {
                let mut types = [false; 6];
                types[EventType::Chord.index()] = true;
                types[EventType::Note.index()] = true;
                let row = d.row();
                if sampler.choose_type(&d.logits, row, &types)? == EventType::Chord {
                    let m = StepMasks::from_grammar(&d.grammar, vocab);
                    let c = sampler.complete(EventType::Chord, &d.logits, row, &m, vocab)?;
                    d.push(c, false)?;
                }
            }
            None => {}
        }
        if let Some(n) = e.note {
            d.push(n, true)?;
        }
        cursor += 1;
    }
    let mut seq = MeMidiSequence::new(d.out, false);
    seq.meta = skeleton.meta.clone();
    Ok(seq)
}

/// Drop positions under a sounding note that could not take a chord.
fn keep_playable(masks: &mut StepMasks, d: &Decoder, sample_chords: bool, vocab: &Vocabulary) {
    let (bar_start, end) = (d.bar_start(), d.grammar.note_end());
    for (i, &p) in vocab.positions().iter().enumerate() {
        if masks.positions[i] && bar_start + p < end && !(sample_chords && p % BEAT_TICKS == 0) {
            masks.positions[i] = false;
        }
    }
    if !masks.positions.iter().any(|&a| a) {
        masks.types[EventType::Pos.index()] = false;
    }
}

/// Narrow the grammar masks so free events stay clear of the skeleton event at `next`.
fn restrict(masks: &mut StepMasks, d: &Decoder, next: u32, sample_chords: bool, vocab: &Vocabulary) {
    let g = &d.grammar;
    let bar_start = d.bar_start();
    let fits = |onset: u32, pos: u32, dur: u32| onset + dur <= next && grid_conforms(pos, dur);
    for (i, &p) in vocab.positions().iter().enumerate() {
        if !masks.positions[i] {
            continue;
        }
        let onset = bar_start + p;
        if onset >= next {
            continue;
        }
        let chord_ok = sample_chords && p % BEAT_TICKS == 0;
        let note_ok = onset >= g.note_end() && vocab.durations().iter().any(|&dur| fits(onset, p, dur));
        masks.positions[i] = chord_ok || note_ok;
    }
    if !masks.positions.iter().any(|&a| a) {
        masks.types[EventType::Pos.index()] = false;
    }
    if matches!(g.phase(), Phase::AfterPos | Phase::AfterChord) {
        let p = g.last_pos().unwrap_or(0);
        let onset = bar_start + p;
        for (i, &dur) in vocab.durations().iter().enumerate() {
            masks.durations[i] = masks.durations[i] && fits(onset, p, dur);
        }
        if !masks.durations.iter().any(|&a| a) {
            masks.types[EventType::Note.index()] = false;
        }
    }
}
