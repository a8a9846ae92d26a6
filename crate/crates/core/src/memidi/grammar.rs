//! Incremental sequence grammar, shared by the decoder and by constrained
//! sampling.
//!
//! ```text
//! [BOS] TEMPO (BAR (POS (CHORD NOTE? | NOTE))*)* EOS PAD*
//! ```
//!
//! Chords only sit on beat positions and never appear in skeleton sequences.
//! Positions strictly increase within a bar and a note may not start before
//! the previous one ends. Strict mode, used while sampling, also requires
//! grid-conforming note durations, refuses a position that can hold neither
//! a chord nor a note, and caps the number of bars.

use crate::preprocess::grid_conforms;
use crate::score::{BAR_TICKS, BEAT_TICKS};

use super::token::Token;
use super::vocab::Vocabulary;

/// Event classes predicted by a model's type head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EventType {
    Tempo,
    Bar,
    Pos,
    Chord,
    Note,
    Eos,
}

impl EventType {
    pub const ALL: [EventType; 6] =
        [EventType::Tempo, EventType::Bar, EventType::Pos, EventType::Chord, EventType::Note, EventType::Eos];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn of(token: &Token) -> Option<EventType> {
        match token {
            Token::Tempo(_) => Some(EventType::Tempo),
            Token::Bar => Some(EventType::Bar),
            Token::Pos(_) => Some(EventType::Pos),
            Token::Chord(_) => Some(EventType::Chord),
            Token::Note { .. } => Some(EventType::Note),
            Token::Eos => Some(EventType::Eos),
            Token::Pad | Token::Bos => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Start,
    AfterBos,
    AfterTempo,
    InBar,
    AfterPos,
    AfterChord,
    Done,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grammar {
    skeleton: bool,
    strict: bool,
    max_bars: Option<u32>,
    phase: Phase,
    bars: u32,
    last_pos: Option<u32>,
    note_end: u32,
}

impl Grammar {
    pub fn new(skeleton: bool) -> Grammar {
        Grammar { skeleton, strict: false, max_bars: None, phase: Phase::Start, bars: 0, last_pos: None, note_end: 0 }
    }

    pub fn strict(skeleton: bool, max_bars: u32) -> Grammar {
        Grammar { strict: true, max_bars: Some(max_bars), ..Grammar::new(skeleton) }
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn is_skeleton(&self) -> bool {
        self.skeleton
    }

    /// Bars opened so far.
    pub fn bars(&self) -> u32 {
        self.bars
    }

    /// Position of the open position group, or the last one in this bar.
    pub fn last_pos(&self) -> Option<u32> {
        self.last_pos
    }

    /// Absolute tick at which the last note ended.
    pub fn note_end(&self) -> u32 {
        self.note_end
    }

    pub fn is_done(&self) -> bool {
        self.phase == Phase::Done
    }

    fn bar_start(&self) -> u32 {
        self.bars.saturating_sub(1) * BAR_TICKS
    }

    fn absolute(&self, pos: u32) -> u32 {
        self.bar_start() + pos
    }

    fn bar_allowed(&self) -> bool {
        self.max_bars.is_none_or(|m| self.bars < m)
    }

    fn chord_allowed_at(&self, pos: u32) -> bool {
        !self.skeleton && pos.is_multiple_of(BEAT_TICKS)
    }

    fn note_allowed_at(&self, pos: u32) -> bool {
        self.absolute(pos) >= self.note_end
    }

    pub fn position_allowed(&self, pos: u32) -> bool {
        if !matches!(self.phase, Phase::InBar | Phase::AfterChord) || pos >= BAR_TICKS {
            return false;
        }
        if self.last_pos.is_some_and(|l| pos <= l) {
            return false;
        }
        !self.strict || self.chord_allowed_at(pos) || self.note_allowed_at(pos)
    }

    pub fn duration_allowed(&self, duration: u32) -> bool {
        let pos = self.last_pos.unwrap_or(0);
        !self.strict || grid_conforms(pos, duration)
    }

    /// Event types that can come next.
    pub fn allowed_types(&self, vocab: &Vocabulary) -> [bool; 6] {
        let mut out = [false; 6];
        let mut set = |t: EventType| out[t.index()] = true;
        match self.phase {
            Phase::Start | Phase::AfterBos => set(EventType::Tempo),
            Phase::AfterTempo => {
                if self.bar_allowed() {
                    set(EventType::Bar);
                }
                set(EventType::Eos);
            }
            Phase::InBar | Phase::AfterChord => {
                if self.phase == Phase::AfterChord && self.note_allowed_at(self.last_pos.unwrap_or(0)) {
                    set(EventType::Note);
                }
                if self.bar_allowed() {
                    set(EventType::Bar);
                }
                if vocab.positions().iter().any(|&p| self.position_allowed(p)) {
                    set(EventType::Pos);
                }
                set(EventType::Eos);
            }
            Phase::AfterPos => {
                let pos = self.last_pos.unwrap_or(0);
                if self.chord_allowed_at(pos) {
                    set(EventType::Chord);
                }
                if self.note_allowed_at(pos) {
                    set(EventType::Note);
                }
            }
            Phase::Done => {}
        }
        out
    }

    pub fn allowed_positions(&self, vocab: &Vocabulary) -> Vec<bool> {
        vocab.positions().iter().map(|&p| self.position_allowed(p)).collect()
    }

    pub fn allowed_durations(&self, vocab: &Vocabulary) -> Vec<bool> {
        vocab.durations().iter().map(|&d| self.duration_allowed(d)).collect()
    }

    /// Like [`Grammar::accept`] but without the strict-mode grid and
    /// position checks, for tokens copied from an existing sequence.
    pub fn force(&mut self, token: &Token) -> Result<(), String> {
        let strict = self.strict;
        self.strict = false;
        let r = self.accept(token);
        self.strict = strict;
        r
    }

    /// Advance by one token or explain why it is not allowed here.
    pub fn accept(&mut self, token: &Token) -> Result<(), String> {
        let unexpected = |phase: Phase| Err(format!("{token} not allowed in state {phase:?}"));
        match (self.phase, token) {
            (Phase::Done, Token::Pad) => {}
            (Phase::Done, _) => return unexpected(self.phase),
            (Phase::Start, Token::Bos) => self.phase = Phase::AfterBos,
            (Phase::Start | Phase::AfterBos, Token::Tempo(_)) => self.phase = Phase::AfterTempo,
            (Phase::AfterTempo | Phase::InBar | Phase::AfterChord, Token::Bar) => {
                if !self.bar_allowed() {
                    return Err(format!("bar limit {} reached", self.max_bars.unwrap_or(0)));
                }
                self.bars += 1;
                self.last_pos = None;
                self.phase = Phase::InBar;
            }
            (Phase::AfterTempo | Phase::InBar | Phase::AfterChord, Token::Eos) => self.phase = Phase::Done,
            (Phase::InBar | Phase::AfterChord, Token::Pos(p)) => {
                if !self.position_allowed(*p) {
                    return Err(format!("position {p} not allowed after {:?}", self.last_pos));
                }
                self.last_pos = Some(*p);
                self.phase = Phase::AfterPos;
            }
            (Phase::AfterPos, Token::Chord(_)) => {
                let pos = self.last_pos.unwrap_or(0);
                if self.skeleton {
                    return Err("chords are not allowed in a skeleton sequence".into());
                }
                if !self.chord_allowed_at(pos) {
                    return Err(format!("chord at position {pos} is off the beat"));
                }
                self.phase = Phase::AfterChord;
            }
            (Phase::AfterPos | Phase::AfterChord, Token::Note { duration, .. }) => {
                let pos = self.last_pos.unwrap_or(0);
                let onset = self.absolute(pos);
                if onset < self.note_end {
                    return Err(format!("note at tick {onset} overlaps a note ending at {}", self.note_end));
                }
                if !self.duration_allowed(*duration) {
                    return Err(format!("duration {duration} does not fit position {pos}"));
                }
                self.note_end = onset + duration;
                self.phase = Phase::InBar;
            }
            (phase, _) => return unexpected(phase),
        }
        Ok(())
    }
}
