//! Per-timestep embedding fields and per-head training targets.

use wuyun_core::memidi::vocab::{N_CHORDS, N_DURATIONS, N_PITCHES, N_POSITIONS, N_TEMPI, N_VELOCITIES};
use wuyun_core::memidi::{EventType, Token, Vocabulary};

/// Bar indices above this share the last embedding row.
pub const MAX_BAR_INDEX: u32 = 64;

/// Embedding fields; id 0 of every field means "not set at this step".
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Field {
    Type,
    Tempo,
    Bar,
    Position,
    Pitch,
    Velocity,
    Duration,
    Chord,
}

impl Field {
    pub const ALL: [Field; 8] = [
        Field::Type,
        Field::Tempo,
        Field::Bar,
        Field::Position,
        Field::Pitch,
        Field::Velocity,
        Field::Duration,
        Field::Chord,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Field::Type => "type",
            Field::Tempo => "tempo",
            Field::Bar => "bar",
            Field::Position => "position",
            Field::Pitch => "pitch",
            Field::Velocity => "velocity",
            Field::Duration => "duration",
            Field::Chord => "chord",
        }
    }

    /// Table rows, including the unset row.
    pub fn size(self) -> usize {
        1 + match self {
            Field::Type => 7,
            Field::Tempo => N_TEMPI,
            Field::Bar => MAX_BAR_INDEX as usize,
            Field::Position => N_POSITIONS,
            Field::Pitch => N_PITCHES,
            Field::Velocity => N_VELOCITIES,
            Field::Duration => N_DURATIONS,
            Field::Chord => N_CHORDS,
        }
    }
}

pub type Features = [usize; 8];

/// Running tempo, bar and position context of a token stream.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StreamState {
    tempo: usize,
    bars: u32,
    pos: usize,
}

impl StreamState {
    /// Advance over `token` and return its embedding ids.
    pub fn step(&mut self, token: &Token, vocab: &Vocabulary) -> Features {
        let mut f = [0usize; 8];
        let ty = match token {
            Token::Pad => 0,
            Token::Bos => 1,
            Token::Eos => 2,
            Token::Tempo(c) => {
                self.tempo = 1 + c.index();
                3
            }
            Token::Bar => {
                self.bars += 1;
                self.pos = 0;
                4
            }
            Token::Pos(p) => {
                self.pos = 1 + vocab.position_index(*p).expect("position in vocabulary");
                5
            }
            Token::Chord(c) => {
                f[Field::Chord as usize] = 1 + c.index();
                6
            }
            Token::Note { pitch, velocity, duration } => {
                f[Field::Pitch as usize] = 1 + vocab.pitch_index(*pitch).expect("pitch in vocabulary");
                f[Field::Velocity as usize] = 1 + *velocity as usize;
                f[Field::Duration as usize] = 1 + vocab.duration_index(*duration).expect("duration in vocabulary");
                7
            }
        };
        f[Field::Type as usize] = ty;
        f[Field::Tempo as usize] = self.tempo;
        f[Field::Bar as usize] = self.bars.min(MAX_BAR_INDEX) as usize;
        f[Field::Position as usize] = self.pos;
        f
    }
}

pub fn features(tokens: &[Token], vocab: &Vocabulary) -> Vec<Features> {
    let mut s = StreamState::default();
    tokens.iter().map(|t| s.step(t, vocab)).collect()
}

/// Output heads in a fixed order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Head {
    Type,
    Tempo,
    Position,
    Chord,
    Pitch,
    Velocity,
    Duration,
}

impl Head {
    pub const ALL: [Head; 7] =
        [Head::Type, Head::Tempo, Head::Position, Head::Chord, Head::Pitch, Head::Velocity, Head::Duration];

    pub fn name(self) -> &'static str {
        match self {
            Head::Type => "type",
            Head::Tempo => "tempo",
            Head::Position => "position",
            Head::Chord => "chord",
            Head::Pitch => "pitch",
            Head::Velocity => "velocity",
            Head::Duration => "duration",
        }
    }

    pub fn size(self) -> usize {
        match self {
            Head::Type => EventType::ALL.len(),
            Head::Tempo => N_TEMPI,
            Head::Position => N_POSITIONS,
            Head::Chord => N_CHORDS,
            Head::Pitch => N_PITCHES,
            Head::Velocity => N_VELOCITIES,
            Head::Duration => N_DURATIONS,
        }
    }

    /// Attribute heads activated by an event type.
    pub fn for_type(t: EventType) -> &'static [Head] {
        match t {
            EventType::Tempo => &[Head::Tempo],
            EventType::Pos => &[Head::Position],
            EventType::Chord => &[Head::Chord],
            EventType::Note => &[Head::Pitch, Head::Velocity, Head::Duration],
            EventType::Bar | EventType::Eos => &[],
        }
    }
}

/// Class index per head for one target token; `None` on inactive heads.
pub type Target = [Option<usize>; 7];

pub fn target(token: &Token, vocab: &Vocabulary) -> Option<Target> {
    let ty = EventType::of(token)?;
    let mut t = [None; 7];
    t[Head::Type as usize] = Some(ty.index());
    match token {
        Token::Tempo(c) => t[Head::Tempo as usize] = Some(c.index()),
        Token::Pos(p) => t[Head::Position as usize] = vocab.position_index(*p),
        Token::Chord(c) => t[Head::Chord as usize] = Some(c.index()),
        Token::Note { pitch, velocity, duration } => {
            t[Head::Pitch as usize] = vocab.pitch_index(*pitch);
            t[Head::Velocity as usize] = Some(*velocity as usize);
            t[Head::Duration as usize] = vocab.duration_index(*duration);
        }
        _ => {}
    }
    Some(t)
}

/// Cross-entropy of a uniform predictor summed over the active heads.
pub fn uniform_loss(t: &Target) -> f64 {
    Head::ALL.iter().zip(t).filter(|(_, c)| c.is_some()).map(|(h, _)| (h.size() as f64).ln()).sum()
}
