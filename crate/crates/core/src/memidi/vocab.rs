//! Symbol inventory and the flat token-id layout.

use sha2::{Digest, Sha256};

use crate::preprocess::{is_legal_duration, PITCH_MAX, PITCH_MIN, STRAIGHT_UNIT, TRIPLET_UNIT};
use crate::score::{Chord, BAR_TICKS};

use super::token::{TempoClass, Token};

pub const N_POSITIONS: usize = 96;
pub const N_DURATIONS: usize = 69;
pub const N_PITCHES: usize = (PITCH_MAX - PITCH_MIN + 1) as usize;
pub const N_VELOCITIES: usize = 128;
pub const N_TEMPI: usize = 3;
pub const N_CHORDS: usize = 156;

pub const PAD_ID: u32 = 0;
pub const BOS_ID: u32 = 1;
pub const EOS_ID: u32 = 2;
pub const BAR_ID: u32 = 3;
const TEMPO_BASE: u32 = 4;
const POS_BASE: u32 = TEMPO_BASE + N_TEMPI as u32;
const CHORD_BASE: u32 = POS_BASE + N_POSITIONS as u32;
const NOTE_BASE: u32 = CHORD_BASE + N_CHORDS as u32;
pub const VOCAB_SIZE: u32 = NOTE_BASE + (N_PITCHES * N_VELOCITIES * N_DURATIONS) as u32;

/// Bijective tables from attribute values to dense indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    positions: Vec<u32>,
    durations: Vec<u32>,
    position_index: Vec<Option<u16>>,
    duration_index: Vec<Option<u16>>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        Vocabulary::build()
    }
}

impl Vocabulary {
    pub fn build() -> Vocabulary {
        let positions: Vec<u32> = (0..BAR_TICKS).filter(|t| t % STRAIGHT_UNIT == 0 || t % TRIPLET_UNIT == 0).collect();
        let durations: Vec<u32> = (1..=BAR_TICKS).filter(|&d| is_legal_duration(d)).collect();
        let straight = (0..BAR_TICKS).step_by(STRAIGHT_UNIT as usize).count();
        let triplet = (0..BAR_TICKS).step_by(TRIPLET_UNIT as usize).count();
        let shared = (0..BAR_TICKS).step_by(120).count();
        assert_eq!((straight, triplet, shared), (64, 48, 16));
        assert_eq!(positions.len(), straight + triplet - shared);
        assert_eq!(positions.len(), N_POSITIONS);
        assert_eq!(durations.len(), N_DURATIONS);

        let mut position_index = vec![None; BAR_TICKS as usize];
        for (i, &p) in positions.iter().enumerate() {
            position_index[p as usize] = Some(i as u16);
        }
        let mut duration_index = vec![None; BAR_TICKS as usize + 1];
        for (i, &d) in durations.iter().enumerate() {
            duration_index[d as usize] = Some(i as u16);
        }
        Vocabulary { positions, durations, position_index, duration_index }
    }

    pub fn positions(&self) -> &[u32] {
        &self.positions
    }

    pub fn durations(&self) -> &[u32] {
        &self.durations
    }

    pub fn position_index(&self, tick: u32) -> Option<usize> {
        self.position_index.get(tick as usize).copied().flatten().map(usize::from)
    }

    pub fn duration_index(&self, duration: u32) -> Option<usize> {
        self.duration_index.get(duration as usize).copied().flatten().map(usize::from)
    }

    pub fn pitch_index(&self, pitch: u8) -> Option<usize> {
        (PITCH_MIN..=PITCH_MAX).contains(&pitch).then(|| (pitch - PITCH_MIN) as usize)
    }

    pub fn pitch(&self, index: usize) -> u8 {
        PITCH_MIN + index as u8
    }

    /// Flat id of a token, or `None` when an attribute is out of range.
    pub fn id(&self, token: &Token) -> Option<u32> {
        Some(match *token {
            Token::Pad => PAD_ID,
            Token::Bos => BOS_ID,
            Token::Eos => EOS_ID,
            Token::Bar => BAR_ID,
            Token::Tempo(t) => TEMPO_BASE + t.index() as u32,
            Token::Pos(p) => POS_BASE + self.position_index(p)? as u32,
            Token::Chord(c) => CHORD_BASE + c.index() as u32,
            Token::Note { pitch, velocity, duration } => {
                if velocity as usize >= N_VELOCITIES {
                    return None;
                }
                let p = self.pitch_index(pitch)?;
                let d = self.duration_index(duration)?;
                NOTE_BASE + ((p * N_VELOCITIES + velocity as usize) * N_DURATIONS + d) as u32
            }
        })
    }

    pub fn token(&self, id: u32) -> Option<Token> {
        Some(match id {
            PAD_ID => Token::Pad,
            BOS_ID => Token::Bos,
            EOS_ID => Token::Eos,
            BAR_ID => Token::Bar,
            i if i < POS_BASE => Token::Tempo(TempoClass::ALL[(i - TEMPO_BASE) as usize]),
            i if i < CHORD_BASE => Token::Pos(self.positions[(i - POS_BASE) as usize]),
            i if i < NOTE_BASE => Token::Chord(Chord::from_index((i - CHORD_BASE) as usize)?),
            i if i < VOCAB_SIZE => {
                let rest = (i - NOTE_BASE) as usize;
                let d = rest % N_DURATIONS;
                let v = (rest / N_DURATIONS) % N_VELOCITIES;
                let p = rest / (N_DURATIONS * N_VELOCITIES);
                Token::Note { pitch: self.pitch(p), velocity: v as u8, duration: self.durations[d] }
            }
            _ => return None,
        })
    }

    /// Human-readable inventory; its hash identifies the vocabulary in files.
    pub fn report(&self) -> String {
        let join = |v: &[u32]| v.iter().map(u32::to_string).collect::<Vec<_>>().join(",");
        let chords: Vec<String> = (0..N_CHORDS).map(|i| Chord::from_index(i).unwrap().to_string()).collect();
        let mut out = String::new();
        out.push_str("memidi vocabulary v1\n");
        out.push_str("control: PAD=0 BOS=1 EOS=2 BAR=3\n");
        out.push_str(&format!("tempo ({N_TEMPI}): LOW<90 MEDIUM=90..160 HIGH>160\n"));
        out.push_str(&format!("positions ({}): {}\n", self.positions.len(), join(&self.positions)));
        out.push_str(&format!("chords ({}): {}\n", chords.len(), chords.join(",")));
        out.push_str(&format!("pitches ({N_PITCHES}): {PITCH_MIN}..={PITCH_MAX}\n"));
        out.push_str(&format!("velocities ({N_VELOCITIES}): 0..=127\n"));
        out.push_str(&format!("durations ({}): {}\n", self.durations.len(), join(&self.durations)));
        out.push_str(&format!("flat ids: {VOCAB_SIZE}\n"));
        out
    }

    pub fn hash(&self) -> [u8; 32] {
        Sha256::digest(self.report().as_bytes()).into()
    }

    pub fn hash_hex(&self) -> String {
        hex::encode(self.hash())
    }
}
