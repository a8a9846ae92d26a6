use std::fmt;
use std::str::FromStr;

use crate::error::TokenError;
use crate::score::Chord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TempoClass {
    Low,
    Medium,
    High,
}

impl TempoClass {
    pub const ALL: [TempoClass; 3] = [TempoClass::Low, TempoClass::Medium, TempoClass::High];

    pub fn of_bpm(bpm: f64) -> TempoClass {
        if bpm < 90.0 {
            TempoClass::Low
        } else if bpm <= 160.0 {
            TempoClass::Medium
        } else {
            TempoClass::High
        }
    }

    /// Tempo assumed when only the class is known.
    pub fn representative_bpm(self) -> f64 {
        match self {
            TempoClass::Low => 80.0,
            TempoClass::Medium => 120.0,
            TempoClass::High => 180.0,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    fn name(self) -> &'static str {
        match self {
            TempoClass::Low => "LOW",
            TempoClass::Medium => "MEDIUM",
            TempoClass::High => "HIGH",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Token {
    Pad,
    Bos,
    Eos,
    Tempo(TempoClass),
    Bar,
    /// Tick offset within the bar.
    Pos(u32),
    Chord(Chord),
    Note {
        pitch: u8,
        velocity: u8,
        duration: u32,
    },
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Token::Pad => f.write_str("PAD"),
            Token::Bos => f.write_str("BOS"),
            Token::Eos => f.write_str("EOS"),
            Token::Bar => f.write_str("BAR"),
            Token::Tempo(t) => write!(f, "TEMPO_{}", t.name()),
            Token::Pos(p) => write!(f, "POS_{p}"),
            Token::Chord(c) => write!(f, "CHORD_{c}"),
            Token::Note { pitch, velocity, duration } => write!(f, "NOTE_{pitch}_{velocity}_{duration}"),
        }
    }
}

impl FromStr for Token {
    type Err = TokenError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || TokenError::Parse(s.to_string());
        let s = s.trim();
        Ok(match s {
            "PAD" => Token::Pad,
            "BOS" => Token::Bos,
            "EOS" => Token::Eos,
            "BAR" => Token::Bar,
            "TEMPO_LOW" => Token::Tempo(TempoClass::Low),
            "TEMPO_MEDIUM" => Token::Tempo(TempoClass::Medium),
            "TEMPO_HIGH" => Token::Tempo(TempoClass::High),
            _ => {
                if let Some(p) = s.strip_prefix("POS_") {
                    Token::Pos(p.parse().map_err(|_| bad())?)
                } else if let Some(c) = s.strip_prefix("CHORD_") {
                    Token::Chord(c.parse().map_err(|_| bad())?)
                } else if let Some(n) = s.strip_prefix("NOTE_") {
                    let parts: Vec<&str> = n.split('_').collect();
                    let [p, v, d] = parts[..] else { return Err(bad()) };
                    Token::Note {
                        pitch: p.parse().map_err(|_| bad())?,
                        velocity: v.parse().map_err(|_| bad())?,
                        duration: d.parse().map_err(|_| bad())?,
                    }
                } else {
                    return Err(bad());
                }
            }
        })
    }
}
