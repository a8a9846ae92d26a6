//! Canonical tick-based melody representation.
//!
//! Every score inside the pipeline uses a fixed resolution of
//! [`TICKS_PER_QUARTER`] ticks per quarter note, so one 4/4 bar is
//! [`BAR_TICKS`] ticks long.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::ScoreError;

pub const TICKS_PER_QUARTER: u32 = 480;
pub const BEAT_TICKS: u32 = TICKS_PER_QUARTER;
pub const BAR_TICKS: u32 = 4 * TICKS_PER_QUARTER;

/// A single melody note. Times are in ticks at 480 per quarter note.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Note {
    pub onset: u32,
    pub duration: u32,
    pub pitch: u8,
    pub velocity: u8,
}

impl Note {
    pub fn new(onset: u32, duration: u32, pitch: u8, velocity: u8) -> Self {
        Note { onset, duration, pitch, velocity }
    }

    pub fn offset(&self) -> u32 {
        self.onset + self.duration
    }
}

/// The twelve chord roots, spelled as in the chord dictionary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PitchClass {
    C,
    Db,
    D,
    Eb,
    E,
    F,
    Fs,
    G,
    Ab,
    A,
    Bb,
    B,
}

impl PitchClass {
    pub const ALL: [PitchClass; 12] = [
        PitchClass::C,
        PitchClass::Db,
        PitchClass::D,
        PitchClass::Eb,
        PitchClass::E,
        PitchClass::F,
        PitchClass::Fs,
        PitchClass::G,
        PitchClass::Ab,
        PitchClass::A,
        PitchClass::Bb,
        PitchClass::B,
    ];

    pub fn from_index(index: u8) -> PitchClass {
        Self::ALL[(index % 12) as usize]
    }

    pub fn of_pitch(pitch: u8) -> PitchClass {
        Self::from_index(pitch % 12)
    }

    pub fn index(self) -> u8 {
        self as u8
    }

    /// Shift by a signed number of semitones, wrapping around the octave.
    pub fn transpose(self, semitones: i32) -> PitchClass {
        Self::from_index((self.index() as i32 + semitones).rem_euclid(12) as u8)
    }

    pub fn name(self) -> &'static str {
        match self {
            PitchClass::C => "C",
            PitchClass::Db => "Db",
            PitchClass::D => "D",
            PitchClass::Eb => "Eb",
            PitchClass::E => "E",
            PitchClass::F => "F",
            PitchClass::Fs => "F#",
            PitchClass::G => "G",
            PitchClass::Ab => "Ab",
            PitchClass::A => "A",
            PitchClass::Bb => "Bb",
            PitchClass::B => "B",
        }
    }
}

impl fmt::Display for PitchClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PitchClass {
    type Err = ScoreError;

    /// Accepts the dictionary spelling plus common enharmonic aliases.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let pc = match s {
            "C" | "B#" => PitchClass::C,
            "Db" | "C#" => PitchClass::Db,
            "D" => PitchClass::D,
            "Eb" | "D#" => PitchClass::Eb,
            "E" | "Fb" => PitchClass::E,
            "F" | "E#" => PitchClass::F,
            "F#" | "Gb" => PitchClass::Fs,
            "G" => PitchClass::G,
            "Ab" | "G#" => PitchClass::Ab,
            "A" => PitchClass::A,
            "Bb" | "A#" => PitchClass::Bb,
            "B" | "Cb" => PitchClass::B,
            _ => return Err(ScoreError::InvalidField(format!("unknown pitch class {s:?}"))),
        };
        Ok(pc)
    }
}

/// The thirteen chord qualities of the chord dictionary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ChordQuality {
    Major,
    Minor,
    Diminished,
    Augmented,
    MajorSeventh,
    DominantSeventh,
    MinorMajorSeventh,
    MinorSeventh,
    DiminishedSeventh,
    HalfDiminishedSeventh,
    AugmentedSeventh,
    AugmentedMajorSeventh,
    Suspended,
}

impl ChordQuality {
    pub const ALL: [ChordQuality; 13] = [
        ChordQuality::Major,
        ChordQuality::Minor,
        ChordQuality::Diminished,
        ChordQuality::Augmented,
        ChordQuality::MajorSeventh,
        ChordQuality::DominantSeventh,
        ChordQuality::MinorMajorSeventh,
        ChordQuality::MinorSeventh,
        ChordQuality::DiminishedSeventh,
        ChordQuality::HalfDiminishedSeventh,
        ChordQuality::AugmentedSeventh,
        ChordQuality::AugmentedMajorSeventh,
        ChordQuality::Suspended,
    ];

    pub fn symbol(self) -> &'static str {
        match self {
            ChordQuality::Major => "M",
            ChordQuality::Minor => "m",
            ChordQuality::Diminished => "o",
            ChordQuality::Augmented => "+",
            ChordQuality::MajorSeventh => "MM7",
            ChordQuality::DominantSeventh => "Mm7",
            ChordQuality::MinorMajorSeventh => "mM7",
            ChordQuality::MinorSeventh => "mm7",
            ChordQuality::DiminishedSeventh => "o7",
            ChordQuality::HalfDiminishedSeventh => "%7",
            ChordQuality::AugmentedSeventh => "+7",
            ChordQuality::AugmentedMajorSeventh => "+M7",
            ChordQuality::Suspended => "Sus",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl FromStr for ChordQuality {
    type Err = ScoreError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ChordQuality::ALL
            .into_iter()
            .find(|q| q.symbol() == s)
            .ok_or_else(|| ScoreError::InvalidField(format!("unknown chord quality {s:?}")))
    }
}

/// A chord symbol such as `C_Mm7`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Chord {
    pub root: PitchClass,
    pub quality: ChordQuality,
}

impl Chord {
    pub fn new(root: PitchClass, quality: ChordQuality) -> Self {
        Chord { root, quality }
    }

    /// Dense index in `0..156`, root-major.
    pub fn index(self) -> usize {
        self.root.index() as usize * ChordQuality::ALL.len() + self.quality.index()
    }

    pub fn from_index(index: usize) -> Option<Chord> {
        if index >= 12 * ChordQuality::ALL.len() {
            return None;
        }
        Some(Chord {
            root: PitchClass::from_index((index / ChordQuality::ALL.len()) as u8),
            quality: ChordQuality::ALL[index % ChordQuality::ALL.len()],
        })
    }

    pub fn transpose(self, semitones: i32) -> Chord {
        Chord { root: self.root.transpose(semitones), quality: self.quality }
    }
}

impl fmt::Display for Chord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}_{}", self.root, self.quality.symbol())
    }
}

impl FromStr for Chord {
    type Err = ScoreError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (root, quality) =
            s.split_once('_').ok_or_else(|| ScoreError::InvalidField(format!("chord {s:?} is not ROOT_QUALITY")))?;
        Ok(Chord { root: root.parse()?, quality: quality.parse()? })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ChordAnnotation {
    pub onset: u32,
    pub chord: Chord,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    Major,
    Minor,
}

/// A global key: tonic plus mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Key {
    pub tonic: PitchClass,
    pub mode: Mode,
}

impl Key {
    pub const C_MAJOR: Key = Key { tonic: PitchClass::C, mode: Mode::Major };
    pub const A_MINOR: Key = Key { tonic: PitchClass::A, mode: Mode::Minor };

    pub fn major(tonic: PitchClass) -> Key {
        Key { tonic, mode: Mode::Major }
    }

    pub fn minor(tonic: PitchClass) -> Key {
        Key { tonic, mode: Mode::Minor }
    }

    /// Position on the circle of fifths of the key signature, in `-5..=6`.
    pub fn fifths(self) -> i32 {
        let major_tonic = match self.mode {
            Mode::Major => self.tonic,
            Mode::Minor => self.tonic.transpose(3),
        };
        let k = (major_tonic.index() as i32 * 7).rem_euclid(12);
        if k > 6 {
            k - 12
        } else {
            k
        }
    }

    pub fn from_fifths(fifths: i32, mode: Mode) -> Key {
        let major_tonic = PitchClass::from_index((fifths * 7).rem_euclid(12) as u8);
        match mode {
            Mode::Major => Key::major(major_tonic),
            Mode::Minor => Key::minor(major_tonic.transpose(-3)),
        }
    }
}

impl fmt::Display for Key {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mode = match self.mode {
            Mode::Major => "major",
            Mode::Minor => "minor",
        };
        write!(f, "{} {}", self.tonic, mode)
    }
}

impl FromStr for Key {
    type Err = ScoreError;

    /// Accepts `"D major"`, `"B minor"`, `"Bm"` and bare tonics such as `"Eb"`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if let Some((tonic, mode)) = s.split_once(' ') {
            let mode = match mode.trim().to_ascii_lowercase().as_str() {
                "major" | "maj" => Mode::Major,
                "minor" | "min" => Mode::Minor,
                other => return Err(ScoreError::InvalidField(format!("unknown mode {other:?}"))),
            };
            return Ok(Key { tonic: tonic.parse()?, mode });
        }
        if let Some(tonic) = s.strip_suffix('m') {
            return Ok(Key::minor(tonic.parse()?));
        }
        Ok(Key::major(s.parse()?))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TimeSignature {
    pub numerator: u8,
    pub denominator: u8,
}

impl TimeSignature {
    pub const COMMON: TimeSignature = TimeSignature { numerator: 4, denominator: 4 };

    pub fn new(numerator: u8, denominator: u8) -> Self {
        TimeSignature { numerator, denominator }
    }

    /// Bar length in ticks: `numerator * (4 / denominator) * 480`.
    pub fn bar_ticks(self) -> u32 {
        self.numerator as u32 * 4 * TICKS_PER_QUARTER / self.denominator as u32
    }

    pub fn is_common(self) -> bool {
        self == Self::COMMON
    }
}

/// A time-signature change taking effect at `tick` (> 0).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MeterChange {
    pub tick: u32,
    pub time_signature: TimeSignature,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Score {
    pub ticks_per_quarter: u32,
    /// Meter in effect at tick 0.
    pub time_signature: TimeSignature,
    pub meter_changes: Vec<MeterChange>,
    pub tempo_bpm: f64,
    /// `None` when the source carried no key signature.
    pub key: Option<Key>,
    pub notes: Vec<Note>,
    pub chords: Vec<ChordAnnotation>,
    /// Length of the piece; never before the last note offset.
    pub end_tick: u32,
    pub source_id: String,
}

impl Score {
    /// An empty 4/4 score at 120 bpm.
    pub fn new(source_id: impl Into<String>) -> Self {
        Score {
            ticks_per_quarter: TICKS_PER_QUARTER,
            time_signature: TimeSignature::COMMON,
            meter_changes: Vec::new(),
            tempo_bpm: 120.0,
            key: None,
            notes: Vec::new(),
            chords: Vec::new(),
            end_tick: 0,
            source_id: source_id.into(),
        }
    }

    pub fn last_offset(&self) -> u32 {
        self.notes.iter().map(Note::offset).max().unwrap_or(0)
    }

    /// Meter regions as `(start, end, time signature)`, covering `0..end_tick`.
    pub fn meter_regions(&self) -> Vec<(u32, u32, TimeSignature)> {
        let mut starts = vec![(0, self.time_signature)];
        starts.extend(self.meter_changes.iter().map(|m| (m.tick, m.time_signature)));
        let mut regions = Vec::with_capacity(starts.len());
        for (i, &(start, ts)) in starts.iter().enumerate() {
            let end = starts.get(i + 1).map(|s| s.0).unwrap_or(self.end_tick).max(start);
            regions.push((start, end, ts));
        }
        regions
    }

    /// Check every structural invariant of the type.
    pub fn validate(&self) -> Result<(), ScoreError> {
        if self.ticks_per_quarter != TICKS_PER_QUARTER {
            return Err(ScoreError::InvalidField(format!(
                "ticks_per_quarter must be {TICKS_PER_QUARTER}, got {}",
                self.ticks_per_quarter
            )));
        }
        if !(self.tempo_bpm.is_finite() && self.tempo_bpm > 0.0) {
            return Err(ScoreError::InvalidField(format!("tempo_bpm {} is not positive", self.tempo_bpm)));
        }
        check_time_signature(self.time_signature)?;
        let mut last_tick = 0;
        for m in &self.meter_changes {
            check_time_signature(m.time_signature)?;
            if m.tick <= last_tick {
                return Err(ScoreError::InvalidField(format!(
                    "meter change ticks must be positive and increasing (tick {})",
                    m.tick
                )));
            }
            last_tick = m.tick;
        }
        validate_notes(&self.notes)?;
        for (i, w) in self.chords.windows(2).enumerate() {
            if w[0].onset >= w[1].onset {
                return Err(ScoreError::InvalidField(format!(
                    "chords[{}] onset {} does not increase",
                    i + 1,
                    w[1].onset
                )));
            }
        }
        if self.last_offset() > self.end_tick {
            return Err(ScoreError::InvalidField(format!(
                "end_tick {} precedes last note offset {}",
                self.end_tick,
                self.last_offset()
            )));
        }
        Ok(())
    }
}

fn check_time_signature(ts: TimeSignature) -> Result<(), ScoreError> {
    if ts.numerator == 0 || ts.denominator == 0 || !ts.denominator.is_power_of_two() {
        return Err(ScoreError::InvalidField(format!(
            "time signature {}/{} is not representable",
            ts.numerator, ts.denominator
        )));
    }
    Ok(())
}

/// Range and monophony checks shared by every note sequence.
pub fn validate_notes(notes: &[Note]) -> Result<(), ScoreError> {
    for (i, n) in notes.iter().enumerate() {
        if n.duration == 0 {
            return Err(ScoreError::InvalidField(format!("notes[{i}].duration must be > 0")));
        }
        if n.pitch > 127 {
            return Err(ScoreError::InvalidField(format!("notes[{i}].pitch {} > 127", n.pitch)));
        }
        if n.velocity > 127 {
            return Err(ScoreError::InvalidField(format!("notes[{i}].velocity {} > 127", n.velocity)));
        }
    }
    for (i, w) in notes.windows(2).enumerate() {
        if w[0].offset() > w[1].onset {
            return Err(ScoreError::InvalidField(format!(
                "notes[{i}] overlaps notes[{}] (offset {} > onset {})",
                i + 1,
                w[0].offset(),
                w[1].onset
            )));
        }
    }
    Ok(())
}

/// Sort by onset and clip each note at the next onset so the line is monophonic.
///
/// Notes sharing an onset are ordered by pitch, so the highest one survives.
/// Notes clipped to zero length are removed.
pub fn enforce_monophony(notes: &mut Vec<Note>) {
    notes.sort_by_key(|n| (n.onset, n.pitch));
    for i in 0..notes.len().saturating_sub(1) {
        let next_onset = notes[i + 1].onset;
        if notes[i].offset() > next_onset {
            notes[i].duration = next_onset - notes[i].onset;
        }
    }
    notes.retain(|n| n.duration > 0);
}
