//! Versioned JSON documents for scores, clean scores and skeletons.
//!
//! Times are integer ticks at 480 per quarter. Unknown fields are ignored so
//! documents may carry extra metadata such as provenance.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::ScoreError;
use crate::preprocess::{CleanScore, GridClass, QuantizedNote, Tonality};
use crate::score::{Chord, ChordAnnotation, Key, MeterChange, Note, Score, TimeSignature};
use crate::skeleton::{AccentLabel, SkeletonAnnotation, Strategy};

pub const SCORE_SCHEMA: &str = "wuyun-score/1";
pub const CLEAN_SCHEMA: &str = "wuyun-clean/1";
pub const SKELETON_SCHEMA: &str = "wuyun-skeleton/1";

#[derive(Serialize, Deserialize)]
struct NoteDoc {
    onset: u64,
    duration: u64,
    pitch: u64,
    velocity: u64,
}

#[derive(Serialize, Deserialize)]
struct CleanNoteDoc {
    onset: u64,
    duration: u64,
    pitch: u64,
    velocity: u64,
    grid: GridClass,
}

#[derive(Serialize, Deserialize)]
struct ChordDoc {
    onset: u64,
    chord: String,
}

#[derive(Serialize, Deserialize)]
struct MeterDoc {
    tick: u64,
    numerator: u8,
    denominator: u8,
}

#[derive(Serialize, Deserialize)]
struct ScoreDoc {
    schema: String,
    source_id: String,
    ticks_per_quarter: u32,
    time_signature: [u8; 2],
    #[serde(default)]
    meter_changes: Vec<MeterDoc>,
    tempo_bpm: f64,
    key: Option<String>,
    end_tick: u64,
    notes: Vec<NoteDoc>,
    #[serde(default)]
    chords: Vec<ChordDoc>,
}

#[derive(Serialize, Deserialize)]
struct CleanDoc {
    schema: String,
    source_id: String,
    tempo_bpm: f64,
    key: String,
    bars: u64,
    notes: Vec<CleanNoteDoc>,
    #[serde(default)]
    chords: Vec<ChordDoc>,
}

#[derive(Serialize, Deserialize)]
struct LabelDoc {
    metrical: bool,
    agogic: bool,
    syncopation: bool,
}

#[derive(Serialize, Deserialize)]
struct SkeletonDoc {
    schema: String,
    strategy: String,
    proportion: f64,
    mask: Vec<bool>,
    #[serde(default)]
    labels: Vec<LabelDoc>,
    score: Value,
}

fn invalid(msg: impl Into<String>) -> ScoreError {
    ScoreError::InvalidField(msg.into())
}

fn tick(v: u64, what: &str) -> Result<u32, ScoreError> {
    u32::try_from(v).map_err(|_| invalid(format!("{what} {v} out of range")))
}

fn byte(v: u64, max: u8, what: &str) -> Result<u8, ScoreError> {
    if v > max as u64 {
        return Err(invalid(format!("{what} {v} exceeds {max}")));
    }
    Ok(v as u8)
}

fn parse_chords(docs: Vec<ChordDoc>) -> Result<Vec<ChordAnnotation>, ScoreError> {
    docs.into_iter()
        .enumerate()
        .map(|(i, c)| {
            Ok(ChordAnnotation {
                onset: tick(c.onset, &format!("chords[{i}].onset"))?,
                chord: c.chord.parse::<Chord>()?,
            })
        })
        .collect()
}

fn chord_docs(chords: &[ChordAnnotation]) -> Vec<ChordDoc> {
    chords.iter().map(|c| ChordDoc { onset: c.onset as u64, chord: c.chord.to_string() }).collect()
}

/// Parse text, check the schema tag and deserialize the rest.
fn open<T: for<'de> Deserialize<'de>>(value: Value, schema: &str) -> Result<T, ScoreError> {
    let found = value.get("schema").and_then(Value::as_str).unwrap_or("").to_string();
    if found != schema {
        return Err(ScoreError::SchemaMismatch { expected: schema.to_string(), found });
    }
    serde_json::from_value(value).map_err(|e| invalid(e.to_string()))
}

fn parse_value(text: &str) -> Result<Value, ScoreError> {
    serde_json::from_str(text).map_err(|e| invalid(format!("not JSON: {e}")))
}

fn tonality_name(t: Tonality) -> String {
    t.key().to_string()
}

fn parse_tonality(s: &str) -> Result<Tonality, ScoreError> {
    let key: Key = s.parse()?;
    Tonality::from_key(key).ok_or_else(|| invalid(format!("clean scores are in C major or A minor, not {key}")))
}

// ---------------------------------------------------------------------------

fn score_value(score: &Score) -> Value {
    let doc = ScoreDoc {
        schema: SCORE_SCHEMA.into(),
        source_id: score.source_id.clone(),
        ticks_per_quarter: score.ticks_per_quarter,
        time_signature: [score.time_signature.numerator, score.time_signature.denominator],
        meter_changes: score
            .meter_changes
            .iter()
            .map(|m| MeterDoc {
                tick: m.tick as u64,
                numerator: m.time_signature.numerator,
                denominator: m.time_signature.denominator,
            })
            .collect(),
        tempo_bpm: score.tempo_bpm,
        key: score.key.map(|k| k.to_string()),
        end_tick: score.end_tick as u64,
        notes: score
            .notes
            .iter()
            .map(|n| NoteDoc {
                onset: n.onset as u64,
                duration: n.duration as u64,
                pitch: n.pitch as u64,
                velocity: n.velocity as u64,
            })
            .collect(),
        chords: chord_docs(&score.chords),
    };
    serde_json::to_value(doc).expect("score serializes")
}

pub fn score_to_json(score: &Score) -> String {
    serde_json::to_string_pretty(&score_value(score)).expect("score serializes")
}

pub fn score_from_json(text: &str) -> Result<Score, ScoreError> {
    let doc: ScoreDoc = open(parse_value(text)?, SCORE_SCHEMA)?;
    let notes = doc
        .notes
        .into_iter()
        .enumerate()
        .map(|(i, n)| {
            Ok(Note {
                onset: tick(n.onset, &format!("notes[{i}].onset"))?,
                duration: tick(n.duration, &format!("notes[{i}].duration"))?,
                pitch: byte(n.pitch, 127, &format!("notes[{i}].pitch"))?,
                velocity: byte(n.velocity, 127, &format!("notes[{i}].velocity"))?,
            })
        })
        .collect::<Result<Vec<_>, ScoreError>>()?;
    let meter_changes = doc
        .meter_changes
        .into_iter()
        .map(|m| {
            Ok(MeterChange {
                tick: tick(m.tick, "meter_changes.tick")?,
                time_signature: TimeSignature::new(m.numerator, m.denominator),
            })
        })
        .collect::<Result<Vec<_>, ScoreError>>()?;
    let score = Score {
        ticks_per_quarter: doc.ticks_per_quarter,
        time_signature: TimeSignature::new(doc.time_signature[0], doc.time_signature[1]),
        meter_changes,
        tempo_bpm: doc.tempo_bpm,
        key: doc.key.map(|k| k.parse()).transpose()?,
        notes,
        chords: parse_chords(doc.chords)?,
        end_tick: tick(doc.end_tick, "end_tick")?,
        source_id: doc.source_id,
    };
    score.validate()?;
    Ok(score)
}

fn clean_value(score: &CleanScore) -> Value {
    let doc = CleanDoc {
        schema: CLEAN_SCHEMA.into(),
        source_id: score.source_id.clone(),
        tempo_bpm: score.tempo_bpm,
        key: tonality_name(score.tonality),
        bars: score.bars as u64,
        notes: score
            .notes
            .iter()
            .map(|n| CleanNoteDoc {
                onset: n.onset as u64,
                duration: n.duration as u64,
                pitch: n.pitch as u64,
                velocity: n.velocity as u64,
                grid: n.grid,
            })
            .collect(),
        chords: chord_docs(&score.chords),
    };
    serde_json::to_value(doc).expect("clean score serializes")
}

fn clean_from_value(value: Value) -> Result<CleanScore, ScoreError> {
    let doc: CleanDoc = open(value, CLEAN_SCHEMA)?;
    let notes = doc
        .notes
        .into_iter()
        .enumerate()
        .map(|(i, n)| {
            Ok(QuantizedNote {
                onset: tick(n.onset, &format!("notes[{i}].onset"))?,
                duration: tick(n.duration, &format!("notes[{i}].duration"))?,
                pitch: byte(n.pitch, 127, &format!("notes[{i}].pitch"))?,
                velocity: byte(n.velocity, 127, &format!("notes[{i}].velocity"))?,
                grid: n.grid,
            })
        })
        .collect::<Result<Vec<_>, ScoreError>>()?;
    CleanScore::new(
        doc.source_id,
        doc.tempo_bpm,
        parse_tonality(&doc.key)?,
        tick(doc.bars, "bars")?,
        notes,
        parse_chords(doc.chords)?,
    )
}

pub fn clean_to_json(score: &CleanScore) -> String {
    serde_json::to_string_pretty(&clean_value(score)).expect("clean score serializes")
}

pub fn clean_from_json(text: &str) -> Result<CleanScore, ScoreError> {
    clean_from_value(parse_value(text)?)
}

pub fn skeleton_to_json(annotation: &SkeletonAnnotation, score: &CleanScore) -> String {
    let doc = SkeletonDoc {
        schema: SKELETON_SCHEMA.into(),
        strategy: annotation.strategy.to_string(),
        proportion: annotation.proportion(),
        mask: annotation.mask.clone(),
        labels: annotation
            .labels
            .iter()
            .map(|l| LabelDoc { metrical: l.metrical, agogic: l.agogic, syncopation: l.syncopation })
            .collect(),
        score: clean_value(score),
    };
    serde_json::to_string_pretty(&doc).expect("skeleton serializes")
}

/// Read a skeleton document. The mask may have been edited by hand; the
/// stored proportion is recomputed from it.
pub fn skeleton_from_json(text: &str) -> Result<(SkeletonAnnotation, CleanScore), ScoreError> {
    let doc: SkeletonDoc = open(parse_value(text)?, SKELETON_SCHEMA)?;
    let score = clean_from_value(doc.score)?;
    let strategy: Strategy = doc.strategy.parse().map_err(|e| invalid(format!("strategy: {e}")))?;
    if doc.mask.len() != score.notes.len() {
        return Err(invalid(format!("mask has {} entries for {} notes", doc.mask.len(), score.notes.len())));
    }
    let labels = if doc.labels.is_empty() {
        crate::skeleton::label_accents(&score.notes)
    } else if doc.labels.len() == score.notes.len() {
        doc.labels
            .into_iter()
            .map(|l| AccentLabel { metrical: l.metrical, agogic: l.agogic, syncopation: l.syncopation })
            .collect()
    } else {
        return Err(invalid(format!("labels has {} entries for {} notes", doc.labels.len(), score.notes.len())));
    };
    Ok((SkeletonAnnotation { strategy, labels, mask: doc.mask }, score))
}

/// Schema tag of a JSON document, if any.
pub fn schema_of(text: &str) -> Option<String> {
    parse_value(text).ok()?.get("schema")?.as_str().map(str::to_string)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::score::{ChordQuality, PitchClass};

    fn sample() -> Score {
        let mut s = Score::new("one");
        s.key = Some(Key::major(PitchClass::Eb));
        s.notes = vec![Note::new(0, 480, 60, 80)];
        s.chords = vec![ChordAnnotation { onset: 0, chord: Chord::new(PitchClass::C, ChordQuality::DominantSeventh) }];
        s.end_tick = 1920;
        s
    }

    #[test]
    fn times_are_integers() {
        let text = score_to_json(&sample());
        let v: Value = serde_json::from_str(&text).unwrap();
        assert!(v["notes"][0]["onset"].is_u64());
        assert!(v["notes"][0]["duration"].is_u64());
        assert!(v["chords"][0]["onset"].is_u64());
        assert_eq!(v["chords"][0]["chord"], "C_Mm7");
        assert_eq!(score_from_json(&text).unwrap(), sample());
    }

    #[test]
    fn rejects_bad_documents() {
        let mut v: Value = serde_json::from_str(&score_to_json(&sample())).unwrap();
        v["notes"][0]["velocity"] = 300.into();
        assert!(matches!(score_from_json(&v.to_string()), Err(ScoreError::InvalidField(_))));
        v["schema"] = "wuyun-score/0".into();
        assert!(matches!(score_from_json(&v.to_string()), Err(ScoreError::SchemaMismatch { .. })));
    }

    #[test]
    fn extra_fields_are_ignored() {
        let mut v: Value = serde_json::from_str(&score_to_json(&sample())).unwrap();
        v["provenance"] = serde_json::json!({"seed": 7});
        assert_eq!(score_from_json(&v.to_string()).unwrap(), sample());
    }
}
