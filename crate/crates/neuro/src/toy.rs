//! Small synthetic corpora for tests, gradient checks and smoke runs.

use rand::Rng;
use wuyun_core::memidi::{tokenize, MeMidiSequence, Vocabulary};
use wuyun_core::preprocess::{CleanScore, GridClass, QuantizedNote, Tonality};
use wuyun_core::score::{Chord, ChordAnnotation, BAR_TICKS, BEAT_TICKS};

const DURATIONS: [u32; 5] = [240, 480, 480, 720, 960];

/// Random monophonic piece on the eighth-note grid. The first note starts
/// at tick 0 with `first_pitch` when given.
pub fn random_score<R: Rng>(rng: &mut R, id: &str, bars: u32, chords: bool, first_pitch: Option<u8>) -> CleanScore {
    let end = bars * BAR_TICKS;
    let mut notes = Vec::new();
    let mut t = 0;
    while t < end {
        if !notes.is_empty() && rng.random_bool(0.2) {
            t += 240;
            continue;
        }
        let duration = DURATIONS[rng.random_range(0..DURATIONS.len())].min(end - t);
        let pitch = match (notes.is_empty(), first_pitch) {
            (true, Some(p)) => p,
            _ => rng.random_range(55..=79),
        };
        let velocity = [64, 80, 96][rng.random_range(0..3)];
        notes.push(QuantizedNote { onset: t, duration, pitch, velocity, grid: GridClass::Straight });
        t += duration;
    }
    let chords = if chords {
        let mut out = Vec::new();
        for i in 0..bars * 2 {
            if rng.random_bool(0.7) {
                let chord = Chord::from_index(rng.random_range(0..156)).expect("chord index");
                out.push(ChordAnnotation { onset: i * 2 * BEAT_TICKS, chord });
            }
        }
        out
    } else {
        Vec::new()
    };
    let tonality = if rng.random_bool(0.5) { Tonality::CMajor } else { Tonality::AMinor };
    CleanScore::new(id, 100.0, tonality, bars, notes, chords).expect("generated piece is valid")
}

/// `n` skeleton-style sequences whose first notes all differ.
pub fn toy_corpus<R: Rng>(rng: &mut R, n: usize, bars: u32, vocab: &Vocabulary) -> Vec<MeMidiSequence> {
    assert!(n <= 36, "at most 36 distinct first pitches");
    (0..n)
        .map(|i| {
            let s = random_score(rng, &format!("toy{i}"), bars, false, Some(48 + i as u8));
            tokenize(&s, true, vocab).expect("toy pieces tokenize")
        })
        .collect()
}
