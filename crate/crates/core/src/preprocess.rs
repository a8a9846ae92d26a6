//! Dataset cleaning: 4/4 segmentation, self-adaptive mixed-precision
//! quantization, tonality unification, one chord per beat and octave folding.

use serde::{Deserialize, Serialize};

use crate::error::{PreprocessError, ScoreError};
use crate::score::{
    validate_notes, Chord, ChordAnnotation, Key, Mode, Note, PitchClass, Score, TimeSignature, BAR_TICKS, BEAT_TICKS,
};

/// Lowest and highest pitch kept in a clean melody (C3..=B5 region, MIDI 48..=83).
pub const PITCH_MIN: u8 = 48;
pub const PITCH_MAX: u8 = 83;

/// 64th note at 480 ticks per quarter.
pub const STRAIGHT_UNIT: u32 = 30;
/// 48th note (triplet 32nd) at 480 ticks per quarter.
pub const TRIPLET_UNIT: u32 = 40;
pub const MAX_DURATION: u32 = BAR_TICKS;
pub const TRIPLET_DURATIONS: [u32; 5] = [40, 80, 160, 320, 640];

/// Largest relative error between a played and a standard triplet duration.
const TRIPLET_TOLERANCE_NUM: u32 = 1;
const TRIPLET_TOLERANCE_DEN: u32 = 5;
/// Two notes are consecutive when the rest between them is shorter than this.
const TRIPLET_MAX_GAP: u32 = STRAIGHT_UNIT;
const MIN_SEGMENT_BARS: u32 = 4;
const MAX_DROPPED_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridClass {
    Straight,
    Triplet,
}

impl GridClass {
    /// The class implied by a legal duration; the two duration sets are disjoint.
    pub fn of_duration(duration: u32) -> GridClass {
        if TRIPLET_DURATIONS.contains(&duration) {
            GridClass::Triplet
        } else {
            GridClass::Straight
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct QuantizedNote {
    pub onset: u32,
    pub duration: u32,
    pub pitch: u8,
    pub velocity: u8,
    pub grid: GridClass,
}

impl QuantizedNote {
    pub fn offset(&self) -> u32 {
        self.onset + self.duration
    }

    pub fn note(&self) -> Note {
        Note::new(self.onset, self.duration, self.pitch, self.velocity)
    }
}

/// Onset grid for a straight note: 16th for notes of a 16th or longer,
/// 32nd for notes of a 32nd or longer, otherwise 64th.
pub fn straight_onset_grid(duration: u32) -> u32 {
    if duration >= 4 * STRAIGHT_UNIT {
        4 * STRAIGHT_UNIT
    } else if duration >= 2 * STRAIGHT_UNIT {
        2 * STRAIGHT_UNIT
    } else {
        STRAIGHT_UNIT
    }
}

pub fn is_straight_duration(duration: u32) -> bool {
    (STRAIGHT_UNIT..=MAX_DURATION).contains(&duration) && duration.is_multiple_of(STRAIGHT_UNIT)
}

pub fn is_legal_duration(duration: u32) -> bool {
    is_straight_duration(duration) || TRIPLET_DURATIONS.contains(&duration)
}

/// Whether `onset` may start a note of `duration` on the mixed-precision lattice.
pub fn grid_conforms(onset: u32, duration: u32) -> bool {
    match GridClass::of_duration(duration) {
        GridClass::Triplet => onset.is_multiple_of(TRIPLET_UNIT),
        GridClass::Straight => is_straight_duration(duration) && onset.is_multiple_of(straight_onset_grid(duration)),
    }
}

/// The two supported tonal centres after unification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Tonality {
    CMajor,
    AMinor,
}

impl Tonality {
    pub fn key(self) -> Key {
        match self {
            Tonality::CMajor => Key::C_MAJOR,
            Tonality::AMinor => Key::A_MINOR,
        }
    }

    pub fn from_key(key: Key) -> Option<Tonality> {
        match key {
            Key::C_MAJOR => Some(Tonality::CMajor),
            Key::A_MINOR => Some(Tonality::AMinor),
            _ => None,
        }
    }
}

/// A model-ready melody: 4/4, C major or A minor, quantized notes in
/// `48..=83`, chords on beat boundaries.
#[derive(Debug, Clone, PartialEq)]
pub struct CleanScore {
    pub source_id: String,
    pub tempo_bpm: f64,
    pub tonality: Tonality,
    /// Number of 4/4 bars; every onset lies before `bars * 1920`.
    pub bars: u32,
    pub notes: Vec<QuantizedNote>,
    pub chords: Vec<ChordAnnotation>,
}

impl CleanScore {
    /// Build and validate.
    ///
    /// Validation covers vocabulary-level facts (legal onsets, durations and
    /// pitches, monophony, beat-aligned chords). Finer grid conformance of
    /// straight onsets is checked separately by [`grid_violations`], because
    /// generated sequences may legitimately break it.
    pub fn new(
        source_id: impl Into<String>,
        tempo_bpm: f64,
        tonality: Tonality,
        bars: u32,
        notes: Vec<QuantizedNote>,
        chords: Vec<ChordAnnotation>,
    ) -> Result<CleanScore, ScoreError> {
        let score = CleanScore { source_id: source_id.into(), tempo_bpm, tonality, bars, notes, chords };
        score.validate()?;
        Ok(score)
    }

    pub fn validate(&self) -> Result<(), ScoreError> {
        if !(self.tempo_bpm.is_finite() && self.tempo_bpm > 0.0) {
            return Err(ScoreError::InvalidField(format!("tempo_bpm {} is not positive", self.tempo_bpm)));
        }
        let plain: Vec<Note> = self.notes.iter().map(QuantizedNote::note).collect();
        validate_notes(&plain)?;
        let end = self.bars * BAR_TICKS;
        for (i, n) in self.notes.iter().enumerate() {
            if !(PITCH_MIN..=PITCH_MAX).contains(&n.pitch) {
                return Err(ScoreError::InvalidField(format!("notes[{i}].pitch {} outside 48..=83", n.pitch)));
            }
            if !is_legal_duration(n.duration) {
                return Err(ScoreError::InvalidField(format!("notes[{i}].duration {} is not legal", n.duration)));
            }
            if n.grid != GridClass::of_duration(n.duration) {
                return Err(ScoreError::InvalidField(format!(
                    "notes[{i}].grid {:?} disagrees with duration {}",
                    n.grid, n.duration
                )));
            }
            if n.onset % STRAIGHT_UNIT != 0 && n.onset % TRIPLET_UNIT != 0 {
                return Err(ScoreError::InvalidField(format!("notes[{i}].onset {} is off both grids", n.onset)));
            }
            if n.onset >= end {
                return Err(ScoreError::InvalidField(format!(
                    "notes[{i}].onset {} lies beyond {} bars",
                    n.onset, self.bars
                )));
            }
        }
        for (i, c) in self.chords.iter().enumerate() {
            if c.onset % BEAT_TICKS != 0 || c.onset >= end {
                return Err(ScoreError::InvalidField(format!("chords[{i}].onset {} is not a beat in range", c.onset)));
            }
            if i > 0 && self.chords[i - 1].onset >= c.onset {
                return Err(ScoreError::InvalidField(format!("chords[{i}] is not after chords[{}]", i - 1)));
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Segmentation

/// Split into maximal 4/4 stretches of at least four bars, each re-based to 0.
pub fn segment_44(score: &Score) -> Vec<Score> {
    let mut spans: Vec<(u32, u32)> = Vec::new();
    for (start, end, ts) in score.meter_regions() {
        if !ts.is_common() {
            continue;
        }
        match spans.last_mut() {
            Some(last) if last.1 == start => last.1 = end,
            _ => spans.push((start, end)),
        }
    }
    spans.retain(|&(s, e)| e - s >= MIN_SEGMENT_BARS * BAR_TICKS);

    let whole = spans.len() == 1 && spans[0] == (0, score.end_tick) && score.meter_changes.is_empty();
    if whole {
        return vec![score.clone()];
    }
    spans
        .iter()
        .enumerate()
        .map(|(i, &(start, end))| cut(score, start, end, format!("{}#seg{i}", score.source_id)))
        .collect()
}

fn cut(score: &Score, start: u32, end: u32, source_id: String) -> Score {
    let notes = score
        .notes
        .iter()
        .filter(|n| n.onset >= start && n.onset < end)
        .map(|n| Note { onset: n.onset - start, duration: n.offset().min(end) - n.onset, ..*n })
        .collect();
    let mut chords: Vec<ChordAnnotation> = score
        .chords
        .iter()
        .filter(|c| c.onset >= start && c.onset < end)
        .map(|c| ChordAnnotation { onset: c.onset - start, chord: c.chord })
        .collect();
    if chords.first().is_none_or(|c| c.onset > 0) {
        if let Some(sounding) = score.chords.iter().rev().find(|c| c.onset < start) {
            chords.insert(0, ChordAnnotation { onset: 0, chord: sounding.chord });
        }
    }
    Score {
        ticks_per_quarter: score.ticks_per_quarter,
        time_signature: TimeSignature::COMMON,
        meter_changes: Vec::new(),
        tempo_bpm: score.tempo_bpm,
        key: score.key,
        notes,
        chords,
        end_tick: end - start,
        source_id,
    }
}

// ---------------------------------------------------------------------------
// Triplet detection and quantization

/// The standard triplet duration a played duration is within 20% of, if any.
pub fn standard_triplet(duration: u32) -> Option<u32> {
    TRIPLET_DURATIONS.into_iter().find(|&d| TRIPLET_TOLERANCE_DEN * duration.abs_diff(d) <= TRIPLET_TOLERANCE_NUM * d)
}

/// Mark runs of two or more consecutive notes that all sit within 20% of the
/// same standard triplet duration as [`GridClass::Triplet`].
pub fn classify_triplets(notes: &[Note]) -> Vec<GridClass> {
    let mut classes = vec![GridClass::Straight; notes.len()];
    let mut i = 0;
    while i < notes.len() {
        let Some(d) = standard_triplet(notes[i].duration) else {
            i += 1;
            continue;
        };
        let mut j = i + 1;
        while j < notes.len()
            && standard_triplet(notes[j].duration) == Some(d)
            && notes[j].onset.saturating_sub(notes[j - 1].offset()) < TRIPLET_MAX_GAP
        {
            j += 1;
        }
        if j - i >= 2 {
            classes[i..j].fill(GridClass::Triplet);
        }
        i = j;
    }
    classes
}

/// Nearest multiple of `grid`, halves rounding up.
pub fn snap(value: u32, grid: u32) -> u32 {
    (value + grid / 2) / grid * grid
}

fn snap_triplet_duration(duration: u32) -> u32 {
    // Ties go to the shorter value.
    TRIPLET_DURATIONS.into_iter().min_by_key(|&d| (d.abs_diff(duration), d)).unwrap()
}

fn quantize_straight(onset: u32, duration: u32) -> (u32, u32) {
    let end = snap(onset + duration, STRAIGHT_UNIT);
    let mut grid = straight_onset_grid(duration);
    loop {
        let q_onset = snap(onset, grid);
        let q_duration = end.saturating_sub(q_onset).clamp(STRAIGHT_UNIT, MAX_DURATION);
        let needed = straight_onset_grid(q_duration);
        if needed <= grid {
            return (q_onset, q_duration);
        }
        // The snapped duration belongs to a coarser class; re-align the onset.
        grid = needed;
    }
}

/// Per-note outcome of quantization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SnapRecord {
    pub index: usize,
    pub kept: bool,
    pub onset_shift: i64,
    pub offset_shift: i64,
}

/// Snap every note to its adaptive grid. See [`quantize_with_report`].
pub fn quantize(notes: &[Note], classes: &[GridClass]) -> Vec<QuantizedNote> {
    quantize_with_report(notes, classes).0
}

/// Quantize and return one [`SnapRecord`] per input note.
///
/// Straight notes shorter than a 64th are dropped and notes longer than a bar
/// become whole notes. Straight onsets snap to a 16th, 32nd or 64th grid
/// chosen by duration and offsets snap to the 64th grid; triplet onsets and
/// offsets snap to the 48th grid and durations to the nearest standard
/// triplet value. Overlaps left by snapping are removed by clipping the
/// earlier note onto its own grid.
pub fn quantize_with_report(notes: &[Note], classes: &[GridClass]) -> (Vec<QuantizedNote>, Vec<SnapRecord>) {
    assert_eq!(notes.len(), classes.len(), "one grid class per note");
    let mut records = Vec::with_capacity(notes.len());
    let mut snapped: Vec<(usize, QuantizedNote)> = Vec::with_capacity(notes.len());
    for (index, (n, &grid)) in notes.iter().zip(classes).enumerate() {
        let q = match grid {
            GridClass::Straight if n.duration < STRAIGHT_UNIT => None,
            GridClass::Straight => {
                let (onset, duration) = quantize_straight(n.onset, n.duration.min(MAX_DURATION));
                Some((onset, duration))
            }
            GridClass::Triplet => {
                let onset = snap(n.onset, TRIPLET_UNIT);
                let end = snap(n.offset(), TRIPLET_UNIT);
                Some((onset, snap_triplet_duration(end.saturating_sub(onset))))
            }
        };
        match q {
            Some((onset, duration)) => {
                snapped.push((index, QuantizedNote { onset, duration, pitch: n.pitch, velocity: n.velocity, grid }));
                records.push(SnapRecord {
                    index,
                    kept: true,
                    onset_shift: onset as i64 - n.onset as i64,
                    offset_shift: (onset + duration) as i64 - n.offset() as i64,
                });
            }
            None => records.push(SnapRecord { index, kept: false, onset_shift: 0, offset_shift: 0 }),
        }
    }
    snapped.sort_by_key(|(i, q)| (q.onset, *i));

    let mut out: Vec<QuantizedNote> = Vec::with_capacity(snapped.len());
    for k in 0..snapped.len() {
        let (index, mut q) = snapped[k];
        if let Some(&(_, next)) = snapped.get(k + 1) {
            if q.offset() > next.onset {
                q.duration = clip_duration(q, next.onset);
            }
        }
        if q.duration == 0 {
            records[index].kept = false;
            continue;
        }
        records[index].offset_shift = q.offset() as i64 - notes[index].offset() as i64;
        out.push(q);
    }
    (out, records)
}

/// Longest legal duration for `q` that ends no later than `limit`; 0 if none.
fn clip_duration(q: QuantizedNote, limit: u32) -> u32 {
    let room = limit.saturating_sub(q.onset);
    match q.grid {
        GridClass::Straight => room / STRAIGHT_UNIT * STRAIGHT_UNIT,
        GridClass::Triplet => TRIPLET_DURATIONS.into_iter().filter(|&d| d <= room).max().unwrap_or(0),
    }
}

/// Every grid-rule violation in a quantized sequence, as `(index, reason)`.
pub fn grid_violations(notes: &[QuantizedNote]) -> Vec<(usize, String)> {
    let mut out = Vec::new();
    for (i, n) in notes.iter().enumerate() {
        match n.grid {
            GridClass::Straight => {
                if !is_straight_duration(n.duration) {
                    out.push((i, format!("straight duration {}", n.duration)));
                }
                if n.onset % straight_onset_grid(n.duration) != 0 {
                    out.push((i, format!("onset {} off the {}-tick grid", n.onset, straight_onset_grid(n.duration))));
                }
                if n.offset() % STRAIGHT_UNIT != 0 {
                    out.push((i, format!("offset {} off the 64th grid", n.offset())));
                }
            }
            GridClass::Triplet => {
                if !TRIPLET_DURATIONS.contains(&n.duration) {
                    out.push((i, format!("triplet duration {}", n.duration)));
                }
                if n.onset % TRIPLET_UNIT != 0 || n.offset() % TRIPLET_UNIT != 0 {
                    out.push((i, format!("triplet {}..{} off the 48th grid", n.onset, n.offset())));
                }
            }
        }
        if i > 0 && notes[i - 1].offset() > n.onset {
            out.push((i, "overlaps previous note".into()));
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Tonality, chords, register

/// Major-key profile (Krumhansl & Kessler), indexed from the tonic.
const MAJOR_PROFILE: [f64; 12] = [6.35, 2.23, 3.48, 2.33, 4.38, 4.09, 2.52, 5.19, 2.39, 3.66, 2.29, 2.88];
const MINOR_PROFILE: [f64; 12] = [6.33, 2.68, 3.52, 5.38, 2.60, 3.53, 2.54, 4.75, 3.98, 2.69, 3.34, 3.17];

/// Duration-weighted pitch-class correlation against the 24 key profiles.
pub fn estimate_key(notes: &[Note]) -> Option<Key> {
    let mut hist = [0.0f64; 12];
    for n in notes {
        hist[(n.pitch % 12) as usize] += n.duration as f64;
    }
    if hist.iter().all(|&h| h == 0.0) {
        return None;
    }
    let mut best: Option<(f64, Key)> = None;
    for tonic in PitchClass::ALL {
        for (mode, profile) in [(Mode::Major, &MAJOR_PROFILE), (Mode::Minor, &MINOR_PROFILE)] {
            let rotated: Vec<f64> = (0..12).map(|pc| profile[(pc + 12 - tonic.index() as usize) % 12]).collect();
            let r = pearson(&hist, &rotated);
            if best.is_none_or(|(b, _)| r > b) {
                best = Some((r, Key { tonic, mode }));
            }
        }
    }
    best.map(|(_, k)| k)
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

/// Signed semitone shift taking `key` to C major or A minor; the shorter
/// direction wins and a tritone goes down.
pub fn tonality_shift(key: Key) -> i32 {
    let target = match key.mode {
        Mode::Major => PitchClass::C,
        Mode::Minor => PitchClass::A,
    };
    let up = (target.index() as i32 - key.tonic.index() as i32).rem_euclid(12);
    if up < 6 {
        up
    } else {
        up - 12
    }
}

/// Transpose to C major / A minor. Falls back to key estimation only when
/// `estimate` is set.
pub fn unify_tonality(score: &Score, estimate: bool) -> Result<Score, PreprocessError> {
    let key = match score.key {
        Some(k) => k,
        None if estimate => {
            estimate_key(&score.notes).ok_or_else(|| PreprocessError::UnknownKey(score.source_id.clone()))?
        }
        None => return Err(PreprocessError::UnknownKey(score.source_id.clone())),
    };
    let shift = tonality_shift(key);
    let mut out = score.clone();
    out.notes = score
        .notes
        .iter()
        .filter_map(|n| {
            let p = n.pitch as i32 + shift;
            (0..=127).contains(&p).then_some(Note { pitch: p as u8, ..*n })
        })
        .collect();
    for c in &mut out.chords {
        c.chord = c.chord.transpose(shift);
    }
    out.key = Some(match key.mode {
        Mode::Major => Key::C_MAJOR,
        Mode::Minor => Key::A_MINOR,
    });
    Ok(out)
}

/// Shift the melody by octaves so its median sits in 48..=83, then fold each
/// remaining outlier by one octave or drop it. More than 10% dropped rejects
/// the piece.
pub fn fold_octaves(score: &Score) -> Result<Score, PreprocessError> {
    if score.notes.is_empty() {
        return Ok(score.clone());
    }
    let mut pitches: Vec<i32> = score.notes.iter().map(|n| n.pitch as i32).collect();
    pitches.sort_unstable();
    let median = pitches[(pitches.len() - 1) / 2];
    let (lo, hi) = (PITCH_MIN as i32, PITCH_MAX as i32);
    let octaves = if median < lo {
        (lo - median + 11) / 12
    } else if median > hi {
        -((median - hi + 11) / 12)
    } else {
        0
    };
    let shift = 12 * octaves;

    let mut out = score.clone();
    out.notes.clear();
    let mut dropped = 0;
    for n in &score.notes {
        let p = n.pitch as i32 + shift;
        let folded = if (lo..=hi).contains(&p) {
            Some(p)
        } else if (lo..=hi).contains(&(p + 12)) {
            Some(p + 12)
        } else if (lo..=hi).contains(&(p - 12)) {
            Some(p - 12)
        } else {
            None
        };
        match folded {
            Some(p) => out.notes.push(Note { pitch: p as u8, ..*n }),
            None => dropped += 1,
        }
    }
    let total = score.notes.len();
    if dropped as f64 > MAX_DROPPED_FRACTION * total as f64 {
        return Err(PreprocessError::RejectedPiece { source_id: score.source_id.clone(), dropped, total });
    }
    Ok(out)
}

/// One chord per beat for `beats` beats: each beat takes the chord covering
/// most of it (earliest on ties). Time before the first chord belongs to it.
/// An unannotated piece stays unannotated.
pub fn chords_per_beat(chords: &[ChordAnnotation], beats: u32) -> Vec<ChordAnnotation> {
    if chords.is_empty() {
        return Vec::new();
    }
    let spans: Vec<(u32, u32, Chord)> = chords
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let start = if i == 0 { 0 } else { c.onset };
            let end = chords.get(i + 1).map_or(u32::MAX, |n| n.onset);
            (start, end, c.chord)
        })
        .collect();
    (0..beats)
        .map(|b| {
            let (lo, hi) = (b * BEAT_TICKS, (b + 1) * BEAT_TICKS);
            let mut best = (0u32, spans[0].2);
            for &(s, e, chord) in &spans {
                let cover = e.min(hi).saturating_sub(s.max(lo));
                if cover > best.0 {
                    best = (cover, chord);
                }
            }
            ChordAnnotation { onset: lo, chord: best.1 }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Pipeline

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PreprocessConfig {
    pub estimate_key: bool,
}

/// Per-segment summary for the preprocessing report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PieceReport {
    pub source_id: String,
    pub notes_in: usize,
    pub notes_kept: usize,
    pub notes_dropped: usize,
    pub triplets: usize,
    pub max_onset_shift: u32,
    pub mean_onset_shift: f64,
}

/// Outcome for one 4/4 segment.
pub type SegmentResult = Result<(CleanScore, PieceReport), PreprocessError>;

/// Run the full cleaning pipeline on one score.
pub fn preprocess(score: &Score, config: &PreprocessConfig) -> Vec<SegmentResult> {
    segment_44(score).iter().map(|seg| clean_segment(seg, config)).collect()
}

fn clean_segment(seg: &Score, config: &PreprocessConfig) -> SegmentResult {
    let unified = unify_tonality(seg, config.estimate_key)?;
    let folded = fold_octaves(&unified)?;
    let classes = classify_triplets(&folded.notes);
    let (notes, records) = quantize_with_report(&folded.notes, &classes);
    let length = seg.end_tick.max(notes.iter().map(QuantizedNote::offset).max().unwrap_or(0));
    let bars = length.div_ceil(BAR_TICKS).max(1);
    let chords = chords_per_beat(&folded.chords, bars * 4);
    let tonality = folded.key.and_then(Tonality::from_key).expect("unify_tonality sets C major or A minor");
    let shifts: Vec<u32> = records.iter().filter(|r| r.kept).map(|r| r.onset_shift.unsigned_abs() as u32).collect();
    let report = PieceReport {
        source_id: seg.source_id.clone(),
        notes_in: seg.notes.len(),
        notes_kept: notes.len(),
        notes_dropped: seg.notes.len() - notes.len(),
        triplets: notes.iter().filter(|n| n.grid == GridClass::Triplet).count(),
        max_onset_shift: shifts.iter().copied().max().unwrap_or(0),
        mean_onset_shift: if shifts.is_empty() {
            0.0
        } else {
            shifts.iter().map(|&s| s as f64).sum::<f64>() / shifts.len() as f64
        },
    };
    let clean = CleanScore::new(seg.source_id.clone(), seg.tempo_bpm, tonality, bars, notes, chords)?;
    Ok((clean, report))
}
