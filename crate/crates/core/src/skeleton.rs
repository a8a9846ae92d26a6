//! Melodic skeleton extraction along the rhythm and pitch dimensions, and
//! the control strategies used to compare skeleton variants.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::SkeletonError;
use crate::preprocess::{CleanScore, QuantizedNote};
use crate::score::BAR_TICKS;
use crate::tension::{tension_profile, SpiralParams};

const STRONG_BEATS: [u32; 2] = [0, BAR_TICKS / 2];
const HALF_BAR: u32 = BAR_TICKS / 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct AccentLabel {
    pub metrical: bool,
    pub agogic: bool,
    pub syncopation: bool,
}

impl AccentLabel {
    /// Pruning rank of a rhythm candidate; 0 for non-candidates.
    pub fn intensity(self) -> u8 {
        match (self.agogic, self.metrical, self.syncopation) {
            (true, true, _) => 3,
            (true, false, true) => 2,
            (_, true, _) => 1,
            _ => 0,
        }
    }
}

/// Metrical accents fall on beats 1 and 3; a syncopation holds a weak-position
/// note across the next strong beat; an agogic accent is longer than each
/// existing neighbour.
pub fn label_accents(notes: &[QuantizedNote]) -> Vec<AccentLabel> {
    (0..notes.len())
        .map(|i| {
            let n = &notes[i];
            let metrical = STRONG_BEATS.contains(&(n.onset % BAR_TICKS));
            let next_strong = (n.onset / HALF_BAR + 1) * HALF_BAR;
            let syncopation = !metrical && n.offset() > next_strong;
            let longer_than = |j: Option<usize>| j.and_then(|j| notes.get(j)).map(|m| n.duration > m.duration);
            let agogic = match (longer_than(i.checked_sub(1)), longer_than(Some(i + 1))) {
                (None, None) => false,
                (a, b) => a.unwrap_or(true) && b.unwrap_or(true),
            };
            AccentLabel { metrical, agogic, syncopation }
        })
        .collect()
}

/// Candidates are metrical accents and agogic accents on syncopations; each
/// run of adjacent candidates keeps only its most intense note.
pub fn rhythmic_skeleton(labels: &[AccentLabel]) -> Vec<bool> {
    let mut mask = vec![false; labels.len()];
    let mut i = 0;
    while i < labels.len() {
        if labels[i].intensity() == 0 {
            i += 1;
            continue;
        }
        let mut best = i;
        let mut j = i + 1;
        while j < labels.len() && labels[j].intensity() > 0 {
            if labels[j].intensity() > labels[best].intensity() {
                best = j;
            }
            j += 1;
        }
        mask[best] = true;
        i = j;
    }
    mask
}

/// Cell size for the whole melody: the size whose non-overlapping duration
/// chunks repeat their most common pattern more often, relative to the
/// number of chunks. Ties go to 2.
pub fn choose_cell_size(durations: &[u32]) -> usize {
    let top = |size: usize| -> (usize, usize) {
        let chunks: Vec<&[u32]> = durations.chunks_exact(size).collect();
        let mut counts: HashMap<&[u32], usize> = HashMap::new();
        for c in &chunks {
            *counts.entry(c).or_default() += 1;
        }
        (counts.values().copied().max().unwrap_or(0), chunks.len())
    };
    let (top2, n2) = top(2);
    let (top3, n3) = top(3);
    if n3 > 0 && top3 * n2 > top2 * n3 {
        3
    } else {
        2
    }
}

/// Split a segment of `len` notes into cells of `size`, absorbing the
/// remainder with cells of the other size at the end.
pub fn cell_partition(len: usize, size: usize) -> Vec<usize> {
    match (len, size) {
        (0, _) => vec![],
        (1, _) => vec![1],
        (_, 2) => {
            let mut cells = vec![2; len / 2];
            if len % 2 == 1 {
                *cells.last_mut().unwrap() = 3;
            }
            cells
        }
        (_, 3) => {
            let mut cells = vec![3; len / 3];
            match len % 3 {
                1 => {
                    cells.pop();
                    cells.extend([2, 2]);
                }
                2 => cells.push(2),
                _ => {}
            }
            cells
        }
        _ => panic!("cell size must be 2 or 3"),
    }
}

/// Index ranges bounded by rhythm-skeleton notes. Each rhythm note opens a
/// segment; notes before the first one form their own segment.
pub fn tonal_segments(rhythm_mask: &[bool]) -> Vec<std::ops::Range<usize>> {
    let mut starts: Vec<usize> = rhythm_mask.iter().enumerate().filter(|(_, &m)| m).map(|(i, _)| i).collect();
    if starts.first() != Some(&0) {
        starts.insert(0, 0);
    }
    let n = rhythm_mask.len();
    if n == 0 {
        return Vec::new();
    }
    starts.iter().enumerate().map(|(k, &s)| s..starts.get(k + 1).copied().unwrap_or(n)).collect()
}

/// The least tense note of every rhythmic cell.
pub fn tonal_skeleton(notes: &[QuantizedNote], rhythm_mask: &[bool], tension: &[f64]) -> Vec<bool> {
    assert_eq!(notes.len(), tension.len());
    let durations: Vec<u32> = notes.iter().map(|n| n.duration).collect();
    let size = choose_cell_size(&durations);
    let mut mask = vec![false; notes.len()];
    for seg in tonal_segments(rhythm_mask) {
        let mut start = seg.start;
        for len in cell_partition(seg.len(), size) {
            let mut best = start;
            for i in start..start + len {
                if tension[i] < tension[best] {
                    best = i;
                }
            }
            mask[best] = true;
            start += len;
        }
    }
    mask
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Strategy {
    Downbeat,
    LongNote,
    Rhythm,
    Tonic,
    Intersection,
    Union,
    Random(f64),
}

impl Strategy {
    pub const STRUCTURAL: [Strategy; 6] = [
        Strategy::Downbeat,
        Strategy::LongNote,
        Strategy::Rhythm,
        Strategy::Tonic,
        Strategy::Intersection,
        Strategy::Union,
    ];
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Strategy::Downbeat => f.write_str("downbeat"),
            Strategy::LongNote => f.write_str("longnote"),
            Strategy::Rhythm => f.write_str("rhythm"),
            Strategy::Tonic => f.write_str("tonic"),
            Strategy::Intersection => f.write_str("intersection"),
            Strategy::Union => f.write_str("union"),
            Strategy::Random(p) => write!(f, "random:{p}"),
        }
    }
}

impl FromStr for Strategy {
    type Err = SkeletonError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        let strategy = match lower.as_str() {
            "downbeat" => Strategy::Downbeat,
            "longnote" | "long_note" => Strategy::LongNote,
            "rhythm" => Strategy::Rhythm,
            "tonic" | "tonal" => Strategy::Tonic,
            "intersection" => Strategy::Intersection,
            "union" => Strategy::Union,
            other => {
                let p = other
                    .strip_prefix("random:")
                    .and_then(|p| p.parse::<f64>().ok())
                    .ok_or_else(|| SkeletonError::UnknownStrategy(s.to_string()))?;
                if !(p > 0.0 && p < 1.0) {
                    return Err(SkeletonError::InvalidP(p));
                }
                Strategy::Random(p)
            }
        };
        Ok(strategy)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonAnnotation {
    pub strategy: Strategy,
    pub labels: Vec<AccentLabel>,
    pub mask: Vec<bool>,
}

impl SkeletonAnnotation {
    pub fn proportion(&self) -> f64 {
        if self.mask.is_empty() {
            0.0
        } else {
            self.mask.iter().filter(|&&m| m).count() as f64 / self.mask.len() as f64
        }
    }

    pub fn selected(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// The skeleton notes of `score`, in order.
    pub fn skeleton_notes(&self, score: &CleanScore) -> Result<Vec<QuantizedNote>, SkeletonError> {
        if self.mask.len() != score.notes.len() {
            return Err(SkeletonError::MaskLength { mask: self.mask.len(), notes: score.notes.len() });
        }
        Ok(score.notes.iter().zip(&self.mask).filter(|(_, &m)| m).map(|(n, _)| *n).collect())
    }

    /// `score` reduced to its skeleton notes, chords removed.
    pub fn skeleton_score(&self, score: &CleanScore) -> Result<CleanScore, SkeletonError> {
        Ok(CleanScore { notes: self.skeleton_notes(score)?, chords: Vec::new(), ..score.clone() })
    }
}

/// Number of notes a random strategy keeps out of `n`.
pub fn random_count(p: f64, n: usize) -> usize {
    ((p * n as f64) - 1e-9).ceil().max(0.0) as usize
}

pub fn extract(strategy: Strategy, score: &CleanScore, seed: u64) -> Result<SkeletonAnnotation, SkeletonError> {
    extract_with(strategy, score, seed, &SpiralParams::default())
}

pub fn extract_with(
    strategy: Strategy,
    score: &CleanScore,
    seed: u64,
    params: &SpiralParams,
) -> Result<SkeletonAnnotation, SkeletonError> {
    let notes = &score.notes;
    let labels = label_accents(notes);
    let rhythm = || rhythmic_skeleton(&labels);
    let tonic = |rhythm: &[bool]| tonal_skeleton(notes, rhythm, &tension_profile(notes, score.tonality, params));
    let mask = match strategy {
        Strategy::Downbeat => labels.iter().map(|l| l.metrical).collect(),
        Strategy::LongNote => labels.iter().map(|l| l.agogic).collect(),
        Strategy::Rhythm => rhythm(),
        Strategy::Tonic => tonic(&rhythm()),
        Strategy::Intersection | Strategy::Union => {
            let r = rhythm();
            let t = tonic(&r);
            let and = strategy == Strategy::Intersection;
            r.iter().zip(&t).map(|(&a, &b)| if and { a && b } else { a || b }).collect()
        }
        Strategy::Random(p) => {
            if !(p > 0.0 && p < 1.0) {
                return Err(SkeletonError::InvalidP(p));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let k = random_count(p, notes.len());
            let mut mask = vec![false; notes.len()];
            for i in rand::seq::index::sample(&mut rng, notes.len(), k) {
                mask[i] = true;
            }
            mask
        }
    };
    Ok(SkeletonAnnotation { strategy, labels, mask })
}
