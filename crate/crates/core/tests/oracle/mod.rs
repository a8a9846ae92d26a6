//! Independent reference implementations and random fixture generators.
//!
//! Shared by several test targets through `#[path]`, so unused items are
//! expected in any single one of them.
#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use wuyun_core::preprocess::{CleanScore, GridClass, QuantizedNote, Tonality};
use wuyun_core::score::{Chord, ChordAnnotation, Key, Mode, Note, PitchClass, Score};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---------------------------------------------------------------------------
// Fixtures

pub const STRAIGHT_DURATIONS: [u32; 12] = [30, 60, 90, 120, 180, 240, 360, 480, 720, 960, 1440, 1920];
pub const TRIPLETS: [u32; 5] = [40, 80, 160, 320, 640];

/// A random grid-conforming clean melody with chords on some beats.
pub fn random_clean(rng: &mut impl Rng, id: usize) -> CleanScore {
    let bars = rng.random_range(1..=12u32);
    random_clean_bars(rng, id, bars)
}

pub fn random_clean_bars(rng: &mut impl Rng, id: usize, bars: u32) -> CleanScore {
    let end = bars * 1920;
    let mut notes = Vec::new();
    let mut t = 0u32;
    loop {
        let triplet = rng.random_bool(0.15);
        let duration = if triplet {
            TRIPLETS[rng.random_range(0..TRIPLETS.len())]
        } else if rng.random_bool(0.2) {
            30 * rng.random_range(1..=64)
        } else {
            STRAIGHT_DURATIONS[rng.random_range(0..STRAIGHT_DURATIONS.len())]
        };
        let grid = if triplet {
            40
        } else if duration >= 120 {
            120
        } else if duration >= 60 {
            60
        } else {
            30
        };
        let rest = if rng.random_bool(0.3) { rng.random_range(0..500) } else { 0 };
        let onset = (t + rest).div_ceil(grid) * grid;
        if onset >= end {
            break;
        }
        notes.push(QuantizedNote {
            onset,
            duration,
            pitch: rng.random_range(48..=83),
            velocity: rng.random_range(0..=127),
            grid: if triplet { GridClass::Triplet } else { GridClass::Straight },
        });
        t = onset + duration;
    }
    let mut chords = Vec::new();
    if rng.random_bool(0.8) {
        for beat in 0..bars * 4 {
            if beat == 0 || rng.random_bool(0.5) {
                chords.push(ChordAnnotation {
                    onset: beat * 480,
                    chord: Chord::from_index(rng.random_range(0..156)).unwrap(),
                });
            }
        }
    }
    let tonality = if rng.random_bool(0.5) { Tonality::CMajor } else { Tonality::AMinor };
    let tempo = [72.0, 89.5, 90.0, 120.0, 137.25, 160.0, 172.0][rng.random_range(0..7)];
    CleanScore::new(format!("rand{id}"), tempo, tonality, bars, notes, chords).expect("generator yields valid scores")
}

/// A raw performance-like melody: jittered onsets and durations, some
/// triplet figures, occasional overlaps and very short notes.
pub fn random_raw_notes(rng: &mut impl Rng) -> Vec<Note> {
    let n = rng.random_range(1..60);
    let mut notes = Vec::with_capacity(n);
    let mut t: u32 = rng.random_range(0..200);
    while notes.len() < n {
        if rng.random_bool(0.15) {
            let d = TRIPLETS[rng.random_range(0..4)];
            for _ in 0..rng.random_range(2..=3) {
                let dur = (d as i64 + rng.random_range(-(d as i64) / 6..=(d as i64) / 6)).max(1) as u32;
                notes.push(Note::new(t, dur, rng.random_range(48..=83), 80));
                t += dur;
            }
            continue;
        }
        let base = [15, 25, 30, 45, 60, 100, 119, 120, 200, 240, 480, 700, 960, 1920, 2500][rng.random_range(0..15)];
        let dur = (base as i64 + rng.random_range(-20..=20)).max(1) as u32;
        let overlap = rng.random_bool(0.1);
        notes.push(Note::new(t, dur, rng.random_range(40..=90), rng.random_range(1..=127)));
        t = if overlap { t + dur / 2 + 1 } else { t + dur + rng.random_range(0..120) };
    }
    notes.sort_by_key(|n| n.onset);
    notes
}

pub fn random_score(rng: &mut impl Rng, id: usize) -> Score {
    let mut s = Score::new(format!("raw{id}"));
    let mut notes = random_raw_notes(rng);
    wuyun_core::score::enforce_monophony(&mut notes);
    s.notes = notes;
    s.key = Some(Key {
        tonic: PitchClass::from_index(rng.random_range(0..12)),
        mode: if rng.random_bool(0.5) { Mode::Major } else { Mode::Minor },
    });
    s.end_tick = s.last_offset().div_ceil(1920).max(4) * 1920;
    s
}

// ---------------------------------------------------------------------------
// Grid conformance

/// Rule scan written directly from the lattice definitions.
pub fn grid_violation_count(notes: &[QuantizedNote]) -> usize {
    let straight: Vec<u32> = (1..=64).map(|k| 30 * k).collect();
    let mut bad = 0;
    for (i, n) in notes.iter().enumerate() {
        let ok = match n.grid {
            GridClass::Straight => {
                let grid = if n.duration >= 120 {
                    120
                } else if n.duration >= 60 {
                    60
                } else {
                    30
                };
                straight.contains(&n.duration) && n.onset % grid == 0 && (n.onset + n.duration) % 30 == 0
            }
            GridClass::Triplet => {
                TRIPLETS.contains(&n.duration) && n.onset % 40 == 0 && (n.onset + n.duration) % 40 == 0
            }
        };
        let overlap = i > 0 && notes[i - 1].onset + notes[i - 1].duration > n.onset;
        if !ok || overlap {
            bad += 1;
        }
    }
    bad
}

// ---------------------------------------------------------------------------
// Triplets

fn near_triplet(duration: u32, d: u32) -> bool {
    (duration as f64 - d as f64).abs() / d as f64 <= 0.2
}

/// Every note that belongs to some window of two or three consecutive,
/// gap-free notes all within 20% of one standard triplet duration.
pub fn triplet_oracle(notes: &[Note]) -> Vec<bool> {
    let mut out = vec![false; notes.len()];
    for size in [2usize, 3] {
        for start in 0..notes.len().saturating_sub(size - 1) {
            let window = &notes[start..start + size];
            let contiguous = window
                .windows(2)
                .all(|w| w[1].onset >= w[0].onset + w[0].duration && w[1].onset - (w[0].onset + w[0].duration) < 30);
            let shared = TRIPLETS.iter().any(|&d| window.iter().all(|n| near_triplet(n.duration, d)));
            if contiguous && shared {
                out[start..start + size].iter_mut().for_each(|x| *x = true);
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Spiral array

pub const R: f64 = 1.0;
pub const W: [f64; 3] = [0.536, 0.274, 0.19];

pub fn h() -> f64 {
    (2.0f64 / 15.0).sqrt()
}

/// Line-of-fifths spelling in C major and A minor, by pitch class.
pub const C_MAJOR_FIFTHS: [i32; 12] = [0, -5, 2, -3, 4, -1, 6, 1, -4, 3, -2, 5];
pub const A_MINOR_FIFTHS: [i32; 12] = [0, 7, 2, 9, 4, -1, 6, 1, 8, 3, -2, 5];

pub fn p(k: i32) -> [f64; 3] {
    let a = k as f64 * std::f64::consts::PI / 2.0;
    [R * a.sin(), R * a.cos(), k as f64 * h()]
}

fn comb(ws: [f64; 3], ps: [[f64; 3]; 3]) -> [f64; 3] {
    let mut out = [0.0; 3];
    for (w, pt) in ws.iter().zip(ps) {
        for d in 0..3 {
            out[d] += w * pt[d];
        }
    }
    out
}

pub fn major_triad(k: i32) -> [f64; 3] {
    comb(W, [p(k), p(k + 1), p(k + 4)])
}

pub fn minor_triad(k: i32) -> [f64; 3] {
    comb(W, [p(k), p(k + 1), p(k - 3)])
}

pub fn c_major_center() -> [f64; 3] {
    comb(W, [major_triad(0), major_triad(1), major_triad(-1)])
}

pub fn a_minor_center() -> [f64; 3] {
    let (alpha, beta) = (0.75, 0.75);
    let dom = comb([alpha, 1.0 - alpha, 0.0], [major_triad(4), minor_triad(4), [0.0; 3]]);
    let sub = comb([beta, 1.0 - beta, 0.0], [minor_triad(2), major_triad(2), [0.0; 3]]);
    comb(W, [minor_triad(3), dom, sub])
}

pub fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

pub fn tension_oracle(pitch: u8, tonality: Tonality) -> f64 {
    match tonality {
        Tonality::CMajor => dist(p(C_MAJOR_FIFTHS[(pitch % 12) as usize]), c_major_center()),
        Tonality::AMinor => dist(p(A_MINOR_FIFTHS[(pitch % 12) as usize]), a_minor_center()),
    }
}

// ---------------------------------------------------------------------------
// Skeleton

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Labels {
    pub metrical: bool,
    pub agogic: bool,
    pub syncopation: bool,
}

pub fn labels_oracle(notes: &[QuantizedNote]) -> Vec<Labels> {
    let n = notes.len();
    (0..n)
        .map(|i| {
            let q = notes[i];
            let in_bar = q.onset - (q.onset / 1920) * 1920;
            let metrical = in_bar == 0 || in_bar == 960;
            let mut strong = (q.onset / 1920) * 1920;
            while strong <= q.onset {
                strong += 960;
            }
            let syncopation = !metrical && q.onset + q.duration > strong;
            let agogic = if n == 1 {
                false
            } else if i == 0 {
                q.duration > notes[1].duration
            } else if i == n - 1 {
                q.duration > notes[n - 2].duration
            } else {
                q.duration > notes[i - 1].duration && q.duration > notes[i + 1].duration
            };
            Labels { metrical, agogic, syncopation }
        })
        .collect()
}

pub fn rhythm_oracle(labels: &[Labels]) -> Vec<bool> {
    let score = |l: &Labels| -> u8 {
        if l.agogic && l.metrical {
            3
        } else if l.agogic && l.syncopation {
            2
        } else if l.metrical {
            1
        } else {
            0
        }
    };
    let mut runs: Vec<Vec<usize>> = Vec::new();
    let mut current: Vec<usize> = Vec::new();
    for (i, l) in labels.iter().enumerate() {
        if score(l) > 0 {
            current.push(i);
        } else if !current.is_empty() {
            runs.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        runs.push(current);
    }
    let mut mask = vec![false; labels.len()];
    for run in runs {
        let top = run.iter().map(|&i| score(&labels[i])).max().unwrap();
        let first = *run.iter().find(|&&i| score(&labels[i]) == top).unwrap();
        mask[first] = true;
    }
    mask
}

pub fn cell_size_oracle(durations: &[u32]) -> usize {
    let freq = |n: usize| -> f64 {
        let mut counts: BTreeMap<Vec<u32>, usize> = BTreeMap::new();
        let mut chunks = 0;
        let mut i = 0;
        while i + n <= durations.len() {
            *counts.entry(durations[i..i + n].to_vec()).or_default() += 1;
            chunks += 1;
            i += n;
        }
        if chunks == 0 {
            0.0
        } else {
            *counts.values().max().unwrap() as f64 / chunks as f64
        }
    };
    if freq(3) > freq(2) {
        3
    } else {
        2
    }
}

pub fn partition_oracle(len: usize, size: usize) -> Vec<usize> {
    if len <= 1 {
        return if len == 1 { vec![1] } else { vec![] };
    }
    if size == 2 {
        let mut cells = vec![2; len / 2];
        if len % 2 == 1 {
            cells.pop();
            cells.push(3);
        }
        cells
    } else {
        match len % 3 {
            0 => vec![3; len / 3],
            2 => [vec![3; len / 3], vec![2]].concat(),
            _ => [vec![3; len / 3 - 1], vec![2, 2]].concat(),
        }
    }
}

/// Cells of the tonal pass as explicit index lists.
pub fn cells_oracle(notes: &[QuantizedNote], rhythm: &[bool]) -> Vec<Vec<usize>> {
    let size = cell_size_oracle(&notes.iter().map(|n| n.duration).collect::<Vec<_>>());
    let mut bounds: Vec<usize> = (0..notes.len()).filter(|&i| i == 0 || rhythm[i]).collect();
    bounds.push(notes.len());
    let mut cells = Vec::new();
    for w in bounds.windows(2) {
        let mut at = w[0];
        for len in partition_oracle(w[1] - w[0], size) {
            cells.push((at..at + len).collect());
            at += len;
        }
    }
    cells
}

pub fn tonal_oracle(notes: &[QuantizedNote], rhythm: &[bool], tonality: Tonality) -> Vec<bool> {
    let mut mask = vec![false; notes.len()];
    for cell in cells_oracle(notes, rhythm) {
        let tensions: Vec<f64> = cell.iter().map(|&i| tension_oracle(notes[i].pitch, tonality)).collect();
        let min = tensions.iter().cloned().fold(f64::INFINITY, f64::min);
        let pick = cell[tensions.iter().position(|&t| t == min).unwrap()];
        mask[pick] = true;
    }
    mask
}
