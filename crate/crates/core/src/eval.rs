//! Feature-distribution overlap, skeleton statistics and one-tailed t-tests.

use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::EvalError;
use crate::memidi::Vocabulary;
use crate::preprocess::{CleanScore, QuantizedNote};
use crate::score::BAR_TICKS;
use crate::skeleton::{SkeletonAnnotation, Strategy};

pub const INTERVAL_RANGE: i32 = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Feature {
    PitchClass,
    NoteDuration,
    OnsetPosition,
    IntervalSize,
}

impl Feature {
    pub const ALL: [Feature; 4] =
        [Feature::PitchClass, Feature::NoteDuration, Feature::OnsetPosition, Feature::IntervalSize];

    pub fn name(self) -> &'static str {
        match self {
            Feature::PitchClass => "pitch_class",
            Feature::NoteDuration => "duration",
            Feature::OnsetPosition => "onset_position",
            Feature::IntervalSize => "interval",
        }
    }

    pub fn bins(self) -> usize {
        match self {
            Feature::PitchClass => 12,
            Feature::NoteDuration => crate::memidi::vocab::N_DURATIONS,
            Feature::OnsetPosition => crate::memidi::vocab::N_POSITIONS,
            Feature::IntervalSize => (2 * INTERVAL_RANGE + 1) as usize,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureHistogram {
    pub feature: Feature,
    pub mass: Vec<f64>,
}

impl FeatureHistogram {
    /// Normalize raw counts.
    pub fn from_counts(feature: Feature, counts: &[u64]) -> Result<Self, EvalError> {
        assert_eq!(counts.len(), feature.bins());
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return Err(EvalError::EmptyFeature(feature.name().into()));
        }
        Ok(FeatureHistogram { feature, mass: counts.iter().map(|&c| c as f64 / total as f64).collect() })
    }
}

/// Add one piece's observations of `feature` to `counts`. Intervals are
/// taken between consecutive notes of the piece; wider leaps than two
/// octaves and notes outside the vocabulary are not counted.
pub fn accumulate(feature: Feature, notes: &[QuantizedNote], vocab: &Vocabulary, counts: &mut [u64]) {
    match feature {
        Feature::PitchClass => notes.iter().for_each(|n| counts[(n.pitch % 12) as usize] += 1),
        Feature::NoteDuration => {
            for n in notes {
                if let Some(i) = vocab.duration_index(n.duration) {
                    counts[i] += 1;
                }
            }
        }
        Feature::OnsetPosition => {
            for n in notes {
                if let Some(i) = vocab.position_index(n.onset % BAR_TICKS) {
                    counts[i] += 1;
                }
            }
        }
        Feature::IntervalSize => {
            for w in notes.windows(2) {
                let d = w[1].pitch as i32 - w[0].pitch as i32;
                if d.abs() <= INTERVAL_RANGE {
                    counts[(d + INTERVAL_RANGE) as usize] += 1;
                }
            }
        }
    }
}

pub fn histogram(
    feature: Feature,
    pieces: &[&[QuantizedNote]],
    vocab: &Vocabulary,
) -> Result<FeatureHistogram, EvalError> {
    let mut counts = vec![0u64; feature.bins()];
    for notes in pieces {
        accumulate(feature, notes, vocab, &mut counts);
    }
    FeatureHistogram::from_counts(feature, &counts)
}

pub fn corpus_histogram(
    feature: Feature,
    corpus: &[CleanScore],
    vocab: &Vocabulary,
) -> Result<FeatureHistogram, EvalError> {
    let pieces: Vec<&[QuantizedNote]> = corpus.iter().map(|s| s.notes.as_slice()).collect();
    histogram(feature, &pieces, vocab)
}

/// Sum of bin-wise minima, in `[0, 1]`.
pub fn overlapped_area(p: &FeatureHistogram, q: &FeatureHistogram) -> Result<f64, EvalError> {
    if p.feature != q.feature || p.mass.len() != q.mass.len() {
        return Err(EvalError::BinningMismatch(
            format!("{}/{}", p.feature.name(), p.mass.len()),
            format!("{}/{}", q.feature.name(), q.mass.len()),
        ));
    }
    Ok(p.mass.iter().zip(&q.mass).map(|(a, b)| a.min(*b)).sum())
}

/// Overlapped area per feature between two corpora.
pub fn corpus_overlap(
    a: &[CleanScore],
    b: &[CleanScore],
    vocab: &Vocabulary,
) -> Result<Vec<(Feature, f64)>, EvalError> {
    Feature::ALL
        .iter()
        .map(|&f| Ok((f, overlapped_area(&corpus_histogram(f, a, vocab)?, &corpus_histogram(f, b, vocab)?)?)))
        .collect()
}

// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct PieceSkeletonStats {
    pub source_id: String,
    pub notes: usize,
    pub selected: usize,
    pub metrical: usize,
    pub agogic: usize,
    pub syncopation: usize,
}

impl PieceSkeletonStats {
    pub fn proportion(&self) -> f64 {
        if self.notes == 0 {
            0.0
        } else {
            self.selected as f64 / self.notes as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonStats {
    pub strategy: Strategy,
    pub pieces: Vec<PieceSkeletonStats>,
}

impl SkeletonStats {
    pub fn total_notes(&self) -> usize {
        self.pieces.iter().map(|p| p.notes).sum()
    }

    pub fn total_selected(&self) -> usize {
        self.pieces.iter().map(|p| p.selected).sum()
    }

    /// Selected notes over all notes of the corpus.
    pub fn proportion(&self) -> f64 {
        let n = self.total_notes();
        if n == 0 {
            0.0
        } else {
            self.total_selected() as f64 / n as f64
        }
    }

    /// Unweighted mean of the per-piece proportions.
    pub fn mean_piece_proportion(&self) -> f64 {
        if self.pieces.is_empty() {
            0.0
        } else {
            self.pieces.iter().map(PieceSkeletonStats::proportion).sum::<f64>() / self.pieces.len() as f64
        }
    }
}

pub fn skeleton_stats(strategy: Strategy, pieces: &[(&CleanScore, &SkeletonAnnotation)]) -> SkeletonStats {
    let pieces = pieces
        .iter()
        .map(|(score, ann)| PieceSkeletonStats {
            source_id: score.source_id.clone(),
            notes: ann.mask.len(),
            selected: ann.selected(),
            metrical: ann.labels.iter().filter(|l| l.metrical).count(),
            agogic: ann.labels.iter().filter(|l| l.agogic).count(),
            syncopation: ann.labels.iter().filter(|l| l.syncopation).count(),
        })
        .collect();
    SkeletonStats { strategy, pieces }
}

// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TTest {
    pub t: f64,
    pub df: f64,
    /// Probability of a statistic at least this large when the means agree.
    pub p: f64,
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

fn upper_tail(t: f64, df: f64) -> f64 {
    if t.is_nan() {
        return f64::NAN;
    }
    if t == f64::INFINITY {
        return 0.0;
    }
    if t == f64::NEG_INFINITY {
        return 1.0;
    }
    StudentsT::new(0.0, 1.0, df).expect("degrees of freedom are positive").cdf(-t)
}

/// Statistic for a difference `diff` with standard error `se`, where both
/// samples may be constant.
fn ratio(diff: f64, se: f64) -> f64 {
    if se > 0.0 {
        diff / se
    } else if diff == 0.0 {
        0.0
    } else {
        diff.signum() * f64::INFINITY
    }
}

/// Welch's unequal-variance test of `mean(a) > mean(b)`.
pub fn one_tailed_t(a: &[f64], b: &[f64]) -> Result<TTest, EvalError> {
    if a.len() < 2 || b.len() < 2 {
        return Err(EvalError::TooFewSamples(a.len(), b.len()));
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let ((ma, va), (mb, vb)) = (mean_var(a), mean_var(b));
    let (sa, sb) = (va / na, vb / nb);
    let se = (sa + sb).sqrt();
    let t = ratio(ma - mb, se);
    let df =
        if sa + sb > 0.0 { (sa + sb).powi(2) / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0)) } else { na + nb - 2.0 };
    Ok(TTest { t, df, p: upper_tail(t, df) })
}

/// Paired test of `mean(a - b) > 0`.
pub fn one_tailed_paired_t(a: &[f64], b: &[f64]) -> Result<TTest, EvalError> {
    if a.len() != b.len() {
        return Err(EvalError::UnpairedSamples(a.len(), b.len()));
    }
    if a.len() < 2 {
        return Err(EvalError::TooFewSamples(a.len(), b.len()));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n = d.len() as f64;
    let (m, v) = mean_var(&d);
    let t = ratio(m, (v / n).sqrt());
    let df = n - 1.0;
    Ok(TTest { t, df, p: upper_tail(t, df) })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hist(mass: &[f64]) -> FeatureHistogram {
        FeatureHistogram { feature: Feature::PitchClass, mass: mass.to_vec() }
    }

    #[test]
    fn overlap_cases() {
        let p = hist(&[0.5, 0.5, 0.0]);
        assert_eq!(overlapped_area(&p, &p).unwrap(), 1.0);
        assert_eq!(overlapped_area(&p, &hist(&[0.25, 0.25, 0.5])).unwrap(), 0.5);
        assert_eq!(overlapped_area(&p, &hist(&[0.0, 0.0, 1.0])).unwrap(), 0.0);
        assert!(matches!(overlapped_area(&p, &hist(&[1.0])), Err(EvalError::BinningMismatch(..))));
    }

    #[test]
    fn identical_samples_give_one_half() {
        let a = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(one_tailed_t(&a, &a).unwrap().p, 0.5);
        assert_eq!(one_tailed_paired_t(&a, &a).unwrap().p, 0.5);
        assert_eq!(one_tailed_t(&[3.0, 3.0], &[3.0, 3.0]).unwrap().p, 0.5);
    }

    #[test]
    fn sample_size_errors() {
        assert_eq!(one_tailed_t(&[1.0], &[1.0, 2.0]), Err(EvalError::TooFewSamples(1, 2)));
        assert_eq!(one_tailed_paired_t(&[1.0, 2.0], &[1.0]), Err(EvalError::UnpairedSamples(2, 1)));
    }

    #[test]
    fn empty_feature() {
        let v = Vocabulary::build();
        assert!(matches!(histogram(Feature::IntervalSize, &[&[]], &v), Err(EvalError::EmptyFeature(_))));
    }
}
