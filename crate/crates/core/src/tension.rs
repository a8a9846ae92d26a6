//! Spiral-array geometry and per-note tonal tension against the global key.

use crate::preprocess::{QuantizedNote, Tonality};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpiralPoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl SpiralPoint {
    pub fn distance(self, other: SpiralPoint) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2) + (self.z - other.z).powi(2)).sqrt()
    }

    fn scale(self, s: f64) -> SpiralPoint {
        SpiralPoint { x: self.x * s, y: self.y * s, z: self.z * s }
    }

    fn add(self, o: SpiralPoint) -> SpiralPoint {
        SpiralPoint { x: self.x + o.x, y: self.y + o.y, z: self.z + o.z }
    }
}

fn mix(weights: [f64; 3], points: [SpiralPoint; 3]) -> SpiralPoint {
    points[0].scale(weights[0]).add(points[1].scale(weights[1])).add(points[2].scale(weights[2]))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpiralParams {
    pub r: f64,
    pub h: f64,
    /// Weights of root, fifth and third in a chord, and of tonic, dominant
    /// and subdominant in a key.
    pub w: [f64; 3],
    /// Minor keys only: weights of tonic, dominant and subdominant.
    pub u: [f64; 3],
    /// Share of the major dominant in a minor key.
    pub alpha: f64,
    /// Share of the minor subdominant in a minor key.
    pub beta: f64,
}

impl Default for SpiralParams {
    fn default() -> Self {
        let w = [0.536, 0.274, 0.19];
        SpiralParams { r: 1.0, h: (2.0f64 / 15.0).sqrt(), w, u: w, alpha: 0.75, beta: 0.75 }
    }
}

impl SpiralParams {
    pub fn validate(&self) -> Result<(), String> {
        let [w1, w2, w3] = self.w;
        if !(w1 >= w2 && w2 >= w3 && w3 >= 0.0 && ((w1 + w2 + w3) - 1.0).abs() < 1e-9) {
            return Err(format!("weights {:?} must be non-increasing, non-negative and sum to 1", self.w));
        }
        if ((self.u.iter().sum::<f64>()) - 1.0).abs() > 1e-9 || self.u.iter().any(|&u| u < 0.0) {
            return Err(format!("minor-key weights {:?} must be non-negative and sum to 1", self.u));
        }
        if !(self.r > 0.0 && self.h > 0.0) {
            return Err("r and h must be positive".into());
        }
        if !((0.0..=1.0).contains(&self.alpha) && (0.0..=1.0).contains(&self.beta)) {
            return Err("alpha and beta must lie in [0, 1]".into());
        }
        Ok(())
    }

    /// Point of line-of-fifths index `k` on the helix.
    pub fn point(&self, k: i32) -> SpiralPoint {
        let angle = k as f64 * std::f64::consts::FRAC_PI_2;
        SpiralPoint { x: self.r * angle.sin(), y: self.r * angle.cos(), z: k as f64 * self.h }
    }

    fn major_chord(&self, k: i32) -> SpiralPoint {
        mix(self.w, [self.point(k), self.point(k + 1), self.point(k + 4)])
    }

    fn minor_chord(&self, k: i32) -> SpiralPoint {
        mix(self.w, [self.point(k), self.point(k + 1), self.point(k - 3)])
    }
}

fn tonic_fifths(key: Tonality) -> i32 {
    match key {
        Tonality::CMajor => 0,
        Tonality::AMinor => 3,
    }
}

/// Line-of-fifths index of a pitch class, spelled within five flats and six
/// sharps of the key's tonic.
pub fn fifths_index(pitch_class: u8, key: Tonality) -> i32 {
    let base = (7 * pitch_class as i32).rem_euclid(12);
    let lo = tonic_fifths(key) - 5;
    lo + (base - lo).rem_euclid(12)
}

pub fn pitch_point(pitch_class: u8, key: Tonality, params: &SpiralParams) -> SpiralPoint {
    params.point(fifths_index(pitch_class % 12, key))
}

pub fn key_center(key: Tonality, params: &SpiralParams) -> SpiralPoint {
    let k = tonic_fifths(key);
    match key {
        Tonality::CMajor => {
            mix(params.w, [params.major_chord(k), params.major_chord(k + 1), params.major_chord(k - 1)])
        }
        Tonality::AMinor => {
            let dominant =
                params.major_chord(k + 1).scale(params.alpha).add(params.minor_chord(k + 1).scale(1.0 - params.alpha));
            let subdominant =
                params.minor_chord(k - 1).scale(params.beta).add(params.major_chord(k - 1).scale(1.0 - params.beta));
            mix(params.u, [params.minor_chord(k), dominant, subdominant])
        }
    }
}

pub fn pitch_tension(pitch: u8, key: Tonality, params: &SpiralParams) -> f64 {
    pitch_point(pitch % 12, key, params).distance(key_center(key, params))
}

pub fn tension_profile(notes: &[QuantizedNote], key: Tonality, params: &SpiralParams) -> Vec<f64> {
    let center = key_center(key, params);
    let by_class: Vec<f64> = (0..12).map(|pc| pitch_point(pc, key, params).distance(center)).collect();
    notes.iter().map(|n| by_class[(n.pitch % 12) as usize]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        SpiralParams::default().validate().unwrap();
    }

    #[test]
    fn spelling_window() {
        let fifths: Vec<i32> = (0..12).map(|pc| fifths_index(pc, Tonality::CMajor)).collect();
        assert_eq!(fifths, vec![0, -5, 2, -3, 4, -1, 6, 1, -4, 3, -2, 5]);
        // A minor spells G# rather than Ab.
        assert_eq!(fifths_index(8, Tonality::AMinor), 8);
        assert_eq!(fifths_index(10, Tonality::AMinor), -2);
    }
}
