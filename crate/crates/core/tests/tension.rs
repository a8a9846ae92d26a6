mod oracle;

use wuyun_core::preprocess::{GridClass, QuantizedNote, Tonality};
use wuyun_core::tension::{key_center, pitch_point, pitch_tension, tension_profile, SpiralParams};

const DIATONIC_C: [u8; 7] = [0, 2, 4, 5, 7, 9, 11];

#[test]
fn points_match_direct_evaluation() {
    let params = SpiralParams::default();
    for pc in 0..12u8 {
        for (tonality, table) in
            [(Tonality::CMajor, oracle::C_MAJOR_FIFTHS), (Tonality::AMinor, oracle::A_MINOR_FIFTHS)]
        {
            let p = pitch_point(pc, tonality, &params);
            let q = oracle::p(table[pc as usize]);
            assert!((p.x - q[0]).abs() < 1e-12 && (p.y - q[1]).abs() < 1e-12 && (p.z - q[2]).abs() < 1e-12);
            assert!((p.x * p.x + p.y * p.y - 1.0).abs() < 1e-12);
        }
    }
    let fsharp = pitch_point(6, Tonality::CMajor, &params);
    assert!(fsharp.x.abs() < 1e-12 && (fsharp.y + 1.0).abs() < 1e-12);
    assert!((fsharp.z - 6.0 * oracle::h()).abs() < 1e-12);
}

#[test]
fn key_centers_match_direct_evaluation() {
    let params = SpiralParams::default();
    let c = key_center(Tonality::CMajor, &params);
    let a = key_center(Tonality::AMinor, &params);
    let (oc, oa) = (oracle::c_major_center(), oracle::a_minor_center());
    assert!(oracle::dist([c.x, c.y, c.z], oc) < 1e-12);
    assert!(oracle::dist([a.x, a.y, a.z], oa) < 1e-12);
    assert!(c.x * c.x + c.y * c.y < 1.0);
    assert!(oracle::dist(oc, oa) > 0.1);

    let degenerate = SpiralParams { w: [1.0, 0.0, 0.0], ..SpiralParams::default() };
    let ce = key_center(Tonality::CMajor, &degenerate);
    assert_eq!(ce, pitch_point(0, Tonality::CMajor, &degenerate));
}

#[test]
fn tension_orders_tonic_dominant_tritone() {
    let params = SpiralParams::default();
    let t = |pc: u8| pitch_tension(60 + pc, Tonality::CMajor, &params);
    assert!(t(0) < t(7) && t(7) < t(6));
    assert!(oracle::tension_oracle(60, Tonality::CMajor) < oracle::tension_oracle(67, Tonality::CMajor));
    assert!(oracle::tension_oracle(67, Tonality::CMajor) < oracle::tension_oracle(66, Tonality::CMajor));

    let all: Vec<f64> = (0..12u8).map(t).collect();
    let max = all.iter().cloned().fold(f64::MIN, f64::max);
    let diatonic: Vec<f64> = DIATONIC_C.iter().map(|&pc| all[pc as usize]).collect();
    let chromatic: Vec<f64> = (0..12u8).filter(|pc| !DIATONIC_C.contains(pc)).map(|pc| all[pc as usize]).collect();
    assert!(diatonic.iter().all(|&d| d < max));
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    assert!(mean(&diatonic) < mean(&chromatic));

    for pc in 0..12u8 {
        for tonality in [Tonality::CMajor, Tonality::AMinor] {
            assert!((pitch_tension(pc, tonality, &params) - oracle::tension_oracle(pc, tonality)).abs() < 1e-12);
        }
    }
}

#[test]
fn profile_is_a_pitch_class_function() {
    let params = SpiralParams::default();
    let note = |pitch| QuantizedNote { onset: 0, duration: 480, pitch, velocity: 80, grid: GridClass::Straight };
    let notes = [note(60), note(60), note(72), note(48), note(66)];
    let t = tension_profile(&notes, Tonality::CMajor, &params);
    assert_eq!(t.len(), notes.len());
    assert!(t[0] == t[1] && t[1] == t[2] && t[2] == t[3]);
    assert!(t.iter().all(|&x| x >= 0.0));
}

#[test]
fn fifths_window_is_injective() {
    let params = SpiralParams::default();
    for tonality in [Tonality::CMajor, Tonality::AMinor] {
        let pts: Vec<_> = (0..12).map(|pc| pitch_point(pc, tonality, &params)).collect();
        for i in 0..12 {
            for j in 0..i {
                assert!(pts[i].distance(pts[j]) > 1e-6);
            }
        }
    }
}
