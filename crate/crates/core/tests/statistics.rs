mod oracle;

use rand_distr::{Distribution, Normal};
use serde_json::Value;
use wuyun_core::eval::{
    corpus_histogram, corpus_overlap, one_tailed_paired_t, one_tailed_t, overlapped_area, Feature, FeatureHistogram,
};
use wuyun_core::memidi::Vocabulary;

fn reference() -> Vec<Value> {
    let path = format!("{}/tests/fixtures/ttest_reference.json", env!("CARGO_MANIFEST_DIR"));
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn floats(v: &Value) -> Vec<f64> {
    v.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

#[test]
fn welch_matches_frozen_reference() {
    for case in reference() {
        let (a, b) = (floats(&case["a"]), floats(&case["b"]));
        let got = one_tailed_t(&a, &b).unwrap();
        let name = case["name"].as_str().unwrap();
        assert!((got.t - case["t"].as_f64().unwrap()).abs() < 1e-9, "{name} t {}", got.t);
        assert!(rel(got.df, case["df"].as_f64().unwrap()) < 1e-9, "{name} df {}", got.df);
        assert!(rel(got.p, case["p"].as_f64().unwrap()) < 1e-9, "{name} p {} vs {}", got.p, case["p"]);
        if let Some(pp) = case.get("paired_p") {
            let paired = one_tailed_paired_t(&a, &b).unwrap();
            assert!((paired.t - case["paired_t"].as_f64().unwrap()).abs() < 1e-9, "{name} paired t");
            assert!(rel(paired.p, pp.as_f64().unwrap()) < 1e-9, "{name} paired p {} vs {pp}", paired.p);
        }
    }
}

#[test]
fn separated_normals_are_significant() {
    let mut rng = oracle::rng(51);
    let a: Vec<f64> = Normal::new(1.0, 1.0).unwrap().sample_iter(&mut rng).take(130).collect();
    let b: Vec<f64> = Normal::new(0.0, 1.0).unwrap().sample_iter(&mut rng).take(130).collect();
    let r = one_tailed_t(&a, &b).unwrap();
    assert!(r.p < 1e-6, "{r:?}");
    let reverse = one_tailed_t(&b, &a).unwrap();
    assert!((r.p + reverse.p - 1.0).abs() < 1e-12);
}

#[test]
fn overlap_is_symmetric_and_bounded() {
    let mut rng = oracle::rng(52);
    let v = Vocabulary::build();
    let a: Vec<_> = (0..20).map(|i| oracle::random_clean(&mut rng, i)).collect();
    let b: Vec<_> = (0..20).map(|i| oracle::random_clean(&mut rng, i)).collect();
    for f in Feature::ALL {
        let (p, q) = (corpus_histogram(f, &a, &v).unwrap(), corpus_histogram(f, &b, &v).unwrap());
        assert!((p.mass.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        let (pq, qp) = (overlapped_area(&p, &q).unwrap(), overlapped_area(&q, &p).unwrap());
        assert_eq!(pq, qp);
        assert!((0.0..=1.0 + 1e-12).contains(&pq));
        assert!((overlapped_area(&p, &p).unwrap() - 1.0).abs() < 1e-12);
    }
    for (_, oa) in corpus_overlap(&a, &a, &v).unwrap() {
        assert!((oa - 1.0).abs() < 1e-12);
    }
}

#[test]
fn three_bin_case() {
    let mut counts = vec![0u64; 12];
    counts[0] = 1;
    counts[1] = 1;
    let p = FeatureHistogram::from_counts(Feature::PitchClass, &counts).unwrap();
    let q = FeatureHistogram::from_counts(Feature::PitchClass, &[1, 1, 2, 0, 0, 0, 0, 0, 0, 0, 0, 0]).unwrap();
    assert_eq!(overlapped_area(&p, &q).unwrap(), 0.5);
}
