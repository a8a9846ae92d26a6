mod oracle;

use wuyun_core::json;
use wuyun_core::preprocess::{preprocess, PreprocessConfig};
use wuyun_core::smf::{read_smf, write_smf};

#[test]
fn random_scores_clean_into_valid_pieces() {
    let mut rng = oracle::rng(21);
    let mut produced = 0;
    for id in 0..300 {
        let score = oracle::random_score(&mut rng, id);
        for result in preprocess(&score, &PreprocessConfig::default()) {
            let Ok((clean, report)) = result else { continue };
            clean.validate().unwrap();
            assert_eq!(oracle::grid_violation_count(&clean.notes), 0);
            assert!(clean.notes.iter().all(|n| (48..=83).contains(&n.pitch)));
            assert_eq!(clean.chords.len(), 0);
            assert_eq!(report.notes_kept, clean.notes.len());
            assert_eq!(json::clean_from_json(&json::clean_to_json(&clean)).unwrap(), clean);
            produced += 1;
        }
    }
    assert!(produced > 100, "only {produced} pieces survived");
}

#[test]
fn ingested_files_clean_like_in_memory_scores() {
    let mut rng = oracle::rng(22);
    for id in 0..50 {
        let score = oracle::random_score(&mut rng, id);
        let reread = read_smf(&write_smf(&score)).unwrap();
        assert_eq!(preprocess(&reread, &PreprocessConfig::default()), preprocess(&score, &PreprocessConfig::default()));
    }
}
