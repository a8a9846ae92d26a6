//! Artifact files and the provenance stamped into each of them.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;
use wuyun_core::memidi::{to_text, MeMidiSequence};
use wuyun_core::preprocess::CleanScore;
use wuyun_core::score::{Score, BAR_TICKS};
use wuyun_core::smf::write_smf_annotated;

use crate::error::{missing, Result};

pub const TOOL: &str = "wuyun";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
    pub stage: String,
}

impl Provenance {
    pub fn new(config_hash: &str, seed: u64, stage: &str) -> Self {
        Provenance {
            tool: TOOL.into(),
            version: VERSION.into(),
            config_hash: config_hash.into(),
            seed,
            stage: stage.into(),
        }
    }

    pub fn line(&self) -> String {
        format!(
            "tool={} version={} config_hash={} seed={} stage={}",
            self.tool, self.version, self.config_hash, self.seed, self.stage
        )
    }

    pub fn map(&self) -> BTreeMap<String, String> {
        BTreeMap::from([
            ("tool".into(), self.tool.clone()),
            ("version".into(), self.version.clone()),
            ("config_hash".into(), self.config_hash.clone()),
            ("seed".into(), self.seed.to_string()),
            ("stage".into(), self.stage.clone()),
        ])
    }
}

/// Write through a temporary file so readers never see a partial artifact.
pub fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension("partial");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Add a `provenance` member to a JSON object document.
pub fn stamp_json(doc: &str, p: &Provenance) -> String {
    let mut v: Value = serde_json::from_str(doc).expect("documents are JSON");
    if let Value::Object(o) = &mut v {
        o.insert("provenance".into(), serde_json::to_value(p).expect("provenance serializes"));
    }
    let mut s = serde_json::to_string_pretty(&v).expect("JSON serializes");
    s.push('\n');
    s
}

pub fn write_json(path: &Path, doc: &str, p: &Provenance) -> Result<()> {
    write(path, stamp_json(doc, p).as_bytes())
}

pub fn write_value<T: Serialize>(path: &Path, value: &T, p: &Provenance) -> Result<()> {
    write_json(path, &serde_json::to_string(value).expect("value serializes"), p)
}

/// CSV text with a `#` provenance line before the header.
pub fn csv_text(p: &Provenance, header: &[&str], rows: &[Vec<String>]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    let body = String::from_utf8(w.into_inner().map_err(|e| crate::error::data(e.to_string()))?).expect("CSV is UTF-8");
    Ok(format!("# {}\n{body}", p.line()))
}

pub fn write_csv(path: &Path, p: &Provenance, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    write(path, csv_text(p, header, rows)?.as_bytes())
}

pub fn sequence_text(seq: &MeMidiSequence, p: &Provenance) -> String {
    format!("# provenance: {}\n{}", serde_json::to_string(p).expect("provenance serializes"), to_text(seq))
}

pub fn clean_to_score(c: &CleanScore) -> Score {
    let mut s = Score::new(c.source_id.clone());
    s.tempo_bpm = c.tempo_bpm;
    s.key = Some(c.tonality.key());
    s.notes = c.notes.iter().map(|n| n.note()).collect();
    s.chords = c.chords.clone();
    s.end_tick = (c.bars * BAR_TICKS).max(s.last_offset());
    s
}

pub fn midi_bytes(c: &CleanScore, p: &Provenance) -> Vec<u8> {
    write_smf_annotated(&clean_to_score(c), &[p.line()])
}

/// File-name-safe form of a piece id; dots are replaced so the first dot
/// of a file name always ends the id.
pub fn file_id(id: &str) -> String {
    let s: String =
        id.chars().map(|c| if c.is_ascii_alphanumeric() || c == '_' || c == '-' { c } else { '_' }).collect();
    if s.is_empty() {
        "piece".into()
    } else {
        s
    }
}

/// Files in `dir` with one of `exts`, sorted by name.
pub fn list(dir: &Path, exts: &[&str]) -> Result<Vec<PathBuf>> {
    if !dir.is_dir() {
        return Err(missing(format!("{} does not exist (run the upstream stage first)", dir.display())));
    }
    let mut out: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .filter(|p| {
            let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
            exts.iter().any(|e| name.to_ascii_lowercase().ends_with(e))
        })
        .collect();
    out.sort();
    Ok(out)
}

/// Like [`list`], but an empty listing is a missing artifact.
pub fn list_nonempty(dir: &Path, exts: &[&str]) -> Result<Vec<PathBuf>> {
    let files = list(dir, exts)?;
    if files.is_empty() {
        return Err(missing(format!("no {} files in {}", exts.join("/"), dir.display())));
    }
    Ok(files)
}

pub fn stem(path: &Path) -> String {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("piece");
    name.split_once('.').map_or(name, |(s, _)| s).to_string()
}

pub fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| missing(format!("{}: {e}", path.display())))
}
