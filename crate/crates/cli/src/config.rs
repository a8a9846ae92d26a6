//! Pipeline configuration: defaults, config files and overrides.
//!
//! A config file is either a JSON object or `key = value` lines with dotted
//! keys (`lm.n_layers = 3`). Values are read as JSON when they parse as
//! JSON and as strings otherwise. Later sources win: defaults, config file,
//! `WUYUN_WORK_DIR`, `--set key=value`, then dedicated flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};
use wuyun_core::skeleton::Strategy;
use wuyun_neuro::optim::AdamConfig;
use wuyun_neuro::sample::SamplerConfig;
use wuyun_neuro::train::TrainConfig;
use wuyun_neuro::{ModelConfig, Role};

use crate::error::{config, Result};

pub const WORK_DIR_ENV: &str = "WUYUN_WORK_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    Tiny,
    Full,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSettings {
    pub steps: u64,
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub workers: usize,
    pub target_accuracy: Option<f64>,
    /// Write the checkpoint every this many steps; 0 writes it at the end only.
    pub checkpoint_every: u64,
}

impl TrainSettings {
    fn new(batch_size: usize) -> Self {
        let a = AdamConfig::default();
        TrainSettings {
            steps: 2000,
            batch_size,
            lr: a.lr,
            beta1: a.beta1,
            beta2: a.beta2,
            eps: a.eps,
            workers: 1,
            target_accuracy: None,
            checkpoint_every: 0,
        }
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            steps: self.steps,
            batch_size: self.batch_size,
            adam: AdamConfig { lr: self.lr, beta1: self.beta1, beta2: self.beta2, eps: self.eps },
            seed,
            target_accuracy: self.target_accuracy,
            workers: self.workers,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerSettings {
    pub top_k: usize,
    pub temperature: f64,
    pub max_bars: u32,
}

impl Default for SamplerSettings {
    fn default() -> Self {
        let s = SamplerConfig::default();
        SamplerSettings { top_k: s.top_k, temperature: s.temperature, max_bars: s.max_bars }
    }
}

impl SamplerSettings {
    pub fn sampler_config(&self, seed: u64) -> SamplerConfig {
        SamplerConfig { top_k: self.top_k, temperature: self.temperature, max_bars: self.max_bars, seed }
    }
}

/// Stages executed by `run`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Stages {
    pub ingest: bool,
    pub preprocess: bool,
    pub tension: bool,
    pub extract: bool,
    pub tokenize: bool,
    pub train_skeleton: bool,
    pub train_inpaint: bool,
    pub generate: bool,
    pub evaluate: bool,
}

impl Default for Stages {
    fn default() -> Self {
        Stages {
            ingest: true,
            preprocess: true,
            tension: true,
            extract: true,
            tokenize: true,
            train_skeleton: true,
            train_inpaint: true,
            generate: true,
            evaluate: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// Directory of `.mid`/`.midi` files or score JSON documents.
    pub input: Option<PathBuf>,
    pub work_dir: PathBuf,
    pub strategy: String,
    pub seed: u64,
    pub estimate_key: bool,
    pub model_scale: Scale,
    pub lm: ModelConfig,
    pub inpaint: ModelConfig,
    pub train_lm: TrainSettings,
    pub train_inpaint: TrainSettings,
    pub sampler: SamplerSettings,
    /// Bars of the reference piece used as prompt when generating.
    pub prompt_bars: u32,
    /// Pieces to generate; 0 means one per reference piece.
    pub count: usize,
    pub real_skeleton: bool,
    pub copy_chords: bool,
    pub stages: Stages,
}

impl PipelineConfig {
    pub fn defaults(scale: Scale) -> Self {
        let model = |role| match scale {
            Scale::Tiny => ModelConfig::tiny(role),
            Scale::Full => ModelConfig::full(role),
        };
        PipelineConfig {
            input: None,
            work_dir: PathBuf::from("work"),
            strategy: Strategy::Rhythm.to_string(),
            seed: 0,
            estimate_key: false,
            model_scale: scale,
            lm: model(Role::SkeletonLm),
            inpaint: model(Role::InpaintSeq2seq),
            train_lm: TrainSettings::new(20),
            train_inpaint: TrainSettings::new(44),
            sampler: SamplerSettings::default(),
            prompt_bars: 4,
            count: 0,
            real_skeleton: false,
            copy_chords: false,
            stages: Stages::default(),
        }
    }

    pub fn strategy(&self) -> Result<Strategy> {
        self.strategy.parse().map_err(|e| config(format!("strategy: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        self.strategy()?;
        for (name, m, role) in [("lm", &self.lm, Role::SkeletonLm), ("inpaint", &self.inpaint, Role::InpaintSeq2seq)] {
            if m.role != role {
                return Err(config(format!("{name}.role must be {}", role.name())));
            }
            m.validate().map_err(|e| config(format!("{name}: {e}")))?;
        }
        for (name, t) in [("train_lm", &self.train_lm), ("train_inpaint", &self.train_inpaint)] {
            if t.batch_size == 0 {
                return Err(config(format!("{name}.batch_size must be at least 1")));
            }
            if !(t.lr >= 0.0 && t.lr.is_finite()) {
                return Err(config(format!("{name}.lr must be a finite non-negative number")));
            }
        }
        self.sampler.sampler_config(0).validate().map_err(|e| config(format!("sampler: {e}")))?;
        if self.prompt_bars >= self.sampler.max_bars {
            return Err(config("prompt_bars must be smaller than sampler.max_bars"));
        }
        Ok(())
    }

    /// SHA-256 over the settings, excluding file locations.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.input = None;
        c.work_dir = PathBuf::new();
        let bytes = serde_json::to_vec(&c).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}

/// Parse a config file into a JSON object.
pub fn parse_file(text: &str) -> Result<Value> {
    let trimmed = text.trim_start();
    if trimmed.starts_with('{') {
        let v: Value = serde_json::from_str(trimmed).map_err(|e| config(format!("config JSON: {e}")))?;
        return Ok(v);
    }
    let mut root = Value::Object(Map::new());
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) =
            line.split_once('=').ok_or_else(|| config(format!("config line {}: expected key = value", n + 1)))?;
        set_path(&mut root, k.trim(), parse_value(v.trim()))?;
    }
    Ok(root)
}

pub fn parse_value(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

pub fn set_path(root: &mut Value, key: &str, value: Value) -> Result<()> {
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(config(format!("bad config key {key:?}")));
    }
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    for part in &parts[..parts.len() - 1] {
        let obj = node.as_object_mut().ok_or_else(|| config(format!("config key {key:?} nests into a value")))?;
        node = obj.entry(part.to_string()).or_insert_with(|| Value::Object(Map::new()));
    }
    let obj = node.as_object_mut().ok_or_else(|| config(format!("config key {key:?} nests into a value")))?;
    obj.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

fn merge(base: &mut Value, overlay: &Value, path: &str) -> Result<()> {
    let Value::Object(over) = overlay else {
        *base = overlay.clone();
        return Ok(());
    };
    let Value::Object(dst) = base else {
        return Err(config(format!("config key {path:?} is not a section")));
    };
    for (k, v) in over {
        let sub = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
        match dst.get_mut(k) {
            None => return Err(config(format!("unknown config key {sub:?}"))),
            Some(slot) if slot.is_object() && v.is_object() => merge(slot, v, &sub)?,
            Some(slot) => *slot = v.clone(),
        }
    }
    Ok(())
}

/// Everything that can override the defaults, in increasing priority.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub file: Option<PathBuf>,
    pub env_work_dir: Option<PathBuf>,
    pub sets: Vec<String>,
    pub flags: Vec<(String, Value)>,
}

pub fn load(o: &Overrides) -> Result<PipelineConfig> {
    let mut overlay = match &o.file {
        Some(p) => parse_file(&read_config(p)?)?,
        None => Value::Object(Map::new()),
    };
    if let Some(w) = &o.env_work_dir {
        set_path(&mut overlay, "work_dir", Value::String(w.display().to_string()))?;
    }
    for s in &o.sets {
        let (k, v) = s.split_once('=').ok_or_else(|| config(format!("--set {s:?}: expected key=value")))?;
        set_path(&mut overlay, k.trim(), parse_value(v.trim()))?;
    }
    for (k, v) in &o.flags {
        set_path(&mut overlay, k, v.clone())?;
    }
    let scale = match overlay.get("model_scale") {
        None => Scale::Tiny,
        Some(v) => serde_json::from_value(v.clone())
            .map_err(|_| config(format!("model_scale {v}: expected \"tiny\" or \"full\"")))?,
    };
    let mut base = serde_json::to_value(PipelineConfig::defaults(scale)).expect("defaults serialize");
    merge(&mut base, &overlay, "")?;
    let cfg: PipelineConfig = serde_json::from_value(base).map_err(|e| config(format!("config: {e}")))?;
    cfg.validate()?;
    Ok(cfg)
}

fn read_config(p: &Path) -> Result<String> {
    std::fs::read_to_string(p).map_err(|e| crate::error::missing(format!("config file {}: {e}", p.display())))
}
