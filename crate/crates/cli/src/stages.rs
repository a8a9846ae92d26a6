//! Pipeline stages. Each stage reads the previous stage's directory under
//! the work dir and rewrites its own:
//!
//! ```text
//! ingest/<id>.json                    raw scores, manifest.csv
//! preprocess/<id>.json                clean 4/4 segments, report.csv
//! tension/<id>.csv                    per-note tension
//! extract/<strategy>/<id>.json        skeleton annotations, summary.csv
//! tokens/<strategy>/{skeleton,melody}/<id>.txt, vocab.txt
//! models/{skeleton,inpaint}.ckpt      checkpoints, *_progress.csv
//! generate/<id>.{txt,skeleton.txt,json,mid}, summary.csv
//! evaluate/{oa,skeleton_stats,skeleton_pieces}.csv
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use wuyun_core::eval::{corpus_overlap, one_tailed_paired_t, one_tailed_t, skeleton_stats, TTest};
use wuyun_core::json::{
    clean_from_json, clean_to_json, schema_of, score_from_json, score_to_json, skeleton_from_json, skeleton_to_json,
    CLEAN_SCHEMA,
};
use wuyun_core::memidi::{detokenize, from_text, tokenize, MeMidiSequence, Token, Vocabulary};
use wuyun_core::preprocess::{preprocess as clean, CleanScore, PreprocessConfig};
use wuyun_core::score::PitchClass;
use wuyun_core::skeleton::{extract as extract_skeleton, SkeletonAnnotation, Strategy};
use wuyun_core::smf::read_smf;
use wuyun_core::tension::{tension_profile, SpiralParams};
use wuyun_neuro::checkpoint::Checkpoint;
use wuyun_neuro::inpaint::{inpaint, note_events, ChordMode};
use wuyun_neuro::sample::{sample_skeleton, Sampler};
use wuyun_neuro::train::{Example, ProgressRow, Trainer};
use wuyun_neuro::{Model, ModelConfig};

use crate::artifact::{
    csv_text, file_id, list_nonempty, midi_bytes, read, sequence_text, stem, write, write_csv, write_json, Provenance,
};
use crate::config::{PipelineConfig, TrainSettings};
use crate::error::{at, config, data, missing, CliError, Result};

pub struct Ctx {
    pub cfg: PipelineConfig,
    pub hash: String,
    pub vocab: Vocabulary,
}

impl Ctx {
    pub fn new(cfg: PipelineConfig) -> Self {
        let hash = cfg.hash();
        Ctx { cfg, hash, vocab: Vocabulary::build() }
    }

    pub fn prov(&self, stage: &str) -> Provenance {
        Provenance::new(&self.hash, self.cfg.seed, stage)
    }

    pub fn dir(&self, sub: &str) -> PathBuf {
        self.cfg.work_dir.join(sub)
    }

    fn strategy_dir(&self) -> Result<String> {
        Ok(file_id(&self.cfg.strategy()?.to_string()))
    }

    fn tokens_dir(&self) -> Result<PathBuf> {
        Ok(self.dir("tokens").join(self.strategy_dir()?))
    }

    /// Clear and recreate a stage output directory.
    fn fresh(&self, sub: &str) -> Result<PathBuf> {
        let d = self.dir(sub);
        if d.exists() {
            fs::remove_dir_all(&d)?;
        }
        fs::create_dir_all(&d)?;
        Ok(d)
    }
}

/// Per-piece seed derived from the run seed and the piece id.
pub fn piece_seed(seed: u64, id: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(id.as_bytes());
    u64::from_le_bytes(h.finalize()[..8].try_into().expect("8 bytes"))
}

fn clean_corpus(dir: &Path) -> Result<Vec<(String, CleanScore)>> {
    let mut out = Vec::new();
    for f in list_nonempty(dir, &[".json"])? {
        let text = read(&f)?;
        if schema_of(&text).as_deref() != Some(CLEAN_SCHEMA) {
            continue;
        }
        out.push((stem(&f), clean_from_json(&text).map_err(at(&f))?));
    }
    if out.is_empty() {
        return Err(missing(format!("no clean score documents in {}", dir.display())));
    }
    Ok(out)
}

// ---------------------------------------------------------------------------

pub fn ingest(ctx: &Ctx) -> Result<String> {
    let input =
        ctx.cfg.input.clone().ok_or_else(|| config("ingest needs an input directory (--input or input = ...)"))?;
    let files = list_nonempty(&input, &[".mid", ".midi", ".json"])?;
    let out = ctx.fresh("ingest")?;
    let p = ctx.prov("ingest");
    let mut rows = Vec::new();
    let mut ok = 0;
    for f in &files {
        let id = file_id(&stem(f));
        let name = f.file_name().and_then(|n| n.to_str()).unwrap_or("").to_string();
        let parsed = if name.to_ascii_lowercase().ends_with(".json") {
            score_from_json(&read(f)?)
        } else {
            read_smf(&fs::read(f)?)
        };
        match parsed {
            Ok(mut s) => {
                s.source_id = id.clone();
                write_json(&out.join(format!("{id}.json")), &score_to_json(&s), &p)?;
                rows.push(vec![name, id, s.notes.len().to_string(), "ok".into(), String::new()]);
                ok += 1;
            }
            Err(e) => rows.push(vec![name, id, "0".into(), "error".into(), e.to_string()]),
        }
    }
    write_csv(&out.join("manifest.csv"), &p, &["file", "id", "notes", "status", "detail"], &rows)?;
    if ok == 0 {
        return Err(data(format!("none of the {} input files could be read", files.len())));
    }
    Ok(format!("ingest: {ok} of {} files read", files.len()))
}

pub fn preprocess(ctx: &Ctx, report: Option<&Path>) -> Result<String> {
    let files = list_nonempty(&ctx.dir("ingest"), &[".json"])?;
    let out = ctx.fresh("preprocess")?;
    let p = ctx.prov("preprocess");
    let pc = PreprocessConfig { estimate_key: ctx.cfg.estimate_key };
    let mut rows = Vec::new();
    let mut kept = 0;
    for f in &files {
        let score = score_from_json(&read(f)?).map_err(at(f))?;
        for (k, seg) in clean(&score, &pc).into_iter().enumerate() {
            match seg {
                Ok((c, r)) => {
                    let id = file_id(&c.source_id);
                    write_json(&out.join(format!("{id}.json")), &clean_to_json(&c), &p)?;
                    rows.push(vec![
                        score.source_id.clone(),
                        k.to_string(),
                        id,
                        "ok".into(),
                        r.notes_in.to_string(),
                        r.notes_kept.to_string(),
                        r.notes_dropped.to_string(),
                        r.triplets.to_string(),
                        r.max_onset_shift.to_string(),
                        r.mean_onset_shift.to_string(),
                        String::new(),
                    ]);
                    kept += 1;
                }
                Err(e) => {
                    let mut row = vec![score.source_id.clone(), k.to_string(), String::new(), "rejected".into()];
                    row.extend(std::iter::repeat_n(String::new(), 6));
                    row.push(e.to_string());
                    rows.push(row);
                }
            }
        }
    }
    let header = [
        "piece",
        "segment",
        "id",
        "status",
        "notes_in",
        "notes_kept",
        "notes_dropped",
        "triplets",
        "max_onset_shift",
        "mean_onset_shift",
        "detail",
    ];
    let report_path = report.map(Path::to_path_buf).unwrap_or_else(|| out.join("report.csv"));
    write_csv(&report_path, &p, &header, &rows)?;
    if kept == 0 {
        return Err(data("every segment was rejected"));
    }
    Ok(format!("preprocess: {kept} clean segments from {} pieces", files.len()))
}

pub fn tension(ctx: &Ctx) -> Result<String> {
    let corpus = clean_corpus(&ctx.dir("preprocess"))?;
    let out = ctx.fresh("tension")?;
    let p = ctx.prov("tension");
    let params = SpiralParams::default();
    for (id, c) in &corpus {
        let t = tension_profile(&c.notes, c.tonality, &params);
        let rows: Vec<Vec<String>> = c
            .notes
            .iter()
            .zip(&t)
            .enumerate()
            .map(|(i, (n, v))| {
                vec![
                    i.to_string(),
                    n.onset.to_string(),
                    n.pitch.to_string(),
                    PitchClass::of_pitch(n.pitch).name().to_string(),
                    v.to_string(),
                ]
            })
            .collect();
        write_csv(&out.join(format!("{id}.csv")), &p, &["index", "onset", "pitch", "pitch_class", "tension"], &rows)?;
    }
    Ok(format!("tension: {} pieces", corpus.len()))
}

pub fn extract(ctx: &Ctx) -> Result<String> {
    let strategy = ctx.cfg.strategy()?;
    let corpus = clean_corpus(&ctx.dir("preprocess"))?;
    let out = ctx.fresh(&format!("extract/{}", ctx.strategy_dir()?))?;
    let p = ctx.prov("extract");
    let mut rows = Vec::new();
    for (id, c) in &corpus {
        let ann = extract_skeleton(strategy, c, piece_seed(ctx.cfg.seed, id))?;
        write_json(&out.join(format!("{id}.json")), &skeleton_to_json(&ann, c), &p)?;
        let selected = ann.mask.iter().filter(|&&m| m).count();
        rows.push(vec![id.clone(), c.notes.len().to_string(), selected.to_string(), ann.proportion().to_string()]);
    }
    write_csv(&out.join("summary.csv"), &p, &["id", "notes", "selected", "proportion"], &rows)?;
    Ok(format!("extract: {strategy} skeletons for {} pieces", corpus.len()))
}

pub fn tokenize_stage(ctx: &Ctx) -> Result<String> {
    let src = ctx.dir("extract").join(ctx.strategy_dir()?);
    let files = list_nonempty(&src, &[".json"])?;
    let out = ctx.tokens_dir()?;
    if out.exists() {
        fs::remove_dir_all(&out)?;
    }
    let p = ctx.prov("tokenize");
    for f in &files {
        let id = stem(f);
        let (ann, c) = skeleton_from_json(&read(f)?).map_err(at(f))?;
        let sk = ann.skeleton_score(&c)?;
        let skeleton = tokenize(&sk, true, &ctx.vocab).map_err(at(f))?;
        let melody = tokenize(&c, false, &ctx.vocab).map_err(at(f))?;
        write(&out.join("skeleton").join(format!("{id}.txt")), sequence_text(&skeleton, &p).as_bytes())?;
        write(&out.join("melody").join(format!("{id}.txt")), sequence_text(&melody, &p).as_bytes())?;
    }
    let vocab = format!("# vocab_hash: {}\n# {}\n{}", ctx.vocab.hash_hex(), p.line(), ctx.vocab.report());
    write(&out.join("vocab.txt"), vocab.as_bytes())?;
    Ok(format!("tokenize: {} skeleton/melody pairs", files.len()))
}

pub fn detokenize_file(ctx: &Ctx, input: &Path, output: Option<&Path>) -> Result<String> {
    let seq = from_text(&read(input)?).map_err(at(input))?;
    let c = detokenize(&seq, &ctx.vocab).map_err(at(input))?;
    let out = output.map(Path::to_path_buf).unwrap_or_else(|| input.with_extension("json"));
    let p = ctx.prov("detokenize");
    if out.extension().is_some_and(|e| e.eq_ignore_ascii_case("mid") || e.eq_ignore_ascii_case("midi")) {
        write(&out, &midi_bytes(&c, &p))?;
    } else {
        write_json(&out, &clean_to_json(&c), &p)?;
    }
    Ok(format!("detokenize: {} notes -> {}", c.notes.len(), out.display()))
}

// ---------------------------------------------------------------------------
// Training

fn read_sequences(dir: &Path, vocab: &Vocabulary) -> Result<BTreeMap<String, MeMidiSequence>> {
    let mut out = BTreeMap::new();
    for f in list_nonempty(dir, &[".txt"])? {
        let seq = from_text(&read(&f)?).map_err(at(&f))?;
        seq.validate(vocab).map_err(at(&f))?;
        out.insert(stem(&f), seq);
    }
    Ok(out)
}

/// Vocabulary hash recorded by the tokenize stage.
fn data_vocab_hash(tokens: &Path) -> Result<[u8; 32]> {
    let f = tokens.join("vocab.txt");
    let text = read(&f)?;
    let hex_hash = text
        .lines()
        .find_map(|l| l.strip_prefix("# vocab_hash:"))
        .ok_or_else(|| data(format!("{}: no vocabulary hash", f.display())))?;
    let bytes = hex::decode(hex_hash.trim()).map_err(at(&f))?;
    bytes.try_into().map_err(|_| data(format!("{}: vocabulary hash is not 32 bytes", f.display())))
}

fn progress_rows(rows: &[ProgressRow]) -> Vec<Vec<String>> {
    rows.iter().map(|r| r.csv().split(',').map(str::to_string).collect()).collect()
}

/// Earlier progress rows up to `step`, for resumed runs.
fn earlier_progress(path: &Path, step: u64) -> Vec<Vec<String>> {
    let Ok(text) = fs::read_to_string(path) else { return Vec::new() };
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .filter(|l| l.split(',').next().and_then(|s| s.parse::<u64>().ok()).is_some_and(|s| s <= step))
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

struct Run<'a> {
    ctx: &'a Ctx,
    name: &'a str,
    stage: &'a str,
    model: &'a ModelConfig,
    settings: &'a TrainSettings,
    resume: bool,
}

impl Run<'_> {
    fn checkpoint_path(&self) -> PathBuf {
        self.ctx.dir("models").join(format!("{}.ckpt", self.name))
    }

    fn save(&self, t: &Trainer) -> Result<()> {
        let mut ck = Checkpoint::from_trainer(t);
        ck.provenance = self.ctx.prov(self.stage).map();
        write(&self.checkpoint_path(), &ck.to_bytes())
    }

    fn trainer(&self) -> Result<Trainer> {
        let path = self.checkpoint_path();
        if self.resume && path.exists() {
            let ck = Checkpoint::from_bytes(&fs::read(&path)?).map_err(at(&path))?;
            ck.check_vocab(self.ctx.vocab.hash())?;
            if &ck.config != self.model {
                return Err(config(format!("{} was trained with a different model configuration", path.display())));
            }
            return Ok(ck.trainer()?);
        }
        let model = Model::new(self.model.clone(), self.ctx.cfg.seed)?;
        Ok(Trainer::new(model, self.settings.train_config(0).adam, self.ctx.cfg.seed, &self.ctx.vocab))
    }

    fn train(&self, data: &[Example], data_hash: [u8; 32]) -> Result<String> {
        let mut trainer = self.trainer()?;
        let start = trainer.step;
        let progress = self.ctx.dir("models").join(format!("{}_progress.csv", self.name));
        let mut rows = if start > 0 { earlier_progress(&progress, start) } else { Vec::new() };
        let tc = self.settings.train_config(self.ctx.cfg.seed);
        let every = self.settings.checkpoint_every;
        let log_every = (tc.steps / 20).max(1);
        let p = self.ctx.prov(self.stage);
        let header = ["step", "loss", "accuracy", "tokens_per_sec"];
        let mut seen = Vec::new();
        let curve = trainer.train(data, data_hash, &self.ctx.vocab, &tc, |t, row| -> Result<()> {
            seen.push(*row);
            if row.step % log_every == 0 {
                eprintln!("{} step {} loss {:.4} accuracy {:.4}", self.name, row.step, row.loss, row.accuracy);
            }
            if every > 0 && row.step % every == 0 {
                self.save(t)?;
                let mut all = rows.clone();
                all.extend(progress_rows(&seen));
                write_csv(&progress, &p, &header, &all)?;
            }
            Ok(())
        })?;
        self.save(&trainer)?;
        rows.extend(progress_rows(&curve));
        write_csv(&progress, &p, &header, &rows)?;
        Ok(match curve.last() {
            Some(r) => format!(
                "{}: {} steps, loss {:.4}, accuracy {:.4} -> {}",
                self.stage,
                trainer.step,
                r.loss,
                r.accuracy,
                self.checkpoint_path().display()
            ),
            None => format!("{}: already at step {}", self.stage, trainer.step),
        })
    }
}

pub fn train_skeleton(ctx: &Ctx, resume: bool) -> Result<String> {
    let tokens = ctx.tokens_dir()?;
    let seqs = read_sequences(&tokens.join("skeleton"), &ctx.vocab)?;
    let data: Vec<Example> = seqs.into_values().map(Example::Lm).collect();
    let run =
        Run { ctx, name: "skeleton", stage: "train-skeleton", model: &ctx.cfg.lm, settings: &ctx.cfg.train_lm, resume };
    run.train(&data, data_vocab_hash(&tokens)?)
}

pub fn train_inpaint(ctx: &Ctx, resume: bool) -> Result<String> {
    let tokens = ctx.tokens_dir()?;
    let skeletons = read_sequences(&tokens.join("skeleton"), &ctx.vocab)?;
    let melodies = read_sequences(&tokens.join("melody"), &ctx.vocab)?;
    let limit = ctx.cfg.inpaint.context_len;
    let mut data = Vec::new();
    let mut skipped = 0;
    for (id, melody) in melodies {
        let skeleton = skeletons.get(&id).ok_or_else(|| missing(format!("no skeleton sequence for {id}")))?.clone();
        if skeleton.tokens.len() > limit {
            eprintln!(
                "train-inpaint: skipping {id}: skeleton has {} tokens, context_len is {limit}",
                skeleton.tokens.len()
            );
            skipped += 1;
            continue;
        }
        data.push(Example::Pair { skeleton, melody });
    }
    if data.is_empty() {
        return Err(data_err_all_skipped(skipped));
    }
    let run = Run {
        ctx,
        name: "inpaint",
        stage: "train-inpaint",
        model: &ctx.cfg.inpaint,
        settings: &ctx.cfg.train_inpaint,
        resume,
    };
    run.train(&data, data_vocab_hash(&tokens)?)
}

fn data_err_all_skipped(n: usize) -> CliError {
    data(format!("all {n} skeletons exceed the encoder context length"))
}

// ---------------------------------------------------------------------------
// Generation

/// Tokens of the first `bars` bars, without EOS.
pub fn head_bars(tokens: &[Token], bars: u32) -> Vec<Token> {
    let mut seen = 0;
    let mut out = Vec::new();
    for t in tokens {
        match t {
            Token::Eos => break,
            Token::Bar => {
                seen += 1;
                if seen > bars {
                    break;
                }
            }
            _ => {}
        }
        out.push(*t);
    }
    out
}

fn truncated(seq: &MeMidiSequence, bars: u32) -> MeMidiSequence {
    let mut tokens = head_bars(&seq.tokens, bars);
    tokens.push(Token::Eos);
    MeMidiSequence { tokens, is_skeleton: seq.is_skeleton, meta: seq.meta.clone() }
}

fn load_model(ctx: &Ctx, name: &str) -> Result<Model<f32>> {
    let path = ctx.dir("models").join(format!("{name}.ckpt"));
    if !path.exists() {
        return Err(missing(format!("{} not found (run train-{name} first)", path.display())));
    }
    let ck = Checkpoint::from_bytes(&fs::read(&path)?).map_err(at(&path))?;
    ck.check_vocab(ctx.vocab.hash())?;
    Ok(ck.model()?)
}

fn contains(skeleton: &[Token], melody: &[Token]) -> bool {
    let have: BTreeSet<_> = note_events(melody).into_iter().map(|e| (e.bar, e.pos, e.token.to_string())).collect();
    note_events(skeleton).into_iter().all(|e| have.contains(&(e.bar, e.pos, e.token.to_string())))
}

pub fn generate(ctx: &Ctx) -> Result<String> {
    let cfg = &ctx.cfg;
    let tokens = ctx.tokens_dir()?;
    let skeletons = read_sequences(&tokens.join("skeleton"), &ctx.vocab)?;
    let melodies = read_sequences(&tokens.join("melody"), &ctx.vocab)?;
    let inpainter = load_model(ctx, "inpaint")?;
    let lm = if cfg.real_skeleton { None } else { Some(load_model(ctx, "skeleton")?) };
    let out = ctx.fresh("generate")?;
    let p = ctx.prov("generate");
    let max_bars = cfg.sampler.max_bars;
    let count = if cfg.count == 0 { melodies.len() } else { cfg.count.min(melodies.len()) };
    let mut rows = Vec::new();
    for (id, reference) in melodies.iter().take(count) {
        let real = skeletons.get(id).ok_or_else(|| missing(format!("no skeleton sequence for {id}")))?;
        let seed = piece_seed(cfg.seed, id);
        let reference = truncated(reference, max_bars);
        let real = truncated(real, max_bars);
        let mut skel_sampler = Sampler::new(cfg.sampler.sampler_config(seed))?;
        let mut skeleton = match &lm {
            None => real.clone(),
            Some(lm) => {
                // The melody prompt fixes its bars completely, so sampling starts on a new bar.
                let mut prompt = head_bars(&real.tokens, cfg.prompt_bars);
                prompt.push(Token::Bar);
                sample_skeleton(lm, &prompt, &mut skel_sampler, &ctx.vocab)?
            }
        };
        skeleton.meta = reference.meta.clone();
        let chords = if cfg.copy_chords {
            ChordMode::Copy(detokenize(&reference, &ctx.vocab)?.chords)
        } else {
            ChordMode::Sample
        };
        let mut sampler = Sampler::new(cfg.sampler.sampler_config(seed.wrapping_add(1)))?;
        let prompt = head_bars(&reference.tokens, cfg.prompt_bars);
        let mut melody = inpaint(&inpainter, &skeleton, &prompt, &chords, &mut sampler, &ctx.vocab)?;
        if let Some(m) = melody.meta.as_mut() {
            m.source_id = format!("{id}-generated");
        }
        let score = detokenize(&melody, &ctx.vocab)?;
        write(&out.join(format!("{id}.txt")), sequence_text(&melody, &p).as_bytes())?;
        write(&out.join(format!("{id}.skeleton.txt")), sequence_text(&skeleton, &p).as_bytes())?;
        write_json(&out.join(format!("{id}.json")), &clean_to_json(&score), &p)?;
        write(&out.join(format!("{id}.mid")), &midi_bytes(&score, &p))?;
        let bars = melody.tokens.iter().filter(|t| matches!(t, Token::Bar)).count();
        rows.push(vec![
            id.clone(),
            bars.to_string(),
            score.notes.len().to_string(),
            note_events(&skeleton.tokens).len().to_string(),
            contains(&skeleton.tokens, &melody.tokens).to_string(),
            if lm.is_some() { skel_sampler.fallback_rate().to_string() } else { String::new() },
            sampler.fallback_rate().to_string(),
        ]);
    }
    let header = [
        "id",
        "bars",
        "notes",
        "skeleton_notes",
        "skeleton_contained",
        "skeleton_fallback_rate",
        "inpaint_fallback_rate",
    ];
    write_csv(&out.join("summary.csv"), &p, &header, &rows)?;
    let mode = if cfg.real_skeleton { "real" } else { "sampled" };
    Ok(format!("generate: {} melodies from {mode} skeletons -> {}", rows.len(), out.display()))
}

// ---------------------------------------------------------------------------
// Evaluation

pub fn evaluate(
    ctx: &Ctx,
    generated: Option<&Path>,
    reference: Option<&Path>,
    strategy: Option<Strategy>,
) -> Result<String> {
    let gen_dir = generated.map(Path::to_path_buf).unwrap_or_else(|| ctx.dir("generate"));
    let ref_dir = reference.map(Path::to_path_buf).unwrap_or_else(|| ctx.dir("preprocess"));
    let gen: Vec<CleanScore> = clean_corpus(&gen_dir)?.into_iter().map(|(_, c)| c).collect();
    let refs = clean_corpus(&ref_dir)?;
    let ref_scores: Vec<CleanScore> = refs.iter().map(|(_, c)| c.clone()).collect();
    let out = ctx.fresh("evaluate")?;
    let p = ctx.prov("evaluate");

    let oa = corpus_overlap(&gen, &ref_scores, &ctx.vocab)?;
    let mut rows: Vec<Vec<String>> = oa.iter().map(|(f, v)| vec![f.name().to_string(), v.to_string()]).collect();
    let mean = oa.iter().map(|(_, v)| v).sum::<f64>() / oa.len() as f64;
    rows.push(vec!["mean".into(), mean.to_string()]);
    write_csv(&out.join("oa.csv"), &p, &["feature", "overlapped_area"], &rows)?;

    let strategies: Vec<Strategy> = match strategy {
        Some(s) => vec![s],
        None => Strategy::STRUCTURAL.to_vec(),
    };
    let mut summary = Vec::new();
    let mut pieces = Vec::new();
    for s in strategies {
        let anns: Vec<SkeletonAnnotation> = refs
            .iter()
            .map(|(id, c)| extract_skeleton(s, c, piece_seed(ctx.cfg.seed, id)))
            .collect::<std::result::Result<_, _>>()?;
        let pairs: Vec<(&CleanScore, &SkeletonAnnotation)> = ref_scores.iter().zip(&anns).collect();
        let st = skeleton_stats(s, &pairs);
        let sum =
            |f: fn(&wuyun_core::eval::PieceSkeletonStats) -> usize| st.pieces.iter().map(f).sum::<usize>().to_string();
        summary.push(vec![
            s.to_string(),
            st.pieces.len().to_string(),
            st.total_notes().to_string(),
            st.total_selected().to_string(),
            st.proportion().to_string(),
            st.mean_piece_proportion().to_string(),
            sum(|x| x.metrical),
            sum(|x| x.agogic),
            sum(|x| x.syncopation),
        ]);
        for x in &st.pieces {
            pieces.push(vec![
                s.to_string(),
                x.source_id.clone(),
                x.notes.to_string(),
                x.selected.to_string(),
                x.proportion().to_string(),
                x.metrical.to_string(),
                x.agogic.to_string(),
                x.syncopation.to_string(),
            ]);
        }
    }
    let header = [
        "strategy",
        "pieces",
        "notes",
        "selected",
        "proportion",
        "mean_piece_proportion",
        "metrical",
        "agogic",
        "syncopation",
    ];
    write_csv(&out.join("skeleton_stats.csv"), &p, &header, &summary)?;
    let header = ["strategy", "source_id", "notes", "selected", "proportion", "metrical", "agogic", "syncopation"];
    write_csv(&out.join("skeleton_pieces.csv"), &p, &header, &pieces)?;
    Ok(format!("evaluate: {} generated vs {} reference pieces, mean overlapped area {mean:.4}", gen.len(), refs.len()))
}

pub const METRICS: [&str; 5] = ["Rhythm", "Richness", "Structure", "Expectation", "Overall"];

#[derive(Debug, Clone, PartialEq, serde::Deserialize)]
pub struct Rating {
    pub piece_id: String,
    pub system_id: String,
    pub metric: String,
    pub score: f64,
    pub rater_id: String,
}

pub fn read_ratings(path: &Path) -> Result<Vec<Rating>> {
    let mut r =
        csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_path(path).map_err(|e| {
            match e.kind() {
                csv::ErrorKind::Io(io) if io.kind() == std::io::ErrorKind::NotFound => {
                    missing(format!("{}: not found", path.display()))
                }
                _ => data(format!("{}: {e}", path.display())),
            }
        })?;
    let mut out = Vec::new();
    for (i, row) in r.deserialize::<Rating>().enumerate() {
        let row = row.map_err(at(path))?;
        if !METRICS.contains(&row.metric.as_str()) {
            return Err(data(format!("{} row {}: unknown metric {:?}", path.display(), i + 1, row.metric)));
        }
        if !(1.0..=5.0).contains(&row.score) {
            return Err(data(format!("{} row {}: score {} outside 1..5", path.display(), i + 1, row.score)));
        }
        out.push(row);
    }
    Ok(out)
}

/// Per-rater mean scores, for the paired test.
fn rater_means(rows: &[&Rating]) -> BTreeMap<String, f64> {
    let mut acc: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for r in rows {
        let e = acc.entry(r.rater_id.clone()).or_insert((0.0, 0));
        e.0 += r.score;
        e.1 += 1;
    }
    acc.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect()
}

pub struct TTestRequest<'a> {
    pub a: Option<&'a str>,
    pub b: Option<&'a str>,
    pub metric: Option<&'a str>,
    pub paired: bool,
}

pub fn ttest(ctx: &Ctx, ratings: &Path, req: &TTestRequest, out: Option<&Path>) -> Result<String> {
    let rows = read_ratings(ratings)?;
    let systems: BTreeSet<&str> = rows.iter().map(|r| r.system_id.as_str()).collect();
    for s in [req.a, req.b].into_iter().flatten() {
        if !systems.contains(s) {
            return Err(data(format!("system {s:?} has no ratings")));
        }
    }
    let metrics: Vec<&str> = match req.metric {
        Some(m) if METRICS.contains(&m) => vec![m],
        Some(m) => return Err(config(format!("unknown metric {m:?}; expected one of {}", METRICS.join(", ")))),
        None => METRICS.iter().copied().filter(|m| rows.iter().any(|r| r.metric == *m)).collect(),
    };
    let firsts: Vec<&str> = req.a.map_or_else(|| systems.iter().copied().collect(), |a| vec![a]);
    let mut table = Vec::new();
    for metric in metrics {
        for &a in &firsts {
            let seconds: Vec<&str> =
                req.b.map_or_else(|| systems.iter().copied().filter(|&s| s != a).collect(), |b| vec![b]);
            for b in seconds {
                let pick = |s: &str| rows.iter().filter(|r| r.metric == metric && r.system_id == s).collect::<Vec<_>>();
                let (ra, rb) = (pick(a), pick(b));
                let (xa, xb): (Vec<f64>, Vec<f64>) = if req.paired {
                    let (ma, mb) = (rater_means(&ra), rater_means(&rb));
                    ma.iter().filter_map(|(k, &v)| mb.get(k).map(|&w| (v, w))).unzip()
                } else {
                    (ra.iter().map(|r| r.score).collect(), rb.iter().map(|r| r.score).collect())
                };
                let r: TTest = if req.paired { one_tailed_paired_t(&xa, &xb)? } else { one_tailed_t(&xa, &xb)? };
                let mean = |x: &[f64]| x.iter().sum::<f64>() / x.len() as f64;
                table.push(vec![
                    metric.to_string(),
                    a.to_string(),
                    b.to_string(),
                    xa.len().to_string(),
                    xb.len().to_string(),
                    mean(&xa).to_string(),
                    mean(&xb).to_string(),
                    r.t.to_string(),
                    r.df.to_string(),
                    r.p.to_string(),
                    if req.paired { "paired" } else { "welch" }.to_string(),
                ]);
            }
        }
    }
    let header = ["metric", "system_a", "system_b", "n_a", "n_b", "mean_a", "mean_b", "t", "df", "p", "test"];
    let p = ctx.prov("ttest");
    let text = csv_text(&p, &header, &table)?;
    match out {
        Some(o) => {
            write(o, text.as_bytes())?;
            Ok(format!("ttest: {} comparisons -> {}", table.len(), o.display()))
        }
        None => Ok(text.trim_end().to_string()),
    }
}

/// Run every stage enabled in the configuration, in pipeline order.
pub fn run_all(ctx: &Ctx) -> Result<Vec<String>> {
    let s = &ctx.cfg.stages;
    let mut log = Vec::new();
    let steps: [(bool, &dyn Fn() -> Result<String>); 9] = [
        (s.ingest, &|| ingest(ctx)),
        (s.preprocess, &|| preprocess(ctx, None)),
        (s.tension, &|| tension(ctx)),
        (s.extract, &|| extract(ctx)),
        (s.tokenize, &|| tokenize_stage(ctx)),
        (s.train_skeleton, &|| train_skeleton(ctx, false)),
        (s.train_inpaint, &|| train_inpaint(ctx, false)),
        (s.generate, &|| generate(ctx)),
        (s.evaluate, &|| evaluate(ctx, None, None, None)),
    ];
    for (on, f) in steps {
        if on {
            let line = f()?;
            println!("{line}");
            log.push(line);
        }
    }
    Ok(log)
}
