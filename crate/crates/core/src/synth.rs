//! Synthetic corpus generator.
//!
//! Tokens fall into five roles:
//!
//! * carriers    — common tokens that precede entity phrases ("call ...");
//! * twins       — common tokens acoustically adjacent to one tail pair
//!   each (the "O say" / "José" confusion);
//! * fillers     — ordinary common tokens;
//! * heads       — rare tokens appearing as the first token of an entity
//!   phrase, acoustically distinct (the easy onset, like a name's first
//!   sub-word);
//! * tails       — rare tokens appearing as the second token of an entity
//!   phrase. Tails come in pairs: both members of a pair sit a small step
//!   away from the same twin template, so which pair member was said is an
//!   acoustic coin flip that only the bias list can settle.
//!
//! Entity phrases are (head, tail) pairs, and the inventory always contains
//! both members of a tail pair for a given head, keeping the token-level
//! prior flat. In the reference text an entity occurrence is written
//! carrier-head-tail; a "neutral" block is filler-head-twin: it sounds
//! almost like an entity but is common text — the false-alarm bait an
//! always-on bias list falls for.
//!
//! Acoustics: every token id has a fixed random feature template; an
//! utterance's frames are the per-token templates repeated (frames-per-token
//! plus jitter) with i.i.d. Gaussian noise. Everything is a pure function of
//! the config, keyed by (seed, split, index).

use crate::error::{CoreError, Result};
use crate::model::context::ContextPhrase;
use crate::model::AcousticFrames;
use crate::params::rng_for;
use crate::tensor::Tensor;
use base64::Engine;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub vocab: usize,
    pub feat_dim: usize,
    pub frames_per_token: usize,
    pub frame_jitter: usize,
    pub frame_ms: f64,
    pub noise_std: f64,
    pub template_scale: f64,
    /// Distance between a tail template and its twin's template.
    pub tail_twin_gap: f64,
    pub num_carriers: usize,
    pub num_head_tokens: usize,
    pub num_tail_tokens: usize,
    pub num_entities: usize,
    /// Fraction of training utterances containing an entity phrase.
    pub entity_rate: f64,
    /// Fraction of entity occurrences preceded by a carrier token; the rest
    /// follow ordinary fillers, which keeps entity-ness imperfectly
    /// predictable from context alone.
    pub entity_carrier_rate: f64,
    /// Fraction of utterances containing a neutral head+twin block.
    pub neutral_rate: f64,
    pub min_len: usize,
    pub max_len: usize,
    pub train_size: usize,
    pub dev_size: usize,
    pub test_size: usize,
    /// Filler-pair phrases added to the distractor pool beyond the entity
    /// inventory (lets common lists grow past the inventory size).
    pub num_extra_distractors: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            vocab: 40,
            feat_dim: 16,
            frames_per_token: 4,
            frame_jitter: 1,
            frame_ms: 10.0,
            noise_std: 0.85,
            template_scale: 1.0,
            tail_twin_gap: 0.25,
            num_carriers: 3,
            num_head_tokens: 5,
            num_tail_tokens: 10,
            num_entities: 20,
            entity_rate: 0.55,
            entity_carrier_rate: 0.75,
            neutral_rate: 0.55,
            min_len: 8,
            max_len: 14,
            train_size: 2000,
            dev_size: 200,
            test_size: 200,
            num_extra_distractors: 100,
            seed: 1,
        }
    }
}

/// Derived token-id layout.
#[derive(Debug, Clone)]
pub struct TokenLayout {
    pub carriers: std::ops::Range<usize>,
    pub twins: std::ops::Range<usize>,
    pub fillers: std::ops::Range<usize>,
    pub heads: std::ops::Range<usize>,
    pub tails: std::ops::Range<usize>,
}

impl TokenLayout {
    pub fn commons_end(&self) -> usize {
        self.fillers.end
    }
}

impl SynthConfig {
    pub fn num_tail_pairs(&self) -> usize {
        self.num_tail_tokens / 2
    }

    pub fn validate(&self) -> Result<()> {
        if !self.num_tail_tokens.is_multiple_of(2) || !self.num_entities.is_multiple_of(2) {
            return Err(CoreError::Config(
                "tail tokens and entities must come in pairs".into(),
            ));
        }
        let rare = self.num_head_tokens + self.num_tail_tokens;
        let commons = self.num_carriers + self.num_tail_pairs(); // carriers + twins
        if commons + rare + 4 > self.vocab {
            return Err(CoreError::Config(format!(
                "vocab {} too small for {} carriers, {} twins, {} tails, {} heads and fillers",
                self.vocab,
                self.num_carriers,
                self.num_tail_pairs(),
                self.num_tail_tokens,
                self.num_head_tokens
            )));
        }
        if self.num_entities / 2 > self.num_head_tokens * self.num_tail_pairs() {
            return Err(CoreError::Config("more entities than head x tail-pair slots".into()));
        }
        if self.min_len == 0 || self.max_len < self.min_len {
            return Err(CoreError::Config("bad utterance length range".into()));
        }
        if self.frames_per_token <= self.frame_jitter {
            return Err(CoreError::Config("frame jitter must be below frames-per-token".into()));
        }
        if !(0.0..=1.0).contains(&self.entity_rate)
            || !(0.0..=1.0).contains(&self.neutral_rate)
            || !(0.0..=1.0).contains(&self.entity_carrier_rate)
        {
            return Err(CoreError::Config("rates must lie in [0, 1]".into()));
        }
        Ok(())
    }

    pub fn layout(&self) -> TokenLayout {
        let carriers = 0..self.num_carriers;
        let twins = carriers.end..carriers.end + self.num_tail_pairs();
        let heads_start = self.vocab - self.num_head_tokens - self.num_tail_tokens;
        let fillers = twins.end..heads_start;
        let heads = heads_start..heads_start + self.num_head_tokens;
        let tails = heads.end..self.vocab;
        TokenLayout { carriers, twins, fillers, heads, tails }
    }
}

#[derive(Debug, Clone)]
pub struct Utterance {
    pub id: String,
    pub tokens: Vec<usize>,
    pub entities: Vec<ContextPhrase>,
    pub frames: AcousticFrames<f32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ListMode {
    Personalized,
    Common,
}

#[derive(Debug, Clone)]
pub struct Corpus {
    pub cfg: SynthConfig,
    /// The entity phrase inventory (head, tail) in deterministic order.
    pub inventory: Vec<ContextPhrase>,
    /// Inventory plus filler-pair phrases; distractors are sampled here.
    pub distractor_pool: Vec<ContextPhrase>,
    pub train: Vec<Utterance>,
    pub dev: Vec<Utterance>,
    pub test_personalized: Vec<Utterance>,
    pub test_common: Vec<Utterance>,
}

/// Per-token acoustic templates. Both tails of pair p share one template:
/// the pair's twin template plus a `tail_twin_gap`-sized offset. Which pair
/// member was said is therefore acoustically undecidable; only the bias
/// list (or a learned fixed preference) can break the tie.
pub fn token_templates(cfg: &SynthConfig) -> Vec<Vec<f32>> {
    let layout = cfg.layout();
    let mut rng = rng_for(cfg.seed, "templates");
    let normal = Normal::new(0.0f64, cfg.template_scale).expect("template scale");
    let mut templates: Vec<Vec<f32>> = (0..cfg.vocab)
        .map(|_| (0..cfg.feat_dim).map(|_| normal.sample(&mut rng) as f32).collect())
        .collect();
    let mut dir_rng = rng_for(cfg.seed, "tail-offsets");
    for p in 0..cfg.num_tail_pairs() {
        let twin = layout.twins.start + p;
        let mut dir: Vec<f64> =
            (0..cfg.feat_dim).map(|_| dir_rng.gen_range(-1.0..1.0)).collect();
        let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-9);
        for v in dir.iter_mut() {
            *v /= norm;
        }
        let shared: Vec<f32> = templates[twin]
            .iter()
            .zip(&dir)
            .map(|(&t, &d)| t + (cfg.tail_twin_gap * d) as f32)
            .collect();
        templates[layout.tails.start + 2 * p] = shared.clone();
        templates[layout.tails.start + 2 * p + 1] = shared;
    }
    templates
}

/// Deterministic entity inventory: seeded (head, tail-pair) slots, each
/// contributing both pair members, so no head-tail combination is ever
/// predictable from the head and the acoustic neighborhood alone.
pub fn entity_inventory(cfg: &SynthConfig) -> Vec<ContextPhrase> {
    let layout = cfg.layout();
    let mut slots = Vec::new();
    for h in layout.heads.clone() {
        for p in 0..cfg.num_tail_pairs() {
            slots.push((h, p));
        }
    }
    let mut rng = rng_for(cfg.seed, "inventory");
    slots.shuffle(&mut rng);
    slots.truncate(cfg.num_entities / 2);
    let mut out = Vec::with_capacity(cfg.num_entities);
    for (h, p) in slots {
        out.push(vec![h, layout.tails.start + 2 * p]);
        out.push(vec![h, layout.tails.start + 2 * p + 1]);
    }
    out
}

fn extra_distractors(cfg: &SynthConfig) -> Vec<ContextPhrase> {
    let layout = cfg.layout();
    let fillers: Vec<usize> = layout.fillers.clone().collect();
    let mut rng = rng_for(cfg.seed, "extra-distractors");
    let mut out: Vec<ContextPhrase> = Vec::new();
    while out.len() < cfg.num_extra_distractors {
        let a = fillers[rng.gen_range(0..fillers.len())];
        let b = fillers[rng.gen_range(0..fillers.len())];
        let phrase = vec![a, b];
        if !out.contains(&phrase) {
            out.push(phrase);
        }
    }
    out
}

fn gen_utterance(
    cfg: &SynthConfig,
    templates: &[Vec<f32>],
    inventory: &[ContextPhrase],
    split: &str,
    index: usize,
    want_entity: bool,
) -> Utterance {
    let layout = cfg.layout();
    let mut rng = rng_for(cfg.seed, &format!("utt/{split}/{index}"));
    let commons_end = layout.commons_end();

    // Base text: singleton segments of common tokens.
    let base_len = rng.gen_range(cfg.min_len..=cfg.max_len);
    let mut segments: Vec<Vec<usize>> =
        (0..base_len).map(|_| vec![rng.gen_range(0..commons_end)]).collect();

    // Neutral bait block: filler, head, twin (never preceded by a carrier).
    if rng.gen_bool(cfg.neutral_rate) {
        let filler = rng.gen_range(layout.fillers.start..layout.fillers.end);
        let head = rng.gen_range(layout.heads.start..layout.heads.end);
        let twin = rng.gen_range(layout.twins.start..layout.twins.end);
        let pos = rng.gen_range(0..=segments.len());
        segments.insert(pos, vec![filler, head, twin]);
    }

    let mut entities: Vec<ContextPhrase> = Vec::new();
    if want_entity {
        let n_entities = if rng.gen_bool(0.4) { 2 } else { 1 };
        for _ in 0..n_entities {
            let phrase = inventory[rng.gen_range(0..inventory.len())].clone();
            let lead = if rng.gen_bool(cfg.entity_carrier_rate) {
                rng.gen_range(layout.carriers.start..layout.carriers.end)
            } else {
                rng.gen_range(layout.fillers.start..layout.fillers.end)
            };
            let pos = rng.gen_range(0..=segments.len());
            segments.insert(pos, vec![lead, phrase[0], phrase[1]]);
            if !entities.contains(&phrase) {
                entities.push(phrase);
            }
        }
    }

    let tokens: Vec<usize> = segments.concat();

    // Acoustics: repeated templates plus Gaussian noise.
    let noise = Normal::new(0.0f64, cfg.noise_std).expect("noise std");
    let mut frames: Vec<f32> = Vec::new();
    let mut n_frames = 0usize;
    for &tok in &tokens {
        let jitter = if cfg.frame_jitter > 0 {
            rng.gen_range(0..=2 * cfg.frame_jitter) as i64 - cfg.frame_jitter as i64
        } else {
            0
        };
        let reps = (cfg.frames_per_token as i64 + jitter).max(1) as usize;
        for _ in 0..reps {
            for f in 0..cfg.feat_dim {
                frames.push(templates[tok][f] + noise.sample(&mut rng) as f32);
            }
            n_frames += 1;
        }
    }

    Utterance {
        id: format!("{split}-{index:05}"),
        tokens,
        entities,
        frames: AcousticFrames {
            feats: Tensor::matrix(n_frames, cfg.feat_dim, frames).expect("frame shape"),
            frame_ms: cfg.frame_ms,
        },
    }
}

/// Generates all four splits. Personalized-test utterances always contain an
/// entity phrase; common-test utterances never do.
pub fn generate_corpus(cfg: &SynthConfig) -> Result<Corpus> {
    cfg.validate()?;
    let templates = token_templates(cfg);
    let inventory = entity_inventory(cfg);
    let mut pool = inventory.clone();
    pool.extend(extra_distractors(cfg));

    let gen_split = |split: &str, size: usize, entity_policy: Option<bool>| -> Vec<Utterance> {
        (0..size)
            .map(|i| {
                let want_entity = match entity_policy {
                    Some(v) => v,
                    None => {
                        let mut rng = rng_for(cfg.seed, &format!("entity-coin/{split}/{i}"));
                        rng.gen_bool(cfg.entity_rate)
                    }
                };
                gen_utterance(cfg, &templates, &inventory, split, i, want_entity)
            })
            .collect()
    };

    let train = gen_split("train", cfg.train_size, None);
    let dev = gen_split("dev", cfg.dev_size, None);
    let test_personalized = gen_split("test-pers", cfg.test_size, Some(true));
    let test_common = gen_split("test-comm", cfg.test_size, Some(false));

    Ok(Corpus {
        cfg: cfg.clone(),
        inventory,
        distractor_pool: pool,
        train,
        dev,
        test_personalized,
        test_common,
    })
}

/// True iff `phrase` occurs contiguously in `tokens`.
pub fn phrase_occurs(tokens: &[usize], phrase: &[usize]) -> bool {
    !phrase.is_empty()
        && phrase.len() <= tokens.len()
        && tokens.windows(phrase.len()).any(|w| w == phrase)
}

/// Builds a bias list for one utterance.
///
/// Personalized: the utterance's true entities plus distractors, sampled or
/// padded to exactly `n`. Common: `n` distractors, none occurring in the
/// utterance.
pub fn build_bias_list(
    corpus: &Corpus,
    utt: &Utterance,
    mode: ListMode,
    n: usize,
    seed: u64,
) -> Result<Vec<ContextPhrase>> {
    if n == 0 {
        return Ok(Vec::new());
    }
    let tag = format!("bias/{:?}/{}/{}", mode, utt.id, n);
    let mut rng = rng_for(seed, &tag);
    let mut candidates: Vec<&ContextPhrase> = corpus
        .distractor_pool
        .iter()
        .filter(|p| !phrase_occurs(&utt.tokens, p))
        .collect();
    candidates.shuffle(&mut rng);

    let mut list: Vec<ContextPhrase> = Vec::new();
    if mode == ListMode::Personalized {
        for e in &utt.entities {
            if list.len() < n && !list.contains(e) {
                list.push(e.clone());
            }
        }
    }
    for c in candidates {
        if list.len() >= n {
            break;
        }
        if !list.contains(c) {
            list.push(c.clone());
        }
    }
    if list.len() < n {
        return Err(CoreError::Dataset(format!(
            "distractor pool exhausted: wanted {n}, built {}",
            list.len()
        )));
    }
    Ok(list)
}

// ── serialization ───────────────────────────────────────────────────

#[derive(Serialize, Deserialize)]
struct UttRecord {
    id: String,
    tokens: Vec<usize>,
    entities: Vec<ContextPhrase>,
    n_frames: usize,
    feat_dim: usize,
    frame_ms: f64,
    frames: String,
}

fn utterance_to_record(u: &Utterance) -> UttRecord {
    let mut bytes = Vec::with_capacity(u.frames.feats.numel() * 4);
    for &v in u.frames.feats.data() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    UttRecord {
        id: u.id.clone(),
        tokens: u.tokens.clone(),
        entities: u.entities.clone(),
        n_frames: u.frames.feats.rows(),
        feat_dim: u.frames.feats.cols(),
        frame_ms: u.frames.frame_ms,
        frames: base64::engine::general_purpose::STANDARD.encode(&bytes),
    }
}

fn record_to_utterance(r: UttRecord) -> Result<Utterance> {
    let bytes = base64::engine::general_purpose::STANDARD
        .decode(&r.frames)
        .map_err(|e| CoreError::Dataset(format!("bad frame payload in {}: {e}", r.id)))?;
    if bytes.len() != r.n_frames * r.feat_dim * 4 {
        return Err(CoreError::Dataset(format!("frame payload size mismatch in {}", r.id)));
    }
    let data: Vec<f32> =
        bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
    Ok(Utterance {
        id: r.id,
        tokens: r.tokens,
        entities: r.entities,
        frames: AcousticFrames {
            feats: Tensor::matrix(r.n_frames, r.feat_dim, data)?,
            frame_ms: r.frame_ms,
        },
    })
}

pub fn save_split(path: &Path, utts: &[Utterance]) -> Result<()> {
    let mut out = String::new();
    for u in utts {
        out.push_str(&serde_json::to_string(&utterance_to_record(u))?);
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn load_split(path: &Path) -> Result<Vec<Utterance>> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for line in text.lines() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: UttRecord = serde_json::from_str(line)?;
        out.push(record_to_utterance(rec)?);
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub seed: u64,
    pub config: SynthConfig,
    pub inventory: Vec<ContextPhrase>,
    pub distractor_pool: Vec<ContextPhrase>,
    /// File name -> SHA-256 of contents.
    pub files: std::collections::BTreeMap<String, String>,
}

pub const SPLIT_FILES: [&str; 4] =
    ["train.jsonl", "dev.jsonl", "test_personalized.jsonl", "test_common.jsonl"];

pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(format!("{:x}", hasher.finalize()))
}

impl Corpus {
    pub fn splits(&self) -> [(&str, &[Utterance]); 4] {
        [
            ("train.jsonl", self.train.as_slice()),
            ("dev.jsonl", self.dev.as_slice()),
            ("test_personalized.jsonl", self.test_personalized.as_slice()),
            ("test_common.jsonl", self.test_common.as_slice()),
        ]
    }

    /// Writes the four split files, the entity inventory as a phrase text
    /// file, and the manifest with content hashes.
    pub fn save(&self, dir: &Path) -> Result<DatasetManifest> {
        std::fs::create_dir_all(dir)?;
        let mut files = std::collections::BTreeMap::new();
        for (name, utts) in self.splits() {
            let path = dir.join(name);
            save_split(&path, utts)?;
            files.insert(name.to_string(), file_sha256(&path)?);
        }
        let inv_path = dir.join("inventory.txt");
        crate::model::context::write_phrase_file(&inv_path, &self.inventory)?;
        files.insert("inventory.txt".into(), file_sha256(&inv_path)?);
        let manifest = DatasetManifest {
            seed: self.cfg.seed,
            config: self.cfg.clone(),
            inventory: self.inventory.clone(),
            distractor_pool: self.distractor_pool.clone(),
            files,
        };
        std::fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
        Ok(manifest)
    }

    pub fn load(dir: &Path) -> Result<Corpus> {
        let manifest: DatasetManifest =
            serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json"))?)?;
        Ok(Corpus {
            cfg: manifest.config,
            inventory: manifest.inventory,
            distractor_pool: manifest.distractor_pool,
            train: load_split(&dir.join("train.jsonl"))?,
            dev: load_split(&dir.join("dev.jsonl"))?,
            test_personalized: load_split(&dir.join("test_personalized.jsonl"))?,
            test_common: load_split(&dir.join("test_common.jsonl"))?,
        })
    }
}
