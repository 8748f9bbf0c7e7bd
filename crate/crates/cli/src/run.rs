//! Command implementations.

use crate::CommonArgs;
use anyhow::{anyhow, Context};
use catt::decode::{DecodeMode, DecodeOptions};
use catt::model::checkpoint;
use catt::model::{DetectorKind, Model, ModelConfig};
use catt::report::{
    bench_cell, bench_table, decode_set, eval_table, BenchCell, BenchReport, EvalCell, EvalReport,
};
use catt::synth::{generate_corpus, Corpus, ListMode, SynthConfig};
use catt::train::{train as train_loop, TrainConfig};
use serde::{Deserialize, Serialize};
use std::path::PathBuf;

/// Error with a process exit code: 2 for configuration problems, 3 for
/// runtime failures.
pub struct AppError {
    pub code: u8,
    pub source: anyhow::Error,
}

pub type AppResult = Result<(), AppError>;

fn config_err<E: Into<anyhow::Error>>(e: E) -> AppError {
    AppError { code: 2, source: e.into() }
}

fn runtime_err<E: Into<anyhow::Error>>(e: E) -> AppError {
    AppError { code: 3, source: e.into() }
}

/// The full run configuration; unknown keys are rejected.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub synth: SynthConfig,
    pub train: TrainConfig,
    pub modes: Vec<String>,
    pub bias_ns: Vec<usize>,
}

fn load_config(common: &CommonArgs) -> Result<RunConfig, AppError> {
    let mut cfg = match &common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))
                .map_err(config_err)?;
            serde_json::from_str::<RunConfig>(&text)
                .with_context(|| format!("parsing config {}", path.display()))
                .map_err(config_err)?
        }
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.synth.seed = seed;
        cfg.train.seed = seed;
    }
    cfg.model.validate().map_err(config_err)?;
    cfg.synth.validate().map_err(config_err)?;
    if common.threads != 1 {
        log::warn!("--threads {} requested; execution is single-threaded", common.threads);
    }
    Ok(cfg)
}

pub fn gen(common: CommonArgs, out: PathBuf) -> AppResult {
    let cfg = load_config(&common)?;
    let corpus = generate_corpus(&cfg.synth).map_err(config_err)?;
    let manifest = corpus.save(&out).map_err(runtime_err)?;
    println!(
        "wrote {} files to {} (seed {})",
        manifest.files.len() + 1,
        out.display(),
        manifest.seed
    );
    for (name, hash) in &manifest.files {
        println!("  {name}  sha256:{hash}");
    }
    Ok(())
}

pub fn train(common: CommonArgs, data: PathBuf, variant: String, out: PathBuf) -> AppResult {
    let cfg = load_config(&common)?;
    let detector = DetectorKind::from_variant_name(&variant).map_err(config_err)?;
    let corpus = Corpus::load(&data)
        .with_context(|| format!("loading dataset from {}", data.display()))
        .map_err(runtime_err)?;
    if corpus.cfg.vocab != cfg.model.vocab || corpus.cfg.feat_dim != cfg.model.feat_dim {
        return Err(config_err(anyhow!(
            "model expects vocab {} / feat {}, dataset has vocab {} / feat {}",
            cfg.model.vocab,
            cfg.model.feat_dim,
            corpus.cfg.vocab,
            corpus.cfg.feat_dim
        )));
    }
    let model_cfg = ModelConfig { detector, ..cfg.model.clone() };
    let mut model = Model::init(model_cfg, cfg.train.seed).map_err(config_err)?;
    let logs = train_loop(&mut model, &corpus, &cfg.train).map_err(runtime_err)?;
    let lambda1 = if detector == DetectorKind::None { 0.0 } else { cfg.train.lambda1 };
    checkpoint::save(&out, &model, lambda1).map_err(runtime_err)?;
    let log_path = out.with_extension("train-log.json");
    std::fs::write(&log_path, serde_json::to_string_pretty(&logs).map_err(runtime_err)?)
        .map_err(runtime_err)?;
    if let Some(last) = logs.last() {
        println!(
            "trained {variant}: final transducer {:.4} bias {:.4} dev-wer {:.4} -> {}",
            last.l_transducer,
            last.l_bias,
            last.dev_wer,
            out.display()
        );
    }
    Ok(())
}

fn parse_modes(names: &[String], seed: u64) -> Result<Vec<DecodeMode>, AppError> {
    names.iter().map(|s| DecodeMode::parse(s, seed).map_err(config_err)).collect()
}

#[allow(clippy::too_many_arguments)]
pub fn eval(
    common: CommonArgs,
    checkpoint_path: PathBuf,
    data: PathBuf,
    mode_names: Vec<String>,
    bias_ns: Vec<usize>,
    bias_file: Option<PathBuf>,
    out: PathBuf,
    trace: Option<PathBuf>,
) -> AppResult {
    let seed = common.seed.unwrap_or(1);
    let modes = parse_modes(&mode_names, seed)?;
    let (model, header) = checkpoint::load(&checkpoint_path).map_err(runtime_err)?;
    log::info!("checkpoint variant {} (lambda1 {})", header.variant, header.lambda1);
    let corpus = Corpus::load(&data).map_err(runtime_err)?;
    let opts = DecodeOptions::default();

    let report = if let Some(list_path) = &bias_file {
        // One fixed list for every utterance in both sets.
        let list = catt::model::context::read_phrase_file(list_path).map_err(config_err)?;
        let mut cells = Vec::new();
        for &mode in &modes {
            for (set, utts) in [
                ("personalized", &corpus.test_personalized),
                ("common", &corpus.test_common),
            ] {
                let lists = vec![list.clone(); utts.len()];
                let stats = decode_set(&model, utts, &lists, mode, &opts).map_err(runtime_err)?;
                cells.push(EvalCell {
                    mode: mode.name().to_string(),
                    n: list.len(),
                    set: set.to_string(),
                    utterances: stats.utterances,
                    wer: stats.wer,
                    substitutions: stats.substitutions,
                    insertions: stats.insertions,
                    deletions: stats.deletions,
                    reference_length: stats.reference_length,
                    l_cer: stats.l_cer,
                    counters: stats.counters,
                });
            }
        }
        EvalReport { seed, cells }
    } else {
        catt::report::evaluate_grid(&model, &corpus, &modes, &bias_ns, seed, &opts)
            .map_err(runtime_err)?
    };

    if let Some(trace_path) = trace {
        if modes.len() != 1 || bias_ns.len() != 1 {
            return Err(config_err(anyhow!("--trace requires exactly one mode and one bias-n")));
        }
        write_traces(&model, &corpus, modes[0], bias_ns[0], seed, &opts, &trace_path)?;
    }

    std::fs::create_dir_all(&out).map_err(runtime_err)?;
    let json_path = out.join("eval.json");
    std::fs::write(&json_path, serde_json::to_string_pretty(&report).map_err(runtime_err)?)
        .map_err(runtime_err)?;
    let table = eval_table(&report);
    std::fs::write(out.join("eval.txt"), &table).map_err(runtime_err)?;
    print!("{table}");
    println!("report -> {}", json_path.display());
    Ok(())
}

fn write_traces(
    model: &Model<f32>,
    corpus: &Corpus,
    mode: DecodeMode,
    n: usize,
    seed: u64,
    opts: &DecodeOptions,
    path: &PathBuf,
) -> AppResult {
    use std::io::Write;
    let mut f = std::fs::File::create(path).map_err(runtime_err)?;
    for (set, utts) in [
        (ListMode::Personalized, &corpus.test_personalized),
        (ListMode::Common, &corpus.test_common),
    ] {
        for utt in utts.iter() {
            let list =
                catt::synth::build_bias_list(corpus, utt, set, n, seed).map_err(runtime_err)?;
            let hyp = catt::decode::decode_greedy(model, &utt.frames, &list, mode, opts)
                .map_err(runtime_err)?;
            for step in &hyp.steps {
                let mut record = serde_json::to_value(step).map_err(runtime_err)?;
                record["utt"] = serde_json::Value::String(utt.id.clone());
                writeln!(f, "{record}").map_err(runtime_err)?;
            }
        }
    }
    Ok(())
}

pub fn bench(
    common: CommonArgs,
    checkpoint_path: PathBuf,
    data: PathBuf,
    mode_names: Vec<String>,
    bias_ns: Vec<usize>,
    repeats: usize,
    out: PathBuf,
) -> AppResult {
    let seed = common.seed.unwrap_or(1);
    if common.threads != 1 {
        log::warn!("bench forces --threads 1");
    }
    let modes = parse_modes(&mode_names, seed)?;
    let (model, _) = checkpoint::load(&checkpoint_path).map_err(runtime_err)?;
    let corpus = Corpus::load(&data).map_err(runtime_err)?;
    let opts = DecodeOptions::default();

    let mut cells: Vec<BenchCell> = Vec::new();
    for &mode in &modes {
        for &n in &bias_ns {
            for set in [ListMode::Personalized, ListMode::Common] {
                cells.push(
                    bench_cell(&model, &corpus, mode, n, set, seed, &opts, repeats)
                        .map_err(runtime_err)?,
                );
            }
        }
    }
    let report = BenchReport { seed, cells };
    std::fs::create_dir_all(&out).map_err(runtime_err)?;
    std::fs::write(
        out.join("bench.json"),
        serde_json::to_string_pretty(&report).map_err(runtime_err)?,
    )
    .map_err(runtime_err)?;
    let table = bench_table(&report);
    std::fs::write(out.join("bench.txt"), &table).map_err(runtime_err)?;
    print!("{table}");
    Ok(())
}
