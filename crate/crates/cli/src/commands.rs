//! Command-line entry points for the whole pipeline.

use std::fs;
use std::io::{self, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use profiling_core::dataspace::DataspaceReport;
use profiling_core::evaluation::{human_eval, read_judgments, shift_curve, topk_accuracy_test};
use profiling_core::nn::Activation;
use profiling_core::store::{ingest, read_triples_file, EntityVectors, Exemplar, ExemplarTable, Split};
use profiling_core::synthetic::{separable_corpus, to_triples, DeterministicConfig, DeterministicCorpus, SeparableConfig};
use profiling_core::{
    ae_train, emb_train, AeConfig, AnyModel, EmbConfig, Error as CoreError, MfvModel, ModelKind, NbConfig, NbModel,
    Profiler, TrainingLog,
};

use crate::service::{self, AppState, ProfileRequest, DEFAULT_TOP_N, DEFAULT_TOP_N_CAP};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Io(_) => 2,
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        if e.is_io() {
            CliError::Io(e.to_string())
        } else {
            CliError::Validation(e.to_string())
        }
    }
}

fn io_err(path: &Path, e: io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

type CliResult<T = ()> = Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "profiler", version, about = "Learn facet profiles from sparse entity tables")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Read `entity<TAB>facet<TAB>value` triples into a store directory.
    Ingest(IngestArgs),
    /// Report facet entropies and data-space size.
    Stats(StatsArgs),
    /// Train a model and write a checkpoint.
    Train(TrainArgs),
    /// Top-k accuracy on the TEST split, optionally a shift curve.
    Evaluate(EvaluateArgs),
    /// Compare a model with aggregated crowd judgments.
    HumanEval(HumanEvalArgs),
    /// Profile one group.
    Profile(ProfileArgs),
    /// Serve a checkpoint over HTTP.
    Serve(ServeArgs),
    /// Write a synthetic corpus with known structure.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = profiling_core::store::DEFAULT_VOCABULARY_CAP)]
    pub cap: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long)]
    pub store: PathBuf,
    #[arg(long)]
    pub json: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModelArg {
    Ae,
    Emb,
    Nb,
    Mfv,
}

impl From<ModelArg> for ModelKind {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Ae => ModelKind::Ae,
            ModelArg::Emb => ModelKind::Emb,
            ModelArg::Nb => ModelKind::Nb,
            ModelArg::Mfv => ModelKind::Mfv,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ActivationArg {
    Tanh,
    Relu,
    Sigmoid,
}

impl From<ActivationArg> for Activation {
    fn from(a: ActivationArg) -> Self {
        match a {
            ActivationArg::Tanh => Activation::Tanh,
            ActivationArg::Relu => Activation::Relu,
            ActivationArg::Sigmoid => Activation::Sigmoid,
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub store: PathBuf,
    #[arg(long, value_enum)]
    pub model: ModelArg,
    #[arg(long)]
    pub out: PathBuf,
    /// Entity vector file, required for `emb`.
    #[arg(long)]
    pub vectors: Option<PathBuf>,
    /// Write the per-epoch training log as JSON.
    #[arg(long)]
    pub log: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long, value_enum)]
    pub activation: Option<ActivationArg>,
    #[arg(long)]
    pub embedding_size: Option<usize>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long)]
    pub input_dim: Option<usize>,
    /// Naive Bayes smoothing constant.
    #[arg(long)]
    pub alpha: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub store: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub vectors: Option<PathBuf>,
    /// Comma-separated k values.
    #[arg(long, value_delimiter = ',', default_values_t = [1usize, 3])]
    pub topk: Vec<usize>,
    /// Facet to compute an accuracy-by-evidence curve for.
    #[arg(long)]
    pub shift_curve: Option<String>,
    /// Directory for CSV and JSON reports.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct HumanEvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub judgments: PathBuf,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct ProfileArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Known facts as `facet=value`, comma-separated or repeated.
    #[arg(long, value_delimiter = ',')]
    pub known: Vec<String>,
    #[arg(long, default_value_t = DEFAULT_TOP_N)]
    pub top_n: usize,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, env = "PROFILER_BIND", default_value = "127.0.0.1:8080")]
    pub bind: SocketAddr,
    #[arg(long, env = "PROFILER_TOP_N_CAP", default_value_t = DEFAULT_TOP_N_CAP)]
    pub top_n_cap: usize,
    /// Allowed CORS origin; any origin when omitted.
    #[arg(long, env = "PROFILER_CORS_ORIGIN")]
    pub cors_origin: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SynthKind {
    Deterministic,
    Separable,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, value_enum, default_value_t = SynthKind::Deterministic)]
    pub kind: SynthKind,
    #[arg(long)]
    pub out: PathBuf,
    /// Where to write entity vectors (separable corpus only).
    #[arg(long)]
    pub vectors_out: Option<PathBuf>,
    #[arg(long, default_value_t = 1000)]
    pub rows: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.0)]
    pub missing_source: f64,
    #[arg(long, default_value_t = 16)]
    pub dim: usize,
}

pub fn run(cli: Cli, out: &mut dyn Write) -> CliResult {
    match cli.command {
        Command::Ingest(a) => cmd_ingest(a, out),
        Command::Stats(a) => cmd_stats(a, out),
        Command::Train(a) => cmd_train(a, out),
        Command::Evaluate(a) => cmd_evaluate(a, out),
        Command::HumanEval(a) => cmd_human_eval(a, out),
        Command::Profile(a) => cmd_profile(a, out),
        Command::Serve(a) => cmd_serve(a),
        Command::Synth(a) => cmd_synth(a, out),
    }
}

fn emit(out: &mut dyn Write, text: &str) -> CliResult {
    out.write_all(text.as_bytes())
        .map_err(|e| CliError::Io(format!("stdout: {e}")))
}

fn json<T: serde::Serialize>(v: &T) -> CliResult<String> {
    serde_json::to_string_pretty(v)
        .map(|s| s + "\n")
        .map_err(|e| CliError::Validation(e.to_string()))
}

fn write_file(path: &Path, text: &str) -> CliResult {
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn cmd_ingest(a: IngestArgs, out: &mut dyn Write) -> CliResult {
    let records = read_triples_file(&a.input)?;
    let (table, report) = ingest(records, a.cap, a.seed)?;
    fs::create_dir_all(&a.out).map_err(|e| io_err(&a.out, e))?;
    table.save_store(&a.out)?;
    for w in &report.date_warnings {
        tracing::warn!("{w}");
    }
    emit(out, &json(&report)?)
}

fn cmd_stats(a: StatsArgs, out: &mut dyn Write) -> CliResult {
    let table = ExemplarTable::load_store(&a.store)?;
    let report = DataspaceReport::from_table(&table);
    let text = if a.json { report.to_json()? + "\n" } else { report.to_text() };
    emit(out, &text)
}

fn attach_vectors(table: &mut ExemplarTable, path: &Path) -> CliResult<usize> {
    let vectors = EntityVectors::load(path)?;
    Ok(table.attach_embeddings(&vectors))
}

fn cmd_train(a: TrainArgs, out: &mut dyn Write) -> CliResult {
    let mut table = ExemplarTable::load_store(&a.store)?;
    let (model, log): (AnyModel, Option<TrainingLog>) = match a.model {
        ModelArg::Mfv => (MfvModel::fit(&table).into(), None),
        ModelArg::Nb => {
            let config = NbConfig {
                alpha: a.alpha.unwrap_or(NbConfig::default().alpha),
            };
            (NbModel::fit(&table, config)?.into(), None)
        }
        ModelArg::Ae => {
            let d = AeConfig::default();
            let config = AeConfig {
                embedding_size: a.embedding_size.unwrap_or(d.embedding_size),
                hidden_units: a.hidden.unwrap_or(d.hidden_units),
                dropout: a.dropout.unwrap_or(d.dropout),
                batch_size: a.batch_size.unwrap_or(d.batch_size),
                max_epochs: a.epochs.unwrap_or(d.max_epochs),
                patience: a.patience.unwrap_or(d.patience),
                learning_rate: a.learning_rate.unwrap_or(d.learning_rate),
                activation: a.activation.map_or(d.activation, Into::into),
                seed: a.seed,
            };
            let (m, log) = ae_train(&table, &config)?;
            (m.into(), Some(log))
        }
        ModelArg::Emb => {
            let path = a
                .vectors
                .as_deref()
                .ok_or_else(|| CliError::Validation("--vectors is required for the emb model".into()))?;
            attach_vectors(&mut table, path)?;
            let d = EmbConfig::default();
            let dim = match a.input_dim {
                Some(dim) => dim,
                None => table
                    .rows()
                    .iter()
                    .find_map(|r| r.embedding.as_ref().map(Vec::len))
                    .unwrap_or(d.input_dim),
            };
            let config = EmbConfig {
                input_dim: dim,
                hidden_units: a.hidden.unwrap_or(d.hidden_units),
                batch_size: a.batch_size.unwrap_or(d.batch_size),
                max_epochs: a.epochs.unwrap_or(d.max_epochs),
                patience: a.patience.unwrap_or(d.patience),
                learning_rate: a.learning_rate.unwrap_or(d.learning_rate),
                activation: a.activation.map_or(d.activation, Into::into),
                seed: a.seed,
            };
            let (m, log) = emb_train(&table, &config)?;
            (m.into(), Some(log))
        }
    };
    model.save(&a.out)?;
    if let (Some(path), Some(log)) = (&a.log, &log) {
        write_file(path, &json(log)?)?;
    }
    let mut summary = format!("wrote {} checkpoint to {}\n", model.kind(), a.out.display());
    if let Some(log) = &log {
        summary.push_str(&format!(
            "epochs run {}, best epoch {}, best DEV loss {:.6}\n",
            log.epochs.len(),
            log.best_epoch,
            log.best_dev_loss
        ));
        if !log.untrained_facets.is_empty() {
            summary.push_str(&format!("untrained facets: {}\n", log.untrained_facets.join(", ")));
        }
        if log.skipped_rows > 0 {
            summary.push_str(&format!("skipped TRAIN rows without vectors: {}\n", log.skipped_rows));
        }
    }
    emit(out, &summary)
}

fn load_model_for(table: &ExemplarTable, path: &Path) -> CliResult<AnyModel> {
    Ok(AnyModel::load(path, Some(&table.schema().fingerprint()))?)
}

fn cmd_evaluate(a: EvaluateArgs, out: &mut dyn Write) -> CliResult {
    let mut table = ExemplarTable::load_store(&a.store)?;
    if let Some(v) = &a.vectors {
        attach_vectors(&mut table, v)?;
    }
    let model = load_model_for(&table, &a.checkpoint)?;
    let report = topk_accuracy_test(&model, &table, &a.topk)?;
    let csv = report.to_csv();
    let mut text = csv.clone();
    if let Some(dir) = &a.out {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        write_file(&dir.join("accuracy.csv"), &csv)?;
        write_file(&dir.join("accuracy.json"), &json(&report)?)?;
    }
    if let Some(facet) = &a.shift_curve {
        let f = table.schema().facet_index(facet).ok_or_else(|| {
            CliError::Validation(format!("unknown facet '{facet}' (valid: {})", table.schema().names().join(", ")))
        })?;
        let rows: Vec<&Exemplar> = table.split_rows(Split::Test).collect();
        let curve = shift_curve(&model, &rows, f)?;
        text.push('\n');
        text.push_str(&curve.to_csv());
        if let (Some(rho), Some(regime)) = (curve.spearman, curve.regime) {
            text.push_str(&format!("# spearman {rho:.4} regime {}\n", json(&regime)?.trim().trim_matches('"')));
        }
        if let Some(dir) = &a.out {
            write_file(&dir.join(format!("shift_curve_{facet}.csv")), &curve.to_csv())?;
            write_file(&dir.join(format!("shift_curve_{facet}.json")), &json(&curve)?)?;
        }
    }
    emit(out, &text)
}

fn cmd_human_eval(a: HumanEvalArgs, out: &mut dyn Write) -> CliResult {
    let model = AnyModel::load(&a.checkpoint, None)?;
    let file = fs::File::open(&a.judgments).map_err(|e| io_err(&a.judgments, e))?;
    let profiles = read_judgments(io::BufReader::new(file))?;
    let report = human_eval(&model, &profiles)?;
    if a.json {
        return emit(out, &json(&report)?);
    }
    let fmt = |x: Option<f64>| x.map_or("N/A".to_string(), |v| format!("{v:.4}"));
    let mut text = String::from("facet,profiles,mean_js,js_of_means,precision,recall,f1\n");
    for f in &report.facets {
        text.push_str(&format!(
            "{},{},{:.4},{},{},{},{}\n",
            f.facet,
            f.profiles,
            f.mean_js,
            fmt(f.js_of_means),
            fmt(f.mean_precision),
            fmt(f.mean_recall),
            fmt(f.mean_f1)
        ));
    }
    text.push_str(&format!("# mean js {:.4} over {} profiles\n", report.mean_js, report.comparisons.len()));
    emit(out, &text)
}

/// Parse `facet=value` items.
pub fn parse_known(items: &[String]) -> CliResult<std::collections::BTreeMap<String, String>> {
    let mut known = std::collections::BTreeMap::new();
    for item in items.iter().filter(|s| !s.trim().is_empty()) {
        let (k, v) = item
            .split_once('=')
            .ok_or_else(|| CliError::Validation(format!("expected facet=value, got '{item}'")))?;
        if let Some(prev) = known.insert(k.trim().to_string(), v.trim().to_string()) {
            if prev != v.trim() {
                return Err(CliError::Validation(format!("facet '{}' given twice", k.trim())));
            }
        }
    }
    Ok(known)
}

fn cmd_profile(a: ProfileArgs, out: &mut dyn Write) -> CliResult {
    let state = AppState::load(&a.checkpoint, usize::MAX)?;
    let req = ProfileRequest {
        known: parse_known(&a.known)?,
        top_n: Some(a.top_n),
    };
    let resp = service::build_profile(&state, &req).map_err(|e| CliError::Validation(e.to_string()))?;
    if a.json {
        return emit(out, &json(&resp)?);
    }
    let mut text = String::new();
    for (k, v) in &resp.fixed {
        text.push_str(&format!("{k} = {v} (given)\n"));
    }
    for (facet, e) in &resp.expectations {
        text.push_str(&format!("{facet}:\n"));
        for v in &e.values {
            text.push_str(&format!("  {:<24} {:.4}\n", v.value, v.probability));
        }
        if e.other > 0.0 {
            text.push_str(&format!("  {:<24} {:.4}\n", "(other)", e.other));
        }
    }
    emit(out, &text)
}

fn cmd_serve(a: ServeArgs) -> CliResult {
    let state = Arc::new(AppState::load(&a.checkpoint, a.top_n_cap)?);
    let origin = a
        .cors_origin
        .map(|o| o.parse().map_err(|_| CliError::Validation(format!("invalid CORS origin '{o}'"))))
        .transpose()?;
    let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::Io(e.to_string()))?;
    rt.block_on(service::serve(state, a.bind, origin))
        .map_err(|e| CliError::Io(format!("{}: {e}", a.bind)))
}

fn cmd_synth(a: SynthArgs, out: &mut dyn Write) -> CliResult {
    match a.kind {
        SynthKind::Deterministic => {
            let corpus = DeterministicCorpus::generate(&DeterministicConfig {
                rows: a.rows,
                missing_source: a.missing_source,
                seed: a.seed,
                ..DeterministicConfig::default()
            })?;
            write_file(&a.out, &to_triples(&corpus.records))?;
            emit(out, &format!("wrote {} rows to {}\n", corpus.records.len(), a.out.display()))
        }
        SynthKind::Separable => {
            let vectors_out = a
                .vectors_out
                .as_deref()
                .ok_or_else(|| CliError::Validation("--vectors-out is required for the separable corpus".into()))?;
            let (records, vectors) = separable_corpus(&SeparableConfig {
                rows: a.rows,
                dim: a.dim,
                seed: a.seed,
                ..SeparableConfig::default()
            })?;
            write_file(&a.out, &to_triples(&records))?;
            write_file(vectors_out, &vectors.to_text())?;
            emit(out, &format!("wrote {} rows and vectors\n", records.len()))
        }
    }
}
