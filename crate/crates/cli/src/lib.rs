//! Command-line front end and HTTP service for the newsframe pipeline.

pub mod config;
pub mod server;

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use newsframe_core::annotate::{cohen_kappa, load_annotations, AnnotationStore, Annotator};
use newsframe_core::codebook::FrameCode;
use newsframe_core::corpus::{
    extract_paragraphs, load_dataset, load_documents, load_paragraphs, sample_documents,
    save_documents, save_paragraphs, translate_document, IdentityTranslator,
};
use newsframe_core::evaluate::{
    cross_validate, evaluate_gold, make_folds, report, ConfusionMatrix,
};
use newsframe_core::train::{fine_tune, FineTuneFolds, FrameModel, ModelArtifact};
use newsframe_core::{FramePredictor, TrainingConfig};
use serde::Serialize;
use thiserror::Error;

use config::AppConfig;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Corpus(#[from] newsframe_core::corpus::CorpusError),
    #[error(transparent)]
    Annotate(#[from] newsframe_core::annotate::AnnotateError),
    #[error(transparent)]
    Agreement(#[from] newsframe_core::annotate::AgreementError),
    #[error(transparent)]
    Train(#[from] newsframe_core::train::TrainError),
    #[error(transparent)]
    Eval(#[from] newsframe_core::evaluate::EvalError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CliError {
    /// Stable machine-readable category.
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Input(_) => "input",
            CliError::Corpus(_) => "corpus",
            CliError::Annotate(_) => "annotation",
            CliError::Agreement(_) => "agreement",
            CliError::Train(_) => "train",
            CliError::Eval(_) => "evaluate",
            CliError::Io(_) => "io",
            CliError::Json(_) => "json",
        }
    }

    /// One-line JSON object for the error stream.
    pub fn to_json_line(&self) -> String {
        serde_json::json!({"error": self.kind(), "message": self.to_string()}).to_string()
    }
}

#[derive(Debug, Parser)]
#[command(name = "newsframe", version, about = "News frame annotation, training and evaluation")]
pub struct Cli {
    /// Application config file (defaults to $NEWSFRAME_CONFIG).
    #[arg(long, global = true)]
    pub app_config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Split documents into paragraph records.
    Ingest(IngestArgs),
    /// Draw a random subset of documents.
    Sample(SampleArgs),
    /// Run the HTTP annotation and classification service.
    Serve(ServeArgs),
    /// Cohen's kappa between two coders' annotation files.
    Kappa(KappaArgs),
    /// Fine-tune a classifier.
    Train(TrainArgs),
    /// K-fold cross-validation with pooled out-of-fold predictions.
    Cv(CvArgs),
    /// Score a trained model on a gold dataset.
    Evaluate(EvaluateArgs),
    /// Predict main frames for paragraphs.
    Classify(ClassifyArgs),
    /// Classification report from a confusion-matrix CSV.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Source documents (JSONL).
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Paragraph output (JSONL).
    #[arg(long)]
    pub out: PathBuf,
    /// Pass non-English documents through the identity translator first.
    #[arg(long)]
    pub translate: bool,
    #[arg(long)]
    pub min_chars: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, value_parser = clap::value_parser!(u16).range(1..))]
    pub port: Option<u16>,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub annotations: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct KappaArgs {
    #[arg(long)]
    pub a: PathBuf,
    #[arg(long)]
    pub b: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Training config JSON; falls back to the application config's.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub eval: Option<PathBuf>,
    /// Output directory, overriding the config's.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CvArgs {
    #[arg(long, value_parser = clap::value_parser!(u64).range(2..))]
    pub k: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub stratified: bool,
    /// Labelled dataset (JSONL).
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Directory for per-fold models, fold plan, predictions and matrix.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub gold: PathBuf,
    /// Report JSON output; printed to stdout when absent.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Confusion-matrix CSV output.
    #[arg(long)]
    pub cm: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Paragraph JSONL.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Prediction JSONL; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub cm: PathBuf,
}

fn write_json<T: Serialize>(value: &T, path: Option<&Path>) -> Result<(), CliError> {
    let text = serde_json::to_string(value)?;
    match path {
        Some(p) => fs::write(p, text + "\n")?,
        None => println!("{text}"),
    }
    Ok(())
}

fn load_training_config(path: Option<&Path>, app: &AppConfig) -> Result<TrainingConfig, CliError> {
    match (path, &app.training) {
        (Some(p), _) => {
            let text = fs::read_to_string(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))
        }
        (None, Some(cfg)) => Ok(cfg.clone()),
        (None, None) => Err(CliError::Config(
            "no training config: pass --config or set `training` in the application config".into(),
        )),
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let app = AppConfig::load(cli.app_config.as_deref())?;
    match cli.command {
        Command::Ingest(a) => ingest(a, &app),
        Command::Sample(a) => {
            let docs = load_documents(&a.input)?;
            save_documents(&sample_documents(&docs, a.n, a.seed)?, &a.out)?;
            Ok(())
        }
        Command::Serve(a) => serve(a, app),
        Command::Kappa(a) => kappa(a),
        Command::Train(a) => train(a, &app),
        Command::Cv(a) => cv(a, &app),
        Command::Evaluate(a) => evaluate(a),
        Command::Classify(a) => classify(a),
        Command::Report(a) => {
            let cm = ConfusionMatrix::load_csv(&a.cm)?;
            write_json(&report(&cm)?, None)
        }
    }
}

fn ingest(a: IngestArgs, app: &AppConfig) -> Result<(), CliError> {
    let min_chars = a.min_chars.unwrap_or(app.min_paragraph_chars);
    let mut paragraphs = Vec::new();
    for doc in load_documents(&a.input)? {
        let doc = if a.translate {
            translate_document(&doc, &IdentityTranslator)?
        } else {
            doc
        };
        paragraphs.extend(extract_paragraphs(&doc, min_chars)?);
    }
    save_paragraphs(&paragraphs, &a.out)?;
    Ok(())
}

/// Pairs two single-coder annotation files by para_id.
fn kappa(a: KappaArgs) -> Result<(), CliError> {
    let index = |path: &Path| -> Result<BTreeMap<String, FrameCode>, CliError> {
        let mut out = BTreeMap::new();
        for r in load_annotations(path)? {
            if out.insert(r.para_id.clone(), r.main).is_some() {
                return Err(CliError::Input(format!(
                    "{}: para_id {} annotated more than once",
                    path.display(),
                    r.para_id
                )));
            }
        }
        Ok(out)
    };
    let first = index(&a.a)?;
    let second = index(&a.b)?;
    let (la, lb): (Vec<_>, Vec<_>) = first
        .iter()
        .filter_map(|(id, ma)| second.get(id).map(|mb| (*ma, *mb)))
        .unzip();
    write_json(&cohen_kappa(&la, &lb)?, None)
}

#[derive(Serialize)]
struct TrainSummary {
    model_dir: PathBuf,
    config_fingerprint: String,
    steps: usize,
    final_train_loss: Option<f64>,
}

fn train(a: TrainArgs, app: &AppConfig) -> Result<(), CliError> {
    let mut cfg = load_training_config(a.config.as_deref(), app)?;
    if let Some(out) = a.out {
        cfg.output_dir = out;
    }
    let train_set = load_dataset(&a.train)?;
    let eval_set = match &a.eval {
        Some(p) => load_dataset(p)?,
        None => newsframe_core::Dataset::new(Vec::new())?,
    };
    let (artifact, log) = fine_tune(&cfg, &train_set, &eval_set)?;
    write_json(
        &TrainSummary {
            model_dir: artifact.dir,
            config_fingerprint: artifact.config_fingerprint,
            steps: cfg.total_steps(train_set.len()),
            final_train_loss: log.last().map(|e| e.train_loss),
        },
        None,
    )
}

fn cv(a: CvArgs, app: &AppConfig) -> Result<(), CliError> {
    let k = a.k.map(|k| k as usize).unwrap_or(app.cv.k);
    let seed = a.seed.unwrap_or(app.cv.seed);
    let stratified = a.stratified || app.cv.stratified;
    let mut cfg = load_training_config(a.config.as_deref(), app)?;
    if let Some(out) = &a.out {
        cfg.output_dir = out.clone();
    }
    let ds = load_dataset(&a.data)?;
    let plan = make_folds(&ds, k, seed, stratified)?;
    let outcome = cross_validate(&ds, &plan, &FineTuneFolds { config: cfg.clone() })?;
    let dir = &cfg.output_dir;
    fs::create_dir_all(dir)?;
    fs::write(dir.join("folds.json"), serde_json::to_string_pretty(&outcome.plan)?)?;
    fs::write(dir.join("confusion_matrix.csv"), outcome.matrix.to_csv())?;
    let mut preds = fs::File::create(dir.join("predictions.jsonl"))?;
    for p in &outcome.predictions {
        serde_json::to_writer(&mut preds, p)?;
        preds.write_all(b"\n")?;
    }
    fs::write(dir.join("report.json"), serde_json::to_string(&outcome.report)?)?;
    write_json(&outcome.report, None)
}

fn evaluate(a: EvaluateArgs) -> Result<(), CliError> {
    let artifact = ModelArtifact::open(&a.model)?;
    let model = FrameModel::load(&artifact)?;
    let gold = load_dataset(&a.gold)?;
    let (cm, rep) = evaluate_gold(&model, &artifact.training_doc_ids, &gold)?;
    if let Some(p) = &a.cm {
        fs::write(p, cm.to_csv())?;
    }
    write_json(&rep, a.report.as_deref())
}

#[derive(Serialize)]
struct ClassifiedParagraph<'a> {
    para_id: &'a str,
    #[serde(flatten)]
    prediction: newsframe_core::Prediction,
}

fn classify(a: ClassifyArgs) -> Result<(), CliError> {
    let model = FrameModel::open(&a.model)?;
    let paragraphs = load_paragraphs(&a.input)?;
    let texts: Vec<&str> = paragraphs.iter().map(|p| p.text.as_str()).collect();
    let preds = model.predict_batch(&texts)?;
    let mut out = String::new();
    for (p, prediction) in paragraphs.iter().zip(preds) {
        out.push_str(&serde_json::to_string(&ClassifiedParagraph {
            para_id: &p.para_id,
            prediction,
        })?);
        out.push('\n');
    }
    match &a.out {
        Some(path) => fs::write(path, out)?,
        None => print!("{out}"),
    }
    Ok(())
}

/// Builds the service state from the application config.
pub fn build_state(app: &AppConfig) -> Result<Arc<server::AppState>, CliError> {
    let paragraphs = match &app.corpus {
        Some(p) => load_paragraphs(p)?,
        None => Vec::new(),
    };
    let store = match &app.annotations {
        Some(p) => AnnotationStore::open(p)?,
        None => AnnotationStore::in_memory(),
    };
    let model: Option<Arc<dyn FramePredictor>> = match &app.model {
        Some(dir) => Some(Arc::new(FrameModel::open(dir)?)),
        None => None,
    };
    Ok(server::AppState::new(Annotator::new(paragraphs, store), model))
}

fn serve(a: ServeArgs, mut app: AppConfig) -> Result<(), CliError> {
    if let Some(port) = a.port {
        app.port = port;
    }
    app.corpus = a.corpus.or(app.corpus);
    app.annotations = a.annotations.or(app.annotations);
    app.model = a.model.or(app.model);
    app.validate()?;
    let state = build_state(&app)?;
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind((a.host.as_str(), app.port)).await?;
        eprintln!("listening on http://{}", listener.local_addr()?);
        axum::serve(listener, server::router(state)).await
    })?;
    Ok(())
}
