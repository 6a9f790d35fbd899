//! Fine-tuning a BERT-style sequence classifier on main-frame labels.
//!
//! The training loop mirrors the usual trainer defaults: AdamW, linear
//! learning-rate decay to zero, global gradient-norm clipping, shuffled
//! batches each epoch, a log entry (with evaluation on the eval set) every
//! `logging_steps` optimizer steps, and final-epoch weights kept.
//!
//! `pretrained_encoder_id` names either a local checkpoint directory
//! (`config.json`, `vocab.txt` or `tokenizer.json`, `model.safetensors`) or
//! `scratch:<preset>` for a small randomly initialized encoder whose
//! vocabulary is derived from the training texts.

pub mod model;
pub mod tokenizer;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use candle_core::{DType, Device};
use candle_nn::{AdamW, Optimizer, ParamsAdamW, VarBuilder, VarMap};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize, Serializer};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::codebook::{FrameCode, NUM_FRAMES};
use crate::corpus::Dataset;
use crate::evaluate::{self, FoldTrainer};
use model::{EncoderConfig, SequenceClassifier};
use tokenizer::{collate, FrameTokenizer, TokenizedText};

pub const WEIGHTS_FILE: &str = "model.safetensors";
pub const ENCODER_CONFIG_FILE: &str = "config.json";
pub const TOKENIZER_FILE: &str = "tokenizer.json";
pub const LABEL_MAP_FILE: &str = "label_map.json";
pub const TRAINING_CONFIG_FILE: &str = "training_config.json";
pub const TRAINING_LOG_FILE: &str = "training_log.jsonl";
pub const FINGERPRINT_FILE: &str = "training_fingerprint.json";

/// Vocabulary cap for `scratch:` encoders.
pub const SCRATCH_VOCAB: usize = 8000;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("encoder unavailable: {0}")]
    Environment(String),
    #[error("output directory {0} exists and is not empty; enable overwrite_output to replace it")]
    OutputConflict(PathBuf),
    #[error("bad training data: {0}")]
    Data(String),
    #[error("cannot load model artifact from {path}: {reason}")]
    Load { path: PathBuf, reason: String },
    #[error("tokenizer: {0}")]
    Tokenizer(String),
    #[error("tensor backend: {0}")]
    Backend(#[from] candle_core::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Optimizer settings the trainer framework normally supplies implicitly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    pub kind: String,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
    pub warmup_steps: usize,
    pub lr_schedule: String,
    pub max_grad_norm: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            kind: "adamw".into(),
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 0.0,
            warmup_steps: 0,
            lr_schedule: "linear".into(),
            max_grad_norm: 1.0,
        }
    }
}

fn d_encoder() -> String {
    "bert-base-uncased".into()
}
fn d_labels() -> usize {
    NUM_FRAMES
}
fn d_lr() -> f64 {
    2e-5
}
fn d_batch() -> usize {
    4
}
fn d_epochs() -> usize {
    5
}
fn d_logging() -> usize {
    10
}
fn d_max_len() -> usize {
    512
}
fn d_true() -> bool {
    true
}

/// Hyperparameters. Everything but `seed` and `output_dir` has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingConfig {
    #[serde(default = "d_encoder")]
    pub pretrained_encoder_id: String,
    #[serde(default = "d_labels")]
    pub num_labels: usize,
    #[serde(default = "d_lr")]
    pub learning_rate: f64,
    #[serde(default = "d_batch")]
    pub train_batch_size: usize,
    #[serde(default = "d_batch")]
    pub eval_batch_size: usize,
    #[serde(default = "d_epochs")]
    pub epochs: usize,
    #[serde(default = "d_logging")]
    pub logging_steps: usize,
    #[serde(default = "d_max_len")]
    pub max_sequence_length: usize,
    pub seed: u64,
    pub output_dir: PathBuf,
    #[serde(default = "d_true")]
    pub overwrite_output: bool,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
}

impl TrainingConfig {
    pub fn new(seed: u64, output_dir: impl Into<PathBuf>) -> Self {
        TrainingConfig {
            pretrained_encoder_id: d_encoder(),
            num_labels: d_labels(),
            learning_rate: d_lr(),
            train_batch_size: d_batch(),
            eval_batch_size: d_batch(),
            epochs: d_epochs(),
            logging_steps: d_logging(),
            max_sequence_length: d_max_len(),
            seed,
            output_dir: output_dir.into(),
            overwrite_output: true,
            optimizer: OptimizerConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let fail = |m: &str| Err(TrainError::Config(m.to_string()));
        if self.num_labels != NUM_FRAMES {
            return fail("num_labels must equal the number of frame codes (6)");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail("learning_rate must be positive");
        }
        if self.train_batch_size == 0 || self.eval_batch_size == 0 {
            return fail("batch sizes must be positive");
        }
        if self.epochs == 0 || self.logging_steps == 0 {
            return fail("epochs and logging_steps must be positive");
        }
        if self.max_sequence_length < 3 {
            return fail("max_sequence_length must be at least 3");
        }
        if self.optimizer.kind != "adamw" {
            return fail("only the adamw optimizer is supported");
        }
        if !matches!(self.optimizer.lr_schedule.as_str(), "linear" | "constant") {
            return fail("lr_schedule must be linear or constant");
        }
        Ok(())
    }

    /// SHA-256 over the canonical JSON form.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }

    pub fn steps_per_epoch(&self, n_train: usize) -> usize {
        n_train.div_ceil(self.train_batch_size)
    }

    pub fn total_steps(&self, n_train: usize) -> usize {
        self.steps_per_epoch(n_train) * self.epochs
    }

    fn learning_rate_at(&self, step: usize, total: usize) -> f64 {
        let warmup = self.optimizer.warmup_steps;
        if step < warmup {
            return self.learning_rate * step as f64 / warmup.max(1) as f64;
        }
        match self.optimizer.lr_schedule.as_str() {
            "constant" => self.learning_rate,
            _ => {
                let remaining = total.saturating_sub(step) as f64;
                self.learning_rate * remaining / (total.saturating_sub(warmup)).max(1) as f64
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLogEntry {
    pub step: usize,
    pub epoch: f64,
    pub train_loss: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval_metrics: Option<BTreeMap<String, f64>>,
}

/// Class probabilities in codebook order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreVector(pub [f64; NUM_FRAMES]);

impl ScoreVector {
    pub fn get(&self, code: FrameCode) -> f64 {
        self.0[code.index()]
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }

    /// Highest-scoring code; ties go to the lowest index.
    pub fn argmax(&self) -> FrameCode {
        let mut best = 0;
        for i in 1..NUM_FRAMES {
            if self.0[i] > self.0[best] {
                best = i;
            }
        }
        FrameCode::ALL[best]
    }
}

impl Serialize for ScoreVector {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let map: BTreeMap<FrameCode, f64> = FrameCode::ALL.into_iter().zip(self.0).collect();
        map.serialize(s)
    }
}

impl<'de> Deserialize<'de> for ScoreVector {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let map = BTreeMap::<FrameCode, f64>::deserialize(d)?;
        let mut out = [0.0; NUM_FRAMES];
        for c in FrameCode::ALL {
            out[c.index()] = *map
                .get(&c)
                .ok_or_else(|| serde::de::Error::custom(format!("missing score for {c}")))?;
        }
        Ok(ScoreVector(out))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub scores: ScoreVector,
    pub main: FrameCode,
}

impl Prediction {
    pub fn from_scores(scores: ScoreVector) -> Self {
        Prediction {
            main: scores.argmax(),
            scores,
        }
    }
}

/// Anything that maps paragraph texts to main-frame predictions.
pub trait FramePredictor: Send + Sync {
    /// Order-preserving, element-wise equal to [`FramePredictor::predict`].
    fn predict_batch(&self, texts: &[&str]) -> Result<Vec<Prediction>, TrainError>;

    fn predict(&self, text: &str) -> Result<Prediction, TrainError> {
        Ok(self
            .predict_batch(&[text])?
            .pop()
            .expect("one prediction per text"))
    }
}

/// The codebook's code-to-index table.
pub fn label_map() -> BTreeMap<FrameCode, usize> {
    FrameCode::ALL.into_iter().map(|c| (c, c.index())).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct TrainingFingerprint {
    config_fingerprint: String,
    seed: u64,
    train_records: usize,
    doc_ids: BTreeSet<String>,
}

/// Handle to a trained model directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelArtifact {
    pub dir: PathBuf,
    pub weights: PathBuf,
    pub tokenizer: PathBuf,
    pub label_map: BTreeMap<FrameCode, usize>,
    pub config_fingerprint: String,
    /// Source documents of the training records, for leakage checks.
    pub training_doc_ids: BTreeSet<String>,
}

fn load_err(dir: &Path, reason: impl std::fmt::Display) -> TrainError {
    TrainError::Load {
        path: dir.to_path_buf(),
        reason: reason.to_string(),
    }
}

impl ModelArtifact {
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, TrainError> {
        let dir = dir.as_ref();
        let read = |name: &str| fs::read_to_string(dir.join(name)).map_err(|e| load_err(dir, format!("{name}: {e}")));
        let label_map: BTreeMap<FrameCode, usize> =
            serde_json::from_str(&read(LABEL_MAP_FILE)?).map_err(|e| load_err(dir, e))?;
        if label_map != self::label_map() {
            return Err(load_err(dir, "label map does not match the codebook"));
        }
        let fp: TrainingFingerprint =
            serde_json::from_str(&read(FINGERPRINT_FILE)?).map_err(|e| load_err(dir, e))?;
        for f in [WEIGHTS_FILE, ENCODER_CONFIG_FILE, TOKENIZER_FILE] {
            if !dir.join(f).is_file() {
                return Err(load_err(dir, format!("missing {f}")));
            }
        }
        Ok(ModelArtifact {
            dir: dir.to_path_buf(),
            weights: dir.join(WEIGHTS_FILE),
            tokenizer: dir.join(TOKENIZER_FILE),
            label_map,
            config_fingerprint: fp.config_fingerprint,
            training_doc_ids: fp.doc_ids,
        })
    }

    pub fn training_config(&self) -> Result<TrainingConfig, TrainError> {
        let text = fs::read_to_string(self.dir.join(TRAINING_CONFIG_FILE))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn training_log(&self) -> Result<Vec<TrainLogEntry>, TrainError> {
        let text = fs::read_to_string(self.dir.join(TRAINING_LOG_FILE))?;
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str(l).map_err(TrainError::from))
            .collect()
    }
}

/// A classifier ready for inference.
pub struct FrameModel {
    classifier: SequenceClassifier,
    tokenizer: FrameTokenizer,
    varmap: VarMap,
    batch_size: usize,
}

impl FrameModel {
    pub fn load(artifact: &ModelArtifact) -> Result<Self, TrainError> {
        let dir = &artifact.dir;
        let enc: EncoderConfig = serde_json::from_str(
            &fs::read_to_string(dir.join(ENCODER_CONFIG_FILE)).map_err(|e| load_err(dir, e))?,
        )
        .map_err(|e| load_err(dir, e))?;
        let cfg = artifact.training_config().map_err(|e| load_err(dir, e))?;
        let tokenizer = FrameTokenizer::from_file(&artifact.tokenizer, cfg.max_sequence_length)
            .map_err(|e| load_err(dir, e))?;
        let mut varmap = VarMap::new();
        let vb = VarBuilder::from_varmap(&varmap, DType::F32, &Device::Cpu);
        let classifier = SequenceClassifier::new(vb, &enc, NUM_FRAMES)?;
        varmap
            .load(&artifact.weights)
            .map_err(|e| load_err(dir, e))?;
        Ok(FrameModel {
            classifier,
            tokenizer,
            varmap,
            batch_size: cfg.eval_batch_size,
        })
    }

    pub fn open(dir: impl AsRef<Path>) -> Result<Self, TrainError> {
        Self::load(&ModelArtifact::open(dir)?)
    }

    pub fn tokenizer(&self) -> &FrameTokenizer {
        &self.tokenizer
    }

    /// Zeroes the classification head so every text gets identical logits.
    /// Used to exercise the uniform-score and tie-breaking paths.
    pub fn zero_head(&self) -> Result<(), TrainError> {
        let data = self.varmap.data().lock().expect("varmap lock");
        for (name, var) in data.iter() {
            if name.starts_with("classifier.") {
                var.set(&var.zeros_like()?)?;
            }
        }
        Ok(())
    }
}

fn predict_encoded(
    classifier: &SequenceClassifier,
    encoded: &[TokenizedText],
    pad_id: u32,
    batch_size: usize,
) -> Result<Vec<Prediction>, TrainError> {
    let mut out = Vec::with_capacity(encoded.len());
    for chunk in encoded.chunks(batch_size.max(1)) {
        let refs: Vec<&TokenizedText> = chunk.iter().collect();
        let logits = classifier.forward(&collate(&refs, pad_id))?;
        for row in model::softmax_rows(&logits)? {
            let mut scores = [0.0; NUM_FRAMES];
            scores.copy_from_slice(&row);
            out.push(Prediction::from_scores(ScoreVector(scores)));
        }
    }
    Ok(out)
}

impl FramePredictor for FrameModel {
    fn predict_batch(&self, texts: &[&str]) -> Result<Vec<Prediction>, TrainError> {
        // One text per forward pass: padding a sequence next to a longer
        // neighbour would perturb its float results, and batch output must
        // match single predictions exactly.
        let encoded = texts
            .iter()
            .map(|t| self.tokenizer.encode(t))
            .collect::<Result<Vec<_>, _>>()?;
        let _ = self.batch_size;
        predict_encoded(&self.classifier, &encoded, self.tokenizer.pad_id(), 1)
    }
}

/// Where the encoder weights and vocabulary come from.
enum EncoderSource {
    Pretrained {
        config: EncoderConfig,
        tokenizer: FrameTokenizer,
        weights: PathBuf,
    },
    Scratch {
        preset: String,
    },
}

fn resolve_encoder(cfg: &TrainingConfig) -> Result<EncoderSource, TrainError> {
    let id = cfg.pretrained_encoder_id.as_str();
    if let Some(preset) = id.strip_prefix("scratch:") {
        if EncoderConfig::scratch(preset, 1, 1).is_none() {
            return Err(TrainError::Environment(format!(
                "unknown scratch preset {preset:?} (tiny, mini, small)"
            )));
        }
        return Ok(EncoderSource::Scratch {
            preset: preset.to_string(),
        });
    }
    let dir = Path::new(id);
    let missing = |what: &str| {
        TrainError::Environment(format!(
            "pretrained encoder {id:?} is not a readable checkpoint directory ({what}); \
             provide a local directory with config.json, vocab.txt or tokenizer.json, \
             and model.safetensors"
        ))
    };
    if !dir.is_dir() {
        return Err(missing("not found"));
    }
    let config: EncoderConfig = serde_json::from_str(
        &fs::read_to_string(dir.join(ENCODER_CONFIG_FILE)).map_err(|_| missing("config.json"))?,
    )
    .map_err(|e| missing(&e.to_string()))?;
    let tokenizer = if dir.join(TOKENIZER_FILE).is_file() {
        FrameTokenizer::from_file(&dir.join(TOKENIZER_FILE), cfg.max_sequence_length)?
    } else if dir.join("vocab.txt").is_file() {
        FrameTokenizer::from_vocab_file(&dir.join("vocab.txt"), cfg.max_sequence_length)?
    } else {
        return Err(missing("vocabulary"));
    };
    let weights = dir.join(WEIGHTS_FILE);
    if !weights.is_file() {
        return Err(missing("model.safetensors"));
    }
    if cfg.max_sequence_length > config.max_position_embeddings {
        return Err(TrainError::Config(format!(
            "max_sequence_length {} exceeds the encoder's {} positions",
            cfg.max_sequence_length, config.max_position_embeddings
        )));
    }
    Ok(EncoderSource::Pretrained {
        config,
        tokenizer,
        weights,
    })
}

fn prepare_output_dir(cfg: &TrainingConfig) -> Result<(), TrainError> {
    let dir = &cfg.output_dir;
    if dir.exists() {
        let non_empty = fs::read_dir(dir)?.next().is_some();
        if non_empty && !cfg.overwrite_output {
            return Err(TrainError::OutputConflict(dir.clone()));
        }
    }
    fs::create_dir_all(dir)?;
    Ok(())
}

fn check_data(ds: &Dataset, what: &str) -> Result<(), TrainError> {
    for r in ds.records() {
        r.labels
            .validate()
            .map_err(|e| TrainError::Data(format!("{what} record {}: {e}", r.paragraph.para_id)))?;
    }
    Ok(())
}

struct Trainer<'a> {
    cfg: &'a TrainingConfig,
    classifier: SequenceClassifier,
    tokenizer: FrameTokenizer,
    varmap: VarMap,
    // Sorted by name so gradient-norm sums are order-stable.
    params: Vec<(String, candle_core::Var)>,
}

impl Trainer<'_> {
    fn clip_gradients(&self, grads: &mut candle_core::backprop::GradStore) -> Result<(), TrainError> {
        let max_norm = self.cfg.optimizer.max_grad_norm;
        if max_norm <= 0.0 {
            return Ok(());
        }
        let mut sq = 0.0f64;
        for (_, var) in &self.params {
            if let Some(g) = grads.get(var) {
                sq += g.sqr()?.sum_all()?.to_scalar::<f32>()? as f64;
            }
        }
        let norm = sq.sqrt();
        if norm > max_norm {
            let scale = max_norm / (norm + 1e-6);
            for (_, var) in &self.params {
                if let Some(g) = grads.get(var) {
                    let scaled = (g * scale)?;
                    grads.insert(var, scaled);
                }
            }
        }
        Ok(())
    }

    fn evaluate(&self, encoded: &[TokenizedText], labels: &[FrameCode]) -> Result<BTreeMap<String, f64>, TrainError> {
        let mut loss_sum = 0.0;
        let mut preds = Vec::with_capacity(encoded.len());
        let bs = self.cfg.eval_batch_size;
        for (chunk, chunk_labels) in encoded.chunks(bs).zip(labels.chunks(bs)) {
            let refs: Vec<&TokenizedText> = chunk.iter().collect();
            let logits = self.classifier.forward(&collate(&refs, self.tokenizer.pad_id()))?;
            let targets: Vec<u32> = chunk_labels.iter().map(|c| c.index() as u32).collect();
            let loss = model::cross_entropy(&logits, &targets)?.to_scalar::<f32>()? as f64;
            loss_sum += loss * chunk.len() as f64;
            for row in model::softmax_rows(&logits)? {
                let mut s = [0.0; NUM_FRAMES];
                s.copy_from_slice(&row);
                preds.push(ScoreVector(s).argmax());
            }
        }
        let cm = evaluate::confusion(labels, &preds).map_err(|e| TrainError::Data(e.to_string()))?;
        let report = evaluate::report(&cm).map_err(|e| TrainError::Data(e.to_string()))?;
        Ok(BTreeMap::from([
            ("eval_loss".to_string(), loss_sum / encoded.len() as f64),
            ("eval_accuracy".to_string(), report.accuracy),
            ("eval_macro_f1".to_string(), report.macro_avg.f1),
            ("eval_weighted_f1".to_string(), report.weighted_avg.f1),
        ]))
    }
}

fn encode_dataset(tok: &FrameTokenizer, ds: &Dataset) -> Result<(Vec<TokenizedText>, Vec<FrameCode>), TrainError> {
    let mut encoded = Vec::with_capacity(ds.len());
    let mut labels = Vec::with_capacity(ds.len());
    for r in ds.records() {
        encoded.push(tok.encode(&r.paragraph.text)?);
        labels.push(r.main());
    }
    Ok((encoded, labels))
}

/// Fine-tunes a classifier and writes the artifact to `cfg.output_dir`.
///
/// Returns the artifact handle and the log stream (also written to
/// `training_log.jsonl`). `eval_set` may be empty, in which case log
/// entries carry no evaluation metrics.
pub fn fine_tune(
    cfg: &TrainingConfig,
    train_set: &Dataset,
    eval_set: &Dataset,
) -> Result<(ModelArtifact, Vec<TrainLogEntry>), TrainError> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(TrainError::Data("training set is empty".into()));
    }
    check_data(train_set, "training")?;
    check_data(eval_set, "evaluation")?;
    let source = resolve_encoder(cfg)?;
    prepare_output_dir(cfg)?;

    let (enc_cfg, tokenizer, pretrained) = match source {
        EncoderSource::Pretrained {
            config,
            tokenizer,
            weights,
        } => (config, tokenizer, Some(weights)),
        EncoderSource::Scratch { preset } => {
            let texts: Vec<&str> = train_set
                .records()
                .iter()
                .map(|r| r.paragraph.text.as_str())
                .collect();
            let tokenizer =
                FrameTokenizer::train_from_texts(&texts, SCRATCH_VOCAB, cfg.max_sequence_length)?;
            let mut enc = EncoderConfig::scratch(&preset, tokenizer.vocab_size(), cfg.max_sequence_length)
                .expect("preset checked");
            enc.pad_token_id = tokenizer.pad_id() as usize;
            (enc, tokenizer, None)
        }
    };

    let varmap = VarMap::new();
    let vb = VarBuilder::from_varmap(&varmap, DType::F32, &Device::Cpu);
    let classifier = SequenceClassifier::new(vb, &enc_cfg, cfg.num_labels)?;
    model::init_weights(&varmap, &enc_cfg, cfg.seed)?;
    if let Some(weights) = &pretrained {
        model::load_pretrained(&varmap, weights)?;
    }
    let mut params: Vec<(String, candle_core::Var)> = varmap
        .data()
        .lock()
        .expect("varmap lock")
        .iter()
        .map(|(k, v)| (k.clone(), v.clone()))
        .collect();
    params.sort_by(|a, b| a.0.cmp(&b.0));

    let mut opt = AdamW::new(
        params.iter().map(|(_, v)| v.clone()).collect(),
        ParamsAdamW {
            lr: cfg.learning_rate,
            beta1: cfg.optimizer.beta1,
            beta2: cfg.optimizer.beta2,
            eps: cfg.optimizer.epsilon,
            weight_decay: cfg.optimizer.weight_decay,
        },
    )?;
    let trainer = Trainer {
        cfg,
        classifier,
        tokenizer,
        varmap,
        params,
    };

    let (train_enc, train_labels) = encode_dataset(&trainer.tokenizer, train_set)?;
    let (eval_enc, eval_labels) = encode_dataset(&trainer.tokenizer, eval_set)?;
    let steps_per_epoch = cfg.steps_per_epoch(train_set.len());
    let total = cfg.total_steps(train_set.len());
    let pad = trainer.tokenizer.pad_id();

    let mut log_file = fs::File::create(cfg.output_dir.join(TRAINING_LOG_FILE))?;
    let mut log = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut step = 0;
    let mut window_loss = 0.0;
    let mut window_steps = 0;
    for _epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch_idx in order.chunks(cfg.train_batch_size) {
            opt.set_learning_rate(cfg.learning_rate_at(step, total));
            let refs: Vec<&TokenizedText> = batch_idx.iter().map(|&i| &train_enc[i]).collect();
            let targets: Vec<u32> = batch_idx
                .iter()
                .map(|&i| train_labels[i].index() as u32)
                .collect();
            let logits = trainer.classifier.forward(&collate(&refs, pad))?;
            let loss = model::cross_entropy(&logits, &targets)?;
            window_loss += loss.to_scalar::<f32>()? as f64;
            window_steps += 1;
            let mut grads = loss.backward()?;
            trainer.clip_gradients(&mut grads)?;
            opt.step(&grads)?;
            step += 1;

            if step % cfg.logging_steps == 0 {
                let eval_metrics = if eval_enc.is_empty() {
                    None
                } else {
                    Some(trainer.evaluate(&eval_enc, &eval_labels)?)
                };
                let entry = TrainLogEntry {
                    step,
                    epoch: step as f64 / steps_per_epoch as f64,
                    train_loss: window_loss / window_steps as f64,
                    eval_metrics,
                };
                serde_json::to_writer(&mut log_file, &entry)?;
                log_file.write_all(b"\n")?;
                log.push(entry);
                window_loss = 0.0;
                window_steps = 0;
            }
        }
    }
    debug_assert_eq!(step, total);
    log_file.flush()?;

    let dir = &cfg.output_dir;
    trainer.varmap.save(dir.join(WEIGHTS_FILE))?;
    trainer.tokenizer.save(&dir.join(TOKENIZER_FILE))?;
    fs::write(dir.join(ENCODER_CONFIG_FILE), serde_json::to_string_pretty(&enc_cfg)?)?;
    fs::write(dir.join(LABEL_MAP_FILE), serde_json::to_string(&label_map())?)?;
    fs::write(dir.join(TRAINING_CONFIG_FILE), serde_json::to_string_pretty(cfg)?)?;
    let fingerprint = TrainingFingerprint {
        config_fingerprint: cfg.fingerprint(),
        seed: cfg.seed,
        train_records: train_set.len(),
        doc_ids: train_set.doc_ids(),
    };
    fs::write(dir.join(FINGERPRINT_FILE), serde_json::to_string_pretty(&fingerprint)?)?;

    Ok((ModelArtifact::open(dir)?, log))
}

/// Runs [`fine_tune`] per fold, each in its own `fold-<i>` subdirectory of
/// the configured output directory, and hands back the loaded model.
pub struct FineTuneFolds {
    pub config: TrainingConfig,
}

impl FoldTrainer for FineTuneFolds {
    fn train_fold(
        &self,
        fold: usize,
        train: &Dataset,
        held_out: &Dataset,
    ) -> Result<Box<dyn FramePredictor>, TrainError> {
        let mut cfg = self.config.clone();
        cfg.output_dir = self.config.output_dir.join(format!("fold-{fold}"));
        let (artifact, _) = fine_tune(&cfg, train, held_out)?;
        Ok(Box::new(FrameModel::load(&artifact)?))
    }
}
