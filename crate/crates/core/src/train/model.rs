//! BERT encoder with a pooled linear classification head.

use std::collections::HashMap;
use std::path::Path;

use candle_core::{DType, Device, Tensor, D};
use candle_nn::{embedding, linear, Embedding, Linear, Module, VarBuilder, VarMap};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::tokenizer::Batch;
use super::TrainError;

/// Encoder shape, read from and written as a HF-style `config.json`.
/// Unknown keys in the file are ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub vocab_size: usize,
    pub hidden_size: usize,
    pub num_hidden_layers: usize,
    pub num_attention_heads: usize,
    pub intermediate_size: usize,
    #[serde(default = "default_act")]
    pub hidden_act: String,
    pub max_position_embeddings: usize,
    #[serde(default = "default_type_vocab")]
    pub type_vocab_size: usize,
    #[serde(default = "default_init_range")]
    pub initializer_range: f64,
    #[serde(default = "default_ln_eps")]
    pub layer_norm_eps: f64,
    #[serde(default)]
    pub pad_token_id: usize,
}

fn default_act() -> String {
    "gelu".into()
}
fn default_type_vocab() -> usize {
    2
}
fn default_init_range() -> f64 {
    0.02
}
fn default_ln_eps() -> f64 {
    1e-12
}

impl EncoderConfig {
    /// A small encoder trained from random initialization, for desk-scale
    /// runs where no pretrained checkpoint is available.
    pub fn scratch(preset: &str, vocab_size: usize, max_positions: usize) -> Option<Self> {
        let (hidden, layers, heads, inter) = match preset {
            "tiny" => (64, 2, 2, 256),
            "mini" => (128, 4, 4, 512),
            "small" => (256, 4, 4, 1024),
            _ => return None,
        };
        Some(EncoderConfig {
            vocab_size,
            hidden_size: hidden,
            num_hidden_layers: layers,
            num_attention_heads: heads,
            intermediate_size: inter,
            hidden_act: default_act(),
            max_position_embeddings: max_positions,
            type_vocab_size: 2,
            initializer_range: 0.02,
            layer_norm_eps: 1e-12,
            pad_token_id: 0,
        })
    }

    fn activation(&self) -> Result<Activation, TrainError> {
        if self.hidden_size % self.num_attention_heads != 0 {
            return Err(TrainError::Environment(format!(
                "hidden size {} not divisible by {} heads",
                self.hidden_size, self.num_attention_heads
            )));
        }
        match self.hidden_act.as_str() {
            "gelu" => Ok(Activation::GeluErf),
            "gelu_new" | "gelu_pytorch_tanh" => Ok(Activation::GeluTanh),
            "relu" => Ok(Activation::Relu),
            other => Err(TrainError::Environment(format!(
                "unsupported activation {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Activation {
    GeluErf,
    GeluTanh,
    Relu,
}

impl Activation {
    fn apply(self, xs: &Tensor) -> candle_core::Result<Tensor> {
        match self {
            Activation::GeluErf => xs.gelu_erf(),
            Activation::GeluTanh => xs.gelu(),
            Activation::Relu => xs.relu(),
        }
    }
}

/// Layer norm written with plain tensor ops so that it has a gradient.
struct LayerNorm {
    weight: Tensor,
    bias: Tensor,
    eps: f64,
}

impl LayerNorm {
    fn new(size: usize, eps: f64, vb: VarBuilder) -> candle_core::Result<Self> {
        Ok(LayerNorm {
            weight: vb.get(size, "weight")?,
            bias: vb.get(size, "bias")?,
            eps,
        })
    }

    fn forward(&self, xs: &Tensor) -> candle_core::Result<Tensor> {
        let mean = xs.mean_keepdim(D::Minus1)?;
        let centered = xs.broadcast_sub(&mean)?;
        let var = centered.sqr()?.mean_keepdim(D::Minus1)?;
        centered
            .broadcast_div(&(var + self.eps)?.sqrt()?)?
            .broadcast_mul(&self.weight)?
            .broadcast_add(&self.bias)
    }
}

struct Embeddings {
    words: Embedding,
    positions: Embedding,
    token_types: Embedding,
    norm: LayerNorm,
}

impl Embeddings {
    fn new(cfg: &EncoderConfig, vb: VarBuilder) -> candle_core::Result<Self> {
        Ok(Embeddings {
            words: embedding(cfg.vocab_size, cfg.hidden_size, vb.pp("word_embeddings"))?,
            positions: embedding(
                cfg.max_position_embeddings,
                cfg.hidden_size,
                vb.pp("position_embeddings"),
            )?,
            token_types: embedding(cfg.type_vocab_size, cfg.hidden_size, vb.pp("token_type_embeddings"))?,
            norm: LayerNorm::new(cfg.hidden_size, cfg.layer_norm_eps, vb.pp("LayerNorm"))?,
        })
    }

    fn forward(&self, ids: &Tensor) -> candle_core::Result<Tensor> {
        let (_, width) = ids.dims2()?;
        let positions = Tensor::arange(0u32, width as u32, ids.device())?;
        let xs = self
            .words
            .forward(ids)?
            .broadcast_add(&self.positions.forward(&positions)?)?
            .broadcast_add(&self.token_types.forward(&ids.zeros_like()?)?)?;
        self.norm.forward(&xs)
    }
}

struct Layer {
    query: Linear,
    key: Linear,
    value: Linear,
    attn_out: Linear,
    attn_norm: LayerNorm,
    intermediate: Linear,
    output: Linear,
    out_norm: LayerNorm,
    heads: usize,
    act: Activation,
}

impl Layer {
    fn new(cfg: &EncoderConfig, act: Activation, vb: VarBuilder) -> candle_core::Result<Self> {
        let h = cfg.hidden_size;
        let att = vb.pp("attention");
        Ok(Layer {
            query: linear(h, h, att.pp("self.query"))?,
            key: linear(h, h, att.pp("self.key"))?,
            value: linear(h, h, att.pp("self.value"))?,
            attn_out: linear(h, h, att.pp("output.dense"))?,
            attn_norm: LayerNorm::new(h, cfg.layer_norm_eps, att.pp("output.LayerNorm"))?,
            intermediate: linear(h, cfg.intermediate_size, vb.pp("intermediate.dense"))?,
            output: linear(cfg.intermediate_size, h, vb.pp("output.dense"))?,
            out_norm: LayerNorm::new(h, cfg.layer_norm_eps, vb.pp("output.LayerNorm"))?,
            heads: cfg.num_attention_heads,
            act,
        })
    }

    /// `mask` is additive, shaped `(rows, 1, 1, width)`.
    fn forward(&self, xs: &Tensor, mask: &Tensor) -> candle_core::Result<Tensor> {
        let (rows, width, hidden) = xs.dims3()?;
        let head_dim = hidden / self.heads;
        let split = |t: Tensor| -> candle_core::Result<Tensor> {
            t.reshape((rows, width, self.heads, head_dim))?
                .transpose(1, 2)?
                .contiguous()
        };
        let q = split(self.query.forward(xs)?)?;
        let k = split(self.key.forward(xs)?)?;
        let v = split(self.value.forward(xs)?)?;
        let scores = (q.matmul(&k.t()?)? / (head_dim as f64).sqrt())?.broadcast_add(mask)?;
        let probs = candle_nn::ops::softmax(&scores, D::Minus1)?;
        let context = probs
            .matmul(&v)?
            .transpose(1, 2)?
            .contiguous()?
            .reshape((rows, width, hidden))?;
        let attended = self.attn_norm.forward(&(self.attn_out.forward(&context)? + xs)?)?;
        let inner = self.act.apply(&self.intermediate.forward(&attended)?)?;
        self.out_norm.forward(&(self.output.forward(&inner)? + attended)?)
    }
}

/// Post-norm BERT encoder, tanh pooler over the first token, and a linear
/// head. Parameter names follow the usual `bert.*` / `classifier.*`
/// checkpoint layout.
pub struct SequenceClassifier {
    embeddings: Embeddings,
    layers: Vec<Layer>,
    pooler: Linear,
    classifier: Linear,
    device: Device,
}

impl SequenceClassifier {
    pub fn new(vb: VarBuilder, cfg: &EncoderConfig, num_labels: usize) -> Result<Self, TrainError> {
        let act = cfg.activation()?;
        let device = vb.device().clone();
        let bert = vb.pp("bert");
        let embeddings = Embeddings::new(cfg, bert.pp("embeddings"))?;
        let layers = (0..cfg.num_hidden_layers)
            .map(|i| Layer::new(cfg, act, bert.pp(format!("encoder.layer.{i}"))))
            .collect::<candle_core::Result<Vec<_>>>()?;
        let pooler = linear(cfg.hidden_size, cfg.hidden_size, bert.pp("pooler.dense"))?;
        let classifier = linear(cfg.hidden_size, num_labels, vb.pp("classifier"))?;
        Ok(SequenceClassifier {
            embeddings,
            layers,
            pooler,
            classifier,
            device,
        })
    }

    /// Logits of shape `(rows, num_labels)`.
    pub fn forward(&self, batch: &Batch) -> Result<Tensor, TrainError> {
        let shape = (batch.rows, batch.width);
        let ids = Tensor::from_slice(&batch.ids, shape, &self.device)?;
        let keep = Tensor::from_slice(&batch.attention_mask, shape, &self.device)?.to_dtype(DType::F32)?;
        let mask = ((1.0 - keep)? * f32::MIN as f64)?.reshape((batch.rows, 1, 1, batch.width))?;
        let mut hidden = self.embeddings.forward(&ids)?;
        for layer in &self.layers {
            hidden = layer.forward(&hidden, &mask)?;
        }
        let first = hidden.narrow(1, 0, 1)?.squeeze(1)?;
        let pooled = self.pooler.forward(&first)?.tanh()?;
        Ok(self.classifier.forward(&pooled)?)
    }
}

/// Deterministic initialization: layer-norm scales to 1, biases to 0, every
/// other tensor from N(0, range), drawn in sorted-name order from one seeded
/// stream. The padding embedding row is zeroed.
pub fn init_weights(
    varmap: &VarMap,
    cfg: &EncoderConfig,
    seed: u64,
) -> Result<(), TrainError> {
    let data = varmap.data().lock().expect("varmap lock");
    let mut names: Vec<&String> = data.keys().collect();
    names.sort();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0f32, cfg.initializer_range as f32).expect("positive std");
    for name in names {
        let var = &data[name];
        let shape = var.shape().clone();
        let n = shape.elem_count();
        let values: Vec<f32> = if name.ends_with("LayerNorm.weight") {
            vec![1.0; n]
        } else if name.ends_with("bias") {
            vec![0.0; n]
        } else {
            let mut v: Vec<f32> = (0..n).map(|_| normal.sample(&mut rng)).collect();
            if name.ends_with("word_embeddings.weight") {
                let width = shape.dims()[1];
                let row = cfg.pad_token_id * width;
                v[row..row + width].iter_mut().for_each(|x| *x = 0.0);
            }
            v
        };
        var.set(&Tensor::from_vec(values, shape, var.device())?)?;
    }
    Ok(())
}

/// Copies pretrained tensors into matching variables. Checkpoints may or
/// may not carry the `bert.` prefix and may use the old `gamma`/`beta`
/// layer-norm names. Every encoder variable must be found; head variables
/// keep their initialization when absent.
pub fn load_pretrained(varmap: &VarMap, path: &Path) -> Result<usize, TrainError> {
    let tensors: HashMap<String, Tensor> = candle_core::safetensors::load(path, &Device::Cpu)?;
    let data = varmap.data().lock().expect("varmap lock");
    let mut loaded = 0;
    for (name, var) in data.iter() {
        let stripped = name.strip_prefix("bert.").unwrap_or(name);
        let legacy = |n: &str| {
            n.replace("LayerNorm.weight", "LayerNorm.gamma")
                .replace("LayerNorm.bias", "LayerNorm.beta")
        };
        let candidates = [
            name.clone(),
            stripped.to_string(),
            legacy(name),
            legacy(stripped),
        ];
        match candidates.iter().find_map(|c| tensors.get(c)) {
            Some(t) => {
                if t.shape() != var.shape() {
                    return Err(TrainError::Environment(format!(
                        "pretrained tensor {name} has shape {:?}, expected {:?}",
                        t.shape(),
                        var.shape()
                    )));
                }
                var.set(&t.to_dtype(DType::F32)?)?;
                loaded += 1;
            }
            None if name.starts_with("classifier") || name.contains("pooler") => {}
            None => {
                return Err(TrainError::Environment(format!(
                    "pretrained checkpoint lacks {name}"
                )))
            }
        }
    }
    Ok(loaded)
}

/// Row-wise softmax in f64.
pub fn softmax_rows(logits: &Tensor) -> Result<Vec<Vec<f64>>, TrainError> {
    let rows: Vec<Vec<f32>> = logits.to_dtype(DType::F32)?.to_vec2()?;
    Ok(rows
        .into_iter()
        .map(|row| {
            let max = row.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x as f64));
            let exps: Vec<f64> = row.iter().map(|&x| (x as f64 - max).exp()).collect();
            let sum: f64 = exps.iter().sum();
            exps.into_iter().map(|e| e / sum).collect()
        })
        .collect())
}

/// Mean cross-entropy of logits against class indices.
pub fn cross_entropy(logits: &Tensor, targets: &[u32]) -> Result<Tensor, TrainError> {
    let targets = Tensor::from_slice(targets, targets.len(), logits.device())?;
    let log_probs = candle_nn::ops::log_softmax(logits, D::Minus1)?;
    Ok(candle_nn::loss::nll(&log_probs, &targets)?)
}
