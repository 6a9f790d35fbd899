//! Uncased WordPiece tokenization and batch collation.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use tokenizers::models::wordpiece::WordPiece;
use tokenizers::normalizers::BertNormalizer;
use tokenizers::pre_tokenizers::bert::BertPreTokenizer;
use tokenizers::processors::bert::BertProcessing;
use tokenizers::{
    Normalizer, OffsetReferential, OffsetType, PreTokenizedString, PreTokenizer, Tokenizer,
    TruncationDirection, TruncationParams, TruncationStrategy,
};

use super::TrainError;

pub const PAD: &str = "[PAD]";
pub const UNK: &str = "[UNK]";
pub const CLS: &str = "[CLS]";
pub const SEP: &str = "[SEP]";
pub const MASK: &str = "[MASK]";

/// Token ids for one text, with boundary tokens, after truncation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenizedText {
    pub ids: Vec<u32>,
    pub truncated: bool,
}

impl TokenizedText {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Row-major padded batch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    pub ids: Vec<u32>,
    pub attention_mask: Vec<u32>,
    pub rows: usize,
    pub width: usize,
}

/// Pads every sequence to the longest one in the batch.
pub fn collate(items: &[&TokenizedText], pad_id: u32) -> Batch {
    let width = items.iter().map(|t| t.len()).max().unwrap_or(0);
    let mut ids = Vec::with_capacity(items.len() * width);
    let mut attention_mask = Vec::with_capacity(items.len() * width);
    for t in items {
        ids.extend_from_slice(&t.ids);
        attention_mask.extend(std::iter::repeat(1).take(t.len()));
        let pad = width - t.len();
        ids.extend(std::iter::repeat(pad_id).take(pad));
        attention_mask.extend(std::iter::repeat(0).take(pad));
    }
    Batch {
        ids,
        attention_mask,
        rows: items.len(),
        width,
    }
}

#[derive(Debug, Clone)]
pub struct FrameTokenizer {
    inner: Tokenizer,
    pad_id: u32,
}

fn tok_err(e: impl std::fmt::Display) -> TrainError {
    TrainError::Tokenizer(e.to_string())
}

impl FrameTokenizer {
    /// Builds an uncased BERT tokenizer over a `token -> id` vocabulary.
    pub fn from_vocab(vocab: HashMap<String, u32>, max_len: usize) -> Result<Self, TrainError> {
        for special in [PAD, UNK, CLS, SEP] {
            if !vocab.contains_key(special) {
                return Err(tok_err(format!("vocabulary lacks {special}")));
            }
        }
        let (cls, sep, pad) = (vocab[CLS], vocab[SEP], vocab[PAD]);
        let model = WordPiece::builder()
            .vocab(vocab.into_iter().collect::<ahash::AHashMap<_, _>>())
            .unk_token(UNK.into())
            .build()
            .map_err(tok_err)?;
        let mut inner = Tokenizer::new(model);
        inner
            .with_normalizer(Some(BertNormalizer::new(true, true, None, true)))
            .map_err(tok_err)?;
        inner.with_pre_tokenizer(Some(BertPreTokenizer));
        inner.with_post_processor(Some(BertProcessing::new(
            (SEP.into(), sep),
            (CLS.into(), cls),
        )));
        let mut tokenizer = FrameTokenizer { inner, pad_id: pad };
        tokenizer.set_max_len(max_len)?;
        Ok(tokenizer)
    }

    /// Reads a standard one-token-per-line `vocab.txt`.
    pub fn from_vocab_file(path: &Path, max_len: usize) -> Result<Self, TrainError> {
        let text = std::fs::read_to_string(path)?;
        let vocab = text
            .lines()
            .enumerate()
            .map(|(i, tok)| (tok.trim_end().to_string(), i as u32))
            .collect();
        Self::from_vocab(vocab, max_len)
    }

    pub fn from_file(path: &Path, max_len: usize) -> Result<Self, TrainError> {
        let inner = Tokenizer::from_file(path).map_err(tok_err)?;
        let pad_id = inner
            .token_to_id(PAD)
            .ok_or_else(|| tok_err("tokenizer lacks [PAD]"))?;
        let mut tokenizer = FrameTokenizer { inner, pad_id };
        tokenizer.set_max_len(max_len)?;
        Ok(tokenizer)
    }

    /// Derives a vocabulary from training texts: special tokens, every
    /// observed character in word-initial and `##` continuation form, then
    /// the most frequent whole words (ties broken alphabetically) up to
    /// `max_vocab` entries. Any text in the same script tokenizes without
    /// `[UNK]`.
    pub fn train_from_texts<S: AsRef<str>>(
        texts: &[S],
        max_vocab: usize,
        max_len: usize,
    ) -> Result<Self, TrainError> {
        let words = word_counts(texts)?;
        let mut tokens: Vec<String> = [PAD, UNK, CLS, SEP, MASK].map(String::from).to_vec();
        let chars: BTreeSet<char> = words.keys().flat_map(|w| w.chars()).collect();
        for c in &chars {
            tokens.push(c.to_string());
        }
        for c in &chars {
            tokens.push(format!("##{c}"));
        }
        let mut by_freq: Vec<(&String, &usize)> = words
            .iter()
            .filter(|(w, &n)| n >= 2 && w.chars().count() > 1)
            .collect();
        by_freq.sort_by(|a, b| b.1.cmp(a.1).then_with(|| a.0.cmp(b.0)));
        let room = max_vocab.saturating_sub(tokens.len());
        tokens.extend(by_freq.into_iter().take(room).map(|(w, _)| w.clone()));
        let vocab = tokens
            .into_iter()
            .enumerate()
            .map(|(i, t)| (t, i as u32))
            .collect();
        Self::from_vocab(vocab, max_len)
    }

    pub fn set_max_len(&mut self, max_len: usize) -> Result<(), TrainError> {
        if max_len < 3 {
            return Err(tok_err("max sequence length must be at least 3"));
        }
        self.inner
            .with_truncation(Some(TruncationParams {
                direction: TruncationDirection::Right,
                max_length: max_len,
                strategy: TruncationStrategy::LongestFirst,
                stride: 0,
            }))
            .map_err(tok_err)?;
        Ok(())
    }

    pub fn encode(&self, text: &str) -> Result<TokenizedText, TrainError> {
        let enc = self.inner.encode(text, true).map_err(tok_err)?;
        Ok(TokenizedText {
            ids: enc.get_ids().to_vec(),
            truncated: !enc.get_overflowing().is_empty(),
        })
    }

    pub fn tokens(&self, text: &str) -> Result<Vec<String>, TrainError> {
        Ok(self
            .inner
            .encode(text, true)
            .map_err(tok_err)?
            .get_tokens()
            .to_vec())
    }

    pub fn pad_id(&self) -> u32 {
        self.pad_id
    }

    pub fn vocab_size(&self) -> usize {
        self.inner.get_vocab_size(true)
    }

    pub fn save(&self, path: &Path) -> Result<(), TrainError> {
        self.inner.save(path, false).map_err(tok_err)
    }
}

/// Normalized, pre-tokenized word frequencies.
fn word_counts<S: AsRef<str>>(texts: &[S]) -> Result<BTreeMap<String, usize>, TrainError> {
    let normalizer = BertNormalizer::new(true, true, None, true);
    let mut counts = BTreeMap::new();
    for text in texts {
        let mut pre = PreTokenizedString::from(text.as_ref());
        pre.normalize(|n| normalizer.normalize(n)).map_err(tok_err)?;
        BertPreTokenizer.pre_tokenize(&mut pre).map_err(tok_err)?;
        for (word, _, _) in pre.get_splits(OffsetReferential::Original, OffsetType::Char) {
            *counts.entry(word.to_string()).or_insert(0) += 1;
        }
    }
    Ok(counts)
}
