//! News frame detection: a six-frame codebook, corpus handling, paragraph
//! annotation with inter-coder agreement, BERT fine-tuning and evaluation.

pub mod annotate;
pub mod codebook;
pub mod corpus;
pub mod evaluate;
pub mod synth;
pub mod train;

pub use codebook::{FrameCode, LabelSet, NUM_FRAMES};
pub use corpus::{Dataset, LabeledParagraph, Paragraph, SourceDocument, Split};
pub use evaluate::{ConfusionMatrix, EvalReport};
pub use train::{FrameModel, FramePredictor, ModelArtifact, Prediction, TrainingConfig};
