//! Frame taxonomy, coder guidance and label-set rules.
//!
//! Six codes exist. The first five are the generic news frames and may be
//! combined freely on a paragraph; `NO06` ("no frame") stands alone. Every
//! labelled paragraph also carries a single main frame, the one the coder
//! judged most pronounced, and that is what the classifier learns.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CodebookError {
    #[error("frame index {0} out of range 0..6")]
    IndexOutOfRange(usize),
    #[error("unknown frame code {0:?}")]
    UnknownCode(String),
}

/// One of the six frame codes, in fixed classifier-head order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FrameCode {
    AR01,
    HI02,
    CF03,
    MF04,
    EF05,
    NO06,
}

pub const NUM_FRAMES: usize = 6;

impl FrameCode {
    pub const ALL: [FrameCode; NUM_FRAMES] = [
        FrameCode::AR01,
        FrameCode::HI02,
        FrameCode::CF03,
        FrameCode::MF04,
        FrameCode::EF05,
        FrameCode::NO06,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Result<Self, CodebookError> {
        Self::ALL
            .get(index)
            .copied()
            .ok_or(CodebookError::IndexOutOfRange(index))
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FrameCode::AR01 => "AR01",
            FrameCode::HI02 => "HI02",
            FrameCode::CF03 => "CF03",
            FrameCode::MF04 => "MF04",
            FrameCode::EF05 => "EF05",
            FrameCode::NO06 => "NO06",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FrameCode::AR01 => "Attribution of responsibility",
            FrameCode::HI02 => "Human interest",
            FrameCode::CF03 => "Conflict",
            FrameCode::MF04 => "Morality",
            FrameCode::EF05 => "Economic",
            FrameCode::NO06 => "No frame",
        }
    }
}

/// Free function form of [`FrameCode::index`].
pub fn frame_index(code: FrameCode) -> usize {
    code.index()
}

/// Free function form of [`FrameCode::from_index`].
pub fn frame_from_index(index: usize) -> Result<FrameCode, CodebookError> {
    FrameCode::from_index(index)
}

impl fmt::Display for FrameCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FrameCode {
    type Err = CodebookError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FrameCode::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| CodebookError::UnknownCode(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FrameDefinition {
    pub code: FrameCode,
    pub name: &'static str,
    pub guiding_questions: Vec<&'static str>,
}

fn guiding_questions(code: FrameCode) -> Vec<&'static str> {
    match code {
        FrameCode::AR01 => vec![
            "Does the paragraph suggest that an individual (e.g. a politician) or a group (e.g. a party, state, governmental departments, society, civilian groups) is responsible for the problem or can resolve it?",
            "Does the paragraph suggest a solution to the problem or call for urgent action over it?",
        ],
        FrameCode::HI02 => vec![
            "Does the paragraph use a human example or emphasise the effect of a problem on humans? Is the human the central focus of the paragraph?",
            "Does the paragraph use emotive language that may invoke an emotional response in the reader (like outrage, empathy-caring, sympathy, or compassion)?",
        ],
        FrameCode::CF03 => vec![
            "Does the paragraph refer to any form of negative interaction or framing (disagreement, confrontation, spat, etc.) between two sides of any kind (actors, problem, viewpoints)?",
        ],
        FrameCode::MF04 => vec![
            "Does the paragraph contain any form of morality (what is good or bad? Does it talk about Good and Evil? Does it talk about religious tenets or prescribe a socially apt behaviour or ethics?)",
        ],
        FrameCode::EF05 => vec![
            "Does the paragraph speak about economic changes in policy or law or refer to any form of economic loss/gain, expense, costs, or economic consequences of a current policy or law?",
        ],
        FrameCode::NO06 => Vec::new(),
    }
}

/// All six frame definitions in index order.
pub fn codebook_text() -> Vec<FrameDefinition> {
    FrameCode::ALL
        .into_iter()
        .map(|code| FrameDefinition {
            code,
            name: code.name(),
            guiding_questions: guiding_questions(code),
        })
        .collect()
}

/// Renders the codebook as a markdown document for coder training.
pub fn codebook_markdown() -> String {
    let mut out = String::from("# Generic news frames codebook\n\n");
    out.push_str(
        "Unit of coding: one paragraph. Frames AR01-EF05 may be combined; \
         NO06 must be used alone. Mark the single most pronounced frame as main.\n",
    );
    for def in codebook_text() {
        out.push_str(&format!("\n## {} ({})\n\n", def.name, def.code));
        if def.guiding_questions.is_empty() {
            out.push_str("Use when none of the other frames apply.\n");
        }
        for (i, q) in def.guiding_questions.iter().enumerate() {
            out.push_str(&format!("{}. {}\n", i + 1, q));
        }
    }
    out
}

/// A rule a [`LabelSet`] can break.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum LabelRule {
    EmptyFrames,
    MainNotInFrames,
    NoFrameNotExclusive,
}

impl LabelRule {
    pub fn message(self) -> &'static str {
        match self {
            LabelRule::EmptyFrames => "frames must be non-empty",
            LabelRule::MainNotInFrames => "main not in frames",
            LabelRule::NoFrameNotExclusive => "NO06 must be exclusive",
        }
    }
}

impl fmt::Display for LabelRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.message())
    }
}

/// Non-empty list of broken rules, in [`LabelRule`] order.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid label set: {}", .0.iter().map(|r| r.message()).collect::<Vec<_>>().join("; "))]
pub struct LabelViolations(pub Vec<LabelRule>);

impl LabelViolations {
    pub fn rules(&self) -> &[LabelRule] {
        &self.0
    }

    pub fn messages(&self) -> Vec<&'static str> {
        self.0.iter().map(|r| r.message()).collect()
    }
}

/// Frames present in a paragraph plus the main one.
///
/// Fields are public so that label sets read from files or requests can be
/// held before they are checked; call [`LabelSet::validate`] before use.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LabelSet {
    pub frames: BTreeSet<FrameCode>,
    pub main: FrameCode,
}

impl LabelSet {
    /// Builds and validates in one step.
    pub fn new(
        frames: impl IntoIterator<Item = FrameCode>,
        main: FrameCode,
    ) -> Result<Self, LabelViolations> {
        let ls = LabelSet {
            frames: frames.into_iter().collect(),
            main,
        };
        ls.validate()?;
        Ok(ls)
    }

    pub fn single(main: FrameCode) -> Self {
        LabelSet {
            frames: BTreeSet::from([main]),
            main,
        }
    }

    pub fn validate(&self) -> Result<(), LabelViolations> {
        let mut broken = Vec::new();
        if self.frames.is_empty() {
            broken.push(LabelRule::EmptyFrames);
        }
        if !self.frames.contains(&self.main) {
            broken.push(LabelRule::MainNotInFrames);
        }
        let no_frame_mixed = self.frames.contains(&FrameCode::NO06) && self.frames.len() > 1;
        let no_frame_main_with_others =
            self.main == FrameCode::NO06 && self.frames.iter().any(|f| *f != FrameCode::NO06);
        if no_frame_mixed || no_frame_main_with_others {
            broken.push(LabelRule::NoFrameNotExclusive);
        }
        if broken.is_empty() {
            Ok(())
        } else {
            Err(LabelViolations(broken))
        }
    }
}

/// Free function form of [`LabelSet::validate`].
pub fn validate_label_set(ls: &LabelSet) -> Result<(), LabelViolations> {
    ls.validate()
}
