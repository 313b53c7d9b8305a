//! Data ingestion, tag schemes, vocabulary, evaluation and synthetic data.

mod conll;
mod eval;
mod synthetic;
mod tags;
mod vocab;

pub use conll::{parse_conll, parse_conll_bytes, write_conll, ParseOptions, SegFallback};
pub use eval::{parse_group_map, score, Counts, EvalReport, ScoreOptions};
pub use synthetic::{gen_synthetic, gen_synthetic_with, SyntheticConfig};
pub use tags::{
    bio_to_bioes, bmes_from_words, extract_spans, is_bio_only, spans_to_bioes, transition_allowed, validate_bioes,
    validate_bmes, Mode, Prefix, Seg, Span, Tag,
};
pub use vocab::{build_vocab, Vocab};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CorpusError {
    #[error("cannot read {0}: {1}")]
    Io(String, String),
    #[error("line {line}: invalid UTF-8")]
    Utf8 { line: usize },
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("tag scheme error at position {position}: {message}")]
    TagScheme { position: usize, message: String },
    #[error("segmentation error: {0}")]
    Segmentation(String),
    #[error("sentence {sentence}: {message}")]
    Misaligned { sentence: usize, message: String },
    #[error("sentence {sentence} has no gold tags")]
    Unlabeled { sentence: usize },
    #[error("empty sentence")]
    EmptySentence,
}

/// A character sequence with BMES marks and optional gold BIOES tags.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub chars: Vec<char>,
    pub seg: Vec<Seg>,
    pub gold: Option<Vec<Tag>>,
}

impl Sentence {
    pub fn new(chars: Vec<char>, seg: Vec<Seg>, gold: Option<Vec<Tag>>) -> Result<Self, CorpusError> {
        if seg.len() != chars.len() {
            return Err(CorpusError::Segmentation(format!(
                "{} marks for {} characters",
                seg.len(),
                chars.len()
            )));
        }
        validate_bmes(&seg)?;
        if let Some(g) = &gold {
            if g.len() != chars.len() {
                return Err(CorpusError::Misaligned {
                    sentence: 0,
                    message: format!("{} tags for {} characters", g.len(), chars.len()),
                });
            }
        }
        Ok(Self { chars, seg, gold })
    }

    /// Every character marked as a single-character word, no gold tags.
    pub fn unsegmented(chars: Vec<char>) -> Self {
        let seg = vec![Seg::S; chars.len()];
        Self { chars, seg, gold: None }
    }

    /// Builds from a word segmentation, e.g. `["南京市", "长江大桥"]`.
    pub fn from_words<S: AsRef<str>>(words: &[S]) -> Result<Self, CorpusError> {
        let seg = bmes_from_words(words, None)?;
        let chars = words.iter().flat_map(|w| w.as_ref().chars()).collect();
        Self::new(chars, seg, None)
    }

    pub fn len(&self) -> usize {
        self.chars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chars.is_empty()
    }

    pub fn text(&self) -> String {
        self.chars.iter().collect()
    }
}
