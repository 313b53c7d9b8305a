//! The assembled network, its training loop, and persistence.

mod checkpoint;
mod config;
mod embeddings;
mod network;
mod train;

pub use checkpoint::{load, save, save_with_optimizer, write_atomic, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::{Arch, ModelConfig};
pub use embeddings::{load_embeddings, parse_embeddings, Embeddings};
pub use network::{BatchObjective, Model};
pub use train::{evaluate, train, train_with_observer, EpochLog, TrainLog, TrainOutcome};

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::corpus::{Prefix, Sentence, Tag};
use crate::numerics::Tensor;
use crate::Error;

/// Ordered BIOES label inventory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "Vec<String>", try_from = "Vec<String>")]
pub struct LabelSet {
    tags: Vec<Tag>,
    index: HashMap<Tag, usize>,
}

impl LabelSet {
    pub fn new(tags: Vec<Tag>) -> Result<Self, Error> {
        if tags.is_empty() {
            return Err(Error::Config("empty label set".into()));
        }
        let mut index = HashMap::with_capacity(tags.len());
        for (i, t) in tags.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::Config(format!("duplicate label `{t}`")));
            }
        }
        Ok(Self { tags, index })
    }

    /// `O` followed by `B/I/E/S` for every entity type, types sorted.
    pub fn bioes<S: AsRef<str>>(types: impl IntoIterator<Item = S>) -> Self {
        let types: BTreeSet<String> = types.into_iter().map(|s| s.as_ref().to_string()).collect();
        let mut tags = vec![Tag::Outside];
        for t in &types {
            for p in [Prefix::B, Prefix::I, Prefix::E, Prefix::S] {
                tags.push(Tag::new(p, t.clone()));
            }
        }
        Self::new(tags).expect("types are unique")
    }

    /// Label set covering every entity type in the gold tags of `corpus`.
    pub fn from_corpus(corpus: &[Sentence]) -> Self {
        Self::bioes(corpus.iter().flat_map(|s| s.gold.iter().flatten()).filter_map(|t| t.kind()))
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    pub fn tags(&self) -> &[Tag] {
        &self.tags
    }

    pub fn tag(&self, i: usize) -> &Tag {
        &self.tags[i]
    }

    pub fn index(&self, t: &Tag) -> Result<usize, Error> {
        self.index.get(t).copied().ok_or_else(|| Error::UnknownLabel(t.to_string()))
    }

    pub fn encode(&self, tags: &[Tag]) -> Result<Vec<usize>, Error> {
        tags.iter().map(|t| self.index(t)).collect()
    }

    pub fn names(&self) -> Vec<String> {
        self.tags.iter().map(|t| t.to_string()).collect()
    }
}

impl From<LabelSet> for Vec<String> {
    fn from(l: LabelSet) -> Self {
        l.names()
    }
}

impl TryFrom<Vec<String>> for LabelSet {
    type Error = String;

    fn try_from(names: Vec<String>) -> Result<Self, Self::Error> {
        let tags = names.iter().map(|n| n.parse()).collect::<Result<Vec<Tag>, _>>()?;
        LabelSet::new(tags).map_err(|e| e.to_string())
    }
}

/// Normalized attention weights for one sentence. Rows are query positions,
/// columns are context positions (window offsets for `local`).
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionTrace {
    pub sentence_id: usize,
    pub chars: Vec<char>,
    /// `τ × k`.
    pub local: Option<Tensor>,
    /// `τ × τ`.
    pub global: Option<Tensor>,
}

impl AttentionTrace {
    pub fn is_empty(&self) -> bool {
        self.local.is_none() && self.global.is_none()
    }

    /// Largest deviation of any row sum from 1.
    pub fn max_row_sum_error(&self) -> f64 {
        [&self.local, &self.global]
            .into_iter()
            .flatten()
            .flat_map(|t| (0..t.rows()).map(move |i| (t.row(i).iter().sum::<f64>() - 1.0).abs()))
            .fold(0.0, f64::max)
    }

    /// Structured export for external plotting.
    pub fn to_json(&self) -> serde_json::Value {
        let matrix = |t: &Tensor| -> Vec<Vec<f64>> { (0..t.rows()).map(|i| t.row(i).to_vec()).collect() };
        let chars: Vec<String> = self.chars.iter().map(|c| c.to_string()).collect();
        let mut out = serde_json::json!({
            "sentence_id": self.sentence_id,
            "text": self.chars.iter().collect::<String>(),
            "rows": "query position",
            "columns": "context",
        });
        if let Some(local) = &self.local {
            let k = local.row_len() as i64;
            let offsets: Vec<i64> = (0..k).map(|m| m - (k - 1) / 2).collect();
            let context: Vec<Vec<String>> = (0..local.rows())
                .map(|j| {
                    offsets
                        .iter()
                        .map(|&o| {
                            let p = j as i64 + o;
                            if p < 0 || p >= chars.len() as i64 {
                                "<pad>".to_string()
                            } else {
                                chars[p as usize].clone()
                            }
                        })
                        .collect()
                })
                .collect();
            out["local"] = serde_json::json!({
                "row_labels": chars,
                "column_offsets": offsets,
                "context_chars": context,
                "weights": matrix(local),
            });
        }
        if let Some(global) = &self.global {
            out["global"] = serde_json::json!({
                "row_labels": chars,
                "column_labels": chars,
                "weights": matrix(global),
            });
        }
        out
    }
}
