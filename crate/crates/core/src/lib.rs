//! Convolutional attention network for character-level Chinese named entity
//! recognition.
//!
//! ```text
//! chars + BMES marks ─▶ [window + position rows ─▶ local attention ─▶ conv sum-pool]
//!                    ─▶ BiGRU ─▶ [global self-attention] ─▶ [h^r; h^g] ─▶ CRF
//! ```
//!
//! Everything runs on a small `f64` tensor kernel with hand-written backward
//! passes, checked against central finite differences.

pub mod corpus;
pub mod crf;
pub mod encoder;
mod error;
pub mod model;
pub mod numerics;
pub mod sequence;

pub use corpus::{Sentence, Tag, Vocab};
pub use error::{Error, Result};
pub use model::{Arch, AttentionTrace, LabelSet, Model, ModelConfig};
pub use numerics::{Parameter, Tensor};
