use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::Sentence;

/// Character vocabulary. Ids 0 and 1 are reserved for UNK and PAD; the rest
/// are ordered by descending frequency, then by codepoint.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "Vec<char>", try_from = "Vec<char>")]
pub struct Vocab {
    chars: Vec<char>,
    index: HashMap<char, usize>,
}

impl Vocab {
    pub const UNK: usize = 0;
    pub const PAD: usize = 1;
    pub const RESERVED: usize = 2;

    /// Builds from characters already in id order (ids start after the
    /// reserved slots).
    pub fn from_chars(chars: Vec<char>) -> Result<Self, String> {
        let mut index = HashMap::with_capacity(chars.len());
        for (i, &c) in chars.iter().enumerate() {
            if index.insert(c, i + Self::RESERVED).is_some() {
                return Err(format!("duplicate vocabulary entry `{c}`"));
            }
        }
        Ok(Self { chars, index })
    }

    /// Total number of rows, reserved ids included.
    pub fn len(&self) -> usize {
        self.chars.len() + Self::RESERVED
    }

    pub fn is_empty(&self) -> bool {
        self.chars.is_empty()
    }

    pub fn id(&self, c: char) -> usize {
        self.index.get(&c).copied().unwrap_or(Self::UNK)
    }

    pub fn contains(&self, c: char) -> bool {
        self.index.contains_key(&c)
    }

    pub fn char_of(&self, id: usize) -> Option<char> {
        id.checked_sub(Self::RESERVED).and_then(|i| self.chars.get(i)).copied()
    }

    pub fn chars(&self) -> &[char] {
        &self.chars
    }

    pub fn encode(&self, chars: &[char]) -> Vec<usize> {
        chars.iter().map(|&c| self.id(c)).collect()
    }
}

impl From<Vocab> for Vec<char> {
    fn from(v: Vocab) -> Self {
        v.chars
    }
}

impl TryFrom<Vec<char>> for Vocab {
    type Error = String;

    fn try_from(chars: Vec<char>) -> Result<Self, Self::Error> {
        Vocab::from_chars(chars)
    }
}

pub fn build_vocab(corpus: &[Sentence], min_freq: usize) -> Vocab {
    let mut counts: HashMap<char, usize> = HashMap::new();
    for s in corpus {
        for &c in &s.chars {
            *counts.entry(c).or_default() += 1;
        }
    }
    let mut entries: Vec<(char, usize)> = counts.into_iter().filter(|&(_, n)| n >= min_freq.max(1)).collect();
    entries.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    Vocab::from_chars(entries.into_iter().map(|(c, _)| c).collect()).expect("counts are unique per char")
}
