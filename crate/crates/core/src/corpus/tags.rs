//! BIOES entity tags, BMES segmentation marks, and span conversion.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::CorpusError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Prefix {
    B,
    I,
    E,
    S,
}

/// One BIO or BIOES tag such as `B-PER` or `O`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Tag {
    Outside,
    Entity { prefix: Prefix, kind: String },
}

impl Tag {
    pub fn new(prefix: Prefix, kind: impl Into<String>) -> Self {
        Tag::Entity { prefix, kind: kind.into() }
    }

    pub fn prefix(&self) -> Option<Prefix> {
        match self {
            Tag::Outside => None,
            Tag::Entity { prefix, .. } => Some(*prefix),
        }
    }

    pub fn kind(&self) -> Option<&str> {
        match self {
            Tag::Outside => None,
            Tag::Entity { kind, .. } => Some(kind),
        }
    }

    fn with_prefix(&self, prefix: Prefix) -> Tag {
        match self {
            Tag::Outside => Tag::Outside,
            Tag::Entity { kind, .. } => Tag::new(prefix, kind.clone()),
        }
    }

    /// `self` continues a span of type `kind` (I-kind or E-kind).
    fn continues(&self, kind: &str) -> bool {
        matches!(self, Tag::Entity { prefix: Prefix::I | Prefix::E, kind: k } if k == kind)
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tag::Outside => f.write_str("O"),
            Tag::Entity { prefix, kind } => write!(f, "{prefix:?}-{kind}"),
        }
    }
}

impl FromStr for Tag {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "O" {
            return Ok(Tag::Outside);
        }
        let (p, kind) = s
            .split_once('-')
            .ok_or_else(|| format!("malformed tag `{s}` (expected O or <B|I|E|S>-<TYPE>)"))?;
        let prefix = match p {
            "B" => Prefix::B,
            "I" | "M" => Prefix::I,
            "E" => Prefix::E,
            "S" => Prefix::S,
            _ => return Err(format!("unknown tag prefix in `{s}`")),
        };
        if kind.is_empty() {
            return Err(format!("missing entity type in `{s}`"));
        }
        Ok(Tag::new(prefix, kind))
    }
}

/// Word-segmentation mark of a character.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Seg {
    B,
    M,
    E,
    S,
}

impl Seg {
    pub const COUNT: usize = 4;

    pub fn index(self) -> usize {
        match self {
            Seg::B => 0,
            Seg::M => 1,
            Seg::E => 2,
            Seg::S => 3,
        }
    }

    pub fn as_char(self) -> char {
        match self {
            Seg::B => 'B',
            Seg::M => 'M',
            Seg::E => 'E',
            Seg::S => 'S',
        }
    }

    pub fn parse(s: &str) -> Option<Seg> {
        match s {
            "B" => Some(Seg::B),
            "M" | "I" => Some(Seg::M),
            "E" => Some(Seg::E),
            "S" => Some(Seg::S),
            _ => None,
        }
    }
}

/// Strictness when a tag sequence is malformed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Mode {
    #[default]
    Strict,
    Lenient,
}

/// Entity span, `end` inclusive.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
    pub kind: String,
}

impl Span {
    pub fn new(start: usize, end: usize, kind: impl Into<String>) -> Self {
        Self { start, end, kind: kind.into() }
    }
}

/// Converts BIO to BIOES.
///
/// Strict mode rejects an `I` that does not continue a span of its own type,
/// and any `E`/`S` input. Lenient mode repairs an orphan `I` into a `B` and
/// accepts input that is already BIOES, so it is idempotent.
pub fn bio_to_bioes(tags: &[Tag], mode: Mode) -> Result<Vec<Tag>, CorpusError> {
    let mut out = Vec::with_capacity(tags.len());
    let mut open: Option<&str> = None;
    for (i, tag) in tags.iter().enumerate() {
        let next = tags.get(i + 1);
        let Tag::Entity { prefix, kind } = tag else {
            out.push(Tag::Outside);
            open = None;
            continue;
        };
        let continues_open = open == Some(kind.as_str());
        let starts = match (prefix, mode) {
            (Prefix::B, _) | (Prefix::S, Mode::Lenient) => true,
            (Prefix::I, _) | (Prefix::E, Mode::Lenient) if continues_open => false,
            (Prefix::I, Mode::Lenient) | (Prefix::E, Mode::Lenient) => true,
            (Prefix::I, Mode::Strict) => {
                return Err(CorpusError::TagScheme {
                    position: i,
                    message: format!("`{tag}` does not continue a `{kind}` span"),
                })
            }
            (Prefix::E | Prefix::S, Mode::Strict) => {
                return Err(CorpusError::TagScheme {
                    position: i,
                    message: format!("`{tag}` is not a BIO tag"),
                })
            }
        };
        // E and S close their span even in lenient mode.
        let closes_here = matches!(prefix, Prefix::E | Prefix::S);
        let more = !closes_here && next.is_some_and(|n| n.continues(kind));
        let new_prefix = match (starts, more) {
            (true, true) => Prefix::B,
            (true, false) => Prefix::S,
            (false, true) => Prefix::I,
            (false, false) => Prefix::E,
        };
        out.push(tag.with_prefix(new_prefix));
        open = if more { Some(kind.as_str()) } else { None };
    }
    Ok(out)
}

/// Checks BIOES well-formedness.
pub fn validate_bioes(tags: &[Tag]) -> Result<(), CorpusError> {
    let mut open: Option<&str> = None;
    for (i, tag) in tags.iter().enumerate() {
        let bad = |message: String| CorpusError::TagScheme { position: i, message };
        match (tag, open) {
            (Tag::Outside, None) => {}
            (Tag::Entity { prefix: Prefix::B | Prefix::S, .. }, None) => {}
            (Tag::Entity { prefix: Prefix::I | Prefix::E, kind }, Some(o)) if o == kind => {}
            (_, Some(o)) => return Err(bad(format!("`{tag}` inside an unterminated `{o}` span"))),
            (_, None) => return Err(bad(format!("`{tag}` without a preceding B"))),
        }
        open = match tag {
            Tag::Entity { prefix: Prefix::B | Prefix::I, kind } => Some(kind),
            _ => None,
        };
    }
    if let Some(o) = open {
        return Err(CorpusError::TagScheme {
            position: tags.len(),
            message: format!("`{o}` span not terminated by E"),
        });
    }
    Ok(())
}

/// Extracts entity spans from a BIOES sequence.
///
/// Strict mode keeps only well-formed `B I* E` runs and `S` tags. Lenient mode
/// first repairs the sequence with [`bio_to_bioes`], so a dangling `B` or an
/// orphan `E` still yields a span.
pub fn extract_spans(tags: &[Tag], mode: Mode) -> BTreeSet<Span> {
    if mode == Mode::Lenient {
        let repaired = bio_to_bioes(tags, Mode::Lenient).expect("lenient conversion cannot fail");
        return extract_spans(&repaired, Mode::Strict);
    }
    let mut spans = BTreeSet::new();
    let mut start: Option<(usize, &str)> = None;
    for (i, tag) in tags.iter().enumerate() {
        match tag {
            Tag::Outside => start = None,
            Tag::Entity { prefix, kind } => match prefix {
                Prefix::S => {
                    spans.insert(Span::new(i, i, kind.clone()));
                    start = None;
                }
                Prefix::B => start = Some((i, kind)),
                Prefix::I => {
                    if !matches!(start, Some((_, k)) if k == kind) {
                        start = None;
                    }
                }
                Prefix::E => {
                    if let Some((s, k)) = start {
                        if k == kind {
                            spans.insert(Span::new(s, i, kind.clone()));
                        }
                    }
                    start = None;
                }
            },
        }
    }
    spans
}

/// Encodes non-overlapping spans as a BIOES sequence of length `len`.
pub fn spans_to_bioes(len: usize, spans: &BTreeSet<Span>) -> Result<Vec<Tag>, CorpusError> {
    let mut tags = vec![Tag::Outside; len];
    for span in spans {
        if span.start > span.end || span.end >= len {
            return Err(CorpusError::TagScheme {
                position: span.start,
                message: format!("span {}..={} out of range for length {len}", span.start, span.end),
            });
        }
        if tags[span.start..=span.end].iter().any(|t| *t != Tag::Outside) {
            return Err(CorpusError::TagScheme {
                position: span.start,
                message: "overlapping spans".into(),
            });
        }
        if span.start == span.end {
            tags[span.start] = Tag::new(Prefix::S, span.kind.clone());
        } else {
            tags[span.start] = Tag::new(Prefix::B, span.kind.clone());
            for t in &mut tags[span.start + 1..span.end] {
                *t = Tag::new(Prefix::I, span.kind.clone());
            }
            tags[span.end] = Tag::new(Prefix::E, span.kind.clone());
        }
    }
    Ok(tags)
}

/// BMES marks from a word segmentation of `sentence`.
pub fn bmes_from_words<S: AsRef<str>>(words: &[S], sentence: Option<&str>) -> Result<Vec<Seg>, CorpusError> {
    let mut marks = Vec::new();
    let mut joined = String::new();
    for word in words {
        let word = word.as_ref();
        let n = word.chars().count();
        if n == 0 {
            return Err(CorpusError::Segmentation("empty word".into()));
        }
        joined.push_str(word);
        if n == 1 {
            marks.push(Seg::S);
        } else {
            marks.push(Seg::B);
            marks.extend(std::iter::repeat_n(Seg::M, n - 2));
            marks.push(Seg::E);
        }
    }
    if let Some(s) = sentence {
        if s != joined {
            return Err(CorpusError::Segmentation(format!("words `{joined}` do not cover sentence `{s}`")));
        }
    }
    Ok(marks)
}

pub fn validate_bmes(seg: &[Seg]) -> Result<(), CorpusError> {
    let mut inside = false;
    for (i, s) in seg.iter().enumerate() {
        let ok = match s {
            Seg::B | Seg::S => !inside,
            Seg::M | Seg::E => inside,
        };
        if !ok {
            return Err(CorpusError::Segmentation(format!("invalid BMES mark {:?} at position {i}", s)));
        }
        inside = matches!(s, Seg::B | Seg::M);
    }
    if inside {
        return Err(CorpusError::Segmentation("unterminated word at end of sentence".into()));
    }
    Ok(())
}

/// Tags in a sentence use only B/I/O prefixes.
pub fn is_bio_only(tags: &[Tag]) -> bool {
    tags.iter().all(|t| !matches!(t.prefix(), Some(Prefix::E | Prefix::S)))
}

/// BIOES transition validity; `None` stands for the sentence boundary.
pub fn transition_allowed(from: Option<&Tag>, to: Option<&Tag>) -> bool {
    let from_open = from.and_then(|f| match f {
        Tag::Entity { prefix: Prefix::B | Prefix::I, kind } => Some(kind.as_str()),
        _ => None,
    });
    match (from_open, to) {
        (Some(k), Some(t)) => t.continues(k),
        (Some(_), None) => false,
        (None, Some(t)) => !matches!(t.prefix(), Some(Prefix::I | Prefix::E)),
        (None, None) => true,
    }
}
