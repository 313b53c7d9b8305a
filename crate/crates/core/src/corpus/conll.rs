//! CoNLL-style character files: one `char [TAB tag [TAB bmes]]` line per
//! character, sentences separated by blank lines.

use std::fmt::Write as _;
use std::path::Path;

use super::tags::{bio_to_bioes, is_bio_only, validate_bioes, Mode, Seg, Tag};
use super::{CorpusError, Sentence};

/// How to obtain BMES marks when the file has no segmentation column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SegFallback {
    /// Every character is its own word.
    #[default]
    Single,
    /// A missing column is an error.
    Require,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ParseOptions {
    pub seg_fallback: SegFallback,
    /// Strictness applied when converting BIO gold tags to BIOES.
    pub tag_mode: Mode,
}

pub fn parse_conll(path: &Path, opts: ParseOptions) -> Result<Vec<Sentence>, CorpusError> {
    let bytes = std::fs::read(path).map_err(|e| CorpusError::Io(path.display().to_string(), e.to_string()))?;
    parse_conll_bytes(&bytes, opts)
}

#[derive(Default)]
struct Pending {
    first_line: usize,
    columns: Option<usize>,
    chars: Vec<char>,
    tags: Vec<Tag>,
    seg: Vec<Seg>,
}

pub fn parse_conll_bytes(bytes: &[u8], opts: ParseOptions) -> Result<Vec<Sentence>, CorpusError> {
    let mut sentences = Vec::new();
    let mut cur = Pending::default();
    let bytes = bytes.strip_prefix(b"\xEF\xBB\xBF").unwrap_or(bytes);
    for (idx, raw) in bytes.split(|&b| b == b'\n').enumerate() {
        let line_no = idx + 1;
        let line = std::str::from_utf8(raw).map_err(|_| CorpusError::Utf8 { line: line_no })?;
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.trim().is_empty() {
            flush(&mut cur, &mut sentences, opts)?;
            continue;
        }
        let fields: Vec<&str> = line.split(['\t', ' ']).filter(|f| !f.is_empty()).collect();
        let format = |message: String| CorpusError::Format { line: line_no, message };
        if fields.len() > 3 {
            return Err(format(format!("expected 1 to 3 columns, found {}", fields.len())));
        }
        if cur.chars.is_empty() {
            cur.first_line = line_no;
        }
        match cur.columns {
            None => cur.columns = Some(fields.len()),
            Some(n) if n != fields.len() => {
                return Err(format(format!("{} columns, but the sentence started with {n}", fields.len())))
            }
            _ => {}
        }
        let mut it = fields[0].chars();
        let ch = match (it.next(), it.next()) {
            (Some(c), None) => c,
            _ => return Err(format(format!("token `{}` is not a single character", fields[0]))),
        };
        cur.chars.push(ch);
        if let Some(t) = fields.get(1) {
            cur.tags.push(t.parse().map_err(format)?);
        }
        if let Some(s) = fields.get(2) {
            cur.seg.push(Seg::parse(s).ok_or_else(|| format(format!("invalid BMES mark `{s}`")))?);
        }
    }
    flush(&mut cur, &mut sentences, opts)?;
    Ok(sentences)
}

fn flush(cur: &mut Pending, out: &mut Vec<Sentence>, opts: ParseOptions) -> Result<(), CorpusError> {
    if cur.chars.is_empty() {
        return Ok(());
    }
    let p = std::mem::take(cur);
    let at = |e: CorpusError| CorpusError::Format { line: p.first_line, message: format!("sentence: {e}") };
    let seg = if p.seg.is_empty() {
        match opts.seg_fallback {
            SegFallback::Single => vec![Seg::S; p.chars.len()],
            SegFallback::Require => {
                return Err(at(CorpusError::Segmentation("missing BMES column".into())));
            }
        }
    } else {
        p.seg
    };
    let gold = if p.tags.is_empty() {
        None
    } else if is_bio_only(&p.tags) {
        Some(bio_to_bioes(&p.tags, opts.tag_mode).map_err(at)?)
    } else {
        if opts.tag_mode == Mode::Strict {
            validate_bioes(&p.tags).map_err(at)?;
            Some(p.tags)
        } else {
            Some(bio_to_bioes(&p.tags, Mode::Lenient).map_err(at)?)
        }
    };
    out.push(Sentence::new(p.chars, seg, gold).map_err(at)?);
    Ok(())
}

/// Renders sentences back to CoNLL text. `tags` overrides the gold column.
pub fn write_conll(sentences: &[Sentence], tags: Option<&[Vec<Tag>]>, with_seg: bool) -> String {
    let mut out = String::new();
    for (i, s) in sentences.iter().enumerate() {
        let column = tags.map(|t| t[i].as_slice()).or(s.gold.as_deref());
        for (j, ch) in s.chars.iter().enumerate() {
            out.push(*ch);
            if let Some(t) = column {
                let _ = write!(out, "\t{}", t[j]);
            }
            if with_seg {
                let _ = write!(out, "\t{}", s.seg[j].as_char());
            }
            out.push('\n');
        }
        out.push('\n');
    }
    out
}
