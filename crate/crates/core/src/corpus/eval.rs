//! Entity-level precision / recall / F1 on exact `(start, end, type)` matches.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::tags::{extract_spans, Mode, Tag};
use super::{CorpusError, Sentence};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub gold: usize,
    pub pred: usize,
    pub correct: usize,
}

impl Counts {
    fn add(&mut self, other: Counts) {
        self.gold += other.gold;
        self.pred += other.pred;
        self.correct += other.correct;
    }

    /// Percent; 0 when nothing was predicted.
    pub fn precision(&self) -> f64 {
        ratio(self.correct, self.pred)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.correct, self.gold)
    }

    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        100.0 * num as f64 / den as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreOptions {
    pub gold_mode: Mode,
    pub pred_mode: Mode,
}

impl Default for ScoreOptions {
    fn default() -> Self {
        Self { gold_mode: Mode::Strict, pred_mode: Mode::Lenient }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub overall: Counts,
    pub by_type: BTreeMap<String, Counts>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty", default)]
    pub by_group: BTreeMap<String, Counts>,
}

impl EvalReport {
    pub fn f1(&self) -> f64 {
        self.overall.f1()
    }

    /// Adds rollup rows, summing per-type counts of every type mapped to
    /// the same group. Unmapped types belong to no group.
    pub fn with_groups(mut self, groups: &BTreeMap<String, String>) -> Self {
        self.by_group.clear();
        for (kind, counts) in &self.by_type {
            if let Some(g) = groups.get(kind) {
                self.by_group.entry(g.clone()).or_default().add(*counts);
            }
        }
        self
    }

    /// Flat `key=value` lines.
    pub fn to_kv_text(&self) -> String {
        let mut out = String::new();
        let mut row = |prefix: &str, c: &Counts| {
            let _ = writeln!(out, "{prefix}.precision={:.2}", c.precision());
            let _ = writeln!(out, "{prefix}.recall={:.2}", c.recall());
            let _ = writeln!(out, "{prefix}.f1={:.2}", c.f1());
            let _ = writeln!(out, "{prefix}.gold={}", c.gold);
            let _ = writeln!(out, "{prefix}.pred={}", c.pred);
            let _ = writeln!(out, "{prefix}.correct={}", c.correct);
        };
        row("overall", &self.overall);
        for (k, c) in &self.by_type {
            row(&format!("type.{k}"), c);
        }
        for (k, c) in &self.by_group {
            row(&format!("group.{k}"), c);
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report is always serializable")
    }
}

pub fn score(gold: &[Sentence], predicted: &[Vec<Tag>], opts: ScoreOptions) -> Result<EvalReport, CorpusError> {
    if gold.len() != predicted.len() {
        return Err(CorpusError::Misaligned {
            sentence: gold.len().min(predicted.len()),
            message: format!("{} gold sentences vs {} predicted", gold.len(), predicted.len()),
        });
    }
    let mut report = EvalReport::default();
    for (i, (g, p)) in gold.iter().zip(predicted).enumerate() {
        let gold_tags = g.gold.as_ref().ok_or(CorpusError::Unlabeled { sentence: i })?;
        if gold_tags.len() != p.len() {
            return Err(CorpusError::Misaligned {
                sentence: i,
                message: format!("gold length {} vs predicted length {}", gold_tags.len(), p.len()),
            });
        }
        let gold_spans = extract_spans(gold_tags, opts.gold_mode);
        let pred_spans = extract_spans(p, opts.pred_mode);
        for s in &gold_spans {
            report.by_type.entry(s.kind.clone()).or_default().gold += 1;
        }
        for s in &pred_spans {
            let c = report.by_type.entry(s.kind.clone()).or_default();
            c.pred += 1;
            if gold_spans.contains(s) {
                c.correct += 1;
            }
        }
    }
    for c in report.by_type.values() {
        report.overall.add(*c);
    }
    Ok(report)
}

/// Parses `TYPE <whitespace> GROUP` lines; `#` starts a comment.
pub fn parse_group_map(text: &str) -> Result<BTreeMap<String, String>, CorpusError> {
    let mut map = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split_whitespace();
        match (fields.next(), fields.next(), fields.next()) {
            (Some(t), Some(g), None) => {
                map.insert(t.to_string(), g.to_string());
            }
            _ => {
                return Err(CorpusError::Format { line: i + 1, message: "expected `TYPE GROUP`".into() });
            }
        }
    }
    Ok(map)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::tags::Seg;

    fn labeled(tags: &str) -> Sentence {
        let tags: Vec<Tag> = tags.split_whitespace().map(|t| t.parse().unwrap()).collect();
        let n = tags.len();
        Sentence::new(vec!['x'; n], vec![Seg::S; n], Some(tags)).unwrap()
    }

    fn tags(s: &str) -> Vec<Tag> {
        s.split_whitespace().map(|t| t.parse().unwrap()).collect()
    }

    #[test]
    fn perfect() {
        let gold = [labeled("B-PER E-PER O S-LOC")];
        let r = score(&gold, &[tags("B-PER E-PER O S-LOC")], ScoreOptions::default()).unwrap();
        assert_eq!((r.overall.precision(), r.overall.recall(), r.f1()), (100.0, 100.0, 100.0));
    }

    #[test]
    fn disjoint() {
        let gold = [labeled("B-PER E-PER O O")];
        let r = score(&gold, &[tags("O O S-LOC O")], ScoreOptions::default()).unwrap();
        assert_eq!((r.overall.precision(), r.overall.recall(), r.f1()), (0.0, 0.0, 0.0));
    }

    #[test]
    fn half_recall() {
        let gold = [labeled("B-PER E-PER O S-LOC")];
        let r = score(&gold, &[tags("B-PER E-PER O O")], ScoreOptions::default()).unwrap();
        assert_eq!(r.overall.precision(), 100.0);
        assert_eq!(r.overall.recall(), 50.0);
        assert!((r.f1() - 200.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn per_type_sums_to_overall_and_groups() {
        let gold = [labeled("S-PER.NAM O S-PER.NOM B-LOC.NAM E-LOC.NAM")];
        let r = score(&gold, &[tags("S-PER.NAM O S-LOC.NOM B-LOC.NAM E-LOC.NAM")], ScoreOptions::default()).unwrap();
        let sum = r.by_type.values().fold((0, 0, 0), |a, c| (a.0 + c.gold, a.1 + c.pred, a.2 + c.correct));
        assert_eq!(sum, (r.overall.gold, r.overall.pred, r.overall.correct));

        let groups = parse_group_map("PER.NAM NE\nLOC.NAM NE\nPER.NOM NM\nLOC.NOM NM # nominal\n").unwrap();
        let r = r.with_groups(&groups);
        assert_eq!(r.by_group["NE"], Counts { gold: 2, pred: 2, correct: 2 });
        assert_eq!(r.by_group["NM"], Counts { gold: 1, pred: 1, correct: 0 });
        assert!(r.to_kv_text().contains("group.NE.f1=100.00"));
    }

    #[test]
    fn length_mismatch() {
        let gold = [labeled("O O")];
        let err = score(&gold, &[tags("O")], ScoreOptions::default()).unwrap_err();
        assert!(matches!(err, CorpusError::Misaligned { sentence: 0, .. }));
    }

    #[test]
    fn lenient_prediction_scoring() {
        let gold = [labeled("S-PER O")];
        // A dangling B still counts as a one-character span.
        let r = score(&gold, &[tags("B-PER O")], ScoreOptions::default()).unwrap();
        assert_eq!(r.f1(), 100.0);
    }
}
