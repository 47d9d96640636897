//! Phrase-level exact-match scoring and BIO dimension reduction.
//!
//! A prediction counts only when span and type both match a gold phrase
//! exactly; BIO projection flattens the nested forest to per-character
//! tags for comparison with end-to-end taggers.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotation::{AnnotatedSentence, PhraseNode, PhraseType, Span};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl Prf {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Prf {
        let precision = if tp + fp > 0 {
            tp as f64 / (tp + fp) as f64
        } else {
            0.0
        };
        let recall = if tp + fn_ > 0 {
            tp as f64 / (tp + fn_) as f64
        } else {
            0.0
        };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Prf {
            precision,
            recall,
            f1,
            tp,
            fp,
            fn_,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MetricError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
}

/// Exact span+type matching with greedy 1-1 assignment.
pub fn phrase_prf(pred: &[(Span, PhraseType)], gold: &[(Span, PhraseType)]) -> Prf {
    let mut gold_used = vec![false; gold.len()];
    let mut tp = 0;
    for p in pred {
        if let Some(i) = gold
            .iter()
            .enumerate()
            .position(|(i, g)| !gold_used[i] && g == p)
        {
            gold_used[i] = true;
            tp += 1;
        }
    }
    Prf::from_counts(tp, pred.len() - tp, gold.len() - tp)
}

/// A per-character Begin/Inside/Outside tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BioTag {
    Outside,
    Begin(PhraseType),
    Inside(PhraseType),
}

impl BioTag {
    pub fn to_string(self) -> String {
        match self {
            BioTag::Outside => "O".to_string(),
            BioTag::Begin(t) => format!("B-{}", t.short_name()),
            BioTag::Inside(t) => format!("I-{}", t.short_name()),
        }
    }

    pub fn parse(s: &str) -> Option<BioTag> {
        if s == "O" {
            return Some(BioTag::Outside);
        }
        let (prefix, name) = s.split_once('-')?;
        let kind = PhraseType::ALL
            .iter()
            .copied()
            .find(|t| t.short_name() == name)?;
        match prefix {
            "B" => Some(BioTag::Begin(kind)),
            "I" => Some(BioTag::Inside(kind)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BioLevel {
    Outermost,
    Innermost,
}

impl std::str::FromStr for BioLevel {
    type Err = String;
    fn from_str(s: &str) -> Result<BioLevel, String> {
        match s {
            "outermost" => Ok(BioLevel::Outermost),
            "innermost" => Ok(BioLevel::Innermost),
            other => Err(format!("unknown level '{other}' (outermost|innermost)")),
        }
    }
}

/// Project a nested forest down to one BIO tag per character.
///
/// Outermost keeps the root spans; innermost keeps, per character, the
/// deepest span covering it.
pub fn project_bio(s: &AnnotatedSentence, level: BioLevel) -> Vec<BioTag> {
    let n = s.len();
    let mut tags = vec![BioTag::Outside; n];
    match level {
        BioLevel::Outermost => {
            for node in &s.roots {
                tag_span(&mut tags, &node.span, node.kind);
            }
        }
        BioLevel::Innermost => {
            // Deepest covering span per character.
            let mut deepest: Vec<Option<(usize, Span, PhraseType)>> = vec![None; n];
            fn walk(
                nodes: &[PhraseNode],
                depth: usize,
                deepest: &mut [Option<(usize, Span, PhraseType)>],
            ) {
                for node in nodes {
                    for i in node.span.start - 1..node.span.end {
                        match deepest[i] {
                            Some((d, _, _)) if d >= depth => {}
                            _ => deepest[i] = Some((depth, node.span, node.kind)),
                        }
                    }
                    walk(&node.children, depth + 1, deepest);
                }
            }
            walk(&s.roots, 0, &mut deepest);
            for i in 0..n {
                if let Some((_, span, kind)) = deepest[i] {
                    tags[i] = if i + 1 == span.start {
                        BioTag::Begin(kind)
                    } else {
                        BioTag::Inside(kind)
                    };
                }
            }
            // A deeper span may shadow the start of its parent: any I-k
            // run without a head becomes a fresh B-k.
            repair_bio(&mut tags);
        }
    }
    tags
}

fn tag_span(tags: &mut [BioTag], span: &Span, kind: PhraseType) {
    tags[span.start - 1] = BioTag::Begin(kind);
    for i in span.start..span.end {
        tags[i] = BioTag::Inside(kind);
    }
}

/// Illegal `I-k` (no preceding B-k/I-k of the same type) becomes `B-k`.
pub fn repair_bio(tags: &mut [BioTag]) {
    for i in 0..tags.len() {
        if let BioTag::Inside(k) = tags[i] {
            let legal = i > 0
                && matches!(tags[i - 1],
                    BioTag::Begin(p) | BioTag::Inside(p) if p == k);
            if !legal {
                tags[i] = BioTag::Begin(k);
            }
        }
    }
}

/// Decode maximal B-I runs into typed spans (1-based).
pub fn bio_to_spans(tags: &[BioTag]) -> Vec<(Span, PhraseType)> {
    let mut repaired = tags.to_vec();
    repair_bio(&mut repaired);
    let mut out = Vec::new();
    let mut open: Option<(usize, PhraseType)> = None;
    for (i, tag) in repaired.iter().enumerate() {
        match *tag {
            BioTag::Begin(k) => {
                if let Some((start, kind)) = open.take() {
                    out.push((Span::new(start, i), kind));
                }
                open = Some((i + 1, k));
            }
            BioTag::Inside(_) => {}
            BioTag::Outside => {
                if let Some((start, kind)) = open.take() {
                    out.push((Span::new(start, i), kind));
                }
            }
        }
    }
    if let Some((start, kind)) = open {
        out.push((Span::new(start, repaired.len()), kind));
    }
    out
}

/// Phrase-level scoring of two tag sequences: decode runs into spans and
/// require every tag of a phrase to be right.
pub fn bio_phrase_f1(pred: &[BioTag], gold: &[BioTag]) -> Result<Prf, MetricError> {
    if pred.len() != gold.len() {
        return Err(MetricError::LengthMismatch(pred.len(), gold.len()));
    }
    Ok(phrase_prf(&bio_to_spans(pred), &bio_to_spans(gold)))
}

/// Fraction of sentences whose full typed-span set matches gold exactly.
pub fn exact_sentence_accuracy(
    pred: &[Vec<(Span, PhraseType)>],
    gold: &[Vec<(Span, PhraseType)>],
) -> Result<f64, MetricError> {
    if pred.len() != gold.len() {
        return Err(MetricError::LengthMismatch(pred.len(), gold.len()));
    }
    if pred.is_empty() {
        return Ok(0.0);
    }
    let hits = pred
        .iter()
        .zip(gold.iter())
        .filter(|(p, g)| {
            let mut ps = (*p).clone();
            let mut gs = (*g).clone();
            ps.sort();
            gs.sort();
            ps == gs
        })
        .count();
    Ok(hits as f64 / pred.len() as f64)
}

/// Per-phrase micro accuracy: matched gold phrases over all gold phrases.
pub fn phrase_micro_accuracy(
    pred: &[Vec<(Span, PhraseType)>],
    gold: &[Vec<(Span, PhraseType)>],
) -> Result<f64, MetricError> {
    if pred.len() != gold.len() {
        return Err(MetricError::LengthMismatch(pred.len(), gold.len()));
    }
    let mut tp = 0usize;
    let mut total = 0usize;
    for (p, g) in pred.iter().zip(gold.iter()) {
        let prf = phrase_prf(p, g);
        tp += prf.tp;
        total += g.len();
    }
    if total == 0 {
        return Ok(0.0);
    }
    Ok(tp as f64 / total as f64)
}

/// The machine-readable evaluation report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricReport {
    pub micro: Prf,
    pub per_type: BTreeMap<String, Prf>,
    pub sentence_accuracy: f64,
    pub phrase_micro_accuracy: f64,
    pub sentences: usize,
    pub gold_phrases: usize,
    pub predicted_phrases: usize,
}

/// Aggregate exact-match metrics over parallel prediction/gold lists.
pub fn evaluate(
    pred: &[Vec<(Span, PhraseType)>],
    gold: &[Vec<(Span, PhraseType)>],
) -> Result<MetricReport, MetricError> {
    if pred.len() != gold.len() {
        return Err(MetricError::LengthMismatch(pred.len(), gold.len()));
    }
    let mut tp = 0;
    let mut fp = 0;
    let mut fn_ = 0;
    let mut per_type_counts: BTreeMap<PhraseType, (usize, usize, usize)> = BTreeMap::new();
    for (p, g) in pred.iter().zip(gold.iter()) {
        let prf = phrase_prf(p, g);
        tp += prf.tp;
        fp += prf.fp;
        fn_ += prf.fn_;
        for t in PhraseType::ALL {
            let pt: Vec<_> = p.iter().filter(|(_, k)| *k == t).copied().collect();
            let gt: Vec<_> = g.iter().filter(|(_, k)| *k == t).copied().collect();
            if pt.is_empty() && gt.is_empty() {
                continue;
            }
            let x = phrase_prf(&pt, &gt);
            let e = per_type_counts.entry(t).or_insert((0, 0, 0));
            e.0 += x.tp;
            e.1 += x.fp;
            e.2 += x.fn_;
        }
    }
    let per_type = per_type_counts
        .into_iter()
        .map(|(t, (tp, fp, fn_))| (t.short_name().to_string(), Prf::from_counts(tp, fp, fn_)))
        .collect();
    Ok(MetricReport {
        micro: Prf::from_counts(tp, fp, fn_),
        per_type,
        sentence_accuracy: exact_sentence_accuracy(pred, gold)?,
        phrase_micro_accuracy: phrase_micro_accuracy(pred, gold)?,
        sentences: gold.len(),
        gold_phrases: gold.iter().map(|g| g.len()).sum(),
        predicted_phrases: pred.iter().map(|p| p.len()).sum(),
    })
}
