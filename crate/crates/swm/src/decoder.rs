//! Turn scored typed proposals into a crossing-free nested phrase forest:
//! span dedup, greedy compatibility selection, and forest construction.

use std::cmp::Ordering;
use std::collections::HashMap;

use thiserror::Error;

use crate::annotation::{AnnotatedSentence, PhraseNode, PhraseType, Span};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredPhrase {
    pub span: Span,
    pub kind: PhraseType,
    pub score: f64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DecodeError {
    #[error("incompatible set: spans {0} and {1} cross")]
    IncompatibleSet(Span, Span),
    #[error("proposal set too large for exhaustive search: {0} > {1}")]
    TooLarge(usize, usize),
}

/// Keep at most one proposal per span: max score, ties to the lower
/// phrase-type code. Output sorted by score descending (stable).
pub fn dedup_proposals(props: &[ScoredPhrase]) -> Vec<ScoredPhrase> {
    let mut best: HashMap<Span, ScoredPhrase> = HashMap::new();
    for p in props {
        match best.get(&p.span) {
            Some(b)
                if b.score > p.score
                    || (b.score == p.score && b.kind.code() <= p.kind.code()) => {}
            _ => {
                best.insert(p.span, *p);
            }
        }
    }
    let mut out: Vec<ScoredPhrase> = best.into_values().collect();
    out.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap_or(Ordering::Equal)
            .then(a.span.start.cmp(&b.span.start))
            .then(a.span.end.cmp(&b.span.end))
    });
    out
}

fn compatible(a: &Span, b: &Span) -> bool {
    a != b && !a.crosses(b)
}

/// Greedy selection by score (ties: longer span first, then start
/// ascending). A span is accepted iff it nests in, contains, or is
/// disjoint from every already-accepted span.
pub fn select_forest_greedy(props: &[ScoredPhrase]) -> Vec<ScoredPhrase> {
    let mut order: Vec<&ScoredPhrase> = props.iter().collect();
    order.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap_or(Ordering::Equal)
            .then(b.span.len().cmp(&a.span.len()))
            .then(a.span.start.cmp(&b.span.start))
    });
    let mut accepted: Vec<ScoredPhrase> = Vec::new();
    for p in order {
        if accepted.iter().all(|a| compatible(&a.span, &p.span)) {
            accepted.push(*p);
        }
    }
    accepted
}

/// Exhaustive-subset oracle: maximum-total-score compatible subset.
/// Ties break to the lexicographically smallest subset bitmask.
pub fn brute_force_select(props: &[ScoredPhrase]) -> Result<Vec<ScoredPhrase>, DecodeError> {
    const MAX: usize = 20;
    let k = props.len();
    if k > MAX {
        return Err(DecodeError::TooLarge(k, MAX));
    }
    let mut best_mask: u32 = 0;
    let mut best_score = f64::NEG_INFINITY;
    'mask: for mask in 0u32..(1 << k) {
        let mut score = 0.0;
        for i in 0..k {
            if mask & (1 << i) == 0 {
                continue;
            }
            for j in (i + 1)..k {
                if mask & (1 << j) != 0 && !compatible(&props[i].span, &props[j].span) {
                    continue 'mask;
                }
            }
            score += props[i].score;
        }
        if score > best_score {
            best_score = score;
            best_mask = mask;
        }
    }
    Ok((0..k)
        .filter(|i| best_mask & (1 << i) != 0)
        .map(|i| props[i])
        .collect())
}

/// Build a containment-ordered forest from a crossing-free, span-unique
/// selection. Children of atomic (conjunction/modal) nodes are dropped
/// and reported back as warnings.
pub fn build_forest(
    selected: &[ScoredPhrase],
    chars: &[char],
) -> Result<(AnnotatedSentence, Vec<String>), DecodeError> {
    for (i, a) in selected.iter().enumerate() {
        for b in &selected[i + 1..] {
            if a.span.crosses(&b.span) {
                return Err(DecodeError::IncompatibleSet(a.span, b.span));
            }
        }
    }
    // Sort outer-first: start ascending, end descending.
    let mut order: Vec<&ScoredPhrase> = selected.iter().collect();
    order.sort_by(|a, b| {
        a.span
            .start
            .cmp(&b.span.start)
            .then(b.span.end.cmp(&a.span.end))
    });

    let mut warnings = Vec::new();
    let mut roots: Vec<PhraseNode> = Vec::new();
    // Stack of open ancestors, innermost last.
    let mut stack: Vec<PhraseNode> = Vec::new();
    for p in order {
        while let Some(top) = stack.last() {
            if top.span.contains_or_eq(&p.span) {
                break;
            }
            let done = stack.pop().unwrap();
            close_node(done, &mut stack, &mut roots, &mut warnings);
        }
        stack.push(PhraseNode {
            kind: p.kind,
            span: p.span,
            children: Vec::new(),
        });
    }
    while let Some(done) = stack.pop() {
        close_node(done, &mut stack, &mut roots, &mut warnings);
    }
    Ok((
        AnnotatedSentence {
            chars: chars.to_vec(),
            roots,
        },
        warnings,
    ))
}

fn close_node(
    mut node: PhraseNode,
    stack: &mut Vec<PhraseNode>,
    roots: &mut Vec<PhraseNode>,
    warnings: &mut Vec<String>,
) {
    if node.kind.is_atomic() && !node.children.is_empty() {
        warnings.push(format!(
            "dropped {} nested phrase(s) inside atomic {} node at {}",
            node.children.len(),
            node.kind,
            node.span
        ));
        node.children.clear();
    }
    match stack.last_mut() {
        Some(parent) => parent.children.push(node),
        None => roots.push(node),
    }
}

/// Full decode: dedup, greedy selection, forest construction.
pub fn decode_forest(
    props: &[ScoredPhrase],
    chars: &[char],
) -> Result<(AnnotatedSentence, Vec<String>), DecodeError> {
    let selected = select_forest_greedy(&dedup_proposals(props));
    build_forest(&selected, chars)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotation::serialize_annotation;

    fn sp(x: usize, y: usize, kind: PhraseType, score: f64) -> ScoredPhrase {
        ScoredPhrase {
            span: Span::new(x, y),
            kind,
            score,
        }
    }

    #[test]
    fn dedup_keeps_max_score() {
        let out = dedup_proposals(&[
            sp(1, 2, PhraseType::Noun, 0.9),
            sp(1, 2, PhraseType::Verb, 0.7),
        ]);
        assert_eq!(out, vec![sp(1, 2, PhraseType::Noun, 0.9)]);
    }

    #[test]
    fn dedup_tie_prefers_lower_type_code() {
        let out = dedup_proposals(&[
            sp(1, 2, PhraseType::Verb, 0.5),
            sp(1, 2, PhraseType::Noun, 0.5),
        ]);
        assert_eq!(out[0].kind, PhraseType::Noun);
    }

    #[test]
    fn dedup_disjoint_unchanged() {
        let input = vec![
            sp(1, 1, PhraseType::Noun, 0.9),
            sp(2, 3, PhraseType::Verb, 0.8),
        ];
        assert_eq!(dedup_proposals(&input), input);
    }

    #[test]
    fn greedy_rejects_crossing() {
        let out = select_forest_greedy(&[
            sp(1, 2, PhraseType::Noun, 0.9),
            sp(2, 3, PhraseType::Verb, 0.8),
        ]);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].span, Span::new(1, 2));
    }

    #[test]
    fn greedy_keeps_nesting() {
        let out = select_forest_greedy(&[
            sp(1, 4, PhraseType::Preposition, 0.9),
            sp(2, 3, PhraseType::Noun, 0.8),
        ]);
        assert_eq!(out.len(), 2);
    }

    #[test]
    fn brute_force_basics() {
        let single = vec![sp(1, 2, PhraseType::Noun, 0.4)];
        assert_eq!(brute_force_select(&single).unwrap(), single);
        let crossing = vec![
            sp(1, 2, PhraseType::Noun, 0.6),
            sp(2, 3, PhraseType::Verb, 0.5),
        ];
        let picked = brute_force_select(&crossing).unwrap();
        assert_eq!(picked, vec![crossing[0]]);
        let too_big: Vec<ScoredPhrase> =
            (0..21).map(|i| sp(1, i + 1, PhraseType::Noun, 0.1)).collect();
        assert!(matches!(
            brute_force_select(&too_big),
            Err(DecodeError::TooLarge(21, 20))
        ));
    }

    #[test]
    fn greedy_matches_brute_on_nested_chains() {
        // All nested chains are fully compatible, so both take everything.
        for n in 1..=5 {
            let chain: Vec<ScoredPhrase> = (0..n)
                .map(|i| sp(1 + i, 10 - i, PhraseType::Noun, 0.5 + 0.01 * i as f64))
                .collect();
            let g = select_forest_greedy(&chain);
            let b = brute_force_select(&chain).unwrap();
            let mut gs: Vec<Span> = g.iter().map(|p| p.span).collect();
            let mut bs: Vec<Span> = b.iter().map(|p| p.span).collect();
            gs.sort();
            bs.sort();
            assert_eq!(gs, bs);
        }
    }

    #[test]
    fn build_forest_worked_examples() {
        let chars: Vec<char> = "我爱祖国".chars().collect();
        let selected = vec![
            sp(1, 1, PhraseType::Noun, 0.9),
            sp(2, 2, PhraseType::Verb, 0.9),
            sp(3, 4, PhraseType::Noun, 0.9),
        ];
        let (sentence, warnings) = build_forest(&selected, &chars).unwrap();
        assert!(warnings.is_empty());
        assert_eq!(serialize_annotation(&sentence).unwrap(), "(我)[爱](祖国)");

        let chars: Vec<char> = "在这次考试中".chars().collect();
        let selected = vec![
            sp(1, 6, PhraseType::Preposition, 0.9),
            sp(2, 6, PhraseType::Noun, 0.8),
            sp(2, 3, PhraseType::Quantity, 0.7),
        ];
        let (sentence, _) = build_forest(&selected, &chars).unwrap();
        assert_eq!(
            serialize_annotation(&sentence).unwrap(),
            "<在({这次}考试中)>"
        );
    }

    #[test]
    fn build_forest_empty_selection() {
        let chars: Vec<char> = "我爱祖国".chars().collect();
        let (sentence, _) = build_forest(&[], &chars).unwrap();
        assert!(sentence.roots.is_empty());
        assert_eq!(serialize_annotation(&sentence).unwrap(), "我爱祖国");
    }

    #[test]
    fn build_forest_rejects_crossing() {
        let chars: Vec<char> = "我爱祖国".chars().collect();
        let selected = vec![
            sp(1, 3, PhraseType::Noun, 0.9),
            sp(2, 4, PhraseType::Verb, 0.8),
        ];
        assert!(matches!(
            build_forest(&selected, &chars),
            Err(DecodeError::IncompatibleSet(_, _))
        ));
    }

    #[test]
    fn build_forest_repairs_atomic_nesting() {
        let chars: Vec<char> = "但是我".chars().collect();
        let selected = vec![
            sp(1, 3, PhraseType::Conjunction, 0.9),
            sp(3, 3, PhraseType::Noun, 0.8),
        ];
        let (sentence, warnings) = build_forest(&selected, &chars).unwrap();
        assert_eq!(warnings.len(), 1);
        assert!(sentence.roots[0].children.is_empty());
    }

    #[test]
    fn pipeline_identity_on_valid_forest() {
        let props = vec![
            sp(1, 6, PhraseType::Preposition, 0.9),
            sp(2, 6, PhraseType::Noun, 0.8),
            sp(2, 3, PhraseType::Quantity, 0.7),
        ];
        let chars: Vec<char> = "在这次考试中".chars().collect();
        let (sentence, _) = decode_forest(&props, &chars).unwrap();
        let spans: Vec<(Span, PhraseType)> = crate::annotation::flatten_phrases(&sentence);
        assert_eq!(spans.len(), 3);
    }
}
