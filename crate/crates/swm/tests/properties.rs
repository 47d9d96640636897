//! Randomized invariants over the codec and the window machinery.

use proptest::prelude::*;

use swm::annotation::{flatten_phrases, parse_annotation, serialize_annotation, PhraseType, Span};
use swm::windowing::{
    anchor_index, apply_offset, enumerate_anchors, index_to_span, label_anchors, window_count,
};

const LEAF_CHARS: [char; 6] = ['我', '爱', '书', '你', '看', '山'];

fn leaf_text() -> impl Strategy<Value = String> {
    prop::collection::vec(prop::sample::select(&LEAF_CHARS[..]), 1..4)
        .prop_map(|cs| cs.into_iter().collect())
}

/// A well-formed annotation string: a sequence of plain runs and typed
/// brackets, nested up to three levels. Atomic types stay flat; the
/// clause delimiter is always emitted canonically.
fn annotation() -> impl Strategy<Value = String> {
    let segment = leaf_text().prop_recursive(3, 24, 4, |inner| {
        (0usize..7, prop::collection::vec(inner, 1..4)).prop_map(|(code, parts)| {
            let t = PhraseType::from_code(code).unwrap();
            let body: String = if t.is_atomic() {
                parts
                    .iter()
                    .flat_map(|p| p.chars().filter(|c| LEAF_CHARS.contains(c)))
                    .collect()
            } else {
                parts.concat()
            };
            if body.is_empty() {
                return "山".to_string();
            }
            let (open, close) = t.delimiters();
            // The trailing leaf keeps a lone bracketed child from
            // spanning its parent exactly, which the parser rejects.
            format!("{open}{body}山{close}")
        })
    });
    prop::collection::vec(segment, 1..5).prop_map(|parts| parts.concat())
}

proptest! {
    #[test]
    fn parse_serialize_fixed_point(s in annotation()) {
        let tree = parse_annotation(&s).unwrap();
        let emitted = serialize_annotation(&tree).unwrap();
        let reparsed = parse_annotation(&emitted).unwrap();
        prop_assert_eq!(flatten_phrases(&tree), flatten_phrases(&reparsed));
        // The canonical form is its own fixed point.
        prop_assert_eq!(serialize_annotation(&reparsed).unwrap(), emitted);
    }

    #[test]
    fn anchor_index_bijection(n in 1usize..120, i in 0usize..7260) {
        let total = window_count(n);
        if i < total {
            let span = index_to_span(i, n).unwrap();
            prop_assert_eq!(anchor_index(&span, n), Some(i));
        } else {
            prop_assert_eq!(index_to_span(i, n), None);
        }
    }

    #[test]
    fn labels_point_back_at_gold(
        n in 2usize..12,
        raw in prop::collection::vec((1usize..12, 1usize..12, 0usize..7), 1..4),
    ) {
        let gold: Vec<(Span, PhraseType)> = raw
            .into_iter()
            .map(|(a, b, t)| {
                let (lo, hi) = (a.min(b).min(n), b.max(a).min(n));
                (Span::new(lo, hi.max(lo)), PhraseType::from_code(t).unwrap())
            })
            .collect();
        let labels = label_anchors(&gold, n);
        let anchors = enumerate_anchors(n);
        for (idx, label) in &labels {
            let corrected = apply_offset(&anchors[*idx], &label.target_offset, n).unwrap();
            prop_assert!(gold.contains(&(corrected, label.gold_type)));
        }
    }
}
