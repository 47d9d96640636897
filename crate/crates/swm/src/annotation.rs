//! Bracket annotation codec: parse and emit the 7-type nestable phrase
//! notation, plus the tree model and structural validator.
//!
//! Delimiters: `()` noun, `[]` verb, `{}` quantity, `<>` preposition,
//! `#…#` conjunction, `@…@` modal, `/…\` clause (`^…^` accepted on input).
//! Spans are 1-based inclusive indices over Unicode scalar values.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// The seven phrase categories, with stable integer codes 0..6.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PhraseType {
    Noun = 0,
    Verb = 1,
    Quantity = 2,
    Preposition = 3,
    Conjunction = 4,
    Modal = 5,
    Clause = 6,
}

impl PhraseType {
    pub const ALL: [PhraseType; 7] = [
        PhraseType::Noun,
        PhraseType::Verb,
        PhraseType::Quantity,
        PhraseType::Preposition,
        PhraseType::Conjunction,
        PhraseType::Modal,
        PhraseType::Clause,
    ];

    pub fn code(self) -> usize {
        self as usize
    }

    pub fn from_code(code: usize) -> Option<PhraseType> {
        Self::ALL.get(code).copied()
    }

    /// Conjunction and modal phrases are atomic: they never contain
    /// nested phrases.
    pub fn is_atomic(self) -> bool {
        matches!(self, PhraseType::Conjunction | PhraseType::Modal)
    }

    pub fn short_name(self) -> &'static str {
        match self {
            PhraseType::Noun => "Noun",
            PhraseType::Verb => "Verb",
            PhraseType::Quantity => "Quantity",
            PhraseType::Preposition => "Prep",
            PhraseType::Conjunction => "Conj",
            PhraseType::Modal => "Modal",
            PhraseType::Clause => "Clause",
        }
    }

    /// Canonical opening/closing delimiter pair.
    pub fn delimiters(self) -> (char, char) {
        match self {
            PhraseType::Noun => ('(', ')'),
            PhraseType::Verb => ('[', ']'),
            PhraseType::Quantity => ('{', '}'),
            PhraseType::Preposition => ('<', '>'),
            PhraseType::Conjunction => ('#', '#'),
            PhraseType::Modal => ('@', '@'),
            PhraseType::Clause => ('/', '\\'),
        }
    }
}

impl fmt::Display for PhraseType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

/// 1-based inclusive character window `(start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Span {
        Span { start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false // start <= end by construction
    }

    pub fn valid_for(&self, n: usize) -> bool {
        1 <= self.start && self.start <= self.end && self.end <= n
    }

    /// True if `self` strictly contains `other` (other may share one
    /// boundary but not both).
    pub fn strictly_contains(&self, other: &Span) -> bool {
        self.start <= other.start && other.end <= self.end && *self != *other
    }

    pub fn contains_or_eq(&self, other: &Span) -> bool {
        self.start <= other.start && other.end <= self.end
    }

    pub fn disjoint(&self, other: &Span) -> bool {
        self.end < other.start || other.end < self.start
    }

    /// Crossing: partial overlap that is neither nesting nor disjoint.
    pub fn crosses(&self, other: &Span) -> bool {
        !self.disjoint(other) && !self.contains_or_eq(other) && !other.contains_or_eq(self)
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.start, self.end)
    }
}

/// A typed phrase node in the annotation forest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhraseNode {
    pub kind: PhraseType,
    pub span: Span,
    pub children: Vec<PhraseNode>,
}

impl PhraseNode {
    pub fn leaf(kind: PhraseType, start: usize, end: usize) -> PhraseNode {
        PhraseNode {
            kind,
            span: Span::new(start, end),
            children: Vec::new(),
        }
    }
}

/// A sentence's characters plus its ordered phrase forest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatedSentence {
    pub chars: Vec<char>,
    pub roots: Vec<PhraseNode>,
}

impl AnnotatedSentence {
    pub fn unannotated(text: &str) -> AnnotatedSentence {
        AnnotatedSentence {
            chars: text.chars().collect(),
            roots: Vec::new(),
        }
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

    /// Text slice for a span (1-based inclusive).
    pub fn span_text(&self, span: &Span) -> String {
        self.chars[span.start - 1..span.end].iter().collect()
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    /// Position is the 1-based scalar index into the annotated string.
    #[error("unbalanced delimiter at position {0}")]
    UnbalancedDelimiter(usize),
    #[error("illegal nesting at position {0}: child span equals parent span")]
    IllegalNesting(usize),
    #[error("content delimiter inside atomic phrase at position {0}")]
    NestedAtomic(usize),
    #[error("empty phrase at position {0}")]
    EmptyPhrase(usize),
}

const OPENERS: &[(char, PhraseType)] = &[
    ('(', PhraseType::Noun),
    ('[', PhraseType::Verb),
    ('{', PhraseType::Quantity),
    ('<', PhraseType::Preposition),
    ('/', PhraseType::Clause),
];

const CLOSERS: &[(char, PhraseType)] = &[
    (')', PhraseType::Noun),
    (']', PhraseType::Verb),
    ('}', PhraseType::Quantity),
    ('>', PhraseType::Preposition),
    ('\\', PhraseType::Clause),
];

fn is_delimiter(c: char) -> bool {
    matches!(
        c,
        '(' | ')' | '[' | ']' | '{' | '}' | '<' | '>' | '#' | '@' | '/' | '\\' | '^'
    )
}

struct Frame {
    kind: PhraseType,
    /// 1-based char position where this phrase's content starts.
    start: usize,
    /// Open-delimiter position in the annotated string (for errors).
    open_pos: usize,
    children: Vec<PhraseNode>,
    /// True when opened with '^' (must be closed with '^').
    caret: bool,
}

/// Parse an annotated string into its character sequence and phrase forest.
pub fn parse_annotation(text: &str) -> Result<AnnotatedSentence, ParseError> {
    let mut chars: Vec<char> = Vec::new();
    let mut stack: Vec<Frame> = Vec::new();
    let mut roots: Vec<PhraseNode> = Vec::new();
    // Pending atomic phrase: Some((kind, content_start, open_pos)).
    let mut atomic: Option<(PhraseType, usize, usize)> = None;

    for (i, c) in text.chars().enumerate() {
        let pos = i + 1;
        if let Some((kind, content_start, open_pos)) = atomic {
            // Inside #…# or @…@: only the matching closer is special.
            let closer = kind.delimiters().1;
            if c == closer {
                if chars.len() < content_start {
                    return Err(ParseError::EmptyPhrase(open_pos));
                }
                let node = PhraseNode {
                    kind,
                    span: Span::new(content_start, chars.len()),
                    children: Vec::new(),
                };
                attach(&mut stack, &mut roots, node);
                atomic = None;
            } else if is_delimiter(c) {
                return Err(ParseError::NestedAtomic(pos));
            } else {
                chars.push(c);
            }
            continue;
        }

        if c == '#' || c == '@' {
            let kind = if c == '#' {
                PhraseType::Conjunction
            } else {
                PhraseType::Modal
            };
            atomic = Some((kind, chars.len() + 1, pos));
        } else if c == '^' {
            // Same open/close character: toggles a clause frame.
            if stack.last().map_or(false, |f| f.caret) {
                let frame = stack.pop().unwrap();
                close_frame(frame, &mut chars, &mut stack, &mut roots, pos)?;
            } else {
                stack.push(Frame {
                    kind: PhraseType::Clause,
                    start: chars.len() + 1,
                    open_pos: pos,
                    children: Vec::new(),
                    caret: true,
                });
            }
        } else if let Some(&(_, kind)) = OPENERS.iter().find(|&&(o, _)| o == c) {
            stack.push(Frame {
                kind,
                start: chars.len() + 1,
                open_pos: pos,
                children: Vec::new(),
                caret: false,
            });
        } else if let Some(&(_, kind)) = CLOSERS.iter().find(|&&(cl, _)| cl == c) {
            match stack.pop() {
                Some(frame) if frame.kind == kind && !frame.caret => {
                    close_frame(frame, &mut chars, &mut stack, &mut roots, pos)?;
                }
                _ => return Err(ParseError::UnbalancedDelimiter(pos)),
            }
        } else {
            chars.push(c);
        }
    }

    if let Some((_, _, open_pos)) = atomic {
        return Err(ParseError::UnbalancedDelimiter(open_pos));
    }
    if let Some(frame) = stack.pop() {
        return Err(ParseError::UnbalancedDelimiter(frame.open_pos));
    }
    Ok(AnnotatedSentence { chars, roots })
}

fn close_frame(
    frame: Frame,
    chars: &mut Vec<char>,
    stack: &mut Vec<Frame>,
    roots: &mut Vec<PhraseNode>,
    close_pos: usize,
) -> Result<(), ParseError> {
    if chars.len() < frame.start {
        return Err(ParseError::EmptyPhrase(frame.open_pos));
    }
    let span = Span::new(frame.start, chars.len());
    // A single child covering the identical span is rejected.
    if frame.children.len() == 1 && frame.children[0].span == span {
        return Err(ParseError::IllegalNesting(close_pos));
    }
    let node = PhraseNode {
        kind: frame.kind,
        span,
        children: frame.children,
    };
    attach(stack, roots, node);
    Ok(())
}

fn attach(stack: &mut Vec<Frame>, roots: &mut Vec<PhraseNode>, node: PhraseNode) {
    match stack.last_mut() {
        Some(parent) => parent.children.push(node),
        None => roots.push(node),
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SerializeError {
    #[error("invariant violation: {0}")]
    InvariantViolation(String),
}

/// Emit the canonical annotated string for a sentence.
/// Clause phrases always serialize as `/…\`.
pub fn serialize_annotation(s: &AnnotatedSentence) -> Result<String, SerializeError> {
    let violations = validate_tree(s);
    if !violations.is_empty() {
        return Err(SerializeError::InvariantViolation(format!(
            "{}",
            violations[0]
        )));
    }
    let mut out = String::new();
    emit_range(&s.chars, &s.roots, 1, s.chars.len(), &mut out);
    Ok(out)
}

fn emit_range(chars: &[char], nodes: &[PhraseNode], from: usize, to: usize, out: &mut String) {
    let mut pos = from;
    for node in nodes {
        for c in &chars[pos - 1..node.span.start - 1] {
            out.push(*c);
        }
        let (open, close) = node.kind.delimiters();
        out.push(open);
        emit_range(chars, &node.children, node.span.start, node.span.end, out);
        out.push(close);
        pos = node.span.end + 1;
    }
    if pos <= to {
        for c in &chars[pos - 1..to] {
            out.push(*c);
        }
    }
}

/// Pre-order flattening of all phrase nodes, nested ones included.
/// Order: start ascending, then end descending, then depth ascending.
pub fn flatten_phrases(s: &AnnotatedSentence) -> Vec<(Span, PhraseType)> {
    let mut out = Vec::new();
    fn walk(nodes: &[PhraseNode], out: &mut Vec<(Span, PhraseType)>) {
        for node in nodes {
            out.push((node.span, node.kind));
            walk(&node.children, out);
        }
    }
    walk(&s.roots, &mut out);
    out
}

/// A structural rule violation found by [`validate_tree`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    /// Conjunction or modal node has children.
    NestedAtomic { span: Span, kind: PhraseType },
    /// Two sibling spans cross or overlap.
    CrossingSiblings { a: Span, b: Span },
    /// Siblings not sorted by start.
    UnsortedSiblings { a: Span, b: Span },
    /// Child span escapes its parent.
    ChildEscapesParent { parent: Span, child: Span },
    /// Single child covers exactly the parent span.
    EqualSpanChild { span: Span },
    /// Span outside 1..=N.
    SpanOutOfBounds { span: Span, len: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NestedAtomic { span, kind } => {
                write!(f, "NestedAtomic: {kind} node at {span} has children")
            }
            Violation::CrossingSiblings { a, b } => {
                write!(f, "CrossingSiblings: {a} and {b}")
            }
            Violation::UnsortedSiblings { a, b } => {
                write!(f, "UnsortedSiblings: {a} before {b}")
            }
            Violation::ChildEscapesParent { parent, child } => {
                write!(f, "ChildEscapesParent: child {child} escapes parent {parent}")
            }
            Violation::EqualSpanChild { span } => {
                write!(f, "EqualSpanChild: child covers parent span {span}")
            }
            Violation::SpanOutOfBounds { span, len } => {
                write!(f, "SpanOutOfBounds: {span} in sentence of length {len}")
            }
        }
    }
}

/// Check every structural invariant; an empty result means the tree is valid.
pub fn validate_tree(s: &AnnotatedSentence) -> Vec<Violation> {
    let mut violations = Vec::new();
    let n = s.chars.len();
    check_level(&s.roots, None, n, &mut violations);
    violations
}

fn check_level(
    nodes: &[PhraseNode],
    parent: Option<&PhraseNode>,
    n: usize,
    violations: &mut Vec<Violation>,
) {
    for pair in nodes.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        if a.span.start > b.span.start {
            violations.push(Violation::UnsortedSiblings {
                a: a.span,
                b: b.span,
            });
        }
        if !a.span.disjoint(&b.span) {
            violations.push(Violation::CrossingSiblings {
                a: a.span,
                b: b.span,
            });
        }
    }
    for node in nodes {
        if !node.span.valid_for(n) {
            violations.push(Violation::SpanOutOfBounds { span: node.span, len: n });
        }
        if let Some(p) = parent {
            if !p.span.contains_or_eq(&node.span) {
                violations.push(Violation::ChildEscapesParent {
                    parent: p.span,
                    child: node.span,
                });
            } else if node.span == p.span {
                violations.push(Violation::EqualSpanChild { span: node.span });
            }
        }
        if node.kind.is_atomic() && !node.children.is_empty() {
            violations.push(Violation::NestedAtomic {
                span: node.span,
                kind: node.kind,
            });
        }
        check_level(&node.children, Some(node), n, violations);
    }
}
