//! Corpus I/O (one annotated sentence per line, UTF-8, LF), validation
//! against the annotation rules and the 50-character cap, deterministic
//! splits, and a seedable synthetic grammar generator that stands in for
//! the unavailable hand-annotated data.

use std::fmt;
use std::fs;
use std::path::Path;

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotation::{
    parse_annotation, serialize_annotation, validate_tree, AnnotatedSentence, PhraseNode,
    PhraseType, Span,
};

pub const MAX_SENTENCE_LEN: usize = 50;

#[derive(Debug, Clone)]
pub struct Corpus {
    pub sentences: Vec<AnnotatedSentence>,
    pub provenance: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Diagnostic {
    ParseFailed { line: usize, message: String },
    Invalid { line: usize, rule: String },
    MaxLength { line: usize, len: usize },
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Diagnostic::ParseFailed { line, message } => {
                write!(f, "line {line}: parse failed: {message}")
            }
            Diagnostic::Invalid { line, rule } => write!(f, "line {line}: {rule}"),
            Diagnostic::MaxLength { line, len } => {
                write!(f, "line {line}: MaxLength: {len} > {MAX_SENTENCE_LEN} chars")
            }
        }
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("empty corpus: no valid sentences")]
    EmptyCorpus,
    #[error("invalid split ratios: {0}")]
    InvalidRatios(String),
    #[error("grammar error: {0}")]
    Grammar(String),
    #[error("grammar unproductive: no legal sentence within retry budget")]
    GrammarUnproductive,
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

fn io_err(path: &Path, source: std::io::Error) -> CorpusError {
    CorpusError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Check one parsed sentence against the corpus rules.
pub fn sentence_diagnostics(sentence: &AnnotatedSentence, line: usize) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    if sentence.len() > MAX_SENTENCE_LEN {
        out.push(Diagnostic::MaxLength {
            line,
            len: sentence.len(),
        });
    }
    for v in validate_tree(sentence) {
        out.push(Diagnostic::Invalid {
            line,
            rule: v.to_string(),
        });
    }
    out
}

/// Load a corpus file; bad lines are excluded and reported.
pub fn load_corpus(path: &Path) -> Result<(Corpus, Vec<Diagnostic>), CorpusError> {
    let (corpus, diagnostics) = scan_corpus(path)?;
    if corpus.sentences.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    Ok((corpus, diagnostics))
}

/// Like [`load_corpus`] but tolerates a corpus with no valid lines, so
/// callers can still report the diagnostics.
pub fn scan_corpus(path: &Path) -> Result<(Corpus, Vec<Diagnostic>), CorpusError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut sentences = Vec::new();
    let mut diagnostics = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        match parse_annotation(line) {
            Err(e) => diagnostics.push(Diagnostic::ParseFailed {
                line: lineno,
                message: e.to_string(),
            }),
            Ok(sentence) => {
                let issues = sentence_diagnostics(&sentence, lineno);
                if issues.is_empty() {
                    sentences.push(sentence);
                } else {
                    diagnostics.extend(issues);
                }
            }
        }
    }
    Ok((
        Corpus {
            sentences,
            provenance: path.display().to_string(),
        },
        diagnostics,
    ))
}

/// Write the canonical serialization, one sentence per line.
pub fn save_corpus(corpus: &Corpus, path: &Path) -> Result<(), CorpusError> {
    if corpus.sentences.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    let mut out = String::new();
    for s in &corpus.sentences {
        let line = serialize_annotation(s)
            .map_err(|e| CorpusError::Grammar(format!("unserializable sentence: {e}")))?;
        out.push_str(&line);
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}

/// Deterministic shuffled partition; sizes are floor(r_i * n) with the
/// remainder going to train.
pub fn split_corpus(
    corpus: &Corpus,
    ratios: (f64, f64, f64),
    seed: u64,
) -> Result<(Corpus, Corpus, Corpus), CorpusError> {
    let (rt, rd, rs) = ratios;
    if rt <= 0.0 || rd < 0.0 || rs < 0.0 || ((rt + rd + rs) - 1.0).abs() > 1e-9 {
        return Err(CorpusError::InvalidRatios(format!("{rt},{rd},{rs}")));
    }
    let n = corpus.sentences.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let n_dev = (rd * n as f64).floor() as usize;
    let n_test = (rs * n as f64).floor() as usize;
    let n_train = n - n_dev - n_test;
    let pick = |range: std::ops::Range<usize>, tag: &str| Corpus {
        sentences: order[range]
            .iter()
            .map(|&i| corpus.sentences[i].clone())
            .collect(),
        provenance: format!("{} [{} split, seed {}]", corpus.provenance, tag, seed),
    };
    Ok((
        pick(0..n_train, "train"),
        pick(n_train..n_train + n_dev, "dev"),
        pick(n_train + n_dev..n, "test"),
    ))
}

/// Weighted production grammar for synthetic sentences.
///
/// `rules` expand nonterminals into sequences of symbols; a symbol naming
/// a lexicon class samples one token from it. Every nonterminal except
/// `S` wraps its yield in a phrase node of the mapped type.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthGrammar {
    pub rules: Vec<GrammarRule>,
    pub lexicon: std::collections::BTreeMap<String, Vec<String>>,
    pub max_depth: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GrammarRule {
    pub lhs: String,
    pub rhs: Vec<String>,
    pub weight: f64,
}

fn nonterminal_type(name: &str) -> Option<PhraseType> {
    match name {
        "NP" => Some(PhraseType::Noun),
        "VP" => Some(PhraseType::Verb),
        "QP" => Some(PhraseType::Quantity),
        "PP" => Some(PhraseType::Preposition),
        "CONJ" => Some(PhraseType::Conjunction),
        "MOD" => Some(PhraseType::Modal),
        "CL" => Some(PhraseType::Clause),
        _ => None,
    }
}

impl SynthGrammar {
    pub fn from_json(json: &str) -> Result<SynthGrammar, CorpusError> {
        let grammar: SynthGrammar = serde_json::from_str(json)?;
        grammar.validate()?;
        Ok(grammar)
    }

    pub fn load(path: &Path) -> Result<SynthGrammar, CorpusError> {
        SynthGrammar::from_json(&fs::read_to_string(path).map_err(|e| io_err(path, e))?)
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.max_depth == 0 {
            return Err(CorpusError::Grammar("max_depth must be >= 1".into()));
        }
        let mut has_start = false;
        for rule in &self.rules {
            if rule.weight <= 0.0 {
                return Err(CorpusError::Grammar(format!(
                    "rule {} has non-positive weight",
                    rule.lhs
                )));
            }
            if rule.lhs == "S" {
                has_start = true;
            } else if nonterminal_type(&rule.lhs).is_none() {
                return Err(CorpusError::Grammar(format!(
                    "unknown nonterminal '{}'",
                    rule.lhs
                )));
            }
            for sym in &rule.rhs {
                let known = sym == "S"
                    || nonterminal_type(sym).is_some()
                    || self.lexicon.contains_key(sym);
                if !known {
                    return Err(CorpusError::Grammar(format!("unknown symbol '{sym}'")));
                }
            }
        }
        if !has_start {
            return Err(CorpusError::Grammar("no rules for start symbol S".into()));
        }
        for (class, tokens) in &self.lexicon {
            if tokens.is_empty() {
                return Err(CorpusError::Grammar(format!("empty lexicon class '{class}'")));
            }
        }
        Ok(())
    }

    fn rules_for(&self, lhs: &str, terminal_only: bool) -> Vec<&GrammarRule> {
        self.rules
            .iter()
            .filter(|r| r.lhs == lhs)
            .filter(|r| {
                !terminal_only
                    || r.rhs
                        .iter()
                        .all(|s| self.lexicon.contains_key(s))
            })
            .collect()
    }

    /// Expand a nonterminal; appends chars and child nodes, or fails when
    /// the depth cap leaves no terminal-only rule.
    fn expand(
        &self,
        lhs: &str,
        depth: usize,
        chars: &mut Vec<char>,
        nodes: &mut Vec<PhraseNode>,
        rng: &mut ChaCha8Rng,
    ) -> Result<(), ()> {
        let at_cap = depth >= self.max_depth;
        let candidates = self.rules_for(lhs, at_cap);
        if candidates.is_empty() {
            return Err(());
        }
        let dist = WeightedIndex::new(candidates.iter().map(|r| r.weight)).map_err(|_| ())?;
        let rule = candidates[dist.sample(rng)];
        for sym in &rule.rhs {
            if let Some(tokens) = self.lexicon.get(sym) {
                let token = &tokens[rng.gen_range(0..tokens.len())];
                chars.extend(token.chars());
            } else {
                let start = chars.len() + 1;
                let mut children = Vec::new();
                self.expand(sym, depth + 1, chars, &mut children, rng)?;
                if chars.len() < start {
                    return Err(()); // empty yield
                }
                match nonterminal_type(sym) {
                    Some(kind) => nodes.push(PhraseNode {
                        kind,
                        span: Span::new(start, chars.len()),
                        children,
                    }),
                    None => nodes.extend(children), // S inlines its yield
                }
                continue;
            }
        }
        Ok(())
    }
}

/// The bundled toy grammar: subject-verb-object roots, prepositional
/// phrases with embedded noun/quantity phrases, clause embedding, and a
/// small per-type lexicon.
pub fn default_grammar() -> SynthGrammar {
    let rule = |lhs: &str, rhs: &[&str], weight: f64| GrammarRule {
        lhs: lhs.to_string(),
        rhs: rhs.iter().map(|s| s.to_string()).collect(),
        weight,
    };
    let lex = |tokens: &[&str]| tokens.iter().map(|s| s.to_string()).collect::<Vec<_>>();
    let mut lexicon = std::collections::BTreeMap::new();
    lexicon.insert("pron".to_string(), lex(&["我", "你", "他", "她"]));
    lexicon.insert(
        "noun".to_string(),
        lex(&["书", "车", "祖国", "学校", "苹果", "老师", "城市", "孩子", "考试", "曲子"]),
    );
    lexicon.insert(
        "verb".to_string(),
        lex(&["爱", "看", "读", "买", "骑", "找", "写", "学"]),
    );
    lexicon.insert("adv".to_string(), lex(&["马上", "已经"]));
    lexicon.insert("num".to_string(), lex(&["一", "两", "三", "这", "那"]));
    lexicon.insert("cls".to_string(), lex(&["个", "本", "次", "辆"]));
    lexicon.insert("prep".to_string(), lex(&["在", "被", "把", "从"]));
    lexicon.insert(
        "conj".to_string(),
        lex(&["但是", "因为", "所以", "而且"]),
    );
    lexicon.insert("modal".to_string(), lex(&["吗", "吧", "呢", "啊"]));

    SynthGrammar {
        rules: vec![
            rule("S", &["NP", "VP", "NP"], 4.0),
            rule("S", &["NP", "VP"], 2.0),
            rule("S", &["CONJ", "NP", "VP", "NP"], 1.5),
            rule("S", &["NP", "VP", "NP", "MOD"], 1.5),
            rule("S", &["PP", "NP", "VP", "NP"], 1.5),
            rule("S", &["NP", "VP", "CL"], 1.5),
            rule("NP", &["pron"], 3.0),
            rule("NP", &["noun"], 3.0),
            rule("NP", &["QP", "noun"], 2.5),
            rule("VP", &["verb"], 3.0),
            rule("VP", &["adv", "verb"], 1.0),
            rule("QP", &["num", "cls"], 1.0),
            rule("PP", &["prep", "NP"], 1.0),
            rule("CL", &["NP", "VP", "NP"], 1.0),
            rule("CL", &["NP", "VP"], 1.0),
            rule("CONJ", &["conj"], 1.0),
            rule("MOD", &["modal"], 1.0),
        ],
        lexicon,
        max_depth: 4,
    }
}

const RETRIES_PER_SENTENCE: usize = 100;

/// Derive `count` valid sentences top-down with weighted rule sampling.
pub fn generate_synthetic(
    grammar: &SynthGrammar,
    count: usize,
    seed: u64,
) -> Result<Corpus, CorpusError> {
    grammar.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sentences = Vec::with_capacity(count);
    for _ in 0..count {
        let mut ok = false;
        for _ in 0..RETRIES_PER_SENTENCE {
            let mut chars = Vec::new();
            let mut roots = Vec::new();
            if grammar.expand("S", 0, &mut chars, &mut roots, &mut rng).is_err() {
                continue;
            }
            if chars.is_empty() || chars.len() > MAX_SENTENCE_LEN {
                continue;
            }
            let sentence = AnnotatedSentence { chars, roots };
            if !validate_tree(&sentence).is_empty() {
                continue;
            }
            sentences.push(sentence);
            ok = true;
            break;
        }
        if !ok {
            return Err(CorpusError::GrammarUnproductive);
        }
    }
    Ok(Corpus {
        sentences,
        provenance: format!("synthetic [seed {seed}]"),
    })
}

/// Maximum nesting depth of a sentence (0 = no phrases, 1 = flat).
pub fn nesting_depth(s: &AnnotatedSentence) -> usize {
    fn depth(node: &PhraseNode) -> usize {
        1 + node.children.iter().map(depth).max().unwrap_or(0)
    }
    s.roots.iter().map(depth).max().unwrap_or(0)
}
