//! Evidence retrieval: question typing, candidate scoring and top-k
//! selection over paragraphs and table descriptions.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{CellRef, Document, Question, QuestionType};
use crate::jsonl::{self, JsonlError};
use crate::scalar::Scalar;
use crate::tabletree::{description_id, linearize, TableDescription};
use crate::text::{tokenize, TermFreq};

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error(transparent)]
    Jsonl(#[from] JsonlError),
    #[error("rules line {line}: {reason}")]
    Rules { line: usize, reason: String },
    #[error("no type label for question {0}")]
    MissingLabel(String),
    #[error("question {q_id}: no external score for [{}]", ids.join(", "))]
    MissingScores { q_id: String, ids: Vec<String> },
    #[error("{0}")]
    BadScores(String),
    #[error("empty question text for {0}")]
    EmptyQuestion(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateKind {
    Text,
    TableDesc,
}

impl fmt::Display for CandidateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Text => "text",
            Self::TableDesc => "table_desc",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextCandidate {
    pub para_id: String,
    pub text: String,
}

/// Candidates of one question, all drawn from its document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub q_id: String,
    pub texts: Vec<TextCandidate>,
    pub descs: Vec<TableDescription>,
}

impl CandidateSet {
    pub fn build<T: Scalar>(question: &Question<T>, doc: &Document<T>) -> Self {
        Self {
            q_id: question.q_id.clone(),
            texts: doc
                .paragraphs
                .iter()
                .map(|p| TextCandidate {
                    para_id: p.para_id.clone(),
                    text: p.text.clone(),
                })
                .collect(),
            descs: doc.tables.iter().flat_map(linearize).collect(),
        }
    }

    pub fn text(&self, para_id: &str) -> Option<&TextCandidate> {
        self.texts.iter().find(|t| t.para_id == para_id)
    }

    pub fn desc(&self, desc_id: &str) -> Option<&TableDescription> {
        self.descs.iter().find(|d| d.desc_id == desc_id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelevanceScore<T> {
    pub q_id: String,
    pub candidate_id: String,
    pub kind: CandidateKind,
    pub score: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScorerKind {
    #[default]
    Lexical,
    Oracle,
    External,
}

impl ScorerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ScorerKind::Lexical => "lexical",
            ScorerKind::Oracle => "oracle",
            ScorerKind::External => "external",
        }
    }
}

impl fmt::Display for ScorerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ScorerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "lexical" => Ok(ScorerKind::Lexical),
            "oracle" => Ok(ScorerKind::Oracle),
            "external" => Ok(ScorerKind::External),
            _ => Err(format!("unknown scorer `{s}` (expected lexical, oracle or external)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetrievalConfig {
    /// Top paragraphs kept.
    pub n: usize,
    /// Top table descriptions kept.
    pub m: usize,
    pub scorer: ScorerKind,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self {
            n: 5,
            m: 10,
            scorer: ScorerKind::Lexical,
        }
    }
}

impl RetrievalConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.n == 0 || self.m == 0 {
            return Err(format!("retrieval n and m must be >= 1 (n={}, m={})", self.n, self.m));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// question typing

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum MatchKind {
    Prefix,
    Contains,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Rule {
    label: QuestionType,
    kind: MatchKind,
    phrase: String,
}

/// Ordered keyword rules; the first match wins, no match means arithmetic.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuleSet {
    rules: Vec<Rule>,
}

const DEFAULT_RULES: &str = include_str!("../data/qtype_rules.txt");

impl Default for RuleSet {
    fn default() -> Self {
        Self::parse(DEFAULT_RULES).expect("bundled rules parse")
    }
}

impl RuleSet {
    pub fn parse(src: &str) -> Result<Self, RetrievalError> {
        let mut rules = Vec::new();
        for (i, line) in src.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |reason: &str| RetrievalError::Rules {
                line: i + 1,
                reason: reason.to_string(),
            };
            let mut parts = line.splitn(3, char::is_whitespace);
            let label = parts
                .next()
                .unwrap_or_default()
                .parse::<QuestionType>()
                .map_err(|e| err(&e))?;
            let kind = match parts.next() {
                Some("prefix") => MatchKind::Prefix,
                Some("contains") => MatchKind::Contains,
                _ => return Err(err("match must be `prefix` or `contains`")),
            };
            let phrase = tokenize(parts.next().unwrap_or_default()).join(" ");
            if phrase.is_empty() {
                return Err(err("empty phrase"));
            }
            rules.push(Rule { label, kind, phrase });
        }
        Ok(Self { rules })
    }

    pub fn load(path: &Path) -> Result<Self, RetrievalError> {
        let src = std::fs::read_to_string(path).map_err(|e| RetrievalError::Rules {
            line: 0,
            reason: format!("{}: {e}", path.display()),
        })?;
        Self::parse(&src)
    }

    pub fn classify(&self, question: &str) -> QuestionType {
        let norm = format!(" {} ", tokenize(question).join(" "));
        self.rules
            .iter()
            .find(|r| match r.kind {
                MatchKind::Prefix => norm[1..].starts_with(&format!("{} ", r.phrase)),
                MatchKind::Contains => norm.contains(&format!(" {} ", r.phrase)),
            })
            .map_or(QuestionType::Arithmetic, |r| r.label)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypeLabel {
    pub q_id: String,
    pub label: QuestionType,
}

#[derive(Debug, Clone)]
pub enum Classifier {
    Rules(RuleSet),
    /// Labels produced elsewhere, keyed by question id.
    External(HashMap<String, QuestionType>),
}

impl Classifier {
    pub fn load_labels(path: &Path) -> Result<Self, RetrievalError> {
        let labels: Vec<TypeLabel> = jsonl::read_jsonl(path)?;
        Ok(Self::External(labels.into_iter().map(|l| (l.q_id, l.label)).collect()))
    }

    pub fn classify<T: Scalar>(&self, q: &Question<T>) -> Result<QuestionType, RetrievalError> {
        if q.text.trim().is_empty() {
            return Err(RetrievalError::EmptyQuestion(q.q_id.clone()));
        }
        match self {
            Self::Rules(rules) => Ok(rules.classify(&q.text)),
            Self::External(map) => map
                .get(&q.q_id)
                .copied()
                .ok_or_else(|| RetrievalError::MissingLabel(q.q_id.clone())),
        }
    }
}

impl Default for Classifier {
    fn default() -> Self {
        Self::Rules(RuleSet::default())
    }
}

/// Fraction of questions whose predicted type equals their gold type
/// (questions without a gold type are skipped).
pub fn classifier_accuracy<T: Scalar>(classifier: &Classifier, questions: &[Question<T>]) -> Option<f64> {
    let mut total = 0usize;
    let mut right = 0usize;
    for q in questions {
        if let (Some(gold), Ok(pred)) = (q.gold_type, classifier.classify(q)) {
            total += 1;
            right += usize::from(gold == pred);
        }
    }
    (total > 0).then(|| right as f64 / total as f64)
}

// ---------------------------------------------------------------------------
// scoring

/// Scores produced by an external model, keyed by (q_id, kind, candidate_id).
#[derive(Debug, Clone, Default)]
pub struct ExternalScores<T> {
    scores: HashMap<(String, CandidateKind, String), T>,
}

impl<T: Scalar> ExternalScores<T> {
    pub fn from_records(records: Vec<RelevanceScore<T>>) -> Result<Self, RetrievalError> {
        let mut scores = HashMap::with_capacity(records.len());
        for r in records {
            if !r.score.is_finite() {
                return Err(RetrievalError::BadScores(format!(
                    "non-finite score for {}/{}",
                    r.q_id, r.candidate_id
                )));
            }
            let key = (r.q_id, r.kind, r.candidate_id);
            if scores.insert(key.clone(), r.score).is_some() {
                return Err(RetrievalError::BadScores(format!(
                    "duplicate score for {}/{}",
                    key.0, key.2
                )));
            }
        }
        Ok(Self { scores })
    }

    pub fn load(path: &Path) -> Result<Self, RetrievalError> {
        Self::from_records(jsonl::read_jsonl(path)?)
    }

    fn get(&self, q_id: &str, kind: CandidateKind, id: &str) -> Option<T> {
        self.scores.get(&(q_id.to_string(), kind, id.to_string())).copied()
    }
}

#[derive(Debug, Clone)]
pub enum Scorer<T> {
    /// Cosine over lowercase term-frequency vectors.
    Lexical,
    /// 1 for gold evidence, 0 otherwise.
    Oracle,
    External(ExternalScores<T>),
}

impl<T> Scorer<T> {
    pub fn kind(&self) -> ScorerKind {
        match self {
            Self::Lexical => ScorerKind::Lexical,
            Self::Oracle => ScorerKind::Oracle,
            Self::External(_) => ScorerKind::External,
        }
    }
}

/// One score per candidate, texts first then descriptions.
pub fn score_candidates<T: Scalar>(
    question: &Question<T>,
    cands: &CandidateSet,
    scorer: &Scorer<T>,
) -> Result<Vec<RelevanceScore<T>>, RetrievalError> {
    let items = cands
        .texts
        .iter()
        .map(|t| (CandidateKind::Text, t.para_id.as_str(), t.text.as_str()))
        .chain(
            cands
                .descs
                .iter()
                .map(|d| (CandidateKind::TableDesc, d.desc_id.as_str(), d.text.as_str())),
        );
    let mk = |kind, id: &str, score| RelevanceScore {
        q_id: question.q_id.clone(),
        candidate_id: id.to_string(),
        kind,
        score,
    };
    match scorer {
        Scorer::Lexical => {
            let qv = TermFreq::<T>::from_text(&question.text);
            Ok(items
                .map(|(kind, id, text)| mk(kind, id, qv.cosine(&TermFreq::from_text(text))))
                .collect())
        }
        Scorer::Oracle => {
            let gold_text: BTreeSet<&str> = question.gold_text_evidence.iter().map(String::as_str).collect();
            let gold_desc: BTreeSet<String> = question.gold_table_evidence.iter().map(description_id).collect();
            Ok(items
                .map(|(kind, id, _)| {
                    let hit = match kind {
                        CandidateKind::Text => gold_text.contains(id),
                        CandidateKind::TableDesc => gold_desc.contains(id),
                    };
                    mk(kind, id, if hit { T::one() } else { T::zero() })
                })
                .collect())
        }
        Scorer::External(ext) => {
            let mut out = Vec::new();
            let mut missing = Vec::new();
            for (kind, id, _) in items {
                match ext.get(&question.q_id, kind, id) {
                    Some(s) => out.push(mk(kind, id, s)),
                    None => missing.push(format!("{kind}:{id}")),
                }
            }
            if missing.is_empty() {
                Ok(out)
            } else {
                Err(RetrievalError::MissingScores {
                    q_id: question.q_id.clone(),
                    ids: missing,
                })
            }
        }
    }
}

// ---------------------------------------------------------------------------
// selection

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ranked<T> {
    pub id: String,
    pub score: T,
}

/// Selected evidence of one question, each list in rank order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evidence<T> {
    pub q_id: String,
    pub texts: Vec<Ranked<T>>,
    pub descs: Vec<Ranked<T>>,
}

impl<T: Scalar> Evidence<T> {
    pub fn is_empty(&self) -> bool {
        self.texts.is_empty() && self.descs.is_empty()
    }

    pub fn ids(&self, kind: CandidateKind) -> impl Iterator<Item = &str> {
        match kind {
            CandidateKind::Text => self.texts.iter(),
            CandidateKind::TableDesc => self.descs.iter(),
        }
        .map(|r| r.id.as_str())
    }

    /// Cells behind the selected descriptions, in rank order.
    pub fn table_cells(&self, cands: &CandidateSet) -> Vec<CellRef> {
        self.descs
            .iter()
            .filter_map(|r| cands.desc(&r.id).map(|d| d.cell.clone()))
            .collect()
    }

    /// Keep only the first `n` texts and `m` descriptions.
    pub fn truncated(&self, n: usize, m: usize) -> Self {
        Self {
            q_id: self.q_id.clone(),
            texts: self.texts.iter().take(n).cloned().collect(),
            descs: self.descs.iter().take(m).cloned().collect(),
        }
    }
}

fn rank<T: Scalar>(mut items: Vec<Ranked<T>>, k: usize) -> Vec<Ranked<T>> {
    items.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.id.cmp(&b.id))
    });
    items.truncate(k);
    items
}

/// Top-n texts and top-m descriptions by descending score, ties broken by
/// ascending candidate id.
pub fn select_topk<T: Scalar>(scores: &[RelevanceScore<T>], config: &RetrievalConfig) -> Evidence<T> {
    let q_id = scores.first().map(|s| s.q_id.clone()).unwrap_or_default();
    let split = |kind| {
        scores
            .iter()
            .filter(|s| s.kind == kind)
            .map(|s| Ranked {
                id: s.candidate_id.clone(),
                score: s.score,
            })
            .collect::<Vec<_>>()
    };
    Evidence {
        q_id,
        texts: rank(split(CandidateKind::Text), config.n),
        descs: rank(split(CandidateKind::TableDesc), config.m),
    }
}

/// Gold evidence ids of a question for one candidate kind.
pub fn gold_ids<T: Scalar>(q: &Question<T>, kind: CandidateKind) -> BTreeSet<String> {
    match kind {
        CandidateKind::Text => q.gold_text_evidence.iter().cloned().collect(),
        CandidateKind::TableDesc => q.gold_table_evidence.iter().map(description_id).collect(),
    }
}

/// Hit and gold counts of one question.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecallTally {
    pub hits: usize,
    pub gold: usize,
}

impl RecallTally {
    pub fn of<T: Scalar>(pred: &Evidence<T>, gold: &BTreeSet<String>, kind: CandidateKind) -> Self {
        let got: BTreeSet<&str> = pred.ids(kind).collect();
        Self {
            hits: gold.iter().filter(|g| got.contains(g.as_str())).count(),
            gold: gold.len(),
        }
    }

    pub fn merge(self, other: Self) -> Self {
        Self {
            hits: self.hits + other.hits,
            gold: self.gold + other.gold,
        }
    }

    pub fn recall(&self) -> Option<f64> {
        (self.gold > 0).then(|| self.hits as f64 / self.gold as f64)
    }
}

/// Micro-averaged recall of the predicted evidence against gold.
///
/// Questions with no gold evidence of `kind` do not count; `None` when no
/// question counts at all.
pub fn recall_at_k<T: Scalar>(predictions: &[Evidence<T>], gold: &[Question<T>], kind: CandidateKind) -> Option<f64> {
    let by_id: BTreeMap<&str, &Question<T>> = gold.iter().map(|q| (q.q_id.as_str(), q)).collect();
    predictions
        .iter()
        .filter_map(|p| by_id.get(p.q_id.as_str()).map(|q| (p, gold_ids(q, kind))))
        .filter(|(_, g)| !g.is_empty())
        .map(|(p, g)| RecallTally::of(p, &g, kind))
        .fold(RecallTally::default(), RecallTally::merge)
        .recall()
}
