//! Prompt construction, demonstration files and demonstration selection.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cluster::{cosine, spherical_kmeans};
use crate::corpus::{Question, QuestionType};
use crate::programdsl::parse_program;
use crate::scalar::Scalar;
use crate::text::TermFreq;

pub const ZERO_SHOT_TRIGGER: &str = "Let's retrieve above text and table step by step and then think step by step to answer the question. First, based on the question, we need to find";
pub const FEW_SHOT_TRIGGER: &str = "Let's retrieve above text and table step by step";
pub const ANSWER_TRIGGER: &str = "Therefore, the answer to the question is";
pub const COT_TRIGGER: &str = "Let's think step by step";
/// Line introducing a rendered table in a prompt or demonstration context.
pub const TABLE_LABEL: &str = "Table:\n";

pub fn answer_trigger() -> &'static str {
    ANSWER_TRIGGER
}

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("no evidence for the prompt; run retrieval first")]
    EmptyEvidence,
    #[error("few-shot prompt needs at least one demonstration; use build_zero_shot for 0 shots")]
    NoDemos,
    #[error("demonstration `{demo_id}` is {found}, question is {expected}")]
    QtypeMismatch {
        demo_id: String,
        expected: QuestionType,
        found: QuestionType,
    },
    #[error("demonstration `{0}` has a table in its context; CoT prompts take text and descriptions only")]
    TableInCotDemo(String),
    #[error("{path}: {reason}")]
    DemoFile { path: PathBuf, reason: String },
    #[error("demo directory {path} has {have} {qtype} demonstrations, {need} needed")]
    MissingDemos {
        path: PathBuf,
        qtype: QuestionType,
        need: usize,
        have: usize,
    },
    #[error("{have} {qtype} questions available, {need} needed")]
    TooFewQuestions {
        qtype: QuestionType,
        need: usize,
        have: usize,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    #[default]
    Hrot,
    Cot,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Hrot => "hrot",
            Strategy::Cot => "cot",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "hrot" => Ok(Strategy::Hrot),
            "cot" => Ok(Strategy::Cot),
            _ => Err(format!("unknown strategy `{s}` (expected hrot or cot)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentRole {
    ContextText,
    ContextTable,
    Demonstration,
    Question,
    Trigger,
    AnswerTrigger,
    /// Model output of the first zero-shot call.
    Reasoning,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub role: SegmentRole,
    pub text: String,
}

/// Ordered prompt segments and their newline-joined rendering.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    segments: Vec<Segment>,
    rendered: String,
}

impl PromptBundle {
    fn new(segments: Vec<Segment>) -> Self {
        let rendered = segments.iter().map(|s| s.text.as_str()).collect::<Vec<_>>().join("\n");
        Self { segments, rendered }
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn rendered(&self) -> &str {
        &self.rendered
    }

    pub fn count(&self, role: SegmentRole) -> usize {
        self.segments.iter().filter(|s| s.role == role).count()
    }
}

fn seg(role: SegmentRole, text: impl Into<String>) -> Segment {
    Segment {
        role,
        text: text.into(),
    }
}

/// Evidence ready for rendering: retrieved texts in rank order, table
/// descriptions, and rendered reconstructed tables.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptContext {
    pub texts: Vec<String>,
    pub descriptions: Vec<String>,
    pub tables: Vec<String>,
}

impl PromptContext {
    pub fn is_empty(&self) -> bool {
        self.texts.is_empty() && self.descriptions.is_empty() && self.tables.is_empty()
    }
}

/// Texts, then descriptions, then tables. CoT never sees tables.
fn context_segments(ctx: &PromptContext, strategy: Strategy) -> Result<Vec<Segment>, PromptError> {
    let mut out: Vec<Segment> = ctx
        .texts
        .iter()
        .chain(&ctx.descriptions)
        .map(|t| seg(SegmentRole::ContextText, t.trim()))
        .collect();
    if strategy == Strategy::Hrot {
        out.extend(
            ctx.tables
                .iter()
                .map(|t| seg(SegmentRole::ContextTable, format!("{TABLE_LABEL}{t}"))),
        );
    }
    if out.is_empty() {
        return Err(PromptError::EmptyEvidence);
    }
    Ok(out)
}

fn question_text(q: &str) -> String {
    format!("Question: {}", q.trim())
}

pub fn build_zero_shot(ctx: &PromptContext, question: &str, strategy: Strategy) -> Result<PromptBundle, PromptError> {
    let mut segments = context_segments(ctx, strategy)?;
    segments.push(seg(SegmentRole::Question, question_text(question)));
    let trigger = match strategy {
        Strategy::Hrot => ZERO_SHOT_TRIGGER,
        Strategy::Cot => COT_TRIGGER,
    };
    segments.push(seg(SegmentRole::Trigger, trigger));
    Ok(PromptBundle::new(segments))
}

/// Second zero-shot call: first prompt, the model's reasoning, answer trigger.
pub fn build_answer_call(first: &PromptBundle, reasoning: &str) -> PromptBundle {
    let mut segments = first.segments.clone();
    segments.push(seg(SegmentRole::Reasoning, reasoning.trim()));
    segments.push(seg(SegmentRole::AnswerTrigger, ANSWER_TRIGGER));
    PromptBundle::new(segments)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Demonstration {
    pub demo_id: String,
    pub qtype: QuestionType,
    pub question: String,
    pub context: String,
    pub chain: String,
    pub answer: String,
}

const SECTIONS: [&str; 6] = ["id", "type", "question", "context", "chain", "answer"];

impl Demonstration {
    /// Parse a `### section` delimited demonstration file.
    pub fn parse(src: &str, default_id: &str) -> Result<Self, String> {
        let mut sections: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        let mut current: Option<&str> = None;
        for line in src.lines() {
            if let Some(h) = line.strip_prefix("###") {
                let name = h.trim();
                let name = SECTIONS
                    .iter()
                    .find(|s| s.eq_ignore_ascii_case(name))
                    .ok_or_else(|| format!("unknown section `{name}`"))?;
                if sections.contains_key(name) {
                    return Err(format!("duplicate section `{name}`"));
                }
                sections.insert(name, Vec::new());
                current = Some(name);
            } else if let Some(c) = current {
                sections.get_mut(c).expect("opened").push(line);
            } else if !line.trim().is_empty() {
                return Err("text before the first section header".into());
            }
        }
        let get = |k: &str| sections.get(k).map(|l| l.join("\n").trim().to_string());
        let require = |k: &str| {
            get(k)
                .filter(|s| !s.is_empty())
                .ok_or_else(|| format!("missing section `{k}`"))
        };
        let qtype = QuestionType::from_str(&require("type")?).map_err(|e| e.to_string())?;
        let demo = Self {
            demo_id: get("id")
                .filter(|s| !s.is_empty())
                .unwrap_or_else(|| default_id.to_string()),
            qtype,
            question: require("question")?,
            context: get("context").unwrap_or_default(),
            chain: get("chain").unwrap_or_default(),
            answer: require("answer")?,
        };
        if qtype == QuestionType::Arithmetic {
            parse_program::<f64>(&demo.answer).map_err(|e| format!("answer is not a program: {e}"))?;
        }
        Ok(demo)
    }

    pub fn to_file_string(&self) -> String {
        format!(
            "### id\n{}\n### type\n{}\n### question\n{}\n### context\n{}\n### chain\n{}\n### answer\n{}\n",
            self.demo_id, self.qtype, self.question, self.context, self.chain, self.answer
        )
    }

    /// Demonstration block; `context_limit` truncates the context by chars.
    pub fn render(&self, strategy: Strategy, context_limit: Option<usize>) -> String {
        let context: String = match context_limit {
            Some(n) => self.context.chars().take(n).collect(),
            None => self.context.clone(),
        };
        let trigger = match strategy {
            Strategy::Hrot => FEW_SHOT_TRIGGER,
            Strategy::Cot => COT_TRIGGER,
        };
        let mut parts = Vec::new();
        if !context.trim().is_empty() {
            parts.push(context.trim().to_string());
        }
        parts.push(question_text(&self.question));
        parts.push(trigger.to_string());
        if !self.chain.is_empty() {
            parts.push(self.chain.clone());
        }
        parts.push(format!("{ANSWER_TRIGGER} {}", self.answer));
        parts.join("\n")
    }
}

/// Load every `*.txt` demonstration under `dir`, sorted by id.
pub fn load_demo_dir(dir: &Path) -> Result<Vec<Demonstration>, PromptError> {
    let io = |source| PromptError::Io {
        path: dir.to_path_buf(),
        source,
    };
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io)?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()
        .map_err(io)?;
    paths.retain(|p| p.extension().is_some_and(|e| e == "txt"));
    paths.sort();
    let mut demos = Vec::with_capacity(paths.len());
    let mut seen = BTreeSet::new();
    for path in paths {
        let src = fs::read_to_string(&path).map_err(|source| PromptError::Io {
            path: path.clone(),
            source,
        })?;
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
        let demo = Demonstration::parse(&src, stem).map_err(|reason| PromptError::DemoFile {
            path: path.clone(),
            reason,
        })?;
        if !seen.insert(demo.demo_id.clone()) {
            return Err(PromptError::DemoFile {
                path,
                reason: format!("duplicate demo id `{}`", demo.demo_id),
            });
        }
        demos.push(demo);
    }
    demos.sort_by(|a, b| a.demo_id.cmp(&b.demo_id));
    Ok(demos)
}

/// The first `k` demonstrations of `qtype` in id order.
pub fn demos_for(
    demos: &[Demonstration],
    qtype: QuestionType,
    k: usize,
    dir: &Path,
) -> Result<Vec<Demonstration>, PromptError> {
    let mine: Vec<Demonstration> = demos.iter().filter(|d| d.qtype == qtype).take(k).cloned().collect();
    if mine.len() < k {
        return Err(PromptError::MissingDemos {
            path: dir.to_path_buf(),
            qtype,
            need: k,
            have: mine.len(),
        });
    }
    Ok(mine)
}

pub fn build_few_shot(
    demos: &[Demonstration],
    ctx: &PromptContext,
    question: &str,
    qtype: QuestionType,
    strategy: Strategy,
    context_limit: Option<usize>,
) -> Result<PromptBundle, PromptError> {
    if demos.is_empty() {
        return Err(PromptError::NoDemos);
    }
    if let Some(d) = demos.iter().find(|d| d.qtype != qtype) {
        return Err(PromptError::QtypeMismatch {
            demo_id: d.demo_id.clone(),
            expected: qtype,
            found: d.qtype,
        });
    }
    if strategy == Strategy::Cot {
        if let Some(d) = demos.iter().find(|d| d.context.contains(TABLE_LABEL)) {
            return Err(PromptError::TableInCotDemo(d.demo_id.clone()));
        }
    }
    let mut segments: Vec<Segment> = demos
        .iter()
        .map(|d| seg(SegmentRole::Demonstration, d.render(strategy, context_limit)))
        .collect();
    segments.extend(context_segments(ctx, strategy)?);
    segments.push(seg(SegmentRole::Question, question_text(question)));
    let trigger = match strategy {
        Strategy::Hrot => FEW_SHOT_TRIGGER,
        Strategy::Cot => COT_TRIGGER,
    };
    segments.push(seg(SegmentRole::Trigger, trigger));
    Ok(PromptBundle::new(segments))
}

/// Pick `k` representative questions of `qtype` by clustering their
/// term-frequency vectors; one question nearest each centroid, returned in
/// id order. Questions are typed by their gold label.
pub fn select_demos<T: Scalar>(
    questions: &[Question<T>],
    qtype: QuestionType,
    k: usize,
    seed: u64,
) -> Result<Vec<Question<T>>, PromptError> {
    let mut pool: Vec<&Question<T>> = questions.iter().filter(|q| q.gold_type == Some(qtype)).collect();
    pool.sort_by(|a, b| a.q_id.cmp(&b.q_id));
    if k == 0 || pool.len() < k {
        return Err(PromptError::TooFewQuestions {
            qtype,
            need: k.max(1),
            have: pool.len(),
        });
    }
    let tfs: Vec<TermFreq<T>> = pool.iter().map(|q| TermFreq::from_text(&q.text)).collect();
    let vocab: BTreeMap<&str, usize> = tfs
        .iter()
        .flat_map(|tf| tf.terms().map(|(t, _)| t))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .enumerate()
        .map(|(i, t)| (t, i))
        .collect();
    let points: Vec<Vec<T>> = tfs
        .iter()
        .map(|tf| {
            let mut v = vec![T::zero(); vocab.len()];
            for (t, c) in tf.terms() {
                v[vocab[t]] = c;
            }
            v
        })
        .collect();
    let clustering = spherical_kmeans(&points, k, seed);
    let mut picked = BTreeSet::new();
    for centroid in &clustering.centroids {
        // most similar unpicked question; earlier (lower id) wins ties
        let mut best: Option<(usize, T)> = None;
        for (i, p) in points.iter().enumerate() {
            if picked.contains(&i) {
                continue;
            }
            let s = cosine(p, centroid);
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((i, s));
            }
        }
        picked.insert(best.expect("k <= pool size").0);
    }
    Ok(picked.into_iter().map(|i| pool[i].clone()).collect())
}
