//! End-to-end runs: classify, retrieve, reconstruct, prompt, complete,
//! extract, score. Every intermediate is written under the output dir.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{BackendKind, ClassifierKind, RunConfig, Split};
use crate::corpus::{ingest_corpus, Corpus, Document, Question, QuestionType};
use crate::evalmetrics::{
    build_report, Layout, MetricsError, MetricsReport, PredictionRecord, RetrievalTallies, TableMode,
};
use crate::jsonl::{read_jsonl, write_jsonl, JsonlError};
use crate::llmgateway::{
    prompt_hash, Backend, CompletionRequest, Gateway, GatewayError, HttpBackend, MockBackend, MockEntry, ResponseCache,
};
use crate::programdsl::{extract_answer, NormalizedAnswer};
use crate::promptkit::{
    build_answer_call, build_few_shot, build_zero_shot, demos_for, load_demo_dir, Demonstration, PromptBundle,
    PromptContext, PromptError, Strategy, ANSWER_TRIGGER, TABLE_LABEL,
};
use crate::reconstruct::{reconstruct_tables, ReconstructedTable, ReconstructionRecord};
use crate::retrieval::{
    gold_ids, score_candidates, select_topk, CandidateKind, CandidateSet, Classifier, Evidence, ExternalScores, Ranked,
    RecallTally, Scorer, ScorerKind,
};
use crate::scalar::Scalar;

pub const EVIDENCE_FILE: &str = "evidence.jsonl";
pub const RECONSTRUCTIONS_FILE: &str = "reconstructions.jsonl";
pub const PROMPTS_FILE: &str = "prompts.jsonl";
pub const PREDICTIONS_FILE: &str = "predictions.jsonl";
pub const ERRORS_FILE: &str = "errors.jsonl";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TXT: &str = "report.txt";

/// Run-level failure, split by exit code class.
#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("backend error: {0}")]
    Backend(String),
}

impl PipelineError {
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 1,
            PipelineError::Data(_) => 2,
            PipelineError::Backend(_) => 3,
        }
    }
}

impl From<JsonlError> for PipelineError {
    fn from(e: JsonlError) -> Self {
        PipelineError::Data(e.to_string())
    }
}

fn io_err(path: &Path, e: std::io::Error) -> PipelineError {
    PipelineError::Data(format!("{}: {e}", path.display()))
}

/// Error for an artifact a previous subcommand should have produced.
pub fn missing_artifact(path: &Path, producer: &str) -> PipelineError {
    PipelineError::Data(format!(
        "missing artifact {}; run `hrot {producer}` first",
        path.display()
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Classify,
    Retrieve,
    Reconstruct,
    Prompt,
    Complete,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    Data,
    Backend,
}

/// One quarantined question.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub q_id: String,
    pub stage: Stage,
    pub kind: ErrorKind,
    pub message: String,
}

fn fail(q: &str, stage: Stage, kind: ErrorKind, e: impl std::fmt::Display) -> ErrorRecord {
    ErrorRecord {
        q_id: q.to_string(),
        stage,
        kind,
        message: e.to_string(),
    }
}

/// Retrieval output of one question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceRecord<T> {
    pub q_id: String,
    pub qtype: QuestionType,
    pub scorer: ScorerKind,
    pub texts: Vec<Ranked<T>>,
    pub descs: Vec<Ranked<T>>,
    pub tallies: RetrievalTallies,
}

impl<T: Scalar> EvidenceRecord<T> {
    pub fn evidence(&self) -> Evidence<T> {
        Evidence {
            q_id: self.q_id.clone(),
            texts: self.texts.clone(),
            descs: self.descs.clone(),
        }
    }
}

/// One LLM call.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptRecord {
    pub q_id: String,
    pub call: usize,
    pub prompt_hash: String,
    pub prompt: String,
    pub completion: String,
}

pub fn load_split<T: Scalar>(cfg: &RunConfig, split: Split) -> Result<Corpus<T>, PipelineError> {
    let path = cfg
        .corpus
        .path(split)
        .ok_or_else(|| PipelineError::Config(format!("no corpus path for split {split:?}")))?;
    if !path.exists() {
        return Err(missing_artifact(path, "ingest"));
    }
    ingest_corpus(path, cfg.corpus.format, cfg.corpus.header_source.into())
        .map_err(|e| PipelineError::Data(e.to_string()))
}

pub fn classifier_for<T: Scalar>(cfg: &RunConfig, corpus: &Corpus<T>) -> Result<Classifier, PipelineError> {
    match cfg.classifier {
        ClassifierKind::Rules => Ok(Classifier::default()),
        ClassifierKind::Gold => Ok(Classifier::External(
            corpus
                .questions()
                .iter()
                .filter_map(|q| q.gold_type.map(|t| (q.q_id.clone(), t)))
                .collect(),
        )),
        ClassifierKind::External => {
            let path = cfg.labels.as_deref().expect("validated");
            Classifier::load_labels(path).map_err(|e| PipelineError::Data(e.to_string()))
        }
    }
}

pub fn scorer_for<T: Scalar>(cfg: &RunConfig) -> Result<Scorer<T>, PipelineError> {
    Ok(match cfg.retrieval.scorer {
        ScorerKind::Lexical => Scorer::Lexical,
        ScorerKind::Oracle => Scorer::Oracle,
        ScorerKind::External => {
            let path = cfg.scores.as_deref().expect("validated");
            Scorer::External(ExternalScores::load(path).map_err(|e| PipelineError::Data(e.to_string()))?)
        }
    })
}

fn document<'a, T: Scalar>(corpus: &'a Corpus<T>, q: &Question<T>) -> &'a Document<T> {
    corpus.document(&q.doc_id).expect("ingest checks question documents")
}

/// Classify, score and select the evidence of one question.
pub fn retrieve_one<T: Scalar>(
    q: &Question<T>,
    doc: &Document<T>,
    classifier: &Classifier,
    scorer: &Scorer<T>,
    cfg: &RunConfig,
) -> Result<EvidenceRecord<T>, ErrorRecord> {
    let qtype = classifier
        .classify(q)
        .map_err(|e| fail(&q.q_id, Stage::Classify, ErrorKind::Data, e))?;
    let cands = CandidateSet::build(q, doc);
    let scores = score_candidates(q, &cands, scorer).map_err(|e| fail(&q.q_id, Stage::Retrieve, ErrorKind::Data, e))?;
    let mut ev = select_topk(&scores, &cfg.retrieval);
    ev.q_id = q.q_id.clone();
    let tally = |kind| RecallTally::of(&ev, &gold_ids(q, kind), kind);
    Ok(EvidenceRecord {
        q_id: q.q_id.clone(),
        qtype,
        scorer: scorer.kind(),
        tallies: RetrievalTallies {
            text: tally(CandidateKind::Text),
            table: tally(CandidateKind::TableDesc),
        },
        texts: ev.texts,
        descs: ev.descs,
    })
}

/// Reconstructed tables for one question (empty unless arithmetic).
pub fn reconstruct_one<T: Scalar>(
    q: &Question<T>,
    doc: &Document<T>,
    ev: &EvidenceRecord<T>,
) -> Result<Vec<ReconstructedTable<T>>, ErrorRecord> {
    let cands = CandidateSet::build(q, doc);
    let cells = ev.evidence().table_cells(&cands);
    reconstruct_tables(q, ev.qtype, &doc.tables, &cells)
        .map_err(|e| fail(&q.q_id, Stage::Reconstruct, ErrorKind::Data, e))
}

/// Evidence as prompt text: tables for arithmetic HRoT with reconstruction,
/// descriptions otherwise.
pub fn prompt_context<T: Scalar>(
    q: &Question<T>,
    doc: &Document<T>,
    ev: &EvidenceRecord<T>,
    tables: &[ReconstructedTable<T>],
    strategy: Strategy,
    table_mode: TableMode,
) -> PromptContext {
    let cands = CandidateSet::build(q, doc);
    let texts = ev
        .texts
        .iter()
        .filter_map(|r| doc.paragraph(&r.id).map(|p| p.text.clone()))
        .collect();
    let use_tables = strategy == Strategy::Hrot
        && table_mode == TableMode::Reconstructed
        && ev.qtype == QuestionType::Arithmetic
        && !tables.is_empty();
    let (descriptions, tables) = if use_tables {
        (Vec::new(), tables.iter().map(ReconstructedTable::render).collect())
    } else {
        let d = ev
            .descs
            .iter()
            .filter_map(|r| cands.desc(&r.id).map(|d| d.text.clone()))
            .collect();
        (d, Vec::new())
    };
    PromptContext {
        texts,
        descriptions,
        tables,
    }
}

fn complete(
    gateway: &Gateway,
    cfg: &RunConfig,
    q_id: &str,
    call: usize,
    bundle: &PromptBundle,
) -> Result<PromptRecord, ErrorRecord> {
    let req = CompletionRequest {
        prompt: bundle.rendered().to_string(),
        temperature: cfg.llm.temperature,
        max_tokens: cfg.llm.max_tokens,
        model_name: cfg.llm.model.clone(),
        stop: cfg.llm.stop.clone(),
    };
    let res = gateway.complete(&req).map_err(|e| {
        let kind = match e {
            GatewayError::InvalidRequest(_) => ErrorKind::Data,
            _ => ErrorKind::Backend,
        };
        fail(q_id, Stage::Complete, kind, e)
    })?;
    Ok(PromptRecord {
        q_id: q_id.to_string(),
        call,
        prompt_hash: prompt_hash(bundle.rendered()),
        prompt: bundle.rendered().to_string(),
        completion: res.text,
    })
}

/// Everything produced for one question.
#[derive(Debug, Clone)]
pub struct QuestionOutput<T> {
    pub evidence: EvidenceRecord<T>,
    pub reconstructions: Vec<ReconstructionRecord>,
    pub prompts: Vec<PromptRecord>,
    pub prediction: PredictionRecord<T>,
}

struct RunContext<'a, T> {
    cfg: &'a RunConfig,
    corpus: &'a Corpus<T>,
    classifier: Classifier,
    scorer: Scorer<T>,
    demos: Vec<Demonstration>,
    gateway: &'a Gateway,
}

impl<T: Scalar> RunContext<'_, T> {
    fn process(&self, q: &Question<T>) -> Result<QuestionOutput<T>, ErrorRecord> {
        let cfg = self.cfg;
        let doc = document(self.corpus, q);
        let ev = retrieve_one(q, doc, &self.classifier, &self.scorer, cfg)?;
        let tables = if cfg.strategy == Strategy::Hrot && cfg.table_mode == TableMode::Reconstructed {
            reconstruct_one(q, doc, &ev)?
        } else {
            Vec::new()
        };
        let ctx = prompt_context(q, doc, &ev, &tables, cfg.strategy, cfg.table_mode);
        let prompt_err = |e: PromptError| fail(&q.q_id, Stage::Prompt, ErrorKind::Data, e);
        let mut prompts = Vec::new();
        if cfg.shots == 0 {
            let first = build_zero_shot(&ctx, &q.text, cfg.strategy).map_err(prompt_err)?;
            let r1 = complete(self.gateway, cfg, &q.q_id, 1, &first)?;
            let second = build_answer_call(&first, &r1.completion);
            prompts.push(r1);
            prompts.push(complete(self.gateway, cfg, &q.q_id, 2, &second)?);
        } else {
            let demos: Vec<Demonstration> = self
                .demos
                .iter()
                .filter(|d| d.qtype == ev.qtype)
                .take(cfg.shots)
                .cloned()
                .collect();
            let bundle = build_few_shot(&demos, &ctx, &q.text, ev.qtype, cfg.strategy, cfg.demo_context_chars)
                .map_err(prompt_err)?;
            prompts.push(complete(self.gateway, cfg, &q.q_id, 1, &bundle)?);
        }
        let last = prompts.last().expect("at least one call");
        let prediction = PredictionRecord {
            q_id: q.q_id.clone(),
            qtype: ev.qtype,
            predicted: extract_answer(&last.completion, ev.qtype),
            gold: q.gold_answer.as_ref().map(NormalizedAnswer::from_gold),
            prompt_hash: last.prompt_hash.clone(),
            shots: cfg.shots,
            strategy: cfg.strategy,
            table_mode: cfg.table_mode,
            scorer: cfg.retrieval.scorer,
            retrieval: Some(ev.tallies),
        };
        Ok(QuestionOutput {
            reconstructions: tables.iter().map(|t| ReconstructionRecord::new(&q.q_id, t)).collect(),
            evidence: ev,
            prompts,
            prediction,
        })
    }
}

/// Demonstrations for a few-shot run; both question types must have enough.
pub fn load_demos(cfg: &RunConfig) -> Result<Vec<Demonstration>, PipelineError> {
    if cfg.shots == 0 {
        return Ok(Vec::new());
    }
    let dir = cfg.demo_dir.as_deref().expect("validated");
    if !dir.is_dir() {
        return Err(PipelineError::Config(format!(
            "demo directory {} does not exist; run `hrot select-demos` and fill in the stubs",
            dir.display()
        )));
    }
    let demos = load_demo_dir(dir).map_err(|e| PipelineError::Config(e.to_string()))?;
    for qtype in QuestionType::ALL {
        let picked = demos_for(&demos, qtype, cfg.shots, dir)
            .map_err(|e| PipelineError::Config(format!("{e}; run `hrot select-demos` and fill in the stubs")))?;
        if cfg.strategy == Strategy::Cot {
            if let Some(d) = picked.iter().find(|d| d.context.contains(TABLE_LABEL)) {
                return Err(PipelineError::Config(format!(
                    "{}: {}",
                    dir.display(),
                    PromptError::TableInCotDemo(d.demo_id.clone())
                )));
            }
        }
    }
    Ok(demos)
}

pub fn gateway_for(cfg: &RunConfig) -> Result<Gateway, PipelineError> {
    let cache = match &cfg.llm.cache {
        Some(p) => ResponseCache::open(p).map_err(|e| PipelineError::Data(e.to_string()))?,
        None => ResponseCache::in_memory(),
    };
    let backend: Box<dyn Backend> = match cfg.llm.backend {
        BackendKind::Mock => match &cfg.llm.mock_script {
            Some(p) if p.exists() => Box::new(MockBackend::load(p).map_err(|e| PipelineError::Data(e.to_string()))?),
            Some(p) => return Err(missing_artifact(p, "author-mock")),
            None => Box::new(MockBackend::default()),
        },
        BackendKind::Http => {
            Box::new(HttpBackend::new(cfg.llm.http.clone()).map_err(|e| PipelineError::Backend(e.to_string()))?)
        }
    };
    Ok(Gateway::new(backend, cache))
}

/// Outcome of a full run.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub n_questions: usize,
    pub n_errors: usize,
    pub backend_calls: usize,
    pub report: Option<MetricsReport>,
    pub output_dir: PathBuf,
}

fn process_all<T: Scalar>(
    ctx: &RunContext<'_, T>,
    questions: &[Question<T>],
    concurrency: usize,
) -> Result<Vec<Result<QuestionOutput<T>, ErrorRecord>>, PipelineError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(concurrency)
        .build()
        .map_err(|e| PipelineError::Config(e.to_string()))?;
    // indexed collect keeps question order whatever the scheduling
    Ok(pool.install(|| questions.par_iter().map(|q| ctx.process(q)).collect()))
}

/// Write a report as `report.json` and `report.txt`.
pub fn write_report(dir: &Path, report: &MetricsReport) -> Result<(), PipelineError> {
    let json = serde_json::to_string_pretty(report).expect("report serializes");
    let txt = dir.join(REPORT_TXT);
    fs::write(dir.join(REPORT_JSON), json + "\n").map_err(|e| io_err(dir, e))?;
    fs::write(&txt, report.table.to_string()).map_err(|e| io_err(&txt, e))
}

pub fn run_pipeline<T: Scalar>(cfg: &RunConfig) -> Result<RunSummary, PipelineError> {
    let corpus: Corpus<T> = load_split(cfg, cfg.split)?;
    let demos = load_demos(cfg)?;
    let gateway = gateway_for(cfg)?;
    let ctx = RunContext {
        cfg,
        corpus: &corpus,
        classifier: classifier_for(cfg, &corpus)?,
        scorer: scorer_for(cfg)?,
        demos,
        gateway: &gateway,
    };
    let outputs = process_all(&ctx, corpus.questions(), cfg.concurrency)?;

    let (mut evidence, mut recons, mut prompts, mut preds, mut errors) =
        (Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for out in outputs {
        match out {
            Ok(o) => {
                evidence.push(o.evidence);
                recons.extend(o.reconstructions);
                prompts.extend(o.prompts);
                preds.push(o.prediction);
            }
            Err(e) => {
                tracing::warn!(q_id = %e.q_id, stage = ?e.stage, "{}", e.message);
                errors.push(e);
            }
        }
    }
    if preds.is_empty() {
        if let Some(e) = errors.iter().find(|e| e.kind == ErrorKind::Backend) {
            return Err(PipelineError::Backend(format!(
                "every question failed; first: {}",
                e.message
            )));
        }
    }

    let dir = &cfg.output_dir;
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    write_jsonl(&dir.join(EVIDENCE_FILE), &evidence)?;
    write_jsonl(&dir.join(RECONSTRUCTIONS_FILE), &recons)?;
    write_jsonl(&dir.join(PROMPTS_FILE), &prompts)?;
    write_jsonl(&dir.join(PREDICTIONS_FILE), &preds)?;
    write_jsonl(&dir.join(ERRORS_FILE), &errors)?;
    let report = match build_report(&preds, Layout::Main) {
        Ok(r) => {
            write_report(dir, &r)?;
            Some(r)
        }
        Err(MetricsError::Empty) => None,
        Err(e) => return Err(PipelineError::Data(e.to_string())),
    };
    Ok(RunSummary {
        n_questions: corpus.questions().len(),
        n_errors: errors.len(),
        backend_calls: gateway.backend_calls(),
        report,
        output_dir: dir.clone(),
    })
}

/// Retrieval stage alone: writes the evidence and error artifacts.
pub fn run_retrieve<T: Scalar>(cfg: &RunConfig) -> Result<(Vec<EvidenceRecord<T>>, Vec<ErrorRecord>), PipelineError> {
    let corpus: Corpus<T> = load_split(cfg, cfg.split)?;
    let classifier = classifier_for(cfg, &corpus)?;
    let scorer = scorer_for(cfg)?;
    let results: Vec<_> = corpus
        .questions()
        .par_iter()
        .map(|q| retrieve_one(q, document(&corpus, q), &classifier, &scorer, cfg))
        .collect();
    let (mut ok, mut errs) = (Vec::new(), Vec::new());
    for r in results {
        match r {
            Ok(e) => ok.push(e),
            Err(e) => errs.push(e),
        }
    }
    let dir = &cfg.output_dir;
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    write_jsonl(&dir.join(EVIDENCE_FILE), &ok)?;
    write_jsonl(&dir.join(ERRORS_FILE), &errs)?;
    Ok((ok, errs))
}

/// Reconstruction stage alone, reading the retrieval artifact.
pub fn run_reconstruct<T: Scalar>(cfg: &RunConfig) -> Result<Vec<ReconstructionRecord>, PipelineError> {
    let corpus: Corpus<T> = load_split(cfg, cfg.split)?;
    let path = cfg.output_dir.join(EVIDENCE_FILE);
    if !path.exists() {
        return Err(missing_artifact(&path, "retrieve"));
    }
    let evidence: Vec<EvidenceRecord<T>> = read_jsonl(&path)?;
    let mut out = Vec::new();
    for ev in &evidence {
        let q = corpus
            .question(&ev.q_id)
            .ok_or_else(|| PipelineError::Data(format!("{}: unknown question {}", path.display(), ev.q_id)))?;
        let tables = reconstruct_one(q, document(&corpus, q), ev).map_err(|e| PipelineError::Data(e.message))?;
        out.extend(tables.iter().map(|t| ReconstructionRecord::new(&q.q_id, t)));
    }
    write_jsonl(&cfg.output_dir.join(RECONSTRUCTIONS_FILE), &out)?;
    Ok(out)
}

/// Demonstration stubs for both question types, picked from the train split.
pub fn select_demo_stubs<T: Scalar>(cfg: &RunConfig, k: usize) -> Result<Vec<Demonstration>, PipelineError> {
    let corpus: Corpus<T> = load_split(cfg, Split::Train)?;
    let mut stubs = Vec::new();
    for qtype in QuestionType::ALL {
        let picked = crate::promptkit::select_demos(corpus.questions(), qtype, k, cfg.seed)
            .map_err(|e| PipelineError::Data(e.to_string()))?;
        for q in picked {
            let doc = document(&corpus, &q);
            let mut context: Vec<String> = q
                .gold_text_evidence
                .iter()
                .filter_map(|p| doc.paragraph(p).map(|p| p.text.clone()))
                .collect();
            if qtype == QuestionType::Arithmetic {
                if let Ok(tables) = reconstruct_tables(&q, qtype, &doc.tables, &q.gold_table_evidence) {
                    context.extend(tables.iter().map(|t| format!("{TABLE_LABEL}{}", t.render())));
                }
            } else {
                let cands = CandidateSet::build(&q, doc);
                context.extend(
                    q.gold_table_evidence
                        .iter()
                        .filter_map(|c| cands.desc(&crate::tabletree::description_id(c)).map(|d| d.text.clone())),
                );
            }
            stubs.push(Demonstration {
                demo_id: format!("{}-{}", qtype.as_str(), q.q_id),
                qtype,
                question: q.text.clone(),
                context: context.join("\n"),
                chain: String::new(),
                answer: gold_answer_text(&q, qtype).unwrap_or_default(),
            });
        }
    }
    Ok(stubs)
}

/// The answer a correct completion states: the gold program for arithmetic
/// questions that have one, else the gold answer.
pub fn gold_answer_text<T: Scalar>(q: &Question<T>, qtype: QuestionType) -> Option<String> {
    match (qtype, &q.gold_program) {
        (QuestionType::Arithmetic, Some(p)) => Some(p.clone()),
        _ => q.gold_answer.as_ref().map(|a| a.render()),
    }
}

/// Backend that answers from gold labels and records what it said.
struct AuthoringBackend {
    answers: HashMap<String, Result<String, String>>,
    log: Arc<Mutex<BTreeMap<String, String>>>,
}

impl AuthoringBackend {
    fn question_line(prompt: &str) -> Option<&str> {
        prompt
            .lines()
            .rev()
            .find_map(|l| l.strip_prefix("Question: "))
            .map(str::trim)
    }
}

impl Backend for AuthoringBackend {
    fn complete(&self, req: &CompletionRequest) -> Result<String, GatewayError> {
        let unknown = || GatewayError::UnknownPrompt {
            hash: prompt_hash(&req.prompt),
        };
        let question = Self::question_line(&req.prompt).ok_or_else(unknown)?;
        let answer = match self.answers.get(question) {
            Some(Ok(a)) => a,
            Some(Err(why)) => return Err(GatewayError::InvalidRequest(why.clone())),
            None => return Err(unknown()),
        };
        let text = if req.prompt.ends_with(ANSWER_TRIGGER) {
            format!(" {answer}.")
        } else {
            format!(" the values asked for in \"{question}\" in the text and table above.\n{ANSWER_TRIGGER} {answer}.")
        };
        self.log
            .lock()
            .expect("log poisoned")
            .insert(prompt_hash(&req.prompt), text.clone());
        Ok(text)
    }
}

/// Author a mock script whose completions state each question's gold
/// answer, covering every prompt the given configs will send.
pub fn author_mock_script<T: Scalar>(cfgs: &[RunConfig]) -> Result<Vec<MockEntry>, PipelineError> {
    let mut all = BTreeMap::new();
    for cfg in cfgs {
        let corpus: Corpus<T> = load_split(cfg, cfg.split)?;
        let classifier = classifier_for(cfg, &corpus)?;
        let mut answers: HashMap<String, Result<String, String>> = HashMap::new();
        for q in corpus.questions() {
            let qtype = classifier.classify(q).map_err(|e| PipelineError::Data(e.to_string()))?;
            let a = gold_answer_text(q, qtype).ok_or_else(|| format!("{} has no gold answer", q.q_id));
            if let Some(prev) = answers.insert(q.text.trim().to_string(), a.clone()) {
                if prev != a {
                    return Err(PipelineError::Data(format!(
                        "question text of {} is shared with a different answer",
                        q.q_id
                    )));
                }
            }
        }
        let log = Arc::new(Mutex::new(BTreeMap::new()));
        let backend = AuthoringBackend {
            answers,
            log: Arc::clone(&log),
        };
        let gateway = Gateway::new(Box::new(backend), ResponseCache::in_memory());
        let ctx = RunContext {
            cfg,
            corpus: &corpus,
            classifier,
            scorer: scorer_for(cfg)?,
            demos: load_demos(cfg)?,
            gateway: &gateway,
        };
        for out in process_all(&ctx, corpus.questions(), 1)? {
            if let Err(e) = out {
                return Err(PipelineError::Data(format!("{}: {}", e.q_id, e.message)));
            }
        }
        let log = std::mem::take(&mut *log.lock().expect("log poisoned"));
        all.extend(log);
    }
    Ok(all
        .into_iter()
        .map(|(prompt_hash, completion)| MockEntry {
            prompt_hash,
            completion,
        })
        .collect())
}
