//! Documents, questions and their ingestion.
//!
//! The canonical on-disk form is JSON Lines with one document per line:
//!
//! ```json
//! {"doc_id": "d1",
//!  "paragraphs": [{"para_id": "p0", "text": "..."}],
//!  "tables": [{"table_id": "t0", "grid": [[{"row":0,"col":0,"raw":"","value":null}, ...]],
//!              "header_row_band": [0, 1], "header_col_band": [0, 0]}],
//!  "questions": [{"q_id": "q1", "doc_id": "d1", "text": "...", "gold_type": "arithmetic",
//!                 "gold_answer": {"kind": "number", "number": 94},
//!                 "gold_program": "subtract(5829, 5735)",
//!                 "gold_text_evidence": ["p0"],
//!                 "gold_table_evidence": [{"table_id": "t0", "row": 3, "col": 1}]}]}
//! ```
//!
//! Grid cells may omit `row`, `col` and `value`; positions are implied by
//! their place in the grid and values are parsed from `raw`.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::jsonl::{self, JsonlError};
use crate::multihiertt;
use crate::scalar::Scalar;
use crate::tabletree::{infer_header_row_band, Band, Cell, HeaderSource, HierTable, TableError};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error(transparent)]
    Jsonl(#[from] JsonlError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("record {record}: field `{field}`: {reason}")]
    Invalid {
        record: String,
        field: String,
        reason: String,
    },
    #[error("record {record}: {source}")]
    Table {
        record: String,
        #[source]
        source: TableError,
    },
    #[error("question {q_id}: dangling evidence refs [{}]", refs.join(", "))]
    DanglingRef { q_id: String, refs: Vec<String> },
    #[error("duplicate {kind} id {id}")]
    Duplicate { kind: &'static str, id: String },
}

impl CorpusError {
    pub(crate) fn invalid(record: impl Into<String>, field: impl Into<String>, reason: impl Into<String>) -> Self {
        Self::Invalid {
            record: record.into(),
            field: field.into(),
            reason: reason.into(),
        }
    }
}

/// Reference to a single table cell.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellRef {
    pub table_id: String,
    pub row: usize,
    pub col: usize,
}

impl CellRef {
    pub fn new(table_id: impl Into<String>, row: usize, col: usize) -> Self {
        Self {
            table_id: table_id.into(),
            row,
            col,
        }
    }
}

impl fmt::Display for CellRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}[{},{}]", self.table_id, self.row, self.col)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AnswerValue<T> {
    Number { number: T },
    Text { text: String },
}

impl<T: Scalar> AnswerValue<T> {
    pub fn number(v: T) -> Self {
        Self::Number { number: v }
    }

    pub fn text(s: impl Into<String>) -> Self {
        Self::Text { text: s.into() }
    }

    pub fn render(&self) -> String {
        match self {
            Self::Number { number } => number.to_string(),
            Self::Text { text } => text.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionType {
    Arithmetic,
    SpanSelection,
}

impl QuestionType {
    pub const ALL: [QuestionType; 2] = [QuestionType::Arithmetic, QuestionType::SpanSelection];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Arithmetic => "arithmetic",
            Self::SpanSelection => "span_selection",
        }
    }
}

impl fmt::Display for QuestionType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for QuestionType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "arithmetic" => Ok(Self::Arithmetic),
            "span_selection" | "span selection" => Ok(Self::SpanSelection),
            other => Err(format!("unknown question type {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Paragraph {
    pub para_id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Question<T> {
    pub q_id: String,
    pub doc_id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_type: Option<QuestionType>,
    /// Absent for unlabeled (test-split) questions.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_answer: Option<AnswerValue<T>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_program: Option<String>,
    #[serde(default)]
    pub gold_text_evidence: Vec<String>,
    #[serde(default)]
    pub gold_table_evidence: Vec<CellRef>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document<T> {
    pub doc_id: String,
    pub paragraphs: Vec<Paragraph>,
    pub tables: Vec<HierTable<T>>,
}

impl<T> Document<T> {
    pub fn table(&self, table_id: &str) -> Option<&HierTable<T>> {
        self.tables.iter().find(|t| t.table_id == table_id)
    }

    pub fn paragraph(&self, para_id: &str) -> Option<&Paragraph> {
        self.paragraphs.iter().find(|p| p.para_id == para_id)
    }
}

/// One canonical JSONL line: a document with the questions asked about it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentRecord<T> {
    pub doc_id: String,
    pub paragraphs: Vec<Paragraph>,
    pub tables: Vec<RawTable<T>>,
    #[serde(default)]
    pub questions: Vec<Question<T>>,
}

/// Table as it appears on disk; cell positions and values are optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawTable<T> {
    pub table_id: String,
    pub grid: Vec<Vec<RawCell<T>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub header_row_band: Option<Band>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub header_col_band: Option<Band>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged, bound(deserialize = "T: Deserialize<'de>"))]
pub enum RawCell<T> {
    Full(Cell<T>),
    Partial {
        #[serde(default)]
        row: Option<usize>,
        #[serde(default)]
        col: Option<usize>,
        raw: String,
        #[serde(default)]
        value: Option<T>,
    },
    Bare(String),
}

impl<T: Scalar> From<&HierTable<T>> for RawTable<T> {
    fn from(t: &HierTable<T>) -> Self {
        Self {
            table_id: t.table_id.clone(),
            grid: t
                .grid
                .iter()
                .map(|row| row.iter().cloned().map(RawCell::Full).collect())
                .collect(),
            header_row_band: Some(t.header_row_band),
            header_col_band: Some(t.header_col_band),
        }
    }
}

impl<T: Scalar> RawTable<T> {
    pub fn into_table(self, source: HeaderSource) -> Result<HierTable<T>, TableError> {
        let grid: Vec<Vec<Cell<T>>> = self
            .grid
            .into_iter()
            .enumerate()
            .map(|(r, row)| {
                row.into_iter()
                    .enumerate()
                    .map(|(c, cell)| match cell {
                        RawCell::Full(cell) => cell,
                        RawCell::Partial { row, col, raw, value } => {
                            let mut cell = Cell::parse(row.unwrap_or(r), col.unwrap_or(c), raw);
                            if value.is_some() {
                                cell.value = value;
                            }
                            cell
                        }
                        RawCell::Bare(raw) => Cell::parse(r, c, raw),
                    })
                    .collect()
            })
            .collect();
        let header_row_band = match (source, self.header_row_band) {
            (HeaderSource::Markup, Some(b)) => b,
            _ => infer_header_row_band(&grid),
        };
        let header_col_band = match (source, self.header_col_band) {
            (HeaderSource::Markup, Some(b)) => b,
            _ => Band::new(0, 0),
        };
        let mut table = HierTable {
            table_id: self.table_id,
            grid,
            header_row_band,
            header_col_band,
        };
        table.validate()?;
        table.fill_values();
        Ok(table)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorpusFormat {
    Canonical,
    Multihiertt,
}

impl std::str::FromStr for CorpusFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "canonical" => Ok(Self::Canonical),
            "multihiertt" => Ok(Self::Multihiertt),
            other => Err(format!("unknown corpus format {other:?}")),
        }
    }
}

/// Validated, immutable collection of documents and questions.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus<T> {
    documents: Vec<Document<T>>,
    questions: Vec<Question<T>>,
    doc_index: HashMap<String, usize>,
}

impl<T: Scalar> Corpus<T> {
    /// Validate and assemble; every invariant is checked here.
    pub fn new(documents: Vec<Document<T>>, questions: Vec<Question<T>>) -> Result<Self, CorpusError> {
        let mut doc_index = HashMap::new();
        for (i, d) in documents.iter().enumerate() {
            validate_document(d)?;
            if doc_index.insert(d.doc_id.clone(), i).is_some() {
                return Err(CorpusError::Duplicate {
                    kind: "document",
                    id: d.doc_id.clone(),
                });
            }
        }
        let corpus = Self {
            documents,
            questions,
            doc_index,
        };
        let mut seen = HashSet::new();
        for q in &corpus.questions {
            if !seen.insert(q.q_id.as_str()) {
                return Err(CorpusError::Duplicate {
                    kind: "question",
                    id: q.q_id.clone(),
                });
            }
            corpus.validate_question(q)?;
        }
        Ok(corpus)
    }

    pub fn documents(&self) -> &[Document<T>] {
        &self.documents
    }

    pub fn questions(&self) -> &[Question<T>] {
        &self.questions
    }

    pub fn document(&self, doc_id: &str) -> Option<&Document<T>> {
        self.doc_index.get(doc_id).map(|&i| &self.documents[i])
    }

    pub fn question(&self, q_id: &str) -> Option<&Question<T>> {
        self.questions.iter().find(|q| q.q_id == q_id)
    }

    /// (documents, paragraphs, tables, questions)
    pub fn counts(&self) -> (usize, usize, usize, usize) {
        (
            self.documents.len(),
            self.documents.iter().map(|d| d.paragraphs.len()).sum(),
            self.documents.iter().map(|d| d.tables.len()).sum(),
            self.questions.len(),
        )
    }

    fn validate_question(&self, q: &Question<T>) -> Result<(), CorpusError> {
        if q.text.trim().is_empty() {
            return Err(CorpusError::invalid(&q.q_id, "text", "empty question"));
        }
        if q.gold_program.is_some() && q.gold_type != Some(QuestionType::Arithmetic) {
            return Err(CorpusError::invalid(
                &q.q_id,
                "gold_program",
                "present but gold_type is not arithmetic",
            ));
        }
        let doc = self
            .document(&q.doc_id)
            .ok_or_else(|| CorpusError::invalid(&q.q_id, "doc_id", format!("unknown document {}", q.doc_id)))?;
        let mut dangling = Vec::new();
        for p in &q.gold_text_evidence {
            if doc.paragraph(p).is_none() {
                dangling.push(p.clone());
            }
        }
        for cell in &q.gold_table_evidence {
            match doc.table(&cell.table_id) {
                Some(t) => {
                    if let Err(e) = t.check_data_ref(cell) {
                        match e {
                            TableError::HeaderCell(_) => {
                                return Err(CorpusError::invalid(
                                    &q.q_id,
                                    "gold_table_evidence",
                                    format!("{cell} lies inside a header band"),
                                ))
                            }
                            _ => dangling.push(cell.to_string()),
                        }
                    }
                }
                None => dangling.push(cell.to_string()),
            }
        }
        if !dangling.is_empty() {
            return Err(CorpusError::DanglingRef {
                q_id: q.q_id.clone(),
                refs: dangling,
            });
        }
        Ok(())
    }

    /// Canonical records, documents in corpus order with their questions.
    pub fn to_records(&self) -> Vec<DocumentRecord<T>> {
        let mut by_doc: BTreeMap<&str, Vec<Question<T>>> = BTreeMap::new();
        for q in &self.questions {
            by_doc.entry(q.doc_id.as_str()).or_default().push(q.clone());
        }
        self.documents
            .iter()
            .map(|d| DocumentRecord {
                doc_id: d.doc_id.clone(),
                paragraphs: d.paragraphs.clone(),
                tables: d.tables.iter().map(RawTable::from).collect(),
                questions: by_doc.remove(d.doc_id.as_str()).unwrap_or_default(),
            })
            .collect()
    }

    pub fn write_canonical(&self, path: &Path) -> Result<(), CorpusError> {
        Ok(jsonl::write_jsonl(path, &self.to_records())?)
    }

    pub fn from_records(records: Vec<DocumentRecord<T>>, source: HeaderSource) -> Result<Self, CorpusError> {
        let report = assemble(records, source);
        match report.rejected.into_iter().next() {
            Some(e) => Err(e),
            None => Ok(report.corpus),
        }
    }
}

fn validate_document<T: Scalar>(d: &Document<T>) -> Result<(), CorpusError> {
    if d.doc_id.trim().is_empty() {
        return Err(CorpusError::invalid("<unnamed>", "doc_id", "empty"));
    }
    let mut ids = HashSet::new();
    for p in &d.paragraphs {
        if p.text.trim().is_empty() {
            return Err(CorpusError::invalid(
                format!("{}/{}", d.doc_id, p.para_id),
                "text",
                "empty paragraph",
            ));
        }
        if !ids.insert(p.para_id.as_str()) {
            return Err(CorpusError::Duplicate {
                kind: "paragraph",
                id: format!("{}/{}", d.doc_id, p.para_id),
            });
        }
    }
    let mut tids = HashSet::new();
    for t in &d.tables {
        t.validate().map_err(|source| CorpusError::Table {
            record: d.doc_id.clone(),
            source,
        })?;
        if !tids.insert(t.table_id.as_str()) {
            return Err(CorpusError::Duplicate {
                kind: "table",
                id: format!("{}/{}", d.doc_id, t.table_id),
            });
        }
    }
    Ok(())
}

/// Result of lenient ingestion: everything that validated, plus one named
/// error per rejected record.
#[derive(Debug)]
pub struct IngestReport<T> {
    pub corpus: Corpus<T>,
    pub rejected: Vec<CorpusError>,
}

fn assemble<T: Scalar>(records: Vec<DocumentRecord<T>>, source: HeaderSource) -> IngestReport<T> {
    let mut rejected = Vec::new();
    let mut docs: Vec<Document<T>> = Vec::new();
    let mut questions: Vec<Question<T>> = Vec::new();
    let mut doc_ids = HashSet::new();
    let mut q_ids = HashSet::new();
    for rec in records {
        let doc_id = rec.doc_id.clone();
        let tables: Result<Vec<_>, _> = rec.tables.into_iter().map(|t| t.into_table(source)).collect();
        let doc = match tables {
            Ok(tables) => Document {
                doc_id: rec.doc_id,
                paragraphs: rec.paragraphs,
                tables,
            },
            Err(source) => {
                rejected.push(CorpusError::Table { record: doc_id, source });
                continue;
            }
        };
        if let Err(e) = validate_document(&doc) {
            rejected.push(e);
            continue;
        }
        if !doc_ids.insert(doc.doc_id.clone()) {
            rejected.push(CorpusError::Duplicate {
                kind: "document",
                id: doc.doc_id,
            });
            continue;
        }
        // validate questions against this single document
        let single = Corpus {
            doc_index: HashMap::from([(doc.doc_id.clone(), 0)]),
            documents: vec![doc],
            questions: Vec::new(),
        };
        for q in rec.questions {
            if q.doc_id != doc_id {
                rejected.push(CorpusError::invalid(
                    &q.q_id,
                    "doc_id",
                    format!("nested under document {doc_id}"),
                ));
                continue;
            }
            if let Err(e) = single.validate_question(&q) {
                rejected.push(e);
                continue;
            }
            if !q_ids.insert(q.q_id.clone()) {
                rejected.push(CorpusError::Duplicate {
                    kind: "question",
                    id: q.q_id,
                });
                continue;
            }
            questions.push(q);
        }
        docs.extend(single.documents);
    }
    let doc_index = docs.iter().enumerate().map(|(i, d)| (d.doc_id.clone(), i)).collect();
    IngestReport {
        corpus: Corpus {
            documents: docs,
            questions,
            doc_index,
        },
        rejected,
    }
}

/// Load a corpus, failing on the first invalid record.
pub fn ingest_corpus<T: Scalar>(
    path: &Path,
    format: CorpusFormat,
    source: HeaderSource,
) -> Result<Corpus<T>, CorpusError> {
    let report = ingest_corpus_lenient(path, format, source)?;
    match report.rejected.into_iter().next() {
        Some(e) => Err(e),
        None => Ok(report.corpus),
    }
}

/// Load a corpus, collecting a named error for each record that fails
/// validation instead of aborting.
pub fn ingest_corpus_lenient<T: Scalar>(
    path: &Path,
    format: CorpusFormat,
    source: HeaderSource,
) -> Result<IngestReport<T>, CorpusError> {
    let (records, mut rejected) = match format {
        CorpusFormat::Canonical => {
            let (records, bad) = jsonl::read_jsonl_lenient::<DocumentRecord<T>>(path)?;
            (records, bad.into_iter().map(CorpusError::Jsonl).collect())
        }
        CorpusFormat::Multihiertt => {
            let bytes = std::fs::read(path).map_err(|source| CorpusError::Io {
                path: path.to_path_buf(),
                source,
            })?;
            multihiertt::convert(&bytes).map_err(|source| CorpusError::Json {
                path: path.to_path_buf(),
                source,
            })?
        }
    };
    let mut report = assemble(records, source);
    // adapter-level rejects come first
    rejected.append(&mut report.rejected);
    report.rejected = rejected;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture_line() -> &'static str {
        r#"{"doc_id":"d1","paragraphs":[{"para_id":"p0","text":"Revenue grew."},{"para_id":"p1","text":"Costs fell."}],"tables":[{"table_id":"t0","grid":[["","2019","2018"],["Revenue","$5,829","5,735"]],"header_row_band":[0,0],"header_col_band":[0,0]}],"questions":[{"q_id":"q1","doc_id":"d1","text":"What is the change in revenue?","gold_type":"arithmetic","gold_answer":{"kind":"number","number":94},"gold_program":"subtract(5829, 5735)","gold_text_evidence":["p0"],"gold_table_evidence":[{"table_id":"t0","row":1,"col":1},{"table_id":"t0","row":1,"col":2}]}]}"#
    }

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn canonical_fixture_counts() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "c.jsonl", fixture_line());
        let c: Corpus<f64> = ingest_corpus(&p, CorpusFormat::Canonical, HeaderSource::Markup).unwrap();
        assert_eq!(c.counts(), (1, 2, 1, 1));
        let t = &c.documents()[0].tables[0];
        assert_eq!(t.grid[1][1].value, Some(5829.0));
    }

    #[test]
    fn program_on_span_question_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let line = fixture_line().replace("\"gold_type\":\"arithmetic\"", "\"gold_type\":\"span_selection\"");
        let p = write(dir.path(), "c.jsonl", &line);
        let err = ingest_corpus::<f64>(&p, CorpusFormat::Canonical, HeaderSource::Markup).unwrap_err();
        match err {
            CorpusError::Invalid { record, field, .. } => {
                assert_eq!(record, "q1");
                assert_eq!(field, "gold_program");
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn dangling_ref_listed() {
        let dir = tempfile::tempdir().unwrap();
        let line = fixture_line()
            .replace("[\"p0\"]", "[\"p9\"]")
            .replace("\"row\":1,\"col\":2", "\"row\":7,\"col\":2");
        let p = write(dir.path(), "c.jsonl", &line);
        let err = ingest_corpus::<f64>(&p, CorpusFormat::Canonical, HeaderSource::Markup).unwrap_err();
        match err {
            CorpusError::DanglingRef { q_id, refs } => {
                assert_eq!(q_id, "q1");
                assert_eq!(refs, vec!["p9".to_string(), "t0[7,2]".to_string()]);
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn missing_gold_type_is_allowed() {
        let dir = tempfile::tempdir().unwrap();
        let line = fixture_line()
            .replace("\"gold_type\":\"arithmetic\",", "")
            .replace(",\"gold_program\":\"subtract(5829, 5735)\"", "");
        let p = write(dir.path(), "c.jsonl", &line);
        let c = ingest_corpus::<f64>(&p, CorpusFormat::Canonical, HeaderSource::Markup).unwrap();
        assert_eq!(c.questions()[0].gold_type, None);
    }

    #[test]
    fn lenient_ingest_names_each_reject() {
        let dir = tempfile::tempdir().unwrap();
        let good = fixture_line();
        let bad = fixture_line()
            .replace("\"d1\"", "\"d2\"")
            .replace("\"q1\"", "\"q2\"")
            .replace("Revenue grew.", "  ");
        let p = write(dir.path(), "c.jsonl", &format!("{good}\n{bad}\n"));
        let r = ingest_corpus_lenient::<f64>(&p, CorpusFormat::Canonical, HeaderSource::Markup).unwrap();
        assert_eq!(r.corpus.counts().3, 1);
        assert_eq!(r.rejected.len(), 1);
        assert!(r.rejected[0].to_string().contains("d2/p0"));
    }

    #[test]
    fn round_trip_is_stable() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "c.jsonl", fixture_line());
        let a: Corpus<f64> = ingest_corpus(&p, CorpusFormat::Canonical, HeaderSource::Markup).unwrap();
        let out = dir.path().join("out.jsonl");
        a.write_canonical(&out).unwrap();
        let b: Corpus<f64> = ingest_corpus(&out, CorpusFormat::Canonical, HeaderSource::Markup).unwrap();
        assert_eq!(a, b);
        let out2 = dir.path().join("out2.jsonl");
        b.write_canonical(&out2).unwrap();
        assert_eq!(std::fs::read(&out).unwrap(), std::fs::read(&out2).unwrap());
    }

    #[test]
    fn answer_value_wire_form() {
        let a: AnswerValue<f64> = serde_json::from_str(r#"{"kind":"text","text":"2019"}"#).unwrap();
        assert_eq!(a, AnswerValue::text("2019"));
        assert_eq!(
            serde_json::to_string(&AnswerValue::number(0.25f64)).unwrap(),
            r#"{"kind":"number","number":0.25}"#
        );
    }
}
