//! Adapter from the MultiHiertt release files to canonical records.
//!
//! Each release entry becomes one document and one question, both keyed by
//! the entry `uid`. Id mapping:
//!
//! - paragraph `i` of `paragraphs` → `para_id` `"p{i}"` (blank paragraphs are
//!   skipped; their index is not reused)
//! - table `i` of `tables` → `table_id` `"t{i}"`
//! - `qa.text_evidence` integer `i` → `"p{i}"`
//! - `qa.table_evidence` string `"i-r-c"` → `CellRef { table_id: "t{i}", row: r, col: c }`,
//!   with `r`/`c` indexing the expanded grid (row-major, `colspan` cells
//!   repeated across the columns they cover)
//!
//! Tables may be given either as lists of row-string-lists or as HTML
//! strings. For HTML, leading rows made only of `<th>` cells form the header
//! band; otherwise the band is inferred from content. Either way the band is
//! capped to end above the first evidence row of that table.

use std::sync::OnceLock;

use regex::Regex;
use serde::Deserialize;
use serde_json::Value;

use crate::corpus::{
    AnswerValue, CellRef, CorpusError, DocumentRecord, Paragraph, Question, QuestionType, RawCell, RawTable,
};
use crate::scalar::Scalar;
use crate::tabletree::{infer_header_row_band, Band, Cell};

#[derive(Debug, Deserialize)]
struct Entry {
    uid: String,
    #[serde(default)]
    paragraphs: Vec<String>,
    #[serde(default)]
    tables: Vec<Value>,
    qa: Qa,
}

#[derive(Debug, Deserialize)]
struct Qa {
    question: String,
    #[serde(default)]
    answer: Value,
    #[serde(default)]
    program: Option<String>,
    #[serde(default)]
    text_evidence: Vec<Value>,
    #[serde(default)]
    table_evidence: Vec<Value>,
    #[serde(default)]
    question_type: Option<String>,
}

/// Parse a release file (a JSON array, or one entry per line).
pub fn convert<T: Scalar>(bytes: &[u8]) -> Result<(Vec<DocumentRecord<T>>, Vec<CorpusError>), serde_json::Error> {
    let entries: Vec<Value> = match serde_json::from_slice::<Value>(bytes) {
        Ok(Value::Array(items)) => items,
        Ok(single @ Value::Object(_)) => vec![single],
        Ok(_) | Err(_) => {
            let text = String::from_utf8_lossy(bytes);
            text.lines()
                .filter(|l| !l.trim().is_empty())
                .map(serde_json::from_str)
                .collect::<Result<_, _>>()?
        }
    };
    let mut records = Vec::new();
    let mut errors = Vec::new();
    for (i, raw) in entries.into_iter().enumerate() {
        let id = raw
            .get("uid")
            .and_then(Value::as_str)
            .map(str::to_string)
            .unwrap_or_else(|| format!("#{i}"));
        let entry: Entry = match serde_json::from_value(raw) {
            Ok(e) => e,
            Err(e) => {
                errors.push(CorpusError::invalid(id, "entry", e.to_string()));
                continue;
            }
        };
        match convert_entry(entry) {
            Ok(rec) => records.push(rec),
            Err(e) => errors.push(e),
        }
    }
    Ok((records, errors))
}

fn convert_entry<T: Scalar>(e: Entry) -> Result<DocumentRecord<T>, CorpusError> {
    let uid = e.uid;
    let paragraphs = e
        .paragraphs
        .iter()
        .enumerate()
        .filter(|(_, t)| !t.trim().is_empty())
        .map(|(i, t)| Paragraph {
            para_id: format!("p{i}"),
            text: t.trim().to_string(),
        })
        .collect();

    let text_evidence =
        e.qa.text_evidence
            .iter()
            .map(|v| match v {
                Value::Number(n) if n.is_u64() => Ok(format!("p{}", n)),
                Value::String(s) if s.parse::<usize>().is_ok() => Ok(format!("p{s}")),
                other => Err(CorpusError::invalid(
                    &uid,
                    "text_evidence",
                    format!("expected paragraph index, found {other}"),
                )),
            })
            .collect::<Result<Vec<_>, _>>()?;

    let table_evidence =
        e.qa.table_evidence
            .iter()
            .map(|v| {
                v.as_str().and_then(parse_evidence_id).ok_or_else(|| {
                    CorpusError::invalid(&uid, "table_evidence", format!("expected \"table-row-col\", found {v}"))
                })
            })
            .collect::<Result<Vec<_>, _>>()?;

    let mut tables = Vec::with_capacity(e.tables.len());
    for (i, t) in e.tables.iter().enumerate() {
        let table_id = format!("t{i}");
        let (rows, th_rows) = match t {
            Value::String(html) => parse_html_table(html),
            Value::Array(rows) => (
                list_rows(rows).ok_or_else(|| {
                    CorpusError::invalid(&uid, format!("tables[{i}]"), "expected list of string rows")
                })?,
                0,
            ),
            other => {
                return Err(CorpusError::invalid(
                    &uid,
                    format!("tables[{i}]"),
                    format!("unsupported table encoding {}", kind_name(other)),
                ))
            }
        };
        let width = rows.iter().map(Vec::len).max().unwrap_or(0);
        let grid: Vec<Vec<Cell<T>>> = rows
            .into_iter()
            .enumerate()
            .map(|(r, mut row)| {
                row.resize(width, String::new());
                row.into_iter()
                    .enumerate()
                    .map(|(c, raw)| Cell::parse(r, c, raw))
                    .collect()
            })
            .collect();
        let mut band = if th_rows > 0 && th_rows < grid.len() {
            Band::new(0, th_rows - 1)
        } else {
            infer_header_row_band(&grid)
        };
        if let Some(first) = table_evidence
            .iter()
            .filter(|c: &&CellRef| c.table_id == table_id)
            .map(|c| c.row)
            .min()
        {
            if first > 0 && band.end >= first {
                band.end = first - 1;
            }
        }
        tables.push(RawTable {
            table_id,
            grid: grid
                .into_iter()
                .map(|row| row.into_iter().map(RawCell::Full).collect())
                .collect(),
            header_row_band: Some(band),
            header_col_band: Some(Band::new(0, 0)),
        });
    }

    let gold_type = match e.qa.question_type.as_deref().map(str::trim) {
        None | Some("") => None,
        Some(s) => Some(
            s.parse::<QuestionType>()
                .map_err(|r| CorpusError::invalid(&uid, "question_type", r))?,
        ),
    };
    let gold_answer = match &e.qa.answer {
        Value::Number(n) => n.as_f64().map(|v| AnswerValue::number(T::from_f64_lossy(v))),
        Value::String(s) if s.trim().is_empty() => None,
        Value::String(s) => Some(AnswerValue::text(s.trim())),
        Value::Null => None,
        other => {
            return Err(CorpusError::invalid(
                &uid,
                "answer",
                format!("unsupported answer {other}"),
            ))
        }
    };
    let gold_program =
        e.qa.program
            .map(|p| p.trim().to_string())
            .filter(|p| !p.is_empty())
            .filter(|_| gold_type != Some(QuestionType::SpanSelection));
    // a program implies an arithmetic question even when the label is missing
    let gold_type = gold_type.or(gold_program.as_ref().map(|_| QuestionType::Arithmetic));

    Ok(DocumentRecord {
        doc_id: uid.clone(),
        paragraphs,
        tables,
        questions: vec![Question {
            q_id: uid.clone(),
            doc_id: uid,
            text: e.qa.question.trim().to_string(),
            gold_type,
            gold_answer,
            gold_program,
            gold_text_evidence: text_evidence,
            gold_table_evidence: table_evidence,
        }],
    })
}

fn kind_name(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "bool",
        Value::Number(_) => "number",
        Value::String(_) => "string",
        Value::Array(_) => "array",
        Value::Object(_) => "object",
    }
}

/// `"i-r-c"` → `CellRef("t{i}", r, c)`.
pub fn parse_evidence_id(s: &str) -> Option<CellRef> {
    let mut it = s.trim().split('-').map(|p| p.parse::<usize>().ok());
    let (t, r, c) = (it.next()??, it.next()??, it.next()??);
    if it.next().is_some() {
        return None;
    }
    Some(CellRef::new(format!("t{t}"), r, c))
}

fn list_rows(rows: &[Value]) -> Option<Vec<Vec<String>>> {
    rows.iter()
        .map(|row| {
            row.as_array()?
                .iter()
                .map(|c| match c {
                    Value::String(s) => Some(s.clone()),
                    Value::Number(n) => Some(n.to_string()),
                    Value::Null => Some(String::new()),
                    _ => None,
                })
                .collect()
        })
        .collect()
}

fn html_regexes() -> &'static (Regex, Regex, Regex, Regex) {
    static RE: OnceLock<(Regex, Regex, Regex, Regex)> = OnceLock::new();
    RE.get_or_init(|| {
        (
            Regex::new(r"(?is)<tr[^>]*>(.*?)</tr>").unwrap(),
            Regex::new(r"(?is)<t([dh])([^>]*)>(.*?)</t[dh]>").unwrap(),
            Regex::new(r#"(?i)colspan\s*=\s*["']?(\d+)"#).unwrap(),
            Regex::new(r"(?s)<[^>]*>").unwrap(),
        )
    })
}

/// Rows of cell strings plus the number of leading all-`<th>` rows.
pub fn parse_html_table(html: &str) -> (Vec<Vec<String>>, usize) {
    let (tr, td, colspan, tag) = html_regexes();
    let mut rows = Vec::new();
    let mut th_rows = 0;
    let mut counting = true;
    for row in tr.captures_iter(html) {
        let mut cells = Vec::new();
        let mut all_th = true;
        for cell in td.captures_iter(&row[1]) {
            all_th &= cell[1].eq_ignore_ascii_case("h");
            let span = colspan
                .captures(&cell[2])
                .and_then(|c| c[1].parse::<usize>().ok())
                .unwrap_or(1)
                .max(1);
            let text = decode_entities(tag.replace_all(&cell[3], " ").as_ref());
            let text = text.split_whitespace().collect::<Vec<_>>().join(" ");
            for _ in 0..span {
                cells.push(text.clone());
            }
        }
        if cells.is_empty() {
            continue;
        }
        if counting && all_th {
            th_rows += 1;
        } else {
            counting = false;
        }
        rows.push(cells);
    }
    (rows, th_rows)
}

fn decode_entities(s: &str) -> String {
    s.replace("&nbsp;", " ")
        .replace("&#160;", " ")
        .replace("&lt;", "<")
        .replace("&gt;", ">")
        .replace("&quot;", "\"")
        .replace("&#39;", "'")
        .replace("&amp;", "&")
}
