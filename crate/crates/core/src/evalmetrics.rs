//! Exact match, token F1 and report tables.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::QuestionType;
use crate::programdsl::{normalize_text, NormalizedAnswer};
use crate::promptkit::Strategy;
use crate::retrieval::{RecallTally, ScorerKind};
use crate::scalar::Scalar;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("no scored predictions to report")]
    Empty,
    #[error("duplicate prediction for {0}")]
    DuplicateQuestion(String),
}

/// Numeric tolerance for a gold value written with `decimals` places.
pub fn tolerance(decimals: u32) -> f64 {
    (5.0 * 10f64.powi(-(decimals as i32 + 1))).max(1e-4)
}

fn numbers_match<T: Scalar>(p: &crate::programdsl::NumberAnswer<T>, g: &crate::programdsl::NumberAnswer<T>) -> bool {
    let (pv, gv) = (p.value.to_f64_lossy(), g.value.to_f64_lossy());
    let tol = tolerance(g.decimals);
    let mut candidates = vec![pv];
    if p.percent && !g.percent {
        candidates.push(pv / 100.0);
    }
    if g.percent && !p.percent {
        candidates.push(pv * 100.0);
    }
    candidates.into_iter().any(|c| (c - gv).abs() <= tol)
}

/// 1 when the prediction matches gold, else 0; unanswered scores 0.
pub fn score_em<T: Scalar>(pred: Option<&NormalizedAnswer<T>>, gold: &NormalizedAnswer<T>) -> f64 {
    use NormalizedAnswer as A;
    let hit = match (pred, gold) {
        (None, _) => false,
        (Some(A::Number(p)), A::Number(g)) => numbers_match(p, g),
        (Some(A::Boolean(p)), A::Boolean(g)) => p == g,
        (Some(A::Text(p)), A::Text(g)) => normalize_text(p) == normalize_text(g),
        _ => false,
    };
    if hit {
        1.0
    } else {
        0.0
    }
}

/// Multiset token F1 of two normalized strings.
pub fn token_f1(pred: &str, gold: &str) -> f64 {
    let pt: Vec<String> = normalize_text(pred).split_whitespace().map(String::from).collect();
    let gt: Vec<String> = normalize_text(gold).split_whitespace().map(String::from).collect();
    if pt.is_empty() || gt.is_empty() {
        return if pt.is_empty() && gt.is_empty() { 1.0 } else { 0.0 };
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in &gt {
        *counts.entry(t).or_default() += 1;
    }
    let mut common = 0usize;
    for t in &pt {
        if let Some(c) = counts.get_mut(t.as_str()) {
            if *c > 0 {
                *c -= 1;
                common += 1;
            }
        }
    }
    if common == 0 {
        return 0.0;
    }
    let precision = common as f64 / pt.len() as f64;
    let recall = common as f64 / gt.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Token F1 for text answers; numbers and booleans score their EM.
pub fn score_f1<T: Scalar>(pred: Option<&NormalizedAnswer<T>>, gold: &NormalizedAnswer<T>) -> f64 {
    match (pred, gold) {
        (None, _) => 0.0,
        (Some(NormalizedAnswer::Text(p)), NormalizedAnswer::Text(g)) => token_f1(p, g),
        (Some(p), g) => score_em(Some(p), g),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TableMode {
    /// Arithmetic questions see reconstructed sub-tables.
    #[default]
    Reconstructed,
    /// Every question sees table descriptions only.
    Descriptions,
}

impl TableMode {
    pub fn as_str(self) -> &'static str {
        match self {
            TableMode::Reconstructed => "reconstructed",
            TableMode::Descriptions => "descriptions",
        }
    }
}

impl FromStr for TableMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "reconstructed" => Ok(TableMode::Reconstructed),
            "descriptions" => Ok(TableMode::Descriptions),
            _ => Err(format!(
                "unknown table mode `{s}` (expected reconstructed or descriptions)"
            )),
        }
    }
}

/// Retrieval hits of one question, per candidate kind.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrievalTallies {
    pub text: RecallTally,
    pub table: RecallTally,
}

/// One line of the predictions artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord<T> {
    pub q_id: String,
    pub qtype: QuestionType,
    /// `None` when nothing could be extracted.
    pub predicted: Option<NormalizedAnswer<T>>,
    /// `None` for unlabeled questions, which are not scored.
    pub gold: Option<NormalizedAnswer<T>>,
    pub prompt_hash: String,
    pub shots: usize,
    pub strategy: Strategy,
    #[serde(default)]
    pub table_mode: TableMode,
    #[serde(default)]
    pub scorer: ScorerKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub retrieval: Option<RetrievalTallies>,
}

impl<T: Scalar> PredictionRecord<T> {
    pub fn em(&self) -> Option<f64> {
        self.gold.as_ref().map(|g| score_em(self.predicted.as_ref(), g))
    }

    pub fn f1(&self) -> Option<f64> {
        self.gold.as_ref().map(|g| score_f1(self.predicted.as_ref(), g))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    #[default]
    Main,
    Ablation,
    Shots,
    Recall,
}

impl FromStr for Layout {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "main" => Ok(Layout::Main),
            "ablation" => Ok(Layout::Ablation),
            "shots" => Ok(Layout::Shots),
            "recall" => Ok(Layout::Recall),
            _ => Err(format!(
                "unknown layout `{s}` (expected main, ablation, shots or recall)"
            )),
        }
    }
}

/// EM/F1 aggregate over a group of records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Slice {
    pub label: String,
    pub n: usize,
    pub em: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl fmt::Display for ReportTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let ncols = self.header.len();
        let mut widths: Vec<usize> = self.header.iter().map(|h| h.chars().count()).collect();
        for row in &self.rows {
            for (w, c) in widths.iter_mut().zip(row) {
                *w = (*w).max(c.chars().count());
            }
        }
        let line = |cells: &[String]| -> String {
            (0..ncols)
                .map(|i| {
                    let c = cells.get(i).map_or("", String::as_str);
                    if i == 0 {
                        format!("{c:<w$}", w = widths[i])
                    } else {
                        format!("{c:>w$}", w = widths[i])
                    }
                })
                .collect::<Vec<_>>()
                .join("  ")
                .trim_end()
                .to_string()
        };
        writeln!(f, "{}", line(&self.header))?;
        let total: usize = widths.iter().sum::<usize>() + 2 * ncols.saturating_sub(1);
        writeln!(f, "{}", "-".repeat(total))?;
        for row in &self.rows {
            writeln!(f, "{}", line(row))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub layout: Layout,
    pub em: f64,
    pub f1: f64,
    pub n_questions: usize,
    pub n_unanswered: usize,
    pub by_qtype: Vec<Slice>,
    pub by_shots: Vec<Slice>,
    pub by_strategy: Vec<Slice>,
    pub table: ReportTable,
}

struct Scored<'a, T> {
    rec: &'a PredictionRecord<T>,
    em: f64,
    f1: f64,
}

fn aggregate<T>(label: String, items: &[&Scored<'_, T>]) -> Slice {
    // items arrive in canonical order, so the float sums are reproducible
    let n = items.len();
    let (em, f1) = items.iter().fold((0.0, 0.0), |(e, f), s| (e + s.em, f + s.f1));
    Slice {
        label,
        n,
        em: if n == 0 { 0.0 } else { em / n as f64 },
        f1: if n == 0 { 0.0 } else { f1 / n as f64 },
    }
}

fn group<'a, 'b, T, K: Ord>(
    scored: &'b [Scored<'a, T>],
    key: impl Fn(&PredictionRecord<T>) -> K,
) -> BTreeMap<K, Vec<&'b Scored<'a, T>>> {
    let mut out: BTreeMap<K, Vec<&Scored<'a, T>>> = BTreeMap::new();
    for s in scored {
        out.entry(key(s.rec)).or_default().push(s);
    }
    out
}

fn pct(x: f64) -> String {
    format!("{:.2}", 100.0 * x)
}

fn strategy_label(s: Strategy) -> &'static str {
    match s {
        Strategy::Hrot => "HRoT",
        Strategy::Cot => "CoT",
    }
}

/// Aggregate scored records into the requested layout.
///
/// Records without gold are skipped. The result does not depend on record
/// order.
pub fn build_report<T: Scalar>(records: &[PredictionRecord<T>], layout: Layout) -> Result<MetricsReport, MetricsError> {
    let mut seen = BTreeSet::new();
    for r in records {
        if !seen.insert((r.q_id.as_str(), r.strategy, r.shots, r.table_mode, r.scorer)) {
            return Err(MetricsError::DuplicateQuestion(r.q_id.clone()));
        }
    }
    let mut scored: Vec<Scored<'_, T>> = records
        .par_iter()
        .filter_map(|rec| {
            Some(Scored {
                em: rec.em()?,
                f1: rec.f1()?,
                rec,
            })
        })
        .collect();
    if scored.is_empty() {
        return Err(MetricsError::Empty);
    }
    scored.sort_by(|a, b| {
        (&a.rec.q_id, a.rec.strategy, a.rec.shots, a.rec.table_mode, a.rec.scorer).cmp(&(
            &b.rec.q_id,
            b.rec.strategy,
            b.rec.shots,
            b.rec.table_mode,
            b.rec.scorer,
        ))
    });
    let all: Vec<&Scored<'_, T>> = scored.iter().collect();
    let overall = aggregate("all".into(), &all);
    let by_qtype: Vec<Slice> = group(&scored, |r| r.qtype)
        .into_iter()
        .map(|(k, v)| aggregate(k.as_str().into(), &v))
        .collect();
    let by_shots: Vec<Slice> = group(&scored, |r| r.shots)
        .into_iter()
        .map(|(k, v)| aggregate(format!("{k}-shot"), &v))
        .collect();
    let by_strategy: Vec<Slice> = group(&scored, |r| r.strategy)
        .into_iter()
        .map(|(k, v)| aggregate(k.as_str().into(), &v))
        .collect();

    let table = match layout {
        Layout::Main => {
            let mut rows = vec![vec![
                "all".into(),
                overall.n.to_string(),
                pct(overall.em),
                pct(overall.f1),
            ]];
            rows.extend(
                by_qtype
                    .iter()
                    .map(|s| vec![s.label.clone(), s.n.to_string(), pct(s.em), pct(s.f1)]),
            );
            ReportTable {
                header: vec!["".into(), "N".into(), "EM".into(), "F1".into()],
                rows,
            }
        }
        Layout::Ablation => {
            let rows = group(&scored, |r| (r.strategy, r.shots, r.table_mode, r.scorer))
                .into_iter()
                .map(|((st, shots, tm, sc), v)| {
                    let s = aggregate(String::new(), &v);
                    vec![
                        format!("{}-{shots}shot tables={} scorer={sc}", strategy_label(st), tm.as_str()),
                        s.n.to_string(),
                        pct(s.em),
                        pct(s.f1),
                    ]
                })
                .collect();
            ReportTable {
                header: vec!["".into(), "N".into(), "EM".into(), "F1".into()],
                rows,
            }
        }
        Layout::Shots => {
            let cells = group(&scored, |r| (r.shots, r.strategy));
            let max_shots = scored.iter().map(|s| s.rec.shots).max().unwrap_or(0).max(4);
            let rows = (0..=max_shots)
                .map(|k| {
                    let mut row = vec![format!("{k}-shot")];
                    for st in [Strategy::Hrot, Strategy::Cot] {
                        match cells.get(&(k, st)) {
                            Some(v) => {
                                let s = aggregate(String::new(), v);
                                row.push(pct(s.em));
                                row.push(pct(s.f1));
                            }
                            None => row.extend(["-".to_string(), "-".to_string()]),
                        }
                    }
                    row
                })
                .collect();
            ReportTable {
                header: ["", "HRoT EM", "HRoT F1", "CoT EM", "CoT F1"]
                    .map(String::from)
                    .to_vec(),
                rows,
            }
        }
        Layout::Recall => {
            let rows = group(&scored, |r| r.scorer)
                .into_iter()
                .map(|(sc, v)| {
                    let (text, table) = v
                        .iter()
                        .filter_map(|s| s.rec.retrieval)
                        .fold((RecallTally::default(), RecallTally::default()), |(a, b), t| {
                            (a.merge(t.text), b.merge(t.table))
                        });
                    let cell = |t: RecallTally| t.recall().map_or_else(|| "-".to_string(), pct);
                    vec![sc.as_str().to_string(), v.len().to_string(), cell(text), cell(table)]
                })
                .collect();
            ReportTable {
                header: ["", "N", "Text Recall", "Table Recall"].map(String::from).to_vec(),
                rows,
            }
        }
    };

    Ok(MetricsReport {
        layout,
        em: overall.em,
        f1: overall.f1,
        n_questions: overall.n,
        n_unanswered: scored.iter().filter(|s| s.rec.predicted.is_none()).count(),
        by_qtype,
        by_shots,
        by_strategy,
        table,
    })
}

/// Per-question scores produced by an external evaluator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalScore {
    pub q_id: String,
    pub em: f64,
    pub f1: f64,
}

/// Where this module and an external evaluator disagree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreDiff {
    pub compared: usize,
    pub missing: Vec<String>,
    pub em_mismatches: Vec<String>,
    pub f1_mismatches: Vec<String>,
    pub max_f1_delta: f64,
}

impl ScoreDiff {
    pub fn is_clean(&self) -> bool {
        self.em_mismatches.is_empty() && self.f1_mismatches.is_empty() && self.missing.is_empty()
    }
}

/// Compare per-question scores; F1 differences above `f1_tol` count.
pub fn diff_scores<T: Scalar>(records: &[PredictionRecord<T>], external: &[ExternalScore], f1_tol: f64) -> ScoreDiff {
    let ext: BTreeMap<&str, &ExternalScore> = external.iter().map(|e| (e.q_id.as_str(), e)).collect();
    let mut diff = ScoreDiff {
        compared: 0,
        missing: Vec::new(),
        em_mismatches: Vec::new(),
        f1_mismatches: Vec::new(),
        max_f1_delta: 0.0,
    };
    let mut recs: Vec<&PredictionRecord<T>> = records.iter().filter(|r| r.gold.is_some()).collect();
    recs.sort_by(|a, b| a.q_id.cmp(&b.q_id));
    for r in recs {
        let Some(e) = ext.get(r.q_id.as_str()) else {
            diff.missing.push(r.q_id.clone());
            continue;
        };
        diff.compared += 1;
        let (em, f1) = (r.em().unwrap_or(0.0), r.f1().unwrap_or(0.0));
        if em != e.em {
            diff.em_mismatches.push(r.q_id.clone());
        }
        let d = (f1 - e.f1).abs();
        diff.max_f1_delta = diff.max_f1_delta.max(d);
        if d > f1_tol {
            diff.f1_mismatches.push(r.q_id.clone());
        }
    }
    diff
}

#[cfg(test)]
mod tests {
    use super::*;

    type A = NormalizedAnswer<f64>;

    fn num(v: f64) -> A {
        A::number(v)
    }

    fn rec(q: &str, pred: Option<A>, gold: A, shots: usize, strategy: Strategy) -> PredictionRecord<f64> {
        PredictionRecord {
            q_id: q.into(),
            qtype: QuestionType::Arithmetic,
            predicted: pred,
            gold: Some(gold),
            prompt_hash: String::new(),
            shots,
            strategy,
            table_mode: TableMode::Reconstructed,
            scorer: ScorerKind::Oracle,
            retrieval: None,
        }
    }

    #[test]
    fn em_cases() {
        assert_eq!(score_em(Some(&num(0.25)), &num(0.25)), 1.0);
        assert_eq!(score_em(Some(&num(94.0)), &A::from_text("94")), 1.0);
        assert_eq!(score_em(Some(&num(0.2499)), &num(0.25)), 1.0);
        assert_eq!(score_em(Some(&num(0.24)), &num(0.25)), 0.0);
        assert_eq!(score_em(None, &num(0.25)), 0.0);
    }

    #[test]
    fn tolerance_rule() {
        assert_eq!(tolerance(2), 5e-3);
        assert_eq!(tolerance(0), 0.5);
        assert_eq!(tolerance(6), 1e-4);
    }

    #[test]
    fn percent_scale_matching() {
        let p = A::from_text("14.1%");
        assert_eq!(score_em(Some(&p), &num(0.141)), 1.0);
        assert_eq!(score_em(Some(&num(14.1)), &A::from_text("14.1%")), 1.0);
        assert_eq!(score_em(Some(&num(0.141)), &A::from_text("14.1%")), 1.0);
        assert_eq!(score_em(Some(&num(1.41)), &A::from_text("14.1%")), 0.0);
    }

    #[test]
    fn f1_cases() {
        let t = |s: &str| A::Text(s.into());
        assert!((score_f1(Some(&t("net income")), &t("the net income")) - 0.8).abs() < 1e-12);
        assert_eq!(score_f1(Some(&t("net income")), &t("net income")), 1.0);
        assert_eq!(score_f1(Some(&t("revenue")), &t("net income")), 0.0);
        assert_eq!(score_f1(Some(&num(3.0)), &num(3.1)), 0.0);
    }

    #[test]
    fn report_main() {
        let r = [
            rec("a", Some(num(1.0)), num(1.0), 4, Strategy::Hrot),
            rec("b", Some(num(2.0)), num(2.0), 4, Strategy::Hrot),
        ];
        let rep = build_report(&r, Layout::Main).unwrap();
        assert_eq!((rep.em, rep.f1, rep.n_questions), (1.0, 1.0, 2));
    }

    #[test]
    fn report_shots_shape() {
        let r = [
            rec("a", Some(num(1.0)), num(1.0), 0, Strategy::Hrot),
            rec("a", None, num(1.0), 0, Strategy::Cot),
            rec("a", Some(num(1.0)), num(1.0), 2, Strategy::Cot),
        ];
        let rep = build_report(&r, Layout::Shots).unwrap();
        assert_eq!(rep.table.rows.len(), 5);
        assert_eq!(rep.table.rows[0], ["0-shot", "100.00", "100.00", "0.00", "0.00"]);
        assert_eq!(rep.table.rows[1], ["1-shot", "-", "-", "-", "-"]);
        assert_eq!(rep.table.rows[2][3], "100.00");
        let text = rep.table.to_string();
        assert!(text.starts_with("        HRoT EM"));
    }

    #[test]
    fn report_rejects_empty_and_duplicates() {
        assert_eq!(build_report::<f64>(&[], Layout::Main), Err(MetricsError::Empty));
        let r = [
            rec("a", None, num(1.0), 0, Strategy::Hrot),
            rec("a", None, num(1.0), 0, Strategy::Hrot),
        ];
        assert!(matches!(
            build_report(&r, Layout::Main),
            Err(MetricsError::DuplicateQuestion(_))
        ));
    }

    #[test]
    fn diff_flags_disagreement() {
        let r = [
            rec("a", Some(num(1.0)), num(1.0), 0, Strategy::Hrot),
            rec("b", Some(num(1.0)), num(2.0), 0, Strategy::Hrot),
            rec("c", None, num(2.0), 0, Strategy::Hrot),
        ];
        let ext = [
            ExternalScore {
                q_id: "a".into(),
                em: 1.0,
                f1: 1.0,
            },
            ExternalScore {
                q_id: "b".into(),
                em: 1.0,
                f1: 1.0,
            },
        ];
        let d = diff_scores(&r, &ext, 1e-6);
        assert_eq!(d.compared, 2);
        assert_eq!(d.em_mismatches, ["b"]);
        assert_eq!(d.missing, ["c"]);
        assert!(!d.is_clean());
    }
}
