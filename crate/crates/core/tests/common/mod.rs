//! Random instance generators and brute-force oracles shared by the
//! property tests and the acceptance suite.

#![allow(dead_code)]

use std::collections::BTreeSet;
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use hrot::corpus::CellRef;
use hrot::tabletree::{Band, HierTable};

pub fn fixtures_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---------------------------------------------------------------------------
// tables

/// A random hierarchical table: 2..=40 rows, 2..=10 columns, up to five
/// sub-header rows, with a random set of evidence cells in its body.
pub struct TableCase {
    pub table: HierTable<f64>,
    pub evidence: Vec<CellRef>,
    pub planted_sub_headers: BTreeSet<usize>,
}

fn number_text(rng: &mut ChaCha8Rng) -> String {
    let v: i64 = rng.random_range(-99_999..=99_999);
    match rng.random_range(0..5) {
        0 => format!("{}", v),
        1 => format!("{:.1}", v as f64 / 10.0),
        2 if v < 0 => format!("({})", -v),
        3 => format!("${}", v.abs()),
        _ => {
            let a = v.abs();
            if a >= 1000 {
                format!("{},{:03}", a / 1000, a % 1000)
            } else {
                a.to_string()
            }
        }
    }
}

pub fn random_table(rng: &mut ChaCha8Rng, table_id: &str) -> TableCase {
    let n_rows = rng.random_range(2..=40usize);
    let n_cols = rng.random_range(2..=10usize);
    let header_rows = rng.random_range(1..=(n_rows - 1).min(3));
    let label_cols = if n_cols > 2 && rng.random_bool(0.3) { 2 } else { 1 };
    let body: Vec<usize> = (header_rows..n_rows).collect();
    let n_sub = rng.random_range(0..=body.len().min(5));
    let mut planted = BTreeSet::new();
    while planted.len() < n_sub {
        planted.insert(body[rng.random_range(0..body.len())]);
    }

    let mut rows: Vec<Vec<String>> = Vec::with_capacity(n_rows);
    for r in 0..n_rows {
        let row: Vec<String> = if r < header_rows {
            (0..n_cols)
                .map(|c| {
                    if c < label_cols || (r + 1 < header_rows && rng.random_bool(0.4)) {
                        String::new()
                    } else {
                        format!("H{r}.{c}")
                    }
                })
                .collect()
        } else if planted.contains(&r) {
            (0..n_cols)
                .map(|c| if c == 0 { format!("Group {r}") } else { String::new() })
                .collect()
        } else {
            (0..n_cols)
                .map(|c| {
                    if c == 0 {
                        format!("Item {r}")
                    } else if c < label_cols {
                        if rng.random_bool(0.5) {
                            format!("Sub {r}")
                        } else {
                            String::new()
                        }
                    } else if rng.random_bool(0.15) {
                        String::new()
                    } else {
                        number_text(rng)
                    }
                })
                .collect()
        };
        rows.push(row);
    }
    let table = HierTable::from_rows(
        table_id,
        &rows,
        Band::new(0, header_rows - 1),
        Band::new(0, label_cols - 1),
    )
    .expect("generated table is valid");

    let n_ev = rng.random_range(0..=6usize);
    let evidence = (0..n_ev)
        .map(|_| {
            CellRef::new(
                table_id,
                rng.random_range(header_rows..n_rows),
                rng.random_range(label_cols..n_cols),
            )
        })
        .collect();
    TableCase {
        table,
        evidence,
        planted_sub_headers: planted,
    }
}

fn blank(s: &str) -> bool {
    s.trim().is_empty()
}

/// A body row whose first cell is the only nonempty one.
pub fn oracle_is_sub_header(t: &HierTable<f64>, r: usize) -> bool {
    r > t.header_row_band.end
        && t.n_cols() >= 2
        && !blank(&t.grid[r][0].raw)
        && t.grid[r][1..].iter().all(|c| blank(&c.raw))
}

/// Scan the rows, opening a span at every sub-header.
pub fn oracle_span_list(t: &HierTable<f64>) -> Vec<[usize; 2]> {
    let h = t.header_row_band.end;
    let mut spans = vec![[0, h]];
    let mut open: Option<usize> = None;
    for r in h + 1..t.n_rows() {
        match open {
            None => open = Some(r),
            Some(s) if oracle_is_sub_header(t, r) => {
                spans.push([s, r - 1]);
                open = Some(r);
            }
            Some(_) => {}
        }
    }
    if let Some(s) = open {
        spans.push([s, t.n_rows() - 1]);
    }
    spans
}

/// Nearest sub-header at or above `row`, without crossing into the header band.
pub fn oracle_sub_header(t: &HierTable<f64>, row: usize) -> Option<usize> {
    (t.header_row_band.end + 1..=row)
        .rev()
        .find(|&r| oracle_is_sub_header(t, r))
}

/// `R = header rows ∪ sub-headers ∪ evidence rows`, `C = row-label columns ∪ evidence columns`.
pub fn oracle_reserve(t: &HierTable<f64>, evidence: &[CellRef]) -> (BTreeSet<usize>, BTreeSet<usize>) {
    let mut rows: BTreeSet<usize> = (0..=t.header_row_band.end).collect();
    let mut cols: BTreeSet<usize> = (0..=t.header_col_band.end).collect();
    for e in evidence {
        rows.insert(e.row);
        if let Some(s) = oracle_sub_header(t, e.row) {
            rows.insert(s);
        }
        cols.insert(e.col);
    }
    (rows, cols)
}

/// Expected raw grid of the reconstruction. A blank cell in an upper
/// header row takes the nearest label to its left (a spanning label).
pub fn oracle_grid(t: &HierTable<f64>, rows: &BTreeSet<usize>, cols: &BTreeSet<usize>) -> Vec<Vec<String>> {
    let h = t.header_row_band.end;
    let hc = t.header_col_band.end;
    rows.iter()
        .map(|&r| {
            cols.iter()
                .map(|&c| {
                    let raw = t.grid[r][c].raw.trim();
                    if r < h && c > hc && raw.is_empty() {
                        let left = (hc + 1..c)
                            .rev()
                            .map(|k| t.grid[r][k].raw.trim())
                            .find(|s| !s.is_empty());
                        if let Some(l) = left {
                            return l.to_string();
                        }
                    }
                    t.grid[r][c].raw.clone()
                })
                .collect()
        })
        .collect()
}

// ---------------------------------------------------------------------------
// programs

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OArg {
    Lit(f64),
    Const(&'static str, f64),
    Ref(usize),
}

#[derive(Debug, Clone)]
pub struct OStep {
    pub op: &'static str,
    pub a: OArg,
    pub b: OArg,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OVal {
    Num(f64),
    Bool(bool),
}

const OPS: [&str; 6] = ["add", "subtract", "multiply", "divide", "exp", "greater"];

fn random_literal(rng: &mut ChaCha8Rng) -> OArg {
    match rng.random_range(0..10) {
        0 => OArg::Const("const_100", 100.0),
        1 => OArg::Const("const_m1", -1.0),
        2 => OArg::Lit(rng.random_range(-1_000_000i64..=1_000_000) as f64),
        _ => OArg::Lit(rng.random_range(-100_000_000i64..=100_000_000) as f64 / 100.0),
    }
}

/// A random well-formed program of 1..=5 steps with literals in [-10^6, 10^6].
pub fn random_program(rng: &mut ChaCha8Rng) -> Vec<OStep> {
    let n = rng.random_range(1..=5usize);
    (0..n)
        .map(|i| {
            let op = OPS[rng.random_range(0..OPS.len())];
            let arg = |rng: &mut ChaCha8Rng| {
                if i > 0 && rng.random_bool(0.5) {
                    OArg::Ref(rng.random_range(0..i))
                } else {
                    random_literal(rng)
                }
            };
            let a = arg(rng);
            let b = if op == "exp" && rng.random_bool(0.7) {
                OArg::Lit(rng.random_range(-3i64..=3) as f64 / 2.0)
            } else {
                arg(rng)
            };
            OStep { op, a, b }
        })
        .collect()
}

fn render_arg(a: &OArg) -> String {
    match a {
        OArg::Lit(v) => format!("{v}"),
        OArg::Const(name, _) => name.to_string(),
        OArg::Ref(k) => format!("#{k}"),
    }
}

pub fn render_program(p: &[OStep]) -> String {
    p.iter()
        .map(|s| format!("{}({}, {})", s.op, render_arg(&s.a), render_arg(&s.b)))
        .collect::<Vec<_>>()
        .join(", ")
}

/// Straight-line interpreter; `None` for division by zero, a boolean
/// operand or a non-finite intermediate.
pub fn oracle_eval(p: &[OStep]) -> Option<OVal> {
    let mut vals: Vec<OVal> = Vec::new();
    for s in p {
        let get = |a: &OArg| match a {
            OArg::Lit(v) | OArg::Const(_, v) => Some(*v),
            OArg::Ref(k) => match vals[*k] {
                OVal::Num(v) => Some(v),
                OVal::Bool(_) => None,
            },
        };
        let x = get(&s.a)?;
        let y = get(&s.b)?;
        let v = match s.op {
            "add" => OVal::Num(x + y),
            "subtract" => OVal::Num(x - y),
            "multiply" => OVal::Num(x * y),
            "divide" => {
                if y == 0.0 {
                    return None;
                }
                OVal::Num(x / y)
            }
            "exp" => OVal::Num(x.powf(y)),
            "greater" => OVal::Bool(x > y),
            _ => unreachable!(),
        };
        if let OVal::Num(n) = v {
            if !n.is_finite() {
                return None;
            }
        }
        vals.push(v);
    }
    vals.last().copied()
}

pub fn uses_inexact_ops(p: &[OStep]) -> bool {
    p.iter().any(|s| s.op == "divide" || s.op == "exp")
}
