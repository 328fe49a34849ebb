//! Type-aware table reconstruction.
//!
//! For an arithmetic question every evidence-bearing table is cut down to
//! the rows `R = header rows ∪ sub-headers of evidence spans ∪ evidence rows`
//! and the columns `C = row-label columns ∪ evidence columns`, keeping the
//! source order of both.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{CellRef, Question, QuestionType};
use crate::scalar::Scalar;
use crate::tabletree::{
    column_label, compute_span_list, render_table, sub_header_of, Cell, HierTable, TableError, TableSpanList,
};

#[derive(Debug, Error, PartialEq)]
pub enum ReconstructError {
    #[error(transparent)]
    Table(#[from] TableError),
    #[error("evidence {0} refers to a table not supplied for this question")]
    UnknownTable(CellRef),
}

/// Rows and columns retained during reconstruction.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReservationSets {
    pub rows: BTreeSet<usize>,
    pub cols: BTreeSet<usize>,
}

impl ReservationSets {
    pub fn is_subset(&self, other: &Self) -> bool {
        self.rows.is_subset(&other.rows) && self.cols.is_subset(&other.cols)
    }
}

/// Build the reservation sets for `evidence` (all cells of `table`).
pub fn reserve<T: Scalar>(
    table: &HierTable<T>,
    spans: &TableSpanList,
    evidence: &[CellRef],
) -> Result<ReservationSets, ReconstructError> {
    let mut rows: BTreeSet<usize> = table.header_row_band.iter().collect();
    let mut cols: BTreeSet<usize> = table.header_col_band.iter().collect();
    for e in evidence {
        table.check_data_ref(e)?;
        if let Some(sub) = sub_header_of(table, spans, e.row) {
            rows.insert(sub);
        }
        rows.insert(e.row);
        cols.insert(e.col);
    }
    Ok(ReservationSets { rows, cols })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructedTable<T> {
    pub source_table_id: String,
    pub reservation: ReservationSets,
    pub table: HierTable<T>,
}

impl<T: Scalar> ReconstructedTable<T> {
    /// Position of a source cell inside the reconstructed grid.
    pub fn map_cell(&self, cell: &CellRef) -> Option<CellRef> {
        let row = self.reservation.rows.iter().position(|&r| r == cell.row)?;
        let col = self.reservation.cols.iter().position(|&c| c == cell.col)?;
        Some(CellRef::new(self.table.table_id.clone(), row, col))
    }

    pub fn render(&self) -> String {
        render_table(&self.table)
    }
}

/// Restrict `table` to the reserved rows and columns.
pub fn restrict<T: Scalar>(table: &HierTable<T>, keep: &ReservationSets) -> HierTable<T> {
    let grid = keep
        .rows
        .iter()
        .enumerate()
        .map(|(r, &src_r)| {
            keep.cols
                .iter()
                .enumerate()
                .map(|(c, &src_c)| {
                    let src = &table.grid[src_r][src_c];
                    // a spanning column label must survive dropping the column it starts in
                    let inherited = (table.header_row_band.contains(src_r)
                        && !table.header_col_band.contains(src_c)
                        && src.is_blank())
                    .then(|| column_label(table, src_r, src_c))
                    .flatten();
                    match inherited {
                        Some(label) => Cell::parse(r, c, label),
                        None => Cell {
                            row: r,
                            col: c,
                            raw: src.raw.clone(),
                            value: src.value,
                        },
                    }
                })
                .collect()
        })
        .collect();
    // header bands are prefixes of the kept sets, so they keep their extent
    HierTable {
        table_id: table.table_id.clone(),
        grid,
        header_row_band: table.header_row_band,
        header_col_band: table.header_col_band,
    }
}

/// Reconstruct one table for the given evidence cells.
pub fn reconstruct_table<T: Scalar>(
    table: &HierTable<T>,
    evidence: &[CellRef],
) -> Result<ReconstructedTable<T>, ReconstructError> {
    let spans = compute_span_list(table);
    let reservation = reserve(table, &spans, evidence)?;
    Ok(ReconstructedTable {
        source_table_id: table.table_id.clone(),
        table: restrict(table, &reservation),
        reservation,
    })
}

/// Reconstruct every evidence-bearing table of an arithmetic question.
///
/// Span-selection questions get no reconstruction (their table evidence
/// stays in description form). Tables keep the order of `tables`.
pub fn reconstruct_tables<T: Scalar>(
    _question: &Question<T>,
    qtype: QuestionType,
    tables: &[HierTable<T>],
    evidence: &[CellRef],
) -> Result<Vec<ReconstructedTable<T>>, ReconstructError> {
    if qtype != QuestionType::Arithmetic {
        return Ok(Vec::new());
    }
    if let Some(stray) = evidence
        .iter()
        .find(|e| !tables.iter().any(|t| t.table_id == e.table_id))
    {
        return Err(ReconstructError::UnknownTable(stray.clone()));
    }
    let mut out = Vec::new();
    for table in tables {
        let mine: Vec<CellRef> = evidence
            .iter()
            .filter(|e| e.table_id == table.table_id)
            .cloned()
            .collect();
        if mine.is_empty() {
            continue;
        }
        out.push(reconstruct_table(table, &mine)?);
    }
    Ok(out)
}

/// Audit line for a reconstruction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReconstructionRecord {
    pub q_id: String,
    pub source_table_id: String,
    pub kept_rows: Vec<usize>,
    pub kept_cols: Vec<usize>,
    pub rendered: String,
}

impl ReconstructionRecord {
    pub fn new<T: Scalar>(q_id: &str, r: &ReconstructedTable<T>) -> Self {
        Self {
            q_id: q_id.to_string(),
            source_table_id: r.source_table_id.clone(),
            kept_rows: r.reservation.rows.iter().copied().collect(),
            kept_cols: r.reservation.cols.iter().copied().collect(),
            rendered: r.render(),
        }
    }
}
