//! Multi-hierarchical tables.
//!
//! A [`HierTable`] is a rectangular grid with a band of stacked column-header
//! rows at the top and a band of row-label columns at the left. Below the
//! header band, rows whose first cell is the only nonempty cell are
//! sub-header rows; each one opens a new span of the [`TableSpanList`].

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::CellRef;
use crate::numeric::parse_number;
use crate::scalar::Scalar;

#[derive(Debug, Error, PartialEq)]
pub enum TableError {
    #[error("table {table_id}: row {row} has {found} cells, expected {expected}")]
    Ragged {
        table_id: String,
        row: usize,
        found: usize,
        expected: usize,
    },
    #[error("table {table_id}: empty grid")]
    Empty { table_id: String },
    #[error("table {table_id}: {band} band {range} invalid for a {n_rows}x{n_cols} grid")]
    BadBand {
        table_id: String,
        band: &'static str,
        range: Band,
        n_rows: usize,
        n_cols: usize,
    },
    #[error("table {table_id}: cell ({row},{col}) stores position ({stored_row},{stored_col})")]
    Misplaced {
        table_id: String,
        row: usize,
        col: usize,
        stored_row: usize,
        stored_col: usize,
    },
    #[error("table {table_id}: cell ({row},{col}) value does not match raw {raw:?}")]
    ValueMismatch {
        table_id: String,
        row: usize,
        col: usize,
        raw: String,
    },
    #[error("cell {0} is out of bounds")]
    OutOfBounds(CellRef),
    #[error("cell {0} lies inside a header band")]
    HeaderCell(CellRef),
    #[error("cell {cell} belongs to table {expected}")]
    WrongTable { cell: CellRef, expected: String },
}

/// Inclusive index range `[start, end]`, serialized as a two-element array.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "[usize; 2]", into = "[usize; 2]")]
pub struct Band {
    pub start: usize,
    pub end: usize,
}

impl Band {
    pub const fn new(start: usize, end: usize) -> Self {
        Self { start, end }
    }

    pub fn contains(&self, i: usize) -> bool {
        self.start <= i && i <= self.end
    }

    pub fn len(&self) -> usize {
        self.end + 1 - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end < self.start
    }

    pub fn iter(&self) -> std::ops::RangeInclusive<usize> {
        self.start..=self.end
    }
}

impl From<[usize; 2]> for Band {
    fn from([start, end]: [usize; 2]) -> Self {
        Self { start, end }
    }
}

impl From<Band> for [usize; 2] {
    fn from(b: Band) -> Self {
        [b.start, b.end]
    }
}

impl fmt::Display for Band {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{},{}]", self.start, self.end)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Deserialize<'de>"))]
pub struct Cell<T> {
    pub row: usize,
    pub col: usize,
    pub raw: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<T>,
}

impl<T: Scalar> Cell<T> {
    /// Build a cell, parsing its numeric value eagerly.
    pub fn parse(row: usize, col: usize, raw: impl Into<String>) -> Self {
        let raw = raw.into();
        let value = parse_number::<T>(&raw).map(|p| p.value);
        Self { row, col, raw, value }
    }

    pub fn is_blank(&self) -> bool {
        self.raw.trim().is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HierTable<T> {
    pub table_id: String,
    pub grid: Vec<Vec<Cell<T>>>,
    /// Column-header rows, always starting at row 0.
    pub header_row_band: Band,
    /// Row-label columns, always starting at column 0.
    pub header_col_band: Band,
}

/// Where header bands come from when a table is ingested.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeaderSource {
    /// Keep the bands given by the source markup when present.
    #[default]
    Markup,
    /// Always re-derive the bands from cell contents.
    Infer,
}

impl<T: Scalar> HierTable<T> {
    /// Build from raw strings with explicit header bands.
    pub fn from_rows<S: AsRef<str>>(
        table_id: impl Into<String>,
        rows: &[Vec<S>],
        header_row_band: Band,
        header_col_band: Band,
    ) -> Result<Self, TableError> {
        let table = Self {
            table_id: table_id.into(),
            grid: rows
                .iter()
                .enumerate()
                .map(|(r, row)| {
                    row.iter()
                        .enumerate()
                        .map(|(c, s)| Cell::parse(r, c, s.as_ref()))
                        .collect()
                })
                .collect(),
            header_row_band,
            header_col_band,
        };
        table.validate()?;
        Ok(table)
    }

    /// Build from raw strings and infer the header bands.
    pub fn from_rows_inferred<S: AsRef<str>>(table_id: impl Into<String>, rows: &[Vec<S>]) -> Result<Self, TableError> {
        let mut table = Self::from_rows(table_id, rows, Band::new(0, 0), Band::new(0, 0))?;
        table.header_row_band = infer_header_row_band(&table.grid);
        Ok(table)
    }

    pub fn n_rows(&self) -> usize {
        self.grid.len()
    }

    pub fn n_cols(&self) -> usize {
        self.grid.first().map_or(0, Vec::len)
    }

    pub fn cell(&self, row: usize, col: usize) -> Option<&Cell<T>> {
        self.grid.get(row).and_then(|r| r.get(col))
    }

    /// Check shape, band bounds, stored positions and value/raw agreement.
    pub fn validate(&self) -> Result<(), TableError> {
        let id = || self.table_id.clone();
        let n_rows = self.n_rows();
        let n_cols = self.n_cols();
        if n_rows == 0 || n_cols == 0 {
            return Err(TableError::Empty { table_id: id() });
        }
        for (r, row) in self.grid.iter().enumerate() {
            if row.len() != n_cols {
                return Err(TableError::Ragged {
                    table_id: id(),
                    row: r,
                    found: row.len(),
                    expected: n_cols,
                });
            }
            for (c, cell) in row.iter().enumerate() {
                if cell.row != r || cell.col != c {
                    return Err(TableError::Misplaced {
                        table_id: id(),
                        row: r,
                        col: c,
                        stored_row: cell.row,
                        stored_col: cell.col,
                    });
                }
                if let Some(v) = cell.value {
                    let parsed = parse_number::<T>(&cell.raw).map(|p| p.value);
                    if parsed != Some(v) {
                        return Err(TableError::ValueMismatch {
                            table_id: id(),
                            row: r,
                            col: c,
                            raw: cell.raw.clone(),
                        });
                    }
                }
            }
        }
        let bad = |band: &'static str, range: Band| TableError::BadBand {
            table_id: id(),
            band,
            range,
            n_rows,
            n_cols,
        };
        let hr = self.header_row_band;
        if hr.start != 0 || hr.end < hr.start || hr.end >= n_rows {
            return Err(bad("header_row", hr));
        }
        let hc = self.header_col_band;
        if hc.start != 0 || hc.end < hc.start || hc.end >= n_cols {
            return Err(bad("header_col", hc));
        }
        Ok(())
    }

    /// Fill missing numeric values from the raw strings.
    pub fn fill_values(&mut self) {
        for cell in self.grid.iter_mut().flatten() {
            if cell.value.is_none() {
                cell.value = parse_number::<T>(&cell.raw).map(|p| p.value);
            }
        }
    }

    /// A row below the header band whose first cell is the only nonempty one.
    pub fn is_sub_header_row(&self, row: usize) -> bool {
        if row <= self.header_row_band.end || row >= self.n_rows() || self.n_cols() < 2 {
            return false;
        }
        let cells = &self.grid[row];
        !cells[0].is_blank() && cells[1..].iter().all(Cell::is_blank)
    }

    pub fn is_data_cell(&self, cell: &CellRef) -> bool {
        !self.header_row_band.contains(cell.row) && !self.header_col_band.contains(cell.col)
    }

    /// Bounds, ownership and header-band checks for an evidence reference.
    pub fn check_data_ref(&self, cell: &CellRef) -> Result<(), TableError> {
        if cell.table_id != self.table_id {
            return Err(TableError::WrongTable {
                cell: cell.clone(),
                expected: self.table_id.clone(),
            });
        }
        if cell.row >= self.n_rows() || cell.col >= self.n_cols() {
            return Err(TableError::OutOfBounds(cell.clone()));
        }
        if !self.is_data_cell(cell) {
            return Err(TableError::HeaderCell(cell.clone()));
        }
        Ok(())
    }

    pub fn cell_ref(&self, row: usize, col: usize) -> CellRef {
        CellRef::new(self.table_id.clone(), row, col)
    }
}

/// Header rows are the rows before the first one holding a numeric cell
/// outside column 0. Year-like integers are labels, not data.
pub fn infer_header_row_band<T: Scalar>(grid: &[Vec<Cell<T>>]) -> Band {
    let is_year = |cell: &Cell<T>| {
        let raw = cell.raw.trim();
        raw.len() == 4 && raw.bytes().all(|b| b.is_ascii_digit()) && matches!(raw.parse::<u32>(), Ok(1900..=2100))
    };
    let first_data = grid
        .iter()
        .position(|row| row.iter().skip(1).any(|c| c.value.is_some() && !is_year(c)));
    let end = match first_data {
        Some(0) | None => 0,
        Some(r) => r - 1,
    };
    // keep at least one body row when the grid allows it
    let end = end.min(grid.len().saturating_sub(2));
    Band::new(0, end)
}

/// Ordered partition of a table's rows: the header band, then one span per
/// sub-header-delimited block of body rows.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableSpanList {
    pub spans: Vec<Band>,
}

impl TableSpanList {
    /// Index of the span containing `row`.
    pub fn span_index(&self, row: usize) -> Option<usize> {
        // spans are sorted and contiguous
        let i = self.spans.partition_point(|s| s.end < row);
        self.spans.get(i).filter(|s| s.contains(row)).map(|_| i)
    }

    pub fn span_of(&self, row: usize) -> Option<Band> {
        self.span_index(row).map(|i| self.spans[i])
    }

    pub fn as_pairs(&self) -> Vec<[usize; 2]> {
        self.spans.iter().map(|&b| b.into()).collect()
    }
}

/// Partition the rows of `table` into its span list `L`.
pub fn compute_span_list<T: Scalar>(table: &HierTable<T>) -> TableSpanList {
    let header = table.header_row_band;
    let mut spans = vec![header];
    let n = table.n_rows();
    let mut start = header.end + 1;
    for row in header.end + 2..n {
        if table.is_sub_header_row(row) {
            spans.push(Band::new(start, row - 1));
            start = row;
        }
    }
    if start < n {
        spans.push(Band::new(start, n - 1));
    }
    spans.retain(|b| !b.is_empty());
    TableSpanList { spans }
}

/// Sub-header row opening the span that contains `row`, if that span has one.
pub fn sub_header_of<T: Scalar>(table: &HierTable<T>, spans: &TableSpanList, row: usize) -> Option<usize> {
    let span = spans.span_of(row)?;
    if span == table.header_row_band {
        return None;
    }
    table.is_sub_header_row(span.start).then_some(span.start)
}

/// Label of a column-header cell; blank cells in the upper header rows
/// inherit the nearest label to their left (a horizontally spanning cell).
pub(crate) fn column_label<T: Scalar>(table: &HierTable<T>, header_row: usize, col: usize) -> Option<String> {
    let row = &table.grid[header_row];
    let own = row[col].raw.trim();
    if !own.is_empty() {
        return Some(own.to_string());
    }
    if header_row == table.header_row_band.end {
        return None;
    }
    let first_body_col = table.header_col_band.end + 1;
    (first_body_col..col)
        .rev()
        .map(|c| row[c].raw.trim())
        .find(|s| !s.is_empty())
        .map(str::to_string)
}

/// Header paths of a data cell: the row path (span sub-header, then the
/// row-label columns) and the stacked column-header path.
pub fn header_paths<T: Scalar>(
    table: &HierTable<T>,
    spans: &TableSpanList,
    cell: &CellRef,
) -> Result<(Vec<String>, Vec<String>), TableError> {
    if cell.row >= table.n_rows() || cell.col >= table.n_cols() {
        return Err(TableError::OutOfBounds(cell.clone()));
    }
    if !table.is_data_cell(cell) {
        return Err(TableError::HeaderCell(cell.clone()));
    }
    let mut row_path = Vec::new();
    if let Some(sub) = sub_header_of(table, spans, cell.row) {
        if sub != cell.row {
            row_path.push(table.grid[sub][0].raw.trim().to_string());
        }
    }
    for c in table.header_col_band.iter() {
        let label = table.grid[cell.row][c].raw.trim();
        if !label.is_empty() {
            row_path.push(label.to_string());
        }
    }
    let mut col_path: Vec<String> = Vec::new();
    for r in table.header_row_band.iter() {
        if let Some(label) = column_label(table, r, cell.col) {
            if col_path.last() != Some(&label) {
                col_path.push(label);
            }
        }
    }
    Ok((row_path, col_path))
}

/// One linearized data cell.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableDescription {
    pub desc_id: String,
    pub table_id: String,
    pub cell: CellRef,
    pub text: String,
}

/// Flat JSONL form: `{desc_id, table_id, row, col, text}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DescriptionRecord {
    pub desc_id: String,
    pub table_id: String,
    pub row: usize,
    pub col: usize,
    pub text: String,
}

impl From<&TableDescription> for DescriptionRecord {
    fn from(d: &TableDescription) -> Self {
        Self {
            desc_id: d.desc_id.clone(),
            table_id: d.table_id.clone(),
            row: d.cell.row,
            col: d.cell.col,
            text: d.text.clone(),
        }
    }
}

impl From<DescriptionRecord> for TableDescription {
    fn from(r: DescriptionRecord) -> Self {
        Self {
            cell: CellRef::new(r.table_id.clone(), r.row, r.col),
            desc_id: r.desc_id,
            table_id: r.table_id,
            text: r.text,
        }
    }
}

/// Stable description id for a cell.
pub fn description_id(cell: &CellRef) -> String {
    format!("{}-{}-{}", cell.table_id, cell.row, cell.col)
}

/// Sentence for one cell: `For {row path}, the {column path} is {raw}.`
pub fn describe(row_path: &[String], col_path: &[String], raw: &str) -> String {
    format!(
        "For {}, the {} is {}.",
        row_path.join(" - "),
        col_path.join(" - "),
        raw.trim()
    )
}

/// One description per nonempty data cell, row-major.
pub fn linearize<T: Scalar>(table: &HierTable<T>) -> Vec<TableDescription> {
    let spans = compute_span_list(table);
    let mut out = Vec::new();
    for row in table.header_row_band.end + 1..table.n_rows() {
        for col in table.header_col_band.end + 1..table.n_cols() {
            let cell = &table.grid[row][col];
            if cell.is_blank() {
                continue;
            }
            let cref = table.cell_ref(row, col);
            let (row_path, col_path) = header_paths(table, &spans, &cref).expect("body cell is a data cell");
            out.push(TableDescription {
                desc_id: description_id(&cref),
                table_id: table.table_id.clone(),
                text: describe(&row_path, &col_path, &cell.raw),
                cell: cref,
            });
        }
    }
    out
}

/// Pipe-delimited rendering, one grid row per line.
pub fn render_table<T>(table: &HierTable<T>) -> String {
    table
        .grid
        .iter()
        .map(|row| {
            let cells: Vec<&str> = row.iter().map(|c| c.raw.trim()).collect();
            format!("| {} |", cells.join(" | "))
        })
        .collect::<Vec<_>>()
        .join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn annuities() -> HierTable<f64> {
        let rows = vec![
            vec!["", "December 31,", ""],
            vec!["", "2019", "2018"],
            vec!["Annuities", "", ""],
            vec!["Fixed annuities", "13,250", "12,100"],
            vec!["Home equity", "", ""],
            vec!["Home equity loans", "13,500", "12,900"],
            vec!["Lines of credit", "4,210", "3,980"],
            vec!["Total", "17,710", "16,880"],
        ];
        HierTable::from_rows("t0", &rows, Band::new(0, 1), Band::new(0, 0)).unwrap()
    }

    fn flat() -> HierTable<f64> {
        let rows = vec![
            vec!["", "2019", "2018"],
            vec!["Revenue", "100", "90"],
            vec!["Cost", "", "40"],
            vec!["Profit", "60", "50"],
        ];
        HierTable::from_rows("t1", &rows, Band::new(0, 0), Band::new(0, 0)).unwrap()
    }

    #[test]
    fn annuities_span_list() {
        let l = compute_span_list(&annuities());
        assert_eq!(l.as_pairs(), vec![[0, 1], [2, 3], [4, 7]]);
    }

    #[test]
    fn flat_span_list() {
        assert_eq!(compute_span_list(&flat()).as_pairs(), vec![[0, 0], [1, 3]]);
    }

    #[test]
    fn header_only_table_has_one_span() {
        let t = HierTable::<f64>::from_rows("t", &[vec!["a", "b"]], Band::new(0, 0), Band::new(0, 0)).unwrap();
        assert_eq!(compute_span_list(&t).as_pairs(), vec![[0, 0]]);
    }

    #[test]
    fn annuities_paths_carry_sub_header() {
        let t = annuities();
        let l = compute_span_list(&t);
        let (rp, cp) = header_paths(&t, &l, &CellRef::new("t0", 5, 2)).unwrap();
        assert_eq!(rp, vec!["Home equity", "Home equity loans"]);
        assert_eq!(cp, vec!["December 31,", "2018"]);
    }

    #[test]
    fn flat_paths() {
        let t = flat();
        let l = compute_span_list(&t);
        let (rp, cp) = header_paths(&t, &l, &CellRef::new("t1", 1, 1)).unwrap();
        assert_eq!(rp, vec!["Revenue"]);
        assert_eq!(cp, vec!["2019"]);
    }

    #[test]
    fn header_cell_rejected() {
        let t = flat();
        let l = compute_span_list(&t);
        assert!(matches!(
            header_paths(&t, &l, &CellRef::new("t1", 0, 1)),
            Err(TableError::HeaderCell(_))
        ));
        assert!(matches!(
            header_paths(&t, &l, &CellRef::new("t1", 2, 0)),
            Err(TableError::HeaderCell(_))
        ));
    }

    #[test]
    fn flat_linearize_template_and_skip_empty() {
        let descs = linearize(&flat());
        assert_eq!(descs[0].text, "For Revenue, the 2019 is 100.");
        assert_eq!(descs[0].desc_id, "t1-1-1");
        // (2,1) is empty
        assert_eq!(descs.len(), 5);
        assert!(descs.iter().all(|d| d.cell != CellRef::new("t1", 2, 1)));
    }

    #[test]
    fn render_small() {
        let t = HierTable::<f64>::from_rows("t", &[vec!["x"]], Band::new(0, 0), Band::new(0, 0)).unwrap();
        assert_eq!(render_table(&t), "| x |");
        let t = HierTable::<f64>::from_rows("t", &[vec!["a", "b"], vec!["c", "1"]], Band::new(0, 0), Band::new(0, 0))
            .unwrap();
        let r = render_table(&t);
        assert_eq!(r.lines().count(), 2);
        assert!(r.lines().all(|l| l.matches('|').count() == 3));
    }

    #[test]
    fn validation_errors() {
        let ragged = HierTable::<f64>::from_rows("t", &[vec!["a", "b"], vec!["c"]], Band::new(0, 0), Band::new(0, 0));
        assert!(matches!(ragged, Err(TableError::Ragged { row: 1, .. })));
        let bad = HierTable::<f64>::from_rows("t", &[vec!["a"]], Band::new(0, 3), Band::new(0, 0));
        assert!(matches!(bad, Err(TableError::BadBand { .. })));
        let mut t = flat();
        t.grid[1][1].value = Some(7.0);
        assert!(matches!(t.validate(), Err(TableError::ValueMismatch { .. })));
    }

    #[test]
    fn infers_header_band_past_year_row() {
        let rows = vec![
            vec!["", "Year ended", ""],
            vec!["", "2019", "2018"],
            vec!["Revenue", "100", "90"],
        ];
        let t = HierTable::<f64>::from_rows_inferred("t", &rows).unwrap();
        assert_eq!(t.header_row_band, Band::new(0, 1));
    }

    #[test]
    fn band_serializes_as_pair() {
        assert_eq!(serde_json::to_string(&Band::new(0, 1)).unwrap(), "[0,1]");
        let b: Band = serde_json::from_str("[2,3]").unwrap();
        assert_eq!(b, Band::new(2, 3));
    }
}
