//! Table data model, tokenization, layout normalization and fixed-size
//! integer encoding.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vocab::{Vocabulary, PAD_ID};

const PUNCTUATION: &str = "!\"#$%&()*+,-./:;<=>?@[\\]^_`{|}~";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Orientation {
    Horizontal,
    Vertical,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cell {
    pub text: String,
    pub row_span: usize,
    pub col_span: usize,
}

impl Cell {
    pub fn new(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            row_span: 1,
            col_span: 1,
        }
    }

    pub fn spanning(text: impl Into<String>, row_span: usize, col_span: usize) -> Self {
        Self {
            text: text.into(),
            row_span,
            col_span,
        }
    }

    pub fn empty() -> Self {
        Self::new("")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawTable {
    pub id: String,
    pub caption: String,
    pub orientation: Orientation,
    pub grid: Vec<Vec<Cell>>,
    pub has_header_row: bool,
}

impl RawTable {
    /// Horizontal table from plain text rows.
    pub fn from_text(id: &str, caption: &str, rows: &[&[&str]]) -> Self {
        Self {
            id: id.to_string(),
            caption: caption.to_string(),
            orientation: Orientation::Horizontal,
            grid: rows.iter().map(|r| r.iter().map(|t| Cell::new(*t)).collect()).collect(),
            has_header_row: true,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.grid.len()
    }

    pub fn n_cols(&self) -> usize {
        self.grid.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Cell texts of column `k`, top to bottom; short rows are skipped.
    pub fn column(&self, k: usize) -> Vec<&str> {
        self.grid
            .iter()
            .filter_map(|r| r.get(k).map(|c| c.text.as_str()))
            .collect()
    }

    pub fn caption_tokens(&self) -> Vec<String> {
        tokenize(&self.caption)
    }

    /// Tokens of every cell, row-major.
    pub fn content_tokens(&self) -> Vec<String> {
        self.grid
            .iter()
            .flat_map(|r| r.iter().flat_map(|c| tokenize(&c.text)))
            .collect()
    }
}

/// Fixed table dimensions the encoder works on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShapeConfig {
    pub n_rows: usize,
    pub n_cols: usize,
    pub tokens_per_cell: usize,
    pub tokens_per_caption: usize,
}

impl Default for ShapeConfig {
    fn default() -> Self {
        Self {
            n_rows: 9,
            n_cols: 9,
            tokens_per_cell: 4,
            tokens_per_caption: 12,
        }
    }
}

impl ShapeConfig {
    pub fn new(n_rows: usize, n_cols: usize, tokens_per_cell: usize, tokens_per_caption: usize) -> Result<Self> {
        let s = Self {
            n_rows,
            n_cols,
            tokens_per_cell,
            tokens_per_caption,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_rows == 0 || self.n_cols == 0 || self.tokens_per_cell == 0 || self.tokens_per_caption == 0 {
            return Err(Error::Config(format!("shape dimensions must be positive: {self:?}")));
        }
        Ok(())
    }

    pub fn content_len(&self) -> usize {
        self.n_rows * self.n_cols * self.tokens_per_cell
    }
}

/// Integer-id view of a table under a [`ShapeConfig`].
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct EncodedTable {
    pub shape: ShapeConfig,
    /// `tokens_per_caption` ids.
    pub caption_ids: Vec<usize>,
    /// `n_rows x n_cols x tokens_per_cell` ids, row-major.
    pub content_ids: Vec<usize>,
}

impl EncodedTable {
    pub fn cell(&self, row: usize, col: usize) -> &[usize] {
        let t = self.shape.tokens_per_cell;
        let start = (row * self.shape.n_cols + col) * t;
        &self.content_ids[start..start + t]
    }
}

/// Lowercases, turns punctuation into separators and splits on whitespace.
/// A `.` between two digits is kept so that decimals such as `0.05` stay a
/// single token.
pub fn tokenize(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    let mut cleaned = String::with_capacity(text.len());
    for (i, &c) in chars.iter().enumerate() {
        let decimal_point =
            c == '.' && i > 0 && chars[i - 1].is_ascii_digit() && chars.get(i + 1).is_some_and(|n| n.is_ascii_digit());
        if PUNCTUATION.contains(c) && !decimal_point {
            cleaned.push(' ');
        } else {
            cleaned.extend(c.to_lowercase());
        }
    }
    cleaned.split_whitespace().map(str::to_string).collect()
}

/// Rotates vertical tables into horizontal layout by transposition. Ragged
/// grids are padded with empty cells first.
pub fn normalize_orientation(table: &RawTable) -> RawTable {
    let mut out = table.clone();
    if table.orientation == Orientation::Horizontal {
        return out;
    }
    let (rows, cols) = (table.n_rows(), table.n_cols());
    out.grid = (0..cols)
        .map(|j| {
            (0..rows)
                .map(|i| table.grid[i].get(j).cloned().unwrap_or_else(Cell::empty))
                .collect()
        })
        .collect();
    out.orientation = Orientation::Horizontal;
    out
}

/// Replaces every merged cell with copies of its text, `row_span` copies
/// downwards and `col_span` copies to the right. Cells are placed like an
/// HTML table: each cell takes the next slot of its row not already covered
/// by a span from above. The result is padded to a rectangle.
pub fn expand_merged_cells(grid: &[Vec<Cell>]) -> Result<Vec<Vec<Cell>>> {
    let n_rows = grid.len();
    let mut slots: Vec<Vec<Option<String>>> = vec![Vec::new(); n_rows];
    for (r, row) in grid.iter().enumerate() {
        let mut c = 0;
        for (i, cell) in row.iter().enumerate() {
            if cell.row_span == 0 || cell.col_span == 0 {
                return Err(Error::Validation(format!(
                    "cell at row {r}, position {i} has a zero span"
                )));
            }
            while slots[r].get(c).is_some_and(Option::is_some) {
                c += 1;
            }
            if r + cell.row_span > n_rows {
                return Err(Error::Validation(format!(
                    "cell at row {r}, position {i} spans {} rows but only {} remain",
                    cell.row_span,
                    n_rows - r
                )));
            }
            for slot_row in slots.iter_mut().skip(r).take(cell.row_span) {
                if slot_row.len() < c + cell.col_span {
                    slot_row.resize(c + cell.col_span, None);
                }
                for slot in &mut slot_row[c..c + cell.col_span] {
                    if slot.is_some() {
                        return Err(Error::Validation(format!(
                            "cell at row {r}, position {i} overlaps another merged cell"
                        )));
                    }
                    *slot = Some(cell.text.clone());
                }
            }
            c += cell.col_span;
        }
    }
    let width = slots.iter().map(Vec::len).max().unwrap_or(0);
    Ok(slots
        .into_iter()
        .map(|row| {
            let mut cells: Vec<Cell> = row.into_iter().map(|s| Cell::new(s.unwrap_or_default())).collect();
            cells.resize(width, Cell::empty());
            cells
        })
        .collect())
}

fn ids_padded(tokens: &[String], vocab: &Vocabulary, len: usize) -> Vec<usize> {
    let mut ids: Vec<usize> = tokens.iter().take(len).map(|t| vocab.id(t)).collect();
    ids.resize(len, PAD_ID);
    ids
}

/// Maps a horizontal, span-expanded table onto fixed-size id arrays. Each
/// dimension keeps its leading items and is padded with the pad id.
pub fn encode_table(table: &RawTable, vocab: &Vocabulary, shape: &ShapeConfig) -> EncodedTable {
    let caption_ids = ids_padded(&table.caption_tokens(), vocab, shape.tokens_per_caption);
    let mut content_ids = vec![PAD_ID; shape.content_len()];
    for (i, row) in table.grid.iter().take(shape.n_rows).enumerate() {
        for (j, cell) in row.iter().take(shape.n_cols).enumerate() {
            let ids = ids_padded(&tokenize(&cell.text), vocab, shape.tokens_per_cell);
            let start = (i * shape.n_cols + j) * shape.tokens_per_cell;
            content_ids[start..start + shape.tokens_per_cell].copy_from_slice(&ids);
        }
    }
    EncodedTable {
        shape: *shape,
        caption_ids,
        content_ids,
    }
}
