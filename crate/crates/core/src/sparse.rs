//! Sparse vectors and CSR matrices.

use std::io::{BufRead, Write};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sorted `(index, value)` pairs over `[0, dim)` with no stored zeros.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseVector {
    dim: usize,
    entries: Vec<(usize, f64)>,
}

impl SparseVector {
    pub fn zeros(dim: usize) -> Self {
        SparseVector {
            dim,
            entries: Vec::new(),
        }
    }

    /// Builds from arbitrary-order pairs; repeated indices are summed and
    /// zeros dropped.
    pub fn from_unsorted(dim: usize, mut pairs: Vec<(usize, f64)>) -> Result<Self> {
        if let Some(&(i, _)) = pairs.iter().find(|(i, _)| *i >= dim) {
            return Err(Error::invalid(format!(
                "index {i} out of range for dimension {dim}"
            )));
        }
        pairs.sort_by_key(|&(i, _)| i);
        let mut entries: Vec<(usize, f64)> = Vec::with_capacity(pairs.len());
        for (i, v) in pairs {
            match entries.last_mut() {
                Some(last) if last.0 == i => last.1 += v,
                _ => entries.push((i, v)),
            }
        }
        entries.retain(|&(_, v)| v != 0.0);
        Ok(SparseVector { dim, entries })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn get(&self, index: usize) -> f64 {
        self.entries
            .binary_search_by_key(&index, |&(i, _)| i)
            .map(|p| self.entries[p].1)
            .unwrap_or(0.0)
    }

    pub fn sum(&self) -> f64 {
        self.entries.iter().map(|&(_, v)| v).sum()
    }

    pub fn norm_l2(&self) -> f64 {
        self.entries.iter().map(|&(_, v)| v * v).sum::<f64>().sqrt()
    }

    pub fn scale(&mut self, factor: f64) {
        for (_, v) in &mut self.entries {
            *v *= factor;
        }
        self.entries.retain(|&(_, v)| v != 0.0);
    }

    /// `self` followed by `other`, with `other`'s indices shifted by `self.dim()`.
    pub fn concat(&self, other: &SparseVector) -> SparseVector {
        let mut entries = self.entries.clone();
        entries.extend(other.entries.iter().map(|&(i, v)| (i + self.dim, v)));
        SparseVector {
            dim: self.dim + other.dim,
            entries,
        }
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for &(i, v) in &self.entries {
            out[i] = v;
        }
        out
    }
}

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    data: Vec<f64>,
}

impl SparseMatrix {
    pub fn from_rows(cols: usize, rows: &[SparseVector]) -> Result<Self> {
        let mut indptr = Vec::with_capacity(rows.len() + 1);
        indptr.push(0);
        let nnz = rows.iter().map(SparseVector::nnz).sum();
        let mut indices = Vec::with_capacity(nnz);
        let mut data = Vec::with_capacity(nnz);
        for row in rows {
            if row.dim() != cols {
                return Err(Error::DimensionMismatch {
                    expected: cols,
                    got: row.dim(),
                });
            }
            for &(i, v) in row.entries() {
                indices.push(i);
                data.push(v);
            }
            indptr.push(indices.len());
        }
        Ok(SparseMatrix {
            rows: rows.len(),
            cols,
            indptr,
            indices,
            data,
        })
    }

    /// Builds from `(row, col, value)` triplets in any order; duplicates are summed.
    pub fn from_triplets(rows: usize, cols: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut per_row: Vec<Vec<(usize, f64)>> = vec![Vec::new(); rows];
        for &(r, c, v) in triplets {
            if r >= rows {
                return Err(Error::invalid(format!("row {r} out of range for {rows} rows")));
            }
            per_row[r].push((c, v));
        }
        let vecs = per_row
            .into_iter()
            .map(|p| SparseVector::from_unsorted(cols, p))
            .collect::<Result<Vec<_>>>()?;
        Self::from_rows(cols, &vecs)
    }

    pub fn from_dense(dense: &Array2<f64>) -> Self {
        let rows: Vec<SparseVector> = dense
            .rows()
            .into_iter()
            .map(|r| SparseVector {
                dim: dense.ncols(),
                entries: r
                    .iter()
                    .enumerate()
                    .filter(|(_, &v)| v != 0.0)
                    .map(|(i, &v)| (i, v))
                    .collect(),
            })
            .collect();
        Self::from_rows(dense.ncols(), &rows).expect("row widths agree")
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.data.len()
    }

    pub fn indptr(&self) -> &[usize] {
        &self.indptr
    }

    /// Column indices and values of row `r`.
    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let (lo, hi) = (self.indptr[r], self.indptr[r + 1]);
        (&self.indices[lo..hi], &self.data[lo..hi])
    }

    pub fn row_vector(&self, r: usize) -> SparseVector {
        let (idx, vals) = self.row(r);
        SparseVector {
            dim: self.cols,
            entries: idx.iter().copied().zip(vals.iter().copied()).collect(),
        }
    }

    pub fn iter_triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.rows).flat_map(move |r| {
            let (idx, vals) = self.row(r);
            idx.iter().zip(vals).map(move |(&c, &v)| (r, c, v))
        })
    }

    /// Checks the CSR structural invariants.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::invalid(format!("malformed CSR matrix: {m}")));
        if self.indptr.len() != self.rows + 1 || self.indptr[0] != 0 {
            return bad("row offsets");
        }
        if self.indptr.windows(2).any(|w| w[0] > w[1]) || self.indptr[self.rows] != self.data.len() {
            return bad("row offsets not nondecreasing");
        }
        for r in 0..self.rows {
            let (idx, _) = self.row(r);
            if idx.windows(2).any(|w| w[0] >= w[1]) {
                return bad("column indices not strictly increasing");
            }
            if idx.last().is_some_and(|&c| c >= self.cols) {
                return bad("column index out of range");
            }
        }
        Ok(())
    }

    pub fn select_rows(&self, rows: &[usize]) -> SparseMatrix {
        let mut indptr = Vec::with_capacity(rows.len() + 1);
        indptr.push(0);
        let mut indices = Vec::new();
        let mut data = Vec::new();
        for &r in rows {
            let (idx, vals) = self.row(r);
            indices.extend_from_slice(idx);
            data.extend_from_slice(vals);
            indptr.push(indices.len());
        }
        SparseMatrix {
            rows: rows.len(),
            cols: self.cols,
            indptr,
            indices,
            data,
        }
    }

    /// Keeps the given columns (strictly increasing), renumbered `0..columns.len()`.
    pub fn select_columns(&self, columns: &[usize]) -> Result<SparseMatrix> {
        if columns.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("column selection must be strictly increasing"));
        }
        if columns.last().is_some_and(|&c| c >= self.cols) {
            return Err(Error::invalid("column selection out of range"));
        }
        let mut indptr = Vec::with_capacity(self.rows + 1);
        indptr.push(0);
        let mut indices = Vec::new();
        let mut data = Vec::new();
        for r in 0..self.rows {
            let (idx, vals) = self.row(r);
            for (&c, &v) in idx.iter().zip(vals) {
                if let Ok(pos) = columns.binary_search(&c) {
                    indices.push(pos);
                    data.push(v);
                }
            }
            indptr.push(indices.len());
        }
        Ok(SparseMatrix {
            rows: self.rows,
            cols: columns.len(),
            indptr,
            indices,
            data,
        })
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.rows, self.cols));
        for (r, c, v) in self.iter_triplets() {
            out[[r, c]] = v;
        }
        out
    }

    /// L2-normalizes every nonzero row in place.
    pub fn normalize_rows(&mut self) {
        for r in 0..self.rows {
            let (lo, hi) = (self.indptr[r], self.indptr[r + 1]);
            let norm = self.data[lo..hi].iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                self.data[lo..hi].iter_mut().for_each(|v| *v /= norm);
            }
        }
    }

    /// Column-major view restricted to columns that hold at least one entry.
    pub fn occupied_columns(&self) -> ColumnView {
        // Dense counting needs O(cols) memory; huge index spaces sort instead.
        if self.cols <= 4 * self.nnz().max(1024) {
            let mut counts = vec![0usize; self.cols];
            for &c in &self.indices {
                counts[c] += 1;
            }
            let mut columns = Vec::new();
            let mut starts = vec![0usize; self.cols + 1];
            for c in 0..self.cols {
                starts[c + 1] = starts[c] + counts[c];
                if counts[c] > 0 {
                    columns.push(c);
                }
            }
            let mut fill = starts.clone();
            let mut rows = vec![0usize; self.nnz()];
            let mut vals = vec![0.0; self.nnz()];
            for (r, c, v) in self.iter_triplets() {
                rows[fill[c]] = r;
                vals[fill[c]] = v;
                fill[c] += 1;
            }
            let offsets = std::iter::once(0)
                .chain(columns.iter().map(|&c| starts[c + 1]))
                .collect();
            ColumnView {
                rows_total: self.rows,
                columns,
                offsets,
                row_indices: rows,
                values: vals,
            }
        } else {
            let mut trip: Vec<(usize, usize, f64)> =
                self.iter_triplets().map(|(r, c, v)| (c, r, v)).collect();
            trip.sort_by_key(|&(c, r, _)| (c, r));
            let mut columns = Vec::new();
            let mut offsets = vec![0];
            let mut row_indices = Vec::with_capacity(trip.len());
            let mut values = Vec::with_capacity(trip.len());
            for (i, &(c, r, v)) in trip.iter().enumerate() {
                if i == 0 || trip[i - 1].0 != c {
                    if i > 0 {
                        offsets.push(row_indices.len());
                    }
                    columns.push(c);
                }
                row_indices.push(r);
                values.push(v);
            }
            if !columns.is_empty() {
                offsets.push(row_indices.len());
            }
            ColumnView {
                rows_total: self.rows,
                columns,
                offsets,
                row_indices,
                values,
            }
        }
    }

    /// Writes the `rows cols nnz` header followed by one `row col value` line
    /// per stored entry, row-major.
    pub fn write_triplets<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{} {} {}", self.rows, self.cols, self.nnz())?;
        for (r, c, v) in self.iter_triplets() {
            writeln!(w, "{r} {c} {v}")?;
        }
        w.flush()
    }

    pub fn read_triplets<R: BufRead>(reader: R) -> Result<Self> {
        let mut lines = reader.lines().enumerate();
        let parse_err = |line: usize, msg: String| Error::Parse {
            line: line as u64 + 1,
            msg,
        };
        let (_, header) = lines
            .next()
            .ok_or_else(|| parse_err(0, "missing 'rows cols nnz' header".into()))?;
        let header = header.map_err(|e| Error::io("<triplets>", e))?;
        let dims: Vec<usize> = header
            .split_whitespace()
            .map(|t| t.parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| parse_err(0, format!("bad header: {e}")))?;
        let [rows, cols, nnz] = dims[..] else {
            return Err(parse_err(0, "header must be 'rows cols nnz'".into()));
        };
        let mut triplets = Vec::with_capacity(nnz);
        for (i, line) in lines {
            let line = line.map_err(|e| Error::io("<triplets>", e))?;
            if line.trim().is_empty() {
                continue;
            }
            let mut it = line.split_whitespace();
            let (Some(r), Some(c), Some(v), None) = (it.next(), it.next(), it.next(), it.next()) else {
                return Err(parse_err(i, "expected 'row col value'".into()));
            };
            let r: usize = r.parse().map_err(|e| parse_err(i, format!("row: {e}")))?;
            let c: usize = c.parse().map_err(|e| parse_err(i, format!("col: {e}")))?;
            let v: f64 = v.parse().map_err(|e| parse_err(i, format!("value: {e}")))?;
            if c >= cols {
                return Err(parse_err(i, format!("column {c} out of range for {cols} columns")));
            }
            triplets.push((r, c, v));
        }
        if triplets.len() != nnz {
            return Err(Error::Parse {
                line: 1,
                msg: format!("header declares {nnz} entries, found {}", triplets.len()),
            });
        }
        Self::from_triplets(rows, cols, &triplets)
    }
}

/// Column-compressed copy of a [`SparseMatrix`] holding only occupied
/// columns, so that very wide k-mer spaces stay cheap.
#[derive(Debug, Clone)]
pub struct ColumnView {
    rows_total: usize,
    columns: Vec<usize>,
    offsets: Vec<usize>,
    row_indices: Vec<usize>,
    values: Vec<f64>,
}

impl ColumnView {
    pub fn n_rows(&self) -> usize {
        self.rows_total
    }

    /// Original indices of the occupied columns, ascending.
    pub fn columns(&self) -> &[usize] {
        &self.columns
    }

    /// Row indices and values of the `slot`-th occupied column.
    pub fn column(&self, slot: usize) -> (&[usize], &[f64]) {
        let (lo, hi) = (self.offsets[slot], self.offsets[slot + 1]);
        (&self.row_indices[lo..hi], &self.values[lo..hi])
    }
}
