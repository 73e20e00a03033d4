//! Data-matrix storage, file I/O, and per-column summaries.
//!
//! A [`DataMatrix`] is an `n × p` array of finite doubles, rows = samples,
//! columns = variables, stored row-major. All reductions over rows use a
//! fixed blocked order (blocks of [`BLOCK_ROWS`] rows, block partials
//! combined pairwise), so results do not depend on how work is scheduled.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Row-block length for all blocked reductions.
pub const BLOCK_ROWS: usize = 4096;

/// Relative threshold for declaring a column degenerate:
/// `css ≤ EPS · n · max(1, mean²)`.
pub const DEGENERACY_EPS: f64 = 1e-12;

/// Magic bytes of the binary matrix container.
pub const BINARY_MAGIC: &[u8; 4] = b"CMX1";

/// An `n × p` matrix of finite observations, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    n: usize,
    p: usize,
    data: Vec<f64>,
}

/// Mean, centered sum of squares, and degeneracy flag of one column.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct ColumnSummary {
    pub mean: f64,
    /// `Σ_k (X[k][i] − mean)²`, never negative.
    pub css: f64,
    pub degenerate: bool,
}

impl DataMatrix {
    /// Build from a flat row-major buffer. Requires `n ≥ 2`, `p ≥ 2`,
    /// `data.len() == n·p`, and every entry finite.
    pub fn from_vec(n: usize, p: usize, data: Vec<f64>) -> Result<Self> {
        if n < 2 || p < 2 {
            return Err(Error::Shape(format!(
                "need at least 2 rows and 2 columns, got {n}×{p}"
            )));
        }
        if data.len() != n * p {
            return Err(Error::Shape(format!(
                "buffer holds {} values, expected {}×{} = {}",
                data.len(),
                n,
                p,
                n * p
            )));
        }
        for (idx, v) in data.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    row: idx / p + 1,
                    col: idx % p + 1,
                });
            }
        }
        Ok(Self { n, p, data })
    }

    /// Build from per-row vectors (convenience for tests and small inputs).
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        let p = rows.first().map_or(0, Vec::len);
        for (k, r) in rows.iter().enumerate() {
            if r.len() != p {
                return Err(Error::Parse {
                    row: k + 1,
                    reason: format!("expected {} fields, got {}", p, r.len()),
                });
            }
        }
        Self::from_vec(n, p, rows.into_iter().flatten().collect())
    }

    /// Number of rows (sample size).
    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of columns (dimension).
    pub fn p(&self) -> usize {
        self.p
    }

    /// Row `k` (0-based) as a slice of length `p`.
    #[inline]
    pub fn row(&self, k: usize) -> &[f64] {
        &self.data[k * self.p..(k + 1) * self.p]
    }

    /// The flat row-major buffer.
    pub fn entries(&self) -> &[f64] {
        &self.data
    }

    /// Leading `n' × p'` corner as a fresh matrix.
    pub fn leading(&self, n: usize, p: usize) -> Result<Self> {
        if n > self.n || p > self.p {
            return Err(Error::Shape(format!(
                "leading {n}×{p} exceeds {}×{}",
                self.n, self.p
            )));
        }
        let mut data = Vec::with_capacity(n * p);
        for k in 0..n {
            data.extend_from_slice(&self.row(k)[..p]);
        }
        Self::from_vec(n, p, data)
    }

    /// Parse a comma-separated file of decimal numbers. Every data row must
    /// have the same number of fields; `has_header` skips one leading row.
    pub fn load_csv<P: AsRef<Path>>(path: P, has_header: bool) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(has_header)
            .flexible(false)
            .trim(csv::Trim::All)
            .from_path(path.as_ref())
            .map_err(csv_error)?;

        let mut rows: Vec<Vec<f64>> = Vec::new();
        for record in reader.records() {
            let record = record.map_err(csv_error)?;
            let line = record.position().map_or(0, |pos| pos.line() as usize);
            let mut row = Vec::with_capacity(record.len());
            for (col, field) in record.iter().enumerate() {
                let v: f64 = field.parse().map_err(|_| Error::Parse {
                    row: line,
                    reason: format!("field {} ({field:?}) is not a number", col + 1),
                })?;
                if !v.is_finite() {
                    return Err(Error::NonFinite { row: line, col: col + 1 });
                }
                row.push(v);
            }
            rows.push(row);
        }
        if rows.is_empty() {
            return Err(Error::Shape("no data rows".into()));
        }
        Self::from_rows(rows)
    }

    /// Read the binary container written by [`DataMatrix::save_binary`].
    pub fn load_binary<P: AsRef<Path>>(path: P) -> Result<Self> {
        let bytes = fs::read(path.as_ref())?;
        if bytes.len() < 20 {
            return Err(Error::Format(format!(
                "file is {} bytes, shorter than the 20-byte header",
                bytes.len()
            )));
        }
        if &bytes[..4] != BINARY_MAGIC {
            return Err(Error::Format("bad magic, expected CMX1".into()));
        }
        let n = u64::from_le_bytes(bytes[4..12].try_into().unwrap()) as usize;
        let p = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
        let count = n
            .checked_mul(p)
            .ok_or_else(|| Error::Format("dimension overflow".into()))?;
        let expected = 20 + count * 8;
        if bytes.len() != expected {
            return Err(Error::Format(format!(
                "payload holds {} values, header declares {}×{} = {}",
                (bytes.len() - 20) / 8,
                n,
                p,
                count
            )));
        }
        let data = bytes[20..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Self::from_vec(n, p, data)
    }

    /// Write the binary container: `CMX1`, n and p as little-endian u64,
    /// then `n·p` little-endian IEEE 754 doubles, row-major.
    pub fn save_binary<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let mut bytes = Vec::with_capacity(20 + self.data.len() * 8);
        bytes.extend_from_slice(BINARY_MAGIC);
        bytes.extend_from_slice(&(self.n as u64).to_le_bytes());
        bytes.extend_from_slice(&(self.p as u64).to_le_bytes());
        for v in &self.data {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        fs::write(path.as_ref(), bytes)?;
        Ok(())
    }

    /// Per-column mean, centered sum of squares, and degeneracy flag.
    ///
    /// Two blocked passes: column sums, then centered squares; block
    /// partials are combined pairwise, so the result is identical for any
    /// worker count.
    pub fn column_summaries(&self) -> Vec<ColumnSummary> {
        let n = self.n as f64;
        let sums = self.blocked_column_reduce(|row, acc| {
            for (a, x) in acc.iter_mut().zip(row) {
                *a += x;
            }
        });
        let means: Vec<f64> = sums.iter().map(|s| s / n).collect();
        let css = self.blocked_column_reduce(|row, acc| {
            for ((a, x), m) in acc.iter_mut().zip(row).zip(&means) {
                let d = x - m;
                *a += d * d;
            }
        });
        means
            .into_iter()
            .zip(css)
            .map(|(mean, css)| ColumnSummary {
                mean,
                css,
                degenerate: is_degenerate(css, self.n, mean),
            })
            .collect()
    }

    /// One blocked pass over all rows: `fold` accumulates a row into a
    /// per-column partial; block partials are merged pairwise.
    fn blocked_column_reduce<F>(&self, fold: F) -> Vec<f64>
    where
        F: Fn(&[f64], &mut [f64]) + Sync,
    {
        let block = |range: std::ops::Range<usize>| -> Vec<f64> {
            let mut acc = vec![0.0; self.p];
            for k in range {
                fold(self.row(k), &mut acc);
            }
            acc
        };
        let ranges: Vec<_> = block_ranges(self.n).collect();
        #[cfg(feature = "parallel")]
        let partials: Vec<Vec<f64>> = ranges.into_par_iter().map(block).collect();
        #[cfg(not(feature = "parallel"))]
        let partials: Vec<Vec<f64>> = ranges.into_iter().map(block).collect();
        pairwise_merge(partials)
    }
}

/// Degeneracy rule shared by summaries and the incremental kernels.
pub(crate) fn is_degenerate(css: f64, n: usize, mean: f64) -> bool {
    css <= DEGENERACY_EPS * n as f64 * f64::max(1.0, mean * mean)
}

/// The fixed row blocking: `[0, 4096), [4096, 8192), …`.
pub(crate) fn block_ranges(n: usize) -> impl Iterator<Item = std::ops::Range<usize>> {
    (0..n.div_ceil(BLOCK_ROWS)).map(move |b| {
        let lo = b * BLOCK_ROWS;
        lo..usize::min(lo + BLOCK_ROWS, n)
    })
}

/// Combine block partials pairwise (adjacent pairs per level) until one
/// remains. The tree shape depends only on the number of blocks.
pub(crate) fn pairwise_merge(mut parts: Vec<Vec<f64>>) -> Vec<f64> {
    assert!(!parts.is_empty());
    while parts.len() > 1 {
        let mut next = Vec::with_capacity(parts.len().div_ceil(2));
        let mut it = parts.into_iter();
        while let Some(mut a) = it.next() {
            if let Some(b) = it.next() {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
            }
            next.push(a);
        }
        parts = next;
    }
    parts.pop().unwrap()
}

/// Pairwise sum of a slice of scalar block partials.
pub(crate) fn pairwise_sum(parts: &[f64]) -> f64 {
    match parts.len() {
        0 => 0.0,
        1 => parts[0],
        len => {
            let mid = len.div_ceil(2);
            pairwise_sum(&parts[..mid]) + pairwise_sum(&parts[mid..])
        }
    }
}

fn csv_error(err: csv::Error) -> Error {
    let line = match err.kind() {
        csv::ErrorKind::UnequalLengths { pos, .. } => {
            pos.as_ref().map_or(0, |p| p.line() as usize)
        }
        _ => err.position().map_or(0, |p| p.line() as usize),
    };
    let text = err.to_string();
    match err.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        _ if line > 0 => Error::Parse { row: line, reason: text },
        _ => Error::Format(text),
    }
}
