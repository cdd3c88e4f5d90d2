//! Point-cloud storage.
//!
//! Coordinates are held row-major in `f64` whatever precision they were
//! stored with on disk, so every distance and spectrum downstream is
//! accumulated in double precision.

use std::collections::HashSet;

use nalgebra::DMatrix;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// `N` points in `R^D`.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    n: usize,
    dim: usize,
    data: Vec<f64>,
    ids: Vec<u64>,
}

impl PointCloud {
    /// Builds a cloud from row-major coordinates with default ids `0..N`.
    pub fn new(n: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        Self::with_ids(n, dim, data, (0..n as u64).collect())
    }

    pub fn with_ids(n: usize, dim: usize, data: Vec<f64>, ids: Vec<u64>) -> Result<Self> {
        if n == 0 || dim == 0 {
            return Err(Error::Input(format!(
                "point cloud must have N >= 1 and D >= 1 (got N={n}, D={dim})"
            )));
        }
        if data.len() != n * dim {
            return Err(Error::Input(format!(
                "expected {} coordinates for N={n}, D={dim}, got {}",
                n * dim,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Input(format!(
                "non-finite coordinate at point {}, dimension {}",
                pos / dim,
                pos % dim
            )));
        }
        if ids.len() != n {
            return Err(Error::Input(format!("expected {n} point ids, got {}", ids.len())));
        }
        let mut seen = HashSet::with_capacity(n);
        if let Some(dup) = ids.iter().find(|id| !seen.insert(**id)) {
            return Err(Error::Input(format!("duplicate point id {dup}")));
        }
        Ok(PointCloud { n, dim, data, ids })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let dim = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut data = Vec::with_capacity(rows.len() * dim);
        for (i, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != dim {
                return Err(Error::Input(format!(
                    "row {i} has {} values, expected {dim}",
                    row.len()
                )));
            }
            data.extend_from_slice(row);
        }
        Self::new(rows.len(), dim, data)
    }

    pub fn from_matrix(m: &DMatrix<f64>) -> Result<Self> {
        let (n, dim) = m.shape();
        let mut data = Vec::with_capacity(n * dim);
        for i in 0..n {
            data.extend(m.row(i).iter());
        }
        Self::new(n, dim, data)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl ExactSizeIterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn distance(&self, a: usize, b: usize) -> f64 {
        euclidean(self.point(a), self.point(b))
    }

    /// Distances from point `from` to every point, in index order.
    pub fn distances_from(&self, from: usize) -> Vec<f64> {
        let x = self.point(from);
        self.points().map(|p| euclidean(x, p)).collect()
    }

    /// Rows `idx` as an `|idx| x D` matrix.
    pub fn select(&self, idx: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(idx.len(), self.dim, |r, c| self.data[idx[r] * self.dim + c])
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n, self.dim, &self.data)
    }

    /// Hex SHA-256 over N, D and the little-endian `f64` coordinates.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.n as u64).to_le_bytes());
        h.update((self.dim as u64).to_le_bytes());
        for v in &self.data {
            h.update(v.to_le_bytes());
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    pub(crate) fn check_index(&self, i: usize) -> Result<()> {
        if i < self.n {
            Ok(())
        } else {
            Err(Error::Input(format!(
                "point index {i} out of range for cloud of {} points",
                self.n
            )))
        }
    }
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

pub fn norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
