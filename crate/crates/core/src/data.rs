use alloc::format;
use alloc::vec::Vec;

use crate::error::{RdError, Result};

/// Row-major `n x d` covariate matrix. `d` may be zero.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Covariates {
    n: usize,
    d: usize,
    data: Vec<f64>,
}

impl Covariates {
    pub fn new(n: usize, d: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * d {
            return Err(RdError::InvalidArgument(format!(
                "covariate buffer has {} entries, expected {n} x {d}",
                data.len()
            )));
        }
        Ok(Covariates { n, d, data })
    }

    pub fn empty(n: usize) -> Self {
        Covariates {
            n,
            d: 0,
            data: Vec::new(),
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(rows.len() * d);
        for r in rows {
            if r.len() != d {
                return Err(RdError::InvalidArgument("ragged covariate rows".into()));
            }
            data.extend_from_slice(r);
        }
        Ok(Covariates {
            n: rows.len(),
            d,
            data,
        })
    }

    #[inline]
    pub fn nrows(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn ncols(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.data[i * self.d + j]).collect()
    }

    /// Rows `idx` in order.
    pub fn select(&self, idx: &[usize]) -> Covariates {
        let mut data = Vec::with_capacity(idx.len() * self.d);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Covariates {
            n: idx.len(),
            d: self.d,
            data,
        }
    }

    /// Applies a row transform producing `d_out` features per row.
    pub fn map_rows(&self, d_out: usize, f: impl Fn(&[f64], &mut [f64])) -> Covariates {
        let mut data = alloc::vec![0.0; self.n * d_out];
        for i in 0..self.n {
            f(self.row(i), &mut data[i * d_out..(i + 1) * d_out]);
        }
        Covariates {
            n: self.n,
            d: d_out,
            data,
        }
    }
}

/// Sharp or fuzzy RD sample with the cutoff normalized to zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub y: Vec<f64>,
    pub x: Vec<f64>,
    pub z: Covariates,
    /// Treatment indicator (fuzzy designs only), values in {0, 1}.
    pub t: Option<Vec<f64>>,
}

/// Which column of a [`Dataset`] acts as the outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Column {
    Y,
    T,
}

impl Dataset {
    pub fn new(y: Vec<f64>, x: Vec<f64>, z: Covariates, t: Option<Vec<f64>>) -> Result<Self> {
        let n = x.len();
        if n == 0 {
            return Err(RdError::InvalidArgument("empty dataset".into()));
        }
        if y.len() != n || z.nrows() != n {
            return Err(RdError::InvalidArgument(format!(
                "column lengths disagree: y={}, x={n}, z={}",
                y.len(),
                z.nrows()
            )));
        }
        if let Some(t) = &t {
            if t.len() != n {
                return Err(RdError::InvalidArgument("treatment length mismatch".into()));
            }
            if t.iter().any(|&v| v != 0.0 && v != 1.0) {
                return Err(RdError::InvalidArgument(
                    "treatment column must contain only 0 and 1".into(),
                ));
            }
        }
        if x.iter().chain(&y).any(|v| !v.is_finite()) {
            return Err(RdError::InvalidArgument(
                "non-finite value in y or x".into(),
            ));
        }
        Ok(Dataset { y, x, z, t })
    }

    /// Dataset without covariates.
    pub fn without_covariates(y: Vec<f64>, x: Vec<f64>) -> Result<Self> {
        let n = x.len();
        Dataset::new(y, x, Covariates::empty(n), None)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.x.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn column(&self, c: Column) -> Result<&[f64]> {
        match c {
            Column::Y => Ok(&self.y),
            Column::T => self.t.as_deref().ok_or(RdError::MissingTreatment),
        }
    }

    /// Subsample in the order of `idx`.
    pub fn select(&self, idx: &[usize]) -> Dataset {
        Dataset {
            y: idx.iter().map(|&i| self.y[i]).collect(),
            x: idx.iter().map(|&i| self.x[i]).collect(),
            z: self.z.select(idx),
            t: self.t.as_ref().map(|t| idx.iter().map(|&i| t[i]).collect()),
        }
    }
}
