//! Covariate basis expansions: graded monomials and tensor-product
//! probabilists' Hermite polynomials.
//!
//! Multi-indices are enumerated by increasing total degree and, within a
//! degree, in descending lexicographic order: for four variables the degree-2
//! block starts `(2,0,0,0), (1,1,0,0), (1,0,1,0), ...`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

use crate::data::Covariates;
use crate::error::{RdError, Result};

/// Upper bound on the number of generated features.
pub const MAX_FEATURES: usize = 2000;

/// Multi-indices over `d` variables with total degree exactly `degree`.
pub fn multi_indices_of_degree(d: usize, degree: usize) -> Vec<Vec<usize>> {
    fn rec(d: usize, left: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if prefix.len() + 1 == d {
            prefix.push(left);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for k in (0..=left).rev() {
            prefix.push(k);
            rec(d, left - k, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if d == 0 {
        return out;
    }
    rec(d, degree, &mut Vec::with_capacity(d), &mut out);
    out
}

/// The first `count` nonconstant multi-indices in graded order.
pub fn graded_multi_indices(d: usize, count: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::with_capacity(count);
    if d == 0 {
        return out;
    }
    let mut degree = 1;
    while out.len() < count {
        for idx in multi_indices_of_degree(d, degree) {
            if out.len() == count {
                break;
            }
            out.push(idx);
        }
        degree += 1;
    }
    out
}

/// `He_0(z), ..., He_kmax(z)` via `He_{k+1} = z He_k - k He_{k-1}`.
pub fn hermite_values(z: f64, kmax: usize) -> Vec<f64> {
    let mut h = vec![1.0; kmax + 1];
    if kmax >= 1 {
        h[1] = z;
    }
    for k in 1..kmax {
        h[k + 1] = z * h[k] - k as f64 * h[k - 1];
    }
    h
}

/// Feature map applied to each covariate row before fitting.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum Expansion {
    #[default]
    Identity,
    /// All monomials of total degree `1..=degree`.
    Polynomial(usize),
    /// The first `terms` tensor Hermite products.
    Hermite(usize),
}

/// A prepared expansion (multi-indices computed once).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    kind: Expansion,
    d_in: usize,
    indices: Vec<Vec<usize>>,
    max_degree: usize,
}

impl FeatureMap {
    pub fn new(kind: &Expansion, d_in: usize) -> Result<Self> {
        let indices = match *kind {
            Expansion::Identity => Vec::new(),
            Expansion::Polynomial(deg) => {
                let mut all = Vec::new();
                for k in 1..=deg {
                    all.extend(multi_indices_of_degree(d_in, k));
                    if all.len() > MAX_FEATURES {
                        break;
                    }
                }
                all
            }
            Expansion::Hermite(terms) => {
                if terms > MAX_FEATURES {
                    return Err(RdError::InvalidArgument(format!(
                        "{terms} Hermite terms exceeds the limit of {MAX_FEATURES}"
                    )));
                }
                graded_multi_indices(d_in, terms)
            }
        };
        if indices.len() > MAX_FEATURES {
            return Err(RdError::InvalidArgument(format!(
                "expansion of {d_in} covariates produces more than {MAX_FEATURES} features"
            )));
        }
        let max_degree = indices
            .iter()
            .flat_map(|m| m.iter().copied())
            .max()
            .unwrap_or(0);
        Ok(FeatureMap {
            kind: kind.clone(),
            d_in,
            indices,
            max_degree,
        })
    }

    pub fn output_dim(&self) -> usize {
        match self.kind {
            Expansion::Identity => self.d_in,
            _ => self.indices.len(),
        }
    }

    pub fn is_identity(&self) -> bool {
        self.kind == Expansion::Identity
    }

    pub fn apply_row(&self, z: &[f64], out: &mut [f64]) {
        match self.kind {
            Expansion::Identity => out.copy_from_slice(z),
            Expansion::Polynomial(_) => {
                for (o, idx) in out.iter_mut().zip(&self.indices) {
                    *o = idx.iter().zip(z).map(|(&k, &v)| v.powi(k as i32)).product();
                }
            }
            Expansion::Hermite(_) => {
                let table: Vec<Vec<f64>> = z
                    .iter()
                    .map(|&v| hermite_values(v, self.max_degree))
                    .collect();
                for (o, idx) in out.iter_mut().zip(&self.indices) {
                    *o = idx.iter().zip(&table).map(|(&k, h)| h[k]).product();
                }
            }
        }
    }

    pub fn expand_row(&self, z: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.output_dim()];
        self.apply_row(z, &mut out);
        out
    }

    pub fn apply(&self, z: &Covariates) -> Covariates {
        z.map_rows(self.output_dim(), |row, out| self.apply_row(row, out))
    }
}
