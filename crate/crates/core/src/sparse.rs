//! Sparse symmetric matrices sharing one CSR pattern.

use std::io::Write;
use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::Result;
use crate::neighbors::Pattern;
use crate::pointcloud::fmt_f64;

#[derive(Clone, Debug)]
pub struct CsrMatrix {
    pattern: Arc<Pattern>,
    vals: Vec<f64>,
}

impl CsrMatrix {
    pub fn new(pattern: Arc<Pattern>, vals: Vec<f64>) -> Self {
        assert_eq!(pattern.nnz(), vals.len(), "value count must match the pattern");
        CsrMatrix { pattern, vals }
    }

    pub fn dim(&self) -> usize {
        self.pattern.dim()
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn pattern(&self) -> &Pattern {
        &self.pattern
    }

    pub fn shared_pattern(&self) -> Arc<Pattern> {
        self.pattern.clone()
    }

    pub fn values(&self) -> &[f64] {
        &self.vals
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.pattern.find(i, j).map_or(0.0, |p| self.vals[p])
    }

    /// Iterator over `(column, value)` of row `i`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.pattern.row_range(i);
        self.pattern.cols()[r.clone()]
            .iter()
            .zip(&self.vals[r])
            .map(|(&j, &v)| (j as usize, v))
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.dim())
            .into_par_iter()
            .map(|i| self.row(i).map(|(_, v)| v).sum())
            .collect()
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        let cols = self.pattern.cols();
        y.par_iter_mut().with_min_len(512).enumerate().for_each(|(i, yi)| {
            let r = self.pattern.row_range(i);
            let mut acc = 0.0;
            for p in r {
                acc += self.vals[p] * x[cols[p] as usize];
            }
            *yi = acc;
        });
    }

    /// Same matrix with stored exact zeros removed; the diagonal is kept.
    pub fn without_zeros(&self) -> CsrMatrix {
        let keep: Vec<bool> = (0..self.dim())
            .flat_map(|i| self.pattern.row_range(i).map(move |p| (i, p)))
            .map(|(i, p)| self.vals[p] != 0.0 || self.pattern.cols()[p] as usize == i)
            .collect();
        if keep.iter().all(|&k| k) {
            return self.clone();
        }
        let vals = self.vals.iter().zip(&keep).filter(|(_, &k)| k).map(|(v, _)| *v).collect();
        CsrMatrix::new(Arc::new(self.pattern.filter(&keep)), vals)
    }

    /// New matrix with entries `f(i, j, a_ij)` on the same pattern.
    pub fn map_entries<F>(&self, f: F) -> CsrMatrix
    where
        F: Fn(usize, usize, f64) -> f64 + Sync,
    {
        let cols = self.pattern.cols();
        let mut vals = vec![0.0; self.nnz()];
        let chunks = split_rows(&self.pattern, &mut vals);
        chunks.into_par_iter().for_each(|(i, out)| {
            let start = self.pattern.row_range(i).start;
            for (k, o) in out.iter_mut().enumerate() {
                let p = start + k;
                *o = f(i, cols[p] as usize, self.vals[p]);
            }
        });
        CsrMatrix {
            pattern: self.pattern.clone(),
            vals,
        }
    }

    /// Largest `|a_ij − a_ji|` divided by the largest `|a_ij|`.
    pub fn relative_asymmetry(&self) -> f64 {
        let cols = self.pattern.cols();
        let scale = self.vals.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if scale == 0.0 {
            return 0.0;
        }
        let worst = (0..self.dim())
            .into_par_iter()
            .map(|i| {
                let mut w = 0.0_f64;
                for p in self.pattern.row_range(i) {
                    let j = cols[p] as usize;
                    w = w.max((self.vals[p] - self.get(j, i)).abs());
                }
                w
            })
            .reduce(|| 0.0, f64::max);
        worst / scale
    }

    /// Frobenius norm, used as the scale of `‖A‖`.
    pub fn frobenius_norm(&self) -> f64 {
        self.vals.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            for (j, v) in self.row(i) {
                m[(i, j)] = v;
            }
        }
        m
    }

    /// Coordinate triples `i,j,value`.
    pub fn write_triplets<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "i,j,value")?;
        for i in 0..self.dim() {
            for (j, v) in self.row(i) {
                writeln!(out, "{i},{j},{}", fmt_f64(v))?;
            }
        }
        Ok(())
    }
}

/// Splits a value buffer into per-row mutable slices.
pub(crate) fn split_rows<'a>(pattern: &Pattern, vals: &'a mut [f64]) -> Vec<(usize, &'a mut [f64])> {
    let mut out = Vec::with_capacity(pattern.dim());
    let mut rest = vals;
    for i in 0..pattern.dim() {
        let len = pattern.row_range(i).len();
        let (head, tail) = rest.split_at_mut(len);
        out.push((i, head));
        rest = tail;
    }
    out
}
