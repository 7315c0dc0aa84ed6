//! Sparse Cholesky factorization of `σI − L̂` for shift-invert solves.

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::sparse::linalg::cholesky::{factorize_symbolic_cholesky, LltRef, SymbolicCholesky, SymmetricOrdering};
use faer::sparse::{SparseColMat, SymbolicSparseColMat};
use faer::{get_global_parallelism, Conj, MatMut, Side};

use crate::sparse::CsrMatrix;

/// Factors with more stored entries than this are not attempted.
const MAX_FACTOR_ENTRIES: usize = 60_000_000;

pub(crate) struct ShiftedCholesky {
    symbolic: SymbolicCholesky<u32>,
    values: Vec<f64>,
}

impl ShiftedCholesky {
    /// Factors `shift·I − a` for a symmetric `a` whose diagonal is stored.
    /// `None` when the factor would be too large or the matrix is not
    /// positive definite.
    pub(crate) fn new(a: &CsrMatrix, shift: f64) -> Option<Self> {
        let n = a.dim();
        let pattern = a.pattern();
        // lower triangle in CSC is the upper triangle of the symmetric CSR rows
        let mut col_ptr = Vec::with_capacity(n + 1);
        let mut row_idx = Vec::new();
        let mut vals = Vec::new();
        col_ptr.push(0u32);
        for j in 0..n {
            for p in pattern.row_range(j) {
                let i = pattern.cols()[p];
                if i as usize >= j {
                    row_idx.push(i);
                    let v = -a.values()[p];
                    vals.push(if i as usize == j { v + shift } else { v });
                }
            }
            col_ptr.push(u32::try_from(row_idx.len()).ok()?);
        }
        let structure = SymbolicSparseColMat::new_checked(n, n, col_ptr, None, row_idx);
        let shifted = SparseColMat::<u32, f64>::new(structure, vals);

        let symbolic = factorize_symbolic_cholesky(
            shifted.symbolic(),
            Side::Lower,
            SymmetricOrdering::Amd,
            Default::default(),
        )
        .ok()?;
        if symbolic.len_val() > MAX_FACTOR_ENTRIES {
            return None;
        }
        let par = get_global_parallelism();
        let mut values = vec![0.0; symbolic.len_val()];
        let mut mem = MemBuffer::try_new(symbolic.factorize_numeric_llt_scratch::<f64>(par, Default::default())).ok()?;
        symbolic
            .factorize_numeric_llt(
                &mut values,
                shifted.as_ref(),
                Side::Lower,
                Default::default(),
                par,
                MemStack::new(&mut mem),
                Default::default(),
            )
            .ok()?;
        Some(ShiftedCholesky { symbolic, values })
    }

    /// `y = (σI − A)⁻¹ x`
    pub(crate) fn solve(&self, x: &[f64], y: &mut [f64]) {
        let n = x.len();
        y.copy_from_slice(x);
        let par = get_global_parallelism();
        let mut mem = MemBuffer::new(self.symbolic.solve_in_place_scratch::<f64>(1, par));
        LltRef::new(&self.symbolic, &self.values).solve_in_place_with_conj(
            Conj::No,
            MatMut::from_column_major_slice_mut(y, n, 1),
            par,
            MemStack::new(&mut mem),
        );
    }
}
