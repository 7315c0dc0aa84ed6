//! Thick-restart Lanczos with full reorthogonalization for the largest
//! algebraic eigenpairs of a symmetric operator.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};

pub(crate) struct Options {
    pub nev: usize,
    /// Residual tolerance relative to the largest Ritz value magnitude.
    pub tol: f64,
    /// Measure each residual against its own Ritz value instead; suits
    /// operators whose wanted values are all well away from zero.
    pub per_value: bool,
    pub max_matvecs: usize,
    pub seed: u64,
}

pub(crate) struct Eigenpairs {
    /// Descending.
    pub values: Vec<f64>,
    /// Orthonormal columns, one per value.
    pub vectors: Vec<Vec<f64>>,
}

/// Below this length vector kernels stay on one thread.
const PAR_MIN: usize = 1 << 15;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    if a.len() < PAR_MIN {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    } else {
        a.par_iter().with_min_len(PAR_MIN / 4).zip(b).map(|(x, y)| x * y).sum()
    }
}

/// `y += c·x`
fn axpy(c: f64, x: &[f64], y: &mut [f64]) {
    if y.len() < PAR_MIN {
        y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += c * xi);
    } else {
        y.par_iter_mut().with_min_len(PAR_MIN / 4).zip(x).for_each(|(yi, xi)| *yi += c * xi);
    }
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Removes the span of `basis` from `w` twice; returns the coefficients.
fn orthogonalize(basis: &[Vec<f64>], w: &mut [f64]) -> Vec<f64> {
    let mut total = vec![0.0; basis.len()];
    for _ in 0..2 {
        let c: Vec<f64> = basis.iter().map(|v| dot(v, w)).collect();
        for (v, ci) in basis.iter().zip(&c) {
            axpy(-ci, v, w);
        }
        for (t, ci) in total.iter_mut().zip(&c) {
            *t += ci;
        }
    }
    total
}

/// Fresh unit vector orthogonal to `basis`, or `None` if the basis already
/// spans the space.
fn random_orthogonal(basis: &[Vec<f64>], n: usize, rng: &mut ChaCha8Rng) -> Option<Vec<f64>> {
    for _ in 0..5 {
        let mut w: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
        orthogonalize(basis, &mut w);
        let nw = norm(&w);
        if nw > 1e-8 {
            w.iter_mut().for_each(|x| *x /= nw);
            return Some(w);
        }
    }
    None
}

fn combine(basis: &[Vec<f64>], coeffs: impl Iterator<Item = f64>, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n];
    for (v, c) in basis.iter().zip(coeffs) {
        if c != 0.0 {
            axpy(c, v, &mut out);
        }
    }
    out
}

pub(crate) fn largest<F>(n: usize, apply: F, opts: &Options) -> Result<Eigenpairs>
where
    F: Fn(&[f64], &mut [f64]),
{
    let nev = opts.nev;
    assert!(nev >= 1 && nev <= n);
    let m = n.min((nev + 60).max(3 * nev));
    let keep = (nev + (m - nev) / 2).min(m - 1).max(nev.min(m - 1));
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);

    let mut basis: Vec<Vec<f64>> = vec![random_orthogonal(&[], n, &mut rng).expect("n >= 1")];
    let mut t = DMatrix::<f64>::zeros(m, m);
    let mut start = 0;
    let mut matvecs = 0;
    let mut w = vec![0.0; n];

    loop {
        let mut residual: Option<Vec<f64>> = None;
        let mut residual_norm = 0.0;
        for j in start..m {
            apply(&basis[j], &mut w);
            matvecs += 1;
            let c = orthogonalize(&basis, &mut w);
            for (i, ci) in c.iter().enumerate().take(j + 1) {
                t[(i, j)] = *ci;
                t[(j, i)] = *ci;
            }
            let beta = norm(&w);
            if j + 1 == m {
                residual_norm = beta;
                if beta > 0.0 {
                    residual = Some(w.iter().map(|x| x / beta).collect());
                }
                break;
            }
            let scale = t.view((0, 0), (j + 1, j + 1)).abs().max().max(f64::MIN_POSITIVE);
            if beta > 1e-12 * scale {
                basis.push(w.iter().map(|x| x / beta).collect());
            } else {
                match random_orthogonal(&basis, n, &mut rng) {
                    Some(v) => basis.push(v),
                    None => {
                        // invariant subspace is the whole space
                        residual_norm = 0.0;
                        break;
                    }
                }
            }
        }

        let dim = basis.len();
        let eig = t.view((0, 0), (dim, dim)).clone_owned().symmetric_eigen();
        let mut order: Vec<usize> = (0..dim).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let scale = eig.eigenvalues.iter().fold(0.0_f64, |s, v| s.max(v.abs())).max(f64::MIN_POSITIVE);
        let want = nev.min(dim);
        let converged = order[..want]
            .iter()
            .all(|&c| {
                let bound = if opts.per_value { eig.eigenvalues[c].abs() } else { scale };
                (residual_norm * eig.eigenvectors[(dim - 1, c)]).abs() <= opts.tol * bound
            });

        if converged || dim < m {
            let values = order[..want].iter().map(|&c| eig.eigenvalues[c]).collect();
            let vectors = order[..want]
                .iter()
                .map(|&c| combine(&basis, eig.eigenvectors.column(c).iter().copied(), n))
                .collect();
            return Ok(Eigenpairs { values, vectors });
        }
        if matvecs >= opts.max_matvecs {
            return Err(Error::SolverFailure { iterations: matvecs });
        }

        // thick restart: top `keep` Ritz vectors plus the residual direction
        let ritz: Vec<Vec<f64>> = order[..keep]
            .iter()
            .map(|&c| combine(&basis, eig.eigenvectors.column(c).iter().copied(), n))
            .collect();
        t.fill(0.0);
        for (i, &c) in order[..keep].iter().enumerate() {
            t[(i, i)] = eig.eigenvalues[c];
        }
        basis = ritz;
        let next = match residual {
            Some(mut r) => {
                orthogonalize(&basis, &mut r);
                let nr = norm(&r);
                if nr > 1e-8 {
                    r.iter_mut().for_each(|x| *x /= nr);
                    Some(r)
                } else {
                    None
                }
            }
            None => None,
        };
        match next.or_else(|| random_orthogonal(&basis, n, &mut rng)) {
            Some(v) => basis.push(v),
            None => return Err(Error::SolverFailure { iterations: matvecs }),
        }
        start = keep;
    }
}
