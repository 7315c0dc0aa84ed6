//! Eigenpairs of the generator closest to zero, `√N` normalization and
//! alignment against reference eigenfunctions.

use std::io::Write;
use std::ops::Range;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::factor::ShiftedCholesky;
use crate::kernel::GeneratorMatrices;
use crate::lanczos;
use crate::pointcloud::{fmt_f64, Coords};
use crate::sparse::CsrMatrix;

/// Residual tolerance of the eigensolver, relative to the spectral scale.
pub const SOLVER_TOL: f64 = 1e-10;

/// Shift `σ` of the shift-invert solve. Any `σ > 0` keeps `σI − L̂`
/// positive definite.
pub const SHIFT: f64 = 1.0;

#[derive(Clone, Debug)]
pub struct Spectrum {
    /// Descending, so index 0 is the eigenvalue closest to zero.
    pub eigenvalues: Vec<f64>,
    /// Columns `U = S⁻¹Û`, eigenvectors of the non-symmetric generator.
    pub eigenvectors: DMatrix<f64>,
    /// Orthonormal eigenvectors `Û` of the symmetric conjugate.
    pub conjugate_basis: DMatrix<f64>,
    /// Whether the columns of `eigenvectors` have norm `√N`.
    pub scaled: bool,
}

impl Spectrum {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// Eigenvector `c` as a plain vector.
    pub fn vector(&self, c: usize) -> Vec<f64> {
        self.eigenvectors.column(c).iter().copied().collect()
    }

    /// First row holds the eigenvalues, then one row per point. With
    /// `latent`, its columns are prepended (left empty in the first row).
    pub fn write_csv<W: Write>(&self, latent: Option<&Coords>, mut out: W) -> Result<()> {
        let lat_cols = latent.map_or(0, |l| l.ncols());
        let mut header: Vec<String> = (0..lat_cols).map(|j| format!("z{}", j + 1)).collect();
        if lat_cols == 1 {
            header[0] = "theta".into();
        } else if lat_cols == 2 {
            header = vec!["theta".into(), "phi".into()];
        }
        header.extend((0..self.len()).map(|c| format!("phi{c}")));
        writeln!(out, "{}", header.join(","))?;
        let mut first: Vec<String> = vec![String::new(); lat_cols];
        first.extend(self.eigenvalues.iter().map(|v| fmt_f64(*v)));
        writeln!(out, "{}", first.join(","))?;
        for i in 0..self.eigenvectors.nrows() {
            let mut row: Vec<String> = Vec::with_capacity(lat_cols + self.len());
            if let Some(l) = latent {
                row.extend(l.row(i).iter().map(|v| fmt_f64(*v)));
            }
            row.extend(self.eigenvectors.row(i).iter().map(|v| fmt_f64(*v)));
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Sizes of the connected components of the graph of positive entries,
/// ordered by smallest member index.
pub fn connected_components(matrix: &CsrMatrix) -> Vec<usize> {
    let n = matrix.dim();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for i in 0..n {
        for (j, v) in matrix.row(i) {
            if v > 0.0 && j != i {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut sizes = vec![0usize; n];
    for i in 0..n {
        let r = find(&mut parent, i);
        sizes[r] += 1;
    }
    sizes.into_iter().filter(|&s| s > 0).collect()
}

/// The `m` eigenpairs of `L̂` with the largest eigenvalues, mapped back
/// through `S⁻¹`. The result is unscaled; see [`scale_sqrt_n`].
pub fn eigs_near_zero(gm: &GeneratorMatrices, m: usize) -> Result<Spectrum> {
    let n = gm.dim();
    if m == 0 || m >= n {
        return Err(Error::InvalidInput(format!("need 1 <= M < N, got M = {m}, N = {n}")));
    }
    let components = connected_components(&gm.k_alpha);
    if components.len() > 1 {
        return Err(Error::DisconnectedGraph {
            component_sizes: components,
        });
    }
    let pairs = match ShiftedCholesky::new(&gm.l_hat, SHIFT) {
        Some(factor) => shift_invert(gm, &factor, m)?,
        None => {
            let opts = lanczos::Options {
                nev: m,
                tol: SOLVER_TOL,
                max_matvecs: max_matvecs(n, m),
                seed: 0x5eed,
                per_value: false,
            };
            lanczos::largest(n, |x, y| gm.l_hat.matvec(x, y), &opts)?
        }
    };
    let conjugate_basis = DMatrix::from_fn(n, m, |i, c| pairs.vectors[c][i]);
    let eigenvectors = DMatrix::from_fn(n, m, |i, c| pairs.vectors[c][i] / gm.s[i]);
    Ok(Spectrum {
        eigenvalues: pairs.values,
        eigenvectors,
        conjugate_basis,
        scaled: false,
    })
}

fn max_matvecs(n: usize, m: usize) -> usize {
    ((10.0 * m as f64 * (n as f64).sqrt()).ceil() as usize).max(20 * (m + 60))
}

/// Lanczos on `(σI − L̂)⁻¹`, whose largest eigenvalues `1/(σ − λ)` belong to
/// the `λ` closest to zero. Eigenvalues are then read off as Rayleigh
/// quotients of `L̂`.
fn shift_invert(gm: &GeneratorMatrices, factor: &ShiftedCholesky, m: usize) -> Result<lanczos::Eigenpairs> {
    let n = gm.dim();
    let opts = lanczos::Options {
        nev: m,
        tol: SOLVER_TOL,
        max_matvecs: max_matvecs(n, m),
        seed: 0x5eed,
        per_value: true,
    };
    let pairs = lanczos::largest(n, |x, y| factor.solve(x, y), &opts)?;
    let mut lu = vec![0.0; n];
    let mut ranked: Vec<(f64, Vec<f64>)> = pairs
        .vectors
        .into_iter()
        .map(|u| {
            gm.l_hat.matvec(&u, &mut lu);
            let q = u.iter().zip(&lu).map(|(a, b)| a * b).sum::<f64>() / u.iter().map(|a| a * a).sum::<f64>();
            (q, u)
        })
        .collect();
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0));
    let (values, vectors) = ranked.into_iter().unzip();
    Ok(lanczos::Eigenpairs { values, vectors })
}

/// Rescales every eigenvector to norm `√N`, with its largest-magnitude
/// entry positive.
pub fn scale_sqrt_n(mut spectrum: Spectrum) -> Result<Spectrum> {
    let n = spectrum.eigenvectors.nrows();
    let target = (n as f64).sqrt();
    for c in 0..spectrum.eigenvectors.ncols() {
        let mut col = spectrum.eigenvectors.column_mut(c);
        let norm = col.norm();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::DegenerateEigenvector(c));
        }
        let peak = col.iter().fold(0.0_f64, |p, v| if v.abs() > p.abs() { *v } else { p });
        let factor = target / norm * peak.signum();
        col.iter_mut().for_each(|v| *v *= factor);
    }
    spectrum.scaled = true;
    Ok(spectrum)
}

/// Orthogonal Procrustes: the orthogonal `Q` minimizing
/// `‖estimated·Q − reference‖`, and `estimated·Q`.
pub fn align_orthogonal(
    estimated: &DMatrix<f64>,
    reference: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if estimated.shape() != reference.shape() || estimated.ncols() == 0 {
        return Err(Error::InvalidInput(format!(
            "alignment shapes differ or are empty: {:?} vs {:?}",
            estimated.shape(),
            reference.shape()
        )));
    }
    let cross = estimated.transpose() * reference;
    let svd = cross.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smax > 0.0) || smin < 1e-12 * smax {
        return Err(Error::AlignmentAmbiguous);
    }
    let q = svd.u.expect("requested") * svd.v_t.expect("requested");
    let aligned = estimated * &q;
    Ok((q, aligned))
}

/// Least-squares linear map from eigenvector coordinates to targets.
#[derive(Clone, Debug)]
pub struct LinearFit {
    /// `r × s` minimum-norm minimizer of `‖estimated·B − targets‖`.
    pub map: DMatrix<f64>,
    /// Ratio of extreme singular values of `estimated`; infinite when
    /// rank deficient.
    pub condition: f64,
    /// `estimated·B`.
    pub fitted: DMatrix<f64>,
}

pub fn least_squares_map(estimated: &DMatrix<f64>, targets: &DMatrix<f64>) -> Result<LinearFit> {
    let (n, r) = estimated.shape();
    if targets.nrows() != n || n < r || r == 0 {
        return Err(Error::InvalidInput(format!(
            "least squares needs matching rows and N >= r, got {:?} and {:?}",
            estimated.shape(),
            targets.shape()
        )));
    }
    let svd = estimated.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let cutoff = smax * 1e-13 * n.max(r) as f64;
    let map = svd
        .solve(targets, cutoff)
        .map_err(|e| Error::InvalidInput(e.to_string()))?;
    let condition = if smin > cutoff { smax / smin } else { f64::INFINITY };
    let fitted = estimated * &map;
    Ok(LinearFit {
        map,
        condition,
        fitted,
    })
}

/// Mean squared difference, optionally over a subset of indices.
pub fn mse(a: &[f64], b: &[f64], mask: Option<&[usize]>) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::InvalidInput(format!("length mismatch {} vs {}", a.len(), b.len())));
    }
    let sq = |i: usize| (a[i] - b[i]).powi(2);
    match mask {
        None if a.is_empty() => Err(Error::EmptyMask),
        None => Ok((0..a.len()).map(sq).sum::<f64>() / a.len() as f64),
        Some([]) => Err(Error::EmptyMask),
        Some(idx) => Ok(idx.iter().map(|&i| sq(i)).sum::<f64>() / idx.len() as f64),
    }
}

/// Groups consecutive eigenvalues whose relative gap is below `rel`.
pub fn group_repeated(eigenvalues: &[f64], rel: f64) -> Vec<Range<usize>> {
    let mut groups = Vec::new();
    let mut start = 0;
    for i in 1..=eigenvalues.len() {
        let split = i == eigenvalues.len() || {
            let (a, b) = (eigenvalues[i - 1], eigenvalues[i]);
            (a - b).abs() > rel * a.abs().max(b.abs())
        };
        if split {
            groups.push(start..i);
            start = i;
        }
    }
    groups
}

/// Columns `cols` of a matrix as a new matrix.
pub fn columns(m: &DMatrix<f64>, cols: Range<usize>) -> DMatrix<f64> {
    m.columns(cols.start, cols.len()).clone_owned()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neighbors::{knn, symmetrized_support, SymmetricSupport};
    use crate::pointcloud::{gen_circle_grid, gen_gaussian_random, PointCloud};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(r: usize, c: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(r, c, |_, _| rng.random::<f64>() - 0.5)
    }

    fn small_generator(n: usize) -> (PointCloud, GeneratorMatrices) {
        let c = gen_gaussian_random(n, &DMatrix::identity(2, 2), 11).unwrap();
        let rho: Vec<f64> = (0..n).map(|i| 0.8 + 0.4 * (i as f64 / n as f64)).collect();
        let gm = GeneratorMatrices::build(&c, &rho, 0.1, 0.2, 2, &SymmetricSupport::full(n)).unwrap();
        (c, gm)
    }

    #[test]
    fn dense_oracle() {
        let (_, gm) = small_generator(100);
        let sp = eigs_near_zero(&gm, 6).unwrap();
        let dense = gm.l_hat.to_dense().symmetric_eigen();
        let mut order: Vec<usize> = (0..100).collect();
        order.sort_by(|&a, &b| dense.eigenvalues[b].total_cmp(&dense.eigenvalues[a]));
        for c in 0..6 {
            let k = order[c];
            assert!((sp.eigenvalues[c] - dense.eigenvalues[k]).abs() < 1e-10);
            let a = sp.conjugate_basis.column(c);
            let b = dense.eigenvectors.column(k);
            let sign = a.dot(&b).signum();
            assert!((a - b * sign).amax() < 1e-8);
        }
        assert!(sp.eigenvalues[0].abs() < 1e-8);
        let u0 = sp.vector(0);
        let mean = u0.iter().sum::<f64>() / 100.0;
        assert!(u0.iter().all(|v| ((v - mean) / mean).abs() < 1e-6));
    }

    #[test]
    fn conjugation_residual() {
        let (_, gm) = small_generator(150);
        let sp = scale_sqrt_n(eigs_near_zero(&gm, 5).unwrap()).unwrap();
        let l = gm.dense_l();
        let lam = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(sp.eigenvalues.clone()));
        let res = (&l * &sp.eigenvectors - &sp.eigenvectors * lam).norm();
        assert!(res < 1e-8 * l.norm() * (150f64).sqrt());
        for c in 0..5 {
            assert!((sp.eigenvectors.column(c).norm() - (150f64).sqrt()).abs() < 1e-10);
        }
        assert!(sp.eigenvectors.column(0).iter().all(|v| (v - 1.0).abs() < 1e-6));
    }

    #[test]
    fn disconnected_support() {
        let mut rows = Vec::new();
        for i in 0..10 {
            rows.push(vec![i as f64 * 0.1, 0.0]);
            rows.push(vec![100.0 + i as f64 * 0.1, 0.0]);
        }
        let c = PointCloud::new(Coords::from_rows(&rows).unwrap(), None, Some(1), "two").unwrap();
        let s = symmetrized_support(&knn(&c, 4).unwrap());
        let gm = GeneratorMatrices::build(&c, &vec![1.0; 20], 0.1, 0.0, 1, &s).unwrap();
        match eigs_near_zero(&gm, 3) {
            Err(Error::DisconnectedGraph { component_sizes }) => assert_eq!(component_sizes, vec![10, 10]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn uniform_circle_spectrum() {
        let c = gen_circle_grid(400).unwrap();
        let s = symmetrized_support(&knn(&c, 60).unwrap());
        let gm = GeneratorMatrices::build(&c, &vec![1.0; 400], 0.005, 1.0, 1, &s).unwrap();
        let sp = eigs_near_zero(&gm, 5).unwrap();
        for (k, want) in [(1, -1.0), (2, -1.0), (3, -4.0), (4, -4.0)] {
            assert!((sp.eigenvalues[k] - want).abs() < 0.05 * want.abs(), "{:?}", sp.eigenvalues);
        }
    }

    #[test]
    fn scaling_rules() {
        let n = 16;
        let mk = |m: DMatrix<f64>| Spectrum {
            eigenvalues: vec![0.0; m.ncols()],
            conjugate_basis: m.clone(),
            eigenvectors: m,
            scaled: false,
        };
        let s = scale_sqrt_n(mk(DMatrix::from_element(n, 1, -0.3))).unwrap();
        assert!(s.eigenvectors.iter().all(|v| *v == 1.0));
        let r = random_matrix(n, 2, 4);
        let a = scale_sqrt_n(mk(r.clone())).unwrap();
        let b = scale_sqrt_n(mk(&r * 2.0)).unwrap();
        assert_eq!(a.eigenvectors, b.eigenvectors);
        assert!((a.eigenvectors.column(1).norm() - 4.0).abs() < 1e-12);
        assert!(matches!(
            scale_sqrt_n(mk(DMatrix::zeros(n, 1))),
            Err(Error::DegenerateEigenvector(0))
        ));
    }

    #[test]
    fn procrustes() {
        let r = random_matrix(50, 3, 5);
        let (q, _) = align_orthogonal(&r, &r).unwrap();
        assert!((q - DMatrix::identity(3, 3)).amax() < 1e-12);
        let v = random_matrix(20, 1, 6);
        let (q, _) = align_orthogonal(&(-&v), &v).unwrap();
        assert!((q[(0, 0)] + 1.0).abs() < 1e-12);
        // random rotation
        let rot = random_matrix(3, 3, 7).qr().q();
        let est = &r * rot.transpose();
        let (q, aligned) = align_orthogonal(&est, &r).unwrap();
        assert!((&aligned - &r).amax() < 1e-8);
        assert!((q.transpose() * &q - DMatrix::identity(3, 3)).amax() < 1e-12);
        let before = mse(est.as_slice(), r.as_slice(), None).unwrap();
        let after = mse(aligned.as_slice(), r.as_slice(), None).unwrap();
        assert!(after <= before);
        assert!(matches!(
            align_orthogonal(&DMatrix::zeros(5, 2), &random_matrix(5, 2, 1)),
            Err(Error::AlignmentAmbiguous)
        ));
    }

    #[test]
    fn least_squares() {
        let e = random_matrix(40, 3, 8);
        let fit = least_squares_map(&e, &e).unwrap();
        assert!((&fit.map - DMatrix::identity(3, 3)).amax() < 1e-12);
        let fit2 = least_squares_map(&e, &(&e * 2.0)).unwrap();
        assert!((&fit2.map - DMatrix::identity(3, 3) * 2.0).amax() < 1e-12);
        let t = random_matrix(40, 2, 9);
        let fit3 = least_squares_map(&e, &t).unwrap();
        let normal = (e.transpose() * &e).cholesky().unwrap().solve(&(e.transpose() * &t));
        assert!((&fit3.map - normal).amax() < 1e-10);
        assert!(fit3.condition.is_finite());
        let mut deficient = e.clone();
        deficient.set_column(2, &e.column(0).clone_owned());
        assert!(least_squares_map(&deficient, &t).unwrap().condition.is_infinite());
    }

    #[test]
    fn mse_cases() {
        assert_eq!(mse(&[1.0, 2.0], &[1.0, 2.0], None).unwrap(), 0.0);
        assert_eq!(mse(&[1.0, 1.0], &[0.0, 0.0], None).unwrap(), 1.0);
        assert_eq!(mse(&[1.0, 3.0], &[0.0, 0.0], Some(&[1])).unwrap(), 9.0);
        assert!(matches!(mse(&[1.0], &[0.0], Some(&[])), Err(Error::EmptyMask)));
    }

    #[test]
    fn grouping() {
        let g = group_repeated(&[0.0, -1.0, -1.005, -4.0, -4.01, -4.02, -9.0], 1e-2);
        assert_eq!(g, vec![0..1, 1..3, 3..6, 6..7]);
    }

    #[test]
    fn csv_layout() {
        let sp = Spectrum {
            eigenvalues: vec![0.0, -1.0],
            eigenvectors: DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]),
            conjugate_basis: DMatrix::zeros(2, 2),
            scaled: true,
        };
        let lat = Coords::from_rows(&[vec![0.5], vec![1.5]]).unwrap();
        let mut buf = Vec::new();
        sp.write_csv(Some(&lat), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[0], "theta,phi0,phi1");
        assert!(lines[1].starts_with(','));
    }
}
