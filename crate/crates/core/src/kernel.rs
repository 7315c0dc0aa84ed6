//! Variable-bandwidth kernel matrix and its normalization cascade.
//!
//! With `K_ij = exp(−‖xᵢ−xⱼ‖² / (4ε ρᵢ ρⱼ))` on the symmetrized support,
//!
//! ```text
//! qS_i   = Σⱼ K_ij / ρᵢ^d
//! Kα_ij  = K_ij / (qS_i^α qS_j^α)
//! D_i    = Σⱼ Kα_ij
//! L      = P⁻² (D⁻¹ Kα − I) / ε          (P = diag ρ)
//! L̂      = (S⁻¹ Kα S⁻¹ − P⁻²) / ε        (S = P D^{1/2})
//! ```
//!
//! `L̂ = S L S⁻¹` is symmetric and shares the spectrum of `L`.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::neighbors::SymmetricSupport;
use crate::pointcloud::{squared_distance, PointCloud};
use crate::sparse::CsrMatrix;

/// Moments of the shape function `h(u) = exp(−u/4)` in dimension `d`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ShapeConstants {
    /// `∫ h(‖z‖²) dz`
    pub m0: f64,
    /// `½ ∫ z₁² h(‖z‖²) dz`
    pub m2: f64,
    /// `m2 / m0`
    pub m: f64,
    /// `∫ h(‖z‖²)² dz`
    pub m0_hat: f64,
    /// `½ ∫ z₁² h(‖z‖²)² dz`
    pub m2_hat: f64,
}

impl ShapeConstants {
    pub fn gaussian(d: usize) -> ShapeConstants {
        let half_d = d as f64 / 2.0;
        let m0 = (4.0 * PI).powf(half_d);
        // z₁ has variance 2 under exp(−‖z‖²/4)
        let m2 = 0.5 * 2.0 * m0;
        let m0_hat = (2.0 * PI).powf(half_d);
        let m2_hat = 0.5 * m0_hat;
        ShapeConstants {
            m0,
            m2,
            m: m2 / m0,
            m0_hat,
            m2_hat,
        }
    }
}

fn check_positive(name: &str, v: &[f64]) -> Result<()> {
    match v.iter().position(|x| !(*x > 0.0) || !x.is_finite()) {
        Some(i) => Err(Error::InvalidInput(format!("{name}[{i}] = {} is not positive", v[i]))),
        None => Ok(()),
    }
}

fn check_eps(eps: f64) -> Result<()> {
    if eps > 0.0 && eps.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("eps must be positive, got {eps}")))
    }
}

/// Symmetrized kernel `(K + Kᵀ)/2` on the support; unit diagonal.
pub fn kernel_matrix(
    cloud: &PointCloud,
    rho: &[f64],
    eps: f64,
    support: &SymmetricSupport,
) -> Result<CsrMatrix> {
    check_eps(eps)?;
    check_positive("rho", rho)?;
    if rho.len() != cloud.len() || support.dim() != cloud.len() {
        return Err(Error::InvalidInput("rho/support size differs from the cloud".into()));
    }
    let pattern = support.shared_pattern();
    let cols = pattern.cols();
    let mut vals = vec![0.0; pattern.nnz()];
    crate::sparse::split_rows(&pattern, &mut vals)
        .into_par_iter()
        .for_each(|(i, out)| {
            let start = pattern.row_range(i).start;
            let xi = cloud.point(i);
            for (k, o) in out.iter_mut().enumerate() {
                let p = start + k;
                let j = cols[p] as usize;
                let d2 = squared_distance(xi, cloud.point(j));
                *o = support.weight(p) * (-d2 / (4.0 * eps * (rho[i] * rho[j]))).exp();
            }
        });
    Ok(CsrMatrix::new(pattern, vals).without_zeros())
}

/// `qS_i = Σⱼ K_ij / ρᵢ^d`.
pub fn qs_normalization(k: &CsrMatrix, rho: &[f64], d: usize) -> Vec<f64> {
    k.row_sums()
        .into_iter()
        .zip(rho)
        .map(|(s, r)| s / r.powi(d as i32))
        .collect()
}

/// `Kα_ij = K_ij / (qS_i qS_j)^α` and its row sums.
pub fn alpha_normalize(k: &CsrMatrix, qs: &[f64], alpha: f64) -> Result<(CsrMatrix, Vec<f64>)> {
    check_positive("qS", qs)?;
    if alpha == 0.0 {
        let sums = k.row_sums();
        return Ok((k.clone(), sums));
    }
    let scale: Vec<f64> = qs.iter().map(|q| q.powf(-alpha)).collect();
    let ka = k.map_entries(|i, j, v| v * (scale[i] * scale[j]));
    let sums = ka.row_sums();
    Ok((ka, sums))
}

/// Every matrix of the cascade plus the diagonals `P = ρ`, `D`, `S = P√D`.
#[derive(Clone, Debug)]
pub struct GeneratorMatrices {
    pub eps: f64,
    pub alpha: f64,
    pub k: CsrMatrix,
    pub qs: Vec<f64>,
    pub k_alpha: CsrMatrix,
    pub q_eps_alpha: Vec<f64>,
    pub l_hat: CsrMatrix,
    pub p: Vec<f64>,
    pub s: Vec<f64>,
}

impl GeneratorMatrices {
    /// Runs the whole cascade from points to `L̂`.
    pub fn build(
        cloud: &PointCloud,
        rho: &[f64],
        eps: f64,
        alpha: f64,
        d: usize,
        support: &SymmetricSupport,
    ) -> Result<GeneratorMatrices> {
        let k = kernel_matrix(cloud, rho, eps, support)?;
        let qs = qs_normalization(&k, rho, d);
        let (k_alpha, q_eps_alpha) = alpha_normalize(&k, &qs, alpha)?;
        let mut gm = generator_symmetric(k_alpha, q_eps_alpha, rho, eps)?;
        gm.k = k;
        gm.qs = qs;
        gm.alpha = alpha;
        Ok(gm)
    }

    pub fn dim(&self) -> usize {
        self.p.len()
    }

    /// `D = q_eps_alpha`.
    pub fn d_diag(&self) -> &[f64] {
        &self.q_eps_alpha
    }

    /// `L f = P⁻²(D⁻¹Kα f − f)/ε`.
    pub fn apply_l(&self, f: &[f64]) -> Vec<f64> {
        let mut kf = vec![0.0; f.len()];
        self.k_alpha.matvec(f, &mut kf);
        kf.iter()
            .zip(f)
            .enumerate()
            .map(|(i, (kfi, fi))| (kfi / self.q_eps_alpha[i] - fi) / (self.eps * self.p[i] * self.p[i]))
            .collect()
    }

    /// Largest `|Σⱼ K̂_ij − 1|` for `K̂ = D⁻¹Kα`.
    pub fn row_stochastic_defect(&self) -> f64 {
        self.k_alpha
            .row_sums()
            .iter()
            .zip(&self.q_eps_alpha)
            .map(|(s, d)| (s / d - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Dense non-symmetric `L`, for small validation problems.
    pub fn dense_l(&self) -> nalgebra::DMatrix<f64> {
        let n = self.dim();
        let mut l = self.k_alpha.to_dense();
        for i in 0..n {
            let scale = 1.0 / (self.eps * self.p[i] * self.p[i]);
            for j in 0..n {
                l[(i, j)] = scale * (l[(i, j)] / self.q_eps_alpha[i] - if i == j { 1.0 } else { 0.0 });
            }
        }
        l
    }
}

/// Symmetric conjugate
/// `L̂_ij = (Kα_ij / √(Dᵢ Dⱼ) − δ_ij) / (ε ρᵢ ρⱼ)`.
///
/// The raw kernel fields of the result are copies of `Kα`; use
/// [`GeneratorMatrices::build`] to keep the raw kernel.
pub fn generator_symmetric(
    k_alpha: CsrMatrix,
    q_eps_alpha: Vec<f64>,
    rho: &[f64],
    eps: f64,
) -> Result<GeneratorMatrices> {
    check_eps(eps)?;
    check_positive("rho", rho)?;
    check_positive("q_eps_alpha", &q_eps_alpha)?;
    let sqrt_d: Vec<f64> = q_eps_alpha.iter().map(|v| v.sqrt()).collect();
    let l_hat = k_alpha.map_entries(|i, j, v| {
        let off = v / (sqrt_d[i] * sqrt_d[j]);
        let val = if i == j { off - 1.0 } else { off };
        val / (eps * (rho[i] * rho[j]))
    });
    let s = rho.iter().zip(&sqrt_d).map(|(r, q)| r * q).collect();
    Ok(GeneratorMatrices {
        eps,
        alpha: f64::NAN,
        k: k_alpha.clone(),
        qs: q_eps_alpha.clone(),
        k_alpha,
        q_eps_alpha,
        l_hat,
        p: rho.to_vec(),
        s,
    })
}

/// Where the bandwidth enters the kernel argument.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Formulation {
    /// `h(‖x−y‖²/(ερ(x)))`, prefactor `1/(ε m ρ(x))`.
    Left,
    /// `h(‖x−y‖²/(ερ(y)))`, prefactor `1/(ε m ρ(x))`.
    Right,
    /// `h(‖x−y‖²/(ερ(x)ρ(y)))` with α-normalization, prefactor `1/(ε m ρ(x)²)`.
    Symmetric,
}

impl std::str::FromStr for Formulation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "left" => Ok(Formulation::Left),
            "right" => Ok(Formulation::Right),
            "symmetric" => Ok(Formulation::Symmetric),
            other => Err(Error::Config(format!("unknown formulation '{other}'"))),
        }
    }
}

/// Parameters of a pointwise operator evaluation.
#[derive(Clone, Copy, Debug)]
pub struct OperatorSpec {
    pub eps: f64,
    pub alpha: f64,
    pub d: usize,
    pub formulation: Formulation,
}

/// Pointwise kernel estimate of the continuous operator applied to `f`,
/// evaluated matrix-free. `support = None` sums over all pairs.
pub fn apply_generator(
    cloud: &PointCloud,
    rho: &[f64],
    spec: OperatorSpec,
    f: &[f64],
    support: Option<&SymmetricSupport>,
) -> Result<Vec<f64>> {
    let n = cloud.len();
    check_eps(spec.eps)?;
    check_positive("rho", rho)?;
    if rho.len() != n || f.len() != n {
        return Err(Error::InvalidInput("rho/f length differs from the cloud".into()));
    }
    if f.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("f has non-finite entries".into()));
    }
    if let Some(s) = support {
        if s.dim() != n {
            return Err(Error::InvalidInput("support size differs from the cloud".into()));
        }
    }
    let m = ShapeConstants::gaussian(spec.d).m;
    let eps = spec.eps;

    // visits (j, support weight) for row i
    let for_row = |i: usize, visit: &mut dyn FnMut(usize, f64)| match support {
        None => (0..n).for_each(|j| visit(j, 1.0)),
        Some(s) => {
            let r = s.pattern().row_range(i);
            for p in r {
                visit(s.pattern().cols()[p] as usize, s.weight(p));
            }
        }
    };
    let d2 = |i: usize, j: usize| squared_distance(cloud.point(i), cloud.point(j));

    let out = match spec.formulation {
        Formulation::Left | Formulation::Right => (0..n)
            .into_par_iter()
            .map(|i| {
                let (mut num, mut den) = (0.0, 0.0);
                for_row(i, &mut |j, _| {
                    let scale = if spec.formulation == Formulation::Left { rho[i] } else { rho[j] };
                    let w = (-d2(i, j) / (4.0 * eps * scale)).exp();
                    num += w * f[j];
                    den += w;
                });
                (num / den - f[i]) / (eps * m * rho[i])
            })
            .collect(),
        Formulation::Symmetric => {
            let kern = |i: usize, j: usize, w: f64| w * (-d2(i, j) / (4.0 * eps * (rho[i] * rho[j]))).exp();
            let qs: Vec<f64> = (0..n)
                .into_par_iter()
                .map(|i| {
                    let mut s = 0.0;
                    for_row(i, &mut |j, w| s += kern(i, j, w));
                    s / rho[i].powi(spec.d as i32)
                })
                .collect();
            let scale: Vec<f64> = qs.iter().map(|q| q.powf(-spec.alpha)).collect();
            (0..n)
                .into_par_iter()
                .map(|i| {
                    let (mut num, mut den) = (0.0, 0.0);
                    for_row(i, &mut |j, w| {
                        let ka = kern(i, j, w) * (scale[i] * scale[j]);
                        num += ka * f[j];
                        den += ka;
                    });
                    (num / den - f[i]) / (eps * m * rho[i] * rho[i])
                })
                .collect()
        }
    };
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neighbors::{knn, symmetrized_support};
    use crate::pointcloud::{gen_gaussian_random, Coords};
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_setup(n: usize, seed: u64) -> (PointCloud, Vec<f64>) {
        let c = gen_gaussian_random(n, &DMatrix::identity(2, 2), seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
        let rho = (0..n).map(|_| 0.5 + rng.random::<f64>()).collect();
        (c, rho)
    }

    #[test]
    fn shape_constants_gaussian() {
        for d in 1..4 {
            let s = ShapeConstants::gaussian(d);
            assert!((s.m - 1.0).abs() < 1e-15);
            assert!((s.m0 - (4.0 * PI).powf(d as f64 / 2.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn two_points_at_two_sqrt_eps() {
        let eps: f64 = 0.3;
        let c = PointCloud::new(
            Coords::from_rows(&[vec![0.0], vec![2.0 * eps.sqrt()]]).unwrap(),
            None,
            Some(1),
            "pair",
        )
        .unwrap();
        let k = kernel_matrix(&c, &[1.0, 1.0], eps, &SymmetricSupport::full(2)).unwrap();
        assert_eq!(k.get(0, 0), 1.0);
        assert!((k.get(0, 1) - (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn dense_oracle() {
        let (c, rho) = random_setup(30, 1);
        let eps = 0.2;
        let support = symmetrized_support(&knn(&c, 30).unwrap());
        let k = kernel_matrix(&c, &rho, eps, &support).unwrap();
        for i in 0..30 {
            for j in 0..30 {
                let mut d2 = 0.0;
                for a in 0..2 {
                    d2 += (c.point(i)[a] - c.point(j)[a]).powi(2);
                }
                let oracle = (-d2 / (4.0 * eps * (rho[i] * rho[j]))).exp();
                assert!((k.get(i, j) - oracle).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn single_row_qs_and_identity_bandwidth() {
        let (c, _) = random_setup(10, 2);
        let support = symmetrized_support(&knn(&c, 4).unwrap());
        let k = kernel_matrix(&c, &vec![1.0; 10], 0.1, &support).unwrap();
        assert_eq!(qs_normalization(&k, &vec![1.0; 10], 2), k.row_sums());
        let rho = vec![2.0; 10];
        let k2 = kernel_matrix(&c, &rho, 0.1, &support).unwrap();
        let q = qs_normalization(&k2, &rho, 2);
        let sums = k2.row_sums();
        for i in 0..10 {
            assert!((q[i] - sums[i] / 4.0).abs() < 1e-15);
        }
    }

    #[test]
    fn alpha_normalization_cases() {
        let (c, rho) = random_setup(20, 3);
        let support = symmetrized_support(&knn(&c, 6).unwrap());
        let k = kernel_matrix(&c, &rho, 0.1, &support).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let qs: Vec<f64> = (0..20).map(|_| 0.1 + rng.random::<f64>()).collect();
        let (k0, _) = alpha_normalize(&k, &qs, 0.0).unwrap();
        assert_eq!(k0.values(), k.values());
        let (k1, sums) = alpha_normalize(&k, &qs, 1.0).unwrap();
        for i in 0..20 {
            for (j, v) in k1.row(i) {
                assert!((v - k.get(i, j) / (qs[i] * qs[j])).abs() < 1e-14);
            }
            assert!((sums[i] - k1.row(i).map(|e| e.1).sum::<f64>()).abs() < 1e-14);
        }
        let (kh, _) = alpha_normalize(&k, &qs, 0.37).unwrap();
        let dense = kh.to_dense();
        assert_eq!(dense.clone(), dense.transpose());
    }

    #[test]
    fn conjugation_identity() {
        let (c, rho) = random_setup(50, 4);
        let support = symmetrized_support(&knn(&c, 50).unwrap());
        let gm = GeneratorMatrices::build(&c, &rho, 0.05, -0.5, 2, &support).unwrap();
        assert!(gm.l_hat.relative_asymmetry() < 1e-12);
        assert!(gm.k.relative_asymmetry() < 1e-14);
        assert!(gm.row_stochastic_defect() < 1e-12);
        // L̂ (S 1) = 0
        let mut out = vec![0.0; 50];
        gm.l_hat.matvec(&gm.s, &mut out);
        assert!(out.iter().all(|v| v.abs() < 1e-10));
        // L = S⁻¹ L̂ S, and spectra agree
        let l = gm.dense_l();
        let lhat = gm.l_hat.to_dense();
        let sd = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(gm.s.clone()));
        let sinv = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(gm.s.iter().map(|v| 1.0 / v).collect()));
        let back = &sinv * &lhat * &sd;
        assert!((&back - &l).abs().max() < 1e-10 * l.abs().max());
        let mut sym: Vec<f64> = lhat.symmetric_eigenvalues().iter().copied().collect();
        let mut gen: Vec<f64> = l.complex_eigenvalues().iter().map(|z| z.re).collect();
        sym.sort_by(f64::total_cmp);
        gen.sort_by(f64::total_cmp);
        for (a, b) in sym.iter().zip(&gen) {
            assert!((a - b).abs() < 1e-10 * l.abs().max().max(1.0), "{a} vs {b}");
        }
        assert!(sym.iter().all(|v| *v < 1e-8));
    }

    #[test]
    fn classical_graph_laplacian_when_fixed() {
        let (c, _) = random_setup(25, 5);
        let support = SymmetricSupport::full(25);
        let rho = vec![1.0; 25];
        let gm = GeneratorMatrices::build(&c, &rho, 0.1, 0.0, 2, &support).unwrap();
        // D^{-1/2} K D^{-1/2} − I over ε
        let k = gm.k.to_dense();
        let dg: Vec<f64> = k.row_sum().iter().copied().collect();
        for i in 0..25 {
            for j in 0..25 {
                let expect = (k[(i, j)] / (dg[i] * dg[j]).sqrt() - if i == j { 1.0 } else { 0.0 }) / 0.1;
                assert!((gm.l_hat.get(i, j) - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn apply_generator_symmetric_matches_matrix() {
        let (c, rho) = random_setup(40, 6);
        let support = symmetrized_support(&knn(&c, 10).unwrap());
        let gm = GeneratorMatrices::build(&c, &rho, 0.07, 0.3, 2, &support).unwrap();
        let f: Vec<f64> = (0..40).map(|i| c.point(i)[0].sin()).collect();
        let spec = OperatorSpec {
            eps: 0.07,
            alpha: 0.3,
            d: 2,
            formulation: Formulation::Symmetric,
        };
        let a = apply_generator(&c, &rho, spec, &f, Some(&support)).unwrap();
        let b = gm.apply_l(&f);
        for i in 0..40 {
            assert!((a[i] - b[i]).abs() < 1e-10 * b[i].abs().max(1.0));
        }
        let ones = vec![1.0; 40];
        for form in [Formulation::Left, Formulation::Right, Formulation::Symmetric] {
            let z = apply_generator(&c, &rho, OperatorSpec { formulation: form, ..spec }, &ones, None).unwrap();
            assert!(z.iter().all(|v| v.abs() < 1e-10));
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let (c, rho) = random_setup(10, 7);
        let s = SymmetricSupport::full(10);
        assert!(kernel_matrix(&c, &rho, 0.0, &s).is_err());
        let mut bad = rho.clone();
        bad[3] = -1.0;
        assert!(kernel_matrix(&c, &bad, 0.1, &s).is_err());
    }
}
