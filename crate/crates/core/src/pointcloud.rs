//! Sample sets: non-uniform circle, Gaussian grids and samples, projected
//! sphere, flat torus, plus CSV load/save.

use std::f64::consts::{PI, TAU};
use std::io::{BufRead, Write};
use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::special::normal_grid_quantile;

/// Dense row-major real matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Coords {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Coords {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(Error::InvalidInput(format!(
                "{} values cannot fill a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Coords { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::InvalidInput("ragged rows".into()));
        }
        Ok(Coords {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        })
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Column `j` copied out.
    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.data[i * self.cols + j]).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }

    /// Subset of rows, in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> Coords {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Coords {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }
}

#[inline]
pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `N` ambient points with optional latent parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud {
    points: Coords,
    latent: Option<Coords>,
    intrinsic_dim: Option<usize>,
    label: String,
}

impl PointCloud {
    pub fn new(
        points: Coords,
        latent: Option<Coords>,
        intrinsic_dim: Option<usize>,
        label: impl Into<String>,
    ) -> Result<Self> {
        if points.nrows() < 2 {
            return Err(Error::InvalidInput("a point cloud needs at least 2 points".into()));
        }
        if points.ncols() == 0 {
            return Err(Error::InvalidInput("points have no coordinates".into()));
        }
        if points.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite coordinate".into()));
        }
        if let Some(lat) = &latent {
            if lat.nrows() != points.nrows() {
                return Err(Error::InvalidInput(format!(
                    "latent has {} rows, points have {}",
                    lat.nrows(),
                    points.nrows()
                )));
            }
        }
        if intrinsic_dim == Some(0) {
            return Err(Error::InvalidInput("intrinsic dimension must be positive".into()));
        }
        Ok(PointCloud {
            points,
            latent,
            intrinsic_dim,
            label: label.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.nrows() == 0
    }

    pub fn ambient_dim(&self) -> usize {
        self.points.ncols()
    }

    pub fn points(&self) -> &Coords {
        &self.points
    }

    #[inline]
    pub fn point(&self, i: usize) -> &[f64] {
        self.points.row(i)
    }

    pub fn latent(&self) -> Option<&Coords> {
        self.latent.as_ref()
    }

    pub fn intrinsic_dim(&self) -> Option<usize> {
        self.intrinsic_dim
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn with_intrinsic_dim(mut self, d: usize) -> Self {
        self.intrinsic_dim = Some(d);
        self
    }

    /// Keeps only the listed points (latent rows follow).
    pub fn subset(&self, idx: &[usize]) -> Result<PointCloud> {
        PointCloud::new(
            self.points.select_rows(idx),
            self.latent.as_ref().map(|l| l.select_rows(idx)),
            self.intrinsic_dim,
            self.label.clone(),
        )
    }

    /// Writes `x1,...,xn[,theta[,phi]]` CSV with 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let n = self.ambient_dim();
        let mut header: Vec<String> = (1..=n).map(|j| format!("x{j}")).collect();
        if let Some(lat) = &self.latent {
            header.extend(latent_names(lat.ncols()));
        }
        writeln!(out, "{}", header.join(","))?;
        for i in 0..self.len() {
            let mut fields: Vec<String> = self.point(i).iter().map(|v| fmt_f64(*v)).collect();
            if let Some(lat) = &self.latent {
                fields.extend(lat.row(i).iter().map(|v| fmt_f64(*v)));
            }
            writeln!(out, "{}", fields.join(","))?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_csv(file)
    }

    /// Reads the CSV layout written by [`PointCloud::write_csv`]. Columns
    /// named `theta`/`phi` become latent coordinates; the intrinsic
    /// dimension is taken from the latent width when present.
    pub fn read_csv<R: BufRead>(input: R) -> Result<PointCloud> {
        let mut lines = input.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty point cloud file".into()))??;
        let names: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
        let latent_cols: Vec<usize> = names
            .iter()
            .enumerate()
            .filter(|(_, s)| *s == "theta" || *s == "phi")
            .map(|(j, _)| j)
            .collect();
        let point_cols: Vec<usize> = (0..names.len()).filter(|j| !latent_cols.contains(j)).collect();
        let mut pts = Vec::new();
        let mut lat = Vec::new();
        let mut rows = 0;
        for (lineno, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let vals: Vec<f64> = line
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 2)))?;
            if vals.len() != names.len() {
                return Err(Error::Parse(format!(
                    "line {}: expected {} fields, found {}",
                    lineno + 2,
                    names.len(),
                    vals.len()
                )));
            }
            pts.extend(point_cols.iter().map(|&j| vals[j]));
            lat.extend(latent_cols.iter().map(|&j| vals[j]));
            rows += 1;
        }
        let latent = if latent_cols.is_empty() {
            None
        } else {
            Some(Coords::new(rows, latent_cols.len(), lat)?)
        };
        let d = latent.as_ref().map(Coords::ncols);
        PointCloud::new(Coords::new(rows, point_cols.len(), pts)?, latent, d, "external")
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<PointCloud> {
        let file = std::io::BufReader::new(std::fs::File::open(path)?);
        PointCloud::read_csv(file)
    }
}

fn latent_names(d: usize) -> Vec<String> {
    match d {
        1 => vec!["theta".into()],
        2 => vec!["theta".into(), "phi".into()],
        _ => (1..=d).map(|j| format!("z{j}")).collect(),
    }
}

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn circle_cdf(theta: f64) -> f64 {
    (2.0 * theta + theta.sin()) / (4.0 * PI)
}

// F is strictly increasing on [0, π] with F(0) = 0, F(π) = 1/2.
fn circle_cdf_inverse_lower(t: f64) -> Result<f64> {
    let (mut lo, mut hi) = (0.0_f64, PI);
    if !(circle_cdf(lo) <= t && t <= 0.5) {
        return Err(Error::InversionFailure(t));
    }
    let mut iter = 0;
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if circle_cdf(mid) < t {
            lo = mid;
        } else {
            hi = mid;
        }
        iter += 1;
        if iter > 200 {
            return Err(Error::InversionFailure(t));
        }
    }
    Ok(0.5 * (lo + hi))
}

fn circle_from_angles(theta: Vec<f64>, label: &str) -> Result<PointCloud> {
    let n = theta.len();
    let mut pts = Vec::with_capacity(2 * n);
    for &t in &theta {
        pts.push(t.cos());
        pts.push(t.sin());
    }
    PointCloud::new(
        Coords::new(n, 2, pts)?,
        Some(Coords::new(n, 1, theta)?),
        Some(1),
        label,
    )
}

/// Deterministic grid on the unit circle with density `(2 + cos θ)/(4π)`:
/// `θ_i = F⁻¹(i/(N+1))`, `F(θ) = (2θ + sin θ)/(4π)`.
pub fn gen_circle_nonuniform(n: usize) -> Result<PointCloud> {
    check_n(n)?;
    let denom = (n + 1) as f64;
    let theta = (1..=n)
        .map(|i| {
            let lo = i.min(n + 1 - i);
            if 2 * lo == n + 1 {
                return Ok(PI);
            }
            let th = circle_cdf_inverse_lower(lo as f64 / denom)?;
            // F(2π − θ) = 1 − F(θ)
            Ok(if lo == i { th } else { TAU - th })
        })
        .collect::<Result<Vec<_>>>()?;
    circle_from_angles(theta, "circle")
}

/// Uniform grid `θ_i = 2πi/N` on the unit circle.
pub fn gen_circle_grid(n: usize) -> Result<PointCloud> {
    check_n(n)?;
    let theta = (0..n).map(|i| TAU * i as f64 / n as f64).collect();
    circle_from_angles(theta, "circle")
}

/// Random circle samples with density proportional to `exp(κ cos θ)`,
/// drawn by rejection from the uniform law.
pub fn gen_circle_von_mises(n: usize, kappa: f64, seed: u64) -> Result<PointCloud> {
    check_n(n)?;
    if !kappa.is_finite() || kappa < 0.0 {
        return Err(Error::InvalidInput(format!("kappa must be >= 0, got {kappa}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut theta = Vec::with_capacity(n);
    while theta.len() < n {
        let t = TAU * rng.random::<f64>();
        let u: f64 = rng.random();
        if u < (kappa * (t.cos() - 1.0)).exp() && t < TAU {
            theta.push(t);
        }
    }
    circle_from_angles(theta, "circle")
}

/// Deterministic 1-D grid `x_i = √2 erf⁻¹(2i/(N+1) − 1)` whose empirical
/// law tends to the standard normal.
pub fn gen_gaussian_nice_1d(n: usize) -> Result<PointCloud> {
    check_n(n)?;
    let xs: Vec<f64> = (1..=n).map(|i| normal_grid_quantile(i, n)).collect();
    PointCloud::new(Coords::new(n, 1, xs)?, None, Some(1), "gaussian_nice")
}

fn cholesky(cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !cov.is_square() || cov.nrows() == 0 {
        return Err(Error::InvalidCovariance("covariance must be square".into()));
    }
    let asym = (cov - cov.transpose()).abs().max();
    if asym > 1e-12 * cov.abs().max().max(1.0) {
        return Err(Error::InvalidCovariance("covariance is not symmetric".into()));
    }
    nalgebra::Cholesky::new(cov.clone())
        .map(|c| c.l())
        .ok_or_else(|| Error::InvalidCovariance("covariance is not positive definite".into()))
}

/// `N` i.i.d. draws from `N(0, cov)`.
pub fn gen_gaussian_random(n: usize, cov: &DMatrix<f64>, seed: u64) -> Result<PointCloud> {
    check_n(n)?;
    let l = cholesky(cov)?;
    let dim = cov.nrows();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pts = Vec::with_capacity(n * dim);
    let mut z = vec![0.0; dim];
    for _ in 0..n {
        z.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
        for r in 0..dim {
            pts.push((0..=r).map(|c| l[(r, c)] * z[c]).sum());
        }
    }
    PointCloud::new(Coords::new(n, dim, pts)?, None, Some(dim), "gaussian")
}

/// Random SPD matrix `AᵀA + 0.1·I` with standard-normal `A`.
pub fn random_covariance(dim: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = DMatrix::from_fn(dim, dim, |_, _| rng.sample::<f64, _>(StandardNormal));
    a.transpose() * &a + DMatrix::identity(dim, dim) * 0.1
}

/// Gaussian draws in R³ projected radially onto the unit sphere.
pub fn gen_sphere_nonuniform(n: usize, cov: &DMatrix<f64>, seed: u64) -> Result<PointCloud> {
    check_n(n)?;
    if cov.nrows() != 3 {
        return Err(Error::InvalidCovariance("sphere covariance must be 3x3".into()));
    }
    let l = cholesky(cov)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pts = Vec::with_capacity(3 * n);
    let mut count = 0;
    while count < n {
        let z: [f64; 3] = [
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
        ];
        let x: Vec<f64> = (0..3).map(|r| (0..=r).map(|c| l[(r, c)] * z[c]).sum()).collect();
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            continue;
        }
        pts.extend(x.iter().map(|v| v / norm));
        count += 1;
    }
    PointCloud::new(Coords::new(n, 3, pts)?, None, Some(2), "sphere")
}

/// Uniform `n × n` grid on the flat torus embedded as
/// `(cos θ, sin θ, cos φ, sin φ)`.
pub fn gen_torus_grid(n_per_dim: usize) -> Result<PointCloud> {
    check_n(n_per_dim)?;
    let n = n_per_dim * n_per_dim;
    let mut pts = Vec::with_capacity(4 * n);
    let mut lat = Vec::with_capacity(2 * n);
    for a in 0..n_per_dim {
        let th = TAU * a as f64 / n_per_dim as f64;
        for b in 0..n_per_dim {
            let ph = TAU * b as f64 / n_per_dim as f64;
            pts.extend([th.cos(), th.sin(), ph.cos(), ph.sin()]);
            lat.extend([th, ph]);
        }
    }
    PointCloud::new(
        Coords::new(n, 4, pts)?,
        Some(Coords::new(n, 2, lat)?),
        Some(2),
        "torus",
    )
}

/// Shifts each angle of a circle cloud by `U[0, amplitude]`, mod 2π.
pub fn perturb_circle(cloud: &PointCloud, amplitude: f64, seed: u64) -> Result<PointCloud> {
    let lat = cloud
        .latent()
        .filter(|l| l.ncols() == 1 && cloud.ambient_dim() == 2)
        .ok_or_else(|| Error::WrongManifold("perturb_circle needs a circle cloud with latent θ".into()))?;
    if !amplitude.is_finite() || amplitude < 0.0 {
        return Err(Error::InvalidInput(format!("amplitude must be >= 0, got {amplitude}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let theta = lat
        .as_slice()
        .iter()
        .map(|&t| {
            let shifted = (t + amplitude * rng.random::<f64>()).rem_euclid(TAU);
            if shifted >= TAU {
                0.0
            } else {
                shifted
            }
        })
        .collect();
    let mut out = circle_from_angles(theta, cloud.label())?;
    out.intrinsic_dim = cloud.intrinsic_dim;
    Ok(out)
}

fn check_n(n: usize) -> Result<()> {
    if n < 2 {
        Err(Error::InvalidInput(format!("need at least 2 points, got {n}")))
    } else {
        Ok(())
    }
}
