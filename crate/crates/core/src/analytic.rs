//! Closed-form eigenfunctions and reference operators.
//!
//! Latent coordinates are flat angles (circle `θ`, torus `(θ, φ)`) of unit
//! radius embeddings, so gradients and Laplacians are plain partial
//! derivatives.

use crate::error::{Error, Result};
use crate::pointcloud::{Coords, PointCloud};

/// Largest supported Hermite degree.
pub const MAX_HERMITE: usize = 6;

/// Probabilists' Hermite polynomial `Heₙ(x)/√n!`, unit norm under `N(0,1)`.
pub fn hermite_value(n: usize, x: f64) -> f64 {
    // normalized three-term recurrence: √(k+1) h_{k+1} = x h_k − √k h_{k−1}
    let (mut prev, mut cur) = (0.0, 1.0);
    for k in 0..n {
        let next = (x * cur - (k as f64).sqrt() * prev) / ((k + 1) as f64).sqrt();
        prev = cur;
        cur = next;
    }
    cur
}

pub fn hermite(n: usize, x: &[f64]) -> Result<Vec<f64>> {
    if n > MAX_HERMITE {
        return Err(Error::InvalidInput(format!("Hermite degree {n} exceeds {MAX_HERMITE}")));
    }
    Ok(x.iter().map(|&v| hermite_value(n, v)).collect())
}

/// `H_nx(x)·H_ny(y)` on the rows of `pts`.
pub fn ou2d_eigenfunction(nx: usize, ny: usize, pts: &Coords) -> Result<Vec<f64>> {
    if nx + ny > 4 {
        return Err(Error::InvalidInput(format!("nx + ny must be at most 4, got {}", nx + ny)));
    }
    if pts.ncols() != 2 {
        return Err(Error::InvalidInput("2-D eigenfunction needs two columns".into()));
    }
    Ok((0..pts.nrows())
        .map(|i| {
            let r = pts.row(i);
            hermite_value(nx, r[0]) * hermite_value(ny, r[1])
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Parity {
    Sin,
    Cos,
}

/// `sin(kθ)` or `cos(kθ)`, eigenvalue `−k²`.
pub fn circle_eigenfunction(k: usize, parity: Parity, theta: &[f64]) -> Result<Vec<f64>> {
    if k == 0 {
        return Err(Error::InvalidInput("circle frequency must be at least 1".into()));
    }
    let k = k as f64;
    Ok(theta
        .iter()
        .map(|t| match parity {
            Parity::Sin => (k * t).sin(),
            Parity::Cos => (k * t).cos(),
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TargetKind {
    Ou1dHermite(usize),
    Ou2dProduct(usize, usize),
    CircleFourier(usize, Parity),
    /// Ambient coordinate `axis` restricted to the unit sphere.
    SphereCoordinate(usize),
    CustomOperator,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AnalyticTarget {
    pub kind: TargetKind,
    /// `NaN` for [`TargetKind::CustomOperator`].
    pub eigenvalue: f64,
}

impl AnalyticTarget {
    pub fn new(kind: TargetKind) -> AnalyticTarget {
        let eigenvalue = match kind {
            TargetKind::Ou1dHermite(n) => -(n as f64),
            TargetKind::Ou2dProduct(nx, ny) => -((nx + ny) as f64),
            TargetKind::CircleFourier(k, _) => -((k * k) as f64),
            TargetKind::SphereCoordinate(_) => -2.0,
            TargetKind::CustomOperator => f64::NAN,
        };
        AnalyticTarget { kind, eigenvalue }
    }

    /// Values on a cloud: ambient coordinates for the OU and sphere kinds,
    /// latent angles for circle kinds.
    pub fn evaluate(&self, cloud: &PointCloud) -> Result<Vec<f64>> {
        let pts = cloud.points();
        match self.kind {
            TargetKind::Ou1dHermite(n) => hermite(n, &pts.column(0)),
            TargetKind::Ou2dProduct(nx, ny) => ou2d_eigenfunction(nx, ny, pts),
            TargetKind::CircleFourier(k, p) => {
                let lat = cloud.latent().ok_or(Error::NoLatent)?;
                circle_eigenfunction(k, p, &lat.column(0))
            }
            TargetKind::SphereCoordinate(axis) if axis < pts.ncols() => Ok(pts.column(axis)),
            TargetKind::SphereCoordinate(axis) => Err(Error::InvalidInput(format!("no axis {axis}"))),
            TargetKind::CustomOperator => Err(Error::InvalidInput("custom targets have no closed form".into())),
        }
    }
}

/// A smooth function of the latent coordinates with closed-form calculus.
pub trait LatentFunction: Sync {
    fn value(&self, z: &[f64]) -> f64;
    fn gradient(&self, z: &[f64]) -> Vec<f64>;
    fn laplacian(&self, z: &[f64]) -> f64;
}

/// `sin(k z_axis)` or `cos(k z_axis)`.
#[derive(Clone, Copy, Debug)]
pub struct Fourier {
    pub axis: usize,
    pub k: f64,
    pub parity: Parity,
}

impl LatentFunction for Fourier {
    fn value(&self, z: &[f64]) -> f64 {
        let t = self.k * z[self.axis];
        match self.parity {
            Parity::Sin => t.sin(),
            Parity::Cos => t.cos(),
        }
    }

    fn gradient(&self, z: &[f64]) -> Vec<f64> {
        let t = self.k * z[self.axis];
        let mut g = vec![0.0; z.len()];
        g[self.axis] = self.k
            * match self.parity {
                Parity::Sin => t.cos(),
                Parity::Cos => -t.sin(),
            };
        g
    }

    fn laplacian(&self, z: &[f64]) -> f64 {
        -self.k * self.k * self.value(z)
    }
}

/// `exp(scale · cos z_axis)`.
#[derive(Clone, Copy, Debug)]
pub struct ExpCos {
    pub axis: usize,
    pub scale: f64,
}

impl LatentFunction for ExpCos {
    fn value(&self, z: &[f64]) -> f64 {
        (self.scale * z[self.axis].cos()).exp()
    }

    fn gradient(&self, z: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; z.len()];
        g[self.axis] = -self.scale * z[self.axis].sin() * self.value(z);
        g
    }

    fn laplacian(&self, z: &[f64]) -> f64 {
        let t = z[self.axis];
        let s = self.scale;
        (s * s * t.sin().powi(2) - s * t.cos()) * self.value(z)
    }
}

/// Continuous operators used as pointwise references.
#[derive(Clone, Copy)]
pub enum ReferenceOperator<'a> {
    /// `Δf`.
    Laplacian,
    /// `Δf + c₁ ∇f·∇q/q`.
    GradientFlow { c1: f64, density: &'a dyn LatentFunction },
    /// `Δf + (d+2) ∇f·∇ρ/ρ`.
    BandwidthDrift { d: usize, bandwidth: &'a dyn LatentFunction },
}

fn drift(f: &dyn LatentFunction, g: &dyn LatentFunction, z: &[f64]) -> f64 {
    let gf = f.gradient(z);
    let gg = g.gradient(z);
    gf.iter().zip(&gg).map(|(a, b)| a * b).sum::<f64>() / g.value(z)
}

/// Evaluates `op f` at every latent point of `cloud`.
pub fn reference_operator(op: ReferenceOperator, f: &dyn LatentFunction, cloud: &PointCloud) -> Result<Vec<f64>> {
    let lat = cloud.latent().ok_or(Error::NoLatent)?;
    Ok((0..lat.nrows())
        .map(|i| {
            let z = lat.row(i);
            let lap = f.laplacian(z);
            match op {
                ReferenceOperator::Laplacian => lap,
                ReferenceOperator::GradientFlow { c1, density } => lap + c1 * drift(f, density, z),
                ReferenceOperator::BandwidthDrift { d, bandwidth } => lap + (d + 2) as f64 * drift(f, bandwidth, z),
            }
        })
        .collect())
}
