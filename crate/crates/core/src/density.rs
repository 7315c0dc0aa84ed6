//! Pilot bandwidth, pilot kernel density estimate and the final bandwidth
//! function `ρ = q₀^β`.

use std::f64::consts::PI;
use std::io::Write;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::neighbors::{NeighborGraph, Support};
use crate::pointcloud::{fmt_f64, squared_distance, PointCloud};

/// Default number of neighbors for the pilot bandwidth.
pub const DEFAULT_K0: usize = 8;

#[derive(Clone, Debug, PartialEq)]
pub struct BandwidthProfile {
    /// Pilot bandwidth, ambient length units.
    pub rho0: Vec<f64>,
    /// `(mean ρ₀)²`.
    pub eps0: f64,
    /// `ρ₀ / √ε₀`, mean one.
    pub rho0_tilde: Vec<f64>,
    /// Pilot density estimate.
    pub q0: Vec<f64>,
    pub beta: f64,
    /// Final bandwidth `q₀^β`.
    pub rho: Vec<f64>,
    /// Intrinsic dimension used in the estimate.
    pub d: usize,
}

impl BandwidthProfile {
    /// Pilot bandwidth from `k0` neighbors, density estimate in dimension
    /// `d`, then `ρ = q₀^β`.
    pub fn estimate(
        cloud: &PointCloud,
        graph: &NeighborGraph,
        k0: usize,
        d: usize,
        beta: f64,
    ) -> Result<BandwidthProfile> {
        let rho0 = pilot_bandwidth(graph, k0)?;
        let (q0, eps0) = kde_pilot(cloud, &rho0, d, Support::auto(cloud.len(), graph))?;
        let sqrt_eps0 = eps0.sqrt();
        let rho0_tilde = rho0.iter().map(|r| r / sqrt_eps0).collect();
        let rho = bandwidth_from_density(&q0, beta);
        Ok(BandwidthProfile {
            rho0,
            eps0,
            rho0_tilde,
            q0,
            beta,
            rho,
            d,
        })
    }

    /// CSV with columns `i,rho0,q0,rho`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "i,rho0,q0,rho")?;
        for i in 0..self.rho.len() {
            writeln!(
                out,
                "{i},{},{},{}",
                fmt_f64(self.rho0[i]),
                fmt_f64(self.q0[i]),
                fmt_f64(self.rho[i])
            )?;
        }
        Ok(())
    }
}

/// Root-mean-square distance to neighbors `2..=k0` (the point itself is
/// neighbor 1 and is left out).
pub fn pilot_bandwidth(graph: &NeighborGraph, k0: usize) -> Result<Vec<f64>> {
    if k0 < 2 || k0 > graph.k() {
        return Err(Error::InvalidInput(format!(
            "pilot bandwidth needs 2 <= k0 <= k, got k0 = {k0}, k = {}",
            graph.k()
        )));
    }
    let rho0: Vec<f64> = (0..graph.len())
        .map(|i| {
            let ms: f64 = graph.distances(i)[1..k0].iter().map(|d| d * d).sum::<f64>();
            (ms / (k0 - 1) as f64).sqrt()
        })
        .collect();
    if let Some(i) = rho0.iter().position(|&r| r <= 0.0) {
        return Err(Error::DuplicatePoints(i));
    }
    Ok(rho0)
}

/// Pilot density
/// `q₀(xᵢ) = (2π)^{−d/2} / (ρ₀(xᵢ)^d N) Σ_l exp(−‖xᵢ−x_l‖² / (2ρ₀(xᵢ)ρ₀(x_l)))`
/// (the `l = i` term included) and `ε₀ = (mean ρ₀)²`.
pub fn kde_pilot(
    cloud: &PointCloud,
    rho0: &[f64],
    d: usize,
    support: Support<'_>,
) -> Result<(Vec<f64>, f64)> {
    let n = cloud.len();
    if rho0.len() != n {
        return Err(Error::InvalidInput("rho0 length differs from the cloud".into()));
    }
    if d == 0 {
        return Err(Error::InvalidInput("dimension must be positive".into()));
    }
    if let Some(i) = rho0.iter().position(|&r| !(r > 0.0)) {
        return Err(Error::DuplicatePoints(i));
    }
    let norm = (2.0 * PI).powf(-(d as f64) / 2.0) / n as f64;
    let term = |i: usize, l: usize| {
        (-squared_distance(cloud.point(i), cloud.point(l)) / (2.0 * rho0[i] * rho0[l])).exp()
    };
    let q0: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let sum: f64 = match support {
                Support::Full => (0..n).map(|l| term(i, l)).sum(),
                Support::Neighbors(g) => g.indices(i).iter().map(|&l| term(i, l as usize)).sum(),
            };
            norm * sum / rho0[i].powi(d as i32)
        })
        .collect();
    let mean = rho0.iter().sum::<f64>() / n as f64;
    Ok((q0, mean * mean))
}

/// `ρ = q₀^β` elementwise.
pub fn bandwidth_from_density(q0: &[f64], beta: f64) -> Vec<f64> {
    q0.iter().map(|q| q.powf(beta)).collect()
}

/// Drift and error-exponent constants of the limiting operator
/// `Δf + c₁ ∇f·∇q/q`:
/// `c₁ = 2 − 2α + dβ + 2β`, `c₂ = 1/2 − 2α + 2dα + dβ/2 + β`.
pub fn c_constants(alpha: f64, beta: f64, d: usize) -> (f64, f64) {
    let d = d as f64;
    let c1 = 2.0 - 2.0 * alpha + d * beta + 2.0 * beta;
    let c2 = 0.5 - 2.0 * alpha + 2.0 * d * alpha + d * beta / 2.0 + beta;
    (c1, c2)
}
