//! Automatic `ε` selection from the kernel-sum statistic
//! `S(ε) = N⁻² Σᵢⱼ exp(−‖xᵢ−xⱼ‖²/(4ερᵢρⱼ))` on a dyadic grid `ε = 2^i`.
//!
//! Where `S` behaves like a power of `ε` its log-log slope is `d/2`, so the
//! steepest point both picks `ε` and estimates the dimension.

use std::io::Write;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::neighbors::Support;
use crate::pointcloud::{fmt_f64, squared_distance, PointCloud};

/// Default exponents `−30..=10`.
pub const DEFAULT_GRID: std::ops::RangeInclusive<i32> = -30..=10;

#[derive(Clone, Debug, PartialEq)]
pub struct TuningCurve {
    pub exponents: Vec<i32>,
    pub s: Vec<f64>,
    /// Forward differences of `log S` against `log ε`; one fewer than `s`.
    pub slopes: Vec<f64>,
}

/// Result of [`select_epsilon`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Selection {
    pub eps_star: f64,
    pub a_max: f64,
    pub d_hat: f64,
    /// Grid position of `eps_star`.
    pub index: usize,
}

impl TuningCurve {
    pub fn eps(&self, i: usize) -> f64 {
        2f64.powi(self.exponents[i])
    }

    /// CSV with columns `i,eps,S,slope`; the last slope cell is empty.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "i,eps,S,slope")?;
        for (k, &e) in self.exponents.iter().enumerate() {
            let slope = self.slopes.get(k).map(|v| fmt_f64(*v)).unwrap_or_default();
            writeln!(out, "{e},{},{},{slope}", fmt_f64(self.eps(k)), fmt_f64(self.s[k]))?;
        }
        Ok(())
    }
}

/// Evaluates `S` over the grid. `rho ≡ 1` gives the fixed-bandwidth curve.
pub fn s_curve(cloud: &PointCloud, rho: &[f64], grid: &[i32], support: Support) -> Result<TuningCurve> {
    let n = cloud.len();
    if grid.is_empty() {
        return Err(Error::InvalidInput("tuning grid is empty".into()));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput("tuning grid must be strictly increasing".into()));
    }
    if rho.len() != n || rho.iter().any(|r| !(*r > 0.0)) {
        return Err(Error::InvalidInput("rho must be positive with one entry per point".into()));
    }
    let inv_eps: Vec<f64> = grid.iter().map(|&e| 2f64.powi(-e)).collect();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let xi = cloud.point(i);
            let mut acc = vec![0.0; grid.len()];
            let mut add = |j: usize| {
                let t = squared_distance(xi, cloud.point(j)) / (4.0 * rho[i] * rho[j]);
                for (a, ie) in acc.iter_mut().zip(&inv_eps) {
                    *a += (-t * ie).exp();
                }
            };
            match support {
                Support::Full => (0..n).for_each(&mut add),
                Support::Neighbors(g) => g.indices(i).iter().for_each(|&j| add(j as usize)),
            }
            acc
        })
        .collect();
    let norm = (n as f64).powi(2);
    let s: Vec<f64> = (0..grid.len())
        .map(|g| rows.iter().map(|r| r[g]).sum::<f64>() / norm)
        .collect();
    let slopes = (0..grid.len().saturating_sub(1))
        .map(|g| {
            let dlog_eps = (grid[g + 1] - grid[g]) as f64 * std::f64::consts::LN_2;
            (s[g + 1].ln() - s[g].ln()) / dlog_eps
        })
        .collect();
    Ok(TuningCurve {
        exponents: grid.to_vec(),
        s,
        slopes,
    })
}

/// Steepest forward slope; ties go to the smallest `ε`.
pub fn select_epsilon(curve: &TuningCurve) -> Result<Selection> {
    if curve.slopes.is_empty() {
        return Err(Error::InvalidInput("tuning curve needs at least two grid points".into()));
    }
    let (index, a_max) = curve
        .slopes
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &a)| if a > best.1 { (i, a) } else { best });
    if !(a_max > 1e-12) {
        return Err(Error::NoLinearRegion);
    }
    Ok(Selection {
        eps_star: curve.eps(index),
        a_max,
        d_hat: 2.0 * a_max,
        index,
    })
}
