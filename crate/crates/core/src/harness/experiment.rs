use std::fs;
use std::io::{BufWriter, Write};
use std::ops::Range;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DMatrix;

use super::config::{ExperimentConfig, ExperimentKind, Sampling};
use crate::analytic::{
    circle_eigenfunction, hermite, ou2d_eigenfunction, reference_operator, ExpCos, Fourier, LatentFunction, Parity,
    ReferenceOperator,
};
use crate::density::{c_constants, BandwidthProfile};
use crate::error::{Error, Result};
use crate::kernel::{apply_generator, Formulation, GeneratorMatrices, OperatorSpec};
use crate::neighbors::{knn, symmetrized_support, NeighborGraph, Support, SymmetricSupport};
use crate::pointcloud::{
    fmt_f64, gen_circle_grid, gen_circle_nonuniform, gen_circle_von_mises, gen_gaussian_nice_1d,
    gen_gaussian_random, gen_sphere_nonuniform, gen_torus_grid, perturb_circle, random_covariance, PointCloud,
};
use crate::spectral::{align_orthogonal, columns, eigs_near_zero, least_squares_map, mse, scale_sqrt_n, Spectrum};
use crate::tuning::{s_curve, select_epsilon, Selection, TuningCurve};

/// Operator checks sum over all pairs up to this size.
const OPERATOR_FULL_MAX_N: usize = 10000;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ResultRow {
    pub eps: f64,
    pub mse: f64,
    pub eig_err: f64,
    pub wall_time_s: f64,
}

/// `mse ≈ prefactor · N^exponent`, fitted in log-log space.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PowerLaw {
    pub exponent: f64,
    pub prefactor: f64,
}

impl PowerLaw {
    pub fn fit(x: &[f64], y: &[f64]) -> Result<PowerLaw> {
        if x.len() != y.len() || x.len() < 2 || x.iter().chain(y).any(|v| !(*v > 0.0)) {
            return Err(Error::InvalidInput("power law fit needs two or more positive points".into()));
        }
        let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
        let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
        let n = lx.len() as f64;
        let mx = lx.iter().sum::<f64>() / n;
        let my = ly.iter().sum::<f64>() / n;
        let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
        let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
        if sxx == 0.0 {
            return Err(Error::InvalidInput("power law fit needs distinct sizes".into()));
        }
        let exponent = sxy / sxx;
        Ok(PowerLaw {
            exponent,
            prefactor: (my - exponent * mx).exp(),
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OutlierRun {
    pub n: usize,
    pub removed: usize,
    pub remaining: usize,
    /// `(eps, mse, eig_err)` per swept value that succeeded.
    pub sweep: Vec<(f64, f64, f64)>,
    pub best_eps: f64,
    pub min_mse: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OutlierSummary {
    pub runs: Vec<OutlierRun>,
    /// Absent with fewer than two sizes.
    pub fit: Option<PowerLaw>,
}

#[derive(Clone, Debug)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
    /// `ε` values whose pipeline failed, with the error text. Their rows
    /// hold `NaN`.
    pub errors: Vec<(f64, String)>,
    /// Config echo followed by run details, in output order.
    pub metadata: Vec<(String, String)>,
    pub tuning: Option<(TuningCurve, Selection)>,
    pub outlier: Option<OutlierSummary>,
}

impl ResultTable {
    /// Row with the smallest finite MSE.
    pub fn best(&self) -> Option<&ResultRow> {
        self.rows
            .iter()
            .filter(|r| r.mse.is_finite())
            .min_by(|a, b| a.mse.total_cmp(&b.mse))
    }

    /// `eps,mse,eig_err,wall_time_s`.
    pub fn write_results_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "eps,mse,eig_err,wall_time_s")?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{:.6}",
                fmt_f64(r.eps),
                fmt_f64(r.mse),
                fmt_f64(r.eig_err),
                r.wall_time_s
            )?;
        }
        Ok(())
    }

    pub fn write_meta<W: Write>(&self, mut out: W) -> Result<()> {
        for (k, v) in &self.metadata {
            writeln!(out, "{k} = {v}")?;
        }
        Ok(())
    }
}

/// File-name form of an `ε` value.
pub fn eps_tag(eps: f64) -> String {
    format!("{eps:.6e}")
}

struct Sink {
    dir: Option<PathBuf>,
}

impl Sink {
    fn new(dir: Option<&Path>) -> Result<Sink> {
        if let Some(d) = dir {
            fs::create_dir_all(d)?;
        }
        Ok(Sink {
            dir: dir.map(Path::to_path_buf),
        })
    }

    fn write(&self, name: &str, body: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
        if let Some(dir) = &self.dir {
            let mut w = BufWriter::new(fs::File::create(dir.join(name))?);
            body(&mut w)?;
            w.flush()?;
        }
        Ok(())
    }
}

/// Generates the data set of an experiment.
pub fn experiment_cloud(config: &ExperimentConfig) -> Result<PointCloud> {
    let n = config.n;
    let seed = config.seed;
    match config.experiment {
        ExperimentKind::Ou1dNice | ExperimentKind::OutlierStudy => gen_gaussian_nice_1d(n),
        ExperimentKind::Ou1dRandom => gen_gaussian_random(n, &DMatrix::identity(1, 1), seed),
        ExperimentKind::Ou2d => gen_gaussian_random(n, &DMatrix::identity(2, 2), seed),
        ExperimentKind::Circle => gen_circle_nonuniform(n),
        ExperimentKind::CircleRandom => perturb_circle(&gen_circle_nonuniform(n)?, 0.5, seed),
        ExperimentKind::Sphere => gen_sphere_nonuniform(n, &random_covariance(3, seed.wrapping_add(1000)), seed),
        ExperimentKind::TorusOperator => gen_torus_grid((n as f64).sqrt().round() as usize),
        ExperimentKind::CircleOperator => match config.sampling {
            Sampling::Grid => gen_circle_grid(n),
            Sampling::VonMises => gen_circle_von_mises(n, 1.0, seed),
        },
    }
}

/// How an eigenvector block is compared with its references.
enum Comparison {
    /// Orthogonal alignment with `√N`-normalized references; report the
    /// MSE of column `report`.
    Procrustes { report: usize },
    /// Linear map onto the references; report the largest column MSE.
    LeastSquares,
}

struct EigenTarget {
    block: Range<usize>,
    eigenvalue: f64,
    reference: DMatrix<f64>,
    comparison: Comparison,
    mask: Option<Vec<usize>>,
}

fn normalized_columns(cols: Vec<Vec<f64>>) -> DMatrix<f64> {
    let n = cols[0].len();
    let mut m = DMatrix::from_fn(n, cols.len(), |i, c| cols[c][i]);
    let target = (n as f64).sqrt();
    for mut c in m.column_iter_mut() {
        let norm = c.norm();
        c *= target / norm;
    }
    m
}

fn eigen_target(kind: ExperimentKind, cloud: &PointCloud) -> Result<EigenTarget> {
    let pts = cloud.points();
    let n = cloud.len();
    let within = |i: usize| pts.row(i).iter().all(|v| (-2.0..=2.0).contains(v));
    let box_mask = || Some((0..n).filter(|&i| within(i)).collect::<Vec<_>>());
    Ok(match kind {
        ExperimentKind::Ou1dNice | ExperimentKind::Ou1dRandom | ExperimentKind::OutlierStudy => EigenTarget {
            block: 3..4,
            eigenvalue: -3.0,
            reference: normalized_columns(vec![hermite(3, &pts.column(0))?]),
            comparison: Comparison::Procrustes { report: 0 },
            mask: box_mask(),
        },
        ExperimentKind::Ou2d => EigenTarget {
            block: 3..6,
            eigenvalue: -2.0,
            reference: normalized_columns(vec![
                ou2d_eigenfunction(2, 0, pts)?,
                ou2d_eigenfunction(1, 1, pts)?,
                ou2d_eigenfunction(0, 2, pts)?,
            ]),
            comparison: Comparison::Procrustes { report: 1 },
            mask: box_mask(),
        },
        ExperimentKind::Circle | ExperimentKind::CircleRandom => {
            let theta = cloud.latent().ok_or(Error::NoLatent)?.column(0);
            EigenTarget {
                block: 1..3,
                eigenvalue: -1.0,
                reference: normalized_columns(vec![
                    circle_eigenfunction(1, Parity::Sin, &theta)?,
                    circle_eigenfunction(1, Parity::Cos, &theta)?,
                ]),
                comparison: Comparison::Procrustes { report: 0 },
                mask: None,
            }
        }
        ExperimentKind::Sphere => EigenTarget {
            block: 1..4,
            eigenvalue: -2.0,
            reference: DMatrix::from_fn(n, 3, |i, c| pts.row(i)[c]),
            comparison: Comparison::LeastSquares,
            mask: None,
        },
        ExperimentKind::TorusOperator | ExperimentKind::CircleOperator => {
            return Err(Error::Config(format!("{kind} is an operator check")))
        }
    })
}

fn column_mse(a: &DMatrix<f64>, b: &DMatrix<f64>, c: usize, mask: Option<&[usize]>) -> Result<f64> {
    let x: Vec<f64> = a.column(c).iter().copied().collect();
    let y: Vec<f64> = b.column(c).iter().copied().collect();
    mse(&x, &y, mask)
}

/// `(mse, eig_err)` of a scaled spectrum against the target.
fn score(sp: &Spectrum, target: &EigenTarget) -> Result<(f64, f64)> {
    let block = columns(&sp.eigenvectors, target.block.clone());
    let eig_err = sp.eigenvalues[target.block.clone()]
        .iter()
        .map(|l| (l - target.eigenvalue).abs())
        .fold(0.0, f64::max);
    let mask = target.mask.as_deref();
    let err = match target.comparison {
        Comparison::Procrustes { report } => {
            let (_, aligned) = align_orthogonal(&block, &target.reference)?;
            column_mse(&aligned, &target.reference, report, mask)?
        }
        Comparison::LeastSquares => {
            let fit = least_squares_map(&block, &target.reference)?;
            (0..target.reference.ncols())
                .map(|c| column_mse(&fit.fitted, &target.reference, c, mask))
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .fold(0.0, f64::max)
        }
    };
    Ok((err, eig_err))
}

fn tune(
    cloud: &PointCloud,
    rho: &[f64],
    graph: &NeighborGraph,
    config: &ExperimentConfig,
) -> Result<(TuningCurve, Selection)> {
    let grid: Vec<i32> = (config.tuning_grid.0..=config.tuning_grid.1).collect();
    let curve = s_curve(cloud, rho, &grid, Support::auto(cloud.len(), graph))?;
    let sel = select_epsilon(&curve)?;
    Ok((curve, sel))
}

fn echo(config: &ExperimentConfig) -> Vec<(String, String)> {
    config.echo()
}

fn record_tuning(meta: &mut Vec<(String, String)>, sel: &Selection) {
    meta.push(("eps_star".into(), fmt_f64(sel.eps_star)));
    meta.push(("a_max".into(), fmt_f64(sel.a_max)));
    meta.push(("d_hat".into(), fmt_f64(sel.d_hat)));
}

/// Runs one configured experiment. With an output directory, writes
/// `results.csv`, `meta.txt` and the per-`ε` files there.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ResultTable> {
    config.validate()?;
    let sink = Sink::new(config.output_dir.as_deref())?;
    let table = match config.experiment {
        ExperimentKind::OutlierStudy => outlier_study(config, &sink)?,
        k if k.is_operator_check() => operator_check(config, &sink)?,
        _ => eigen_sweep(config, &sink)?,
    };
    sink.write("results.csv", |w| table.write_results_csv(w))?;
    sink.write("meta.txt", |w| table.write_meta(w))?;
    Ok(table)
}

fn required_eigenfunctions(target: &EigenTarget, config: &ExperimentConfig) -> Result<()> {
    if config.eigenfunctions < target.block.end {
        return Err(Error::Config(format!(
            "{} compares eigenvectors up to index {}; set eigenfunctions >= {}",
            config.experiment,
            target.block.end - 1,
            target.block.end
        )));
    }
    Ok(())
}

struct Prepared {
    cloud: PointCloud,
    graph: NeighborGraph,
    profile: BandwidthProfile,
    support: SymmetricSupport,
}

fn prepare(cloud: PointCloud, config: &ExperimentConfig) -> Result<Prepared> {
    let d = config.experiment.dimension();
    let graph = knn(&cloud, config.k_support.min(cloud.len()))?;
    let profile = BandwidthProfile::estimate(&cloud, &graph, config.k0, d, config.beta)?;
    let support = symmetrized_support(&graph);
    Ok(Prepared {
        cloud,
        graph,
        profile,
        support,
    })
}

/// Per-`ε` outcome of the eigen pipeline.
type SweepPoint = (f64, Result<(f64, f64, Spectrum)>, f64);

fn sweep(prep: &Prepared, target: &EigenTarget, eps_list: &[f64], config: &ExperimentConfig) -> Vec<SweepPoint> {
    let d = config.experiment.dimension();
    eps_list
        .iter()
        .map(|&eps| {
            let start = Instant::now();
            let outcome = (|| {
                let gm = GeneratorMatrices::build(
                    &prep.cloud,
                    &prep.profile.rho,
                    eps,
                    config.alpha,
                    d,
                    &prep.support,
                )?;
                let sp = scale_sqrt_n(eigs_near_zero(&gm, config.eigenfunctions)?)?;
                let (m, e) = score(&sp, target)?;
                Ok((m, e, sp))
            })();
            (eps, outcome, start.elapsed().as_secs_f64())
        })
        .collect()
}

fn eigen_sweep(config: &ExperimentConfig, sink: &Sink) -> Result<ResultTable> {
    let cloud = experiment_cloud(config)?;
    let target = eigen_target(config.experiment, &cloud)?;
    required_eigenfunctions(&target, config)?;
    let prep = prepare(cloud, config)?;
    let mut meta = echo(config);
    let mut tuning = None;
    let eps_list = match config.eps_values() {
        Some(v) => v,
        None => {
            let (curve, sel) = tune(&prep.cloud, &prep.profile.rho, &prep.graph, config)?;
            sink.write("tuning.csv", |w| curve.write_csv(w))?;
            record_tuning(&mut meta, &sel);
            let eps = sel.eps_star * config.eps_multiplier;
            tuning = Some((curve, sel));
            vec![eps]
        }
    };
    let mut rows = Vec::new();
    let mut errors = Vec::new();
    for (eps, outcome, secs) in sweep(&prep, &target, &eps_list, config) {
        match outcome {
            Ok((m, e, sp)) => {
                sink.write(&format!("eigvecs_{}.csv", eps_tag(eps)), |w| {
                    sp.write_csv(prep.cloud.latent(), w)
                })?;
                rows.push(ResultRow {
                    eps,
                    mse: m,
                    eig_err: e,
                    wall_time_s: secs,
                });
            }
            Err(err) => {
                meta.push((format!("error.{}", eps_tag(eps)), err.to_string()));
                errors.push((eps, err.to_string()));
                rows.push(ResultRow {
                    eps,
                    mse: f64::NAN,
                    eig_err: f64::NAN,
                    wall_time_s: secs,
                });
            }
        }
    }
    Ok(ResultTable {
        rows,
        errors,
        metadata: meta,
        tuning,
        outlier: None,
    })
}

/// Bandwidth, test function and reference operator of an operator check.
struct OperatorSetup {
    rho: Vec<f64>,
    f: Vec<f64>,
    reference: Vec<f64>,
    d: usize,
}

fn operator_setup(cloud: &PointCloud, config: &ExperimentConfig) -> Result<OperatorSetup> {
    let lat = cloud.latent().ok_or(Error::NoLatent)?;
    let d = config.experiment.dimension();
    let sin = Fourier {
        axis: 0,
        k: 1.0,
        parity: Parity::Sin,
    };
    let exp_cos = ExpCos { axis: 0, scale: 1.0 };
    let values = |g: &dyn LatentFunction| (0..lat.nrows()).map(|i| g.value(lat.row(i))).collect::<Vec<f64>>();
    let f = values(&sin);
    let (rho, op) = match config.sampling {
        Sampling::VonMises if config.experiment == ExperimentKind::CircleOperator => {
            // normalized q = exp(cos θ)/(2π I₀(1)), bandwidth q^β
            let i0 = bessel_i0(1.0);
            let q: Vec<f64> = values(&exp_cos)
                .into_iter()
                .map(|v| v / (2.0 * std::f64::consts::PI * i0))
                .collect();
            let rho = q.iter().map(|v| v.powf(config.beta)).collect();
            let (c1, _) = c_constants(config.alpha, config.beta, d);
            (rho, ReferenceOperator::GradientFlow { c1, density: &exp_cos })
        }
        _ => {
            let op = match config.formulation {
                Formulation::Left => ReferenceOperator::Laplacian,
                Formulation::Right | Formulation::Symmetric => ReferenceOperator::BandwidthDrift {
                    d,
                    bandwidth: &exp_cos,
                },
            };
            (values(&exp_cos), op)
        }
    };
    let reference = reference_operator(op, &sin, cloud)?;
    Ok(OperatorSetup { rho, f, reference, d })
}

/// `I₀(x)` by its power series.
fn bessel_i0(x: f64) -> f64 {
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..60 {
        term *= (x / 2.0).powi(2) / (k * k) as f64;
        sum += term;
    }
    sum
}

fn operator_check(config: &ExperimentConfig, sink: &Sink) -> Result<ResultTable> {
    let cloud = experiment_cloud(config)?;
    let setup = operator_setup(&cloud, config)?;
    let support = if cloud.len() <= OPERATOR_FULL_MAX_N {
        None
    } else {
        Some(symmetrized_support(&knn(&cloud, config.k_support.min(cloud.len()))?))
    };
    let eps_list = config
        .eps_values()
        .ok_or_else(|| Error::Config("operator checks need explicit eps values".into()))?;
    let mut meta = echo(config);
    let mut rows = Vec::new();
    let mut errors = Vec::new();
    for eps in eps_list {
        let start = Instant::now();
        let spec = OperatorSpec {
            eps,
            alpha: config.alpha,
            d: setup.d,
            formulation: config.formulation,
        };
        match apply_generator(&cloud, &setup.rho, spec, &setup.f, support.as_ref()) {
            Ok(est) => {
                let m = mse(&est, &setup.reference, None)?;
                let worst = est
                    .iter()
                    .zip(&setup.reference)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
                sink.write(&format!("operator_{}.csv", eps_tag(eps)), |w| {
                    write_operator_csv(&cloud, &est, &setup.reference, w)
                })?;
                rows.push(ResultRow {
                    eps,
                    mse: m,
                    eig_err: worst,
                    wall_time_s: start.elapsed().as_secs_f64(),
                });
            }
            Err(err) => {
                meta.push((format!("error.{}", eps_tag(eps)), err.to_string()));
                errors.push((eps, err.to_string()));
                rows.push(ResultRow {
                    eps,
                    mse: f64::NAN,
                    eig_err: f64::NAN,
                    wall_time_s: start.elapsed().as_secs_f64(),
                });
            }
        }
    }
    Ok(ResultTable {
        rows,
        errors,
        metadata: meta,
        tuning: None,
        outlier: None,
    })
}

fn write_operator_csv(cloud: &PointCloud, est: &[f64], reference: &[f64], w: &mut dyn Write) -> Result<()> {
    let lat = cloud.latent().ok_or(Error::NoLatent)?;
    let names: Vec<&str> = ["theta", "phi"].into_iter().take(lat.ncols()).collect();
    writeln!(w, "{},estimate,reference", names.join(","))?;
    for i in 0..cloud.len() {
        let z: Vec<String> = lat.row(i).iter().map(|v| fmt_f64(*v)).collect();
        writeln!(w, "{},{},{}", z.join(","), fmt_f64(est[i]), fmt_f64(reference[i]))?;
    }
    Ok(())
}

/// Indices of the `⌊√N⌋` points with the smallest pilot density (ties by
/// index), removed before the fixed-bandwidth analysis.
pub fn outlier_indices(q0: &[f64]) -> Vec<usize> {
    let count = (q0.len() as f64).sqrt().floor() as usize;
    let mut order: Vec<usize> = (0..q0.len()).collect();
    order.sort_by(|&a, &b| q0[a].total_cmp(&q0[b]).then(a.cmp(&b)));
    order.truncate(count);
    order.sort_unstable();
    order
}

fn outlier_study(config: &ExperimentConfig, sink: &Sink) -> Result<ResultTable> {
    let eps_list = config
        .eps_values()
        .ok_or_else(|| Error::Config("the outlier study needs explicit eps values".into()))?;
    let mut meta = echo(config);
    let mut rows = Vec::new();
    let mut errors = Vec::new();
    let mut runs = Vec::new();
    for &n in &config.n_list {
        let start = Instant::now();
        let sized = ExperimentConfig { n, ..config.clone() };
        let full = experiment_cloud(&sized)?;
        let graph = knn(&full, config.k_support.min(n))?;
        let pilot = BandwidthProfile::estimate(&full, &graph, config.k0, 1, 0.0)?;
        drop(graph);
        let removed = outlier_indices(&pilot.q0);
        let mut dropped = vec![false; n];
        removed.iter().for_each(|&i| dropped[i] = true);
        let keep: Vec<usize> = (0..n).filter(|&i| !dropped[i]).collect();
        let cloud = full.subset(&keep)?;
        let target = eigen_target(ExperimentKind::OutlierStudy, &cloud)?;
        required_eigenfunctions(&target, config)?;
        let prep = prepare(cloud, &sized)?;
        let mut sweep_rows = Vec::new();
        for (eps, outcome, _) in sweep(&prep, &target, &eps_list, &sized) {
            match outcome {
                Ok((m, e, _)) => sweep_rows.push((eps, m, e)),
                Err(err) => {
                    meta.push((format!("error.n{n}.{}", eps_tag(eps)), err.to_string()));
                    errors.push((eps, format!("n = {n}: {err}")));
                }
            }
        }
        let best = sweep_rows.iter().copied().min_by(|a, b| a.1.total_cmp(&b.1));
        let (best_eps, min_mse, best_eig) = best.unwrap_or((f64::NAN, f64::NAN, f64::NAN));
        meta.push((format!("removed.n{n}"), removed.len().to_string()));
        meta.push((format!("best_eps.n{n}"), fmt_f64(best_eps)));
        rows.push(ResultRow {
            eps: best_eps,
            mse: min_mse,
            eig_err: best_eig,
            wall_time_s: start.elapsed().as_secs_f64(),
        });
        runs.push(OutlierRun {
            n,
            removed: removed.len(),
            remaining: keep.len(),
            sweep: sweep_rows,
            best_eps,
            min_mse,
        });
    }
    let sizes: Vec<f64> = runs.iter().map(|r| r.n as f64).collect();
    let mins: Vec<f64> = runs.iter().map(|r| r.min_mse).collect();
    let fit = PowerLaw::fit(&sizes, &mins).ok();
    if let Some(p) = fit {
        meta.push(("power_law_exponent".into(), fmt_f64(p.exponent)));
        meta.push(("power_law_prefactor".into(), fmt_f64(p.prefactor)));
    }
    sink.write("outlier.csv", |w| {
        writeln!(w, "n,removed,eps,mse,eig_err")?;
        for r in &runs {
            for (eps, m, e) in &r.sweep {
                writeln!(w, "{},{},{},{},{}", r.n, r.removed, fmt_f64(*eps), fmt_f64(*m), fmt_f64(*e))?;
            }
        }
        Ok(())
    })?;
    Ok(ResultTable {
        rows,
        errors,
        metadata: meta,
        tuning: None,
        outlier: Some(OutlierSummary { runs, fit }),
    })
}
