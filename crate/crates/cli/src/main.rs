use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;
use varband::density::{BandwidthProfile, DEFAULT_K0};
use varband::harness::{self, ExperimentConfig, ExperimentKind, Preset};
use varband::kernel::GeneratorMatrices;
use varband::neighbors::{knn, symmetrized_support, NeighborGraph, Support};
use varband::pointcloud::{self as pc, fmt_f64};
use varband::spectral::{eigs_near_zero, scale_sqrt_n};
use varband::tuning::{s_curve, select_epsilon};
use varband::{Error, PointCloud, Result};

#[derive(Parser)]
#[command(name = "varband", version, about = "Variable-bandwidth diffusion kernels on point clouds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a sample point cloud as CSV.
    Generate(GenerateArgs),
    /// Pilot bandwidth, density estimate and final bandwidth per point.
    Density(DensityArgs),
    /// Assemble the symmetric generator and dump it as `i,j,value`.
    Build(BuildArgs),
    /// Eigenpairs closest to zero, `√N`-normalized.
    Eigs(EigsArgs),
    /// Tuning curve `S(ε)` with the selected `ε` and dimension estimate.
    Tune(TuneArgs),
    /// Pointwise operator check against a closed-form reference.
    OperatorCheck(ConfigArgs),
    /// Run a configured experiment.
    Experiment(ConfigArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    CircleNonuniform,
    CircleGrid,
    CircleVonMises,
    GaussianNice,
    Gaussian,
    Sphere,
    Torus,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, value_enum)]
    kind: Kind,
    /// Number of points (per dimension for the torus).
    #[arg(long)]
    n: usize,
    /// Ambient dimension of the Gaussian kind.
    #[arg(long, default_value_t = 1)]
    dim: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Concentration of the von Mises circle.
    #[arg(long, default_value_t = 1.0)]
    kappa: f64,
    /// Perturb circle angles by U[0, amplitude].
    #[arg(long)]
    perturb: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CloudArgs {
    /// Point cloud CSV.
    #[arg(long)]
    input: PathBuf,
    /// Neighbors kept per point [default: N up to 5000 points, else 512].
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_K0)]
    k0: usize,
    /// Intrinsic dimension [default: latent width, else the tuning estimate].
    #[arg(long)]
    d: Option<usize>,
}

#[derive(Args)]
struct KernelArgs {
    #[arg(long, value_parser = parse_preset)]
    preset: Option<Preset>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
}

#[derive(Args)]
struct DensityArgs {
    #[command(flatten)]
    cloud: CloudArgs,
    #[arg(long, default_value_t = -0.5, allow_negative_numbers = true)]
    beta: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BuildArgs {
    #[command(flatten)]
    cloud: CloudArgs,
    #[command(flatten)]
    kernel: KernelArgs,
    #[arg(long)]
    eps: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EigsArgs {
    #[command(flatten)]
    cloud: CloudArgs,
    #[command(flatten)]
    kernel: KernelArgs,
    /// A positive number or `auto`.
    #[arg(long, default_value = "auto")]
    eps: String,
    /// Number of eigenpairs.
    #[arg(long, default_value_t = 5)]
    m: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TuneArgs {
    #[command(flatten)]
    cloud: CloudArgs,
    /// Bandwidth exponent; 0 gives the fixed-bandwidth curve.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    beta: f64,
    /// Exponent range `lo:hi` of `ε = 2^i`.
    #[arg(long, default_value = "-30:10", allow_hyphen_values = true)]
    grid: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ConfigArgs {
    /// File of `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one setting, `key=value`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

fn parse_preset(s: &str) -> std::result::Result<Preset, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(fs::File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

struct Loaded {
    cloud: PointCloud,
    graph: NeighborGraph,
}

fn load(args: &CloudArgs) -> Result<Loaded> {
    let cloud = PointCloud::load_csv(&args.input)?;
    let n = cloud.len();
    let k = args.k.unwrap_or(if n <= harness::FULL_SUPPORT_MAX { n } else { 512 });
    let graph = knn(&cloud, k)?;
    Ok(Loaded { cloud, graph })
}

/// Dimension from the flag, the cloud, or the fixed-bandwidth tuning curve.
fn dimension(args: &CloudArgs, l: &Loaded) -> Result<usize> {
    if let Some(d) = args.d.or(l.cloud.intrinsic_dim()) {
        return Ok(d);
    }
    let grid: Vec<i32> = (-30..=10).collect();
    let ones = vec![1.0; l.cloud.len()];
    let curve = s_curve(&l.cloud, &ones, &grid, Support::auto(l.cloud.len(), &l.graph))?;
    let d = select_epsilon(&curve)?.d_hat.round().max(1.0) as usize;
    eprintln!("estimated intrinsic dimension d = {d}");
    Ok(d)
}

fn kernel_parameters(k: &KernelArgs, d: usize) -> (f64, f64) {
    let (a, b) = k.preset.unwrap_or(Preset::LaplacianVb).parameters(d);
    (k.alpha.unwrap_or(a), k.beta.unwrap_or(b))
}

fn generate(a: &GenerateArgs) -> Result<()> {
    let cloud = match a.kind {
        Kind::CircleNonuniform => pc::gen_circle_nonuniform(a.n)?,
        Kind::CircleGrid => pc::gen_circle_grid(a.n)?,
        Kind::CircleVonMises => pc::gen_circle_von_mises(a.n, a.kappa, a.seed)?,
        Kind::GaussianNice => pc::gen_gaussian_nice_1d(a.n)?,
        Kind::Gaussian => pc::gen_gaussian_random(a.n, &DMatrix::identity(a.dim, a.dim), a.seed)?,
        Kind::Sphere => pc::gen_sphere_nonuniform(a.n, &pc::random_covariance(3, a.seed.wrapping_add(1000)), a.seed)?,
        Kind::Torus => pc::gen_torus_grid(a.n)?,
    };
    let cloud = match a.perturb {
        Some(amp) => pc::perturb_circle(&cloud, amp, a.seed)?,
        None => cloud,
    };
    let mut out = output(a.out.as_deref())?;
    cloud.write_csv(&mut out)?;
    out.flush()?;
    Ok(())
}

fn density(a: &DensityArgs) -> Result<()> {
    let l = load(&a.cloud)?;
    let d = dimension(&a.cloud, &l)?;
    let profile = BandwidthProfile::estimate(&l.cloud, &l.graph, a.cloud.k0, d, a.beta)?;
    let mut out = output(a.out.as_deref())?;
    profile.write_csv(&mut out)?;
    out.flush()?;
    eprintln!("eps0 = {}", fmt_f64(profile.eps0));
    Ok(())
}

fn generator(cloud: &CloudArgs, kernel: &KernelArgs, eps: f64, l: &Loaded) -> Result<GeneratorMatrices> {
    let d = dimension(cloud, l)?;
    let (alpha, beta) = kernel_parameters(kernel, d);
    let profile = BandwidthProfile::estimate(&l.cloud, &l.graph, cloud.k0, d, beta)?;
    GeneratorMatrices::build(&l.cloud, &profile.rho, eps, alpha, d, &symmetrized_support(&l.graph))
}

fn build(a: &BuildArgs) -> Result<()> {
    let l = load(&a.cloud)?;
    let gm = generator(&a.cloud, &a.kernel, a.eps, &l)?;
    let mut out = output(a.out.as_deref())?;
    gm.l_hat.write_triplets(&mut out)?;
    out.flush()?;
    Ok(())
}

fn eigs(a: &EigsArgs) -> Result<()> {
    let l = load(&a.cloud)?;
    let eps = if a.eps == "auto" {
        let d = dimension(&a.cloud, &l)?;
        let (_, beta) = kernel_parameters(&a.kernel, d);
        let profile = BandwidthProfile::estimate(&l.cloud, &l.graph, a.cloud.k0, d, beta)?;
        let grid: Vec<i32> = (-30..=10).collect();
        let curve = s_curve(&l.cloud, &profile.rho, &grid, Support::auto(l.cloud.len(), &l.graph))?;
        let sel = select_epsilon(&curve)?;
        eprintln!("eps = {}", fmt_f64(sel.eps_star));
        sel.eps_star
    } else {
        a.eps
            .parse()
            .map_err(|_| Error::Config(format!("eps must be a number or 'auto', got '{}'", a.eps)))?
    };
    let gm = generator(&a.cloud, &a.kernel, eps, &l)?;
    let sp = scale_sqrt_n(eigs_near_zero(&gm, a.m)?)?;
    let mut out = output(a.out.as_deref())?;
    sp.write_csv(l.cloud.latent(), &mut out)?;
    out.flush()?;
    Ok(())
}

fn tune(a: &TuneArgs) -> Result<()> {
    let l = load(&a.cloud)?;
    let (lo, hi) = a
        .grid
        .split_once(':')
        .and_then(|(x, y)| Some((x.trim().parse::<i32>().ok()?, y.trim().parse::<i32>().ok()?)))
        .filter(|(x, y)| x < y)
        .ok_or_else(|| Error::Config(format!("grid must be lo:hi with lo < hi, got '{}'", a.grid)))?;
    let rho = if a.beta == 0.0 {
        vec![1.0; l.cloud.len()]
    } else {
        let d = dimension(&a.cloud, &l)?;
        BandwidthProfile::estimate(&l.cloud, &l.graph, a.cloud.k0, d, a.beta)?.rho
    };
    let grid: Vec<i32> = (lo..=hi).collect();
    let curve = s_curve(&l.cloud, &rho, &grid, Support::auto(l.cloud.len(), &l.graph))?;
    let mut out = output(a.out.as_deref())?;
    curve.write_csv(&mut out)?;
    out.flush()?;
    let sel = select_epsilon(&curve)?;
    eprintln!(
        "eps_star = {}, a_max = {}, d_hat = {}",
        fmt_f64(sel.eps_star),
        fmt_f64(sel.a_max),
        fmt_f64(sel.d_hat)
    );
    Ok(())
}

fn experiment_config(a: &ConfigArgs, default_kind: Option<ExperimentKind>) -> Result<ExperimentConfig> {
    let mut pairs = Vec::new();
    if let Some(kind) = default_kind {
        pairs.push(("experiment".to_string(), kind.name().to_string()));
    }
    if let Some(path) = &a.config {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        pairs.extend(harness::parse_pairs(&text)?);
    }
    for s in &a.set {
        pairs.push(harness::parse_assignment(s)?);
    }
    ExperimentConfig::from_pairs(&pairs)
}

fn run_configured(a: &ConfigArgs, default_kind: Option<ExperimentKind>) -> Result<()> {
    let config = experiment_config(a, default_kind)?;
    if default_kind.is_some() && !config.experiment.is_operator_check() {
        return Err(Error::Config(format!("{} is not an operator check", config.experiment)));
    }
    let table = harness::run_experiment(&config)?;
    let mut out = BufWriter::new(io::stdout().lock());
    table.write_results_csv(&mut out)?;
    out.flush()?;
    for (eps, err) in &table.errors {
        eprintln!("eps = {}: {err}", fmt_f64(*eps));
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Generate(a) => generate(a),
        Command::Density(a) => density(a),
        Command::Build(a) => build(a),
        Command::Eigs(a) => eigs(a),
        Command::Tune(a) => tune(a),
        Command::OperatorCheck(a) => run_configured(a, Some(ExperimentKind::CircleOperator)),
        Command::Experiment(a) => run_configured(a, None),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) => ExitCode::from(1),
                _ => ExitCode::from(2),
            }
        }
    }
}
