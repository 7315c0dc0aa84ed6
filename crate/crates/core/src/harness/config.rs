//! Experiment configuration: `key = value` text with command-line overrides.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::kernel::Formulation;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExperimentKind {
    Ou1dNice,
    Ou1dRandom,
    Ou2d,
    Circle,
    CircleRandom,
    Sphere,
    TorusOperator,
    CircleOperator,
    OutlierStudy,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 9] = [
        ExperimentKind::Ou1dNice,
        ExperimentKind::Ou1dRandom,
        ExperimentKind::Ou2d,
        ExperimentKind::Circle,
        ExperimentKind::CircleRandom,
        ExperimentKind::Sphere,
        ExperimentKind::TorusOperator,
        ExperimentKind::CircleOperator,
        ExperimentKind::OutlierStudy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Ou1dNice => "ou1d_nice",
            ExperimentKind::Ou1dRandom => "ou1d_random",
            ExperimentKind::Ou2d => "ou2d",
            ExperimentKind::Circle => "circle",
            ExperimentKind::CircleRandom => "circle_random",
            ExperimentKind::Sphere => "sphere",
            ExperimentKind::TorusOperator => "torus_operator",
            ExperimentKind::CircleOperator => "circle_operator",
            ExperimentKind::OutlierStudy => "outlier_study",
        }
    }

    pub fn is_operator_check(self) -> bool {
        matches!(self, ExperimentKind::TorusOperator | ExperimentKind::CircleOperator)
    }

    /// Intrinsic dimension of the generated data.
    pub fn dimension(self) -> usize {
        match self {
            ExperimentKind::Ou2d | ExperimentKind::Sphere | ExperimentKind::TorusOperator => 2,
            _ => 1,
        }
    }

    fn default_n(self) -> usize {
        match self {
            ExperimentKind::Ou1dNice => 2000,
            ExperimentKind::Ou1dRandom => 20000,
            ExperimentKind::Ou2d => 10000,
            ExperimentKind::Circle | ExperimentKind::CircleRandom => 1500,
            ExperimentKind::Sphere => 3000,
            ExperimentKind::TorusOperator => 62500,
            ExperimentKind::CircleOperator => 3000,
            ExperimentKind::OutlierStudy => 100000,
        }
    }

    fn default_preset(self) -> Preset {
        match self {
            ExperimentKind::Ou1dNice | ExperimentKind::Ou1dRandom | ExperimentKind::Ou2d => Preset::GradientFlowVb,
            ExperimentKind::OutlierStudy => Preset::GradientFlowFixed,
            _ => Preset::LaplacianVb,
        }
    }

    fn default_eigenfunctions(self) -> usize {
        match self {
            ExperimentKind::Ou2d => 7,
            _ => 5,
        }
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ExperimentKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown experiment '{s}'")))
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Named `(α, β)` choices; the variable-bandwidth ones depend on `d`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    /// `β = −1/2`, `α = 1/2 − d/4`: the Laplacian.
    LaplacianVb,
    /// `β = −1/2`, `α = −d/4`: `Δ + ∇q/q·∇`.
    GradientFlowVb,
    /// `(α, β) = (1, 0)`.
    LaplacianFixed,
    /// `(α, β) = (1/2, 0)`.
    GradientFlowFixed,
}

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Preset::LaplacianVb => "laplacian-vb",
            Preset::GradientFlowVb => "gradientflow-vb",
            Preset::LaplacianFixed => "laplacian-fixed",
            Preset::GradientFlowFixed => "gradientflow-fixed",
        }
    }

    /// `(α, β)` in dimension `d`.
    pub fn parameters(self, d: usize) -> (f64, f64) {
        let d = d as f64;
        match self {
            Preset::LaplacianVb => (0.5 - d / 4.0, -0.5),
            Preset::GradientFlowVb => (-d / 4.0, -0.5),
            Preset::LaplacianFixed => (1.0, 0.0),
            Preset::GradientFlowFixed => (0.5, 0.0),
        }
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            Preset::LaplacianVb,
            Preset::GradientFlowVb,
            Preset::LaplacianFixed,
            Preset::GradientFlowFixed,
        ]
        .into_iter()
        .find(|p| p.name() == s)
        .ok_or_else(|| Error::Config(format!("unknown preset '{s}'")))
    }
}

/// How `ε` is chosen.
#[derive(Clone, Debug, PartialEq)]
pub enum EpsSpec {
    /// Tuning-curve maximizer.
    Auto,
    /// Explicit values, strictly increasing.
    Values(Vec<f64>),
}

/// `count` log-spaced values from `lo` to `hi` inclusive.
pub fn log_space(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.log10(), hi.log10());
    (0..count)
        .map(|i| 10f64.powf(a + (b - a) * i as f64 / (count - 1) as f64))
        .collect()
}

/// Default sweep: 65 values from 1e−5 to 1.
pub fn default_sweep() -> Vec<f64> {
    log_space(1e-5, 1.0, 65)
}

/// Sweep of the outlier study: three values per decade over
/// `[10⁻⁷, 10⁻²]`. Large clouds need `ε` well below `10⁻⁵` once the
/// support is truncated to nearest neighbors.
pub fn outlier_sweep() -> Vec<f64> {
    log_space(1e-7, 1e-2, 16)
}

impl FromStr for EpsSpec {
    type Err = Error;

    /// `auto`, `sweep`, `sweep:lo:hi:count`, a number, or a comma list.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "auto" {
            return Ok(EpsSpec::Auto);
        }
        let values = if s == "sweep" {
            default_sweep()
        } else if let Some(rest) = s.strip_prefix("sweep:") {
            let parts: Vec<&str> = rest.split(':').collect();
            if parts.len() != 3 {
                return Err(Error::Config(format!("sweep needs lo:hi:count, got '{rest}'")));
            }
            let lo = parse_f64("eps", parts[0])?;
            let hi = parse_f64("eps", parts[1])?;
            let count = parse_usize("eps", parts[2])?;
            if count == 0 || !(lo > 0.0) || !(hi >= lo) {
                return Err(Error::Config(format!("bad sweep '{rest}'")));
            }
            log_space(lo, hi, count)
        } else {
            s.split(',').map(|v| parse_f64("eps", v)).collect::<Result<Vec<_>>>()?
        };
        if values.is_empty() || values.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::Config(format!("eps values must be positive, got '{s}'")));
        }
        if values.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config(format!("eps list must be strictly increasing, got '{s}'")));
        }
        Ok(EpsSpec::Values(values))
    }
}

impl fmt::Display for EpsSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EpsSpec::Auto => f.write_str("auto"),
            EpsSpec::Values(v) => {
                let parts: Vec<String> = v.iter().map(|x| format!("{x:e}")).collect();
                f.write_str(&parts.join(","))
            }
        }
    }
}

/// Point layout for the circle operator check.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sampling {
    /// Uniform angular grid with the bandwidth `exp(cos θ)`.
    Grid,
    /// Random draws from `q ∝ exp(cos θ)` with bandwidth `q^β`.
    VonMises,
}

impl FromStr for Sampling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "grid" => Ok(Sampling::Grid),
            "vonmises" => Ok(Sampling::VonMises),
            other => Err(Error::Config(format!("unknown sampling '{other}'"))),
        }
    }
}

impl fmt::Display for Sampling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sampling::Grid => "grid",
            Sampling::VonMises => "vonmises",
        })
    }
}

fn formulation_name(f: Formulation) -> &'static str {
    match f {
        Formulation::Left => "left",
        Formulation::Right => "right",
        Formulation::Symmetric => "symmetric",
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub n: usize,
    /// Sample sizes of the outlier study.
    pub n_list: Vec<usize>,
    pub preset: Option<Preset>,
    pub alpha: f64,
    pub beta: f64,
    pub eps: EpsSpec,
    /// Every swept `ε` is multiplied by this.
    pub eps_multiplier: f64,
    pub k_support: usize,
    pub k0: usize,
    pub seed: u64,
    pub eigenfunctions: usize,
    pub output_dir: Option<PathBuf>,
    pub formulation: Formulation,
    pub sampling: Sampling,
    /// Exponent range `lo..=hi` of the tuning grid `ε = 2^i`.
    pub tuning_grid: (i32, i32),
}

const KEYS: &[&str] = &[
    "experiment",
    "n",
    "n_list",
    "preset",
    "alpha",
    "beta",
    "eps",
    "eps_multiplier",
    "k_support",
    "k0",
    "seed",
    "eigenfunctions",
    "output_dir",
    "formulation",
    "sampling",
    "tuning_grid",
];

fn parse_f64(key: &str, v: &str) -> Result<f64> {
    v.trim()
        .parse()
        .map_err(|_| Error::Config(format!("{key}: '{v}' is not a number")))
}

fn parse_usize(key: &str, v: &str) -> Result<usize> {
    v.trim()
        .parse()
        .map_err(|_| Error::Config(format!("{key}: '{v}' is not a non-negative integer")))
}

/// Parses `key = value` lines; blank lines and `#` comments are skipped.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        out.push(parse_assignment(line).map_err(|_| {
            Error::Config(format!("line {}: expected 'key = value', got '{raw}'", lineno + 1))
        })?);
    }
    Ok(out)
}

/// One `key=value` assignment, as given to `--set`.
pub fn parse_assignment(s: &str) -> Result<(String, String)> {
    match s.split_once('=') {
        Some((k, v)) if !k.trim().is_empty() => Ok((k.trim().to_string(), v.trim().to_string())),
        _ => Err(Error::Config(format!("expected key=value, got '{s}'"))),
    }
}

/// Clouds up to this size use every pair as kernel support.
pub const FULL_SUPPORT_MAX: usize = 5000;

/// Neighbors kept per point: all pairs for small clouds, 500 on the torus,
/// 512 otherwise.
pub fn default_k_support(kind: ExperimentKind, n: usize) -> usize {
    match kind {
        ExperimentKind::TorusOperator => 500,
        _ if n <= FULL_SUPPORT_MAX => n,
        _ => 512,
    }
}

impl ExperimentConfig {
    /// Defaults for `experiment`.
    pub fn defaults(experiment: ExperimentKind) -> ExperimentConfig {
        let n = experiment.default_n();
        let preset = if experiment.is_operator_check() {
            None
        } else {
            Some(experiment.default_preset())
        };
        let (alpha, beta) = match preset {
            Some(p) => p.parameters(experiment.dimension()),
            None => (0.0, -0.5),
        };
        let eps = match experiment {
            k if k.is_operator_check() => EpsSpec::Values(vec![0.001, 0.01, 0.1]),
            ExperimentKind::OutlierStudy => EpsSpec::Values(outlier_sweep()),
            _ => EpsSpec::Values(default_sweep()),
        };
        let k_support = default_k_support(experiment, n);
        ExperimentConfig {
            experiment,
            n,
            n_list: vec![1000, 10000, 100000],
            preset,
            alpha,
            beta,
            eps,
            eps_multiplier: 1.0,
            k_support,
            k0: crate::density::DEFAULT_K0,
            seed: 1,
            eigenfunctions: experiment.default_eigenfunctions(),
            output_dir: None,
            formulation: if experiment == ExperimentKind::TorusOperator {
                Formulation::Right
            } else {
                Formulation::Symmetric
            },
            sampling: Sampling::Grid,
            tuning_grid: (-30, 10),
        }
    }

    /// Builds a config from assignments applied in order. `experiment`
    /// selects the defaults; `preset` is applied before explicit `alpha`
    /// and `beta` regardless of order.
    pub fn from_pairs(pairs: &[(String, String)]) -> Result<ExperimentConfig> {
        for (k, _) in pairs {
            if !KEYS.contains(&k.as_str()) {
                return Err(Error::Config(format!("unknown key '{k}'")));
            }
        }
        let last = |key: &str| pairs.iter().rev().find(|(k, _)| k == key).map(|(_, v)| v.as_str());
        let experiment: ExperimentKind = last("experiment")
            .ok_or_else(|| Error::Config("missing 'experiment'".into()))?
            .parse()?;
        let mut c = ExperimentConfig::defaults(experiment);
        let n_set = last("n").is_some();
        if let Some(v) = last("n") {
            c.n = parse_usize("n", v)?;
            c.k_support = default_k_support(experiment, c.n);
        }
        if let Some(v) = last("preset") {
            let p: Preset = v.parse()?;
            c.preset = Some(p);
            (c.alpha, c.beta) = p.parameters(experiment.dimension());
        }
        if let Some(v) = last("alpha") {
            c.alpha = parse_f64("alpha", v)?;
            c.preset = None;
        }
        if let Some(v) = last("beta") {
            c.beta = parse_f64("beta", v)?;
            c.preset = None;
        }
        if let Some(v) = last("n_list") {
            c.n_list = v.split(',').map(|x| parse_usize("n_list", x)).collect::<Result<_>>()?;
        }
        if let Some(v) = last("eps") {
            c.eps = v.parse()?;
        }
        if let Some(v) = last("eps_multiplier") {
            c.eps_multiplier = parse_f64("eps_multiplier", v)?;
        }
        if let Some(v) = last("k_support") {
            c.k_support = parse_usize("k_support", v)?;
        }
        if let Some(v) = last("k0") {
            c.k0 = parse_usize("k0", v)?;
        }
        if let Some(v) = last("seed") {
            c.seed = v
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("seed: '{v}' is not an integer")))?;
        }
        if let Some(v) = last("eigenfunctions") {
            c.eigenfunctions = parse_usize("eigenfunctions", v)?;
        }
        if let Some(v) = last("output_dir") {
            c.output_dir = Some(PathBuf::from(v));
        }
        if let Some(v) = last("formulation") {
            c.formulation = v.parse().map_err(|e: Error| Error::Config(e.to_string()))?;
        }
        if let Some(v) = last("sampling") {
            c.sampling = v.parse()?;
            if c.sampling == Sampling::VonMises && !n_set {
                c.n = 8000;
                c.k_support = default_k_support(experiment, c.n);
            }
        }
        if let Some(v) = last("tuning_grid") {
            let (a, b) = v
                .split_once(':')
                .ok_or_else(|| Error::Config(format!("tuning_grid needs lo:hi, got '{v}'")))?;
            let lo = a.trim().parse().map_err(|_| Error::Config(format!("tuning_grid: bad '{a}'")))?;
            let hi = b.trim().parse().map_err(|_| Error::Config(format!("tuning_grid: bad '{b}'")))?;
            c.tuning_grid = (lo, hi);
        }
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n < 2 {
            return bad(format!("n must be at least 2, got {}", self.n));
        }
        if self.experiment == ExperimentKind::TorusOperator {
            let side = (self.n as f64).sqrt().round() as usize;
            if side * side != self.n {
                return bad(format!("torus n must be a perfect square, got {}", self.n));
            }
        }
        if self.experiment == ExperimentKind::OutlierStudy && self.n_list.iter().any(|&n| n < 100) {
            return bad("outlier study sizes must be at least 100".into());
        }
        if self.k_support == 0 || self.k0 < 2 || self.k0 > self.k_support {
            return bad(format!(
                "need 2 <= k0 <= k_support, got k0 = {}, k_support = {}",
                self.k0, self.k_support
            ));
        }
        if self.eigenfunctions == 0 {
            return bad("eigenfunctions must be positive".into());
        }
        if !(self.eps_multiplier > 0.0) || !self.eps_multiplier.is_finite() {
            return bad("eps_multiplier must be positive".into());
        }
        if !self.alpha.is_finite() || !self.beta.is_finite() {
            return bad("alpha and beta must be finite".into());
        }
        if self.tuning_grid.0 >= self.tuning_grid.1 {
            return bad("tuning_grid must have lo < hi".into());
        }
        if self.sampling == Sampling::VonMises && self.formulation != Formulation::Symmetric {
            return bad("von Mises sampling supports only the symmetric formulation".into());
        }
        Ok(())
    }

    /// Swept `ε` values after the multiplier, or `None` for `auto`.
    pub fn eps_values(&self) -> Option<Vec<f64>> {
        match &self.eps {
            EpsSpec::Auto => None,
            EpsSpec::Values(v) => Some(v.iter().map(|e| e * self.eps_multiplier).collect()),
        }
    }

    /// Canonical `key = value` echo of every setting.
    pub fn echo(&self) -> Vec<(String, String)> {
        let list = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        vec![
            ("experiment".into(), self.experiment.to_string()),
            ("n".into(), self.n.to_string()),
            ("n_list".into(), list(&self.n_list)),
            (
                "preset".into(),
                self.preset.map_or("none".to_string(), |p| p.name().to_string()),
            ),
            ("alpha".into(), format!("{}", self.alpha)),
            ("beta".into(), format!("{}", self.beta)),
            ("eps".into(), self.eps.to_string()),
            ("eps_multiplier".into(), format!("{}", self.eps_multiplier)),
            ("k_support".into(), self.k_support.to_string()),
            ("k0".into(), self.k0.to_string()),
            ("seed".into(), self.seed.to_string()),
            ("eigenfunctions".into(), self.eigenfunctions.to_string()),
            (
                "output_dir".into(),
                self.output_dir
                    .as_ref()
                    .map_or("none".to_string(), |p| p.display().to_string()),
            ),
            ("formulation".into(), formulation_name(self.formulation).into()),
            ("sampling".into(), self.sampling.to_string()),
            (
                "tuning_grid".into(),
                format!("{}:{}", self.tuning_grid.0, self.tuning_grid.1),
            ),
        ]
    }
}
