//! Monte Carlo ratio experiments: synthetic data, a flat `key = value`
//! configuration format, seeded trials and CSV/JSON/text emission.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use rand_xoshiro::Xoshiro256PlusPlus;
use rayon::prelude::*;
use serde::Serialize;

use crate::bounds::{theorem1_bound, BoundInputs};
use crate::error::{Error, Result};
use crate::io::read_dataset;
use crate::metric::{Dataset, MetricKind, MetricSpec};
use crate::oracle::{optimal_k_clustering, CenterMode};
use crate::sampler::{d_ell_sample, SamplerConfig};
use crate::scalar::stable_sum;

/// Mixture centers and uniform points are drawn from `[-BOX, BOX]^d`.
pub const BOX_HALF_WIDTH: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    GaussianMixture,
    UniformBox,
    Collinear,
}

impl std::str::FromStr for GeneratorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "gaussian_mixture" => Ok(Self::GaussianMixture),
            "uniform_box" => Ok(Self::UniformBox),
            "collinear" => Ok(Self::Collinear),
            other => Err(Error::InvalidParameter(format!("unknown generator `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GeneratorSpec {
    pub kind: GeneratorKind,
    pub n: usize,
    pub d: usize,
    /// Mixture components (gaussian_mixture only).
    pub k_true: usize,
    /// Per-coordinate standard deviation around each mixture center.
    pub spread: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetSpec {
    File(PathBuf),
    Generator(GeneratorSpec),
}

impl DatasetSpec {
    pub fn load(&self) -> Result<Dataset<f64>> {
        match self {
            Self::File(path) => read_dataset(path),
            Self::Generator(g) => generate_dataset(g),
        }
    }
}

/// Deterministic synthetic data.
///
/// * `gaussian_mixture`: `k_true` centers uniform in the box; point `i`
///   belongs to component `i mod k_true` and is its center plus
///   `spread * N(0, I)`.
/// * `uniform_box`: points uniform in the box.
/// * `collinear`: points `s * v` for one random unit direction `v` and
///   `s` uniform in `[0, BOX)`; for `d = 1` these are plain scalars.
pub fn generate_dataset(spec: &GeneratorSpec) -> Result<Dataset<f64>> {
    if spec.n == 0 || spec.d == 0 {
        return Err(Error::InvalidParameter("generator needs n >= 1 and d >= 1".into()));
    }
    if !(spec.spread >= 0.0) || !spec.spread.is_finite() {
        return Err(Error::InvalidParameter(format!("spread must be >= 0, got {}", spec.spread)));
    }
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(spec.seed);
    let in_box = |rng: &mut Xoshiro256PlusPlus| -> Vec<f64> {
        (0..spec.d).map(|_| rng.random_range(-BOX_HALF_WIDTH..BOX_HALF_WIDTH)).collect()
    };
    let points: Vec<Vec<f64>> = match spec.kind {
        GeneratorKind::GaussianMixture => {
            if spec.k_true == 0 {
                return Err(Error::InvalidParameter("gaussian_mixture needs k_true >= 1".into()));
            }
            let centers: Vec<Vec<f64>> = (0..spec.k_true).map(|_| in_box(&mut rng)).collect();
            (0..spec.n)
                .map(|i| {
                    centers[i % spec.k_true]
                        .iter()
                        .map(|&c| {
                            let z: f64 = rng.sample(StandardNormal);
                            c + spec.spread * z
                        })
                        .collect()
                })
                .collect()
        }
        GeneratorKind::UniformBox => (0..spec.n).map(|_| in_box(&mut rng)).collect(),
        GeneratorKind::Collinear => {
            let dir: Vec<f64> = if spec.d == 1 {
                vec![1.0]
            } else {
                let v: Vec<f64> = (0..spec.d).map(|_| rng.sample(StandardNormal)).collect();
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                v.iter().map(|x| x / norm).collect()
            };
            (0..spec.n)
                .map(|_| {
                    let s = rng.random_range(0.0..BOX_HALF_WIDTH);
                    dir.iter().map(|&c| s * c).collect()
                })
                .collect()
        }
    };
    Dataset::new(points)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    pub k: usize,
    pub beta: f64,
    pub metric: MetricSpec<f64>,
    pub trials: usize,
    pub base_seed: u64,
    /// Defaults to centroid for squared euclidean, discrete otherwise.
    pub oracle_mode: Option<CenterMode>,
}

const CONFIG_KEYS: &[&str] = &[
    "dataset",
    "generator",
    "n",
    "d",
    "k_true",
    "spread",
    "seed",
    "k",
    "beta",
    "ell",
    "metric",
    "trials",
    "base_seed",
    "oracle_mode",
];

fn parse_value<V: std::str::FromStr>(key: &str, raw: &str, line: usize) -> Result<V> {
    raw.parse().map_err(|_| Error::Parse {
        line,
        message: format!("invalid value `{raw}` for `{key}`"),
    })
}

impl ExperimentConfig {
    /// Parses flat `key = value` lines. Blank lines and `#` comments are
    /// ignored; unknown or repeated keys are errors.
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries: BTreeMap<&str, (&str, usize)> = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.trim();
            if content.is_empty() || content.starts_with('#') {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| Error::Parse {
                line,
                message: "expected `key = value`".into(),
            })?;
            let (key, value) = (key.trim(), value.trim());
            if !CONFIG_KEYS.contains(&key) {
                return Err(Error::Parse {
                    line,
                    message: format!("unknown key `{key}`"),
                });
            }
            if entries.insert(key, (value, line)).is_some() {
                return Err(Error::Parse {
                    line,
                    message: format!("duplicate key `{key}`"),
                });
            }
        }

        fn get<V: std::str::FromStr>(e: &BTreeMap<&str, (&str, usize)>, key: &str) -> Result<Option<V>> {
            e.get(key).map(|&(v, line)| parse_value(key, v, line)).transpose()
        }
        let missing = |key: &str| Error::Parse {
            line: 0,
            message: format!("missing required key `{key}`"),
        };

        let k: usize = get(&entries, "k")?.ok_or_else(|| missing("k"))?;
        let beta: f64 = get(&entries, "beta")?.ok_or_else(|| missing("beta"))?;
        let kind: MetricKind = get(&entries, "metric")?.unwrap_or(MetricKind::Euclidean);
        let ell: f64 = get(&entries, "ell")?.unwrap_or(2.0);
        let metric = MetricSpec::new(kind, ell)?;
        let trials: usize = get(&entries, "trials")?.unwrap_or(1000);
        let base_seed: u64 = get(&entries, "base_seed")?.unwrap_or(0);
        let oracle_mode: Option<CenterMode> = get(&entries, "oracle_mode")?;

        let generator_keys = ["generator", "n", "d", "k_true", "spread", "seed"];
        let dataset = match (entries.get("dataset"), entries.get("generator")) {
            (Some(_), Some(&(_, line))) => {
                return Err(Error::Parse {
                    line,
                    message: "`dataset` and `generator` are mutually exclusive".into(),
                })
            }
            (Some(&(path, line)), None) => {
                if let Some(key) = generator_keys.iter().find(|k| entries.contains_key(*k)) {
                    return Err(Error::Parse {
                        line,
                        message: format!("`{key}` only applies to generated datasets"),
                    });
                }
                DatasetSpec::File(PathBuf::from(path))
            }
            (None, Some(_)) => DatasetSpec::Generator(GeneratorSpec {
                kind: get(&entries, "generator")?.expect("present"),
                n: get(&entries, "n")?.ok_or_else(|| missing("n"))?,
                d: get(&entries, "d")?.unwrap_or(1),
                k_true: get(&entries, "k_true")?.unwrap_or(k),
                spread: get(&entries, "spread")?.unwrap_or(1.0),
                seed: get(&entries, "seed")?.unwrap_or(0),
            }),
            (None, None) => return Err(missing("dataset` or `generator")),
        };

        let cfg = Self {
            dataset,
            k,
            beta,
            metric,
            trials,
            base_seed,
            oracle_mode,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::InvalidParameter("trials must be >= 1".into()));
        }
        if self.k < 2 {
            return Err(Error::InvalidParameter(format!("k must be >= 2, got {}", self.k)));
        }
        if !(self.beta >= 1.0) || !self.beta.is_finite() {
            return Err(Error::InvalidParameter(format!("beta must be >= 1, got {}", self.beta)));
        }
        Ok(())
    }

    /// `round(beta k)`, half-up.
    pub fn t_used(&self) -> usize {
        centers_for(self.k, self.beta)
    }

    pub fn mode(&self) -> CenterMode {
        self.oracle_mode.unwrap_or_else(|| CenterMode::for_metric(&self.metric))
    }
}

/// `round(beta k)` with halves rounded up. The product is first snapped to
/// nine decimals so that e.g. `1.5 * 3` is not pulled below the half.
pub fn centers_for(k: usize, beta: f64) -> usize {
    let x = beta * k as f64;
    let snapped = (x * 1e9).round() / 1e9;
    (snapped + 0.5).floor() as usize
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentRecord {
    pub trial: usize,
    pub seed: u64,
    pub t_used: usize,
    pub phi: f64,
    /// `phi / phi*`; absent when `phi* = 0`.
    pub ratio: Option<f64>,
    pub bound_theorem1: f64,
    /// Absent for `beta = 1`, where the corollary is unbounded.
    pub bound_corollary: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfigEcho {
    pub dataset: DatasetSpec,
    pub k: usize,
    pub beta: f64,
    pub ell: f64,
    pub metric: MetricKind,
    pub trials: usize,
    pub base_seed: u64,
    pub oracle_mode: CenterMode,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentSummary {
    pub config: ConfigEcho,
    pub n: usize,
    pub t_used: usize,
    pub phi_star: f64,
    /// Discrete-mode optimum overestimates the continuous one, so the
    /// empirical ratio underestimates the true ratio.
    pub conservative: bool,
    pub rated_trials: usize,
    pub mean_ratio: Option<f64>,
    pub std_err: Option<f64>,
    pub min_ratio: Option<f64>,
    pub max_ratio: Option<f64>,
    pub mean_phi: f64,
    pub bound_theorem1: f64,
    pub bound_theorem1_asymptotic: f64,
    pub bound_corollary: Option<f64>,
    /// `mean + 3 SE <= bound_theorem1`; with `phi* = 0`, whether every
    /// trial reached zero potential.
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentOutcome {
    pub records: Vec<ExperimentRecord>,
    pub summary: ExperimentSummary,
}

/// Runs `cfg.trials` seeded samplings with `t = round(beta k)` centers and
/// compares each potential with the exact optimum, computed once.
pub fn run_ratio_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    let ds = cfg.dataset.load()?;
    let n = ds.len();
    let t_used = cfg.t_used();
    if t_used > n {
        return Err(Error::InvalidParameter(format!(
            "round(beta k) = {t_used} centers exceed n = {n} points"
        )));
    }
    let mode = cfg.mode();
    let opt = optimal_k_clustering(&ds, cfg.k, &cfg.metric, mode).map_err(|e| match e {
        Error::TooLarge { .. } => Error::InvalidParameter(format!("oracle infeasible ({e}); use a smaller n or k")),
        other => other,
    })?;
    let phi_star = opt.phi_star;

    let inputs = BoundInputs::new(cfg.k as u64, cfg.beta, cfg.metric.ell(), cfg.metric.is_euclidean_sq())?.with_n(n as u64);
    let bound = theorem1_bound(&inputs)?;

    let records = (0..cfg.trials)
        .into_par_iter()
        .map(|trial| {
            let seed = cfg.base_seed.wrapping_add(trial as u64);
            let trace = d_ell_sample(&ds, &SamplerConfig::new(t_used, seed, cfg.metric))?;
            let phi = trace.final_phi();
            Ok(ExperimentRecord {
                trial,
                seed,
                t_used,
                phi,
                ratio: (phi_star > 0.0).then(|| phi / phi_star),
                bound_theorem1: bound.theorem1,
                bound_corollary: bound.corollary,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let ratios: Vec<f64> = records.iter().filter_map(|r| r.ratio).collect();
    let m = ratios.len();
    let (mean_ratio, std_err) = if m == 0 {
        (None, None)
    } else {
        let mean = stable_sum(ratios.iter().copied()) / m as f64;
        let se = if m > 1 {
            let var = stable_sum(ratios.iter().map(|r| (r - mean) * (r - mean))) / (m - 1) as f64;
            (var / m as f64).sqrt()
        } else {
            0.0
        };
        (Some(mean), Some(se))
    };
    let pass = match (mean_ratio, std_err) {
        (Some(mean), Some(se)) => mean + 3.0 * se <= bound.theorem1,
        _ => records.iter().all(|r| r.phi == 0.0),
    };
    let summary = ExperimentSummary {
        config: ConfigEcho {
            dataset: cfg.dataset.clone(),
            k: cfg.k,
            beta: cfg.beta,
            ell: cfg.metric.ell(),
            metric: cfg.metric.kind(),
            trials: cfg.trials,
            base_seed: cfg.base_seed,
            oracle_mode: mode,
        },
        n,
        t_used,
        phi_star,
        conservative: mode == CenterMode::Discrete,
        rated_trials: m,
        mean_ratio,
        std_err,
        min_ratio: ratios.iter().copied().reduce(f64::min),
        max_ratio: ratios.iter().copied().reduce(f64::max),
        mean_phi: stable_sum(records.iter().map(|r| r.phi)) / records.len() as f64,
        bound_theorem1: bound.theorem1,
        bound_theorem1_asymptotic: bound.theorem1_asymptotic,
        bound_corollary: bound.corollary,
        pass,
    };
    Ok(ExperimentOutcome { records, summary })
}

fn opt_field(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub const RECORD_COLUMNS: [&str; 7] = ["trial", "seed", "t_used", "phi", "ratio", "bound_theorem1", "bound_corollary"];

pub fn write_records<W: Write>(writer: W, records: &[ExperimentRecord]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(RECORD_COLUMNS)?;
    for r in records {
        wtr.write_record([
            r.trial.to_string(),
            r.seed.to_string(),
            r.t_used.to_string(),
            r.phi.to_string(),
            opt_field(r.ratio),
            r.bound_theorem1.to_string(),
            opt_field(r.bound_corollary),
        ])?;
    }
    wtr.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn emit_csv(records: &[ExperimentRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_records(file, records)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SummaryFormat {
    Text,
    Json,
}

impl SummaryFormat {
    /// JSON for a `.json` extension, text otherwise.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("json") => Self::Json,
            _ => Self::Text,
        }
    }
}

pub fn render_summary(summary: &ExperimentSummary, format: SummaryFormat) -> Result<String> {
    match format {
        SummaryFormat::Json => Ok(serde_json::to_string_pretty(summary)? + "\n"),
        SummaryFormat::Text => {
            let c = &summary.config;
            let dataset = match &c.dataset {
                DatasetSpec::File(p) => p.display().to_string(),
                DatasetSpec::Generator(g) => format!(
                    "{:?} n={} d={} k_true={} spread={} seed={}",
                    g.kind, g.n, g.d, g.k_true, g.spread, g.seed
                ),
            };
            let show = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |x| x.to_string());
            let mut s = String::new();
            let _ = writeln!(s, "dataset: {dataset}");
            let _ = writeln!(s, "k: {}", c.k);
            let _ = writeln!(s, "beta: {}", c.beta);
            let _ = writeln!(s, "metric: {} ell={}", c.metric, c.ell);
            let _ = writeln!(s, "trials: {}", c.trials);
            let _ = writeln!(s, "base_seed: {}", c.base_seed);
            let _ = writeln!(s, "oracle_mode: {}", c.oracle_mode);
            let _ = writeln!(s, "n: {}", summary.n);
            let _ = writeln!(s, "t_used: {}", summary.t_used);
            let _ = writeln!(s, "phi_star: {}", summary.phi_star);
            let _ = writeln!(s, "conservative: {}", summary.conservative);
            let _ = writeln!(s, "rated_trials: {}", summary.rated_trials);
            let _ = writeln!(s, "mean_phi: {}", summary.mean_phi);
            let _ = writeln!(s, "mean_ratio: {}", show(summary.mean_ratio));
            let _ = writeln!(s, "std_err: {}", show(summary.std_err));
            let _ = writeln!(s, "min_ratio: {}", show(summary.min_ratio));
            let _ = writeln!(s, "max_ratio: {}", show(summary.max_ratio));
            let _ = writeln!(s, "bound_theorem1: {}", summary.bound_theorem1);
            let _ = writeln!(s, "bound_theorem1_asymptotic: {}", summary.bound_theorem1_asymptotic);
            let _ = writeln!(s, "bound_corollary: {}", show(summary.bound_corollary));
            let _ = writeln!(s, "pass: {}", summary.pass);
            Ok(s)
        }
    }
}

pub fn emit_summary(summary: &ExperimentSummary, path: impl AsRef<Path>, format: SummaryFormat) -> Result<()> {
    let path = path.as_ref();
    let text = render_summary(summary, format)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
