//! Experiment orchestration: seeded Monte-Carlo sweeps over the SNR grid and
//! CSV reports.
//!
//! Every trial draws its matrices from its own ChaCha stream, so results do
//! not depend on the thread count. Per-trial outputs are collected in trial
//! order and reduced sequentially.

use std::fmt;
use std::io::Write;
use std::time::Instant;

use faer::{Mat, Par};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Result, RieError};
use crate::estimators::{gaussian_xis, general_xis, mse_from_xis, oracle_xis};
use crate::freeprob::NoiseFamily;
use crate::models::{role, stream_rng, EnsembleKind, EnsembleSpec};
use crate::spectra::{default_eta, svd_thin, EmpiricalSpectrum};
use crate::theory::{
    overlap_empirical, overlap_theoretical, peak_location, trace_relation_prediction, trace_functions_from, DensityGrid,
    OverlapPoint, OverlapSetup,
};

/// Fixed column order of result CSVs.
pub const CSV_COLUMNS: [&str; 11] = [
    "experiment",
    "lambda",
    "N",
    "M",
    "estimator",
    "mean_mse",
    "ci95",
    "rel_err_pct",
    "n_trials",
    "seed",
    "wall_ms",
];

const DEFAULT_LAMBDAS: [f64; 9] = [0.1, 0.3, 0.5, 0.7, 1.0, 2.0, 3.0, 4.0, 5.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentKind {
    Fig1a,
    Fig1b,
    Fig3,
    Fig4,
    Fig5,
    Fig6,
    Fig7,
    Overlap,
    Custom,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 9] = [
        ExperimentKind::Fig1a,
        ExperimentKind::Fig1b,
        ExperimentKind::Fig3,
        ExperimentKind::Fig4,
        ExperimentKind::Fig5,
        ExperimentKind::Fig6,
        ExperimentKind::Fig7,
        ExperimentKind::Overlap,
        ExperimentKind::Custom,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Fig1a => "fig1a",
            ExperimentKind::Fig1b => "fig1b",
            ExperimentKind::Fig3 => "fig3",
            ExperimentKind::Fig4 => "fig4",
            ExperimentKind::Fig5 => "fig5",
            ExperimentKind::Fig6 => "fig6",
            ExperimentKind::Fig7 => "fig7",
            ExperimentKind::Overlap => "overlap",
            ExperimentKind::Custom => "custom",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dims {
    pub n_rows: usize,
    pub n_cols: usize,
}

/// Parameters of the singular-vector overlap experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OverlapParams {
    /// Index into the descending spectrum of `S`; defaults to the median.
    #[serde(default)]
    pub sigma_index: Option<usize>,
    #[serde(default = "default_bins")]
    pub n_bins: usize,
    /// Bins where the limiting density falls below this fraction of its
    /// maximum are left out of the deviation statistics.
    #[serde(default = "default_bulk_fraction")]
    pub bulk_fraction: f64,
}

fn default_bins() -> usize {
    50
}

fn default_bulk_fraction() -> f64 {
    0.05
}

impl Default for OverlapParams {
    fn default() -> Self {
        Self {
            sigma_index: None,
            n_bins: default_bins(),
            bulk_fraction: default_bulk_fraction(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputPaths {
    #[serde(default)]
    pub results_csv: Option<String>,
    #[serde(default)]
    pub svg: Option<String>,
    #[serde(default)]
    pub overlap_csv: Option<String>,
}

fn default_epsilon() -> f64 {
    0.5
}

/// Full description of one benchmark run.
///
/// `signal_grid` / `noise_grid` and `alpha_grid` add panels: every
/// combination is run with the same trial streams. With `alpha_grid` set,
/// each panel keeps `N = dims.n_rows` and uses `M = round(N/α)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub dims: Dims,
    pub lambda_grid: Vec<f64>,
    pub signal: EnsembleSpec,
    pub noise: EnsembleSpec,
    #[serde(default)]
    pub signal_grid: Vec<EnsembleKind>,
    #[serde(default)]
    pub noise_grid: Vec<EnsembleKind>,
    #[serde(default)]
    pub alpha_grid: Vec<f64>,
    /// Row counts of the trace-relation sweep.
    #[serde(default)]
    pub n_grid: Vec<usize>,
    pub n_trials: usize,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    /// When non-empty, every RIE is evaluated at each `η = N^{-ε}` here.
    #[serde(default)]
    pub epsilon_grid: Vec<f64>,
    /// Divide MSEs by the signal's second moment.
    #[serde(default)]
    pub normalize: bool,
    #[serde(default)]
    pub overlap: Option<OverlapParams>,
    pub master_seed: u64,
    #[serde(default)]
    pub output: OutputPaths,
}

fn spec(kind: EnsembleKind, n: usize, m: usize) -> EnsembleSpec {
    EnsembleSpec {
        kind,
        n_rows: n,
        n_cols: m,
        seed: 0,
    }
}

impl ExperimentConfig {
    /// Built-in configuration for one named experiment. `Custom` is the
    /// Bernoulli–Rademacher signal study.
    pub fn preset(kind: ExperimentKind) -> Self {
        let base = |n: usize, m: usize, signal: EnsembleKind, noise: EnsembleKind| ExperimentConfig {
            experiment: kind,
            dims: Dims { n_rows: n, n_cols: m },
            lambda_grid: DEFAULT_LAMBDAS.to_vec(),
            signal: spec(signal, n, m),
            noise: spec(noise, n, m),
            signal_grid: Vec::new(),
            noise_grid: Vec::new(),
            alpha_grid: Vec::new(),
            n_grid: Vec::new(),
            n_trials: 10,
            epsilon: 0.5,
            epsilon_grid: Vec::new(),
            normalize: false,
            overlap: None,
            master_seed: 2024,
            output: OutputPaths::default(),
        };
        let g = EnsembleKind::GaussianIid;
        match kind {
            ExperimentKind::Fig1a => base(1000, 1000, g, EnsembleKind::UniformSpectrumNoise),
            ExperimentKind::Fig1b => ExperimentConfig {
                noise_grid: vec![EnsembleKind::RankOneSum { c: 1.0 }, EnsembleKind::RankOneSum { c: 0.5 }],
                ..base(1000, 2000, g, EnsembleKind::RankOneSum { c: 1.0 })
            },
            ExperimentKind::Fig3 => {
                let mut n_grid: Vec<usize> = (1..=5).map(|k| 100 * k).collect();
                n_grid.extend((11..=20).map(|k| 50 * k));
                ExperimentConfig {
                    lambda_grid: vec![1.0],
                    alpha_grid: vec![1.0, 0.5],
                    n_grid,
                    n_trials: 100,
                    ..base(1000, 1000, g, g)
                }
            }
            ExperimentKind::Fig4 => ExperimentConfig {
                alpha_grid: vec![1.0, 0.5],
                ..base(1000, 1000, g, g)
            },
            ExperimentKind::Fig5 => ExperimentConfig {
                signal_grid: vec![
                    EnsembleKind::BernoulliSpectrumSignal { p: 0.2 },
                    EnsembleKind::BernoulliSpectrumSignal { p: 0.9 },
                ],
                normalize: true,
                ..base(1000, 2000, EnsembleKind::BernoulliSpectrumSignal { p: 0.2 }, g)
            },
            ExperimentKind::Fig6 => ExperimentConfig {
                lambda_grid: vec![2.0],
                epsilon_grid: (1..=9).map(|k| k as f64 / 10.0).collect(),
                ..base(1000, 2000, g, g)
            },
            ExperimentKind::Fig7 | ExperimentKind::Overlap => ExperimentConfig {
                lambda_grid: vec![1.0],
                n_trials: 1000,
                overlap: Some(OverlapParams::default()),
                ..base(1000, 4000, g, g)
            },
            ExperimentKind::Custom => ExperimentConfig {
                lambda_grid: vec![0.1, 0.3, 0.5, 0.7, 0.9, 1.0, 2.0, 3.0, 4.0, 5.0],
                signal_grid: vec![
                    EnsembleKind::BernoulliRademacherSignal { p: 0.9 },
                    EnsembleKind::BernoulliRademacherSignal { p: 0.5 },
                ],
                ..base(1000, 2000, EnsembleKind::BernoulliRademacherSignal { p: 0.9 }, g)
            },
        }
    }

    /// Every problem found, as `(field path, message)`.
    pub fn validation_issues(&self) -> Vec<(String, String)> {
        let mut issues = Vec::new();
        let mut push = |p: &str, m: String| issues.push((p.to_string(), m));
        let Dims { n_rows, n_cols } = self.dims;
        if n_rows == 0 || n_cols == 0 {
            push("dims", format!("dimensions must be positive, got {n_rows}x{n_cols}"));
        } else if n_rows > n_cols && self.alpha_grid.is_empty() {
            push("dims", format!("need n_rows <= n_cols, got {n_rows}x{n_cols}"));
        }
        if self.n_trials == 0 {
            push("n_trials", "must be at least 1".into());
        }
        if self.lambda_grid.is_empty() {
            push("lambda_grid", "must not be empty".into());
        }
        for (i, l) in self.lambda_grid.iter().enumerate() {
            if !(*l > 0.0 && l.is_finite()) {
                push(&format!("lambda_grid[{i}]"), format!("must be positive and finite, got {l}"));
            }
        }
        for (name, e) in [("signal", &self.signal), ("noise", &self.noise)] {
            if e.n_rows != n_rows || e.n_cols != n_cols {
                push(
                    &format!("{name}.n_rows"),
                    format!("ensemble is {}x{} but dims are {n_rows}x{n_cols}", e.n_rows, e.n_cols),
                );
            }
            if let Err(err) = e.kind.validate() {
                push(&format!("{name}.kind"), err.to_string());
            }
        }
        for (i, k) in self.signal_grid.iter().enumerate() {
            if let Err(err) = k.validate() {
                push(&format!("signal_grid[{i}]"), err.to_string());
            }
        }
        for (i, k) in self.noise_grid.iter().enumerate() {
            if let Err(err) = k.validate() {
                push(&format!("noise_grid[{i}]"), err.to_string());
            }
        }
        for (i, a) in self.alpha_grid.iter().enumerate() {
            if !(*a > 0.0 && *a <= 1.0) {
                push(&format!("alpha_grid[{i}]"), format!("must lie in (0, 1], got {a}"));
            }
        }
        for (i, n) in self.n_grid.iter().enumerate() {
            if *n == 0 {
                push(&format!("n_grid[{i}]"), "must be positive".into());
            }
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            push("epsilon", format!("must be positive, got {}", self.epsilon));
        }
        for (i, e) in self.epsilon_grid.iter().enumerate() {
            if !(*e > 0.0 && e.is_finite()) {
                push(&format!("epsilon_grid[{i}]"), format!("must be positive, got {e}"));
            }
        }
        let mode = self.mode();
        if mode == Mode::Mse || mode == Mode::Overlap {
            for (i, k) in self.noise_kinds().iter().enumerate() {
                if matches!(
                    k,
                    EnsembleKind::BernoulliSpectrumSignal { .. } | EnsembleKind::BernoulliRademacherSignal { .. }
                ) {
                    push(&format!("noise_grid[{i}]"), format!("`{}` is not a noise ensemble", k.name()));
                }
                if *k == EnsembleKind::UniformSpectrumNoise && self.panel_dims().iter().any(|(n, m)| n != m) {
                    push(&format!("noise_grid[{i}]"), "uniform-spectrum noise needs square panels".into());
                }
            }
        }
        match mode {
            Mode::TraceRelation => {
                if self.n_grid.is_empty() {
                    push("n_grid", "the trace-relation sweep needs at least one N".into());
                }
                if self.noise.kind != EnsembleKind::GaussianIid {
                    push("noise.kind", "the trace relation holds for Gaussian noise only".into());
                }
            }
            Mode::Overlap => {
                let p = self.overlap.clone().unwrap_or_default();
                if p.n_bins == 0 {
                    push("overlap.n_bins", "must be positive".into());
                }
                if !(0.0..1.0).contains(&p.bulk_fraction) {
                    push("overlap.bulk_fraction", format!("must lie in [0, 1), got {}", p.bulk_fraction));
                }
                if let Some(k) = p.sigma_index {
                    if k >= n_rows {
                        push("overlap.sigma_index", format!("{k} out of range for N = {n_rows}"));
                    }
                }
                if self.n_trials < 2 {
                    push("n_trials", "overlap averages need at least 2 trials".into());
                }
                if !self.alpha_grid.is_empty() || self.signal_grid.len() > 1 || self.noise_grid.len() > 1 {
                    push("overlap", "the overlap experiment takes a single panel".into());
                }
            }
            Mode::Mse => {}
        }
        issues
    }

    pub fn validate(&self) -> Result<()> {
        let issues = self.validation_issues();
        if issues.is_empty() {
            return Ok(());
        }
        let path = issues.iter().map(|(p, _)| p.as_str()).collect::<Vec<_>>().join(", ");
        let message = issues
            .iter()
            .map(|(p, m)| format!("{p}: {m}"))
            .collect::<Vec<_>>()
            .join("; ");
        Err(RieError::Config { path, message })
    }

    /// SHA-256 of the canonical JSON serialization.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        format!("{:x}", Sha256::digest(json.as_bytes()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| RieError::Config {
            path: format!("line {}, column {}", e.line(), e.column()),
            message: e.to_string(),
        })?;
        Ok(cfg)
    }

    fn mode(&self) -> Mode {
        match self.experiment {
            ExperimentKind::Fig3 => Mode::TraceRelation,
            ExperimentKind::Fig7 | ExperimentKind::Overlap => Mode::Overlap,
            ExperimentKind::Custom if self.overlap.is_some() => Mode::Overlap,
            ExperimentKind::Custom if !self.n_grid.is_empty() => Mode::TraceRelation,
            _ => Mode::Mse,
        }
    }

    fn signal_kinds(&self) -> Vec<EnsembleKind> {
        if self.signal_grid.is_empty() {
            vec![self.signal.kind]
        } else {
            self.signal_grid.clone()
        }
    }

    fn noise_kinds(&self) -> Vec<EnsembleKind> {
        if self.noise_grid.is_empty() {
            vec![self.noise.kind]
        } else {
            self.noise_grid.clone()
        }
    }

    fn panel_dims(&self) -> Vec<(usize, usize)> {
        let n = self.dims.n_rows;
        if self.alpha_grid.is_empty() {
            vec![(n, self.dims.n_cols)]
        } else {
            self.alpha_grid.iter().map(|a| (n, cols_for(n, *a))).collect()
        }
    }

    fn epsilons(&self) -> Vec<f64> {
        if self.epsilon_grid.is_empty() {
            vec![self.epsilon]
        } else {
            self.epsilon_grid.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Mode {
    Mse,
    TraceRelation,
    Overlap,
}

fn cols_for(n: usize, alpha: f64) -> usize {
    ((n as f64 / alpha).round() as usize).max(n)
}

/// Folds an ensemble's own seed into the master seed.
fn mix(master: u64, seed: u64) -> u64 {
    master ^ seed.wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// One CSV row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub experiment: String,
    pub lambda: f64,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "M")]
    pub m: usize,
    pub estimator: String,
    pub mean_mse: f64,
    pub ci95: f64,
    pub rel_err_pct: Option<f64>,
    pub n_trials: usize,
    pub seed: u64,
    /// Left empty so that reports are reproducible byte for byte; timing is
    /// kept in the metadata.
    pub wall_ms: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultMetadata {
    pub experiment: ExperimentKind,
    pub config_hash: String,
    pub seed: u64,
    pub code_version: String,
    pub wall_ms: f64,
    pub threads: usize,
    pub notes: Vec<String>,
}

/// Empirical and predicted overlap curves of an overlap run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapReport {
    pub sigma: f64,
    pub points: Vec<OverlapPoint>,
    /// Prediction at each point's `gamma`.
    pub theory: Vec<f64>,
    /// Whether each point lies in the bulk used for the statistics.
    pub in_bulk: Vec<bool>,
    pub sup_deviation: f64,
    pub peak_empirical: f64,
    pub peak_theory: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub rows: Vec<ResultRow>,
    pub metadata: ResultMetadata,
    pub overlap: Option<OverlapReport>,
}

impl ExperimentResult {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_rows(&self.rows, out)
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        String::from_utf8(buf).map_err(|e| RieError::Format(e.to_string()))
    }

    /// The row for `(estimator, lambda)` in panel `(n, m)`, if any.
    pub fn find(&self, estimator: &str, lambda: f64, n: usize, m: usize) -> Option<&ResultRow> {
        self.rows
            .iter()
            .find(|r| r.estimator == estimator && r.lambda == lambda && r.n == n && r.m == m)
    }
}

pub fn write_rows<W: Write>(rows: &[ResultRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(csv_error)?;
    }
    if rows.is_empty() {
        w.write_record(CSV_COLUMNS).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

/// Parses a result CSV, insisting on the exact column schema.
pub fn read_rows(text: &str) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header = r.headers().map_err(csv_error)?.clone();
    if header.iter().ne(CSV_COLUMNS.iter().copied()) {
        return Err(RieError::Format(format!(
            "schema mismatch: expected columns `{}`, found `{}`",
            CSV_COLUMNS.join(","),
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    r.deserialize()
        .map(|row| row.map_err(|e| RieError::Format(format!("schema mismatch: {e}"))))
        .collect()
}

fn csv_error(e: csv::Error) -> RieError {
    RieError::Format(e.to_string())
}

/// Mean and 95% normal half-width.
pub fn mean_ci95(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, 1.96 * (var / n).sqrt())
}

/// Runs with the default thread count.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    run_experiment_with_threads(config, None)
}

/// Trials run on a dedicated pool of `threads` workers (all logical cores
/// when `None`); dense kernels inside a trial are sequential.
pub fn run_experiment_with_threads(config: &ExperimentConfig, threads: Option<usize>) -> Result<ExperimentResult> {
    config.validate()?;
    faer::set_global_parallelism(Par::Seq);
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        builder = builder.num_threads(t.max(1));
    }
    let pool = builder.build().map_err(|e| RieError::Backend(e.to_string()))?;
    let start = Instant::now();
    let mut notes = Vec::new();
    let (rows, overlap) = pool.install(|| match config.mode() {
        Mode::Mse => mse_sweep(config, &mut notes).map(|r| (r, None)),
        Mode::TraceRelation => trace_relation_sweep(config).map(|r| (r, None)),
        Mode::Overlap => overlap_run(config, &mut notes).map(|(r, o)| (r, Some(o))),
    })?;
    if config.mode() != Mode::Overlap {
        notes.push("signal resampled every trial".into());
    }
    let metadata = ResultMetadata {
        experiment: config.experiment,
        config_hash: config.hash(),
        seed: config.master_seed,
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
        threads: pool.current_num_threads(),
        notes,
    };
    Ok(ExperimentResult { rows, metadata, overlap })
}

fn noise_family(kind: EnsembleKind, n: usize, m: usize) -> Result<Option<NoiseFamily>> {
    let alpha = n as f64 / m as f64;
    match kind {
        EnsembleKind::GaussianIid => Ok(None),
        EnsembleKind::UniformSpectrumNoise => NoiseFamily::uniform_spectrum(alpha).map(Some),
        EnsembleKind::RankOneSum { c } => NoiseFamily::rank_one_sum(c, alpha).map(Some),
        other => Err(RieError::UnsupportedFamily(format!("`{}` has no noise model", other.name()))),
    }
}

fn kind_label(kind: &EnsembleKind) -> String {
    match kind {
        EnsembleKind::GaussianIid => "gaussian".into(),
        EnsembleKind::UniformSpectrumNoise => "uniform".into(),
        EnsembleKind::RankOneSum { c } => format!("c={c}"),
        EnsembleKind::BernoulliSpectrumSignal { p } | EnsembleKind::BernoulliRademacherSignal { p } => format!("p={p}"),
    }
}

struct Panel {
    n: usize,
    m: usize,
    signal: EnsembleKind,
    noise: EnsembleKind,
    suffix: String,
}

fn panels(config: &ExperimentConfig) -> Vec<Panel> {
    let signals = config.signal_kinds();
    let noises = config.noise_kinds();
    let mut out = Vec::new();
    for (n, m) in config.panel_dims() {
        for s in &signals {
            for z in &noises {
                let mut tags = Vec::new();
                if signals.len() > 1 {
                    tags.push(kind_label(s));
                }
                if noises.len() > 1 {
                    tags.push(kind_label(z));
                }
                let suffix = if tags.is_empty() { String::new() } else { format!("[{}]", tags.join(",")) };
                out.push(Panel {
                    n,
                    m,
                    signal: *s,
                    noise: *z,
                    suffix,
                });
            }
        }
    }
    out
}

fn sample_pair(config: &ExperimentConfig, panel: &Panel, trial: u64) -> Result<(Mat<f64>, Mat<f64>)> {
    let mut rs = stream_rng(mix(config.master_seed, config.signal.seed), trial, role::SIGNAL);
    let mut rz = stream_rng(mix(config.master_seed, config.noise.seed), trial, role::NOISE);
    let s = panel.signal.sample(panel.n, panel.m, &mut rs)?;
    let z = panel.noise.sample(panel.n, panel.m, &mut rz)?;
    Ok((s, z))
}

fn observe(s: &Mat<f64>, z: &Mat<f64>, lambda: f64) -> Mat<f64> {
    let r = lambda.sqrt();
    Mat::from_fn(s.nrows(), s.ncols(), |i, j| r * s[(i, j)] + z[(i, j)])
}

/// Per trial and λ: `[oracle, rie(ε₁), rie(ε₂), …]` plus flagged counts.
fn mse_trial(
    config: &ExperimentConfig,
    panel: &Panel,
    family: Option<&NoiseFamily>,
    trial: u64,
) -> Result<(Vec<Vec<f64>>, usize)> {
    let (s, z) = sample_pair(config, panel, trial)?;
    let s2 = s.squared_norm_l2();
    let norm = if config.normalize { panel.signal.second_moment(panel.n, panel.m) } else { 1.0 };
    let mut flagged = 0;
    let mut out = Vec::with_capacity(config.lambda_grid.len());
    for &lambda in &config.lambda_grid {
        let y = observe(&s, &z, lambda);
        let svd = svd_thin(y.as_ref())?;
        let oracle = oracle_xis(&svd, s.as_ref())?;
        let mut row = vec![mse_from_xis(s2, &oracle, &oracle)];
        for eps in config.epsilons() {
            let eta = default_eta(panel.n, eps);
            let xis = match family {
                None => gaussian_xis(svd.spectrum(), lambda, eta)?,
                Some(f) => {
                    let sh = general_xis(svd.spectrum(), f, lambda, eta)?;
                    flagged += sh.flags.len();
                    sh.xis
                }
            };
            row.push(mse_from_xis(s2, &xis, &oracle));
        }
        out.push(row.into_iter().map(|v| v / norm).collect());
    }
    Ok((out, flagged))
}

fn mse_sweep(config: &ExperimentConfig, notes: &mut Vec<String>) -> Result<Vec<ResultRow>> {
    let exp = config.experiment.name().to_string();
    let eps = config.epsilons();
    let mut rows = Vec::new();
    for panel in panels(config) {
        let family = noise_family(panel.noise, panel.n, panel.m)?;
        let rie_name = if family.is_none() { "gaussian_rie" } else { "general_rie" };
        let trials: Vec<Result<(Vec<Vec<f64>>, usize)>> = (0..config.n_trials as u64)
            .into_par_iter()
            .map(|t| mse_trial(config, &panel, family.as_ref(), t))
            .collect();
        let mut per_trial = Vec::with_capacity(trials.len());
        let mut flagged = 0;
        for t in trials {
            let (v, f) = t?;
            per_trial.push(v);
            flagged += f;
        }
        if flagged > 0 {
            notes.push(format!(
                "{flagged} singular values flagged (zero density) in panel {}x{}{}",
                panel.n, panel.m, panel.suffix
            ));
        }
        for (li, &lambda) in config.lambda_grid.iter().enumerate() {
            let column = |k: usize| per_trial.iter().map(|t| t[li][k]).collect::<Vec<f64>>();
            let (oracle_mean, oracle_ci) = mean_ci95(&column(0));
            let row = |estimator: String, mean: f64, ci: f64, rel: Option<f64>| ResultRow {
                experiment: exp.clone(),
                lambda,
                n: panel.n,
                m: panel.m,
                estimator,
                mean_mse: mean,
                ci95: ci,
                rel_err_pct: rel,
                n_trials: config.n_trials,
                seed: config.master_seed,
                wall_ms: None,
            };
            rows.push(row(format!("oracle{}", panel.suffix), oracle_mean, oracle_ci, None));
            for (k, e) in eps.iter().enumerate() {
                let (mean, ci) = mean_ci95(&column(k + 1));
                let name = if config.epsilon_grid.is_empty() {
                    format!("{rie_name}{}", panel.suffix)
                } else {
                    format!("{rie_name}@eps={e}{}", panel.suffix)
                };
                let rel = (oracle_mean > 0.0).then(|| 100.0 * (mean - oracle_mean) / oracle_mean);
                rows.push(row(name, mean, ci, rel));
            }
        }
    }
    Ok(rows)
}

/// `(|ε_N|, |ε_N|/|L|)` for one trial at `z = 1 + i/√N`.
pub fn theorem2_trial(
    signal: EnsembleKind,
    noise: EnsembleKind,
    n: usize,
    m: usize,
    lambda: f64,
    master_seed: u64,
    trial: u64,
) -> Result<(f64, f64)> {
    let mut rs = stream_rng(master_seed, trial, role::SIGNAL);
    let mut rz = stream_rng(master_seed, trial, role::NOISE);
    let s = signal.sample(n, m, &mut rs)?;
    let z = noise.sample(n, m, &mut rz)?;
    let y = observe(&s, &z, lambda);
    let svd = svd_thin(y.as_ref())?;
    let oracle = oracle_xis(&svd, s.as_ref())?;
    let zz = Complex64::new(1.0, 1.0 / (n as f64).sqrt());
    let (g, l) = trace_functions_from(svd.singular_values(), &oracle, zz);
    let eps = l - trace_relation_prediction(g, zz, n as f64 / m as f64, lambda);
    Ok((eps.norm(), eps.norm() / l.norm()))
}

fn trace_relation_sweep(config: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    let exp = config.experiment.name().to_string();
    let alphas = if config.alpha_grid.is_empty() {
        vec![config.dims.n_rows as f64 / config.dims.n_cols as f64]
    } else {
        config.alpha_grid.clone()
    };
    let mut rows = Vec::new();
    for &alpha in &alphas {
        for &n in &config.n_grid {
            let m = cols_for(n, alpha);
            for &lambda in &config.lambda_grid {
                let seed = mix(config.master_seed, config.signal.seed);
                let trials: Vec<Result<(f64, f64)>> = (0..config.n_trials as u64)
                    .into_par_iter()
                    .map(|t| theorem2_trial(config.signal.kind, config.noise.kind, n, m, lambda, seed, t))
                    .collect();
                let trials = trials.into_iter().collect::<Result<Vec<_>>>()?;
                let abs: Vec<f64> = trials.iter().map(|t| t.0).collect();
                let rel: Vec<f64> = trials.iter().map(|t| t.1).collect();
                for (name, v) in [("abs_error", abs), ("rel_error", rel)] {
                    let (mean, ci) = mean_ci95(&v);
                    rows.push(ResultRow {
                        experiment: exp.clone(),
                        lambda,
                        n,
                        m,
                        estimator: format!("{name}[alpha0={alpha}]"),
                        mean_mse: mean,
                        ci95: ci,
                        rel_err_pct: None,
                        n_trials: config.n_trials,
                        seed: config.master_seed,
                        wall_ms: None,
                    });
                }
            }
        }
    }
    Ok(rows)
}

/// Limiting `μ_Y` grid used for overlap predictions: analytic for
/// Gaussian signal and noise, otherwise smoothed from one auxiliary draw.
fn overlap_grid(config: &ExperimentConfig, lambda: f64) -> Result<(DensityGrid, f64)> {
    let (n, m) = (config.dims.n_rows, config.dims.n_cols);
    let alpha = n as f64 / m as f64;
    if config.signal.kind == EnsembleKind::GaussianIid && config.noise.kind == EnsembleKind::GaussianIid {
        return Ok((DensityGrid::marchenko_pastur(alpha, 1.0 + lambda, 4000)?, 0.0));
    }
    let mut rs = stream_rng(config.master_seed, 0, role::AUX);
    let mut rz = stream_rng(config.master_seed, 1, role::AUX);
    let s = config.signal.kind.sample(n, m, &mut rs)?;
    let z = config.noise.kind.sample(n, m, &mut rz)?;
    let y = observe(&s, &z, lambda);
    let spec: EmpiricalSpectrum = crate::spectra::singular_values(y.as_ref())?;
    let eta = default_eta(n, 0.5);
    Ok((DensityGrid::from_spectrum(&spec, eta, 4000)?, eta))
}

fn overlap_run(config: &ExperimentConfig, notes: &mut Vec<String>) -> Result<(Vec<ResultRow>, OverlapReport)> {
    let params = config.overlap.clone().unwrap_or_default();
    let (n, m) = (config.dims.n_rows, config.dims.n_cols);
    let alpha = n as f64 / m as f64;
    let lambda = config.lambda_grid[0];
    let mut rs = stream_rng(mix(config.master_seed, config.signal.seed), 0, role::FIXED_SIGNAL);
    let s = config.signal.kind.sample(n, m, &mut rs)?;
    let (grid, eta) = overlap_grid(config, lambda)?;
    let peak_density = grid.density().iter().cloned().fold(0.0, f64::max);
    let support: Vec<f64> = grid
        .xs()
        .iter()
        .zip(grid.density())
        .filter(|(_, d)| **d > 1e-6)
        .map(|(x, _)| *x)
        .collect();
    let (lo, hi) = (support[0], *support.last().unwrap());
    let sigma_index = params.sigma_index.unwrap_or(n / 2);
    let noise_kind = config.noise.kind;
    let setup = OverlapSetup {
        signal: s.as_ref(),
        lambda,
        sigma_index,
        n_trials: config.n_trials,
        n_bins: params.n_bins,
        range: (lo, hi),
        master_seed: mix(config.master_seed, config.noise.seed),
    };
    let curve = overlap_empirical(&setup, |rng| noise_kind.sample(n, m, rng))?;
    let family = match noise_family(noise_kind, n, m)? {
        Some(f) => f,
        None => NoiseFamily::gaussian(alpha)?,
    };
    let sigma_eff = lambda.sqrt() * curve.sigma;
    let mut theory = Vec::with_capacity(curve.points.len());
    let mut in_bulk = Vec::with_capacity(curve.points.len());
    for p in &curve.points {
        let bulk = grid.density_at(p.gamma) >= params.bulk_fraction * peak_density;
        let t = if grid.density_at(p.gamma) > 0.0 {
            overlap_theoretical(p.gamma, sigma_eff, &grid, &family, alpha, eta)?
        } else {
            0.0
        };
        theory.push(t);
        in_bulk.push(bulk);
    }
    let sup_deviation = curve
        .points
        .iter()
        .zip(&theory)
        .zip(&in_bulk)
        .filter(|(_, b)| **b)
        .map(|((p, t), _)| (p.overlap - t).abs())
        .fold(0.0, f64::max);
    let xs: Vec<f64> = curve.points.iter().map(|p| p.gamma).collect();
    let emp: Vec<f64> = curve.points.iter().map(|p| p.overlap).collect();
    let peak_empirical = peak_location(&xs, &emp, 0.8).unwrap_or(f64::NAN);
    // the prediction is smooth, so it is sampled finely for its argmax
    let fine: Vec<f64> = (0..=2000).map(|i| lo + (hi - lo) * i as f64 / 2000.0).collect();
    let fine_vals = fine
        .iter()
        .map(|&g| {
            if grid.density_at(g) >= params.bulk_fraction * peak_density {
                overlap_theoretical(g, sigma_eff, &grid, &family, alpha, eta)
            } else {
                Ok(f64::NEG_INFINITY)
            }
        })
        .collect::<Result<Vec<f64>>>()?;
    let peak_theory = peak_location(&fine, &fine_vals, 0.99).unwrap_or(f64::NAN);
    notes.push(format!(
        "signal fixed across trials; sigma_k = {} (index {sigma_index}); bins on [{lo}, {hi}]",
        curve.sigma
    ));
    let row = |estimator: &str, value: f64| ResultRow {
        experiment: config.experiment.name().to_string(),
        lambda,
        n,
        m,
        estimator: estimator.to_string(),
        mean_mse: value,
        ci95: 0.0,
        rel_err_pct: None,
        n_trials: config.n_trials,
        seed: config.master_seed,
        wall_ms: None,
    };
    let rows = vec![
        row("overlap_sup_deviation", sup_deviation),
        row("overlap_peak_shift", (peak_empirical - peak_theory).abs()),
    ];
    let report = OverlapReport {
        sigma: curve.sigma,
        points: curve.points,
        theory,
        in_bulk,
        sup_deviation,
        peak_empirical,
        peak_theory,
    };
    Ok((rows, report))
}
