//! `rie`: denoise matrices with rectangular RIEs and run the benchmark suite.
//!
//! Exit codes: 0 success, 2 I/O failure, 3 invalid input or configuration,
//! 4 numerical failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rie_core::bench::{
    read_rows, run_experiment_with_threads, Dims, ExperimentConfig, ExperimentKind, ExperimentResult, OverlapParams,
};
use rie_core::estimators::{gaussian_rie, general_rie};
use rie_core::matrix_io::{read_matrix, write_matrix, MatrixFormat};
use rie_core::plot::{render_svg, PlotOptions};
use rie_core::spectra::default_eta;
use rie_core::theory::write_overlap_csv;
use rie_core::{NoiseFamily, RieError};

#[derive(Parser)]
#[command(name = "rie", version, about = "Rectangular rotational invariant estimators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum NoiseArg {
    Gaussian,
    Uniform,
    #[value(name = "rank1sum")]
    Rank1Sum,
}

#[derive(Subcommand)]
enum Command {
    /// Denoise a matrix; prints the shrunk singular values as JSON.
    Denoise {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum)]
        noise: NoiseArg,
        /// Rank-one-sum noise: number of factors over N.
        #[arg(long, default_value_t = 1.0)]
        c: f64,
        /// Signal-to-noise ratio lambda.
        #[arg(long)]
        snr: f64,
        /// Smoothing exponent: eta = N^-eps.
        #[arg(long, default_value_t = 0.5)]
        eps: f64,
        /// `.bin`/`.riem` selects the binary format, anything else CSV.
        #[arg(long)]
        output: PathBuf,
    },
    /// Run a benchmark described by a JSON config (or a built-in preset).
    Bench {
        #[arg(long, required_unless_present = "preset", conflicts_with = "preset")]
        config: Option<PathBuf>,
        #[arg(long)]
        preset: Option<String>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads; RIE_THREADS takes precedence.
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Print a built-in benchmark config as JSON.
    Preset { name: String },
    /// Trace-relation error at z = 1 + i/sqrt(N) over a grid of sizes.
    CheckTheorem2 {
        /// Comma-separated row counts.
        #[arg(long, value_delimiter = ',', required = true)]
        n_grid: Vec<usize>,
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated aspect ratios N/M.
        #[arg(long, value_delimiter = ',', default_value = "1,0.5")]
        alpha0: Vec<f64>,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 1.0)]
        lambda: f64,
        #[arg(long, default_value_t = 2024)]
        seed: u64,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Monte-Carlo singular-vector overlap against its prediction.
    Overlap {
        #[arg(long, default_value_t = 0.25)]
        alpha: f64,
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        lambda: f64,
        #[arg(long, default_value_t = 50)]
        bins: usize,
        /// Index into the descending signal spectrum (default: median).
        #[arg(long)]
        sigma_index: Option<usize>,
        #[arg(long, default_value_t = 2024)]
        seed: u64,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Render a result CSV as an SVG line chart.
    Plot {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        log_x: bool,
        #[arg(long)]
        log_y: bool,
        #[arg(long)]
        title: Option<String>,
    },
}

/// Failure with its exit code.
struct Failure {
    code: u8,
    message: String,
}

fn exit_code(e: &RieError) -> u8 {
    match e {
        RieError::Io(_) => 2,
        RieError::Dimension(_)
        | RieError::NonFinite { .. }
        | RieError::Domain(_)
        | RieError::Range { .. }
        | RieError::UnsupportedFamily(_)
        | RieError::Config { .. }
        | RieError::Coverage(_)
        | RieError::InsufficientSamples(_)
        | RieError::Format(_)
        | RieError::Json(_) => 3,
        RieError::AtIndex { source, .. } => exit_code(source),
        _ => 4,
    }
}

impl From<RieError> for Failure {
    fn from(e: RieError) -> Self {
        Failure {
            code: exit_code(&e),
            message: e.to_string(),
        }
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure {
        code: 2,
        message: format!("{}: {e}", path.display()),
    }
}

fn invalid(message: impl Into<String>) -> Failure {
    Failure {
        code: 3,
        message: message.into(),
    }
}

type CliResult = std::result::Result<(), Failure>;

fn threads(flag: Option<usize>) -> std::result::Result<Option<usize>, Failure> {
    match std::env::var("RIE_THREADS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map(Some)
            .map_err(|_| invalid(format!("RIE_THREADS must be a positive integer, got `{v}`"))),
        Err(_) => Ok(flag),
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> CliResult {
    fs::write(path, bytes).map_err(|e| io_failure(path, e))
}

fn read_text(path: &Path) -> std::result::Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| io_failure(path, e))
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn denoise(input: &Path, noise: NoiseArg, c: f64, snr: f64, eps: f64, output: &Path) -> CliResult {
    let y = read_matrix(input).map_err(|e| match e {
        RieError::Io(io) => io_failure(input, io),
        other => other.into(),
    })?;
    if !(snr > 0.0 && snr.is_finite()) {
        return Err(invalid(format!("--snr must be positive, got {snr}")));
    }
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(invalid(format!("--eps must be positive, got {eps}")));
    }
    let (n, m) = (y.nrows().min(y.ncols()), y.nrows().max(y.ncols()));
    let alpha = n as f64 / m.max(1) as f64;
    let result = match noise {
        NoiseArg::Gaussian => gaussian_rie(y.as_ref(), snr, eps)?,
        NoiseArg::Uniform => general_rie(y.as_ref(), &NoiseFamily::uniform_spectrum(alpha)?, snr, default_eta(n, eps))?,
        NoiseArg::Rank1Sum => general_rie(y.as_ref(), &NoiseFamily::rank_one_sum(c, alpha)?, snr, default_eta(n, eps))?,
    };
    write_matrix(output, result.estimate.as_ref(), MatrixFormat::from_path(output)).map_err(|e| match e {
        RieError::Io(io) => io_failure(output, io),
        other => other.into(),
    })?;
    println!("{}", result.summary_json()?);
    if !result.flags.is_empty() {
        return Err(Failure {
            code: 4,
            message: format!("zero smoothed density at singular value indices {:?}; set to 0", result.flags),
        });
    }
    Ok(())
}

fn write_result(result: &ExperimentResult, out: &Path, config: &ExperimentConfig) -> CliResult {
    let csv = result.to_csv_string()?;
    write_file(out, csv.as_bytes())?;
    let meta = serde_json::to_string_pretty(&result.metadata).map_err(RieError::from)?;
    write_file(&sibling(out, ".meta.json"), meta.as_bytes())?;
    if let Some(rep) = &result.overlap {
        let path = config
            .output
            .overlap_csv
            .as_ref()
            .map(PathBuf::from)
            .unwrap_or_else(|| sibling(out, ".overlap.csv"));
        let mut buf = Vec::new();
        write_overlap_csv(&rep.points, &mut buf)?;
        write_file(&path, &buf)?;
    }
    if let Some(svg) = &config.output.svg {
        let text = render_svg(&result.rows, &PlotOptions::default())?;
        write_file(Path::new(svg), text.as_bytes())?;
    }
    Ok(())
}

fn preset_by_name(name: &str) -> std::result::Result<ExperimentConfig, Failure> {
    ExperimentKind::ALL
        .iter()
        .find(|k| k.name() == name)
        .map(|k| ExperimentConfig::preset(*k))
        .ok_or_else(|| {
            let names: Vec<&str> = ExperimentKind::ALL.iter().map(|k| k.name()).collect();
            invalid(format!("unknown preset `{name}`; expected one of {}", names.join(", ")))
        })
}

fn bench(config: Option<&Path>, preset: Option<&str>, out: &Path, seed: Option<u64>, threads_flag: Option<usize>) -> CliResult {
    let mut cfg = match (config, preset) {
        (Some(path), _) => ExperimentConfig::from_json(&read_text(path)?)?,
        (None, Some(name)) => preset_by_name(name)?,
        (None, None) => return Err(invalid("either --config or --preset is required")),
    };
    if let Some(s) = seed {
        cfg.master_seed = s;
    }
    let result = run_experiment_with_threads(&cfg, threads(threads_flag)?)?;
    write_result(&result, out, &cfg)?;
    eprintln!(
        "{}: {} rows, config {}, {:.0} ms",
        cfg.experiment,
        result.rows.len(),
        &result.metadata.config_hash[..12],
        result.metadata.wall_ms
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn check_theorem2(
    n_grid: Vec<usize>,
    out: &Path,
    alpha0: Vec<f64>,
    trials: usize,
    lambda: f64,
    seed: u64,
    threads_flag: Option<usize>,
) -> CliResult {
    let mut cfg = ExperimentConfig::preset(ExperimentKind::Fig3);
    cfg.n_grid = n_grid;
    cfg.alpha_grid = alpha0;
    cfg.n_trials = trials;
    cfg.lambda_grid = vec![lambda];
    cfg.master_seed = seed;
    let result = run_experiment_with_threads(&cfg, threads(threads_flag)?)?;
    write_result(&result, out, &cfg)
}

#[allow(clippy::too_many_arguments)]
fn overlap(
    alpha: f64,
    n: usize,
    trials: usize,
    out: &Path,
    lambda: f64,
    bins: usize,
    sigma_index: Option<usize>,
    seed: u64,
    threads_flag: Option<usize>,
) -> CliResult {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(invalid(format!("--alpha must lie in (0, 1], got {alpha}")));
    }
    let m = (n as f64 / alpha).round() as usize;
    let mut cfg = ExperimentConfig::preset(ExperimentKind::Overlap);
    cfg.dims = Dims { n_rows: n, n_cols: m };
    for e in [&mut cfg.signal, &mut cfg.noise] {
        e.n_rows = n;
        e.n_cols = m;
    }
    cfg.n_trials = trials;
    cfg.lambda_grid = vec![lambda];
    cfg.master_seed = seed;
    cfg.overlap = Some(OverlapParams {
        sigma_index,
        n_bins: bins,
        ..OverlapParams::default()
    });
    let result = run_experiment_with_threads(&cfg, threads(threads_flag)?)?;
    let rep = result.overlap.as_ref().expect("overlap run reports curves");
    let mut buf = Vec::new();
    write_overlap_csv(&rep.points, &mut buf)?;
    write_file(out, &buf)?;
    let theory: Vec<_> = rep
        .points
        .iter()
        .zip(&rep.theory)
        .map(|(p, t)| rie_core::theory::OverlapPoint {
            gamma: p.gamma,
            overlap: *t,
            stderr: 0.0,
            n_trials: 0,
            n_samples: 0,
        })
        .collect();
    let mut buf = Vec::new();
    write_overlap_csv(&theory, &mut buf)?;
    write_file(&sibling(out, ".theory.csv"), &buf)?;
    let summary = serde_json::json!({
        "sigma": rep.sigma,
        "sup_deviation": rep.sup_deviation,
        "peak_empirical": rep.peak_empirical,
        "peak_theory": rep.peak_theory,
    });
    println!("{summary}");
    Ok(())
}

fn plot(input: &Path, out: &Path, log_x: bool, log_y: bool, title: Option<String>) -> CliResult {
    let rows = read_rows(&read_text(input)?)?;
    let svg = render_svg(&rows, &PlotOptions { log_x, log_y, title })?;
    write_file(out, svg.as_bytes())
}

fn run(cli: Cli) -> CliResult {
    match cli.command {
        Command::Denoise {
            input,
            noise,
            c,
            snr,
            eps,
            output,
        } => denoise(&input, noise, c, snr, eps, &output),
        Command::Bench {
            config,
            preset,
            out,
            seed,
            threads,
        } => bench(config.as_deref(), preset.as_deref(), &out, seed, threads),
        Command::Preset { name } => {
            let cfg = preset_by_name(&name)?;
            println!("{}", serde_json::to_string_pretty(&cfg).map_err(RieError::from)?);
            Ok(())
        }
        Command::CheckTheorem2 {
            n_grid,
            out,
            alpha0,
            trials,
            lambda,
            seed,
            threads,
        } => check_theorem2(n_grid, &out, alpha0, trials, lambda, seed, threads),
        Command::Overlap {
            alpha,
            n,
            trials,
            out,
            lambda,
            bins,
            sigma_index,
            seed,
            threads,
        } => overlap(alpha, n, trials, &out, lambda, bins, sigma_index, seed, threads),
        Command::Plot {
            input,
            out,
            log_x,
            log_y,
            title,
        } => plot(&input, &out, log_x, log_y, title),
    }
}

fn main() -> ExitCode {
    faer::set_global_parallelism(faer::Par::Seq);
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 3 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
