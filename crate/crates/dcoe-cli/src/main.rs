//! `dcoe`: calibration, proportion estimation, dual-control selection, and
//! reproduction of the bundled numerical experiments.
//!
//! Exit codes: 0 success, 2 flag/input validation failure, 1 runtime
//! failure. Errors print one machine-parsable line on stderr:
//! `error kind=<usage|runtime> msg="..."`.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use dcoe::baselines::MetricRow;
use dcoe::depmodels::{phase_boundary, theory_boundaries, CovarianceSpec, Mu2Clamp};
use dcoe::fmt::{fmt_float, round_sig10, write_text};
use dcoe::fnpcontrol::{
    dcoe_select, dcoe_select_estimated, fnp_curve, read_truth_file, SSource, SelectionReport,
    Sidedness, StatVector,
};
use dcoe::proportion::{
    calibrate, estimate_pi, load_calibration, register_null_matrix, save_calibration, NullSource,
    DEFAULT_CALIBRATION_DRAWS,
};
use dcoe::simharness::consistency::consistency_curve;
use dcoe::simharness::grid::{run_grid, write_mask, GridSpec};
use dcoe::simharness::{load_config, run_experiment, ExperimentSpec, SignalStrength};

const REPORT_FORMAT_VERSION: u32 = 1;

#[derive(Parser)]
#[command(name = "dcoe", version, about = "Dual control of testing errors (FNP control)")]
struct Cli {
    /// Print progress details to stderr (repeat for more).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum SidednessArg {
    OneSided,
    TwoSided,
}

impl From<SidednessArg> for Sidedness {
    fn from(v: SidednessArg) -> Self {
        match v {
            SidednessArg::OneSided => Sidedness::OneSided,
            SidednessArg::TwoSided => Sidedness::TwoSided,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum ClampArg {
    Outer,
    Inner,
}

#[derive(Subcommand)]
enum Command {
    /// Compute the Monte-Carlo bounding sequences c_{p,0.5} and c_{p,1}.
    Calibrate {
        /// Dimension of the statistic vector.
        #[arg(long)]
        p: usize,
        /// Number of null draws (at least 100; inferred from the matrix for
        /// --null matrix:<file>).
        #[arg(long)]
        n: Option<usize>,
        /// Null source: `independent`, `covariance:<spec-file>`, or
        /// `matrix:<N x p file>`.
        #[arg(long, default_value = "independent")]
        null: String,
        /// Master seed (DCOE_SEED overrides when set).
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output calibration JSON.
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate the signal proportion of a z-file.
    EstimatePi {
        /// Z-statistics: one value per line, or `index value` rows.
        #[arg(long)]
        z: PathBuf,
        /// Calibration JSON from `calibrate`.
        #[arg(long)]
        calibration: PathBuf,
        #[arg(long, value_enum, default_value_t = SidednessArg::OneSided)]
        sidedness: SidednessArg,
        /// Optional JSON output path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Dual-control selection at FNP level beta.
    Select {
        #[arg(long)]
        z: PathBuf,
        /// Target FNP level in (0, 1).
        #[arg(long)]
        beta: f64,
        /// Signal-count mode: `known:<value>` or `estimate:<calibration-file>`.
        #[arg(long)]
        s_mode: String,
        #[arg(long, value_enum, default_value_t = SidednessArg::OneSided)]
        sidedness: SidednessArg,
        /// Optional ground-truth index file (1-based); adds realized
        /// FNP/FDP/FM to the report.
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Output report JSON.
        #[arg(long)]
        out: PathBuf,
        /// Estimated-FNP trace CSV (default: `<out>.trace.csv`).
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Re-run a bundled experiment (or a custom config file).
    Reproduce {
        /// Bundled preset: table1, table2-dcoe, figure3, or grid.
        #[arg(long)]
        experiment: Option<String>,
        /// Custom config file (JSON or TOML) instead of a preset.
        #[arg(long, conflicts_with = "experiment")]
        config: Option<PathBuf>,
        /// Covariance model for table1/figure3: ar, block, or factor.
        #[arg(long)]
        model: Option<String>,
        /// Override the constant signal strength.
        #[arg(long = "A")]
        a: Option<f64>,
        /// Override the sparsity exponent.
        #[arg(long)]
        gamma: Option<f64>,
        /// Override the replication count.
        #[arg(long)]
        reps: Option<usize>,
        /// Override the master seed (DCOE_SEED wins over both).
        #[arg(long)]
        seed: Option<u64>,
        /// Emit the estimator-consistency curve instead of result tables
        /// (implied by --experiment figure3).
        #[arg(long)]
        curve: bool,
        /// Output directory.
        #[arg(long)]
        out_dir: PathBuf,
        /// Worker threads (0 = automatic).
        #[arg(long, default_value_t = 0)]
        workers: usize,
    },
    /// Print the consistency boundaries and the phase boundary.
    Theory {
        #[arg(long)]
        gamma: f64,
        #[arg(long)]
        eta: f64,
        #[arg(long)]
        p: usize,
        #[arg(long, value_enum, default_value_t = ClampArg::Outer)]
        clamp: ClampArg,
    },
}

enum CliError {
    Usage(String),
    Runtime(String),
}

impl From<dcoe::Error> for CliError {
    fn from(e: dcoe::Error) -> Self {
        match e {
            dcoe::Error::Io { .. } | dcoe::Error::Replication { .. } => {
                CliError::Runtime(e.to_string())
            }
            other => CliError::Usage(other.to_string()),
        }
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error kind=usage msg={:?}", msg);
            ExitCode::from(2)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error kind=runtime msg={:?}", msg);
            ExitCode::from(1)
        }
    }
}

/// `DCOE_SEED` overrides any seed flag when set.
fn env_seed() -> Result<Option<u64>, CliError> {
    match std::env::var("DCOE_SEED") {
        Ok(v) => v
            .parse::<u64>()
            .map(Some)
            .map_err(|e| usage(format!("DCOE_SEED must be an unsigned integer: {e}"))),
        Err(_) => Ok(None),
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let verbose = cli.verbose;
    match cli.command {
        Command::Calibrate { p, n, null, seed, out } => cmd_calibrate(p, n, &null, seed, &out),
        Command::EstimatePi { z, calibration, sidedness, out } => {
            cmd_estimate_pi(&z, &calibration, sidedness.into(), out.as_deref())
        }
        Command::Select { z, beta, s_mode, sidedness, truth, out, trace } => {
            cmd_select(&z, beta, &s_mode, sidedness.into(), truth.as_deref(), &out, trace)
        }
        Command::Reproduce {
            experiment,
            config,
            model,
            a,
            gamma,
            reps,
            seed,
            curve,
            out_dir,
            workers,
        } => cmd_reproduce(ReproduceArgs {
            experiment,
            config,
            model,
            a,
            gamma,
            reps,
            seed,
            curve,
            out_dir,
            workers,
            verbose,
        }),
        Command::Theory { gamma, eta, p, clamp } => cmd_theory(gamma, eta, p, clamp),
    }
}

fn cmd_calibrate(
    p: usize,
    n: Option<usize>,
    null: &str,
    seed: u64,
    out: &Path,
) -> Result<(), CliError> {
    if p < 3 {
        return Err(usage(format!("--p must be at least 3, got {p}")));
    }
    let seed = env_seed()?.unwrap_or(seed);
    let (source, n_draws) = if null == "independent" {
        (NullSource::IndependentGaussian, n.unwrap_or(DEFAULT_CALIBRATION_DRAWS))
    } else if let Some(path) = null.strip_prefix("covariance:") {
        let spec: CovarianceSpec = load_config(Path::new(path))?;
        (NullSource::Covariance { spec }, n.unwrap_or(DEFAULT_CALIBRATION_DRAWS))
    } else if let Some(path) = null.strip_prefix("matrix:") {
        let matrix = register_null_matrix(Path::new(path), p)?;
        let rows = matrix.n_rows;
        if let Some(n) = n {
            if n != rows {
                return Err(usage(format!("--n {n} does not match the {rows} rows of {path}")));
            }
        }
        (NullSource::ExternalMatrix { matrix }, rows)
    } else {
        return Err(usage(format!(
            "--null must be `independent`, `covariance:<file>`, or `matrix:<file>`, got {null:?}"
        )));
    };
    if n_draws < 100 {
        return Err(usage(format!("--n must be at least 100, got {n_draws}")));
    }
    let calibration = calibrate(p, n_draws, &source, seed)?;
    save_calibration(&calibration, out)?;
    println!(
        "c_p_05={} c_p_1={} quantile_level={}",
        fmt_float(calibration.c_p_05),
        fmt_float(calibration.c_p_1),
        fmt_float(calibration.quantile_level()),
    );
    Ok(())
}

#[derive(Serialize)]
struct ProportionFile {
    format_version: u32,
    p: usize,
    pi_05: f64,
    pi_1: f64,
    pi_hat: f64,
    argmax_rank_05: usize,
    argmax_rank_1: usize,
}

fn cmd_estimate_pi(
    z_path: &Path,
    calibration_path: &Path,
    sidedness: Sidedness,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let calibration = load_calibration(calibration_path)?;
    let stats = StatVector::from_z_file(z_path, sidedness)?;
    let estimate = estimate_pi(&stats, &calibration)?;
    let file = ProportionFile {
        format_version: REPORT_FORMAT_VERSION,
        p: stats.len(),
        pi_05: round_sig10(estimate.pi_05),
        pi_1: round_sig10(estimate.pi_1),
        pi_hat: round_sig10(estimate.pi_hat),
        argmax_rank_05: estimate.argmax_rank_05,
        argmax_rank_1: estimate.argmax_rank_1,
    };
    if let Some(out) = out {
        write_json(out, &file)?;
    }
    println!(
        "pi_hat={} pi_05={} pi_1={} s_hat={}",
        fmt_float(estimate.pi_hat),
        fmt_float(estimate.pi_05),
        fmt_float(estimate.pi_1),
        fmt_float(estimate.pi_hat * stats.len() as f64),
    );
    Ok(())
}

enum SMode {
    Known(f64),
    Estimate(PathBuf),
}

fn parse_s_mode(s_mode: &str) -> Result<SMode, CliError> {
    if let Some(v) = s_mode.strip_prefix("known:") {
        let s: f64 = v
            .parse()
            .map_err(|e| usage(format!("bad known signal count {v:?}: {e}")))?;
        if !(s > 0.0 && s.is_finite()) {
            return Err(usage(format!("known signal count must be positive, got {s}")));
        }
        Ok(SMode::Known(s))
    } else if let Some(path) = s_mode.strip_prefix("estimate:") {
        Ok(SMode::Estimate(PathBuf::from(path)))
    } else {
        Err(usage(format!(
            "--s-mode must be `known:<value>` or `estimate:<calibration-file>`, got {s_mode:?}"
        )))
    }
}

#[derive(Serialize)]
struct MetricsBlock {
    fnp: f64,
    fdp: f64,
    fm_index: f64,
}

#[derive(Serialize)]
struct SelectionFile {
    format_version: u32,
    beta: f64,
    #[serde(serialize_with = "serialize_threshold")]
    threshold: f64,
    k_selected: usize,
    /// 1-based indices, matching the z-file's index column convention.
    selected: Vec<usize>,
    s_used: f64,
    s_source: SSource,
    fnp_hat_at_threshold: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    warning: Option<String>,
    trace_path: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    metrics: Option<MetricsBlock>,
}

/// JSON has no infinities; the unbounded thresholds serialize as the strings
/// `"inf"` / `"-inf"`.
fn serialize_threshold<S: serde::Serializer>(v: &f64, ser: S) -> Result<S::Ok, S::Error> {
    if v.is_finite() {
        ser.serialize_f64(round_sig10(*v))
    } else if *v > 0.0 {
        ser.serialize_str("inf")
    } else {
        ser.serialize_str("-inf")
    }
}

fn cmd_select(
    z_path: &Path,
    beta: f64,
    s_mode: &str,
    sidedness: Sidedness,
    truth: Option<&Path>,
    out: &Path,
    trace: Option<PathBuf>,
) -> Result<(), CliError> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(usage(format!("--beta must lie in (0, 1), got {beta}")));
    }
    let mode = parse_s_mode(s_mode)?;
    let mut stats = StatVector::from_z_file(z_path, sidedness)?;
    if let Some(truth_path) = truth {
        let truth = read_truth_file(truth_path)?;
        stats = stats.with_truth(truth)?;
    }
    let report = match &mode {
        SMode::Known(s) => {
            if *s > stats.len() as f64 {
                return Err(usage(format!(
                    "known signal count {s} exceeds the {} statistics in {}",
                    stats.len(),
                    z_path.display()
                )));
            }
            dcoe_select(&stats, beta, *s)?
        }
        SMode::Estimate(calibration_path) => {
            let calibration = load_calibration(calibration_path)?;
            dcoe_select_estimated(&stats, beta, &calibration)?
        }
    };

    let trace_path = trace.unwrap_or_else(|| {
        let mut os = out.as_os_str().to_owned();
        os.push(".trace.csv");
        PathBuf::from(os)
    });
    write_trace(&trace_path, &stats, &report)?;

    let metrics = match (truth.is_some(), stats.truth()) {
        (true, Some(_)) => {
            let row = dcoe::baselines::evaluate(&report.selected_set(), &stats, "selection")?;
            Some(MetricsBlock {
                fnp: round_sig10(row.fnp),
                fdp: round_sig10(row.fdp),
                fm_index: round_sig10(row.fm_index),
            })
        }
        _ => None,
    };
    let file = SelectionFile {
        format_version: REPORT_FORMAT_VERSION,
        beta: round_sig10(report.beta),
        threshold: report.threshold,
        k_selected: report.k_selected,
        selected: report.selected.iter().map(|j| j + 1).collect(),
        s_used: round_sig10(report.s_used),
        s_source: report.s_source,
        fnp_hat_at_threshold: round_sig10(report.fnp_hat_at_threshold),
        warning: report
            .degenerate_proportion
            .then(|| "DegenerateProportion: estimated signal proportion is zero".to_string()),
        trace_path: trace_path.display().to_string(),
        metrics,
    };
    write_json(out, &file)?;
    println!(
        "selected={} threshold={} fnp_hat={} s_used={}{}",
        report.k_selected,
        fmt_float(report.threshold),
        fmt_float(report.fnp_hat_at_threshold),
        fmt_float(report.s_used),
        if report.degenerate_proportion { " warning=DegenerateProportion" } else { "" },
    );
    Ok(())
}

/// Trace CSV: the full estimated-FNP curve, `rank,threshold,fnp_hat`.
fn write_trace(path: &Path, stats: &StatVector, report: &SelectionReport) -> Result<(), CliError> {
    let mut outp = String::from("rank,threshold,fnp_hat\n");
    if report.s_used > 0.0 {
        let curve = fnp_curve(stats, report.s_used)?;
        for (rank0, (t, e)) in curve.thresholds.iter().zip(&curve.estimates).enumerate() {
            outp.push_str(&format!("{},{},{}\n", rank0 + 1, fmt_float(*t), fmt_float(*e)));
        }
    }
    write_text(path, &outp)?;
    Ok(())
}

struct ReproduceArgs {
    experiment: Option<String>,
    config: Option<PathBuf>,
    model: Option<String>,
    a: Option<f64>,
    gamma: Option<f64>,
    reps: Option<usize>,
    seed: Option<u64>,
    curve: bool,
    out_dir: PathBuf,
    workers: usize,
    verbose: u8,
}

enum RunKind {
    Tables(ExperimentSpec),
    Curve(ExperimentSpec),
    Grid(GridSpec),
}

fn preset_content(experiment: &str, model: Option<&str>) -> Result<&'static str, CliError> {
    let model = model.unwrap_or("ar");
    match (experiment, model) {
        ("table1", "ar") => Ok(include_str!("../presets/table1_ar.toml")),
        ("table1", "block") => Ok(include_str!("../presets/table1_block.toml")),
        ("table1", "factor") => Ok(include_str!("../presets/table1_factor.toml")),
        ("table2-dcoe", _) => Ok(include_str!("../presets/table2_dcoe.toml")),
        ("figure3", "ar") => Ok(include_str!("../presets/figure3_ar.toml")),
        ("figure3", "block") => Ok(include_str!("../presets/figure3_block.toml")),
        ("figure3", "factor") => Ok(include_str!("../presets/figure3_factor.toml")),
        ("grid", _) => Ok(include_str!("../presets/grid.toml")),
        ("table1" | "figure3", other) => {
            Err(usage(format!("--model must be ar, block, or factor, got {other:?}")))
        }
        (other, _) => Err(usage(format!(
            "--experiment must be table1, table2-dcoe, figure3, or grid, got {other:?}"
        ))),
    }
}

fn resolve_run(args: &ReproduceArgs) -> Result<RunKind, CliError> {
    let (content, is_grid, is_curve): (String, bool, bool) = match (&args.experiment, &args.config)
    {
        (Some(name), None) => {
            let content = preset_content(name, args.model.as_deref())?.to_string();
            (content, name == "grid", name == "figure3" || args.curve)
        }
        (None, Some(path)) => {
            let content = dcoe::fmt::read_text(path)?;
            // Grid configs are recognized by their dimension fields.
            let is_grid = content.contains("rows") && content.contains("cols");
            (content, is_grid, args.curve)
        }
        _ => return Err(usage("exactly one of --experiment or --config is required")),
    };

    if is_grid {
        let mut spec: GridSpec =
            parse_config_str(&content).map_err(|e| usage(format!("bad grid config: {e}")))?;
        if args.a.is_some() || args.gamma.is_some() || args.reps.is_some() {
            return Err(usage("--A/--gamma/--reps do not apply to grid configs"));
        }
        if let Some(seed) = env_seed()?.or(args.seed) {
            spec.master_seed = seed;
        }
        return Ok(RunKind::Grid(spec));
    }

    let mut spec: ExperimentSpec =
        parse_config_str(&content).map_err(|e| usage(format!("bad experiment config: {e}")))?;
    if let Some(a) = args.a {
        spec.signal_strength = SignalStrength::Constant { value: a };
    }
    if let Some(gamma) = args.gamma {
        spec.gamma = gamma;
    }
    if let Some(reps) = args.reps {
        spec.n_replications = reps;
    }
    if let Some(seed) = env_seed()?.or(args.seed) {
        spec.master_seed = seed;
    }
    spec.validate()?;
    if is_curve {
        Ok(RunKind::Curve(spec))
    } else {
        Ok(RunKind::Tables(spec))
    }
}

/// Parses embedded or user-supplied config text: TOML first, then JSON.
fn parse_config_str<T: serde::de::DeserializeOwned>(content: &str) -> Result<T, String> {
    match toml::from_str(content) {
        Ok(v) => Ok(v),
        Err(toml_err) => serde_json::from_str(content)
            .map_err(|json_err| format!("not TOML ({toml_err}) nor JSON ({json_err})")),
    }
}

fn cmd_reproduce(args: ReproduceArgs) -> Result<(), CliError> {
    let kind = resolve_run(&args)?;
    std::fs::create_dir_all(&args.out_dir)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", args.out_dir.display())))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.workers)
        .build()
        .map_err(|e| CliError::Runtime(format!("cannot build worker pool: {e}")))?;
    let out = args.out_dir.clone();
    let verbose = args.verbose;
    pool.install(move || -> Result<(), CliError> {
        match kind {
            RunKind::Tables(spec) => {
                if verbose > 0 {
                    eprintln!(
                        "running {} replications at p={} with {} methods",
                        spec.n_replications,
                        spec.p,
                        spec.methods.len()
                    );
                }
                let result = run_experiment(&spec)?;
                write_json(&out.join("config.json"), &spec)?;
                result.write_summary_csv(&out.join("summary.csv"))?;
                result.write_replications_csv(&out.join("replications.csv"))?;
                for s in &result.summaries {
                    println!(
                        "{}: mean_fnp={} sd_fnp={} mean_fdp={} mean_fm={}",
                        s.method,
                        fmt_float(s.mean_fnp),
                        fmt_float(s.sd_fnp),
                        fmt_float(s.mean_fdp),
                        fmt_float(s.mean_fm),
                    );
                }
                println!("wrote {}", out.join("summary.csv").display());
            }
            RunKind::Curve(spec) => {
                let curve = consistency_curve(&spec)?;
                write_json(&out.join("config.json"), &spec)?;
                curve.write_csv(&out.join("curve.csv"))?;
                println!(
                    "mu1={} mu2={} mu_min={} eta={}",
                    fmt_float(curve.mu1),
                    fmt_float(curve.mu2),
                    fmt_float(curve.mu_min),
                    fmt_float(curve.eta),
                );
                println!("wrote {}", out.join("curve.csv").display());
            }
            RunKind::Grid(spec) => {
                let result = run_grid(&spec)?;
                write_json(&out.join("config.json"), &spec)?;
                write_mask(&out.join("mask_truth.txt"), spec.rows, spec.cols, &result.mask)?;
                for sel in &result.selections {
                    let file = format!("mask_{}.txt", slug(&sel.method));
                    write_mask(&out.join(file), spec.rows, spec.cols, &sel.selected)?;
                }
                result.write_metrics_csv(&out.join("metrics.csv"))?;
                for sel in &result.selections {
                    print_metric_line(&sel.metric);
                }
                println!("wrote {}", out.join("metrics.csv").display());
            }
        }
        Ok(())
    })
}

fn print_metric_line(m: &MetricRow) {
    println!(
        "{}: fnp={} fdp={} fm={} n_selected={}",
        m.method_label,
        fmt_float(m.fnp),
        fmt_float(m.fdp),
        fmt_float(m.fm_index),
        m.n_selected,
    );
}

fn slug(label: &str) -> String {
    let mut out = String::new();
    let mut dash = false;
    for c in label.chars() {
        if c.is_ascii_alphanumeric() || c == '.' {
            out.push(c.to_ascii_lowercase());
            dash = false;
        } else if !dash && !out.is_empty() {
            out.push('-');
            dash = true;
        }
    }
    out.trim_end_matches('-').to_string()
}

fn cmd_theory(gamma: f64, eta: f64, p: usize, clamp: ClampArg) -> Result<(), CliError> {
    let clamp = match clamp {
        ClampArg::Outer => Mu2Clamp::Outer,
        ClampArg::Inner => Mu2Clamp::Inner,
    };
    let b = theory_boundaries(gamma, eta, p, clamp)?;
    let phase = phase_boundary(gamma, eta)?;
    println!(
        "mu1={} mu2={} mu_min={} phase_boundary={}",
        fmt_float(b.mu1),
        fmt_float(b.mu2),
        fmt_float(b.mu_min),
        fmt_float(phase),
    );
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut body = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Runtime(format!("serialization failed: {e}")))?;
    body.push('\n');
    write_text(path, &body)?;
    Ok(())
}
