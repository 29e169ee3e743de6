//! Command-line driver: experiment sweeps, hierarchy export/import, and
//! ad-hoc estimation on externally supplied hierarchies.
//!
//! Configuration comes from an optional TOML file with flag overrides on
//! top; the resolved configuration is echoed next to the outputs so a run
//! can be reproduced bit-identically from its artifacts alone.
//!
//! Exit codes: 0 on success, 1 on usage errors (bad flags, malformed or
//! inconsistent configuration), 2 on runtime failures (solver breakdown,
//! unreadable or invalid input data).

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::anyhow;
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use levest::estimator::{
    compute_breakdown_from, CoarseDirect, CoarseSpec, FineTermKind, TermBreakdown,
};
use levest::experiments::{
    emit_report, run_coarse_size_experiment, run_levels_experiment, CoarseSizeExperimentConfig,
    CoarseVariant, EstimateReport, LevelsExperimentConfig, LevelsVariant, ReportFormat,
};
use levest::io::{export_problem, import_hierarchy, AlgebraicHierarchy};
use levest::la::SparseMatrix;
use levest::problem::{build_problem, RhsSpec};
use levest::solver::{
    reference_solution, solve_multigrid_monitored, ReferenceMode, VcycleConfig,
};
use levest::transfer::restrict_residuals;

#[derive(Parser)]
#[command(
    name = "levest",
    version,
    about = "Multilevel residual-based error estimates for P1 Poisson problems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fix the coarsest mesh and sweep the number of levels.
    LevelsExp(LevelsExpArgs),
    /// Fix two levels and sweep the coarsest-mesh size.
    CoarseExp(CoarseExpArgs),
    /// Build a hierarchy and write it as Matrix Market files plus metadata.
    Export(ExportArgs),
    /// Evaluate the estimator terms on an exported or external hierarchy.
    Estimate(EstimateArgs),
    /// Solve one problem with the monitored multigrid and report each cycle.
    Solve(SolveArgs),
}

#[derive(Args)]
struct LevelsExpArgs {
    /// TOML file with a levels-experiment configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    id: Option<String>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    cells0: Option<usize>,
    /// Run every finest level from 1 up to this value.
    #[arg(long)]
    max_levels: Option<usize>,
    /// Comma-separated finest levels, e.g. "1,3,5".
    #[arg(long, conflicts_with = "max_levels")]
    levels: Option<String>,
    /// Use the Gaussian-bump load instead of f = 1.
    #[arg(long)]
    manufactured: Option<bool>,
    /// Comma-separated report variants (i1_sqrt_sum, i2_sum_of_norms).
    #[arg(long)]
    variants: Option<String>,
    #[arg(long)]
    quad_order: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct CoarseExpArgs {
    /// TOML file with a coarse-size-experiment configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    id: Option<String>,
    #[arg(long)]
    dim: Option<usize>,
    /// Comma-separated coarsest-mesh sizes, e.g. "6,12,24".
    #[arg(long)]
    cells0: Option<String>,
    #[arg(long)]
    manufactured: Option<bool>,
    /// Comma-separated variants (direct, fixed_cg, diag_bound, adaptive).
    #[arg(long)]
    variants: Option<String>,
    /// Stopping parameter of the adaptive coarse solve.
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long)]
    fixed_cg_k: Option<usize>,
    #[arg(long)]
    quad_order: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct OutputArgs {
    /// Output directory for report files.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Report format: csv (plus calibration sidecar) or json.
    #[arg(long, default_value = "csv")]
    format: String,
}

#[derive(Args)]
struct ExportArgs {
    #[arg(long, default_value_t = 3)]
    dim: usize,
    #[arg(long, default_value_t = 6)]
    cells0: usize,
    /// Finest level index of the exported hierarchy.
    #[arg(long, default_value_t = 1)]
    levels: usize,
    #[arg(long, default_value_t = true)]
    manufactured: bool,
    #[arg(long, default_value_t = 4)]
    quad_order: usize,
    /// Directory to write the hierarchy into.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EstimateArgs {
    /// Directory holding an exported hierarchy.
    #[arg(long)]
    hierarchy: PathBuf,
    /// Coarse-term evaluation: direct, fixed_cg, diag_bound or adaptive.
    #[arg(long, default_value = "direct")]
    variant: String,
    #[arg(long, default_value_t = 0.1)]
    theta: f64,
    /// Lower bound on the smallest coarse eigenvalue; defaults to the
    /// metadata value.
    #[arg(long)]
    lambda_min_lb: Option<f64>,
    /// Coefficient of the diagonal coarse bound; defaults to the metadata
    /// ratio.
    #[arg(long)]
    ratio_coef: Option<f64>,
    #[arg(long, default_value_t = 4)]
    fixed_cg_k: usize,
    #[arg(long, default_value_t = 5000)]
    max_iter: usize,
    /// Evaluate the residual after this many V-cycles instead of at the
    /// zero vector.
    #[arg(long, default_value_t = 0)]
    vcycles: usize,
    /// Write the JSON result here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long, default_value_t = 3)]
    dim: usize,
    #[arg(long, default_value_t = 6)]
    cells0: usize,
    /// Finest level index.
    #[arg(long, default_value_t = 1)]
    levels: usize,
    #[arg(long, default_value_t = true)]
    manufactured: bool,
    #[arg(long, default_value_t = 4)]
    quad_order: usize,
    /// Relative energy error to stop at.
    #[arg(long, default_value_t = 1e-11)]
    mg_tol: f64,
    #[arg(long, default_value_t = 50)]
    max_cycles: usize,
    /// Write the per-cycle CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

enum CliError {
    Usage(String),
    Run(anyhow::Error),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(msg) => write!(f, "{msg}"),
            CliError::Run(e) => write!(f, "{e:#}"),
        }
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Run(e)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Run(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::LevelsExp(args) => levels_exp(args),
        Command::CoarseExp(args) => coarse_exp(args),
        Command::Export(args) => export(args),
        Command::Estimate(args) => estimate(args),
        Command::Solve(args) => solve(args),
    }
}

fn read_config<T: serde::de::DeserializeOwned + Default>(
    path: Option<&Path>,
) -> Result<T, CliError> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| usage(format!("cannot read config {}: {e}", p.display())))?;
            toml::from_str(&text)
                .map_err(|e| usage(format!("config {}: {e}", p.display())))
        }
    }
}

fn parse_list<T>(raw: &str, what: &str) -> Result<Vec<T>, CliError>
where
    T: std::str::FromStr,
    T::Err: fmt::Display,
{
    raw.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<T>()
                .map_err(|e| usage(format!("invalid {what} entry '{s}': {e}")))
        })
        .collect()
}

fn parse_format(raw: &str) -> Result<ReportFormat, CliError> {
    match raw {
        "csv" => Ok(ReportFormat::Csv),
        "json" => Ok(ReportFormat::Json),
        other => Err(usage(format!("unknown format '{other}' (expected csv or json)"))),
    }
}

/// Write the resolved configuration and print a one-line summary, so the
/// run is reproducible from its artifacts.
fn finish_experiment<C: Serialize>(
    config: &C,
    report: &EstimateReport,
    format: ReportFormat,
    out: &Path,
) -> Result<(), CliError> {
    let mut files = emit_report(report, format, out)
        .map_err(|e| anyhow!(e).context("writing report"))?;
    let config_path = out.join(format!("{}.config.json", report.experiment));
    let mut buf = serde_json::to_vec_pretty(config)
        .map_err(|e| CliError::Run(anyhow!("serialize config: {e}")))?;
    buf.push(b'\n');
    fs::write(&config_path, buf).map_err(|e| CliError::Run(anyhow!(e)))?;
    files.push(config_path);
    for note in &report.notes {
        eprintln!("note: {note}");
    }
    let summary = serde_json::json!({
        "experiment": report.experiment,
        "c_numexp": report.calibration.c_numexp,
        "corpus_snapshots": report.calibration.snapshots,
        "rows": report.rows.len(),
        "files": files,
    });
    println!("{summary:#}");
    Ok(())
}

fn levels_exp(args: LevelsExpArgs) -> Result<(), CliError> {
    let mut config: LevelsExperimentConfig = read_config(args.config.as_deref())?;
    if let Some(id) = args.id {
        config.id = Some(id);
    }
    if let Some(dim) = args.dim {
        config.dim = dim;
    }
    if let Some(cells0) = args.cells0 {
        config.cells0 = cells0;
    }
    if let Some(max) = args.max_levels {
        if max == 0 {
            return Err(usage("--max-levels must be at least 1"));
        }
        config.levels = (1..=max).collect();
    }
    if let Some(raw) = args.levels.as_deref() {
        config.levels = parse_list(raw, "level")?;
    }
    if let Some(m) = args.manufactured {
        config.manufactured = m;
    }
    if let Some(raw) = args.variants.as_deref() {
        config.variants = parse_list::<LevelsVariant>(raw, "variant")?;
    }
    if let Some(q) = args.quad_order {
        config.solve.quad_order = q;
    }
    if let Some(seed) = args.seed {
        config.seed = Some(seed);
    }
    config.validate().map_err(|e| usage(e.to_string()))?;
    let format = parse_format(&args.output.format)?;
    let report = run_levels_experiment(&config)
        .map_err(|e| anyhow!(e).context("levels experiment"))?;
    finish_experiment(&config, &report, format, &args.output.out)
}

fn coarse_exp(args: CoarseExpArgs) -> Result<(), CliError> {
    let mut config: CoarseSizeExperimentConfig = read_config(args.config.as_deref())?;
    if let Some(id) = args.id {
        config.id = Some(id);
    }
    if let Some(dim) = args.dim {
        config.dim = dim;
    }
    if let Some(raw) = args.cells0.as_deref() {
        config.cells0_list = parse_list(raw, "cells0")?;
    }
    if let Some(m) = args.manufactured {
        config.manufactured = m;
    }
    if let Some(raw) = args.variants.as_deref() {
        config.variants = parse_list::<CoarseVariant>(raw, "variant")?;
    }
    if let Some(theta) = args.theta {
        config.theta = theta;
    }
    if let Some(k) = args.fixed_cg_k {
        config.fixed_cg_k = k;
    }
    if let Some(q) = args.quad_order {
        config.solve.quad_order = q;
    }
    if let Some(seed) = args.seed {
        config.seed = Some(seed);
    }
    config.validate().map_err(|e| usage(e.to_string()))?;
    let format = parse_format(&args.output.format)?;
    let report = run_coarse_size_experiment(&config)
        .map_err(|e| anyhow!(e).context("coarse-size experiment"))?;
    finish_experiment(&config, &report, format, &args.output.out)
}

fn export(args: ExportArgs) -> Result<(), CliError> {
    if args.levels == 0 {
        return Err(usage("--levels must be at least 1"));
    }
    let rhs = if args.manufactured {
        RhsSpec::Manufactured
    } else {
        RhsSpec::ConstantOne
    };
    let problem = build_problem(args.dim, args.cells0, args.levels + 1, rhs, args.quad_order)
        .map_err(|e| anyhow!(e).context("building problem"))?;
    let files =
        export_problem(&problem, &args.out).map_err(|e| anyhow!(e).context("export"))?;
    let summary = serde_json::json!({
        "dim": args.dim,
        "cells0": args.cells0,
        "levels": args.levels,
        "files": files,
    });
    println!("{summary:#}");
    Ok(())
}

/// Minimal per-level operator bundles for solver use on imported data: the
/// V-cycle touches only the matrices and their diagonals, so the mass
/// matrices stay empty.
fn algebraic_operators(h: &AlgebraicHierarchy) -> Vec<levest::assembly::LevelOperators> {
    h.a.iter()
        .zip(&h.d)
        .map(|(a, d)| levest::assembly::LevelOperators {
            a: a.clone(),
            m: SparseMatrix::from_triplets(0, 0, []),
            ms: SparseMatrix::from_triplets(0, 0, []),
            d: d.clone(),
            free_multiplicity: Vec::new(),
        })
        .collect()
}

#[derive(Serialize)]
struct EstimateOutput {
    variant: String,
    num_levels: usize,
    vcycles: usize,
    fine_terms_diag: Vec<f64>,
    fine_sum: f64,
    coarse_term: f64,
    /// (fine_sum + coarse_term)^{1/2} with unit constant.
    estimate_raw: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    adaptive_iters: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mu_sq: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    zeta_sq: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    adaptive_hit_max_iter: Option<bool>,
}

fn estimate(args: EstimateArgs) -> Result<(), CliError> {
    let variant: CoarseVariant = args
        .variant
        .parse()
        .map_err(|e: levest::Error| usage(e.to_string()))?;
    let hierarchy = import_hierarchy(&args.hierarchy).map_err(|e| {
        anyhow!(e).context(format!(
            "importing hierarchy from {}",
            args.hierarchy.display()
        ))
    })?;
    let lambda_min_lb = args.lambda_min_lb.or(hierarchy.metadata.lambda_min_lb);
    let ratio_coef = args.ratio_coef.or(hierarchy.metadata.ratio);
    if variant == CoarseVariant::Adaptive && lambda_min_lb.is_none() {
        return Err(usage(
            "adaptive variant needs --lambda-min-lb (metadata has no value)",
        ));
    }
    if variant == CoarseVariant::DiagBound && ratio_coef.is_none() {
        return Err(usage(
            "diag_bound variant needs --ratio-coef (metadata has no value)",
        ));
    }
    let finest = hierarchy.num_levels() - 1;
    let v = if args.vcycles == 0 {
        vec![0.0; hierarchy.a[finest].rows()]
    } else {
        let ops = algebraic_operators(&hierarchy);
        let cfg = VcycleConfig::default();
        let mut x = vec![0.0; hierarchy.a[finest].rows()];
        for _ in 0..args.vcycles {
            levest::solver::vcycle(&ops, &hierarchy.ps, finest, &hierarchy.rhs, &mut x, &cfg)
                .map_err(|e| anyhow!(e).context("running V-cycles"))?;
        }
        x
    };
    let ax = hierarchy.a[finest].mul(&v);
    let mut r = hierarchy.rhs.clone();
    for (ri, axi) in r.iter_mut().zip(&ax) {
        *ri -= axi;
    }
    let rs = restrict_residuals(&hierarchy.ps, &r)
        .map_err(|e| anyhow!(e).context("restricting the residual"))?;
    let direct;
    let spec = match variant {
        CoarseVariant::Direct => {
            direct = CoarseDirect::new(&hierarchy.a[0])
                .map_err(|e| anyhow!(e).context("factorizing the coarsest matrix"))?;
            CoarseSpec::Direct(&direct)
        }
        CoarseVariant::FixedCg => CoarseSpec::FixedCg(args.fixed_cg_k),
        CoarseVariant::DiagBound => CoarseSpec::DiagBound {
            ratio_coef: ratio_coef.unwrap(),
        },
        CoarseVariant::Adaptive => CoarseSpec::Adaptive {
            theta: args.theta,
            lambda_min_lb: lambda_min_lb.unwrap(),
            max_iter: args.max_iter,
        },
    };
    let ds: Vec<&[f64]> = hierarchy.d.iter().map(|d| d.as_slice()).collect();
    let breakdown: TermBreakdown = compute_breakdown_from(&hierarchy.a[0], &ds, &rs, &spec)
        .map_err(|e| anyhow!(e).context("evaluating the estimator terms"))?;
    let fine_sum = breakdown
        .fine_sum(FineTermKind::Diag)
        .map_err(|e| CliError::Run(anyhow!(e)))?;
    let output = EstimateOutput {
        variant: variant.tag().to_string(),
        num_levels: hierarchy.num_levels(),
        vcycles: args.vcycles,
        fine_terms_diag: breakdown.fine_terms_diag.clone(),
        fine_sum,
        coarse_term: breakdown.coarse_term,
        estimate_raw: (fine_sum + breakdown.coarse_term).max(0.0).sqrt(),
        adaptive_iters: breakdown.adaptive_iters,
        mu_sq: breakdown.mu_sq,
        zeta_sq: breakdown.zeta_sq,
        adaptive_hit_max_iter: breakdown.adaptive_hit_max_iter,
    };
    let text = serde_json::to_string_pretty(&output)
        .map_err(|e| CliError::Run(anyhow!("serialize output: {e}")))?;
    match &args.out {
        Some(path) => {
            fs::write(path, format!("{text}\n")).map_err(|e| CliError::Run(anyhow!(e)))?
        }
        None => println!("{text}"),
    }
    Ok(())
}

fn solve(args: SolveArgs) -> Result<(), CliError> {
    if args.levels == 0 {
        return Err(usage("--levels must be at least 1"));
    }
    let rhs = if args.manufactured {
        RhsSpec::Manufactured
    } else {
        RhsSpec::ConstantOne
    };
    let problem = build_problem(args.dim, args.cells0, args.levels + 1, rhs, args.quad_order)
        .map_err(|e| anyhow!(e).context("building problem"))?;
    let u_ref = reference_solution(
        &problem.ops,
        &problem.prolongations,
        &problem.rhs,
        ReferenceMode::Auto,
    )
    .map_err(|e| anyhow!(e).context("reference solve"))?;
    let trace = solve_multigrid_monitored(
        &problem.ops,
        &problem.prolongations,
        &problem.rhs,
        &u_ref,
        args.mg_tol,
        args.max_cycles,
        &VcycleConfig::default(),
    )
    .map_err(|e| anyhow!(e).context("multigrid solve"))?;
    let mut text = String::from("vcycle,rel_energy_error,rel_residual\n");
    for (i, (e, r)) in trace
        .rel_energy_errors
        .iter()
        .zip(&trace.rel_residuals)
        .enumerate()
    {
        text.push_str(&format!("{},{e:.16e},{r:.16e}\n", i + 1));
    }
    match &args.out {
        Some(path) => fs::write(path, text).map_err(|e| CliError::Run(anyhow!(e)))?,
        None => print!("{text}"),
    }
    Ok(())
}
