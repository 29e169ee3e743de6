//! Experiment drivers: build a hierarchy, run the multigrid solve with
//! per-cycle snapshots, evaluate the estimator variants on every snapshot,
//! calibrate the numerical constant, and emit CSV/JSON reports.
//!
//! Two sweeps are provided. The levels sweep fixes the coarsest mesh and
//! varies the number of levels, reporting the square-root-of-sums and
//! sum-of-norms algebraic estimates with a directly solved coarse term.
//! The coarse-size sweep fixes two levels and varies the coarsest mesh,
//! comparing the four coarse-term evaluations (direct, fixed-step CG,
//! diagonal bound, adaptive CG with error bounds).
//!
//! All estimates here use the diagonal fine terms: that is the computable
//! form the composite bounds are stated with, and it keeps the variant
//! comparison a pure coarse-term comparison.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::estimator::{
    algebraic_estimate, calibrate_constant, efficiency_index, energy_error, AlgebraicForm,
    CoarseDirect, CoarseSpec, EstimatorConstants, FineTermKind, TermBreakdown,
};
use crate::mesh::domain_ratio;
use crate::problem::{build_problem, Problem, RhsSpec};
use crate::solver::{
    lambda_min_lower_bound, reference_solution, solve_multigrid_monitored, ReferenceMode,
    VcycleConfig,
};
use crate::transfer::restrict_residuals;
use crate::{Error, Result};

/// Solver and quadrature parameters shared by both experiment drivers.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct SolveParams {
    pub quad_order: usize,
    pub pre_sweeps: usize,
    pub post_sweeps: usize,
    /// Relative residual tolerance of the coarsest-level CG correction.
    pub coarse_tol: f64,
    pub coarse_max_iter: usize,
    /// Relative energy error at which the monitored solve stops.
    pub mg_tol: f64,
    pub max_cycles: usize,
}

impl Default for SolveParams {
    fn default() -> Self {
        SolveParams {
            quad_order: 4,
            pre_sweeps: 3,
            post_sweeps: 3,
            coarse_tol: 0.1,
            coarse_max_iter: 5000,
            mg_tol: 1e-11,
            max_cycles: 50,
        }
    }
}

impl SolveParams {
    pub fn validate(&self) -> Result<()> {
        if self.quad_order == 0
            || self.pre_sweeps == 0
            || self.post_sweeps == 0
            || self.coarse_max_iter == 0
            || self.max_cycles == 0
        {
            return Err(Error::InvalidParameter(
                "solver parameters must be positive".into(),
            ));
        }
        if !(self.coarse_tol > 0.0) || !(self.mg_tol > 0.0) {
            return Err(Error::InvalidParameter(
                "solver tolerances must be positive".into(),
            ));
        }
        Ok(())
    }

    fn vcycle_config(&self) -> VcycleConfig {
        VcycleConfig {
            pre_sweeps: self.pre_sweeps,
            post_sweeps: self.post_sweeps,
            coarse_tol: self.coarse_tol,
            coarse_max_iter: self.coarse_max_iter,
        }
    }
}

/// Estimates reported by the levels sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LevelsVariant {
    /// Square root of the summed terms, coarse term solved directly.
    I1SqrtSum,
    /// Sum of the term square roots, coarse term solved directly.
    I2SumOfNorms,
}

impl LevelsVariant {
    pub fn tag(self) -> &'static str {
        match self {
            LevelsVariant::I1SqrtSum => "i1_sqrt_sum",
            LevelsVariant::I2SumOfNorms => "i2_sum_of_norms",
        }
    }
}

impl FromStr for LevelsVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "i1_sqrt_sum" | "i1" => Ok(LevelsVariant::I1SqrtSum),
            "i2_sum_of_norms" | "i2" => Ok(LevelsVariant::I2SumOfNorms),
            other => Err(Error::InvalidParameter(format!(
                "unknown levels variant '{other}' (expected i1_sqrt_sum or i2_sum_of_norms)"
            ))),
        }
    }
}

impl fmt::Display for LevelsVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

fn check_mesh_params(dim: usize, cells0: usize) -> Result<()> {
    if dim != 2 && dim != 3 {
        return Err(Error::InvalidParameter(format!(
            "dim must be 2 or 3, got {dim}"
        )));
    }
    if cells0 == 0 {
        return Err(Error::InvalidParameter("cells0 must be positive".into()));
    }
    Ok(())
}

/// Coarse-term evaluations compared by the coarse-size sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoarseVariant {
    Direct,
    FixedCg,
    DiagBound,
    Adaptive,
}

impl CoarseVariant {
    pub fn tag(self) -> &'static str {
        match self {
            CoarseVariant::Direct => "direct",
            CoarseVariant::FixedCg => "fixed_cg",
            CoarseVariant::DiagBound => "diag_bound",
            CoarseVariant::Adaptive => "adaptive",
        }
    }

    pub const ALL: [CoarseVariant; 4] = [
        CoarseVariant::Direct,
        CoarseVariant::FixedCg,
        CoarseVariant::DiagBound,
        CoarseVariant::Adaptive,
    ];
}

impl FromStr for CoarseVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "direct" => Ok(CoarseVariant::Direct),
            "fixed_cg" => Ok(CoarseVariant::FixedCg),
            "diag_bound" => Ok(CoarseVariant::DiagBound),
            "adaptive" => Ok(CoarseVariant::Adaptive),
            other => Err(Error::InvalidParameter(format!(
                "unknown coarse variant '{other}' \
                 (expected direct, fixed_cg, diag_bound or adaptive)"
            ))),
        }
    }
}

impl fmt::Display for CoarseVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

/// Configuration of the fixed-coarse, varying-depth sweep.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct LevelsExperimentConfig {
    /// Identifier used in report rows and file names.
    pub id: Option<String>,
    pub dim: usize,
    /// Cells per edge of the coarsest mesh.
    pub cells0: usize,
    /// Finest-level indices to run, each producing its own hierarchy.
    pub levels: Vec<usize>,
    /// Use the Gaussian-bump load; otherwise f = 1.
    pub manufactured: bool,
    /// Reject configurations whose finest level exceeds this many free nodes.
    pub max_fine_dofs: usize,
    pub variants: Vec<LevelsVariant>,
    pub solve: SolveParams,
    /// Reserved for randomized-input runs; echoed into reports.
    pub seed: Option<u64>,
}

impl Default for LevelsExperimentConfig {
    fn default() -> Self {
        LevelsExperimentConfig {
            id: None,
            dim: 3,
            cells0: 6,
            levels: vec![1, 2, 3],
            manufactured: true,
            max_fine_dofs: 150_000,
            variants: vec![LevelsVariant::I1SqrtSum, LevelsVariant::I2SumOfNorms],
            solve: SolveParams::default(),
            seed: None,
        }
    }
}

impl LevelsExperimentConfig {
    pub fn experiment_id(&self) -> String {
        self.id
            .clone()
            .unwrap_or_else(|| format!("levels_{}d_c{}", self.dim, self.cells0))
    }

    pub fn validate(&self) -> Result<()> {
        self.solve.validate()?;
        check_mesh_params(self.dim, self.cells0)?;
        if self.levels.is_empty() {
            return Err(Error::InvalidParameter(
                "levels list must not be empty".into(),
            ));
        }
        if self.levels.iter().any(|&j| j == 0) {
            return Err(Error::InvalidParameter(
                "levels entries are finest-level indices and must be at least 1".into(),
            ));
        }
        for &j in &self.levels {
            let n = self
                .cells0
                .checked_shl(j as u32)
                .ok_or_else(|| Error::InvalidParameter(format!("level {j} overflows")))?;
            let dofs = (n - 1).pow(self.dim as u32);
            if dofs > self.max_fine_dofs {
                return Err(Error::InvalidParameter(format!(
                    "level {j} has {dofs} free nodes, above the cap of {}",
                    self.max_fine_dofs
                )));
            }
        }
        Ok(())
    }
}

/// Configuration of the two-level, varying-coarse-size sweep.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct CoarseSizeExperimentConfig {
    pub id: Option<String>,
    pub dim: usize,
    /// Coarsest-mesh sizes to sweep; each runs a two-level hierarchy.
    pub cells0_list: Vec<usize>,
    pub manufactured: bool,
    pub max_fine_dofs: usize,
    pub variants: Vec<CoarseVariant>,
    /// Stopping parameter of the adaptive coarse solve.
    pub theta: f64,
    /// Iteration count of the fixed-step CG coarse solve.
    pub fixed_cg_k: usize,
    pub adaptive_max_iter: usize,
    pub solve: SolveParams,
    pub seed: Option<u64>,
}

impl Default for CoarseSizeExperimentConfig {
    fn default() -> Self {
        CoarseSizeExperimentConfig {
            id: None,
            dim: 3,
            cells0_list: vec![6, 12, 24],
            manufactured: true,
            max_fine_dofs: 150_000,
            variants: CoarseVariant::ALL.to_vec(),
            theta: 0.1,
            fixed_cg_k: 4,
            adaptive_max_iter: 5000,
            solve: SolveParams::default(),
            seed: None,
        }
    }
}

impl CoarseSizeExperimentConfig {
    pub fn experiment_id(&self) -> String {
        self.id
            .clone()
            .unwrap_or_else(|| format!("coarse_{}d", self.dim))
    }

    pub fn validate(&self) -> Result<()> {
        self.solve.validate()?;
        if self.cells0_list.is_empty() {
            return Err(Error::InvalidParameter(
                "cells0 list must not be empty".into(),
            ));
        }
        for &c in &self.cells0_list {
            check_mesh_params(self.dim, c)?;
        }
        if !(self.theta > 0.0) {
            return Err(Error::InvalidParameter("theta must be positive".into()));
        }
        if self.fixed_cg_k == 0 || self.adaptive_max_iter == 0 {
            return Err(Error::InvalidParameter(
                "iteration counts must be positive".into(),
            ));
        }
        for &c in &self.cells0_list {
            let dofs = (2 * c - 1).pow(self.dim as u32);
            if dofs > self.max_fine_dofs {
                return Err(Error::InvalidParameter(format!(
                    "cells0 {c} gives {dofs} fine free nodes, above the cap of {}",
                    self.max_fine_dofs
                )));
            }
        }
        Ok(())
    }
}

/// One snapshot-and-variant observation.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ReportRow {
    pub experiment: String,
    pub dim: usize,
    pub cells0: usize,
    /// Finest level index of the hierarchy this row belongs to.
    pub levels: usize,
    pub coarse_dofs: usize,
    pub fine_dofs: usize,
    /// Squared diameter of the domain over the squared smallest coarse
    /// element diameter.
    pub ratio: f64,
    /// One-based V-cycle index of the snapshot.
    pub vcycle: usize,
    pub energy_error: f64,
    pub variant: String,
    /// Calibrated estimate of the algebraic energy error.
    pub estimate: f64,
    pub efficiency_index: f64,
    /// CG steps taken by the adaptive coarse solve; zero for the others.
    pub adaptive_iters: usize,
}

/// Provenance of the calibrated constant.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CalibrationRecord {
    pub c_numexp: f64,
    /// Which rows the constant was fitted on.
    pub corpus: String,
    /// Number of positive-error snapshots in the corpus.
    pub snapshots: usize,
}

/// Full outcome of one experiment run.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EstimateReport {
    pub experiment: String,
    pub calibration: CalibrationRecord,
    pub rows: Vec<ReportRow>,
    /// Operational remarks (skipped variants, flagged solves).
    pub notes: Vec<String>,
}

struct Snapshot {
    vcycle: usize,
    energy_error: f64,
    breakdowns: Vec<(String, TermBreakdown)>,
    /// Raw squared estimate of the calibration variant.
    raw_direct_sq: f64,
}

struct HierarchyRun {
    cells0: usize,
    levels: usize,
    coarse_dofs: usize,
    fine_dofs: usize,
    ratio: f64,
    snapshots: Vec<Snapshot>,
}

fn rhs_spec(manufactured: bool) -> RhsSpec {
    if manufactured {
        RhsSpec::Manufactured
    } else {
        RhsSpec::ConstantOne
    }
}

fn annotate(e: Error, id: &str, what: &str) -> Error {
    Error::InvalidParameter(format!("experiment {id}, {what}: {e}"))
}

/// Solve one hierarchy and hand each positive-error snapshot (with its
/// restricted residuals) to `eval` to produce the per-variant breakdowns.
fn run_hierarchy<F>(
    id: &str,
    problem: &Problem,
    solve: &SolveParams,
    notes: &mut Vec<String>,
    mut eval: F,
) -> Result<Vec<Snapshot>>
where
    F: FnMut(&[Vec<f64>], &mut Vec<String>) -> Result<(Vec<(String, TermBreakdown)>, f64)>,
{
    let finest = problem.ops.len() - 1;
    let a = &problem.ops[finest].a;
    let what = format!("levels {finest}");
    let u_ref = reference_solution(
        &problem.ops,
        &problem.prolongations,
        &problem.rhs,
        ReferenceMode::Auto,
    )
    .map_err(|e| annotate(e, id, &what))?;
    let trace = solve_multigrid_monitored(
        &problem.ops,
        &problem.prolongations,
        &problem.rhs,
        &u_ref,
        solve.mg_tol,
        solve.max_cycles,
        &solve.vcycle_config(),
    )
    .map_err(|e| annotate(e, id, &what))?;
    let mut snapshots = Vec::new();
    for (i, v) in trace.snapshots.iter().enumerate() {
        let err = energy_error(a, &u_ref, v).map_err(|e| annotate(e, id, &what))?;
        if err <= 0.0 {
            // Converged past the reference accuracy; efficiency is undefined.
            continue;
        }
        let ax = a.mul(v);
        let mut r = problem.rhs.clone();
        for (ri, axi) in r.iter_mut().zip(&ax) {
            *ri -= axi;
        }
        let rs = restrict_residuals(&problem.prolongations, &r)
            .map_err(|e| annotate(e, id, &what))?;
        let (breakdowns, raw_direct_sq) = eval(&rs, notes)?;
        snapshots.push(Snapshot {
            vcycle: i + 1,
            energy_error: err,
            breakdowns,
            raw_direct_sq,
        });
    }
    Ok(snapshots)
}

fn calibrate_runs(runs: &[HierarchyRun], corpus: String) -> Result<CalibrationRecord> {
    let samples: Vec<(f64, f64)> = runs
        .iter()
        .flat_map(|run| {
            run.snapshots
                .iter()
                .map(|s| (s.raw_direct_sq, s.energy_error))
        })
        .collect();
    let c_numexp = calibrate_constant(&samples)?;
    Ok(CalibrationRecord {
        c_numexp,
        corpus,
        snapshots: samples.len(),
    })
}

fn rows_from_runs(
    id: &str,
    dim: usize,
    runs: &[HierarchyRun],
    constants: &EstimatorConstants,
) -> Result<Vec<ReportRow>> {
    let mut rows = Vec::new();
    for run in runs {
        for snap in &run.snapshots {
            for (tag, breakdown) in &snap.breakdowns {
                let form = if tag == LevelsVariant::I2SumOfNorms.tag() {
                    AlgebraicForm::SumOfNorms
                } else {
                    AlgebraicForm::SqrtSum
                };
                let estimate =
                    algebraic_estimate(form, FineTermKind::Diag, breakdown, constants)?;
                rows.push(ReportRow {
                    experiment: id.to_string(),
                    dim,
                    cells0: run.cells0,
                    levels: run.levels,
                    coarse_dofs: run.coarse_dofs,
                    fine_dofs: run.fine_dofs,
                    ratio: run.ratio,
                    vcycle: snap.vcycle,
                    energy_error: snap.energy_error,
                    variant: tag.clone(),
                    estimate,
                    efficiency_index: efficiency_index(estimate, snap.energy_error)?,
                    adaptive_iters: breakdown.adaptive_iters.unwrap_or(0),
                });
            }
        }
    }
    Ok(rows)
}

/// Fix the coarsest mesh, sweep the number of levels, and report the two
/// algebraic estimates (both with a directly solved coarse term) on every
/// V-cycle snapshot, with the constant calibrated on the square-root form.
pub fn run_levels_experiment(config: &LevelsExperimentConfig) -> Result<EstimateReport> {
    config.validate()?;
    let id = config.experiment_id();
    let mut notes = Vec::new();
    let mut runs = Vec::new();
    for &j in &config.levels {
        let problem = build_problem(
            config.dim,
            config.cells0,
            j + 1,
            rhs_spec(config.manufactured),
            config.solve.quad_order,
        )
        .map_err(|e| annotate(e, &id, &format!("levels {j}")))?;
        let direct = CoarseDirect::new(&problem.ops[0].a)
            .map_err(|e| annotate(e, &id, &format!("levels {j}")))?;
        let snapshots = run_hierarchy(&id, &problem, &config.solve, &mut notes, |rs, _| {
            let breakdown =
                crate::estimator::compute_breakdown(&problem.ops, rs, &CoarseSpec::Direct(&direct))?;
            let raw_sq = breakdown.fine_sum(FineTermKind::Diag)? + breakdown.coarse_term;
            // Both reported variants share this breakdown; the form applied
            // at reporting time differs.
            let breakdowns = config
                .variants
                .iter()
                .map(|v| (v.tag().to_string(), breakdown.clone()))
                .collect();
            Ok((breakdowns, raw_sq))
        })?;
        runs.push(HierarchyRun {
            cells0: config.cells0,
            levels: j,
            coarse_dofs: problem.hierarchy.levels[0].n_free,
            fine_dofs: problem.finest().n_free,
            ratio: domain_ratio(&problem.hierarchy),
            snapshots,
        });
    }
    let calibration = calibrate_runs(&runs, format!("{id}:i1_sqrt_sum"))?;
    let constants = EstimatorConstants {
        c_numexp: Some(calibration.c_numexp),
        ..EstimatorConstants::default()
    };
    let rows = rows_from_runs(&id, config.dim, &runs, &constants)?;
    Ok(EstimateReport {
        experiment: id,
        calibration,
        rows,
        notes,
    })
}

/// Fix two levels, sweep the coarsest-mesh size, and compare the coarse-term
/// evaluations on every V-cycle snapshot. The constant is calibrated on the
/// direct variant; the diagonal and adaptive variants dominate it termwise,
/// so their calibrated indices stay at or above one.
pub fn run_coarse_size_experiment(
    config: &CoarseSizeExperimentConfig,
) -> Result<EstimateReport> {
    config.validate()?;
    let id = config.experiment_id();
    let mut notes = Vec::new();
    let mut runs = Vec::new();
    for &cells0 in &config.cells0_list {
        let what = format!("cells0 {cells0}");
        let problem = build_problem(
            config.dim,
            cells0,
            2,
            rhs_spec(config.manufactured),
            config.solve.quad_order,
        )
        .map_err(|e| annotate(e, &id, &what))?;
        let a0 = &problem.ops[0].a;
        let direct = match CoarseDirect::new(a0) {
            Ok(d) => Some(d),
            Err(Error::AboveDirectCutoff { n, cutoff }) => {
                notes.push(format!(
                    "{id}: direct coarse solve skipped at cells0 {cells0} \
                     ({n} free nodes above the {cutoff} factorization cutoff)"
                ));
                None
            }
            Err(e) => return Err(annotate(e, &id, &what)),
        };
        let ratio_coef = domain_ratio(&problem.hierarchy);
        let lambda_lb =
            lambda_min_lower_bound(&problem.hierarchy).map_err(|e| annotate(e, &id, &what))?;
        let snapshots = run_hierarchy(&id, &problem, &config.solve, &mut notes, |rs, notes| {
            let mut breakdowns = Vec::new();
            let mut raw_direct_sq = f64::NAN;
            let push = |variant: CoarseVariant,
                            breakdowns: &mut Vec<(String, TermBreakdown)>,
                            raw_direct_sq: &mut f64,
                            notes: &mut Vec<String>|
             -> Result<()> {
                let spec = match variant {
                    CoarseVariant::Direct => match &direct {
                        Some(d) => CoarseSpec::Direct(d),
                        None => return Ok(()),
                    },
                    CoarseVariant::FixedCg => CoarseSpec::FixedCg(config.fixed_cg_k),
                    CoarseVariant::DiagBound => CoarseSpec::DiagBound { ratio_coef },
                    CoarseVariant::Adaptive => CoarseSpec::Adaptive {
                        theta: config.theta,
                        lambda_min_lb: lambda_lb,
                        max_iter: config.adaptive_max_iter,
                    },
                };
                let breakdown = crate::estimator::compute_breakdown(&problem.ops, rs, &spec)?;
                if variant == CoarseVariant::Direct {
                    *raw_direct_sq =
                        breakdown.fine_sum(FineTermKind::Diag)? + breakdown.coarse_term;
                }
                if variant == CoarseVariant::Adaptive
                    && breakdown.adaptive_hit_max_iter == Some(true)
                {
                    notes.push(format!(
                        "{id}: adaptive coarse solve hit max_iter at cells0 {cells0}"
                    ));
                }
                breakdowns.push((variant.tag().to_string(), breakdown));
                Ok(())
            };
            // The direct evaluation anchors calibration even when it is not
            // among the reported variants.
            push(CoarseVariant::Direct, &mut breakdowns, &mut raw_direct_sq, notes)?;
            for &variant in &config.variants {
                if variant != CoarseVariant::Direct {
                    push(variant, &mut breakdowns, &mut raw_direct_sq, notes)?;
                }
            }
            if !config.variants.contains(&CoarseVariant::Direct) {
                breakdowns.retain(|(tag, _)| tag != CoarseVariant::Direct.tag());
            }
            if raw_direct_sq.is_nan() {
                // Direct unavailable: fall back to the adaptive bound, which
                // still dominates the true coarse term.
                let fallback = crate::estimator::compute_breakdown(
                    &problem.ops,
                    rs,
                    &CoarseSpec::Adaptive {
                        theta: config.theta,
                        lambda_min_lb: lambda_lb,
                        max_iter: config.adaptive_max_iter,
                    },
                )?;
                raw_direct_sq =
                    fallback.fine_sum(FineTermKind::Diag)? + fallback.coarse_term;
            }
            Ok((breakdowns, raw_direct_sq))
        })?;
        runs.push(HierarchyRun {
            cells0,
            levels: 1,
            coarse_dofs: problem.hierarchy.levels[0].n_free,
            fine_dofs: problem.finest().n_free,
            ratio: ratio_coef,
            snapshots,
        });
    }
    let calibration = calibrate_runs(&runs, format!("{id}:direct"))?;
    let constants = EstimatorConstants {
        c_numexp: Some(calibration.c_numexp),
        ..EstimatorConstants::default()
    };
    let rows = rows_from_runs(&id, config.dim, &runs, &constants)?;
    Ok(EstimateReport {
        experiment: id,
        calibration,
        rows,
        notes,
    })
}

/// Output formats of [`emit_report`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    /// Long-format CSV plus a JSON calibration sidecar.
    Csv,
    /// Single self-contained JSON file.
    Json,
}

const CSV_HEADER: [&str; 13] = [
    "experiment",
    "dim",
    "cells0",
    "levels",
    "coarse_dofs",
    "fine_dofs",
    "ratio",
    "vcycle",
    "energy_error",
    "variant",
    "estimate",
    "efficiency_index",
    "adaptive_iters",
];

fn float_field(v: f64) -> String {
    format!("{v:.16e}")
}

/// Write the report under `dir` and return the created file paths.
/// CSV output is one row per snapshot and variant in run order, with floats
/// in scientific notation at full double precision, so identical runs
/// produce byte-identical files.
pub fn emit_report(
    report: &EstimateReport,
    format: ReportFormat,
    dir: &Path,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    match format {
        ReportFormat::Json => {
            let path = dir.join(format!("{}.json", report.experiment));
            let mut buf = serde_json::to_vec_pretty(report)
                .map_err(|e| Error::InvalidParameter(format!("serialize report: {e}")))?;
            buf.push(b'\n');
            fs::write(&path, buf)?;
            Ok(vec![path])
        }
        ReportFormat::Csv => {
            let csv_path = dir.join(format!("{}.csv", report.experiment));
            let mut writer = csv::Writer::from_path(&csv_path).map_err(csv_error)?;
            writer
                .write_record(CSV_HEADER)
                .map_err(csv_error)?;
            for row in &report.rows {
                writer
                    .write_record([
                        row.experiment.as_str(),
                        &row.dim.to_string(),
                        &row.cells0.to_string(),
                        &row.levels.to_string(),
                        &row.coarse_dofs.to_string(),
                        &row.fine_dofs.to_string(),
                        &float_field(row.ratio),
                        &row.vcycle.to_string(),
                        &float_field(row.energy_error),
                        &row.variant,
                        &float_field(row.estimate),
                        &float_field(row.efficiency_index),
                        &row.adaptive_iters.to_string(),
                    ])
                    .map_err(csv_error)?;
            }
            writer.flush()?;
            drop(writer);
            let sidecar = dir.join(format!("{}.calibration.json", report.experiment));
            let mut buf = serde_json::to_vec_pretty(&report.calibration)
                .map_err(|e| Error::InvalidParameter(format!("serialize calibration: {e}")))?;
            buf.push(b'\n');
            fs::write(&sidecar, buf)?;
            Ok(vec![csv_path, sidecar])
        }
    }
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::InvalidParameter(format!("csv: {other:?}")),
    }
}
