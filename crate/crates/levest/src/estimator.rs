//! A posteriori estimates of the algebraic and total error for P1
//! discretizations, built from level residuals of a mesh hierarchy.
//!
//! The algebraic error of an iterate v is bounded by combining, per level,
//! a dual norm of the restricted residual (computed exactly through the
//! scaled mass matrix, bounded through its diagonal surrogate, or bounded
//! through element-local solves) with a coarsest-level term r_0^T A_0^{-1}
//! r_0. The coarsest term admits four evaluations: a direct solve, a fixed
//! number of CG steps (a lower bound), a diagonal bound scaled by the
//! domain-to-mesh ratio, and an adaptive CG run whose Gauss-Radau bound is
//! pushed below theta times the rest of the estimate. Total-error families
//! add a classical residual estimator of the discretization error.

use crate::assembly::{local_scaled_mass_elem, ElemGeom, LevelOperators};
use crate::la::{dot, solve_dense_small, BandCholesky, SparseMatrix};
use crate::mesh::{triangle_area, MeshLevel};
use crate::quad::SimplexQuadrature;
use crate::solver::{pcg_with_error_bounds, DIRECT_CUTOFF};
use crate::{par, Error, Result};
use serde::{Deserialize, Serialize};

/// Which per-level dual-norm realization feeds a composite estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FineTermKind {
    Diag,
    Exact,
    Local,
}

/// r^T D^{-1} r for a positive diagonal D.
pub fn fine_term_diag(r: &[f64], d: &[f64]) -> Result<f64> {
    if r.len() != d.len() {
        return Err(Error::DimensionMismatch {
            what: "fine_term_diag vectors",
            expected: d.len(),
            got: r.len(),
        });
    }
    for (i, &di) in d.iter().enumerate() {
        if !(di > 0.0) {
            return Err(Error::ZeroDiagonal(i));
        }
    }
    Ok(par::sum_indexed(r.len(), |i| r[i] * r[i] / d[i]))
}

/// r^T (M^S)^{-1} r through a CG solve of the well-conditioned scaled mass
/// system (relative residual 1e-12).
pub fn fine_term_exact(r: &[f64], ms: &SparseMatrix) -> Result<f64> {
    let (c, _) = crate::solver::cg(ms, r, 1e-12, 20_000)?;
    Ok(dot(r, &c))
}

/// Element-local upper bound on `fine_term_exact`: the residual is split
/// nodally by 1/multiplicity and each element contributes the quadratic
/// form of its own inverted local scaled mass block.
pub fn fine_term_local(level: &MeshLevel, multiplicity: &[u32], r: &[f64]) -> Result<f64> {
    if r.len() != level.n_free || multiplicity.len() != level.n_free {
        return Err(Error::DimensionMismatch {
            what: "fine_term_local vectors",
            expected: level.n_free,
            got: r.len().min(multiplicity.len()),
        });
    }
    // Validate once so the parallel sum cannot fail.
    for e in 0..level.n_elems() {
        local_scaled_mass_elem(level, e)?;
    }
    let term = par::sum_indexed(level.n_elems(), |e| {
        let (nodes, mat, k) = local_scaled_mass_elem(level, e).expect("validated above");
        if k == 0 {
            return 0.0;
        }
        let mut a = [0.0f64; 16];
        let mut rhs = [0.0f64; 4];
        for i in 0..k {
            let m = nodes[i] as usize;
            rhs[i] = r[m] / multiplicity[m] as f64;
            for j in 0..k {
                a[i * k + j] = mat[i * 4 + j];
            }
        }
        let mut sol = rhs;
        solve_dense_small(&mut a[..k * k], &mut sol[..k]).expect("SPD local block");
        dot(&rhs[..k], &sol[..k])
    });
    Ok(term)
}

/// Factored coarsest-level solver for repeated exact coarse terms.
pub struct CoarseDirect {
    chol: BandCholesky,
}

impl CoarseDirect {
    pub fn new(a0: &SparseMatrix) -> Result<Self> {
        if a0.rows() > DIRECT_CUTOFF {
            return Err(Error::AboveDirectCutoff {
                n: a0.rows(),
                cutoff: DIRECT_CUTOFF,
            });
        }
        Ok(CoarseDirect {
            chol: BandCholesky::new(a0)?,
        })
    }

    /// r_0^T A_0^{-1} r_0.
    pub fn eval(&self, r0: &[f64]) -> f64 {
        self.chol.quadratic_form(r0)
    }
}

/// r_0^T A_0^{-1} r_0 by a direct banded factorization.
pub fn coarse_term_direct(a0: &SparseMatrix, r0: &[f64]) -> Result<f64> {
    Ok(CoarseDirect::new(a0)?.eval(r0))
}

/// r_0^T c after k plain CG steps from a zero guess: a monotone lower
/// bound on the direct value.
pub fn coarse_term_fixed_cg(a0: &SparseMatrix, r0: &[f64], k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidParameter("fixed CG step count must be >= 1".into()));
    }
    let n = a0.rows();
    let mut x = vec![0.0; n];
    let mut r = r0.to_vec();
    let mut rr = dot(&r, &r);
    if rr == 0.0 {
        return Ok(0.0);
    }
    let mut p = r.clone();
    for _ in 0..k {
        let ap = a0.mul(&p);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::NotSpd(format!("p^T A p = {pap:e} in fixed CG")));
        }
        let alpha = rr / pap;
        crate::la::axpy(alpha, &p, &mut x);
        crate::la::axpy(-alpha, &ap, &mut r);
        let rr_new = dot(&r, &r);
        if rr_new <= rr * 1e-30 {
            break;
        }
        let beta = rr_new / rr;
        rr = rr_new;
        for (pi, ri) in p.iter_mut().zip(&r) {
            *pi = ri + beta * *pi;
        }
    }
    Ok(dot(r0, &x))
}

/// Diagonal coarse bound ratio_coef * r_0^T D_0^{-1} r_0. The default
/// coefficient is the squared domain-to-smallest-element ratio of the
/// coarse mesh (`mesh::domain_ratio`).
pub fn coarse_term_diag(r0: &[f64], d0: &[f64], ratio_coef: f64) -> Result<f64> {
    if !(ratio_coef > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "ratio_coef must be positive, got {ratio_coef}"
        )));
    }
    Ok(ratio_coef * fine_term_diag(r0, d0)?)
}

/// Result of the adaptive coarse-term evaluation.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AdaptiveCoarse {
    /// mu^2 + zeta^2: a guaranteed upper bound on r_0^T A_0^{-1} r_0.
    pub value: f64,
    pub iters: usize,
    pub mu_sq: f64,
    pub zeta_sq: f64,
    /// Criterion not reached within max_iter; the value is still a valid
    /// upper bound.
    pub hit_max_iter: bool,
}

/// Runs bounded CG on the coarsest system until the Gauss-Radau remainder
/// satisfies zeta_i^2 <= theta * (fine_sum + mu_i^2), and returns
/// mu_i^2 + zeta_i^2. `fine_sum` is the sum of the diagonal fine terms of
/// the higher levels; `lambda_min_lb` must be a positive lower bound on
/// the smallest eigenvalue of A_0.
pub fn coarse_term_adaptive(
    a0: &SparseMatrix,
    r0: &[f64],
    fine_sum: f64,
    theta: f64,
    lambda_min_lb: f64,
    max_iter: usize,
) -> Result<AdaptiveCoarse> {
    if !(theta > 0.0) {
        return Err(Error::InvalidParameter(format!("theta must be positive, got {theta}")));
    }
    if !(fine_sum >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "fine_sum must be nonnegative, got {fine_sum}"
        )));
    }
    let trace = pcg_with_error_bounds(a0, r0, None, lambda_min_lb, max_iter, false, |s| {
        s.zeta2 <= theta * (fine_sum + s.mu2)
    })?;
    match trace.steps.last() {
        None => Ok(AdaptiveCoarse {
            value: 0.0,
            iters: 0,
            mu_sq: 0.0,
            zeta_sq: 0.0,
            hit_max_iter: false,
        }),
        Some(s) => Ok(AdaptiveCoarse {
            value: s.mu2 + s.zeta2,
            iters: s.iter,
            mu_sq: s.mu2,
            zeta_sq: s.zeta2,
            hit_max_iter: trace.hit_max_iter,
        }),
    }
}

/// Tag recording how the coarse term of a breakdown was produced.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum CoarseVariantTag {
    Direct,
    FixedCg(usize),
    DiagBound,
    Adaptive,
}

/// Per-level terms entering the composite estimates, all squared
/// (energy-norm-squared) quantities.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TermBreakdown {
    /// r_j^T D_j^{-1} r_j for j = 1..J.
    pub fine_terms_diag: Vec<f64>,
    pub fine_terms_exact: Option<Vec<f64>>,
    pub fine_terms_local: Option<Vec<f64>>,
    pub coarse_term: f64,
    pub coarse_variant: CoarseVariantTag,
    pub adaptive_iters: Option<usize>,
    pub mu_sq: Option<f64>,
    pub zeta_sq: Option<f64>,
    /// Whether the adaptive coarse solve stopped at its iteration cap
    /// rather than at its criterion.
    pub adaptive_hit_max_iter: Option<bool>,
}

impl TermBreakdown {
    pub fn fine_terms(&self, kind: FineTermKind) -> Result<&[f64]> {
        match kind {
            FineTermKind::Diag => Ok(&self.fine_terms_diag),
            FineTermKind::Exact => self
                .fine_terms_exact
                .as_deref()
                .ok_or_else(|| Error::InvalidParameter("exact fine terms not computed".into())),
            FineTermKind::Local => self
                .fine_terms_local
                .as_deref()
                .ok_or_else(|| Error::InvalidParameter("local fine terms not computed".into())),
        }
    }

    pub fn fine_sum(&self, kind: FineTermKind) -> Result<f64> {
        Ok(self.fine_terms(kind)?.iter().sum())
    }
}

/// How to evaluate the coarse term of a breakdown.
pub enum CoarseSpec<'a> {
    Direct(&'a CoarseDirect),
    FixedCg(usize),
    DiagBound { ratio_coef: f64 },
    Adaptive {
        theta: f64,
        lambda_min_lb: f64,
        max_iter: usize,
    },
}

/// Assembles the diagonal fine terms and the chosen coarse term from the
/// level residuals rs[0..=J] of an iterate.
pub fn compute_breakdown(
    ops: &[LevelOperators],
    rs: &[Vec<f64>],
    coarse: &CoarseSpec,
) -> Result<TermBreakdown> {
    let ds: Vec<&[f64]> = ops.iter().map(|o| o.d.as_slice()).collect();
    compute_breakdown_from(&ops[0].a, &ds, rs, coarse)
}

/// [`compute_breakdown`] on raw algebraic data: the coarsest matrix and the
/// per-level diagonals are all the fine/diagonal/adaptive terms need, which
/// lets externally supplied hierarchies (no mass matrices) reuse the same
/// path.
pub fn compute_breakdown_from(
    a0: &SparseMatrix,
    ds: &[&[f64]],
    rs: &[Vec<f64>],
    coarse: &CoarseSpec,
) -> Result<TermBreakdown> {
    if rs.len() != ds.len() {
        return Err(Error::DimensionMismatch {
            what: "residual levels",
            expected: ds.len(),
            got: rs.len(),
        });
    }
    if ds.is_empty() {
        return Err(Error::InvalidParameter(
            "breakdown needs at least one level".into(),
        ));
    }
    let mut fine_terms_diag = Vec::with_capacity(rs.len().saturating_sub(1));
    for j in 1..rs.len() {
        fine_terms_diag.push(fine_term_diag(&rs[j], ds[j])?);
    }
    let fine_sum: f64 = fine_terms_diag.iter().sum();
    let (coarse_term, tag, adaptive) = match coarse {
        CoarseSpec::Direct(solver) => (solver.eval(&rs[0]), CoarseVariantTag::Direct, None),
        CoarseSpec::FixedCg(k) => (
            coarse_term_fixed_cg(a0, &rs[0], *k)?,
            CoarseVariantTag::FixedCg(*k),
            None,
        ),
        CoarseSpec::DiagBound { ratio_coef } => (
            coarse_term_diag(&rs[0], ds[0], *ratio_coef)?,
            CoarseVariantTag::DiagBound,
            None,
        ),
        CoarseSpec::Adaptive {
            theta,
            lambda_min_lb,
            max_iter,
        } => {
            let a = coarse_term_adaptive(
                a0,
                &rs[0],
                fine_sum,
                *theta,
                *lambda_min_lb,
                *max_iter,
            )?;
            (a.value, CoarseVariantTag::Adaptive, Some(a))
        }
    };
    Ok(TermBreakdown {
        fine_terms_diag,
        fine_terms_exact: None,
        fine_terms_local: None,
        coarse_term,
        coarse_variant: tag,
        adaptive_iters: adaptive.map(|a| a.iters),
        mu_sq: adaptive.map(|a| a.mu_sq),
        zeta_sq: adaptive.map(|a| a.zeta_sq),
        adaptive_hit_max_iter: adaptive.map(|a| a.hit_max_iter),
    })
}

/// Classical residual-based estimate of the discretization error of an
/// iterate, with its data-oscillation part.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ClassicalEstimator {
    pub eta_rhs: f64,
    pub eta_jump: f64,
    pub osc: f64,
    pub eta_total: f64,
}

/// Computes eta_rhs^2 = sum_K h_K^2 f_K^2 |K| (f_K the elementwise mean),
/// eta_jump^2 = 1/2 sum_K h_K sum_{E interior} ||[grad v]||_E^2, and
/// osc^2 = sum_K h_K^2 ||f - f_K||_K^2 by quadrature of the given order.
pub fn classical_estimator<F>(
    level: &MeshLevel,
    v: &[f64],
    f: F,
    quad_order: usize,
) -> Result<ClassicalEstimator>
where
    F: Fn([f64; 3]) -> f64 + Sync,
{
    if v.len() != level.n_free {
        return Err(Error::DimensionMismatch {
            what: "classical_estimator coefficients",
            expected: level.n_free,
            got: v.len(),
        });
    }
    if quad_order == 0 {
        return Err(Error::InvalidParameter("quadrature order must be >= 1".into()));
    }
    let rule = SimplexQuadrature::new(level.dim, quad_order);
    let ne = level.n_elems();
    for e in 0..ne {
        ElemGeom::new(level, e)?;
    }

    // Per-element constant gradients of v (boundary nodes are zero).
    let grads: Vec<[f64; 3]> = par::map_indexed(ne, |e| {
        let geom = ElemGeom::new(level, e).expect("validated above");
        let mut g = [0.0; 3];
        for (i, &nid) in level.element(e).iter().enumerate() {
            let m = nid as usize;
            if level.is_free(m) {
                for ax in 0..3 {
                    g[ax] += v[m] * geom.grads[i][ax];
                }
            }
        }
        g
    });

    let eta_rhs2 = par::sum_indexed(ne, |e| {
        let geom = ElemGeom::new(level, e).expect("validated above");
        let mean = element_mean(level, &rule, e, &f);
        let h = level.elem_diameter[e];
        h * h * mean * mean * geom.vol
    });
    let osc2 = par::sum_indexed(ne, |e| {
        let geom = ElemGeom::new(level, e).expect("validated above");
        let mean = element_mean(level, &rule, e, &f);
        let int_f2 = integrate_elem(level, &rule, e, |x| {
            let fx = f(x);
            fx * fx
        }) * geom.vol;
        let h = level.elem_diameter[e];
        (h * h * (int_f2 - mean * mean * geom.vol)).max(0.0)
    });
    let eta_jump2 = par::sum_indexed(level.interior_faces.len(), |i| {
        let face = level.interior_faces[i];
        let (gl, gr) = (grads[face.left as usize], grads[face.right as usize]);
        let jump2 = (0..3).map(|ax| (gl[ax] - gr[ax]).powi(2)).sum::<f64>();
        let meas = if level.dim == 2 {
            let a = level.nodes[face.nodes[0] as usize];
            let b = level.nodes[face.nodes[1] as usize];
            ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
        } else {
            triangle_area(
                level.nodes[face.nodes[0] as usize],
                level.nodes[face.nodes[1] as usize],
                level.nodes[face.nodes[2] as usize],
            )
        };
        let h_avg = 0.5
            * (level.elem_diameter[face.left as usize] + level.elem_diameter[face.right as usize]);
        h_avg * jump2 * meas
    });
    Ok(ClassicalEstimator {
        eta_rhs: eta_rhs2.sqrt(),
        eta_jump: eta_jump2.sqrt(),
        osc: osc2.sqrt(),
        eta_total: (eta_rhs2 + eta_jump2 + osc2).sqrt(),
    })
}

/// Mean of f over element e (quadrature weights sum to one).
fn element_mean<F>(level: &MeshLevel, rule: &SimplexQuadrature, e: usize, f: &F) -> f64
where
    F: Fn([f64; 3]) -> f64,
{
    integrate_elem(level, rule, e, f)
}

/// sum_q w_q f(x_q) on element e; multiply by the volume for the integral.
fn integrate_elem<F>(level: &MeshLevel, rule: &SimplexQuadrature, e: usize, f: F) -> f64
where
    F: Fn([f64; 3]) -> f64,
{
    let ids = level.element(e);
    let mut acc = 0.0;
    for (lambda, w) in rule.nodes() {
        let mut x = [0.0; 3];
        for (i, &nid) in ids.iter().enumerate() {
            let p = level.nodes[nid as usize];
            for ax in 0..3 {
                x[ax] += lambda[i] * p[ax];
            }
        }
        acc += w * f(x);
    }
    acc
}

/// Configuration slots for composite estimates. The calibrated prototype
/// factor `c_numexp` scales the algebraic families; the named constants
/// feed the total-error families. A slot set to `None` makes families
/// needing it fail with the missing names.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimatorConstants {
    pub c_numexp: Option<f64>,
    /// Adaptive-criterion parameter.
    pub theta: f64,
    /// Coefficient of the diagonal coarse bound; `None` selects the
    /// mesh-derived default.
    pub ratio_coef: Option<f64>,
    pub c_cls: Option<f64>,
    pub c_s: Option<f64>,
    pub c_b_bar: Option<f64>,
    pub c_i2lvl: Option<f64>,
    pub c_iv0: Option<f64>,
    pub c_siv: Option<f64>,
    pub c_ivj4: Option<f64>,
    pub c_hs: Option<f64>,
    pub c_theta: Option<f64>,
}

impl Default for EstimatorConstants {
    fn default() -> Self {
        EstimatorConstants {
            c_numexp: Some(1.0),
            theta: 0.1,
            ratio_coef: None,
            c_cls: Some(1.0),
            c_s: Some(1.0),
            c_b_bar: Some(1.0),
            c_i2lvl: Some(1.0),
            c_iv0: Some(1.0),
            c_siv: Some(1.0),
            c_ivj4: Some(1.0),
            c_hs: Some(1.0),
            c_theta: Some(1.0),
        }
    }
}

fn require(
    missing: &mut Vec<&'static str>,
    slot: Option<f64>,
    name: &'static str,
) -> f64 {
    match slot {
        Some(v) => v,
        None => {
            missing.push(name);
            f64::NAN
        }
    }
}

/// Algebraic-error estimate families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AlgebraicForm {
    /// C * (sum of fine terms + coarse term)^{1/2}.
    SqrtSum,
    /// C * (sum of per-level square roots + coarse^{1/2}).
    SumOfNorms,
}

pub fn algebraic_estimate(
    form: AlgebraicForm,
    kind: FineTermKind,
    breakdown: &TermBreakdown,
    constants: &EstimatorConstants,
) -> Result<f64> {
    let mut missing = Vec::new();
    let c = require(&mut missing, constants.c_numexp, "c_numexp");
    if !missing.is_empty() {
        return Err(Error::MissingConstants(missing));
    }
    let fine = breakdown.fine_terms(kind)?;
    let value = match form {
        AlgebraicForm::SqrtSum => {
            c * (fine.iter().sum::<f64>() + breakdown.coarse_term).sqrt()
        }
        AlgebraicForm::SumOfNorms => {
            c * (fine.iter().map(|t| t.sqrt()).sum::<f64>() + breakdown.coarse_term.sqrt())
        }
    };
    if !value.is_finite() {
        return Err(Error::NonFinite("algebraic estimate"));
    }
    Ok(value)
}

/// Total-error (discretization + algebraic) estimate families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TotalFamily {
    /// C_cls eta + C_i2lvl sum_j fine_j^{1/2} + C_iv0 coarse^{1/2}.
    BjrSum,
    /// sqrt(2) (C_cls^2 eta^2 + C_siv (sum fine + coarse))^{1/2}.
    BjrSqrt,
    /// sqrt(2) (C_cls^2 eta^2 + C_ivj4^2 C_s (sum fine + coarse))^{1/2}.
    RudeHuber,
    /// C_s^{1/2} C_b_bar^{1/2} (C_hs eta^2 + sum fine_diag + coarse)^{1/2};
    /// always uses the diagonal fine terms.
    Harbrecht,
    /// C_s^{1/2} (C_theta eta^2 + sum fine + coarse)^{1/2}.
    StableSplit,
}

pub fn total_estimate(
    family: TotalFamily,
    eta: &ClassicalEstimator,
    kind: FineTermKind,
    breakdown: &TermBreakdown,
    constants: &EstimatorConstants,
) -> Result<f64> {
    let eta2 = eta.eta_total * eta.eta_total;
    let coarse = breakdown.coarse_term;
    let mut missing = Vec::new();
    let value = match family {
        TotalFamily::BjrSum => {
            let c_cls = require(&mut missing, constants.c_cls, "c_cls");
            let c_i2lvl = require(&mut missing, constants.c_i2lvl, "c_i2lvl");
            let c_iv0 = require(&mut missing, constants.c_iv0, "c_iv0");
            if !missing.is_empty() {
                return Err(Error::MissingConstants(missing));
            }
            let fine = breakdown.fine_terms(kind)?;
            c_cls * eta.eta_total
                + c_i2lvl * fine.iter().map(|t| t.sqrt()).sum::<f64>()
                + c_iv0 * coarse.sqrt()
        }
        TotalFamily::BjrSqrt => {
            let c_cls = require(&mut missing, constants.c_cls, "c_cls");
            let c_siv = require(&mut missing, constants.c_siv, "c_siv");
            if !missing.is_empty() {
                return Err(Error::MissingConstants(missing));
            }
            let sum = breakdown.fine_sum(kind)? + coarse;
            std::f64::consts::SQRT_2 * (c_cls * c_cls * eta2 + c_siv * sum).sqrt()
        }
        TotalFamily::RudeHuber => {
            let c_cls = require(&mut missing, constants.c_cls, "c_cls");
            let c_ivj4 = require(&mut missing, constants.c_ivj4, "c_ivj4");
            let c_s = require(&mut missing, constants.c_s, "c_s");
            if !missing.is_empty() {
                return Err(Error::MissingConstants(missing));
            }
            let sum = breakdown.fine_sum(kind)? + coarse;
            std::f64::consts::SQRT_2 * (c_cls * c_cls * eta2 + c_ivj4 * c_ivj4 * c_s * sum).sqrt()
        }
        TotalFamily::Harbrecht => {
            let c_s = require(&mut missing, constants.c_s, "c_s");
            let c_b_bar = require(&mut missing, constants.c_b_bar, "c_b_bar");
            let c_hs = require(&mut missing, constants.c_hs, "c_hs");
            if !missing.is_empty() {
                return Err(Error::MissingConstants(missing));
            }
            let sum = breakdown.fine_sum(FineTermKind::Diag)? + coarse;
            (c_s * c_b_bar).sqrt() * (c_hs * eta2 + sum).sqrt()
        }
        TotalFamily::StableSplit => {
            let c_s = require(&mut missing, constants.c_s, "c_s");
            let c_theta = require(&mut missing, constants.c_theta, "c_theta");
            if !missing.is_empty() {
                return Err(Error::MissingConstants(missing));
            }
            let sum = breakdown.fine_sum(kind)? + coarse;
            c_s.sqrt() * (c_theta * eta2 + sum).sqrt()
        }
    };
    if !value.is_finite() {
        return Err(Error::NonFinite("total estimate"));
    }
    Ok(value)
}

/// Energy norm of the algebraic error, ((u_ref - v)^T A (u_ref - v))^{1/2}.
pub fn energy_error(a: &SparseMatrix, u_ref: &[f64], v: &[f64]) -> Result<f64> {
    if u_ref.len() != a.rows() || v.len() != a.rows() {
        return Err(Error::DimensionMismatch {
            what: "energy_error vectors",
            expected: a.rows(),
            got: u_ref.len().min(v.len()),
        });
    }
    let e: Vec<f64> = u_ref.iter().zip(v).map(|(u, w)| u - w).collect();
    Ok(a.quadratic(&e).max(0.0).sqrt())
}

/// estimate / error; a zero error excludes the snapshot.
pub fn efficiency_index(estimate: f64, error: f64) -> Result<f64> {
    if !(error > 0.0) {
        return Err(Error::ZeroError);
    }
    Ok(estimate / error)
}

/// Smallest factor making every index at least one: the maximum over
/// snapshots of error / (raw squared estimate)^{1/2}. Snapshots with
/// nonpositive error are excluded.
pub fn calibrate_constant(samples: &[(f64, f64)]) -> Result<f64> {
    let mut c: f64 = 0.0;
    let mut any = false;
    for &(raw_sq, err) in samples {
        if err <= 0.0 {
            continue;
        }
        if !(raw_sq > 0.0) {
            return Err(Error::InvalidParameter(
                "raw estimate is zero at a snapshot with positive error".into(),
            ));
        }
        c = c.max(err / raw_sq.sqrt());
        any = true;
    }
    if !any {
        return Err(Error::InvalidParameter(
            "calibration needs at least one snapshot with positive error".into(),
        ));
    }
    Ok(c)
}
