//! Model problem with a known smooth solution, plus the bundle type that
//! packages a mesh hierarchy with its assembled operators and transfers.
//!
//! The built-in right-hand sides drive the experiment pipelines: a constant
//! load for quick structural checks and a Gaussian-bump solution with
//! homogeneous Dirichlet data for convergence studies, where the exact
//! gradient is available in closed form.

use crate::assembly::{assemble_load, assemble_operators, ElemGeom, LevelOperators};
use crate::la::SparseMatrix;
use crate::mesh::{build_hierarchy, MeshHierarchy, MeshLevel};
use crate::par;
use crate::quad::SimplexQuadrature;
use crate::transfer::build_prolongations;
use crate::{Error, Result};

/// Sharpness of the Gaussian factor in the manufactured solution.
const BUMP: f64 = 100.0;

fn poly_factor(dim: usize, x: [f64; 3]) -> f64 {
    let mut p = 1.0;
    for xi in x.iter().take(dim) {
        p *= xi * (xi - 1.0);
    }
    p
}

fn bump_factor(dim: usize, x: [f64; 3]) -> f64 {
    let mut rho_sq = 0.0;
    for xi in x.iter().take(dim) {
        rho_sq += (xi - 0.5) * (xi - 0.5);
    }
    (-BUMP * rho_sq).exp()
}

/// Manufactured solution: a Gaussian bump centred in the unit cube, damped
/// by `x_i (x_i - 1)` factors so it vanishes on the whole boundary.
pub fn manufactured_u(dim: usize, x: [f64; 3]) -> f64 {
    poly_factor(dim, x) * bump_factor(dim, x)
}

/// Gradient of [`manufactured_u`]; trailing components beyond `dim` are zero.
pub fn manufactured_grad_u(dim: usize, x: [f64; 3]) -> [f64; 3] {
    let p = poly_factor(dim, x);
    let g = bump_factor(dim, x);
    let mut grad = [0.0; 3];
    for i in 0..dim {
        let mut others = 1.0;
        for (k, xk) in x.iter().enumerate().take(dim) {
            if k != i {
                others *= xk * (xk - 1.0);
            }
        }
        grad[i] = g * ((2.0 * x[i] - 1.0) * others - 2.0 * BUMP * (x[i] - 0.5) * p);
    }
    grad
}

/// Load `f = -laplacian(u)` for [`manufactured_u`], in closed form.
pub fn manufactured_f(dim: usize, x: [f64; 3]) -> f64 {
    let p = poly_factor(dim, x);
    let g = bump_factor(dim, x);
    let mut rho_sq = 0.0;
    for xi in x.iter().take(dim) {
        rho_sq += (xi - 0.5) * (xi - 0.5);
    }
    let mut lap = p * (4.0 * BUMP * BUMP * rho_sq - 2.0 * BUMP * dim as f64);
    for i in 0..dim {
        let mut others = 1.0;
        for (k, xk) in x.iter().enumerate().take(dim) {
            if k != i {
                others *= xk * (xk - 1.0);
            }
        }
        let c = x[i] - 0.5;
        lap += others * (2.0 - 8.0 * BUMP * c * c);
    }
    -(g * lap)
}

/// Right-hand side selector for [`build_problem`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RhsSpec {
    /// `f = 1`; handy for structural tests where the load is elementwise exact.
    ConstantOne,
    /// The closed-form load of the Gaussian-bump solution.
    Manufactured,
}

impl RhsSpec {
    /// Evaluate the chosen load at a point.
    pub fn eval(self, dim: usize, x: [f64; 3]) -> f64 {
        match self {
            RhsSpec::ConstantOne => 1.0,
            RhsSpec::Manufactured => manufactured_f(dim, x),
        }
    }
}

/// A hierarchy together with everything the solver and estimator need:
/// per-level operator bundles, inter-level prolongations, and the load
/// vector assembled on the finest level.
pub struct Problem {
    pub hierarchy: MeshHierarchy,
    pub ops: Vec<LevelOperators>,
    /// `prolongations[j]` maps free values on level `j` to level `j + 1`.
    pub prolongations: Vec<SparseMatrix>,
    /// Load vector on the finest level (free nodes only).
    pub rhs: Vec<f64>,
    pub rhs_spec: RhsSpec,
}

impl Problem {
    /// Number of mesh levels (coarsest included).
    pub fn num_levels(&self) -> usize {
        self.hierarchy.num_levels()
    }

    /// Finest mesh level.
    pub fn finest(&self) -> &MeshLevel {
        &self.hierarchy.levels[self.hierarchy.finest()]
    }
}

/// Build the hierarchy, assemble operators on every level, build the
/// prolongation chain, and assemble the finest-level load.
pub fn build_problem(
    dim: usize,
    cells0: usize,
    num_levels: usize,
    rhs: RhsSpec,
    quad_order: usize,
) -> Result<Problem> {
    let hierarchy = build_hierarchy(dim, cells0, num_levels)?;
    let mut ops = Vec::with_capacity(hierarchy.num_levels());
    for level in &hierarchy.levels {
        ops.push(assemble_operators(level)?);
    }
    let prolongations = build_prolongations(&hierarchy)?;
    let finest = &hierarchy.levels[hierarchy.finest()];
    let rhs_vec = assemble_load(finest, |x| rhs.eval(dim, x), quad_order)?;
    Ok(Problem {
        hierarchy,
        ops,
        prolongations,
        rhs: rhs_vec,
        rhs_spec: rhs,
    })
}

/// Energy-seminorm distance between a P1 coefficient vector `v` (free nodes)
/// and an exact gradient field, integrated by quadrature:
/// `(sum_K int_K |grad_exact - grad v|^2)^{1/2}`.
///
/// Boundary nodes of `v` are taken as zero, matching the homogeneous
/// Dirichlet spaces used throughout.
pub fn h1_seminorm_error<G>(
    level: &MeshLevel,
    v: &[f64],
    grad_exact: G,
    quad_order: usize,
) -> Result<f64>
where
    G: Fn([f64; 3]) -> [f64; 3] + Sync,
{
    if v.len() != level.n_free {
        return Err(Error::DimensionMismatch {
            what: "coefficient vector vs free nodes",
            expected: level.n_free,
            got: v.len(),
        });
    }
    if quad_order == 0 {
        return Err(Error::InvalidParameter(
            "quadrature order must be at least 1".into(),
        ));
    }
    let dim = level.dim;
    let nv = dim + 1;
    // Validate all elements up front so the parallel loop below cannot fail.
    let mut geoms = Vec::with_capacity(level.n_elems());
    for e in 0..level.n_elems() {
        geoms.push(ElemGeom::new(level, e)?);
    }
    let rule = SimplexQuadrature::new(dim, quad_order);
    let total = par::sum_indexed(level.n_elems(), |e| {
        let geom = &geoms[e];
        let elem = level.element(e);
        let mut grad_v = [0.0; 3];
        for (loc, &node) in elem.iter().take(nv).enumerate() {
            let coeff = if (node as usize) < level.n_free {
                v[node as usize]
            } else {
                0.0
            };
            for d in 0..dim {
                grad_v[d] += coeff * geom.grads[loc][d];
            }
        }
        let mut acc = 0.0;
        for (lambda, w) in rule.nodes() {
            let mut x = [0.0; 3];
            for d in 0..dim {
                x[d] = lambda[nv - 1] * geom.verts[0][d];
                for loc in 1..nv {
                    x[d] += lambda[loc - 1] * geom.verts[loc][d];
                }
            }
            let ge = grad_exact(x);
            let mut diff_sq = 0.0;
            for d in 0..dim {
                let diff = ge[d] - grad_v[d];
                diff_sq += diff * diff;
            }
            acc += w * diff_sq;
        }
        geom.vol * acc
    });
    Ok(total.max(0.0).sqrt())
}
