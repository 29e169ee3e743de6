//! P1 finite element assembly on mesh levels with homogeneous Dirichlet
//! conditions: only interior (free) nodes carry degrees of freedom.
//!
//! Matrices are assembled row-by-row by gathering over the elements
//! adjacent to each free node, in ascending element order. Rows are
//! independent, so the gather parallelizes without changing any floating
//! point accumulation order.

use crate::la::SparseMatrix;
use crate::mesh::{simplex_volume, MeshLevel};
use crate::quad::SimplexQuadrature;
use crate::{par, Error, Result};

/// Default quadrature order for load vectors.
pub const DEFAULT_QUAD_ORDER: usize = 4;

/// Per-element P1 geometry: volume and barycentric gradients.
pub struct ElemGeom {
    pub verts: [[f64; 3]; 4],
    pub vol: f64,
    pub grads: [[f64; 3]; 4],
}

impl ElemGeom {
    pub fn new(level: &MeshLevel, e: usize) -> Result<Self> {
        let verts = level.elem_vertices(e);
        let d = level.dim;
        let vol = simplex_volume(d, &verts);
        if !(vol > 0.0) {
            return Err(Error::DegenerateElement {
                elem: e,
                what: "non-positive volume",
            });
        }
        let mut grads = [[0.0; 3]; 4];
        if d == 2 {
            let u = [verts[1][0] - verts[0][0], verts[1][1] - verts[0][1]];
            let v = [verts[2][0] - verts[0][0], verts[2][1] - verts[0][1]];
            let det = u[0] * v[1] - u[1] * v[0];
            grads[1] = [v[1] / det, -v[0] / det, 0.0];
            grads[2] = [-u[1] / det, u[0] / det, 0.0];
        } else {
            let u = sub3(verts[1], verts[0]);
            let v = sub3(verts[2], verts[0]);
            let w = sub3(verts[3], verts[0]);
            let det = dot3(u, cross(v, w));
            grads[1] = scale(cross(v, w), 1.0 / det);
            grads[2] = scale(cross(w, u), 1.0 / det);
            grads[3] = scale(cross(u, v), 1.0 / det);
        }
        for ax in 0..3 {
            grads[0][ax] = -(grads[1][ax] + grads[2][ax] + grads[3][ax]);
        }
        Ok(ElemGeom { verts, vol, grads })
    }
}

fn sub3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn dot3(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn scale(a: [f64; 3], s: f64) -> [f64; 3] {
    [a[0] * s, a[1] * s, a[2] * s]
}

/// Local mass entry: vol * (1 + delta_ij) / ((d+1)(d+2)).
pub(crate) fn local_mass_entry(dim: usize, vol: f64, i: usize, j: usize) -> f64 {
    let scale = ((dim + 1) * (dim + 2)) as f64;
    vol * if i == j { 2.0 } else { 1.0 } / scale
}

/// Assembles a free-node matrix from a symmetric local form.
fn assemble_free_matrix<F>(level: &MeshLevel, local: F) -> Result<SparseMatrix>
where
    F: Fn(&ElemGeom, f64, usize, usize) -> f64 + Sync,
{
    let (offsets, items) = level.node_to_elements();
    let n = level.n_free;
    // Row gather is fallible only through degenerate geometry; validate all
    // elements once up front so the parallel closure stays infallible.
    for e in 0..level.n_elems() {
        ElemGeom::new(level, e)?;
    }
    let rows = par::map_indexed(n, |m| {
        let mut entries: Vec<(usize, f64)> = Vec::with_capacity(16);
        for &e in &items[offsets[m]..offsets[m + 1]] {
            let e = e as usize;
            let geom = ElemGeom::new(level, e).expect("validated above");
            let h = level.elem_diameter[e];
            let ids = level.element(e);
            let m_loc = ids.iter().position(|&v| v as usize == m).expect("adjacent");
            for (j_loc, &nid) in ids.iter().enumerate() {
                let col = nid as usize;
                if level.is_free(col) {
                    entries.push((col, local(&geom, h, m_loc, j_loc)));
                }
            }
        }
        entries
    });
    Ok(SparseMatrix::from_rows(n, n, rows))
}

/// Stiffness matrix A on the free nodes.
pub fn assemble_stiffness(level: &MeshLevel) -> Result<SparseMatrix> {
    assemble_free_matrix(level, |g, _h, i, j| g.vol * dot3(g.grads[i], g.grads[j]))
}

/// Mass matrix M on the free nodes.
pub fn assemble_mass(level: &MeshLevel) -> Result<SparseMatrix> {
    let d = level.dim;
    assemble_free_matrix(level, move |g, _h, i, j| local_mass_entry(d, g.vol, i, j))
}

/// Scaled mass matrix: elementwise h_K^{-2} times the mass matrix.
pub fn assemble_scaled_mass(level: &MeshLevel) -> Result<SparseMatrix> {
    let d = level.dim;
    assemble_free_matrix(level, move |g, h, i, j| {
        local_mass_entry(d, g.vol, i, j) / (h * h)
    })
}

/// Load vector b_m = integral of f * lambda_m, quadrature of the given
/// order on each element. Elements are processed in fixed-size chunks that
/// are merged in order, so the accumulation sequence per entry matches the
/// sequential element loop exactly.
pub fn assemble_load<F>(level: &MeshLevel, f: F, quad_order: usize) -> Result<Vec<f64>>
where
    F: Fn([f64; 3]) -> f64 + Sync,
{
    if quad_order == 0 {
        return Err(Error::InvalidParameter("quadrature order must be >= 1".into()));
    }
    let rule = SimplexQuadrature::new(level.dim, quad_order);
    for e in 0..level.n_elems() {
        ElemGeom::new(level, e)?;
    }
    const CHUNK: usize = 2048;
    let ne = level.n_elems();
    let n_chunks = ne.div_ceil(CHUNK);
    let k = level.dim + 1;
    let chunks = par::map_indexed(n_chunks, |c| {
        let lo = c * CHUNK;
        let hi = (lo + CHUNK).min(ne);
        let mut out: Vec<(u32, f64)> = Vec::with_capacity((hi - lo) * k);
        for e in lo..hi {
            let geom = ElemGeom::new(level, e).expect("validated above");
            let ids = level.element(e);
            let mut acc = [0.0f64; 4];
            for (lambda, w) in rule.nodes() {
                let mut x = [0.0; 3];
                for (i, &nid) in ids.iter().enumerate() {
                    let p = level.nodes[nid as usize];
                    for ax in 0..3 {
                        x[ax] += lambda[i] * p[ax];
                    }
                }
                let fw = w * f(x);
                for i in 0..k {
                    acc[i] += fw * lambda[i];
                }
            }
            for (i, &nid) in ids.iter().enumerate() {
                if level.is_free(nid as usize) {
                    out.push((nid, geom.vol * acc[i]));
                }
            }
        }
        out
    });
    let mut b = vec![0.0; level.n_free];
    for chunk in chunks {
        for (nid, v) in chunk {
            b[nid as usize] += v;
        }
    }
    Ok(b)
}

/// Local scaled mass matrix of one element restricted to its free
/// vertices: the free node ids, the k x k matrix (row-major in a fixed
/// 4 x 4 buffer), and k.
pub fn local_scaled_mass_elem(level: &MeshLevel, e: usize) -> Result<([u32; 4], [f64; 16], usize)> {
    let geom = ElemGeom::new(level, e)?;
    let h = level.elem_diameter[e];
    let d = level.dim;
    let mut nodes = [0u32; 4];
    let mut local = [0usize; 4];
    let mut k = 0;
    for (i, &nid) in level.element(e).iter().enumerate() {
        if level.is_free(nid as usize) {
            nodes[k] = nid;
            local[k] = i;
            k += 1;
        }
    }
    let mut mat = [0.0f64; 16];
    for a in 0..k {
        for b in 0..k {
            mat[a * 4 + b] = local_mass_entry(d, geom.vol, local[a], local[b]) / (h * h);
        }
    }
    Ok((nodes, mat, k))
}

/// Materialized per-element scaled mass data.
pub struct LocalScaledMass {
    /// Free node ids per element (k valid entries).
    pub nodes: Vec<[u32; 4]>,
    /// Row-major k x k matrix in a 4 x 4 buffer per element.
    pub mats: Vec<[f64; 16]>,
    pub sizes: Vec<u8>,
}

/// Local scaled mass matrices of every element, restricted to free
/// vertices. Scatter-adding them reproduces `assemble_scaled_mass`.
pub fn local_scaled_mass(level: &MeshLevel) -> Result<LocalScaledMass> {
    let ne = level.n_elems();
    let mut out = LocalScaledMass {
        nodes: Vec::with_capacity(ne),
        mats: Vec::with_capacity(ne),
        sizes: Vec::with_capacity(ne),
    };
    for e in 0..ne {
        let (nodes, mat, k) = local_scaled_mass_elem(level, e)?;
        out.nodes.push(nodes);
        out.mats.push(mat);
        out.sizes.push(k as u8);
    }
    Ok(out)
}

/// The operators of one level used throughout the solver and estimator.
pub struct LevelOperators {
    pub a: SparseMatrix,
    pub m: SparseMatrix,
    pub ms: SparseMatrix,
    /// Diagonal of A.
    pub d: Vec<f64>,
    /// Elements adjacent to each free node.
    pub free_multiplicity: Vec<u32>,
}

pub fn assemble_operators(level: &MeshLevel) -> Result<LevelOperators> {
    let a = assemble_stiffness(level)?;
    let m = assemble_mass(level)?;
    let ms = assemble_scaled_mass(level)?;
    let d = a.diagonal();
    for (i, &di) in d.iter().enumerate() {
        if !(di > 0.0) {
            return Err(Error::ZeroDiagonal(i));
        }
    }
    let mult = level.node_multiplicity();
    let free_multiplicity = mult[..level.n_free].to_vec();
    Ok(LevelOperators {
        a,
        m,
        ms,
        d,
        free_multiplicity,
    })
}
