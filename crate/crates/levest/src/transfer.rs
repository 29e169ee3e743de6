//! Intergrid transfer between consecutive structured levels.
//!
//! Every fine node either coincides with a coarse node or is the midpoint
//! of a coarse mesh edge (both splits refine each edge dyadically), so P1
//! interpolation has entries 1 (coincident) or 1/2 (edge midpoint).
//! Boundary endpoints carry value zero and are dropped.

use crate::la::SparseMatrix;
use crate::mesh::{MeshHierarchy, MeshLevel};
use crate::{Error, Result};

/// Prolongation P from coarse free nodes to fine free nodes (fine rows).
pub fn build_prolongation(coarse: &MeshLevel, fine: &MeshLevel) -> Result<SparseMatrix> {
    if coarse.dim != fine.dim {
        return Err(Error::InvalidParameter("prolongation across dimensions".into()));
    }
    let cg = coarse
        .grid
        .as_ref()
        .ok_or_else(|| Error::InvalidParameter("coarse level has no grid structure".into()))?;
    let fg = fine
        .grid
        .as_ref()
        .ok_or_else(|| Error::InvalidParameter("fine level has no grid structure".into()))?;
    if fg.n != 2 * cg.n {
        return Err(Error::InvalidParameter(format!(
            "fine level has {} cells per axis, expected {}",
            fg.n,
            2 * cg.n
        )));
    }
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::with_capacity(fine.n_free);
    for m in fine.free_nodes() {
        let g = fg.node_grid[m];
        let mut entries: Vec<(usize, f64)> = Vec::with_capacity(2);
        let lo = [g[0] as usize / 2, g[1] as usize / 2, g[2] as usize / 2];
        let hi = [
            (g[0] as usize).div_ceil(2),
            (g[1] as usize).div_ceil(2),
            (g[2] as usize).div_ceil(2),
        ];
        if lo == hi {
            let c = cg.node_id(lo[0], lo[1], lo[2]) as usize;
            if coarse.is_free(c) {
                entries.push((c, 1.0));
            }
        } else {
            // Midpoint of the coarse edge lo-hi; both splits contain every
            // edge between componentwise-comparable lattice neighbors.
            for c in [lo, hi] {
                let cid = cg.node_id(c[0], c[1], c[2]) as usize;
                if coarse.is_free(cid) {
                    entries.push((cid, 0.5));
                }
            }
        }
        rows.push(entries);
    }
    Ok(SparseMatrix::from_rows(fine.n_free, coarse.n_free, rows))
}

/// Prolongations for all consecutive level pairs; `ps[j]` maps level j to
/// level j+1.
pub fn build_prolongations(hierarchy: &MeshHierarchy) -> Result<Vec<SparseMatrix>> {
    let mut ps = Vec::with_capacity(hierarchy.num_levels().saturating_sub(1));
    for j in 1..hierarchy.num_levels() {
        ps.push(build_prolongation(&hierarchy.levels[j - 1], &hierarchy.levels[j])?);
    }
    Ok(ps)
}

/// Restricts a finest-level residual down every level: returns
/// [r_0, ..., r_J] with r_j = P_j^T r_{j+1} and r_J the input.
pub fn restrict_residuals(ps: &[SparseMatrix], r_fine: &[f64]) -> Result<Vec<Vec<f64>>> {
    let levels = ps.len() + 1;
    let mut out: Vec<Vec<f64>> = vec![Vec::new(); levels];
    if let Some(p) = ps.last() {
        if r_fine.len() != p.rows() {
            return Err(Error::DimensionMismatch {
                what: "finest residual length",
                expected: p.rows(),
                got: r_fine.len(),
            });
        }
    }
    out[levels - 1] = r_fine.to_vec();
    for j in (0..ps.len()).rev() {
        out[j] = ps[j].mul_transpose(&out[j + 1]);
    }
    Ok(out)
}
