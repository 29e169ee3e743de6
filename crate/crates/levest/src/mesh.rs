//! Structured simplicial meshes on the unit square / unit cube and their
//! uniformly refined hierarchies.
//!
//! Squares are split into two triangles along the lower-left to upper-right
//! diagonal; cubes into six Kuhn tetrahedra sharing the main diagonal. Both
//! splits are closed under dyadic refinement, so regenerating the structured
//! grid at doubled resolution yields nested P1 spaces. Nodes are ordered
//! lexicographically by (z, y, x) grid index with interior (free) nodes
//! first.

use crate::{Error, Result};
use std::collections::HashMap;

/// Axis orders of the six Kuhn tetrahedra of a cube, in a fixed order.
const KUHN_PERMS: [[usize; 3]; 6] = [
    [0, 1, 2],
    [0, 2, 1],
    [1, 0, 2],
    [1, 2, 0],
    [2, 0, 1],
    [2, 1, 0],
];

/// Interior face shared by exactly two elements. In 2D the third node slot
/// is `u32::MAX`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InteriorFace {
    pub nodes: [u32; 3],
    pub left: u32,
    pub right: u32,
}

/// Structured-grid lookup data (absent for hand-built fixture levels).
#[derive(Debug, Clone)]
pub struct GridInfo {
    /// Cells per axis.
    pub n: usize,
    /// Grid coordinates (ix, iy, iz) of each node id.
    pub node_grid: Vec<[u16; 3]>,
    /// Node id at each lexicographic (z, y, x) grid position.
    grid_index: Vec<u32>,
}

impl GridInfo {
    pub fn node_id(&self, ix: usize, iy: usize, iz: usize) -> u32 {
        let m = self.n + 1;
        self.grid_index[(iz * m + iy) * m + ix]
    }
}

/// One mesh level: node coordinates, element connectivity, free-node
/// indexing and per-element geometry.
#[derive(Debug, Clone)]
pub struct MeshLevel {
    pub dim: usize,
    /// Node coordinates by id (free nodes first); z = 0 in 2D.
    pub nodes: Vec<[f64; 3]>,
    /// Flattened connectivity, dim+1 node ids per element.
    elements: Vec<u32>,
    pub n_free: usize,
    pub elem_diameter: Vec<f64>,
    /// Inscribed-ball diameter per element.
    pub elem_inradius: Vec<f64>,
    pub interior_faces: Vec<InteriorFace>,
    pub n_boundary_faces: usize,
    pub grid: Option<GridInfo>,
}

impl MeshLevel {
    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_elems(&self) -> usize {
        self.elements.len() / (self.dim + 1)
    }

    /// Node ids of element `e`.
    pub fn element(&self, e: usize) -> &[u32] {
        let k = self.dim + 1;
        &self.elements[e * k..(e + 1) * k]
    }

    pub fn free_nodes(&self) -> std::ops::Range<usize> {
        0..self.n_free
    }

    pub fn boundary_nodes(&self) -> std::ops::Range<usize> {
        self.n_free..self.nodes.len()
    }

    pub fn is_free(&self, node: usize) -> bool {
        node < self.n_free
    }

    pub fn elem_vertices(&self, e: usize) -> [[f64; 3]; 4] {
        let mut v = [[0.0; 3]; 4];
        for (k, &nid) in self.element(e).iter().enumerate() {
            v[k] = self.nodes[nid as usize];
        }
        v
    }

    /// Number of elements touching each node (all nodes).
    pub fn node_multiplicity(&self) -> Vec<u32> {
        let mut mult = vec![0u32; self.n_nodes()];
        for &nid in &self.elements {
            mult[nid as usize] += 1;
        }
        mult
    }

    /// Node-to-element adjacency: `items[offsets[m]..offsets[m+1]]` lists
    /// the elements containing node m, ascending.
    pub fn node_to_elements(&self) -> (Vec<usize>, Vec<u32>) {
        let k = self.dim + 1;
        let mut counts = vec![0usize; self.n_nodes()];
        for &nid in &self.elements {
            counts[nid as usize] += 1;
        }
        let mut offsets = vec![0usize; self.n_nodes() + 1];
        for m in 0..self.n_nodes() {
            offsets[m + 1] = offsets[m] + counts[m];
        }
        let mut items = vec![0u32; self.elements.len()];
        let mut cursor = offsets.clone();
        for e in 0..self.n_elems() {
            for &nid in &self.elements[e * k..(e + 1) * k] {
                items[cursor[nid as usize]] = e as u32;
                cursor[nid as usize] += 1;
            }
        }
        (offsets, items)
    }

    /// Builds a level from raw data (used for test fixtures and external
    /// meshes). Geometry and faces are derived; invariants are checked.
    pub fn from_raw(
        dim: usize,
        nodes: Vec<[f64; 3]>,
        elements: Vec<u32>,
        n_free: usize,
    ) -> Result<Self> {
        if !(2..=3).contains(&dim) {
            return Err(Error::InvalidParameter(format!("dim must be 2 or 3, got {dim}")));
        }
        if elements.len() % (dim + 1) != 0 {
            return Err(Error::InvalidParameter(
                "element list length is not a multiple of dim+1".into(),
            ));
        }
        let mut level = MeshLevel {
            dim,
            nodes,
            elements,
            n_free,
            elem_diameter: Vec::new(),
            elem_inradius: Vec::new(),
            interior_faces: Vec::new(),
            n_boundary_faces: 0,
            grid: None,
        };
        level.finalize()?;
        Ok(level)
    }

    fn finalize(&mut self) -> Result<()> {
        let ne = self.n_elems();
        self.elem_diameter = Vec::with_capacity(ne);
        self.elem_inradius = Vec::with_capacity(ne);
        for e in 0..ne {
            let ids = self.element(e);
            for a in 0..ids.len() {
                for b in (a + 1)..ids.len() {
                    if ids[a] == ids[b] {
                        return Err(Error::DegenerateElement {
                            elem: e,
                            what: "repeated vertex",
                        });
                    }
                }
            }
            let verts = self.elem_vertices(e);
            let (h, rho) = simplex_geometry(self.dim, &verts);
            if !(h > 0.0) || !(rho > 0.0) {
                return Err(Error::DegenerateElement {
                    elem: e,
                    what: "zero diameter or inradius",
                });
            }
            self.elem_diameter.push(h);
            self.elem_inradius.push(rho);
        }
        self.build_faces();
        Ok(())
    }

    fn build_faces(&mut self) {
        let d = self.dim;
        let mut seen: HashMap<[u32; 3], u32> = HashMap::new();
        let mut interior = Vec::new();
        let mut incidences = 0usize;
        for e in 0..self.n_elems() {
            let ids = self.element(e);
            for skip in 0..=d {
                let mut face = [u32::MAX; 3];
                let mut k = 0;
                for (i, &nid) in ids.iter().enumerate() {
                    if i != skip {
                        face[k] = nid;
                        k += 1;
                    }
                }
                face[..d].sort_unstable();
                incidences += 1;
                match seen.remove(&face) {
                    Some(first) => interior.push(InteriorFace {
                        nodes: face,
                        left: first,
                        right: e as u32,
                    }),
                    None => {
                        seen.insert(face, e as u32);
                    }
                }
            }
        }
        self.n_boundary_faces = incidences - 2 * interior.len();
        self.interior_faces = interior;
    }

    /// Builds the structured level with `n` cells per axis.
    pub fn structured(dim: usize, n: usize) -> Result<Self> {
        if !(2..=3).contains(&dim) {
            return Err(Error::InvalidParameter(format!("dim must be 2 or 3, got {dim}")));
        }
        let m = n + 1;
        let nz = if dim == 3 { m } else { 1 };
        let total = m * m * nz;
        let interior = |ix: usize, iy: usize, iz: usize| -> bool {
            let inside = |i: usize| i >= 1 && i <= n - 1;
            inside(ix) && inside(iy) && (dim == 2 || inside(iz))
        };
        let n_free = (n - 1).pow(dim as u32);

        let mut grid_index = vec![0u32; total];
        let mut nodes = vec![[0.0; 3]; total];
        let mut node_grid = vec![[0u16; 3]; total];
        let mut next_free = 0u32;
        let mut next_bdry = n_free as u32;
        for iz in 0..nz {
            for iy in 0..m {
                for ix in 0..m {
                    let id = if interior(ix, iy, iz) {
                        let id = next_free;
                        next_free += 1;
                        id
                    } else {
                        let id = next_bdry;
                        next_bdry += 1;
                        id
                    };
                    grid_index[(iz * m + iy) * m + ix] = id;
                    let h = 1.0 / n as f64;
                    nodes[id as usize] = [ix as f64 * h, iy as f64 * h, iz as f64 * h];
                    node_grid[id as usize] = [ix as u16, iy as u16, iz as u16];
                }
            }
        }
        let grid = GridInfo {
            n,
            node_grid,
            grid_index,
        };

        let mut elements = Vec::new();
        if dim == 2 {
            elements.reserve(2 * n * n * 3);
            for cy in 0..n {
                for cx in 0..n {
                    let v = |a: usize, b: usize| grid.node_id(cx + a, cy + b, 0);
                    // Both triangles contain the (0,0)-(1,1) cell diagonal.
                    elements.extend_from_slice(&[v(0, 0), v(1, 0), v(1, 1)]);
                    elements.extend_from_slice(&[v(0, 0), v(1, 1), v(0, 1)]);
                }
            }
        } else {
            elements.reserve(6 * n * n * n * 4);
            for cz in 0..n {
                for cy in 0..n {
                    for cx in 0..n {
                        for perm in &KUHN_PERMS {
                            let mut p = [cx, cy, cz];
                            elements.push(grid.node_id(p[0], p[1], p[2]));
                            for &axis in perm {
                                p[axis] += 1;
                                elements.push(grid.node_id(p[0], p[1], p[2]));
                            }
                        }
                    }
                }
            }
        }

        let mut level = MeshLevel {
            dim,
            nodes,
            elements,
            n_free,
            elem_diameter: Vec::new(),
            elem_inradius: Vec::new(),
            interior_faces: Vec::new(),
            n_boundary_faces: 0,
            grid: Some(grid),
        };
        level.finalize()?;
        Ok(level)
    }
}

/// (diameter, inscribed-ball diameter) of a d-simplex.
fn simplex_geometry(dim: usize, verts: &[[f64; 3]; 4]) -> (f64, f64) {
    let k = dim + 1;
    let mut h: f64 = 0.0;
    for a in 0..k {
        for b in (a + 1)..k {
            h = h.max(dist(verts[a], verts[b]));
        }
    }
    let vol = simplex_volume(dim, verts);
    // Facet measures: opposite each vertex.
    let mut facet_sum = 0.0;
    for skip in 0..k {
        let f: Vec<[f64; 3]> = (0..k).filter(|&i| i != skip).map(|i| verts[i]).collect();
        facet_sum += if dim == 2 {
            dist(f[0], f[1])
        } else {
            triangle_area(f[0], f[1], f[2])
        };
    }
    // Inradius r = dim * volume / facet_sum; rho is the ball diameter 2r.
    let rho = 2.0 * dim as f64 * vol / facet_sum;
    (h, rho)
}

pub fn simplex_volume(dim: usize, verts: &[[f64; 3]; 4]) -> f64 {
    if dim == 2 {
        let u = sub(verts[1], verts[0]);
        let v = sub(verts[2], verts[0]);
        0.5 * (u[0] * v[1] - u[1] * v[0]).abs()
    } else {
        let u = sub(verts[1], verts[0]);
        let v = sub(verts[2], verts[0]);
        let w = sub(verts[3], verts[0]);
        let cx = v[1] * w[2] - v[2] * w[1];
        let cy = v[2] * w[0] - v[0] * w[2];
        let cz = v[0] * w[1] - v[1] * w[0];
        (u[0] * cx + u[1] * cy + u[2] * cz).abs() / 6.0
    }
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    let d = sub(a, b);
    (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
}

pub fn triangle_area(a: [f64; 3], b: [f64; 3], c: [f64; 3]) -> f64 {
    let u = sub(b, a);
    let v = sub(c, a);
    let cx = u[1] * v[2] - u[2] * v[1];
    let cy = u[2] * v[0] - u[0] * v[2];
    let cz = u[0] * v[1] - u[1] * v[0];
    0.5 * (cx * cx + cy * cy + cz * cz).sqrt()
}

/// Nested hierarchy of structured levels, coarse to fine.
#[derive(Debug, Clone)]
pub struct MeshHierarchy {
    pub levels: Vec<MeshLevel>,
    pub dim: usize,
    pub cells0: usize,
    /// Coarsest mesh size (largest level-0 element diameter).
    pub h0: f64,
    /// Domain diameter.
    pub h_omega: f64,
    /// Shape regularity of the coarsest level.
    pub gamma: f64,
}

impl MeshHierarchy {
    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    /// J = finest level index.
    pub fn finest(&self) -> usize {
        self.levels.len() - 1
    }
}

/// Builds `num_levels` nested levels; level j has `cells0 * 2^j` cells per
/// axis, so the free-DoF count at level j is `(cells0 * 2^j - 1)^dim`.
pub fn build_hierarchy(dim: usize, cells0: usize, num_levels: usize) -> Result<MeshHierarchy> {
    if cells0 < 2 {
        return Err(Error::InvalidParameter(format!(
            "cells0 must be >= 2 for an interior node, got {cells0}"
        )));
    }
    if num_levels < 1 {
        return Err(Error::InvalidParameter("num_levels must be >= 1".into()));
    }
    let mut levels = Vec::with_capacity(num_levels);
    for j in 0..num_levels {
        levels.push(MeshLevel::structured(dim, cells0 << j)?);
    }
    let h0 = levels[0]
        .elem_diameter
        .iter()
        .cloned()
        .fold(0.0f64, f64::max);
    let h_omega = (dim as f64).sqrt();
    let gamma = shape_regularity(&levels[0])?;
    Ok(MeshHierarchy {
        levels,
        dim,
        cells0,
        h0,
        h_omega,
        gamma,
    })
}

/// max_K h_K / rho_K.
pub fn shape_regularity(level: &MeshLevel) -> Result<f64> {
    let mut gamma: f64 = 0.0;
    for e in 0..level.n_elems() {
        let rho = level.elem_inradius[e];
        if !(rho > 0.0) {
            return Err(Error::DegenerateElement {
                elem: e,
                what: "zero inradius",
            });
        }
        gamma = gamma.max(level.elem_diameter[e] / rho);
    }
    Ok(gamma)
}

/// h_Omega^2 / min_K h_K^2 over the coarsest level.
pub fn domain_ratio(hierarchy: &MeshHierarchy) -> f64 {
    let min_h = hierarchy.levels[0]
        .elem_diameter
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    hierarchy.h_omega * hierarchy.h_omega / (min_h * min_h)
}
