//! Symmetric simplex quadrature (Grundmann-Moeller family). A rule built
//! for `order` q integrates polynomials of degree q exactly on triangles
//! and tetrahedra.

/// Quadrature rule on the reference d-simplex. Points are stored as
/// barycentric (d+1)-tuples; weights sum to 1, so a physical integral is
/// `volume * sum_q w_q f(x_q)`.
#[derive(Debug, Clone)]
pub struct SimplexQuadrature {
    dim: usize,
    points: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// All nonnegative integer (parts)-tuples summing to total, in
/// lexicographic order.
fn compositions(total: usize, parts: usize) -> Vec<Vec<usize>> {
    if parts == 1 {
        return vec![vec![total]];
    }
    let mut out = Vec::new();
    for first in 0..=total {
        for mut rest in compositions(total - first, parts - 1) {
            let mut c = Vec::with_capacity(parts);
            c.push(first);
            c.append(&mut rest);
            out.push(c);
        }
    }
    out
}

impl SimplexQuadrature {
    pub fn new(dim: usize, order: usize) -> Self {
        assert!((2..=3).contains(&dim), "dim must be 2 or 3");
        assert!(order >= 1, "quadrature order must be >= 1");
        // Grundmann-Moeller rule s is exact up to degree 2s+1.
        let s = order.saturating_sub(1).div_ceil(2);
        let d = dim;
        let mut points = Vec::new();
        let mut weights = Vec::new();
        for i in 0..=s {
            let denom = (d + 2 * s + 1 - 2 * i) as f64;
            let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
            let w = sign * 0.25f64.powi(s as i32) * denom.powi(2 * s as i32 + 1)
                / (factorial(i) * factorial(d + 2 * s + 1 - i));
            for beta in compositions(s - i, d + 1) {
                points.push(beta.iter().map(|&b| (2 * b + 1) as f64 / denom).collect());
                weights.push(w);
            }
        }
        // Raw weights integrate over the unit simplex (volume 1/d!);
        // renormalize so they sum to 1 relative to the element volume.
        let dfac = factorial(d);
        for w in &mut weights {
            *w *= dfac;
        }
        SimplexQuadrature {
            dim,
            points,
            weights,
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Barycentric points and weights.
    pub fn nodes(&self) -> impl Iterator<Item = (&[f64], f64)> + '_ {
        self.points
            .iter()
            .map(|p| p.as_slice())
            .zip(self.weights.iter().copied())
    }

    /// Integrates `f` over the physical simplex with the given vertices and
    /// volume. `f` receives the cartesian point and its barycentric
    /// coordinates.
    pub fn integrate<F>(&self, verts: &[[f64; 3]], volume: f64, mut f: F) -> f64
    where
        F: FnMut([f64; 3], &[f64]) -> f64,
    {
        debug_assert_eq!(verts.len(), self.dim + 1);
        let mut acc = 0.0;
        for (lambda, w) in self.nodes() {
            let mut x = [0.0; 3];
            for (l, v) in lambda.iter().zip(verts) {
                x[0] += l * v[0];
                x[1] += l * v[1];
                x[2] += l * v[2];
            }
            acc += w * f(x, lambda);
        }
        acc * volume
    }
}
