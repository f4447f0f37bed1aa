//! Manifold geometry: tangent projections, orthonormal normal-space bases,
//! retractions, and Weingarten maps for the manifolds the solvers run on.
//!
//! Points and tangent vectors are ambient dense matrices. Ambient
//! coordinates are indexed column-major (index = col·rows + row), matching
//! [`DenseMat::as_slice`]; the proximal machinery and support partitions use
//! the same indexing throughout.

use crate::mat::DenseMat;
use thiserror::Error;

mod curved_plane;
mod span_stiefel;
mod stiefel;

pub use curved_plane::CurvedPlane;
pub use span_stiefel::SpanStiefel;
pub use stiefel::Stiefel;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("point is not on the manifold ({0})")]
    NotOnManifold(String),
    #[error("vector is not in the normal space (tangent residual {0:.3e})")]
    NotNormal(f64),
    #[error("degenerate retraction argument ({0})")]
    DegenerateRetraction(String),
}

/// Per-point access to the orthonormal normal-space basis B_x, without
/// necessarily materializing it. Coordinates are with respect to a fixed
/// deterministic ordering of the basis columns.
pub trait NormalOps {
    /// Number of basis columns, N − d.
    fn dim(&self) -> usize;

    /// B λ as an ambient matrix.
    fn lift(&self, lam: &[f64]) -> DenseMat;

    /// Bᵀ vec(u) for an ambient matrix u.
    fn coords(&self, u: &DenseMat) -> Vec<f64>;

    /// The selected rows of B (ambient indices, column-major), as a dense
    /// len(idx) × (N−d) matrix.
    fn rows(&self, idx: &[usize]) -> DenseMat;
}

/// A compact embedded submanifold of a matrix space.
pub trait Manifold: Send + Sync {
    fn name(&self) -> &'static str;

    /// Shape of ambient point matrices.
    fn point_shape(&self) -> (usize, usize);

    /// Intrinsic dimension d.
    fn dim(&self) -> usize;

    /// Ambient dimension N.
    fn ambient_dim(&self) -> usize {
        let (n, r) = self.point_shape();
        n * r
    }

    /// Codimension N − d, the number of normal basis columns.
    fn normal_dim(&self) -> usize {
        self.ambient_dim() - self.dim()
    }

    /// Validate the point invariants.
    fn check_point(&self, x: &DenseMat) -> Result<(), GeometryError>;

    /// Orthogonal projection of an ambient matrix onto T_xM.
    fn tangent_project(&self, x: &DenseMat, xi: &DenseMat) -> DenseMat;

    /// Retraction R_x(η).
    fn retract(&self, x: &DenseMat, eta: &DenseMat) -> Result<DenseMat, GeometryError>;

    /// Weingarten map W_x(w, u) for a normal u, evaluated by the manifold's
    /// closed-form expression. The expression is linear in w and is applied
    /// to arbitrary ambient w (the solvers feed it support-padded vectors).
    /// Errors when u has a tangent component above 1e-6 relative.
    fn weingarten(&self, x: &DenseMat, w: &DenseMat, u: &DenseMat)
        -> Result<DenseMat, GeometryError>;

    /// The ambient curvature term 𝓛(w) entering 𝔅 = ∇²f − 𝓛: minus the
    /// derivative of the smooth normal field through u along w, extended to
    /// ambient w. Unlike the raw Weingarten formula, this extension is a
    /// symmetric operator on the whole ambient space, and for tangent w its
    /// tangent projection recovers W_x(w, u). Errors when u is not normal.
    fn curvature_term(
        &self,
        x: &DenseMat,
        w: &DenseMat,
        u: &DenseMat,
    ) -> Result<DenseMat, GeometryError>;

    /// Per-point normal-space operations.
    fn normal_ops(&self, x: &DenseMat) -> Box<dyn NormalOps>;

    /// The full orthonormal normal basis B_x as an N×(N−d) matrix.
    fn normal_basis(&self, x: &DenseMat) -> DenseMat {
        let ops = self.normal_ops(x);
        let idx: Vec<usize> = (0..self.ambient_dim()).collect();
        ops.rows(&idx)
    }

    /// Dense block of the curvature term 𝓛 restricted to the given ambient
    /// indices on both sides. The generic fallback runs unit vectors through
    /// `curvature_term`; manifolds override it when the entries have a cheap
    /// closed form.
    fn curvature_support_block(
        &self,
        x: &DenseMat,
        u: &DenseMat,
        support: &[usize],
    ) -> Result<DenseMat, GeometryError> {
        let (n, r) = self.point_shape();
        let j = support.len();
        let mut block = DenseMat::zeros(j, j);
        for (c, &idx) in support.iter().enumerate() {
            let mut e = DenseMat::zeros(n, r);
            e.as_mut_slice()[idx] = 1.0;
            let w = self.curvature_term(x, &e, u)?;
            let ws = w.as_slice();
            for (rrow, &ridx) in support.iter().enumerate() {
                block.set(rrow, c, ws[ridx]);
            }
        }
        Ok(block)
    }

    /// ‖Bᵀ vec(v)‖, the normal component of v; zero for tangent vectors.
    fn tangent_residual(&self, x: &DenseMat, v: &DenseMat) -> f64 {
        let lam = self.normal_ops(x).coords(v);
        lam.iter().map(|a| a * a).sum::<f64>().sqrt()
    }
}

pub(crate) fn check_shape(m: &dyn Manifold, a: &DenseMat) -> Result<(), GeometryError> {
    if a.shape() != m.point_shape() {
        return Err(GeometryError::ShapeMismatch {
            expected: m.point_shape(),
            got: a.shape(),
        });
    }
    Ok(())
}

pub(crate) fn check_normal(
    m: &dyn Manifold,
    x: &DenseMat,
    u: &DenseMat,
) -> Result<(), GeometryError> {
    let tang = m.tangent_project(x, u).norm();
    if tang > 1e-6 * u.norm().max(1.0) {
        return Err(GeometryError::NotNormal(tang));
    }
    Ok(())
}

/// sym(A) = (A + Aᵀ)/2.
pub(crate) fn sym(a: &DenseMat) -> DenseMat {
    let n = a.rows();
    let mut s = DenseMat::zeros(n, n);
    for j in 0..n {
        for i in 0..n {
            s.set(i, j, 0.5 * (a.get(i, j) + a.get(j, i)));
        }
    }
    s
}

/// Deterministic ordering of the symmetric-basis index pairs (i ≤ j).
pub(crate) fn sym_pairs(r: usize) -> Vec<(usize, usize)> {
    let mut pairs = Vec::with_capacity(r * (r + 1) / 2);
    for j in 0..r {
        for i in 0..=j {
            pairs.push((i, j));
        }
    }
    pairs
}

/// Pack the coefficients of a symmetric matrix in the orthonormal basis
/// {E_ii = eᵢeᵢᵀ, E_ij = (eᵢeⱼᵀ + eⱼeᵢᵀ)/√2}: λ_(ii) = C_ii,
/// λ_(ij) = (C_ij + C_ji)/√2 for a general square C.
pub(crate) fn pack_sym_coords(c: &DenseMat, pairs: &[(usize, usize)]) -> Vec<f64> {
    let s2 = std::f64::consts::SQRT_2;
    pairs
        .iter()
        .map(|&(i, j)| {
            if i == j {
                c.get(i, i)
            } else {
                (c.get(i, j) + c.get(j, i)) / s2
            }
        })
        .collect()
}

/// Inverse of [`pack_sym_coords`]: the symmetric matrix Σ λ_k E_k.
pub(crate) fn unpack_sym(lam: &[f64], pairs: &[(usize, usize)], r: usize) -> DenseMat {
    let s2 = std::f64::consts::SQRT_2;
    let mut s = DenseMat::zeros(r, r);
    for (k, &(i, j)) in pairs.iter().enumerate() {
        if i == j {
            s.set(i, i, lam[k]);
        } else {
            let v = lam[k] / s2;
            s.set(i, j, v);
            s.set(j, i, v);
        }
    }
    s
}
