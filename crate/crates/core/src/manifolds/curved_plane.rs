//! The plane R² equipped with a second-order-curved retraction,
//! R_x(η) = x + η + (0, 2ηᵀη)ᵀ. The manifold is flat (tangent space is all
//! of R², the normal space is trivial), but the retraction curvature makes
//! unit proximal-Newton steps increase F arbitrarily close to a minimizer;
//! it exists here so that behaviour stays covered by an executable test.

use super::{check_shape, GeometryError, Manifold, NormalOps};
use crate::mat::DenseMat;

#[derive(Debug, Clone, Default)]
pub struct CurvedPlane;

impl CurvedPlane {
    pub fn new() -> Self {
        CurvedPlane
    }
}

impl Manifold for CurvedPlane {
    fn name(&self) -> &'static str {
        "curved-plane"
    }

    fn point_shape(&self) -> (usize, usize) {
        (2, 1)
    }

    fn dim(&self) -> usize {
        2
    }

    fn check_point(&self, x: &DenseMat) -> Result<(), GeometryError> {
        check_shape(self, x)
    }

    fn tangent_project(&self, _x: &DenseMat, xi: &DenseMat) -> DenseMat {
        xi.clone()
    }

    fn retract(&self, x: &DenseMat, eta: &DenseMat) -> Result<DenseMat, GeometryError> {
        check_shape(self, eta)?;
        let mut out = x.add(eta);
        let q = eta.dot(eta);
        out.set(1, 0, out.get(1, 0) + 2.0 * q);
        Ok(out)
    }

    fn weingarten(
        &self,
        _x: &DenseMat,
        w: &DenseMat,
        u: &DenseMat,
    ) -> Result<DenseMat, GeometryError> {
        check_shape(self, w)?;
        let un = u.norm();
        if un > 1e-6 {
            return Err(GeometryError::NotNormal(un));
        }
        Ok(DenseMat::zeros(2, 1))
    }

    fn curvature_term(
        &self,
        x: &DenseMat,
        w: &DenseMat,
        u: &DenseMat,
    ) -> Result<DenseMat, GeometryError> {
        self.weingarten(x, w, u)
    }

    fn normal_ops(&self, _x: &DenseMat) -> Box<dyn NormalOps> {
        Box::new(TrivialNormal)
    }
}

struct TrivialNormal;

impl NormalOps for TrivialNormal {
    fn dim(&self) -> usize {
        0
    }

    fn lift(&self, lam: &[f64]) -> DenseMat {
        assert!(lam.is_empty());
        DenseMat::zeros(2, 1)
    }

    fn coords(&self, _u: &DenseMat) -> Vec<f64> {
        Vec::new()
    }

    fn rows(&self, idx: &[usize]) -> DenseMat {
        DenseMat::zeros(idx.len(), 0)
    }
}
