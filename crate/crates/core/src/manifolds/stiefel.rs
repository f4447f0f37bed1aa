//! The Stiefel manifold St(r, n) = {X ∈ R^{n×r} : XᵀX = I_r} with the polar
//! retraction and its closed-form Weingarten map.

use super::{check_normal, check_shape, pack_sym_coords, sym, sym_pairs, unpack_sym};
use super::{GeometryError, Manifold, NormalOps};
use crate::mat::DenseMat;
use crate::numerics::inv_sqrt_spd;

#[derive(Debug, Clone)]
pub struct Stiefel {
    n: usize,
    r: usize,
}

impl Stiefel {
    pub fn new(n: usize, r: usize) -> Self {
        assert!(r >= 1 && n >= r, "St(r,n) needs n >= r >= 1");
        Stiefel { n, r }
    }
}

impl Manifold for Stiefel {
    fn name(&self) -> &'static str {
        "stiefel"
    }

    fn point_shape(&self) -> (usize, usize) {
        (self.n, self.r)
    }

    fn dim(&self) -> usize {
        self.n * self.r - self.r * (self.r + 1) / 2
    }

    fn check_point(&self, x: &DenseMat) -> Result<(), GeometryError> {
        check_shape(self, x)?;
        let g = x.t_matmul(x);
        let defect = g.sub(&DenseMat::identity(self.r)).norm();
        if defect > 1e-10 {
            return Err(GeometryError::NotOnManifold(format!(
                "‖XᵀX − I‖ = {defect:.3e}"
            )));
        }
        Ok(())
    }

    fn tangent_project(&self, x: &DenseMat, xi: &DenseMat) -> DenseMat {
        // ξ − X sym(Xᵀξ)
        let c = sym(&x.t_matmul(xi));
        let mut out = xi.clone();
        out.axpy(-1.0, &x.matmul(&c));
        out
    }

    fn retract(&self, x: &DenseMat, eta: &DenseMat) -> Result<DenseMat, GeometryError> {
        // Polar retraction (X + η)(I + ηᵀη)^{-1/2}. The Gram matrix
        // (X+η)ᵀ(X+η) equals I + ηᵀη for exact inputs and keeps the output
        // orthonormal when x or η carry roundoff-level defects; a
        // rank-deficient X + η surfaces as a non-PD Gram matrix.
        let y = x.add(eta);
        if y.as_slice() == x.as_slice() {
            // The step underflowed entirely; renormalizing would perturb x
            // by roundoff and make R_x(η) discontinuous at η = 0.
            return Ok(y);
        }
        let s = y.t_matmul(&y);
        let si = inv_sqrt_spd(&s)
            .map_err(|e| GeometryError::DegenerateRetraction(e.to_string()))?;
        Ok(y.matmul(&si))
    }

    fn weingarten(
        &self,
        x: &DenseMat,
        w: &DenseMat,
        u: &DenseMat,
    ) -> Result<DenseMat, GeometryError> {
        check_shape(self, w)?;
        check_normal(self, x, u)?;
        // −W(XᵀU) − ½X(WᵀU + UᵀW)
        let c = x.t_matmul(u);
        let mut out = w.matmul(&c).scale(-1.0);
        let wu = w.t_matmul(u);
        let s = wu.add(&wu.transpose());
        out.axpy(-0.5, &x.matmul(&s));
        Ok(out)
    }

    fn curvature_term(
        &self,
        x: &DenseMat,
        w: &DenseMat,
        u: &DenseMat,
    ) -> Result<DenseMat, GeometryError> {
        check_shape(self, w)?;
        check_normal(self, x, u)?;
        // The smooth normal field through u = XΛ is Y ↦ YΛ, whose derivative
        // along W is WΛ; 𝓛(W) = −WΛ. Symmetric because Λ is.
        let lam = sym(&x.t_matmul(u));
        Ok(w.matmul(&lam).scale(-1.0))
    }

    fn normal_ops(&self, x: &DenseMat) -> Box<dyn NormalOps> {
        Box::new(StiefelNormal {
            x: x.clone(),
            pairs: sym_pairs(self.r),
            r: self.r,
            n: self.n,
        })
    }

    fn curvature_support_block(
        &self,
        x: &DenseMat,
        u: &DenseMat,
        support: &[usize],
    ) -> Result<DenseMat, GeometryError> {
        check_normal(self, x, u)?;
        let n = self.n;
        let j = support.len();
        // 𝓛(E_{a'b'}) = −E_{a'b'}Λ: entry at output (a,b) is −δ_{aa'} Λ_{b'b};
        // only pairs sharing the matrix row interact.
        let lam = sym(&x.t_matmul(u));
        let mut rows: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
        for (pos, &kin) in support.iter().enumerate() {
            rows[kin % n].push((pos, kin / n));
        }
        let mut block = DenseMat::zeros(j, j);
        for group in &rows {
            for &(cc, bp) in group {
                for &(rr, b) in group {
                    block.set(rr, cc, -lam.get(bp, b));
                }
            }
        }
        Ok(block)
    }
}

struct StiefelNormal {
    x: DenseMat,
    pairs: Vec<(usize, usize)>,
    r: usize,
    n: usize,
}

impl NormalOps for StiefelNormal {
    fn dim(&self) -> usize {
        self.pairs.len()
    }

    fn lift(&self, lam: &[f64]) -> DenseMat {
        let s = unpack_sym(lam, &self.pairs, self.r);
        self.x.matmul(&s)
    }

    fn coords(&self, u: &DenseMat) -> Vec<f64> {
        let c = self.x.t_matmul(u);
        pack_sym_coords(&c, &self.pairs)
    }

    fn rows(&self, idx: &[usize]) -> DenseMat {
        // Row (a,b) of B is sparse: only basis pairs containing column b hit
        // it. B[(a,b),(i,j)] = (X E_ij)_{ab}.
        let s2inv = 1.0 / std::f64::consts::SQRT_2;
        let m = self.pairs.len();
        let mut pair_index = vec![usize::MAX; self.r * self.r];
        for (k, &(i, j)) in self.pairs.iter().enumerate() {
            pair_index[i * self.r + j] = k;
        }
        let mut out = DenseMat::zeros(idx.len(), m);
        for (row, &kidx) in idx.iter().enumerate() {
            let (a, b) = (kidx % self.n, kidx / self.n);
            out.set(row, pair_index[b * self.r + b], self.x.get(a, b));
            for i in 0..b {
                out.set(row, pair_index[i * self.r + b], self.x.get(a, i) * s2inv);
            }
            for j in (b + 1)..self.r {
                out.set(row, pair_index[b * self.r + j], self.x.get(a, j) * s2inv);
            }
        }
        out
    }
}
