//! Stiefel matrices whose column space contains a fixed vector v:
//! F_v = {X ∈ R^{n×r} : XᵀX = I_r, v ∈ span(X)}, the feasible set of the
//! community-detection problem (v = 1_n).
//!
//! Geometry in closed form, writing s = Xᵀv and s̃ = s/‖s‖:
//!
//! - tangents: {XΩ + X_⊥K : Ω skew, K s = 0}, so the span constraint removes
//!   n − r directions from the Stiefel tangent space;
//! - normal space: {XS : S symmetric} ⊕ {z s̃ᵀ : Xᵀz = 0};
//! - tangent projection: P(ξ) = ξ − X sym(Xᵀξ) − (I − XXᵀ) ξ s̃ s̃ᵀ;
//! - Weingarten map: the derivative of P along tangent curves, expanded
//!   below term by term.

use super::{check_normal, check_shape, pack_sym_coords, sym, sym_pairs, unpack_sym};
use super::{GeometryError, Manifold, NormalOps};
use crate::mat::DenseMat;
use crate::numerics::{full_qr, qf};

#[derive(Debug, Clone)]
pub struct SpanStiefel {
    n: usize,
    r: usize,
    v: Vec<f64>,
    v_norm: f64,
}

impl SpanStiefel {
    pub fn new(n: usize, r: usize, v: Vec<f64>) -> Self {
        assert_eq!(v.len(), n);
        let v_norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        assert!(v_norm > 0.0, "span vector must be nonzero");
        assert!(r >= 1 && n > r, "F_v needs n > r >= 1");
        SpanStiefel { n, r, v, v_norm }
    }

    /// All-ones span vector, the community-detection case.
    pub fn ones(n: usize, r: usize) -> Self {
        SpanStiefel::new(n, r, vec![1.0; n])
    }

    pub fn span_vector(&self) -> &[f64] {
        &self.v
    }

    fn v_mat(&self) -> DenseMat {
        DenseMat::from_vec(self.n, 1, self.v.clone())
    }

    /// s = Xᵀv and its normalization s̃.
    fn s_tilde(&self, x: &DenseMat) -> (DenseMat, f64) {
        let s = x.t_matmul(&self.v_mat());
        let ns = s.norm();
        (s.scale(1.0 / ns), ns)
    }

    /// (I − XXᵀ) ξ without forming XXᵀ.
    fn perp(&self, x: &DenseMat, xi: &DenseMat) -> DenseMat {
        let mut out = xi.clone();
        out.axpy(-1.0, &x.matmul(&x.t_matmul(xi)));
        out
    }
}

impl Manifold for SpanStiefel {
    fn name(&self) -> &'static str {
        "span-stiefel"
    }

    fn point_shape(&self) -> (usize, usize) {
        (self.n, self.r)
    }

    fn dim(&self) -> usize {
        // Stiefel dimension minus the n − r span-constraint directions.
        self.n * self.r - self.r * (self.r + 1) / 2 - (self.n - self.r)
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
        let res = self.perp(x, &self.v_mat()).norm() / self.v_norm;
        if res > 1e-8 {
            return Err(GeometryError::NotOnManifold(format!(
                "‖(I − XXᵀ)v‖/‖v‖ = {res:.3e}"
            )));
        }
        Ok(())
    }

    fn tangent_project(&self, x: &DenseMat, xi: &DenseMat) -> DenseMat {
        let (st, _) = self.s_tilde(x);
        let c = sym(&x.t_matmul(xi));
        let mut out = xi.clone();
        out.axpy(-1.0, &x.matmul(&c));
        // − (I − XXᵀ) ξ s̃ s̃ᵀ
        let perp_xi = self.perp(x, xi);
        let w = perp_xi.matmul(&st); // n×1
        out.axpy(-1.0, &w.matmul_t(&st));
        out
    }

    fn retract(&self, x: &DenseMat, eta: &DenseMat) -> Result<DenseMat, GeometryError> {
        // R_X(η) = v q*ᵀ/‖v‖ + qf(X+η)(I − q* q*ᵀ),
        // q* = qf(X+η)ᵀ v / ‖qf(X+η)ᵀ v‖.
        let y = x.add(eta);
        if y.as_slice() == x.as_slice() {
            return Ok(y);
        }
        let q = qf(&y).map_err(|e| GeometryError::DegenerateRetraction(e.to_string()))?;
        let qv = q.t_matmul(&self.v_mat());
        let qvn = qv.norm();
        if qvn <= 1e-14 * self.v_norm {
            return Err(GeometryError::DegenerateRetraction(
                "span vector orthogonal to qf(X+η)".into(),
            ));
        }
        let qs = qv.scale(1.0 / qvn); // q*
        let mut out = self.v_mat().matmul_t(&qs).scale(1.0 / self.v_norm);
        // + Q (I − q* q*ᵀ) = Q − (Q q*) q*ᵀ
        out.axpy(1.0, &q);
        out.axpy(-1.0, &q.matmul(&qs).matmul_t(&qs));
        Ok(out)
    }

    fn weingarten(
        &self,
        x: &DenseMat,
        w: &DenseMat,
        u: &DenseMat,
    ) -> Result<DenseMat, GeometryError> {
        check_shape(self, w)?;
        check_normal(self, x, u)?;
        let (st, sn) = self.s_tilde(x);
        // d s̃ along w: (I − s̃ s̃ᵀ) wᵀv / ‖s‖
        let wv = w.t_matmul(&self.v_mat());
        let mut dst = wv.clone();
        dst.axpy(-st.dot(&wv), &st);
        let dst = dst.scale(1.0 / sn);

        // −W sym(XᵀU) − X sym(WᵀU)
        let mut out = w.matmul(&sym(&x.t_matmul(u))).scale(-1.0);
        out.axpy(-1.0, &x.matmul(&sym(&w.t_matmul(u))));
        // + (WXᵀ + XWᵀ) U s̃ s̃ᵀ
        let ust = u.matmul(&st); // n×1
        let mut t = w.matmul(&x.t_matmul(&ust));
        t.axpy(1.0, &x.matmul(&w.t_matmul(&ust)));
        out.axpy(1.0, &t.matmul_t(&st));
        // − (I − XXᵀ) U (ds̃ s̃ᵀ + s̃ ds̃ᵀ)
        let pu = self.perp(x, u);
        out.axpy(-1.0, &pu.matmul(&dst).matmul_t(&st));
        out.axpy(-1.0, &pu.matmul(&st).matmul_t(&dst));
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
        // Decompose u = XΛ + z₀ s̃ᵀ. The Stiefel part contributes −WΛ as on
        // St(r,n). The span part is the gradient field of
        // ψ(Y) = ⟨z_c, (I − YYᵀ)v⟩ with z_c = −z₀/‖s‖, whose Hessian along W
        // is −(z_c vᵀ + v z_cᵀ)W; with the sign of 𝓛 this adds −K W,
        // K = (z₀vᵀ + vz₀ᵀ)/‖s‖.
        let lam = sym(&x.t_matmul(u));
        let (st, sn) = self.s_tilde(x);
        let z0 = self.perp(x, &u.matmul(&st)); // n×1
        let vm = self.v_mat();
        let mut out = w.matmul(&lam).scale(-1.0);
        // −(z₀ vᵀ + v z₀ᵀ) W / ‖s‖
        let vt_w = vm.t_matmul(w); // 1×r
        let zt_w = z0.t_matmul(w); // 1×r
        out.axpy(-1.0 / sn, &z0.matmul(&vt_w));
        out.axpy(-1.0 / sn, &vm.matmul(&zt_w));
        Ok(out)
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
        let lam = sym(&x.t_matmul(u));
        let (st, sn) = self.s_tilde(x);
        let z0 = self.perp(x, &u.matmul(&st));
        // Entry ((a,b),(a',b')) = −δ_{aa'}Λ_{b'b} − δ_{bb'}K_{aa'},
        // K = (z₀vᵀ + vz₀ᵀ)/‖s‖; the two terms live on same-row and
        // same-column pairs respectively.
        let mut block = DenseMat::zeros(j, j);
        let mut rows: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
        let mut cols: Vec<Vec<(usize, usize)>> = vec![Vec::new(); self.r];
        for (pos, &kin) in support.iter().enumerate() {
            rows[kin % n].push((pos, kin / n));
            cols[kin / n].push((pos, kin % n));
        }
        for group in &rows {
            for &(cc, bp) in group {
                for &(rr, b) in group {
                    block.set(rr, cc, -lam.get(bp, b));
                }
            }
        }
        for group in &cols {
            for &(cc, ap) in group {
                for &(rr, a) in group {
                    let val = block.get(rr, cc)
                        - (z0.get(a, 0) * self.v[ap] + self.v[a] * z0.get(ap, 0)) / sn;
                    block.set(rr, cc, val);
                }
            }
        }
        Ok(block)
    }

    fn normal_ops(&self, x: &DenseMat) -> Box<dyn NormalOps> {
        let (st, _) = self.s_tilde(x);
        // Orthonormal basis of span(X)^⊥ from the trailing columns of a full
        // QR of X.
        let (qfull, _) = full_qr(x);
        let mut x_perp = DenseMat::zeros(self.n, self.n - self.r);
        for (c, src) in (self.r..self.n).enumerate() {
            for i in 0..self.n {
                x_perp.set(i, c, qfull.get(i, src));
            }
        }
        Box::new(SpanNormal {
            x: x.clone(),
            x_perp,
            st,
            pairs: sym_pairs(self.r),
            n: self.n,
            r: self.r,
        })
    }
}

struct SpanNormal {
    x: DenseMat,
    x_perp: DenseMat,
    st: DenseMat, // s̃, r×1
    pairs: Vec<(usize, usize)>,
    n: usize,
    r: usize,
}

impl NormalOps for SpanNormal {
    fn dim(&self) -> usize {
        self.pairs.len() + (self.n - self.r)
    }

    fn lift(&self, lam: &[f64]) -> DenseMat {
        let m1 = self.pairs.len();
        let s = unpack_sym(&lam[..m1], &self.pairs, self.r);
        let mut out = self.x.matmul(&s);
        // z s̃ᵀ part with z = X_⊥ c.
        let c = DenseMat::from_vec(self.n - self.r, 1, lam[m1..].to_vec());
        let z = self.x_perp.matmul(&c);
        out.axpy(1.0, &z.matmul_t(&self.st));
        out
    }

    fn coords(&self, u: &DenseMat) -> Vec<f64> {
        let mut lam = pack_sym_coords(&self.x.t_matmul(u), &self.pairs);
        // ⟨z_l s̃ᵀ, u⟩ = z_lᵀ (u s̃)
        let us = u.matmul(&self.st);
        lam.extend_from_slice(self.x_perp.t_matmul(&us).as_slice());
        lam
    }

    fn rows(&self, idx: &[usize]) -> DenseMat {
        let s2inv = 1.0 / std::f64::consts::SQRT_2;
        let m1 = self.pairs.len();
        let m = self.dim();
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
            // Span columns: (z_l s̃ᵀ)_{ab} = X_⊥[a,l] s̃_b.
            let sb = self.st.get(b, 0);
            for l in 0..(self.n - self.r) {
                out.set(row, m1 + l, self.x_perp.get(a, l) * sb);
            }
        }
        out
    }
}
