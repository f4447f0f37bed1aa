//! The support-restricted second-order machinery: estimated support
//! partition, the operator 𝔅 = ∇²f − 𝓛 with its dense (1,1) block ℬ, the
//! reduced gradient ℓ, the projector onto null(B̄ᵀ), the truncated conjugate
//! gradient with descent-guarding exits, and the exact reduced Newton solve.
//!
//! Partition convention: "bar" components live on the estimated support of
//! x + v(x), "hat" components on its complement, both in ascending ambient
//! (column-major) index order.

use crate::mat::{lu_solve, DenseMat};
use crate::numerics::{pinv, thin_qr, RANK_TOL};
use crate::objectives::CompositeProblem;
use crate::prox::SubproblemResult;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NewtonError {
    #[error("estimated support is empty")]
    EmptySupport,
    #[error("B̄ is rank deficient")]
    RankDeficient,
    #[error("singular reduced system")]
    Singular,
    #[error("non-finite arithmetic in {0}")]
    NonFinite(&'static str),
    #[error(transparent)]
    Geometry(#[from] crate::manifolds::GeometryError),
}

/// Ascending index sets splitting the ambient coordinates into the estimated
/// support (bar) and its complement (hat).
#[derive(Debug, Clone)]
pub struct SupportPartition {
    pub support: Vec<usize>,
    pub complement: Vec<usize>,
}

impl SupportPartition {
    pub fn j(&self) -> usize {
        self.support.len()
    }

    /// Split an ambient matrix into (bar, hat) vectors.
    pub fn gather(&self, m: &DenseMat) -> (Vec<f64>, Vec<f64>) {
        let s = m.as_slice();
        (
            self.support.iter().map(|&i| s[i]).collect(),
            self.complement.iter().map(|&i| s[i]).collect(),
        )
    }

    /// Rebuild an ambient matrix from (bar, hat) parts.
    pub fn scatter(&self, bar: &[f64], hat: &[f64], shape: (usize, usize)) -> DenseMat {
        let mut m = DenseMat::zeros(shape.0, shape.1);
        let s = m.as_mut_slice();
        for (k, &i) in self.support.iter().enumerate() {
            s[i] = bar[k];
        }
        for (k, &i) in self.complement.iter().enumerate() {
            s[i] = hat[k];
        }
        m
    }
}

/// Support estimation rule: index i is kept iff (x+v)ᵢ ≠ 0 and
/// |xᵢ| ≥ ‖v‖_F. The zeros of x+v are exact (they come straight from the
/// prox), so the first test is an exact comparison.
pub fn estimate_support(
    x: &DenseMat,
    sub: &SubproblemResult,
) -> Result<SupportPartition, NewtonError> {
    let vnorm = sub.v.norm();
    let xs = x.as_slice();
    let ps = sub.x_plus_v.as_slice();
    let mut support = Vec::new();
    let mut complement = Vec::new();
    for i in 0..xs.len() {
        if ps[i] != 0.0 && xs[i].abs() >= vnorm {
            support.push(i);
        } else {
            complement.push(i);
        }
    }
    if support.is_empty() {
        return Err(NewtonError::EmptySupport);
    }
    Ok(SupportPartition {
        support,
        complement,
    })
}

/// 𝔅 u = ∇²f(x)[u] − 𝓛(u) applied to an ambient matrix, with 𝓛 the
/// symmetric ambient curvature term through Bλ (it tangent-projects to the
/// Weingarten map W(·, Bλ)).
pub fn frakb_apply(
    problem: &CompositeProblem,
    x: &DenseMat,
    normal_lift: &DenseMat,
    u: &DenseMat,
) -> Result<DenseMat, NewtonError> {
    let mut out = problem.smooth.ehess_vec(x, u);
    out.axpy(-1.0, &problem.manifold.curvature_term(x, u, normal_lift)?);
    Ok(out)
}

/// Everything the reduced solvers need at one iterate, partitioned by the
/// estimated support.
pub struct PartitionedModel {
    pub part: SupportPartition,
    pub t: f64,
    pub tau: f64,
    pub mu: f64,
    /// Support rows of the normal basis, j×(N−d).
    pub bbar: DenseMat,
    /// Thin-QR Q factor of B̄ when it has full column rank; the projector
    /// onto null(B̄ᵀ) is applied as P w = w − Q(Qᵀw). None ⇒ rank deficient
    /// and the caller falls back to d = v.
    pub proj_q: Option<DenseMat>,
    /// ℬ = 𝔅^{(11)} as a dense j×j block.
    pub calb: DenseMat,
    /// z = 𝔅 v as an ambient matrix.
    pub z: DenseMat,
    /// z̄ and ℓ_{x,t} = z̄ − v̄/t.
    pub zbar: Vec<f64>,
    pub ell: Vec<f64>,
    /// Partitioned v and cached scalars.
    pub vbar: Vec<f64>,
    pub vhat: Vec<f64>,
    pub vhat_norm2: f64,
    pub v_norm2: f64,
    pub v_bv: f64,
    /// f(x), μ‖x‖₁, μ‖x+v‖₁ and μ·Σ_hat|x+v|.
    pub fx: f64,
    pub hx: f64,
    pub h_xv: f64,
    pub h_hat_xv: f64,
    pub grad_bar: Vec<f64>,
    pub grad_dot_v: f64,
    pub xbar: Vec<f64>,
    /// Bλ(x), the normal argument of the Weingarten term.
    pub lift: DenseMat,
}

impl PartitionedModel {
    /// G_x(0) = F(x).
    pub fn g_zero(&self) -> f64 {
        self.fx + self.hx
    }

    /// G_x(v).
    pub fn g_of_v(&self) -> f64 {
        self.fx + self.grad_dot_v + 0.5 * self.v_bv + 0.5 * self.tau * self.vhat_norm2 + self.h_xv
    }

    /// G at a direction with bar part `dbar` and hat part v̂, given the
    /// quadratic form q = ⟨d, 𝔅d⟩ and ⟨∇f, d⟩ maintained by the caller.
    fn g_incremental(&self, dbar: &[f64], qform: f64, grad_dot_d: f64) -> f64 {
        let mut h_bar = 0.0;
        for (xi, di) in self.xbar.iter().zip(dbar) {
            h_bar += (xi + di).abs();
        }
        self.fx
            + grad_dot_d
            + 0.5 * qform
            + 0.5 * self.tau * self.vhat_norm2
            + self.mu * h_bar
            + self.h_hat_xv
    }

    /// Apply P = I − QQᵀ, the projector onto null(B̄ᵀ).
    fn project(&self, w: &[f64]) -> Vec<f64> {
        let q = self.proj_q.as_ref().expect("projector requires full-rank B̄");
        if q.cols() == 0 {
            return w.to_vec();
        }
        let wv = DenseMat::from_vec(w.len(), 1, w.to_vec());
        let mut out = wv.clone();
        out.axpy(-1.0, &q.matmul(&q.t_matmul(&wv)));
        out.as_slice().to_vec()
    }
}

/// Build the partitioned model at x from a solved subproblem.
pub fn assemble_model(
    problem: &CompositeProblem,
    x: &DenseMat,
    sub: &SubproblemResult,
    part: SupportPartition,
    t: f64,
    tau: f64,
    egrad: &DenseMat,
    fx: f64,
) -> Result<PartitionedModel, NewtonError> {
    let manifold = problem.manifold.as_ref();
    let ops = manifold.normal_ops(x);
    let lift = ops.lift(&sub.lambda);
    let z = frakb_apply(problem, x, &lift, &sub.v)?;
    let bbar = ops.rows(&part.support);
    let j = part.j();
    let m = bbar.cols();
    let proj_q = if j >= m {
        match thin_qr(&bbar) {
            Ok((q, r)) => {
                let mut dmax = 0.0f64;
                for i in 0..m {
                    dmax = dmax.max(r.get(i, i).abs());
                }
                let full_rank = (0..m).all(|i| r.get(i, i).abs() > RANK_TOL * dmax.max(1e-300));
                if m == 0 || full_rank {
                    Some(q)
                } else {
                    None
                }
            }
            Err(_) => None,
        }
    } else {
        None
    };
    let hblock = problem.smooth.ehess_support_block(x, &part.support);
    let lblock = manifold.curvature_support_block(x, &lift, &part.support)?;
    let calb = hblock.sub(&lblock);

    let (vbar, vhat) = part.gather(&sub.v);
    let (zbar, _) = part.gather(&z);
    let (xbar, _) = part.gather(x);
    let (gbar, _) = part.gather(egrad);
    let vhat_norm2: f64 = vhat.iter().map(|a| a * a).sum();
    let v_norm2 = sub.v.dot(&sub.v);
    let ell: Vec<f64> = zbar
        .iter()
        .zip(&vbar)
        .map(|(zb, vb)| zb - vb / t)
        .collect();
    let (h_xv, h_hat_xv) = {
        let mu = problem.mu;
        let total = mu * sub.x_plus_v.norm_l1();
        let ps = sub.x_plus_v.as_slice();
        let hat: f64 = part.complement.iter().map(|&i| ps[i].abs()).sum();
        (total, mu * hat)
    };
    Ok(PartitionedModel {
        t,
        tau,
        mu: problem.mu,
        bbar,
        proj_q,
        calb,
        zbar,
        ell,
        vbar,
        vhat,
        vhat_norm2,
        v_norm2,
        v_bv: sub.v.dot(&z),
        z,
        fx,
        hx: problem.mu * x.norm_l1(),
        h_xv,
        h_hat_xv,
        grad_bar: gbar,
        grad_dot_v: egrad.dot(&sub.v),
        xbar,
        lift,
        part,
    })
}

/// Direct evaluation of the model
/// G_x(u) = f(x) + ⟨∇f(x), u⟩ + ½⟨u, 𝔅u⟩ + (τ/2)‖û‖² + μ‖x+u‖₁,
/// term by term through the operator form of 𝔅. The tCG maintains the same
/// quantity incrementally; the two must agree.
pub fn model_g(
    problem: &CompositeProblem,
    x: &DenseMat,
    normal_lift: &DenseMat,
    part: &SupportPartition,
    tau: f64,
    fx: f64,
    egrad: &DenseMat,
    u: &DenseMat,
) -> Result<f64, NewtonError> {
    let bu = frakb_apply(problem, x, normal_lift, u)?;
    let (_, uhat) = part.gather(u);
    let uhat_norm2: f64 = uhat.iter().map(|a| a * a).sum();
    Ok(fx
        + egrad.dot(u)
        + 0.5 * u.dot(&bu)
        + 0.5 * tau * uhat_norm2
        + problem.mu * x.add(u).norm_l1())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TcgStatus {
    Early1,
    Early2,
    Early3,
    Neg,
    Lin,
    Sup,
}

impl TcgStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            TcgStatus::Early1 => "early1",
            TcgStatus::Early2 => "early2",
            TcgStatus::Early3 => "early3",
            TcgStatus::Neg => "neg",
            TcgStatus::Lin => "lin",
            TcgStatus::Sup => "sup",
        }
    }
}

#[derive(Debug, Clone)]
pub struct TcgParams {
    pub vartheta: f64,
    pub gamma: f64,
    pub theta: f64,
    pub kappa: f64,
    /// Test hook: skip the descent-guarding exits (early1/early2/early3 and
    /// the ϑ-curvature test) so the CG runs to the residual criterion.
    pub disable_early_exits: bool,
    /// Record per-iteration w and G values.
    pub record_trace: bool,
}

impl Default for TcgParams {
    fn default() -> Self {
        TcgParams {
            vartheta: 0.01,
            gamma: 0.01,
            theta: 0.5,
            kappa: 0.1,
            disable_early_exits: false,
            record_trace: false,
        }
    }
}

#[derive(Debug, Default, Clone)]
pub struct TcgTrace {
    pub w_iterates: Vec<Vec<f64>>,
    pub g_values: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct TcgOutcome {
    pub w: Vec<f64>,
    pub status: TcgStatus,
    pub cg_iters: usize,
    pub trace: Option<TcgTrace>,
}

/// Truncated conjugate gradient on min ⟨ℓ, w⟩ + ½⟨w, ℬw⟩ over null(B̄ᵀ).
///
/// Exits: early1 when G_x(v) > G_x(0); early2 when
/// ⟨v, 𝔅v⟩ + τ‖v̂‖² < γ‖v‖²; neg on the curvature test ⟨o, q⟩ ≤ ϑδ; early3
/// when the current candidate d loses the model-decrease or curvature test;
/// lin/sup on ‖r‖ ≤ ‖r₀‖·min(‖r₀‖^θ, κ), sup iff ‖r₀‖^θ ≤ κ. Iterations are
/// capped at j (exact-arithmetic CG termination), returning lin.
pub fn tcg(model: &PartitionedModel, params: &TcgParams) -> Result<TcgOutcome, NewtonError> {
    let j = model.part.j();
    let mut trace = params.record_trace.then(TcgTrace::default);
    let done = |w: Vec<f64>, status: TcgStatus, iters: usize, trace: Option<TcgTrace>| {
        Ok(TcgOutcome {
            w,
            status,
            cg_iters: iters,
            trace,
        })
    };

    let g0 = model.g_zero();
    if !params.disable_early_exits && model.g_of_v() > g0 {
        return done(vec![0.0; j], TcgStatus::Early1, 0, trace);
    }
    if !params.disable_early_exits
        && model.v_bv + model.tau * model.vhat_norm2 < params.gamma * model.v_norm2
    {
        return done(vec![0.0; j], TcgStatus::Early2, 0, trace);
    }

    let mut w = vec![0.0; j];
    let mut r = model.project(&model.ell);
    let mut o: Vec<f64> = r.iter().map(|a| -a).collect();
    let mut rr: f64 = r.iter().map(|a| a * a).sum();
    let mut delta = rr;
    let r0_norm = rr.sqrt();
    let target = r0_norm * r0_norm.powf(params.theta).min(params.kappa);
    let lin_not_sup = r0_norm.powf(params.theta) > params.kappa;

    // Maintained alongside the CG recurrences: d̄ = v̄ + w, the bar rows of
    // 𝔅d, the quadratic form ⟨d, 𝔅d⟩, and ⟨∇f, d⟩.
    let mut dbar = model.vbar.clone();
    let mut tbar = model.zbar.clone();
    let mut qform = model.v_bv;
    let mut grad_dot_d = model.grad_dot_v;

    let mut i = 0usize;
    loop {
        // p = ℬ o, q = P p.
        let omat = DenseMat::from_vec(j, 1, o.clone());
        let p = model.calb.matmul(&omat);
        let q = model.project(p.as_slice());
        let oq: f64 = o.iter().zip(&q).map(|(a, b)| a * b).sum();
        if !oq.is_finite() {
            return Err(NewtonError::NonFinite("tcg curvature"));
        }
        let neg_cut = if params.disable_early_exits {
            0.0
        } else {
            params.vartheta * delta
        };
        if oq <= neg_cut {
            return done(w, TcgStatus::Neg, i, trace);
        }
        let alpha = rr / oq;
        let w_next: Vec<f64> = w.iter().zip(&o).map(|(wi, oi)| wi + alpha * oi).collect();
        let r_next: Vec<f64> = r.iter().zip(&q).map(|(ri, qi)| ri + alpha * qi).collect();
        // d_{i+1} and 𝔅d_{i+1} bookkeeping (t_{i+1} = 𝔅 d_{i+1}).
        let o_dot_tbar: f64 = o.iter().zip(&tbar).map(|(a, b)| a * b).sum();
        let o_dot_p: f64 = o.iter().zip(p.as_slice()).map(|(a, b)| a * b).sum();
        let qform_next = qform + 2.0 * alpha * o_dot_tbar + alpha * alpha * o_dot_p;
        for (tb, pk) in tbar.iter_mut().zip(p.as_slice()) {
            *tb += alpha * pk;
        }
        for (db, oi) in dbar.iter_mut().zip(&o) {
            *db += alpha * oi;
        }
        let g_dot_o: f64 = model.grad_bar.iter().zip(&o).map(|(a, b)| a * b).sum();
        let grad_dot_d_next = grad_dot_d + alpha * g_dot_o;
        let dnorm2 = dbar.iter().map(|a| a * a).sum::<f64>() + model.vhat_norm2;
        let g_d = model.g_incremental(&dbar, qform_next, grad_dot_d_next);
        if !g_d.is_finite() {
            return Err(NewtonError::NonFinite("tcg model value"));
        }
        if !params.disable_early_exits
            && (qform_next + model.tau * model.vhat_norm2 < params.gamma * dnorm2 || g_d > g0)
        {
            // Return w_i, not w_{i+1}.
            return done(w, TcgStatus::Early3, i, trace);
        }
        if let Some(tr) = trace.as_mut() {
            tr.w_iterates.push(w_next.clone());
            tr.g_values.push(g_d);
        }
        let rr_next: f64 = r_next.iter().map(|a| a * a).sum();
        let beta = rr_next / rr;
        for (oi, ri) in o.iter_mut().zip(&r_next) {
            *oi = -ri + beta * *oi;
        }
        delta = rr_next + beta * beta * delta;
        w = w_next;
        r = r_next;
        rr = rr_next;
        qform = qform_next;
        grad_dot_d = grad_dot_d_next;
        i += 1;
        if rr.sqrt() <= target {
            let status = if lin_not_sup {
                TcgStatus::Lin
            } else {
                TcgStatus::Sup
            };
            return done(w, status, i, trace);
        }
        if i >= j {
            return done(w, TcgStatus::Lin, i, trace);
        }
    }
}

/// (4 + 1/t)‖d‖_F < ‖v‖_F: the step-quality gate that shrinks t when the CG
/// direction collapsed relative to the proximal gradient direction.
pub fn check_d_norm_gate(d: &DenseMat, v: &DenseMat, t: f64) -> bool {
    assert!(t > 0.0);
    (4.0 + 1.0 / t) * d.norm() < v.norm()
}

/// Assemble the ambient search direction d = (v̄ + w, v̂).
pub fn assemble_direction(model: &PartitionedModel, w: &[f64], shape: (usize, usize)) -> DenseMat {
    let dbar: Vec<f64> = model.vbar.iter().zip(w).map(|(v, wi)| v + wi).collect();
    model.part.scatter(&dbar, &model.vhat, shape)
}

/// Exact reduced Newton solve:
///   [B̄B̄† + t(I − B̄B̄†)ℬ] ū = v̄ − t(I − B̄B̄†)𝔅^{(12)}v̂,  û = v̂,
/// by dense LU with partial pivoting. Requires B̄ full column rank.
pub fn direct_newton_u(
    model: &PartitionedModel,
    shape: (usize, usize),
) -> Result<DenseMat, NewtonError> {
    let q = model.proj_q.as_ref().ok_or(NewtonError::RankDeficient)?;
    let j = model.part.j();
    let t = model.t;
    // B̄B̄† = QQᵀ for the thin-QR Q of a full-column-rank B̄.
    let qqt = if q.cols() == 0 {
        DenseMat::zeros(j, j)
    } else {
        q.matmul_t(q)
    };
    let mut a = model.calb.sub(&qqt.matmul(&model.calb)).scale(t);
    a.axpy(1.0, &qqt);
    // 𝔅^{(12)} v̂ = z̄ − ℬ v̄.
    let vbar_mat = DenseMat::from_vec(j, 1, model.vbar.clone());
    let calb_vbar = model.calb.matmul(&vbar_mat);
    let b12_vhat: Vec<f64> = model
        .zbar
        .iter()
        .zip(calb_vbar.as_slice())
        .map(|(z, c)| z - c)
        .collect();
    let pb = model.project(&b12_vhat);
    let rhs: Vec<f64> = model
        .vbar
        .iter()
        .zip(&pb)
        .map(|(v, p)| v - t * p)
        .collect();
    let ubar = lu_solve(&a, &rhs).ok_or(NewtonError::Singular)?;
    if ubar.iter().any(|u| !u.is_finite()) {
        return Err(NewtonError::NonFinite("direct newton solve"));
    }
    Ok(model.part.scatter(&ubar, &model.vhat, shape))
}

/// Closed-form solution of min_{Bᵀw=0} ⟨ℓ, w⟩ + ½⟨w, (I+Y)w⟩:
///   w* = −[I + (I − BB†)Y]⁻¹ (I − BB†) ℓ,
/// valid when B has full column rank and I+Y is positive definite on
/// null(Bᵀ).
pub fn lemma_w_closed_form(
    y: &DenseMat,
    b: &DenseMat,
    ell: &[f64],
) -> Result<Vec<f64>, NewtonError> {
    let j = y.rows();
    assert_eq!(y.cols(), j);
    assert_eq!(b.rows(), j);
    assert_eq!(ell.len(), j);
    let bbdag = if b.cols() == 0 {
        DenseMat::zeros(j, j)
    } else {
        b.matmul(&pinv(b))
    };
    let p = DenseMat::identity(j).sub(&bbdag);
    let mut a = DenseMat::identity(j);
    a.axpy(1.0, &p.matmul(y));
    let ell_mat = DenseMat::from_vec(j, 1, ell.to_vec());
    let rhs = p.matmul(&ell_mat);
    let w = lu_solve(&a, rhs.as_slice()).ok_or(NewtonError::Singular)?;
    Ok(w.iter().map(|a| -a).collect())
}
