//! The Riemannian proximal-gradient subproblem
//!
//!   v(x) = argmin_{v ∈ T_xM} ⟨∇f(x), v⟩ + ‖v‖²/(2t) + μ‖x + v‖₁,
//!
//! solved through its multiplier equation
//!
//!   Ψ(λ) = Bᵀ( prox_{tμ}( x − t[∇f(x) + Bλ] ) − x ) = 0
//!
//! by a semismooth Newton iteration on λ with the 0/1 generalized Jacobian
//! t·BᵀMB. Full steps, warm-started λ, squared-norm stopping test.

use crate::manifolds::Manifold;
use crate::mat::DenseMat;
use thiserror::Error;

/// Soft threshold: componentwise max(|zᵢ| − threshold, 0)·sign(zᵢ).
pub fn prox_l1(z: &[f64], threshold: f64) -> Vec<f64> {
    debug_assert!(threshold >= 0.0);
    z.iter()
        .map(|&zi| {
            let m = zi.abs() - threshold;
            if m > 0.0 {
                m * zi.signum()
            } else {
                0.0
            }
        })
        .collect()
}

/// Generalized-Jacobian diagonal of the soft threshold: false (0) where
/// |zᵢ| ≤ threshold, true (1) otherwise. Boundary points take the 0 branch.
pub fn m_diag(z: &[f64], threshold: f64) -> Vec<bool> {
    debug_assert!(threshold >= 0.0);
    z.iter().map(|&zi| zi.abs() > threshold).collect()
}

/// Inner-tolerance schedule for the subproblem, on ‖Ψ(λ)‖²:
/// start at max(1e-13, min(1e-11, 1e-3·√(1e-8·n·r)·t₀²)) and tighten with
/// min(max(1e-30, ‖v_{k−1}‖²·1e-8), previous).
pub fn inner_tolerance(k: usize, prev: f64, v_prev_norm: f64, t0: f64, n: usize, r: usize) -> f64 {
    if k == 0 {
        let tol = 1e-8 * (n * r) as f64;
        (1e-3 * tol.sqrt() * t0 * t0).min(1e-11).max(1e-13)
    } else {
        (v_prev_norm * v_prev_norm * 1e-8).max(1e-30).min(prev)
    }
}

/// Solution of the proximal subproblem at one iterate.
pub struct SubproblemResult {
    /// v(x), tangent up to the solver tolerance.
    pub v: DenseMat,
    /// The exact prox output x + v; its zeros are exact.
    pub x_plus_v: DenseMat,
    /// Multiplier λ(x), length N − d.
    pub lambda: Vec<f64>,
    /// Diagonal of M at the final λ: false exactly where (x+v)ᵢ = 0.
    pub m_diag: Vec<bool>,
    /// ‖Ψ(λ)‖² at the returned λ.
    pub kkt_residual: f64,
    /// Semismooth Newton iterations taken.
    pub inner_iters: usize,
}

#[derive(Debug, Error)]
pub enum SubproblemError {
    #[error("semismooth Newton did not reach tolerance ({residual:.3e} after {iters} iterations)")]
    MaxInnerIterations { residual: f64, iters: usize },
    #[error("singular generalized Jacobian in semismooth Newton")]
    SingularJacobian,
}

const MAX_INNER: usize = 100;

/// Solve the subproblem at x with Euclidean gradient `egrad`, prox parameter
/// t > 0, and tolerance `tol` on ‖Ψ(λ)‖². `warm_lambda`, when given, seeds
/// the multiplier (typically from the previous outer iteration).
pub fn solve_v(
    manifold: &dyn Manifold,
    x: &DenseMat,
    egrad: &DenseMat,
    t: f64,
    mu: f64,
    tol: f64,
    warm_lambda: Option<&[f64]>,
) -> Result<SubproblemResult, SubproblemError> {
    assert!(t > 0.0 && tol > 0.0);
    let ops = manifold.normal_ops(x);
    let m = ops.dim();
    let nn = manifold.ambient_dim();
    let (rows, cols) = manifold.point_shape();
    let thr = t * mu;

    // base = x − t∇f(x); z(λ) = base − t·Bλ.
    let mut base = x.clone();
    base.axpy(-t, egrad);

    let mut lam: Vec<f64> = match warm_lambda {
        Some(w) => {
            assert_eq!(w.len(), m);
            w.to_vec()
        }
        None => vec![0.0; m],
    };

    let eval = |lam: &[f64]| -> (DenseMat, DenseMat, Vec<f64>, f64) {
        let mut z = base.clone();
        if m > 0 {
            z.axpy(-t, &ops.lift(lam));
        }
        let p = DenseMat::from_vec(rows, cols, prox_l1(z.as_slice(), thr));
        let v = p.sub(x);
        let psi = ops.coords(&v);
        let r2: f64 = psi.iter().map(|a| a * a).sum();
        (z, p, psi, r2)
    };

    let (mut z, mut p, mut psi, mut r2) = eval(&lam);
    let mut best_r2 = r2;
    let mut best = (z.clone(), p.clone(), lam.clone());
    let mut increases = 0usize;
    let mut iters = 0usize;

    while r2 > tol {
        if iters >= MAX_INNER || increases >= 3 {
            return Err(SubproblemError::MaxInnerIterations {
                residual: best_r2,
                iters,
            });
        }
        // Newton system (t·BᵀMB + ridge)·δ = Ψ(λ) with M from the current z.
        let mask = m_diag(z.as_slice(), thr);
        let active: Vec<usize> = (0..nn).filter(|&i| mask[i]).collect();
        let brows = ops.rows(&active);
        let mut a = brows.t_matmul(&brows).scale(t);
        let trace: f64 = (0..m).map(|i| a.get(i, i)).sum();
        let ridge = 1e-12 * trace / m.max(1) as f64;
        for i in 0..m {
            a.set(i, i, a.get(i, i) + ridge);
        }
        let delta = crate::mat::lu_solve(&a, &psi).ok_or(SubproblemError::SingularJacobian)?;
        for (l, d) in lam.iter_mut().zip(&delta) {
            *l += d;
        }
        iters += 1;
        let (z2, p2, psi2, r2new) = eval(&lam);
        if r2new > r2 {
            increases += 1;
        } else {
            increases = 0;
        }
        if r2new < best_r2 {
            best_r2 = r2new;
            best = (z2.clone(), p2.clone(), lam.clone());
        }
        z = z2;
        p = p2;
        psi = psi2;
        r2 = r2new;
    }
    let _ = best;
    let mask = m_diag(z.as_slice(), thr);
    Ok(SubproblemResult {
        v: p.sub(x),
        x_plus_v: p,
        lambda: lam,
        m_diag: mask,
        kkt_residual: r2,
        inner_iters: iters,
    })
}
