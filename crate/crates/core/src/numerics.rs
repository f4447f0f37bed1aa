//! Shared dense linear-algebra kernels: QR, null spaces, pseudo-inverse,
//! symmetric eigendecomposition, inverse matrix square root, operator norm.
//!
//! Everything here is deterministic. In particular the QR sign convention
//! (diagonal of R nonnegative) is fixed so qf(·) and the retractions built on
//! it produce bit-identical results for identical inputs.

use crate::mat::DenseMat;
use thiserror::Error;

/// Relative rank tolerance shared by the rank-revealing routines.
pub const RANK_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum NumericsError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("matrix is not symmetric (defect {0:.3e})")]
    NotSymmetric(f64),
    #[error("matrix is not positive definite (eigenvalue {0:.3e})")]
    NotPositiveDefinite(f64),
}

/// Householder reflectors of a QR factorization, column by column.
struct Reflectors {
    // Each reflector j acts on rows j.. of the working matrix; v[j] holds the
    // (unnormalized) Householder vector, beta[j] = 2/⟨v,v⟩.
    v: Vec<Vec<f64>>,
    beta: Vec<f64>,
}

fn householder_factor(a: &DenseMat, steps: usize) -> (DenseMat, Reflectors) {
    let m = a.rows();
    let mut r = a.clone();
    let mut refl = Reflectors {
        v: Vec::with_capacity(steps),
        beta: Vec::with_capacity(steps),
    };
    for j in 0..steps {
        let mut norm2 = 0.0;
        for i in j..m {
            let x = r.get(i, j);
            norm2 += x * x;
        }
        let norm = norm2.sqrt();
        if norm == 0.0 {
            refl.v.push(Vec::new());
            refl.beta.push(0.0);
            continue;
        }
        let x0 = r.get(j, j);
        let alpha = if x0 >= 0.0 { -norm } else { norm };
        let mut v = vec![0.0; m - j];
        v[0] = x0 - alpha;
        for i in (j + 1)..m {
            v[i - j] = r.get(i, j);
        }
        let vtv: f64 = v.iter().map(|a| a * a).sum();
        let beta = if vtv > 0.0 { 2.0 / vtv } else { 0.0 };
        // Apply I − β v vᵀ to the remaining columns.
        for c in j..r.cols() {
            let col = r.col_mut(c);
            let mut dot = 0.0;
            for (k, vk) in v.iter().enumerate() {
                dot += vk * col[j + k];
            }
            let s = beta * dot;
            for (k, vk) in v.iter().enumerate() {
                col[j + k] -= s * vk;
            }
        }
        r.set(j, j, alpha);
        for i in (j + 1)..m {
            r.set(i, j, 0.0);
        }
        refl.v.push(v);
        refl.beta.push(beta);
    }
    (r, refl)
}

fn accumulate_q(m: usize, qcols: usize, refl: &Reflectors) -> DenseMat {
    let mut q = DenseMat::zeros(m, qcols);
    for j in 0..qcols.min(m) {
        q.set(j, j, 1.0);
    }
    for j in (0..refl.v.len()).rev() {
        let v = &refl.v[j];
        let beta = refl.beta[j];
        if v.is_empty() || beta == 0.0 {
            continue;
        }
        for c in 0..qcols {
            let col = q.col_mut(c);
            let mut dot = 0.0;
            for (k, vk) in v.iter().enumerate() {
                dot += vk * col[j + k];
            }
            let s = beta * dot;
            for (k, vk) in v.iter().enumerate() {
                col[j + k] -= s * vk;
            }
        }
    }
    q
}

/// Flip signs so that diag(R) ≥ 0, compensating in the matching Q columns.
fn fix_signs(q: &mut DenseMat, r: &mut DenseMat) {
    for j in 0..r.rows().min(r.cols()).min(q.cols()) {
        if r.get(j, j) < 0.0 {
            for c in j..r.cols() {
                let v = -r.get(j, c);
                r.set(j, c, v);
            }
            for i in 0..q.rows() {
                let v = -q.get(i, j);
                q.set(i, j, v);
            }
        }
    }
}

/// Thin QR of an m×k matrix with m ≥ k: A = Q R with Qᵀ Q = I_k, R upper
/// triangular with nonnegative diagonal.
pub fn thin_qr(a: &DenseMat) -> Result<(DenseMat, DenseMat), NumericsError> {
    let (m, k) = a.shape();
    if m < k {
        return Err(NumericsError::DimensionMismatch(format!(
            "thin_qr needs rows >= cols, got {m}x{k}"
        )));
    }
    let (rfull, refl) = householder_factor(a, k);
    let mut q = accumulate_q(m, k, &refl);
    let mut r = DenseMat::zeros(k, k);
    for j in 0..k {
        for i in 0..=j {
            r.set(i, j, rfull.get(i, j));
        }
    }
    fix_signs(&mut q, &mut r);
    Ok((q, r))
}

/// Full QR: A (m×k) = Q R with Q m×m orthogonal and R m×k upper trapezoidal,
/// diag(R) ≥ 0.
pub fn full_qr(a: &DenseMat) -> (DenseMat, DenseMat) {
    let (m, k) = a.shape();
    let steps = m.min(k);
    let (mut r, refl) = householder_factor(a, steps);
    let mut q = accumulate_q(m, m, &refl);
    fix_signs(&mut q, &mut r);
    (q, r)
}

/// Q factor of the thin QR, the `qf(·)` map. Requires m ≥ k.
pub fn qf(a: &DenseMat) -> Result<DenseMat, NumericsError> {
    thin_qr(a).map(|(q, _)| q)
}

/// Numerical rank from the diagonal of an R factor, relative threshold
/// `eps_r`·max|Rᵢᵢ|.
fn rank_from_r(r: &DenseMat, eps_r: f64) -> usize {
    let p = r.rows().min(r.cols());
    let mut dmax = 0.0f64;
    for i in 0..p {
        dmax = dmax.max(r.get(i, i).abs());
    }
    if dmax == 0.0 {
        return 0;
    }
    (0..p).filter(|&i| r.get(i, i).abs() > eps_r * dmax).count()
}

/// Orthonormal basis of {w ∈ R^j : Bᵀ w = 0} for B ∈ R^{j×m}, as the trailing
/// columns of a full QR of B. Rank decisions use the relative threshold
/// `eps_r`. B = 0 returns the identity.
pub fn null_space_basis(b: &DenseMat, eps_r: f64) -> DenseMat {
    let j = b.rows();
    let (q, r) = full_qr(b);
    let rank = rank_from_r(&r, eps_r);
    let mut out = DenseMat::zeros(j, j - rank);
    for (c, qc) in (rank..j).enumerate() {
        for i in 0..j {
            out.set(i, c, q.get(i, qc));
        }
    }
    out
}

/// Column rank of a matrix via QR (relative threshold [`RANK_TOL`]).
pub fn column_rank(a: &DenseMat) -> usize {
    if a.cols() == 0 || a.rows() == 0 {
        return 0;
    }
    let (_, r) = full_qr(a);
    rank_from_r(&r, RANK_TOL)
}

/// Symmetric eigendecomposition by cyclic Jacobi: S = V diag(λ) Vᵀ with
/// eigenvalues sorted descending and each eigenvector's largest-magnitude
/// entry made positive (deterministic sign).
pub fn sym_eig(s: &DenseMat) -> Result<(Vec<f64>, DenseMat), NumericsError> {
    let n = s.rows();
    if n != s.cols() {
        return Err(NumericsError::DimensionMismatch(format!(
            "sym_eig needs a square matrix, got {}x{}",
            s.rows(),
            s.cols()
        )));
    }
    let scale = s.norm().max(1.0);
    let defect = s.sym_defect();
    if defect > 1e-10 * scale {
        return Err(NumericsError::NotSymmetric(defect));
    }
    let mut a = s.clone();
    let mut v = DenseMat::identity(n);
    let tol = 1e-15 * scale;
    for _sweep in 0..60 {
        let mut off2 = 0.0;
        for q in 0..n {
            for p in 0..q {
                let x = a.get(p, q);
                off2 += 2.0 * x * x;
            }
        }
        if off2.sqrt() <= tol {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a.get(p, q);
                if apq == 0.0 {
                    continue;
                }
                let app = a.get(p, p);
                let aqq = a.get(q, q);
                if apq.abs() <= 1e-18 * (app.abs() + aqq.abs() + 1e-300) {
                    a.set(p, q, 0.0);
                    a.set(q, p, 0.0);
                    continue;
                }
                let tau = (aqq - app) / (2.0 * apq);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    1.0 / (tau - (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let sn = t * c;
                // Columns p and q of A <- A J.
                for k in 0..n {
                    let akp = a.get(k, p);
                    let akq = a.get(k, q);
                    a.set(k, p, c * akp - sn * akq);
                    a.set(k, q, sn * akp + c * akq);
                }
                // Rows p and q of A <- Jᵀ A.
                for k in 0..n {
                    let apk = a.get(p, k);
                    let aqk = a.get(q, k);
                    a.set(p, k, c * apk - sn * aqk);
                    a.set(q, k, sn * apk + c * aqk);
                }
                for k in 0..n {
                    let vkp = v.get(k, p);
                    let vkq = v.get(k, q);
                    v.set(k, p, c * vkp - sn * vkq);
                    v.set(k, q, sn * vkp + c * vkq);
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a.get(j, j).partial_cmp(&a.get(i, i)).unwrap());
    let eigs: Vec<f64> = order.iter().map(|&i| a.get(i, i)).collect();
    let mut vecs = DenseMat::zeros(n, n);
    for (c, &src) in order.iter().enumerate() {
        let mut imax = 0;
        let mut vmax = 0.0f64;
        for i in 0..n {
            let x = v.get(i, src).abs();
            if x > vmax {
                vmax = x;
                imax = i;
            }
        }
        let sign = if v.get(imax, src) < 0.0 { -1.0 } else { 1.0 };
        for i in 0..n {
            vecs.set(i, c, sign * v.get(i, src));
        }
    }
    Ok((eigs, vecs))
}

/// Moore–Penrose pseudo-inverse. Full-column-rank matrices go through thin
/// QR; rank-deficient ones through a symmetric eigendecomposition of AᵀA with
/// rank truncation.
pub fn pinv(a: &DenseMat) -> DenseMat {
    let (m, k) = a.shape();
    if m == 0 || k == 0 {
        return DenseMat::zeros(k, m);
    }
    if m < k {
        return pinv(&a.transpose()).transpose();
    }
    if let Ok((q, r)) = thin_qr(a) {
        if rank_from_r(&r, RANK_TOL) == k {
            // A⁺ = R⁻¹ Qᵀ by back substitution, one column of Qᵀ at a time.
            let qt = q.transpose();
            let mut out = DenseMat::zeros(k, m);
            for c in 0..m {
                let mut x: Vec<f64> = qt.col(c).to_vec();
                for i in (0..k).rev() {
                    let mut s = x[i];
                    for j in (i + 1)..k {
                        s -= r.get(i, j) * x[j];
                    }
                    x[i] = s / r.get(i, i);
                }
                out.col_mut(c).copy_from_slice(&x);
            }
            return out;
        }
    }
    // Rank-deficient: A⁺ = (AᵀA)⁺ Aᵀ via eigendecomposition with truncation.
    let g = a.t_matmul(a);
    let (eigs, v) = sym_eig(&g).expect("AᵀA is symmetric");
    let emax = eigs.first().copied().unwrap_or(0.0).max(0.0);
    let cut = emax * RANK_TOL;
    let mut vl = DenseMat::zeros(k, k);
    for j in 0..k {
        let l = eigs[j];
        let inv = if l > cut { 1.0 / l } else { 0.0 };
        for i in 0..k {
            vl.set(i, j, v.get(i, j) * inv);
        }
    }
    vl.matmul_t(&v).matmul_t(a)
}

/// Inverse square root of a symmetric positive-definite matrix,
/// S^{-1/2} = V diag(λ^{-1/2}) Vᵀ.
pub fn inv_sqrt_spd(s: &DenseMat) -> Result<DenseMat, NumericsError> {
    let (eigs, v) = sym_eig(s)?;
    let n = s.rows();
    if let Some(&emin) = eigs.last() {
        if emin < 1e-14 {
            return Err(NumericsError::NotPositiveDefinite(emin));
        }
    }
    let mut vl = DenseMat::zeros(n, n);
    for j in 0..n {
        let w = 1.0 / eigs[j].sqrt();
        for i in 0..n {
            vl.set(i, j, v.get(i, j) * w);
        }
    }
    let mut out = vl.matmul_t(&v);
    // Products of symmetric factors drift slightly; resymmetrize.
    for j in 0..n {
        for i in 0..j {
            let m = 0.5 * (out.get(i, j) + out.get(j, i));
            out.set(i, j, m);
            out.set(j, i, m);
        }
    }
    Ok(out)
}

/// Largest singular value of A estimated by power iteration on AᵀA, starting
/// from the normalized all-ones vector.
pub fn op_norm_2(a: &DenseMat, iters: usize) -> f64 {
    assert!(iters >= 1);
    let (m, k) = a.shape();
    if m == 0 || k == 0 {
        return 0.0;
    }
    let mut u = DenseMat::from_vec(k, 1, vec![1.0 / (k as f64).sqrt(); k]);
    let mut sigma = 0.0;
    for _ in 0..iters {
        let z = a.matmul(&u);
        sigma = z.norm();
        let w = a.t_matmul(&z);
        let wn = w.norm();
        if wn == 0.0 {
            return 0.0;
        }
        u = w.scale(1.0 / wn);
    }
    sigma
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn randn_mat(rng: &mut ChaCha8Rng, m: usize, k: usize) -> DenseMat {
        use rand_distr::StandardNormal;
        DenseMat::from_vec(m, k, (0..m * k).map(|_| rng.sample(StandardNormal)).collect())
    }

    #[test]
    fn thin_qr_identity() {
        let a = DenseMat::identity(3);
        let (q, r) = thin_qr(&a).unwrap();
        assert!(q.sub(&DenseMat::identity(3)).norm() < 1e-14);
        assert!(r.sub(&DenseMat::identity(3)).norm() < 1e-14);
    }

    #[test]
    fn thin_qr_single_column() {
        let a = DenseMat::from_vec(2, 1, vec![0.0, 2.0]);
        let (q, r) = thin_qr(&a).unwrap();
        assert!((q.get(0, 0) - 0.0).abs() < 1e-14);
        assert!((q.get(1, 0) - 1.0).abs() < 1e-14);
        assert!((r.get(0, 0) - 2.0).abs() < 1e-14);
    }

    #[test]
    fn thin_qr_reconstruction_and_orthonormality() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for trial in 0..100 {
            let (m, k) = match trial % 4 {
                0 => (6, 3),
                1 => (10, 10),
                2 => (8, 1),
                _ => (12, 5),
            };
            let a = randn_mat(&mut rng, m, k);
            let (q, r) = thin_qr(&a).unwrap();
            let res = q.matmul(&r).sub(&a).norm();
            assert!(res <= 1e-12 * a.norm().max(1.0), "residual {res}");
            let qtq = q.t_matmul(&q);
            assert!(qtq.sub(&DenseMat::identity(k)).norm() < 1e-12);
            for i in 0..k {
                assert!(r.get(i, i) >= 0.0, "sign convention violated");
            }
        }
    }

    #[test]
    fn thin_qr_rejects_wide() {
        let a = DenseMat::zeros(2, 3);
        assert!(thin_qr(&a).is_err());
    }

    #[test]
    fn null_space_coordinate_case() {
        // B = e1 in R^{3x1}: null space of Bᵀ is span{e2, e3}.
        let b = DenseMat::from_vec(3, 1, vec![1.0, 0.0, 0.0]);
        let q = null_space_basis(&b, RANK_TOL);
        assert_eq!(q.shape(), (3, 2));
        assert!(b.t_matmul(&q).norm() < 1e-12);
        for j in 0..2 {
            assert!(q.get(0, j).abs() < 1e-12);
        }
    }

    #[test]
    fn null_space_full_rank_and_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let b = randn_mat(&mut rng, 4, 4);
        let q = null_space_basis(&b, RANK_TOL);
        assert_eq!(q.cols(), 0);
        let z = DenseMat::zeros(5, 2);
        let q = null_space_basis(&z, RANK_TOL);
        assert_eq!(q.shape(), (5, 5));
        assert!(q.sub(&DenseMat::identity(5)).norm() < 1e-14);
    }

    #[test]
    fn null_space_rank_deficient_annihilates() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            // Rank-2 j x 4 matrix.
            let j = 7;
            let u = randn_mat(&mut rng, j, 2);
            let w = randn_mat(&mut rng, 2, 4);
            let b = u.matmul(&w);
            let q = null_space_basis(&b, RANK_TOL);
            assert_eq!(q.cols(), j - 2);
            assert!(b.t_matmul(&q).norm() <= 1e-10 * b.norm().max(1.0));
            let p = q.matmul_t(&q);
            assert!(p.matmul(&p).sub(&p).norm() < 1e-10);
            assert!(p.sym_defect() < 1e-10);
        }
    }

    #[test]
    fn pinv_diagonal_and_isometry() {
        let a = DenseMat::from_rows(2, 2, &[2.0, 0.0, 0.0, 0.0]);
        let p = pinv(&a);
        assert!((p.get(0, 0) - 0.5).abs() < 1e-12);
        assert!(p.get(1, 1).abs() < 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (q, _) = thin_qr(&randn_mat(&mut rng, 6, 3)).unwrap();
        let p = pinv(&q);
        assert!(p.sub(&q.transpose()).norm() < 1e-10);
    }

    #[test]
    fn pinv_penrose_identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for trial in 0..100 {
            let a = match trial % 3 {
                0 => randn_mat(&mut rng, 5, 3),
                1 => randn_mat(&mut rng, 3, 5),
                _ => {
                    // Rank-deficient 6x4.
                    let u = randn_mat(&mut rng, 6, 2);
                    let w = randn_mat(&mut rng, 2, 4);
                    u.matmul(&w)
                }
            };
            let p = pinv(&a);
            let s = a.norm().max(1.0);
            assert!(a.matmul(&p).matmul(&a).sub(&a).norm() <= 1e-10 * s);
            assert!(p.matmul(&a).matmul(&p).sub(&p).norm() <= 1e-9 * p.norm().max(1.0));
            assert!(a.matmul(&p).sym_defect() <= 1e-9 * s);
            assert!(p.matmul(&a).sym_defect() <= 1e-9 * s);
        }
    }

    #[test]
    fn sym_eig_recovers_diagonal() {
        let s = DenseMat::from_rows(3, 3, &[3.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, 2.0]);
        let (eigs, v) = sym_eig(&s).unwrap();
        assert!((eigs[0] - 3.0).abs() < 1e-12);
        assert!((eigs[1] - 2.0).abs() < 1e-12);
        assert!((eigs[2] + 1.0).abs() < 1e-12);
        let recon = v
            .matmul(&DenseMat::from_fn(3, 3, |i, j| if i == j { eigs[i] } else { 0.0 }))
            .matmul_t(&v);
        assert!(recon.sub(&s).norm() < 1e-12);
    }

    #[test]
    fn sym_eig_random_reconstruction() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..20 {
            let b = randn_mat(&mut rng, 8, 8);
            let s = b.add(&b.transpose()).scale(0.5);
            let (eigs, v) = sym_eig(&s).unwrap();
            let lam = DenseMat::from_fn(8, 8, |i, j| if i == j { eigs[i] } else { 0.0 });
            let recon = v.matmul(&lam).matmul_t(&v);
            assert!(recon.sub(&s).norm() <= 1e-10 * s.norm().max(1.0));
            assert!(v.t_matmul(&v).sub(&DenseMat::identity(8)).norm() < 1e-10);
        }
    }

    #[test]
    fn inv_sqrt_scalar_and_diagonal() {
        let s = DenseMat::identity(2).scale(4.0);
        let r = inv_sqrt_spd(&s).unwrap();
        assert!(r.sub(&DenseMat::identity(2).scale(0.5)).norm() < 1e-12);
        let s = DenseMat::from_rows(2, 2, &[1.0, 0.0, 0.0, 9.0]);
        let r = inv_sqrt_spd(&s).unwrap();
        assert!((r.get(0, 0) - 1.0).abs() < 1e-12);
        assert!((r.get(1, 1) - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn inv_sqrt_random_residual_and_degenerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let e = randn_mat(&mut rng, 4, 4);
            let s = DenseMat::identity(4).add(&e.t_matmul(&e));
            let r = inv_sqrt_spd(&s).unwrap();
            let should_be_id = r.matmul(&s).matmul(&r);
            assert!(should_be_id.sub(&DenseMat::identity(4)).norm() < 1e-10);
            assert!(r.sym_defect() < 1e-12);
        }
        let s = DenseMat::from_rows(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        assert!(inv_sqrt_spd(&s).is_err());
    }

    #[test]
    fn op_norm_cases() {
        let a = DenseMat::from_rows(2, 2, &[3.0, 0.0, 0.0, 1.0]);
        assert!((op_norm_2(&a, 100) - 3.0).abs() < 1e-9);
        let z = DenseMat::zeros(3, 2);
        assert_eq!(op_norm_2(&z, 10), 0.0);
    }

    #[test]
    fn op_norm_matches_eig_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..10 {
            let a = randn_mat(&mut rng, 20, 14);
            let est = op_norm_2(&a, 200);
            let g = a.t_matmul(&a);
            let (eigs, _) = sym_eig(&g).unwrap();
            let exact = eigs[0].max(0.0).sqrt();
            assert!(
                (est - exact).abs() <= 1e-6 * exact.max(1.0),
                "power iteration {est} vs eig {exact}"
            );
        }
    }
}
