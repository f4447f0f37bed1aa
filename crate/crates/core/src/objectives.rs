//! Smooth objectives f (value, Euclidean gradient, Euclidean Hessian-vector
//! product) and the composite problems F = f + μ‖·‖₁ used in the benchmarks:
//! sparse PCA on the Stiefel manifold, discretized compressed modes, and
//! modularity-based community detection on the fixed-span manifold.

use crate::manifolds::{CurvedPlane, Manifold, SpanStiefel, Stiefel};
use crate::mat::DenseMat;
use crate::numerics::op_norm_2;
use std::fs;
use std::path::Path;

/// Twice continuously differentiable objective with Lipschitz gradient,
/// everything expressed in the ambient matrix space.
pub trait SmoothObjective: Send + Sync {
    fn eval(&self, x: &DenseMat) -> f64;

    /// Value and Euclidean gradient together. For the quadratic-trace
    /// objectives both come out of a single G·X product, which is what the
    /// line searches lean on.
    fn eval_and_grad(&self, x: &DenseMat) -> (f64, DenseMat);

    fn egrad(&self, x: &DenseMat) -> DenseMat {
        self.eval_and_grad(x).1
    }

    /// Euclidean Hessian applied to an ambient direction.
    fn ehess_vec(&self, x: &DenseMat, eta: &DenseMat) -> DenseMat;

    /// Lipschitz constant L_f of the Euclidean gradient.
    fn lipschitz(&self) -> f64;

    /// Dense block of the Hessian restricted to the given ambient indices on
    /// both sides. The fallback applies `ehess_vec` to unit vectors.
    fn ehess_support_block(&self, x: &DenseMat, support: &[usize]) -> DenseMat {
        let (n, r) = x.shape();
        let j = support.len();
        let mut block = DenseMat::zeros(j, j);
        for (c, &idx) in support.iter().enumerate() {
            let mut e = DenseMat::zeros(n, r);
            e.as_mut_slice()[idx] = 1.0;
            let he = self.ehess_vec(x, &e);
            let hs = he.as_slice();
            for (row, &ridx) in support.iter().enumerate() {
                block.set(row, c, hs[ridx]);
            }
        }
        block
    }
}

/// f(X) = sign · tr(Xᵀ G X) for a cached symmetric G; covers all three
/// benchmark objectives (G = AᵀA, the discretized Schrödinger operator, or
/// the modularity matrix).
pub struct QuadraticTrace {
    g: DenseMat,
    sign: f64,
    lf: f64,
}

impl QuadraticTrace {
    pub fn new(g: DenseMat, sign: f64, lf: f64) -> Self {
        assert_eq!(g.rows(), g.cols());
        QuadraticTrace { g, sign, lf }
    }

    pub fn gram(&self) -> &DenseMat {
        &self.g
    }
}

impl SmoothObjective for QuadraticTrace {
    fn eval(&self, x: &DenseMat) -> f64 {
        self.sign * x.dot(&self.g.matmul(x))
    }

    fn eval_and_grad(&self, x: &DenseMat) -> (f64, DenseMat) {
        let gx = self.g.matmul(x);
        let f = self.sign * x.dot(&gx);
        (f, gx.scale(2.0 * self.sign))
    }

    fn ehess_vec(&self, _x: &DenseMat, eta: &DenseMat) -> DenseMat {
        self.g.matmul(eta).scale(2.0 * self.sign)
    }

    fn lipschitz(&self) -> f64 {
        self.lf
    }

    fn ehess_support_block(&self, x: &DenseMat, support: &[usize]) -> DenseMat {
        // The Hessian is 2·sign·(G ⊗ I_r) in column-major ambient indexing:
        // entry ((a,b),(a',b')) = 2·sign·G_{aa'}·δ_{bb'}. Only index pairs
        // in the same matrix column are nonzero, so work column group by
        // column group.
        let (n, r) = x.shape();
        let j = support.len();
        let s = 2.0 * self.sign;
        let mut groups: Vec<Vec<(usize, usize)>> = vec![Vec::new(); r];
        for (pos, &kin) in support.iter().enumerate() {
            groups[kin / n].push((pos, kin % n));
        }
        let mut block = DenseMat::zeros(j, j);
        for group in &groups {
            for &(cc, ap) in group {
                for &(rr, a) in group {
                    block.set(rr, cc, s * self.g.get(a, ap));
                }
            }
        }
        block
    }
}

/// The Example-1 objective on the curved plane:
/// f(x) = x₁² − 3x₁ + 1 + x₂².
pub struct CurvedPlaneQuadratic;

impl SmoothObjective for CurvedPlaneQuadratic {
    fn eval(&self, x: &DenseMat) -> f64 {
        let (a, b) = (x.get(0, 0), x.get(1, 0));
        a * a - 3.0 * a + 1.0 + b * b
    }

    fn eval_and_grad(&self, x: &DenseMat) -> (f64, DenseMat) {
        let (a, b) = (x.get(0, 0), x.get(1, 0));
        let g = DenseMat::from_vec(2, 1, vec![2.0 * a - 3.0, 2.0 * b]);
        (a * a - 3.0 * a + 1.0 + b * b, g)
    }

    fn ehess_vec(&self, _x: &DenseMat, eta: &DenseMat) -> DenseMat {
        eta.scale(2.0)
    }

    fn lipschitz(&self) -> f64 {
        2.0
    }
}

/// Which benchmark family a problem came from; fixes termination defaults.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemKind {
    SparsePca,
    CompressedModes,
    CommunityDetection,
    Custom,
}

/// The composite problem min F(x) = f(x) + μ‖x‖₁ over a manifold.
pub struct CompositeProblem {
    pub smooth: Box<dyn SmoothObjective>,
    pub manifold: Box<dyn Manifold>,
    pub mu: f64,
    pub kind: ProblemKind,
}

impl CompositeProblem {
    pub fn new(
        smooth: Box<dyn SmoothObjective>,
        manifold: Box<dyn Manifold>,
        mu: f64,
        kind: ProblemKind,
    ) -> Self {
        // μ = 0 is allowed as the degenerate smooth case; the benchmark
        // constructors require μ > 0.
        assert!(mu >= 0.0, "mu must be nonnegative");
        CompositeProblem {
            smooth,
            manifold,
            mu,
            kind,
        }
    }

    /// h(x) = μ‖x‖₁.
    pub fn h(&self, x: &DenseMat) -> f64 {
        self.mu * x.norm_l1()
    }

    /// F(x) = f(x) + h(x); the one composite evaluator everything shares.
    pub fn f_total(&self, x: &DenseMat) -> f64 {
        self.smooth.eval(x) + self.h(x)
    }
}

/// Sparse PCA: min −tr(XᵀAᵀAX) + μ‖X‖₁ over St(r, n) for a data matrix
/// A ∈ R^{m×n}. AᵀA is formed once and cached; L_f = 2σ_max(A)².
pub fn spca_problem(a: &DenseMat, r: usize, mu: f64) -> CompositeProblem {
    let (m, n) = a.shape();
    assert!(r <= m.min(n), "r must be at most min(m, n)");
    assert!(mu > 0.0);
    let sigma = op_norm_2(a, 100);
    let g = a.t_matmul(a);
    CompositeProblem::new(
        Box::new(QuadraticTrace::new(g, -1.0, 2.0 * sigma * sigma)),
        Box::new(Stiefel::new(n, r)),
        mu,
        ProblemKind::SparsePca,
    )
}

/// The free-electron discretized Schrödinger operator H = −½D₂ on a periodic
/// grid of n points over [0, domain_length], D₂ the 3-point Laplacian.
pub fn schrodinger_operator(n: usize, domain_length: f64) -> DenseMat {
    assert!(n >= 3);
    let delta = domain_length / n as f64;
    let d2 = 1.0 / (delta * delta);
    let mut h = DenseMat::zeros(n, n);
    for i in 0..n {
        h.set(i, i, d2);
        let up = (i + 1) % n;
        let dn = (i + n - 1) % n;
        h.set(i, up, h.get(i, up) - 0.5 * d2);
        h.set(i, dn, h.get(i, dn) - 0.5 * d2);
    }
    h
}

/// Compressed modes: min tr(XᵀHX) + μ‖X‖₁ over St(r, n) with the periodic
/// free-electron Hamiltonian; L_f = 2‖H‖₂.
pub fn cm_problem(n: usize, r: usize, mu: f64, domain_length: f64) -> CompositeProblem {
    assert!(mu > 0.0);
    let h = schrodinger_operator(n, domain_length);
    let lf = 2.0 * op_norm_2(&h, 100);
    CompositeProblem::new(
        Box::new(QuadraticTrace::new(h, 1.0, lf)),
        Box::new(Stiefel::new(n, r)),
        mu,
        ProblemKind::CompressedModes,
    )
}

/// Modularity matrix M = A − ddᵀ/(2mₑ) of an undirected simple graph.
pub fn modularity_matrix(adjacency: &DenseMat) -> Result<DenseMat, String> {
    let n = adjacency.rows();
    if adjacency.cols() != n {
        return Err("adjacency must be square".into());
    }
    for i in 0..n {
        if adjacency.get(i, i) != 0.0 {
            return Err(format!("adjacency has a nonzero diagonal at {i}"));
        }
        for j in 0..n {
            let v = adjacency.get(i, j);
            if v != 0.0 && v != 1.0 {
                return Err(format!("adjacency entry ({i},{j}) = {v} is not 0/1"));
            }
            if (v - adjacency.get(j, i)).abs() != 0.0 {
                return Err(format!("adjacency not symmetric at ({i},{j})"));
            }
        }
    }
    let deg: Vec<f64> = (0..n)
        .map(|i| (0..n).map(|j| adjacency.get(i, j)).sum())
        .collect();
    let two_m: f64 = deg.iter().sum();
    if two_m == 0.0 {
        return Err("graph has no edges".into());
    }
    let mut m = adjacency.clone();
    for j in 0..n {
        for i in 0..n {
            m.set(i, j, m.get(i, j) - deg[i] * deg[j] / two_m);
        }
    }
    Ok(m)
}

/// Community detection: min −tr(XᵀMX) + μ‖X‖₁ over F_{1ₙ} with M the
/// modularity matrix.
pub fn cd_problem(adjacency: &DenseMat, r: usize, mu: f64) -> Result<CompositeProblem, String> {
    let n = adjacency.rows();
    let m = modularity_matrix(adjacency)?;
    let lf = 2.0 * op_norm_2(&m, 100);
    Ok(CompositeProblem::new(
        Box::new(QuadraticTrace::new(m, -1.0, lf)),
        Box::new(SpanStiefel::ones(n, r)),
        mu,
        ProblemKind::CommunityDetection,
    ))
}

/// The Example-1 composite on the curved plane with μ = 1; its minimizer is
/// (1, 0).
pub fn curved_plane_problem() -> CompositeProblem {
    CompositeProblem::new(
        Box::new(CurvedPlaneQuadratic),
        Box::new(CurvedPlane::new()),
        1.0,
        ProblemKind::Custom,
    )
}

/// Read an undirected edge list: one "u v" pair per line, 1-based vertex
/// ids bounded by `n`, duplicate edges ignored.
pub fn read_edge_list(path: &Path, n: usize) -> Result<DenseMat, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut adj = DenseMat::zeros(n, n);
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut it = line.split_whitespace();
        let u: usize = it
            .next()
            .ok_or_else(|| format!("line {}: missing vertex", lineno + 1))?
            .parse()
            .map_err(|e| format!("line {}: {e}", lineno + 1))?;
        let v: usize = it
            .next()
            .ok_or_else(|| format!("line {}: missing second vertex", lineno + 1))?
            .parse()
            .map_err(|e| format!("line {}: {e}", lineno + 1))?;
        if u == 0 || v == 0 || u > n || v > n {
            return Err(format!("line {}: vertex id out of range 1..={n}", lineno + 1));
        }
        if u == v {
            return Err(format!("line {}: self-loop at {u}", lineno + 1));
        }
        adj.set(u - 1, v - 1, 1.0);
        adj.set(v - 1, u - 1, 1.0);
    }
    Ok(adj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{gen_random_data, rng_for_seed};
    use crate::numerics::sym_eig;
    use rand::Rng;

    /// Central finite difference of f along a direction.
    fn fd_dir(f: &dyn SmoothObjective, x: &DenseMat, eta: &DenseMat, h: f64) -> f64 {
        let mut xp = x.clone();
        xp.axpy(h, eta);
        let mut xm = x.clone();
        xm.axpy(-h, eta);
        (f.eval(&xp) - f.eval(&xm)) / (2.0 * h)
    }

    #[test]
    fn spca_identity_data() {
        let a = DenseMat::identity(2);
        let p = spca_problem(&a, 1, 0.5);
        let x = DenseMat::from_vec(2, 1, vec![1.0, 0.0]);
        assert!((p.smooth.eval(&x) + 1.0).abs() < 1e-14);
        let g = p.smooth.egrad(&x);
        assert!((g.get(0, 0) + 2.0).abs() < 1e-14);
        assert!(g.get(1, 0).abs() < 1e-14);
    }

    #[test]
    fn spca_trace_invariance_under_rotation() {
        let a = gen_random_data(6, 5, 1);
        let p = spca_problem(&a, 2, 0.7);
        let x = crate::datagen::random_orthonormal(5, 2, &mut rng_for_seed(2));
        let th: f64 = 0.3;
        let o = DenseMat::from_rows(2, 2, &[th.cos(), -th.sin(), th.sin(), th.cos()]);
        let xo = x.matmul(&o);
        assert!((p.smooth.eval(&x) - p.smooth.eval(&xo)).abs() < 1e-10);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = rng_for_seed(3);
        let problems: Vec<CompositeProblem> = vec![
            spca_problem(&gen_random_data(8, 10, 4), 3, 0.5),
            cm_problem(12, 2, 0.1, 50.0),
            {
                // Ring graph adjacency.
                let n = 9;
                let mut adj = DenseMat::zeros(n, n);
                for i in 0..n {
                    adj.set(i, (i + 1) % n, 1.0);
                    adj.set((i + 1) % n, i, 1.0);
                }
                cd_problem(&adj, 2, 0.2).unwrap()
            },
        ];
        for p in &problems {
            let (n, r) = p.manifold.point_shape();
            for _ in 0..20 {
                let x = crate::datagen::gen_standard_normal(n, r, &mut rng);
                let eta = crate::datagen::gen_standard_normal(n, r, &mut rng);
                let (_, g) = p.smooth.eval_and_grad(&x);
                let fd = fd_dir(p.smooth.as_ref(), &x, &eta, 1e-5);
                let an = g.dot(&eta);
                assert!(
                    (fd - an).abs() <= 1e-5 * an.abs().max(1.0),
                    "gradient fd {fd} vs analytic {an}"
                );
                // Hessian-vector: linear, self-adjoint, matches gradient differences.
                let zeta = crate::datagen::gen_standard_normal(n, r, &mut rng);
                let he = p.smooth.ehess_vec(&x, &eta);
                let hz = p.smooth.ehess_vec(&x, &zeta);
                assert!((he.dot(&zeta) - hz.dot(&eta)).abs() <= 1e-8 * he.norm().max(1.0));
                let h = 1e-5;
                let mut xp = x.clone();
                xp.axpy(h, &eta);
                let mut xm = x.clone();
                xm.axpy(-h, &eta);
                let gd = p
                    .smooth
                    .egrad(&xp)
                    .sub(&p.smooth.egrad(&xm))
                    .scale(1.0 / (2.0 * h));
                assert!(gd.sub(&he).norm() <= 1e-4 * he.norm().max(1.0));
            }
        }
    }

    #[test]
    fn hessian_support_block_matches_generic() {
        let mut rng = rng_for_seed(9);
        let p = spca_problem(&gen_random_data(6, 7, 8), 2, 0.5);
        let x = crate::datagen::gen_standard_normal(7, 2, &mut rng);
        let support: Vec<usize> = (0..14).filter(|_| rng.gen_bool(0.5)).collect();
        let fast = p.smooth.ehess_support_block(&x, &support);
        // Generic fallback path.
        struct Wrap<'a>(&'a dyn SmoothObjective);
        impl SmoothObjective for Wrap<'_> {
            fn eval(&self, x: &DenseMat) -> f64 {
                self.0.eval(x)
            }
            fn eval_and_grad(&self, x: &DenseMat) -> (f64, DenseMat) {
                self.0.eval_and_grad(x)
            }
            fn ehess_vec(&self, x: &DenseMat, eta: &DenseMat) -> DenseMat {
                self.0.ehess_vec(x, eta)
            }
            fn lipschitz(&self) -> f64 {
                self.0.lipschitz()
            }
        }
        let slow = Wrap(p.smooth.as_ref()).ehess_support_block(&x, &support);
        assert!(fast.sub(&slow).norm() < 1e-12);
    }

    #[test]
    fn cm_constant_column_in_kernel() {
        let n = 16;
        let h = schrodinger_operator(n, 50.0);
        assert_eq!(h.sym_defect(), 0.0);
        let ones = DenseMat::from_vec(n, 1, vec![1.0 / (n as f64).sqrt(); n]);
        assert!(h.matmul(&ones).norm() < 1e-12);
        let p = cm_problem(n, 1, 0.1, 50.0);
        assert!(p.smooth.eval(&ones).abs() < 1e-12);
    }

    #[test]
    fn cm_spectrum_matches_analytic() {
        let n = 8;
        let l = 50.0;
        let h = schrodinger_operator(n, l);
        let (mut eigs, _) = sym_eig(&h).unwrap();
        eigs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let delta = l / n as f64;
        let mut expect: Vec<f64> = (0..n)
            .map(|k| 2.0 / (delta * delta) * (std::f64::consts::PI * k as f64 / n as f64).sin().powi(2))
            .collect();
        expect.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (e, x) in eigs.iter().zip(&expect) {
            assert!((e - x).abs() <= 1e-9 * x.max(1.0), "eig {e} vs analytic {x}");
        }
    }

    #[test]
    fn modularity_identities() {
        // Two disconnected triangles.
        let n = 6;
        let mut adj = DenseMat::zeros(n, n);
        for &(u, v) in &[(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5)] {
            adj.set(u, v, 1.0);
            adj.set(v, u, 1.0);
        }
        let m = modularity_matrix(&adj).unwrap();
        // Rows sum to zero and degrees match A·1.
        let ones = DenseMat::from_vec(n, 1, vec![1.0; n]);
        assert!(m.matmul(&ones).norm() < 1e-12);
        let d = adj.matmul(&ones);
        for i in 0..n {
            assert_eq!(d.get(i, 0), 2.0);
        }
        // Indicator-derived X beats a spread-out X on f = −tr(XᵀMX).
        let p = cd_problem(&adj, 2, 0.1).unwrap();
        let s3 = 1.0 / 3.0f64.sqrt();
        let xind = DenseMat::from_vec(
            n,
            2,
            vec![s3, s3, s3, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, s3, s3, s3],
        );
        let s6 = 1.0 / 6.0f64.sqrt();
        let xflat = DenseMat::from_vec(
            n,
            2,
            vec![s6, s6, s6, s6, s6, s6, s6, -s6, s6, -s6, s6, -s6],
        );
        assert!(p.smooth.eval(&xind) < p.smooth.eval(&xflat));
    }

    #[test]
    fn cd_rejects_empty_graph() {
        let adj = DenseMat::zeros(4, 4);
        assert!(cd_problem(&adj, 2, 0.1).is_err());
    }

    #[test]
    fn edge_list_roundtrip() {
        let dir = std::env::temp_dir().join("rpncg_edge_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("g.txt");
        std::fs::write(&path, "1 2\n2 3\n1 2\n\n3 1\n").unwrap();
        let adj = read_edge_list(&path, 4).unwrap();
        assert_eq!(adj.get(0, 1), 1.0);
        assert_eq!(adj.get(2, 0), 1.0);
        assert_eq!(adj.get(3, 3), 0.0);
        std::fs::write(&path, "1 1\n").unwrap();
        assert!(read_edge_list(&path, 4).is_err());
        std::fs::write(&path, "1 9\n").unwrap();
        assert!(read_edge_list(&path, 4).is_err());
    }
}
