//! End-to-end solver behaviour on small instances: the curved-plane
//! regression (exact Newton direction, unit-step rejection), trace
//! invariants of the proximal Newton-CG driver, baseline degeneracies, the
//! hybrid switch edge cases, and reproducibility.

use rpncg::datagen::{gen_random_data, random_orthonormal, rng_for_seed};
use rpncg::mat::DenseMat;
use rpncg::newton::{assemble_direction, assemble_model, direct_newton_u, estimate_support, tcg};
use rpncg::objectives::{curved_plane_problem, spca_problem, CompositeProblem, QuadraticTrace};
use rpncg::prox::solve_v;
use rpncg::solvers::{
    backtrack, hybrid_solve, manpg_solve, procrustes_distance, rpn_cg_solve, rpn_solve, sparsity,
    HybridInner, IterRecord, SolverConfig, StepStatus,
};

fn small_spca(seed: u64, n: usize, r: usize, mu: f64) -> (CompositeProblem, DenseMat) {
    let a = gen_random_data(10, n, seed);
    let problem = spca_problem(&a, r, mu);
    let mut rng = rng_for_seed(seed + 500);
    let x0 = random_orthonormal(n, r, &mut rng);
    (problem, x0)
}

/// Rows on which the backtracking branch executed: not a sup step and not
/// entered with flag = 1.
fn backtracking_rows(trace: &[IterRecord]) -> Vec<usize> {
    let mut out = Vec::new();
    for (i, row) in trace.iter().enumerate() {
        if row.status == StepStatus::Term {
            continue;
        }
        let entering_flag = if i == 0 { 0 } else { trace[i - 1].flag };
        let is_sup = row.status.as_str() == "sup";
        if !is_sup && entering_flag != 1 {
            out.push(i);
        }
    }
    out
}

#[test]
fn curved_plane_newton_direction_and_descent_failure() {
    // At x = (1+ε, 0) the exact proximal Newton direction is (−ε, 0); the
    // unit step increases F by exactly 4ε⁴ + ε², so the backtracking test
    // must reject α = 1.
    let problem = curved_plane_problem();
    for eps in [0.1, 0.01, 0.001] {
        let x = DenseMat::from_vec(2, 1, vec![1.0 + eps, 0.0]);
        for t in [0.5, 0.2] {
            let (fx, egrad) = problem.smooth.eval_and_grad(&x);
            let sub = solve_v(
                problem.manifold.as_ref(),
                &x,
                &egrad,
                t,
                problem.mu,
                1e-24,
                None,
            )
            .unwrap();
            let part = estimate_support(&x, &sub).unwrap();
            assert_eq!(part.support, vec![0]);
            let model =
                assemble_model(&problem, &x, &sub, part, t, 100.0, &egrad, fx).unwrap();
            let u = direct_newton_u(&model, (2, 1)).unwrap();
            assert!(
                (u.get(0, 0) + eps).abs() <= 1e-12,
                "u = ({}, {}) for eps {eps}, t {t}",
                u.get(0, 0),
                u.get(1, 0)
            );
            assert!(u.get(1, 0).abs() <= 1e-15);
            // The tCG route gives the same direction here.
            let out = tcg(&model, &rpncg::newton::TcgParams::default()).unwrap();
            let d = assemble_direction(&model, &out.w, (2, 1));
            assert!(d.sub(&u).norm() <= 1e-12);

            // F(R_x(u)) − F(x) = 4ε⁴ + ε².
            let fx_total = problem.f_total(&x);
            let y = problem.manifold.retract(&x, &u).unwrap();
            let increase = problem.f_total(&y) - fx_total;
            let expect = 4.0 * eps.powi(4) + eps * eps;
            assert!(
                (increase - expect).abs() <= 1e-12,
                "increase {increase} vs {expect}"
            );

            // Backtracking rejects the unit step.
            let (alpha, _) = backtrack(&problem, &x, &u, fx_total, 0.001, 0.5, 1.0).unwrap();
            assert!(alpha < 1.0, "unit step accepted at eps {eps}");
        }
    }
}

#[test]
fn rpn_cg_converges_on_small_spca_with_clean_trace() {
    let (problem, x0) = small_spca(3, 20, 2, 0.5);
    let config = SolverConfig::for_problem(&problem);
    let report = rpn_cg_solve(&problem, x0, &config).unwrap();
    assert!(report.converged, "no convergence in {} iters", report.iterations);
    assert!(report.final_vnorm <= config.vnorm_tol);
    assert!(report.iterations < config.max_outer);
    assert!(report.sparsity > 0.0);

    // Trace invariants: t within bounds, Armijo bookkeeping on every
    // backtracking row, F non-increasing over accepted iterates excluding
    // provisional unit steps.
    let trace = &report.trace;
    for row in trace {
        assert!(row.t >= config.t_min - 1e-15 && row.t <= config.t_max + 1e-15);
        assert!(row.f_value.is_finite() && row.v_norm >= 0.0);
    }
    for i in backtracking_rows(trace) {
        if i + 1 >= trace.len() {
            continue;
        }
        let row = &trace[i];
        let next = &trace[i + 1];
        let bound = row.f_value - row.step_size * config.rho1 * row.d_norm * row.d_norm;
        assert!(
            next.f_value <= bound + 1e-10 * bound.abs().max(1.0),
            "Armijo bookkeeping violated at row {i}: {} vs {}",
            next.f_value,
            bound
        );
    }
    let mut last_kept = f64::INFINITY;
    for (i, row) in trace.iter().enumerate() {
        let provisional = i > 0 && trace[i - 1].flag == 1;
        if provisional {
            continue;
        }
        assert!(
            row.f_value <= last_kept + 1e-9 * last_kept.abs().max(1.0),
            "accepted F increased at row {i}: {} after {last_kept}",
            row.f_value
        );
        last_kept = row.f_value;
    }
}

#[test]
fn rpn_cg_terminates_immediately_at_stationary_start() {
    let (problem, x0) = small_spca(5, 16, 2, 0.6);
    let config = SolverConfig::for_problem(&problem);
    let first = rpn_cg_solve(&problem, x0, &config).unwrap();
    assert!(first.converged);
    let again = rpn_cg_solve(&problem, first.x_final.clone(), &config).unwrap();
    assert!(again.converged);
    assert_eq!(again.iterations, 0, "stationary start should not iterate");
}

#[test]
fn manpg_with_zero_mu_is_monotone_descent() {
    // μ = 0 degenerates ManPG to Riemannian gradient descent with the prox
    // inactive; F decreases monotonically.
    let mut rng = rng_for_seed(17);
    let e = gen_random_data(6, 6, 18);
    let g = e.t_matmul(&e);
    let problem = CompositeProblem::new(
        Box::new(QuadraticTrace::new(g, 1.0, 1.0)),
        Box::new(rpncg::manifolds::Stiefel::new(6, 1)),
        0.0,
        rpncg::objectives::ProblemKind::Custom,
    );
    let x0 = random_orthonormal(6, 1, &mut rng);
    let mut config = SolverConfig::for_problem(&problem);
    // Lipschitz placeholder 1.0 in the constructor; set the real step scale.
    config.t_init = 0.05;
    config.t_min = 5e-4;
    config.t_max = 5.0;
    config.max_outer = 300;
    config.vnorm_tol = 1e-9;
    let report = manpg_solve(&problem, x0, &config, false).unwrap();
    let mut prev = f64::INFINITY;
    for row in &report.trace {
        assert!(row.f_value <= prev + 1e-12 * prev.abs().max(1.0));
        prev = row.f_value;
    }
    assert!(report.final_vnorm < 1e-3);
}

#[test]
fn manpg_beats_nothing_but_rpn_cg_beats_manpg() {
    // On a small sparse PCA instance the Newton-CG driver should need far
    // fewer iterations than plain ManPG from the same start.
    let (problem, x0) = small_spca(7, 24, 2, 0.5);
    let mut config = SolverConfig::for_problem(&problem);
    config.vnorm_tol = 1e-9;
    let newton = rpn_cg_solve(&problem, x0.clone(), &config).unwrap();
    let pg = manpg_solve(&problem, x0, &config, false).unwrap();
    assert!(newton.converged);
    assert!(
        newton.iterations * 3 < pg.iterations.max(60),
        "rpn-cg {} vs manpg {}",
        newton.iterations,
        pg.iterations
    );
    // Same minimizer up to an orthogonal factor.
    if pg.converged {
        let d = procrustes_distance(&newton.x_final, &pg.x_final);
        assert!(d <= 1e-2, "procrustes distance {d}");
    }
}

#[test]
fn hybrid_switch_edge_cases() {
    let (problem, x0) = small_spca(9, 18, 2, 0.5);
    let config = SolverConfig::for_problem(&problem);

    // switch_eps = ∞ reproduces the second phase alone, trace and all.
    let mut inf_cfg = config.clone();
    inf_cfg.switch_eps = f64::INFINITY;
    let hybrid = hybrid_solve(&problem, x0.clone(), &inf_cfg, HybridInner::RpnCg).unwrap();
    let pure = rpn_cg_solve(&problem, x0.clone(), &inf_cfg).unwrap();
    assert_eq!(hybrid.iterations, pure.iterations);
    assert_eq!(hybrid.trace.len(), pure.trace.len());
    for (a, b) in hybrid.trace.iter().zip(&pure.trace) {
        assert_eq!(a.v_norm.to_bits(), b.v_norm.to_bits(), "trace diverged");
        assert_eq!(a.f_value.to_bits(), b.f_value.to_bits());
        assert_eq!(a.step_size.to_bits(), b.step_size.to_bits());
    }

    // switch_eps = 0 never switches: identical to ManPG-Ada.
    let mut zero_cfg = config.clone();
    zero_cfg.switch_eps = 0.0;
    zero_cfg.max_outer = 400;
    let hybrid = hybrid_solve(&problem, x0.clone(), &zero_cfg, HybridInner::RpnCg).unwrap();
    let ada = manpg_solve(&problem, x0, &zero_cfg, true).unwrap();
    assert_eq!(hybrid.iterations, ada.iterations);
    for (a, b) in hybrid.trace.iter().zip(&ada.trace) {
        assert_eq!(a.v_norm.to_bits(), b.v_norm.to_bits());
    }
}

#[test]
fn rpn_stays_at_minimizer_and_contracts_quadratically() {
    let (problem, x0) = small_spca(11, 14, 1, 0.4);
    let config = SolverConfig::for_problem(&problem);
    let solved = rpn_cg_solve(&problem, x0, &config).unwrap();
    assert!(solved.converged);
    let xstar = solved.x_final.clone();

    // Machine-precision start: immediate termination.
    let stay = rpn_solve(&problem, xstar.clone(), &config).unwrap();
    assert!(stay.converged);
    assert_eq!(stay.iterations, 0);

    // Perturbed start: per-step error decay is at least quadratic-ish.
    let mut rng = rng_for_seed(77);
    let eta = {
        let raw = rpncg::datagen::gen_standard_normal(14, 1, &mut rng);
        let t = problem.manifold.tangent_project(&xstar, &raw);
        t.scale(3e-2 / t.norm())
    };
    let xpert = problem.manifold.retract(&xstar, &eta).unwrap();
    let report = rpn_solve(&problem, xpert, &config).unwrap();
    assert!(report.converged, "rpn failed near the minimizer: {:?}", report.failure);
    // Fit the contraction over the recorded v norms (v ~ distance scale).
    let vnorms: Vec<f64> = report
        .trace
        .iter()
        .filter(|r| r.v_norm > 1e-14)
        .map(|r| r.v_norm)
        .collect();
    assert!(vnorms.len() >= 3, "too few Newton steps recorded");
    for w in vnorms.windows(2) {
        assert!(
            w[1] <= 0.9 * w[0].powf(1.5),
            "not superlinear: {} -> {}",
            w[0],
            w[1]
        );
    }
}

#[test]
fn backtrack_floor_errors_on_ascent_direction() {
    let (problem, x0) = small_spca(13, 12, 2, 0.5);
    let (_, egrad) = problem.smooth.eval_and_grad(&x0);
    // Scaled up so the F increase along the direction stays far above the
    // line search's fp-noise slack all the way down to the step floor.
    let ascent = problem.manifold.tangent_project(&x0, &egrad).scale(1000.0);
    let f0 = problem.f_total(&x0);
    let err = backtrack(&problem, &x0, &ascent, f0, 0.001, 0.5, 1.0);
    assert!(err.is_err(), "ascent direction should hit the step floor");
}

#[test]
fn procrustes_and_sparsity_basics() {
    let mut rng = rng_for_seed(15);
    let u1 = random_orthonormal(10, 3, &mut rng);
    assert!(procrustes_distance(&u1, &u1) <= 1e-12);
    // Exact alignment after a random rotation.
    let o = random_orthonormal(3, 3, &mut rng);
    let u2 = u1.matmul(&o);
    assert!(procrustes_distance(&u1, &u2) <= 1e-10);
    // Feasibility bound: the optimal O beats the identity.
    let w = random_orthonormal(10, 3, &mut rng);
    assert!(procrustes_distance(&u1, &w) <= u1.sub(&w).norm() + 1e-12);

    let z = DenseMat::zeros(4, 2);
    assert_eq!(sparsity(&z, 1e-5), 1.0);
    let d = DenseMat::from_vec(2, 2, vec![1.0, -2.0, 3.0, 0.5]);
    assert_eq!(sparsity(&d, 0.0), 0.0);
}

#[test]
fn traces_are_bit_reproducible() {
    let (problem, x0) = small_spca(21, 16, 2, 0.5);
    let config = SolverConfig::for_problem(&problem);
    let a = rpn_cg_solve(&problem, x0.clone(), &config).unwrap();
    let b = rpn_cg_solve(&problem, x0, &config).unwrap();
    assert_eq!(a.trace.len(), b.trace.len());
    for (ra, rb) in a.trace.iter().zip(&b.trace) {
        assert_eq!(ra.k, rb.k);
        assert_eq!(ra.f_value.to_bits(), rb.f_value.to_bits());
        assert_eq!(ra.v_norm.to_bits(), rb.v_norm.to_bits());
        assert_eq!(ra.d_norm.to_bits(), rb.d_norm.to_bits());
        assert_eq!(ra.t.to_bits(), rb.t.to_bits());
        assert_eq!(ra.status.as_str(), rb.status.as_str());
    }
}

#[test]
fn rpn_cg_solves_curved_plane_globally() {
    let problem = curved_plane_problem();
    let mut config = SolverConfig::for_problem(&problem);
    config.vnorm_tol = 1e-12;
    let x0 = DenseMat::from_vec(2, 1, vec![2.5, -1.75]);
    let report = rpn_cg_solve(&problem, x0, &config).unwrap();
    assert!(report.converged);
    // Unique minimizer (1, 0).
    assert!((report.x_final.get(0, 0) - 1.0).abs() < 1e-8);
    assert!(report.x_final.get(1, 0).abs() < 1e-8);
}
