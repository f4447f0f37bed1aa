use rpncg::datagen::{center_normalize_columns, gen_random_data};
use rpncg::numerics::sym_eig;
use rpncg::objectives::spca_problem;

fn spca_init(a: &rpncg::DenseMat, r: usize) -> rpncg::DenseMat {
    let (m, n) = a.shape();
    assert!(m <= n);
    let g = a.matmul_t(a);
    let (eigs, u) = sym_eig(&g).unwrap();
    let mut v = rpncg::DenseMat::zeros(n, r);
    for j in 0..r {
        let uj = rpncg::DenseMat::from_vec(m, 1, u.col(j).to_vec());
        let col = a.t_matmul(&uj).scale(1.0 / eigs[j].max(1e-300).sqrt());
        for i in 0..n {
            v.set(i, j, col.get(i, 0));
        }
    }
    rpncg::numerics::qf(&v).unwrap()
}

fn main() {
    for seed in 0..5u64 {
        let a = center_normalize_columns(&gen_random_data(50, 400, seed));
        let problem = spca_problem(&a, 8, 0.8);
        let config = rpncg::solvers::SolverConfig::for_problem(&problem);
        let x0 = spca_init(&a, 8);
        let run = |name: &str, rep: Result<rpncg::SolveReport, rpncg::solvers::Aborted>| match rep {
            Ok(r) => println!(
                "seed {seed} {name}: conv={} iters={} vnorm={:.2e} F={:.4} sp={:.3} time={:.2}s",
                r.converged, r.iterations, r.final_vnorm, r.final_f, r.sparsity, r.total_time
            ),
            Err(e) => println!("seed {seed} {name} ABORT at {}: {}", e.at_iteration, e.error),
        };
        run("rpn-cg", rpncg::solvers::rpn_cg_solve(&problem, x0.clone(), &config));
        run("ada   ", rpncg::solvers::manpg_solve(&problem, x0.clone(), &config, true));
        run("manpg ", rpncg::solvers::manpg_solve(&problem, x0.clone(), &config, false));
        run(
            "cgh   ",
            rpncg::solvers::hybrid_solve(&problem, x0.clone(), &config, rpncg::solvers::HybridInner::RpnCg),
        );
    }
}
