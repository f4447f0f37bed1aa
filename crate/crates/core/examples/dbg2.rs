use rpncg::datagen::{center_normalize_columns, gen_random_data};
use rpncg::newton::{assemble_model, estimate_support, tcg, TcgParams};
use rpncg::numerics::{qf, sym_eig};
use rpncg::objectives::spca_problem;
use rpncg::prox::solve_v;
use std::time::Instant;

fn main() {
    let a = center_normalize_columns(&gen_random_data(50, 400, 4));
    let problem = spca_problem(&a, 8, 0.8);
    let config = rpncg::solvers::SolverConfig::for_problem(&problem);
    // Reach a mid-run iterate.
    let g = a.matmul_t(&a);
    let (eigs, u) = sym_eig(&g).unwrap();
    let mut v0 = rpncg::DenseMat::zeros(400, 8);
    for j in 0..8 {
        let uj = rpncg::DenseMat::from_vec(50, 1, u.col(j).to_vec());
        let col = a.t_matmul(&uj).scale(1.0 / eigs[j].sqrt());
        for i in 0..400 {
            v0.set(i, j, col.get(i, 0));
        }
    }
    let x0 = qf(&v0).unwrap();
    let mut cfg = config.clone();
    cfg.max_outer = 120;
    let warm = rpncg::solvers::rpn_cg_solve(&problem, x0, &cfg).unwrap();
    let x = warm.x_final.clone();
    let t = 1.0 / problem.smooth.lipschitz();

    let reps = 50;
    let t0 = Instant::now();
    let mut sub = None;
    for _ in 0..reps {
        let (__, egrad) = problem.smooth.eval_and_grad(&x);
        sub = Some(solve_v(problem.manifold.as_ref(), &x, &egrad, t, problem.mu, 1e-14, None).unwrap());
    }
    println!("eval+solve_v: {:.3} ms", t0.elapsed().as_secs_f64() / reps as f64 * 1e3);
    let sub = sub.unwrap();
    let (fx, egrad) = problem.smooth.eval_and_grad(&x);

    let part0 = estimate_support(&x, &sub).unwrap();
    println!("j = {}, m = {}", part0.j(), problem.manifold.normal_dim());
    let t0 = Instant::now();
    let mut model = None;
    for _ in 0..reps {
        let part = estimate_support(&x, &sub).unwrap();
        model = Some(assemble_model(&problem, &x, &sub, part, t, 100.0, &egrad, fx).unwrap());
    }
    println!("estimate+assemble: {:.3} ms", t0.elapsed().as_secs_f64() / reps as f64 * 1e3);
    let model = model.unwrap();

    let t0 = Instant::now();
    let mut iters = 0;
    for _ in 0..reps {
        let out = tcg(&model, &TcgParams::default()).unwrap();
        iters = out.cg_iters;
    }
    println!("tcg ({iters} iters): {:.3} ms", t0.elapsed().as_secs_f64() / reps as f64 * 1e3);

    let t0 = Instant::now();
    for _ in 0..reps {
        let _ = problem.smooth.eval_and_grad(&x);
    }
    println!("eval_and_grad: {:.3} ms", t0.elapsed().as_secs_f64() / reps as f64 * 1e3);

    let t0 = Instant::now();
    for _ in 0..reps {
        let _ = problem.manifold.retract(&x, &sub.v).unwrap();
    }
    println!("retract: {:.3} ms", t0.elapsed().as_secs_f64() / reps as f64 * 1e3);
}
