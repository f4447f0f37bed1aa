//! The Riemannian proximal Newton-CG driver.
//!
//! Each outer pass: solve the proximal subproblem for v(x); estimate the
//! support of x + v; assemble the reduced model and run the truncated CG;
//! form d = (v̄ + w, v̂); adapt t from the step-quality gate and the tCG
//! status; then either backtrack, or, while the tCG keeps certifying
//! superlinear residual decrease, take unit steps in pairs validated by a
//! two-step descent test with a one-iterate rewind on failure.

use super::{
    apply_step, backtrack_impl, f_noise_scale, Aborted, RunState, SolveReport, SolverConfig,
    SolverError, StepStatus,
};
use crate::mat::DenseMat;
use crate::newton::{
    assemble_direction, assemble_model, check_d_norm_gate, estimate_support, tcg, TcgStatus,
};
use crate::objectives::CompositeProblem;

/// The previous accepted iterate, retained exactly one step for the
/// two-step rewind path.
struct PrevIter {
    x: DenseMat,
    d: DenseMat,
    v_norm: f64,
    f_total: f64,
}

pub fn rpn_cg_solve(
    problem: &CompositeProblem,
    x0: DenseMat,
    config: &SolverConfig,
) -> Result<SolveReport, Aborted> {
    let mut st = match RunState::new(problem, x0, config) {
        Ok(st) => st,
        Err(e) => {
            return Err(Aborted {
                error: e,
                at_iteration: 0,
                trace: Vec::new(),
            })
        }
    };
    match rpn_cg_run(problem, &mut st, config) {
        Ok(converged) => Ok(st.into_report(converged, None)),
        Err(e) => Err(st.abort(e)),
    }
}

/// Run the driver on an existing state (hybrids enter here after their
/// first-order phase). Returns whether ‖v‖ reached the tolerance.
pub(crate) fn rpn_cg_run(
    problem: &CompositeProblem,
    st: &mut RunState,
    config: &SolverConfig,
) -> Result<bool, SolverError> {
    let shape = problem.manifold.point_shape();
    let tcg_params = config.tcg_params();
    let mut flag: u8 = 0;
    let mut prev: Option<PrevIter> = None;

    loop {
        let sub = st.solve_subproblem(problem)?;
        let v_norm = st.last_vnorm;
        if v_norm <= config.vnorm_tol {
            st.push_record(v_norm, 0.0, 0.0, st.t, StepStatus::Term, flag, 0, sub.inner_iters);
            return Ok(true);
        }
        if st.k >= config.max_outer {
            st.push_record(v_norm, 0.0, 0.0, st.t, StepStatus::Term, flag, 0, sub.inner_iters);
            return Ok(false);
        }
        let t_used = st.t;

        let (d, status, cg_iters) = match estimate_support(&st.x, &sub) {
            Err(_) => {
                // Degrade to a pure proximal gradient step.
                flag = 0;
                (sub.v.clone(), StepStatus::Skip, 0)
            }
            Ok(part) => {
                let model = assemble_model(
                    problem, &st.x, &sub, part, t_used, config.tau, &st.grad, st.f_smooth,
                )?;
                if model.proj_q.is_none() {
                    flag = 0;
                    (sub.v.clone(), StepStatus::Skip, 0)
                } else {
                    let out = tcg(&model, &tcg_params)?;
                    let d = assemble_direction(&model, &out.w, shape);
                    (d, StepStatus::Tcg(out.status), out.cg_iters)
                }
            }
        };
        let d_norm = d.norm();
        let is_sup = status == StepStatus::Tcg(TcgStatus::Sup);
        let is_early1 = status == StepStatus::Tcg(TcgStatus::Early1);

        // t adaptation; one update per pass, rewind or not.
        if check_d_norm_gate(&d, &sub.v, t_used) || is_early1 {
            st.t = (config.varpi2 * t_used).max(config.t_min);
        } else if !is_sup {
            st.t = (config.varpi1 * t_used).min(config.t_max);
        }

        if !is_sup && flag != 1 {
            flag = 0;
            let bt = backtrack_impl(
                problem,
                &st.x,
                &d,
                st.f_total,
                config.rho1 * d.dot(&d),
                config.rho2,
                config.alpha_init,
                f_noise_scale(st.f_total),
            )?;
            prev = Some(PrevIter {
                x: st.x.clone(),
                d,
                v_norm,
                f_total: st.f_total,
            });
            st.push_record(v_norm, d_norm, bt.alpha, t_used, status, flag, cg_iters, sub.inner_iters);
            st.advance(bt);
        } else {
            flag += 1;
            if flag == 1 {
                let stepped = apply_step(problem, &st.x, &d, 1.0)?;
                prev = Some(PrevIter {
                    x: st.x.clone(),
                    d,
                    v_norm,
                    f_total: st.f_total,
                });
                st.push_record(v_norm, d_norm, 1.0, t_used, status, flag, cg_iters, sub.inner_iters);
                st.advance(stepped);
            } else {
                // Second consecutive unit step: validate the pair.
                let stepped = apply_step(problem, &st.x, &d, 1.0)?;
                flag = 0;
                let pv = prev
                    .take()
                    .ok_or(SolverError::Internal("flag = 2 without a stored iterate"))?;
                let two_step_ok =
                    stepped.f_total <= pv.f_total - config.rho1 * pv.v_norm * pv.v_norm;
                st.push_record(v_norm, d_norm, 1.0, t_used, status, flag, cg_iters, sub.inner_iters);
                if two_step_ok {
                    prev = Some(PrevIter {
                        x: st.x.clone(),
                        d,
                        v_norm,
                        f_total: st.f_total,
                    });
                    st.advance(stepped);
                } else {
                    // Not sufficiently descent in two steps: rewind and
                    // backtrack at the previous iterate; k does not advance.
                    let bt = backtrack_impl(
                        problem,
                        &pv.x,
                        &pv.d,
                        pv.f_total,
                        config.rho1 * pv.d.dot(&pv.d),
                        config.rho2,
                        config.alpha_init,
                        f_noise_scale(pv.f_total),
                    )?;
                    st.replace_current(bt);
                }
            }
        }
    }
}
