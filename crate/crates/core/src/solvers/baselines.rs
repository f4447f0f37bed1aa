//! First-order baselines, the exact proximal Newton iteration, and the
//! hybrid schemes that run ManPG-Ada down to a switch threshold and then
//! hand the state to a second-order phase.

use super::{
    apply_step, backtrack_impl, f_noise_scale, Aborted, RunState, SolveReport, SolverConfig,
    SolverError, StepStatus,
};
use crate::mat::DenseMat;
use crate::newton::{assemble_model, direct_newton_u, estimate_support, NewtonError};
use crate::objectives::CompositeProblem;
use crate::solvers::rpn_cg::rpn_cg_run;
use crate::solvers::RPN_NEWTON_CAP;

/// Resumable solver state captured when ‖v(x_k)‖ first drops through a
/// threshold, before that pass's subproblem solve mutates the schedule:
/// restarting from a snapshot reproduces the phase-two trajectory exactly.
#[derive(Clone)]
pub struct PhaseSnapshot {
    pub x: DenseMat,
    pub t: f64,
    pub k: usize,
    pub lam: Option<Vec<f64>>,
    pub innertol: f64,
    pub elapsed: f64,
    pub v_norm: f64,
}

/// Outcome of a ManPG-Ada prefix run over a set of switch thresholds.
pub struct PhasedPrefix {
    /// (threshold, state at first crossing), one entry per crossed
    /// threshold.
    pub snapshots: Vec<(f64, PhaseSnapshot)>,
    /// The prefix converged below the final tolerance on its own.
    pub converged: bool,
    /// The prefix hit the iteration cap.
    pub capped: bool,
}

enum PgExit {
    Converged,
    Cap,
    Switched,
}

/// Shared ManPG body. `adaptive` enables the t-growth rule; `stop_below`
/// ends the run (without a terminal record) once ‖v‖ falls to the value;
/// `snapshots_at` captures resumable states at each listed threshold.
fn manpg_run(
    problem: &CompositeProblem,
    st: &mut RunState,
    config: &SolverConfig,
    adaptive: bool,
    stop_below: Option<f64>,
    snapshots_at: &[f64],
    out_snapshots: &mut Vec<(f64, PhaseSnapshot)>,
) -> Result<PgExit, SolverError> {
    loop {
        let pre_lam = st.lam_warm.clone();
        let pre_innertol = st.innertol;
        let sub = st.solve_subproblem(problem)?;
        let v_norm = st.last_vnorm;
        for &thr in snapshots_at {
            if v_norm <= thr && !out_snapshots.iter().any(|(c, _)| *c == thr) {
                out_snapshots.push((
                    thr,
                    PhaseSnapshot {
                        x: st.x.clone(),
                        t: st.t,
                        k: st.k,
                        lam: pre_lam.clone(),
                        innertol: pre_innertol,
                        elapsed: st.elapsed(),
                        v_norm,
                    },
                ));
            }
        }
        if v_norm <= config.vnorm_tol {
            st.push_record(v_norm, 0.0, 0.0, st.t, StepStatus::Term, 0, 0, sub.inner_iters);
            return Ok(PgExit::Converged);
        }
        if let Some(eps) = stop_below {
            if v_norm <= eps {
                // Rewind the schedule state captured before this solve so a
                // resumed phase replays it identically.
                st.lam_warm = pre_lam;
                st.innertol = pre_innertol;
                return Ok(PgExit::Switched);
            }
        }
        if st.k >= config.max_outer {
            st.push_record(v_norm, 0.0, 0.0, st.t, StepStatus::Term, 0, 0, sub.inner_iters);
            return Ok(PgExit::Cap);
        }
        let t_used = st.t;
        // Sufficient decrease F(R(αv)) ≤ F(x) − α‖v‖²/(2t).
        let bt = backtrack_impl(
            problem,
            &st.x,
            &sub.v,
            st.f_total,
            v_norm * v_norm / (2.0 * t_used),
            config.rho2,
            config.alpha_init,
            f_noise_scale(st.f_total),
        )?;
        if adaptive {
            // Grow t when the first trial passed a measurable decrease test;
            // shrink it back toward the Lipschitz step t_init when the line
            // search backtracked or could only accept at the noise floor of
            // F. Enlarged t pays off while decreases are measurable; once
            // they are not, the iteration must sit in the provably
            // contractive step range, and t_init = 1/L_f is that.
            if bt.alpha == config.alpha_init && !bt.blind {
                st.t = (config.varpi1 * t_used).min(config.t_max);
            } else if t_used > config.t_init {
                st.t = (config.varpi2 * t_used).max(config.t_init);
            }
        }
        st.push_record(v_norm, v_norm, bt.alpha, t_used, StepStatus::Pg, 0, 0, sub.inner_iters);
        st.advance(bt);
    }
}

/// ManPG (fixed t) or ManPG-Ada (adaptive t) from x0 to termination.
pub fn manpg_solve(
    problem: &CompositeProblem,
    x0: DenseMat,
    config: &SolverConfig,
    adaptive: bool,
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
    let mut none = Vec::new();
    match manpg_run(problem, &mut st, config, adaptive, None, &[], &mut none) {
        Ok(PgExit::Converged) => Ok(st.into_report(true, None)),
        Ok(_) => Ok(st.into_report(false, None)),
        Err(e) => Err(st.abort(e)),
    }
}

/// Run ManPG-Ada until ‖v‖ falls through the smallest listed threshold (or
/// the run terminates first), capturing a resumable snapshot at every
/// threshold crossing. One prefix serves every phase-two variant.
pub fn manpg_ada_prefix(
    problem: &CompositeProblem,
    x0: DenseMat,
    config: &SolverConfig,
    thresholds: &[f64],
) -> Result<PhasedPrefix, Aborted> {
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
    let stop = thresholds.iter().copied().fold(f64::INFINITY, f64::min);
    let mut snapshots = Vec::new();
    match manpg_run(
        problem,
        &mut st,
        config,
        true,
        Some(stop),
        thresholds,
        &mut snapshots,
    ) {
        Ok(exit) => Ok(PhasedPrefix {
            snapshots,
            converged: matches!(exit, PgExit::Converged),
            capped: matches!(exit, PgExit::Cap),
        }),
        Err(e) => Err(st.abort(e)),
    }
}

/// Exact proximal Newton run on an existing state. Unit steps, no line
/// search; at most `newton_cap` steps. Structural failures (empty support,
/// rank-deficient or singular reduced system, retraction breakdown) are
/// reported, not propagated.
fn rpn_run(
    problem: &CompositeProblem,
    st: &mut RunState,
    config: &SolverConfig,
    newton_cap: usize,
) -> Result<Option<String>, SolverError> {
    let shape = problem.manifold.point_shape();
    let start_k = st.k;
    loop {
        let sub = st.solve_subproblem(problem)?;
        let v_norm = st.last_vnorm;
        if v_norm <= config.vnorm_tol {
            st.push_record(v_norm, 0.0, 0.0, st.t, StepStatus::Term, 0, 0, sub.inner_iters);
            return Ok(None);
        }
        if st.k >= config.max_outer {
            st.push_record(v_norm, 0.0, 0.0, st.t, StepStatus::Term, 0, 0, sub.inner_iters);
            return Ok(Some("iteration cap reached".into()));
        }
        if st.k - start_k >= newton_cap {
            st.push_record(v_norm, 0.0, 0.0, st.t, StepStatus::Term, 0, 0, sub.inner_iters);
            return Ok(Some(format!("newton step cap ({newton_cap}) reached")));
        }
        let part = match estimate_support(&st.x, &sub) {
            Ok(p) => p,
            Err(NewtonError::EmptySupport) => return Ok(Some("empty support".into())),
            Err(e) => return Err(e.into()),
        };
        let model = assemble_model(
            problem, &st.x, &sub, part, st.t, config.tau, &st.grad, st.f_smooth,
        )?;
        let u = match direct_newton_u(&model, shape) {
            Ok(u) => u,
            Err(NewtonError::RankDeficient) => return Ok(Some("rank-deficient B̄".into())),
            Err(NewtonError::Singular) => return Ok(Some("singular Newton system".into())),
            Err(NewtonError::NonFinite(w)) => return Ok(Some(format!("non-finite {w}"))),
            Err(e) => return Err(e.into()),
        };
        let stepped = match apply_step(problem, &st.x, &u, 1.0) {
            Ok(s) => s,
            Err(SolverError::Geometry(g)) => return Ok(Some(format!("retraction failed: {g}"))),
            Err(e) => return Err(e),
        };
        st.push_record(v_norm, u.norm(), 1.0, st.t, StepStatus::Newton, 0, 0, sub.inner_iters);
        st.advance(stepped);
    }
}

/// Exact proximal Newton (unit steps, fixed t, no line search) from x0.
/// Intended for iterates already near a minimizer; failures are reported in
/// the `failure` field.
pub fn rpn_solve(
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
    let cap = RPN_NEWTON_CAP.min(config.max_outer);
    match rpn_run(problem, &mut st, config, cap) {
        Ok(failure) => {
            let converged = failure.is_none();
            Ok(st.into_report(converged, failure))
        }
        Err(e) => Err(st.abort(e)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HybridInner {
    /// ManPG-Ada then exact proximal Newton (RPN-H).
    Rpn,
    /// ManPG-Ada then proximal Newton-CG (RPN-CGH).
    RpnCg,
}

/// Hybrid scheme: ManPG-Ada while ‖v(x_k)‖ > switch_eps, then the selected
/// second-order phase from the switch iterate, inheriting t (clamped), the
/// multiplier warm start, and the inner-tolerance schedule.
pub fn hybrid_solve(
    problem: &CompositeProblem,
    x0: DenseMat,
    config: &SolverConfig,
    inner: HybridInner,
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
    let mut snaps = Vec::new();
    let exit = match manpg_run(
        problem,
        &mut st,
        config,
        true,
        Some(config.switch_eps),
        &[],
        &mut snaps,
    ) {
        Ok(exit) => exit,
        Err(e) => return Err(st.abort(e)),
    };
    match exit {
        PgExit::Converged => Ok(st.into_report(true, None)),
        PgExit::Cap => Ok(st.into_report(false, Some("iteration cap in first phase".into()))),
        PgExit::Switched => {
            st.t = st.t.clamp(config.t_min, config.t_max);
            match inner {
                HybridInner::RpnCg => match rpn_cg_run(problem, &mut st, config) {
                    Ok(converged) => Ok(st.into_report(converged, None)),
                    Err(e) => Err(st.abort(e)),
                },
                HybridInner::Rpn => {
                    let cap = RPN_NEWTON_CAP;
                    match rpn_run(problem, &mut st, config, cap) {
                        Ok(failure) => {
                            let converged = failure.is_none();
                            Ok(st.into_report(converged, failure))
                        }
                        Err(e) => Err(st.abort(e)),
                    }
                }
            }
        }
    }
}

/// Resume the proximal Newton-CG phase from a prefix snapshot. The report's
/// iteration count includes the prefix iterations; its trace holds only the
/// resumed phase.
pub fn resume_rpn_cg(
    problem: &CompositeProblem,
    snap: &PhaseSnapshot,
    config: &SolverConfig,
) -> Result<SolveReport, Aborted> {
    let mut st = match RunState::from_snapshot(problem, snap, config) {
        Ok(st) => st,
        Err(e) => {
            return Err(Aborted {
                error: e,
                at_iteration: snap.k,
                trace: Vec::new(),
            })
        }
    };
    match rpn_cg_run(problem, &mut st, config) {
        Ok(converged) => Ok(st.into_report(converged, None)),
        Err(e) => Err(st.abort(e)),
    }
}

/// Resume the exact proximal Newton phase from a prefix snapshot.
pub fn resume_rpn(
    problem: &CompositeProblem,
    snap: &PhaseSnapshot,
    config: &SolverConfig,
) -> Result<SolveReport, Aborted> {
    let mut st = match RunState::from_snapshot(problem, snap, config) {
        Ok(st) => st,
        Err(e) => {
            return Err(Aborted {
                error: e,
                at_iteration: snap.k,
                trace: Vec::new(),
            })
        }
    };
    match rpn_run(problem, &mut st, config, RPN_NEWTON_CAP) {
        Ok(failure) => {
            let converged = failure.is_none();
            Ok(st.into_report(converged, failure))
        }
        Err(e) => Err(st.abort(e)),
    }
}
