//! Outer solvers: the proximal Newton-CG driver, the first-order proximal
//! gradient baselines, the exact proximal Newton iteration, and the hybrids,
//! plus the shared line search, iteration records, and reporting types.

use crate::manifolds::GeometryError;
use crate::mat::DenseMat;
use crate::newton::{NewtonError, TcgStatus};
use crate::objectives::{CompositeProblem, ProblemKind};
use crate::prox::{inner_tolerance, solve_v, SubproblemError, SubproblemResult};
use std::fmt;
use std::time::Instant;
use thiserror::Error;

mod baselines;
mod rpn_cg;

pub use baselines::{
    hybrid_solve, manpg_ada_prefix, manpg_solve, resume_rpn, resume_rpn_cg, rpn_solve,
    HybridInner, PhaseSnapshot, PhasedPrefix,
};
pub use rpn_cg::rpn_cg_solve;

/// Default tolerance below which a reported entry counts as zero.
pub const DEFAULT_ZERO_TOL: f64 = 1e-5;

/// Newton-step budget of the exact proximal Newton iteration before a run is
/// declared a failure.
pub const RPN_NEWTON_CAP: usize = 20;

/// All tunables of the outer solvers. `t_init` defaults to 1/L_f with
/// bounds t_init/100 and 100·t_init.
#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub alpha_init: f64,
    pub rho1: f64,
    pub rho2: f64,
    pub varpi1: f64,
    pub varpi2: f64,
    pub t_init: f64,
    pub t_min: f64,
    pub t_max: f64,
    pub vartheta: f64,
    pub gamma: f64,
    pub tau: f64,
    pub theta: f64,
    pub kappa: f64,
    pub max_outer: usize,
    pub vnorm_tol: f64,
    pub switch_eps: f64,
}

impl SolverConfig {
    /// Defaults for a problem: per-family termination tolerance and
    /// iteration cap, t bounds derived from the gradient Lipschitz constant.
    pub fn for_problem(problem: &CompositeProblem) -> Self {
        let t0 = 1.0 / problem.smooth.lipschitz();
        let (vnorm_tol, max_outer) = match problem.kind {
            ProblemKind::SparsePca => (1e-10, 5000),
            ProblemKind::CompressedModes => (1e-8, 3000),
            ProblemKind::CommunityDetection => (1e-10, 3000),
            ProblemKind::Custom => (1e-10, 5000),
        };
        SolverConfig {
            alpha_init: 1.0,
            rho1: 0.001,
            rho2: 0.5,
            varpi1: 1.1,
            varpi2: 0.9,
            t_init: t0,
            t_min: t0 / 100.0,
            t_max: 100.0 * t0,
            vartheta: 0.01,
            gamma: 0.01,
            tau: 100.0,
            theta: 0.5,
            kappa: 0.1,
            max_outer,
            vnorm_tol,
            switch_eps: 1e-2,
        }
    }

    pub(crate) fn tcg_params(&self) -> crate::newton::TcgParams {
        crate::newton::TcgParams {
            vartheta: self.vartheta,
            gamma: self.gamma,
            theta: self.theta,
            kappa: self.kappa,
            disable_early_exits: false,
            record_trace: false,
        }
    }
}

/// What produced the step of a trace row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepStatus {
    /// Truncated-CG outcome of the proximal Newton-CG driver.
    Tcg(TcgStatus),
    /// tCG skipped (empty support or rank-deficient B̄); d = v.
    Skip,
    /// Proximal gradient step.
    Pg,
    /// Exact proximal Newton step.
    Newton,
    /// Final row written at termination (no step taken).
    Term,
}

impl StepStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            StepStatus::Tcg(s) => s.as_str(),
            StepStatus::Skip => "skip",
            StepStatus::Pg => "pg",
            StepStatus::Newton => "newton",
            StepStatus::Term => "term",
        }
    }
}

impl fmt::Display for StepStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One row of the per-iteration trace. `flag` is the state-machine flag
/// after the row's branch resolved; `time_s` is cumulative solver time.
#[derive(Debug, Clone)]
pub struct IterRecord {
    pub k: usize,
    pub f_value: f64,
    pub v_norm: f64,
    pub d_norm: f64,
    pub step_size: f64,
    pub t: f64,
    pub status: StepStatus,
    pub flag: u8,
    pub cg_iters: usize,
    pub inner_iters: usize,
    pub time_s: f64,
}

/// Result of a solver run.
pub struct SolveReport {
    /// Final manifold point.
    pub x_final: DenseMat,
    /// x + v from the final subproblem; its zeros are exact and it is the
    /// point sparsity is reported on.
    pub x_plus_v_final: Option<DenseMat>,
    pub iterations: usize,
    pub converged: bool,
    pub trace: Vec<IterRecord>,
    pub sparsity: f64,
    pub total_time: f64,
    pub final_vnorm: f64,
    pub final_f: f64,
    /// Failure description for runs that ended without converging for a
    /// structural reason (singular Newton system, step caps).
    pub failure: Option<String>,
}

#[derive(Debug, Error)]
pub enum SolverError {
    #[error(transparent)]
    Subproblem(#[from] SubproblemError),
    #[error("line search reached the 1e-16 step floor without sufficient descent")]
    NonDescent,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Newton(#[from] NewtonError),
    #[error("internal invariant violated: {0}")]
    Internal(&'static str),
}

/// A solver abort with its diagnostic context.
#[derive(Debug)]
pub struct Aborted {
    pub error: SolverError,
    pub at_iteration: usize,
    pub trace: Vec<IterRecord>,
}

impl fmt::Display for Aborted {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "solver aborted at iteration {}: {}",
            self.at_iteration, self.error
        )
    }
}

impl std::error::Error for Aborted {}

/// Fraction of entries with |xᵢ| ≤ zero_tol.
pub fn sparsity(x: &DenseMat, zero_tol: f64) -> f64 {
    assert!(zero_tol >= 0.0);
    if x.is_empty() {
        return 1.0;
    }
    let z = x.as_slice().iter().filter(|a| a.abs() <= zero_tol).count();
    z as f64 / x.len() as f64
}

/// min over orthogonal O of ‖U₁ − U₂O‖_F, with O the polar factor of U₂ᵀU₁
/// computed through the symmetric eigendecomposition of (U₂ᵀU₁)ᵀ(U₂ᵀU₁).
pub fn procrustes_distance(u1: &DenseMat, u2: &DenseMat) -> f64 {
    assert_eq!(u1.shape(), u2.shape());
    let m = u2.t_matmul(u1);
    let r = m.cols();
    let mm = m.t_matmul(&m);
    let (eigs, v) = crate::numerics::sym_eig(&mm).expect("MᵀM is symmetric");
    let emax = eigs.first().copied().unwrap_or(0.0).max(0.0);
    let mut vl = DenseMat::zeros(r, r);
    for j in 0..r {
        let w = if eigs[j] > emax * crate::numerics::RANK_TOL && eigs[j] > 0.0 {
            1.0 / eigs[j].sqrt()
        } else {
            0.0
        };
        for i in 0..r {
            vl.set(i, j, v.get(i, j) * w);
        }
    }
    let o = m.matmul(&vl).matmul_t(&v);
    u1.sub(&u2.matmul(&o)).norm()
}

/// Accepted line-search trial.
pub(crate) struct Stepped {
    pub alpha: f64,
    pub x: DenseMat,
    pub f_smooth: f64,
    pub f_total: f64,
    pub grad: DenseMat,
    /// The acceptance leaned on the evaluation-noise slack (the required
    /// decrease was below the resolution of F).
    pub blind: bool,
}

/// Evaluate a retracted step; one gradient product per trial.
pub(crate) fn apply_step(
    problem: &CompositeProblem,
    x: &DenseMat,
    d: &DenseMat,
    alpha: f64,
) -> Result<Stepped, SolverError> {
    let step = if alpha == 1.0 { d.clone() } else { d.scale(alpha) };
    let xt = problem.manifold.retract(x, &step)?;
    let (fs, grad) = problem.smooth.eval_and_grad(&xt);
    let ft = fs + problem.h(&xt);
    Ok(Stepped {
        alpha,
        x: xt,
        f_smooth: fs,
        f_total: ft,
        grad,
        blind: false,
    })
}

/// Backtracking with the Armijo-style test
/// F(R_x(αd)) ≤ F(x) − αρ₁‖d‖², shrinking by ρ₂ from α_init, floored at
/// 1e-16.
pub fn backtrack(
    problem: &CompositeProblem,
    x: &DenseMat,
    d: &DenseMat,
    f_x: f64,
    rho1: f64,
    rho2: f64,
    alpha_init: f64,
) -> Result<(f64, DenseMat), SolverError> {
    backtrack_impl(problem, x, d, f_x, rho1 * d.dot(d), rho2, alpha_init, 0.0)
        .map(|s| (s.alpha, s.x))
}

/// Evaluation-noise scale used by the Newton-CG driver's line searches.
pub(crate) fn f_noise_scale(f_x: f64) -> f64 {
    1e-12 * (1.0 + f_x.abs())
}

/// Shared backtracking body with an explicit decrease coefficient c:
/// accept α with F(R(αd)) ≤ F(x) − α·c.
///
/// Trials whose required decrease α·c sits below the evaluation noise of F
/// (taken as 1e-12·(1+|F(x)|)) are compared with that noise as slack: near
/// termination the decreases become smaller than the accuracy to which F can
/// be evaluated at all, and a strict test would reject every step it cannot
/// measure. Trials with a measurable requirement keep the strict test, so a
/// genuinely non-descending direction still runs into the 1e-16 floor.
pub(crate) fn backtrack_impl(
    problem: &CompositeProblem,
    x: &DenseMat,
    d: &DenseMat,
    f_x: f64,
    c: f64,
    rho2: f64,
    alpha_init: f64,
    noise: f64,
) -> Result<Stepped, SolverError> {
    let mut alpha = alpha_init;
    loop {
        let mut trial = apply_step(problem, x, d, alpha)?;
        let required = alpha * c;
        if trial.f_total <= f_x - required {
            return Ok(trial);
        }
        if required <= noise && trial.f_total <= f_x - required + noise {
            trial.blind = true;
            return Ok(trial);
        }
        alpha *= rho2;
        if alpha < 1e-16 {
            return Err(SolverError::NonDescent);
        }
    }
}

/// Mutable state threaded through a run; hybrids hand it from one phase to
/// the next so traces, iteration counts, warm starts, and the inner
/// tolerance schedule stay continuous.
pub(crate) struct RunState {
    pub x: DenseMat,
    pub grad: DenseMat,
    pub f_smooth: f64,
    pub f_total: f64,
    pub t: f64,
    pub k: usize,
    pub lam_warm: Option<Vec<f64>>,
    pub innertol: f64,
    pub trace: Vec<IterRecord>,
    pub last_vnorm: f64,
    pub last_x_plus_v: Option<DenseMat>,
    start: Instant,
    time_offset: f64,
}

impl RunState {
    pub fn new(
        problem: &CompositeProblem,
        x0: DenseMat,
        config: &SolverConfig,
    ) -> Result<Self, SolverError> {
        problem.manifold.check_point(&x0)?;
        let (fs, grad) = problem.smooth.eval_and_grad(&x0);
        let ft = fs + problem.h(&x0);
        let (rows, cols) = problem.manifold.point_shape();
        let innertol = inner_tolerance(0, f64::NAN, f64::NAN, config.t_init, rows, cols);
        Ok(RunState {
            x: x0,
            grad,
            f_smooth: fs,
            f_total: ft,
            t: config.t_init.clamp(config.t_min, config.t_max),
            k: 0,
            lam_warm: None,
            innertol,
            trace: Vec::new(),
            last_vnorm: f64::NAN,
            last_x_plus_v: None,
            start: Instant::now(),
            time_offset: 0.0,
        })
    }

    pub fn from_snapshot(
        problem: &CompositeProblem,
        snap: &PhaseSnapshot,
        config: &SolverConfig,
    ) -> Result<Self, SolverError> {
        let mut st = RunState::new(problem, snap.x.clone(), config)?;
        st.t = snap.t.clamp(config.t_min, config.t_max);
        st.k = snap.k;
        st.lam_warm = snap.lam.clone();
        st.innertol = snap.innertol;
        st.time_offset = snap.elapsed;
        Ok(st)
    }

    pub fn elapsed(&self) -> f64 {
        self.time_offset + self.start.elapsed().as_secs_f64()
    }

    /// Solve the proximal subproblem at the current iterate, advancing the
    /// warm start and the inner-tolerance schedule.
    pub fn solve_subproblem(
        &mut self,
        problem: &CompositeProblem,
    ) -> Result<SubproblemResult, SolverError> {
        let sub = solve_v(
            problem.manifold.as_ref(),
            &self.x,
            &self.grad,
            self.t,
            problem.mu,
            self.innertol,
            self.lam_warm.as_deref(),
        )?;
        self.lam_warm = Some(sub.lambda.clone());
        let vnorm = sub.v.norm();
        self.innertol = inner_tolerance(self.k + 1, self.innertol, vnorm, 0.0, 0, 0);
        self.last_vnorm = vnorm;
        self.last_x_plus_v = Some(sub.x_plus_v.clone());
        Ok(sub)
    }

    #[allow(clippy::too_many_arguments)]
    pub fn push_record(
        &mut self,
        v_norm: f64,
        d_norm: f64,
        step_size: f64,
        t: f64,
        status: StepStatus,
        flag: u8,
        cg_iters: usize,
        inner_iters: usize,
    ) {
        self.trace.push(IterRecord {
            k: self.k,
            f_value: self.f_total,
            v_norm,
            d_norm,
            step_size,
            t,
            status,
            flag,
            cg_iters,
            inner_iters,
            time_s: self.elapsed(),
        });
    }

    /// Move to an accepted step and advance the iteration counter.
    pub fn advance(&mut self, s: Stepped) {
        self.x = s.x;
        self.f_smooth = s.f_smooth;
        self.f_total = s.f_total;
        self.grad = s.grad;
        self.k += 1;
    }

    /// Replace the current iterate without advancing k (the rewind path).
    pub fn replace_current(&mut self, s: Stepped) {
        self.x = s.x;
        self.f_smooth = s.f_smooth;
        self.f_total = s.f_total;
        self.grad = s.grad;
    }

    pub fn into_report(self, converged: bool, failure: Option<String>) -> SolveReport {
        let total_time = self.elapsed();
        let sp = self
            .last_x_plus_v
            .as_ref()
            .map(|p| sparsity(p, DEFAULT_ZERO_TOL))
            .unwrap_or_else(|| sparsity(&self.x, DEFAULT_ZERO_TOL));
        SolveReport {
            x_final: self.x,
            x_plus_v_final: self.last_x_plus_v,
            iterations: self.k,
            converged,
            trace: self.trace,
            sparsity: sp,
            total_time,
            final_vnorm: self.last_vnorm,
            final_f: self.f_total,
            failure,
        }
    }

    pub fn abort(self, error: SolverError) -> Aborted {
        Aborted {
            error,
            at_iteration: self.k,
            trace: self.trace,
        }
    }
}
