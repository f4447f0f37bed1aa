//! Solvers for ℓ1-regularized smooth minimization over compact embedded
//! submanifolds, min F(x) = f(x) + μ‖x‖₁ with x constrained to a manifold.
//!
//! The crate provides:
//!
//! - a Riemannian proximal Newton-CG solver (`rpn_cg_solve`) built from a
//!   semismooth-Newton proximal subproblem, a support-restricted quadratic
//!   model, and a truncated conjugate gradient with descent-guarding early
//!   exits;
//! - first-order proximal gradient baselines (ManPG and its adaptive
//!   variant), the exact proximal Newton iteration, and the hybrid schemes
//!   that splice them together;
//! - the Stiefel manifold, the fixed-span Stiefel manifold used for
//!   community detection, and a curved-retraction plane used in tests;
//! - the sparse-PCA, compressed-modes, and community-detection objectives
//!   with reproducible data generation.
//!
//! Single solver runs are sequential and bit-reproducible; batches of
//! independent runs can be distributed over threads via [`batch`].

pub mod batch;
pub mod datagen;
pub mod manifolds;
pub mod mat;
pub mod newton;
pub mod numerics;
pub mod objectives;
pub mod prox;
pub mod solvers;

pub use mat::DenseMat;
pub use objectives::CompositeProblem;
pub use solvers::{SolveReport, SolverConfig};
