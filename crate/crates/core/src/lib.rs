//! Physics-informed neural networks with adaptive collocation resampling.
//!
//! Candidates are scored by the current model (residual, gradient norms, or
//! the influence of a point on a held-out loss through a low-rank inverse
//! Hessian), turned into a sampling distribution, and drawn into the
//! training set between fine-tuning rounds. See the guide in `book/` and the
//! `pinn-resample` binary.

pub mod autodiff;
pub mod cli;
pub mod engine;
pub mod eval;
pub mod influence;
pub mod mlp;
pub mod optim;
pub mod pde;
pub mod sampling;
pub mod scoring;
pub mod trainer;

// The guide's code blocks run as doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/running.md")]
    mod running {}
    #[doc = include_str!("../../../book/src/configuration.md")]
    mod configuration {}
    #[doc = include_str!("../../../book/src/library.md")]
    mod library {}
    #[doc = include_str!("../../../book/src/scoring.md")]
    mod scoring {}
    #[doc = include_str!("../../../book/src/outputs.md")]
    mod outputs {}
}
