//! Full-batch optimizers for the fine-tuning phases.

mod adam;
mod lbfgs;

pub use adam::{adam_run, AdamConfig, AdamState};
pub use lbfgs::{lbfgs_run, LbfgsConfig, LbfgsReport, LineSearch, LbfgsStop};

use thiserror::Error;

use crate::autodiff::AdError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptimError {
    #[error("non-finite loss {loss} at iteration {iteration}")]
    NonFinite { iteration: usize, loss: f64 },
    #[error(transparent)]
    Eval(#[from] AdError),
}

/// Loss and gradient of a parameter vector.
pub trait Objective {
    fn evaluate(&mut self, theta: &[f64]) -> Result<(f64, Vec<f64>), AdError>;
}

impl<F> Objective for F
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>), AdError>,
{
    fn evaluate(&mut self, theta: &[f64]) -> Result<(f64, Vec<f64>), AdError> {
        self(theta)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}
