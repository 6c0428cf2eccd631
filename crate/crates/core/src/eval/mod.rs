//! Accuracy metrics, aggregation over seeds and result emission.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::AdError;
use crate::engine;
use crate::mlp::MlpSpec;
use crate::pde::{load_ground_truth, GridError, GroundTruthGrid, PdeProblem, Point};
use crate::sampling::uniform_sample;

mod report;
mod svg;

pub use report::{
    collect_runs, emit, ratio_to_baseline, read_records, read_summary, summarize, write_records, ComparisonSummary,
    MethodSummary, RunRow, RunSummary,
};

/// Evaluation points for closed-form problems.
pub const DEFAULT_N_EVAL: usize = 10_000;
/// Held-out points for the reported test loss.
pub const DEFAULT_N_HOLDOUT: usize = 5_000;
/// Shared by every method and seed so all runs face the same yardstick.
pub const DEFAULT_EVAL_SEED: u64 = 0x5EED_E7A1;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("empty evaluation set")]
    Empty,
    #[error("{predictions} predictions for {truths} reference values")]
    LengthMismatch { predictions: usize, truths: usize },
    #[error("{method} cycles against {baseline} baseline cycles")]
    CycleMismatch { method: usize, baseline: usize },
    #[error("reference values are identically zero")]
    ZeroDenominator,
    #[error("ground truth for {problem} not found at {}", path.display())]
    MissingGroundTruth { problem: &'static str, path: PathBuf },
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Ad(#[from] AdError),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: {source}", path.display())]
    Csv { path: PathBuf, source: csv::Error },
    #[error("no completed runs to report")]
    NothingToReport,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    Failed,
}

/// Metrics after one cycle. Cycle 0 is the snapshot before any resampling.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub cycle: usize,
    pub train_size: usize,
    pub test_loss: f64,
    pub l2_rel_error: f64,
    pub wall_seconds: f64,
    pub status: RunStatus,
}

impl RunRecord {
    pub fn failed(cycle: usize, train_size: usize, wall_seconds: f64) -> Self {
        RunRecord {
            cycle,
            train_size,
            test_loss: f64::NAN,
            l2_rel_error: f64::NAN,
            wall_seconds,
            status: RunStatus::Failed,
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == RunStatus::Ok
    }
}

/// `√(Σ(φ−u)² / Σu²)`.
pub fn l2_relative_error(predictions: &[f64], truths: &[f64]) -> Result<f64, EvalError> {
    if predictions.len() != truths.len() {
        return Err(EvalError::LengthMismatch { predictions: predictions.len(), truths: truths.len() });
    }
    if truths.is_empty() {
        return Err(EvalError::Empty);
    }
    let (mut num, mut den) = (0.0, 0.0);
    for (p, u) in predictions.iter().zip(truths) {
        num += (p - u) * (p - u);
        den += u * u;
    }
    if den == 0.0 {
        return Err(EvalError::ZeroDenominator);
    }
    Ok((num / den).sqrt())
}

/// Where reference values come from.
#[derive(Clone, Debug)]
pub enum GroundTruth {
    ClosedForm,
    Grid(GroundTruthGrid),
}

impl GroundTruth {
    /// Closed form when available, else the problem's grid file in `data_dir`.
    pub fn locate(problem: &PdeProblem, data_dir: &Path) -> Result<Self, EvalError> {
        if problem.has_closed_form() {
            return Ok(GroundTruth::ClosedForm);
        }
        let file = problem.kind().ground_truth_file().expect("gridded problems name their file");
        let path = data_dir.join(file);
        if !path.is_file() {
            return Err(EvalError::MissingGroundTruth { problem: problem.name(), path });
        }
        Ok(GroundTruth::Grid(load_ground_truth(&path)?))
    }
}

/// Points and reference values the L² error is measured on.
#[derive(Clone, Debug)]
pub struct EvalSet {
    points: Vec<Point>,
    truths: Vec<f64>,
}

impl EvalSet {
    /// `n_eval` uniform points for closed forms; every interior node of a
    /// grid otherwise (`n_eval` and `seed` unused).
    pub fn new(problem: &PdeProblem, truth: &GroundTruth, n_eval: usize, seed: u64) -> Result<Self, EvalError> {
        let (points, truths): (Vec<Point>, Vec<f64>) = match truth {
            GroundTruth::ClosedForm => {
                let points = uniform_sample(problem.domain(), n_eval, seed);
                let truths = points
                    .iter()
                    .map(|p| problem.exact_solution(p).expect("closed form exists"))
                    .collect();
                (points, truths)
            }
            GroundTruth::Grid(grid) => {
                let mut pts = Vec::new();
                let mut vals = Vec::new();
                for (i, &x) in grid.x().iter().enumerate() {
                    for (j, &t) in grid.t().iter().enumerate() {
                        if problem.domain().contains_open(&[x, t]) {
                            pts.push([x, t]);
                            vals.push(grid.at(i, j));
                        }
                    }
                }
                (pts, vals)
            }
        };
        if points.is_empty() {
            return Err(EvalError::Empty);
        }
        Ok(EvalSet { points, truths })
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn truths(&self) -> &[f64] {
        &self.truths
    }

    pub fn l2_error_of(&self, predict: impl Fn(&Point) -> f64) -> Result<f64, EvalError> {
        let pred: Vec<f64> = self.points.iter().map(predict).collect();
        l2_relative_error(&pred, &self.truths)
    }
}

/// Fixed evaluation set plus the held-out test-loss points.
#[derive(Clone, Debug)]
pub struct Evaluator {
    set: EvalSet,
    holdout: Vec<Point>,
}

impl Evaluator {
    pub fn new(
        problem: &PdeProblem,
        truth: &GroundTruth,
        n_eval: usize,
        n_holdout: usize,
        seed: u64,
    ) -> Result<Self, EvalError> {
        let set = EvalSet::new(problem, truth, n_eval, seed)?;
        if n_holdout == 0 {
            return Err(EvalError::Empty);
        }
        let holdout = uniform_sample(problem.domain(), n_holdout, seed.rotate_left(17) ^ 0x4F1D);
        Ok(Evaluator { set, holdout })
    }

    pub fn set(&self) -> &EvalSet {
        &self.set
    }

    pub fn holdout(&self) -> &[Point] {
        &self.holdout
    }

    /// `(L² relative error, mean squared residual on the held-out set)`.
    pub fn evaluate(&self, problem: &PdeProblem, spec: &MlpSpec, theta: &[f64]) -> Result<(f64, f64), EvalError> {
        let l2 = self.set.l2_error_of(|p| problem.surrogate_value(spec, theta, p))?;
        let r = engine::residuals(problem, spec, theta, &self.holdout)?;
        let loss = r.iter().map(|x| x * x).sum::<f64>() / r.len() as f64;
        Ok((l2, loss))
    }
}

/// One-shot [`Evaluator::evaluate`] with the default held-out size.
pub fn evaluate(
    problem: &PdeProblem,
    spec: &MlpSpec,
    theta: &[f64],
    truth: &GroundTruth,
    n_eval: usize,
    seed: u64,
) -> Result<(f64, f64), EvalError> {
    Evaluator::new(problem, truth, n_eval, DEFAULT_N_HOLDOUT, seed)?.evaluate(problem, spec, theta)
}
