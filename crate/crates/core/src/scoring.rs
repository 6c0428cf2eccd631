//! Candidate scoring strategies. Each maps candidate points to non-negative
//! importance scores under a frozen model.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{for_each_gradient, AdError, InputFn, ParamFn, Scalar};
use crate::engine;
use crate::influence::{InfluenceContext, InfluenceError};
use crate::mlp::MlpSpec;
use crate::pde::{PdeProblem, Point};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScoringError {
    #[error("unknown method `{0}` (expected pinnfluence, rar, grad_dot, output_grad, loss_grad, random or static)")]
    UnknownMethod(String),
    #[error("method {0} does not score candidates")]
    Unscored(Method),
    #[error("score {index} is {value}")]
    NonFinite { index: usize, value: f64 },
    #[error(transparent)]
    Ad(#[from] AdError),
    #[error(transparent)]
    Influence(#[from] InfluenceError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Pinnfluence,
    Rar,
    GradDot,
    OutputGrad,
    LossGrad,
    Random,
    /// No resampling at all.
    Static,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Pinnfluence,
        Method::Rar,
        Method::GradDot,
        Method::OutputGrad,
        Method::LossGrad,
        Method::Random,
        Method::Static,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Pinnfluence => "pinnfluence",
            Method::Rar => "rar",
            Method::GradDot => "grad_dot",
            Method::OutputGrad => "output_grad",
            Method::LossGrad => "loss_grad",
            Method::Random => "random",
            Method::Static => "static",
        }
    }

    /// Whether scoring needs the test-loss gradient.
    pub fn uses_test_set(self) -> bool {
        matches!(self, Method::Pinnfluence | Method::GradDot)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = ScoringError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| ScoringError::UnknownMethod(s.to_string()))
    }
}

/// Scores aligned with a candidate list.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreVector {
    scores: Vec<f64>,
    method: Method,
}

impl ScoreVector {
    /// Checks that every score is finite; negative inputs are not expected
    /// since every strategy takes an absolute value or a norm.
    pub fn new(method: Method, scores: Vec<f64>) -> Result<Self, ScoringError> {
        if let Some((index, &value)) = scores.iter().enumerate().find(|(_, s)| !s.is_finite() || **s < 0.0) {
            return Err(ScoringError::NonFinite { index, value });
        }
        Ok(ScoreVector { scores, method })
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

/// `|Inf(x)|` per candidate.
pub fn score_pinnfluence(
    ctx: &InfluenceContext,
    problem: &PdeProblem,
    spec: &MlpSpec,
    candidates: &[Point],
) -> Result<ScoreVector, ScoringError> {
    let inf = ctx.influences(problem, spec, candidates)?;
    ScoreVector::new(Method::Pinnfluence, inf.into_iter().map(f64::abs).collect())
}

/// Absolute PDE residual per candidate.
pub fn score_rar(
    problem: &PdeProblem,
    spec: &MlpSpec,
    theta: &[f64],
    candidates: &[Point],
) -> Result<ScoreVector, ScoringError> {
    let r = engine::residuals(problem, spec, theta, candidates)?;
    ScoreVector::new(Method::Rar, r.into_iter().map(f64::abs).collect())
}

/// `|g_testᵀ ∇_θ L(x)|` per candidate, for a precomputed test gradient.
pub fn score_grad_dot(
    problem: &PdeProblem,
    spec: &MlpSpec,
    theta: &[f64],
    g_test: &[f64],
    candidates: &[Point],
) -> Result<ScoreVector, ScoringError> {
    let mut out = vec![0.0; candidates.len()];
    engine::for_each_point_gradient(problem, spec, theta, candidates, |k, _, g| {
        let mut acc = 0.0;
        for i in 0..g.len() {
            acc += g_test[i] * g[i];
        }
        out[k] = acc.abs();
    })?;
    ScoreVector::new(Method::GradDot, out)
}

/// `‖∇_x g(x)‖₂` by forward-mode jets.
pub fn input_gradient_norm<G: InputFn<2>>(g: &G, p: &Point) -> f64 {
    let coords = crate::autodiff::Jet::<f64, 2>::coordinates(p, [1, 1]);
    let y = g.eval(&coords);
    y.d[0].hypot(y.d[1])
}

struct Surrogate<'a> {
    problem: &'a PdeProblem,
    spec: &'a MlpSpec,
    theta: &'a [f64],
}

impl InputFn<2> for Surrogate<'_> {
    fn eval<S: Scalar>(&self, x: &[S; 2]) -> S {
        let coef: Vec<S::Coef> = self.theta.iter().map(|&t| S::coef(t)).collect();
        let net = crate::mlp::forward(self.spec, &coef, x);
        self.problem.apply_ansatz(&x[0], &x[1], net)
    }
}

/// Input-gradient norm of the constrained surrogate per candidate.
pub fn score_output_grad(
    problem: &PdeProblem,
    spec: &MlpSpec,
    theta: &[f64],
    candidates: &[Point],
) -> Result<ScoreVector, ScoringError> {
    let g = Surrogate { problem, spec, theta };
    ScoreVector::new(Method::OutputGrad, candidates.iter().map(|p| input_gradient_norm(&g, p)).collect())
}

/// `‖∇_θ f_k(θ)‖₂` for each term.
pub fn gradient_norms<F: ParamFn>(terms: impl IntoIterator<Item = F>, theta: &[f64]) -> Result<Vec<f64>, AdError> {
    let mut out = Vec::new();
    for_each_gradient(terms, theta, |_, _, g| out.push(g.iter().map(|x| x * x).sum::<f64>().sqrt()))?;
    Ok(out)
}

/// Parameter-gradient norm of the per-point loss per candidate.
pub fn score_loss_grad(
    problem: &PdeProblem,
    spec: &MlpSpec,
    theta: &[f64],
    candidates: &[Point],
) -> Result<ScoreVector, ScoringError> {
    let mut out = Vec::with_capacity(candidates.len());
    engine::for_each_point_gradient(problem, spec, theta, candidates, |_, _, g| {
        out.push(g.iter().map(|x| x * x).sum::<f64>().sqrt())
    })?;
    ScoreVector::new(Method::LossGrad, out)
}

/// I.i.d. uniform scores on `[0, 1)`.
pub fn score_random(n: usize, seed: u64) -> ScoreVector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ScoreVector { scores: (0..n).map(|_| rng.random()).collect(), method: Method::Random }
}
