//! Influence of a candidate collocation point on the total test loss,
//! `Inf(x⁺) = ∇ℒ_testᵀ H⁻¹ ∇L(x⁺)`, with `H` the training-loss Hessian.
//!
//! `H⁻¹` is approximated from a Krylov projection: Arnoldi iteration with
//! exact Hessian-vector products, eigendecomposition of the small projected
//! matrix, and a damped inverse on the leading eigenpairs. The vector
//! `w = H⁻¹ ∇ℒ_test` is formed once per model state, after which each
//! candidate costs one reverse-mode gradient.

use log::warn;
use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::AdError;
use crate::engine;
use crate::mlp::MlpSpec;
use crate::pde::{PdeProblem, Point};

/// Largest parameter count for which the dense oracle materializes `H`.
pub const DENSE_ORACLE_MAX_PARAMS: usize = 500;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InfluenceError {
    #[error("empty {0} set")]
    EmptySet(&'static str),
    #[error(transparent)]
    Ad(#[from] AdError),
    #[error("projection dimension {projection_dim} exceeds parameter count {param_dim}")]
    ProjectionTooLarge { projection_dim: usize, param_dim: usize },
    #[error("top_k {top_k} exceeds projection dimension {projection_dim}")]
    TopKTooLarge { top_k: usize, projection_dim: usize },
    #[error("dense oracle limited to {DENSE_ORACLE_MAX_PARAMS} parameters, got {0}")]
    TooManyParams(usize),
}

/// Knobs of the low-rank inverse.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InfluenceSettings {
    pub projection_dim: usize,
    /// Zero selects the identity in place of `H⁻¹`.
    pub top_k: usize,
    /// Eigenvalue cutoff as a fraction of `|λ_max|`.
    pub tol: f64,
    /// Damping as a fraction of `|λ_max|`.
    pub damping: f64,
    pub discard_negative: bool,
    pub test_size: usize,
}

impl Default for InfluenceSettings {
    fn default() -> Self {
        InfluenceSettings {
            projection_dim: 64,
            top_k: 32,
            tol: 1e-6,
            damping: 1e-3,
            discard_negative: false,
            test_size: 1000,
        }
    }
}

/// `∇_θ` of the mean per-point loss over `x_test`.
pub fn test_loss_grad(
    problem: &PdeProblem,
    spec: &MlpSpec,
    theta: &[f64],
    x_test: &[Point],
) -> Result<Vec<f64>, InfluenceError> {
    if x_test.is_empty() {
        return Err(InfluenceError::EmptySet("test"));
    }
    let (_, g) = engine::loss_and_grad(problem, spec, theta, x_test, 1.0 / x_test.len() as f64)?;
    Ok(g)
}

/// Mean per-point Hessian of the training loss applied to `v`.
pub fn training_hvp(
    problem: &PdeProblem,
    spec: &MlpSpec,
    theta: &[f64],
    x_train: &[Point],
    v: &[f64],
) -> Result<Vec<f64>, InfluenceError> {
    if x_train.is_empty() {
        return Err(InfluenceError::EmptySet("training"));
    }
    Ok(engine::hvp(problem, spec, theta, x_train, v, 1.0 / x_train.len() as f64)?)
}

/// Leading eigenpairs of a symmetric operator and the damping applied when
/// inverting it.
#[derive(Clone, Debug, PartialEq)]
pub struct LowRankHessian {
    /// Sorted by `|λ|`, largest first.
    pub eigenvalues: Vec<f64>,
    /// One unit vector per eigenvalue, mutually orthogonal.
    pub eigenvectors: Vec<Vec<f64>>,
    pub damping: f64,
}

impl LowRankHessian {
    pub fn rank(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn max_abs_eigenvalue(&self) -> f64 {
        self.eigenvalues.first().map_or(0.0, |l| l.abs())
    }

    pub fn with_damping(mut self, damping: f64) -> Self {
        self.damping = damping;
        self
    }

    pub fn without_negative(mut self) -> Self {
        let keep: Vec<bool> = self.eigenvalues.iter().map(|&l| l > 0.0).collect();
        let mut k = keep.iter();
        self.eigenvalues.retain(|_| *k.next().unwrap());
        let mut k = keep.iter();
        self.eigenvectors.retain(|_| *k.next().unwrap());
        self
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Arnoldi iteration with full reorthogonalization on `hvp`, started from a
/// seeded random vector. The projected matrix is symmetrized before its
/// eigendecomposition; the `top_k` eigenpairs by magnitude with
/// `|λ| > tol·|λ_max|` are lifted back to parameter space.
///
/// A vanishing Krylov residual ends the iteration early with the invariant
/// subspace found so far.
pub fn arnoldi_low_rank<E>(
    mut hvp: impl FnMut(&[f64]) -> Result<Vec<f64>, E>,
    param_dim: usize,
    projection_dim: usize,
    top_k: usize,
    seed: u64,
    tol: f64,
) -> Result<LowRankHessian, E>
where
    E: From<InfluenceError>,
{
    if projection_dim > param_dim {
        return Err(InfluenceError::ProjectionTooLarge { projection_dim, param_dim }.into());
    }
    if top_k > projection_dim {
        return Err(InfluenceError::TopKTooLarge { top_k, projection_dim }.into());
    }
    let empty = LowRankHessian { eigenvalues: vec![], eigenvectors: vec![], damping: 0.0 };
    if projection_dim == 0 || top_k == 0 {
        return Ok(empty);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut q0: Vec<f64> = (0..param_dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    let n0 = norm(&q0);
    q0.iter_mut().for_each(|x| *x /= n0);

    let mut basis: Vec<Vec<f64>> = vec![q0];
    let mut h = DMatrix::<f64>::zeros(projection_dim, projection_dim);
    let mut scale: f64 = 0.0;
    for j in 0..projection_dim {
        let mut w = hvp(&basis[j])?;
        // two Gram–Schmidt passes keep the basis orthogonal to roundoff
        for _ in 0..2 {
            for (i, q) in basis.iter().enumerate() {
                let c = dot(q, &w);
                h[(i, j)] += c;
                w.iter_mut().zip(q).for_each(|(wi, qi)| *wi -= c * qi);
            }
        }
        let beta = norm(&w);
        scale = scale.max(h.column(j).amax()).max(beta);
        if j + 1 == projection_dim {
            break;
        }
        if beta <= 1e-12 * scale {
            break;
        }
        h[(j + 1, j)] = beta;
        basis.push(w.into_iter().map(|x| x / beta).collect());
    }
    let m = basis.len();
    let hm = h.view((0, 0), (m, m)).into_owned();
    let sym = (&hm + hm.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);

    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].abs().total_cmp(&eig.eigenvalues[a].abs()).then(a.cmp(&b)));
    let lmax = order.first().map_or(0.0, |&i| eig.eigenvalues[i].abs());
    let mut out = empty;
    for &i in order.iter().take(top_k) {
        let lambda = eig.eigenvalues[i];
        if !(lambda.abs() > tol * lmax) {
            continue;
        }
        let y = eig.eigenvectors.column(i);
        let mut v = vec![0.0; param_dim];
        for (k, q) in basis.iter().enumerate() {
            v.iter_mut().zip(q).for_each(|(vi, qi)| *vi += y[k] * qi);
        }
        out.eigenvalues.push(lambda);
        out.eigenvectors.push(v);
    }
    Ok(out)
}

fn signed_damped(lambda: f64, damping: f64) -> f64 {
    // sign(0) taken as +1
    lambda + if lambda < 0.0 { -damping } else { damping }
}

/// `Σ_i (e_iᵀv)/(λ_i + δ·sign λ_i) · e_i` over the retained eigenpairs.
pub fn inverse_hvp(lr: &LowRankHessian, v: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; v.len()];
    for (lambda, e) in lr.eigenvalues.iter().zip(&lr.eigenvectors) {
        let denom = signed_damped(*lambda, lr.damping);
        if denom.abs() < 1e-12 {
            warn!("skipping eigenvalue {lambda} with damped magnitude {denom:e}");
            continue;
        }
        let c = dot(e, v) / denom;
        out.iter_mut().zip(e).for_each(|(o, ei)| *o += c * ei);
    }
    out
}

/// Frozen model state with the preconditioned test gradient `w`.
#[derive(Clone, Debug)]
pub struct InfluenceContext {
    theta: Vec<f64>,
    g_test: Vec<f64>,
    w: Vec<f64>,
    hessian: Option<LowRankHessian>,
}

impl InfluenceContext {
    /// Factorizes the training Hessian at `theta` and preconditions the
    /// test-loss gradient. `top_k = 0` uses the identity instead.
    pub fn prepare(
        problem: &PdeProblem,
        spec: &MlpSpec,
        theta: &[f64],
        x_train: &[Point],
        x_test: &[Point],
        settings: &InfluenceSettings,
        seed: u64,
    ) -> Result<Self, InfluenceError> {
        let g_test = test_loss_grad(problem, spec, theta, x_test)?;
        if settings.top_k == 0 {
            return Ok(Self::identity(theta.to_vec(), g_test));
        }
        let projection_dim = settings.projection_dim.min(theta.len());
        let lr = arnoldi_low_rank(
            |v: &[f64]| training_hvp(problem, spec, theta, x_train, v),
            theta.len(),
            projection_dim,
            settings.top_k.min(projection_dim),
            seed,
            settings.tol,
        )?;
        let lr = if settings.discard_negative { lr.without_negative() } else { lr };
        let damping = settings.damping * lr.max_abs_eigenvalue();
        Ok(Self::from_hessian(theta.to_vec(), g_test, lr.with_damping(damping)))
    }

    pub fn identity(theta: Vec<f64>, g_test: Vec<f64>) -> Self {
        let w = g_test.clone();
        InfluenceContext { theta, g_test, w, hessian: None }
    }

    pub fn from_hessian(theta: Vec<f64>, g_test: Vec<f64>, lr: LowRankHessian) -> Self {
        let w = inverse_hvp(&lr, &g_test);
        InfluenceContext { theta, g_test, w, hessian: Some(lr) }
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn test_gradient(&self) -> &[f64] {
        &self.g_test
    }

    pub fn preconditioned(&self) -> &[f64] {
        &self.w
    }

    pub fn hessian(&self) -> Option<&LowRankHessian> {
        self.hessian.as_ref()
    }

    /// `wᵀ g` for a candidate's loss gradient `g`.
    pub fn influence_of_gradient(&self, g: &[f64]) -> f64 {
        dot(&self.w, g)
    }

    pub fn influence(&self, problem: &PdeProblem, spec: &MlpSpec, x_plus: &Point) -> Result<f64, InfluenceError> {
        Ok(self.influences(problem, spec, std::slice::from_ref(x_plus))?[0])
    }

    /// Influence of each candidate.
    pub fn influences(&self, problem: &PdeProblem, spec: &MlpSpec, points: &[Point]) -> Result<Vec<f64>, InfluenceError> {
        let mut out = vec![0.0; points.len()];
        engine::for_each_point_gradient(problem, spec, &self.theta, points, |k, _, g| {
            out[k] = self.influence_of_gradient(g);
        })?;
        Ok(out)
    }
}

/// Dense `|θ| × |θ|` training Hessian from one HVP per basis vector,
/// symmetrized.
pub fn dense_training_hessian(
    problem: &PdeProblem,
    spec: &MlpSpec,
    theta: &[f64],
    x_train: &[Point],
) -> Result<DMatrix<f64>, InfluenceError> {
    let n = theta.len();
    if n > DENSE_ORACLE_MAX_PARAMS {
        return Err(InfluenceError::TooManyParams(n));
    }
    let mut h = DMatrix::zeros(n, n);
    let mut e = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        let col = training_hvp(problem, spec, theta, x_train, &e)?;
        e[j] = 0.0;
        h.set_column(j, &nalgebra::DVector::from_vec(col));
    }
    Ok((&h + h.transpose()) * 0.5)
}

/// Influence with the full damped inverse of the materialized Hessian.
pub fn dense_influence_oracle(
    problem: &PdeProblem,
    spec: &MlpSpec,
    theta: &[f64],
    x_train: &[Point],
    x_test: &[Point],
    x_plus: &Point,
    damping: f64,
) -> Result<f64, InfluenceError> {
    Ok(dense_influence_oracle_many(problem, spec, theta, x_train, x_test, std::slice::from_ref(x_plus), damping)?[0])
}

/// [`dense_influence_oracle`] for many candidates sharing one factorization.
pub fn dense_influence_oracle_many(
    problem: &PdeProblem,
    spec: &MlpSpec,
    theta: &[f64],
    x_train: &[Point],
    x_test: &[Point],
    candidates: &[Point],
    damping: f64,
) -> Result<Vec<f64>, InfluenceError> {
    let h = dense_training_hessian(problem, spec, theta, x_train)?;
    let n = theta.len();
    let eig = SymmetricEigen::new(h);
    let lr = LowRankHessian {
        eigenvalues: eig.eigenvalues.iter().copied().collect(),
        eigenvectors: (0..n).map(|i| eig.eigenvectors.column(i).iter().copied().collect()).collect(),
        damping,
    };
    let g_test = test_loss_grad(problem, spec, theta, x_test)?;
    InfluenceContext::from_hessian(theta.to_vec(), g_test, lr).influences(problem, spec, candidates)
}
