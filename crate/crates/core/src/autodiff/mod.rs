//! Scalar-graph automatic differentiation.
//!
//! Three modes are layered on one [`Scalar`] interface:
//!
//! * reverse mode over a [`Tape`] of `f64` values, for parameter gradients;
//! * forward-mode [`Jet`]s for first and pure second input derivatives,
//!   nested over any scalar (including tape variables, so residuals built
//!   from input derivatives can themselves be differentiated in θ);
//! * forward-over-reverse Hessian-vector products: the tape is recorded with
//!   [`Dual`] values whose tangent is the probe direction, and the ordinary
//!   reverse sweep then returns `H·v` in the tangent of every adjoint.
//!
//! A model is written once as a [`ParamFn`] (or [`InputFn`]) generic over
//! the scalar type and evaluated with whichever mode is needed.

mod jet;
mod real;
mod scalar;
mod tape;

pub use jet::Jet;
pub use real::{Dual, Real};
pub use scalar::Scalar;
pub use tape::{Tape, Var};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AdError {
    #[error("non-finite value {value} at tape node {node}")]
    NonFinite { node: usize, value: f64 },
    #[error("non-finite residual {value} at point {point}")]
    NonFiniteResidual { point: usize, value: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// Scalar-valued function of a parameter vector.
pub trait ParamFn {
    fn eval<S: Scalar<Coef = S>>(&self, theta: &[S]) -> S;
}

/// Scalar-valued function of a `D`-dimensional input point.
pub trait InputFn<const D: usize> {
    fn eval<S: Scalar>(&self, x: &[S; D]) -> S;
}

/// `∇_θ f(θ)`, evaluating `f` once forward and once backward.
pub fn grad<F: ParamFn>(f: &F, theta: &[f64]) -> Result<Vec<f64>, AdError> {
    let mut out = Vec::new();
    for_each_gradient(std::iter::once(f), theta, |_, _, g| out = g.to_vec())?;
    Ok(out)
}

impl<F: ParamFn> ParamFn for &F {
    fn eval<S: Scalar<Coef = S>>(&self, theta: &[S]) -> S {
        (**self).eval(theta)
    }
}

/// Differentiates every term separately on one reused tape and hands
/// `(index, value, gradient)` to `visit`.
///
/// The tape is rewound to the parameter leaves between terms, so no
/// intermediate nodes leak from one evaluation into the next.
pub fn for_each_gradient<F: ParamFn>(
    terms: impl IntoIterator<Item = F>,
    theta: &[f64],
    mut visit: impl FnMut(usize, f64, &[f64]),
) -> Result<(), AdError> {
    let n = theta.len();
    let tape = Tape::<f64>::new();
    let params: Vec<Var<'_, f64>> = theta.iter().map(|&t| tape.var(t)).collect();
    let mut adj = Vec::new();
    let mut grad = vec![0.0; n];
    for (k, term) in terms.into_iter().enumerate() {
        tape.truncate(n);
        let out = term.eval(&params);
        tape.backward_into(&out, &mut adj)?;
        if !out.value().is_finite() {
            return Err(AdError::NonFinite { node: out.index().unwrap_or(0), value: out.value() });
        }
        for (i, g) in grad.iter_mut().enumerate() {
            *g = adj.get(i).copied().unwrap_or(0.0);
        }
        visit(k, out.value(), &grad);
    }
    Ok(())
}

/// `(Σ f_k(θ), Σ ∇f_k(θ))`, both multiplied by `weight`. Terms are reduced in
/// iteration order.
pub fn grad_sum<F: ParamFn>(
    terms: impl IntoIterator<Item = F>,
    theta: &[f64],
    weight: f64,
) -> Result<(f64, Vec<f64>), AdError> {
    let mut total = vec![0.0; theta.len()];
    let mut value = 0.0;
    for_each_gradient(terms, theta, |_, v, g| {
        value += v;
        for (t, gi) in total.iter_mut().zip(g) {
            *t += gi;
        }
    })?;
    for t in &mut total {
        *t *= weight;
    }
    Ok((value * weight, total))
}

/// Hessian-vector product `∇²f(θ)·v` by forward-over-reverse differentiation.
pub fn hvp<F: ParamFn>(f: &F, theta: &[f64], v: &[f64]) -> Result<Vec<f64>, AdError> {
    hvp_sum(std::iter::once(f), theta, v, 1.0)
}

/// `weight · Σ_k ∇²f_k(θ)·v`, accumulated in iteration order.
pub fn hvp_sum<F: ParamFn>(
    terms: impl IntoIterator<Item = F>,
    theta: &[f64],
    v: &[f64],
    weight: f64,
) -> Result<Vec<f64>, AdError> {
    let n = theta.len();
    if v.len() != n {
        return Err(AdError::DimensionMismatch { expected: n, got: v.len() });
    }
    let tape = Tape::<Dual>::new();
    let params: Vec<Var<'_, Dual>> =
        theta.iter().zip(v).map(|(&t, &d)| tape.var(Dual::new(t, d))).collect();
    let mut adj = Vec::new();
    let mut out = vec![0.0; n];
    for term in terms {
        tape.truncate(n);
        let y = term.eval(&params);
        tape.backward_into(&y, &mut adj)?;
        for (o, a) in out.iter_mut().zip(&adj) {
            *o += a.eps;
        }
    }
    for o in &mut out {
        *o *= weight;
    }
    Ok(out)
}

/// Value, first and second derivative of `g` along coordinate `dir` at `x`.
pub fn input_jet<G: InputFn<D>, const D: usize>(g: &G, x: &[f64; D], dir: usize) -> (f64, f64, f64) {
    let mut order = [0u8; D];
    order[dir] = 2;
    let coords = Jet::<f64, D>::coordinates(x, order);
    let y = g.eval(&coords);
    (y.v, y.d[dir], y.dd[dir])
}
