//! The five benchmark problems on two-dimensional space-time boxes.
//!
//! Initial and boundary conditions are enforced by construction: the network
//! output `N(x, t)` is wrapped in an ansatz that equals the prescribed data on
//! the constrained manifolds for any parameters, so training only ever
//! penalizes the interior residual.

mod grid;
pub mod reference;

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{Jet, ParamFn, Scalar};
use crate::mlp::{self, MlpSpec};

pub use grid::{load_ground_truth, GridError, GroundTruthGrid};

/// A point `(x, t)`.
pub type Point = [f64; 2];

#[derive(Debug, Error)]
pub enum PdeError {
    #[error("unknown problem `{0}` (expected diffusion|burgers|allen_cahn|wave|drift_diffusion)")]
    UnknownProblem(String),
    #[error("{0} has no closed-form solution")]
    NoClosedForm(ProblemKind),
    #[error("empty point set")]
    EmptySet,
    #[error("{problem}: condition `{condition}` violated at ({x}, {t}) by {error:e}")]
    ConstraintViolation { problem: ProblemKind, condition: &'static str, x: f64, t: f64, error: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    Diffusion,
    Burgers,
    AllenCahn,
    Wave,
    DriftDiffusion,
}

impl ProblemKind {
    pub const ALL: [ProblemKind; 5] = [
        ProblemKind::Diffusion,
        ProblemKind::Burgers,
        ProblemKind::AllenCahn,
        ProblemKind::Wave,
        ProblemKind::DriftDiffusion,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ProblemKind::Diffusion => "diffusion",
            ProblemKind::Burgers => "burgers",
            ProblemKind::AllenCahn => "allen_cahn",
            ProblemKind::Wave => "wave",
            ProblemKind::DriftDiffusion => "drift_diffusion",
        }
    }

    /// File name of the tabulated reference solution, for problems without
    /// a closed form.
    pub fn ground_truth_file(self) -> Option<&'static str> {
        match self {
            ProblemKind::Burgers => Some("burgers.txt"),
            ProblemKind::AllenCahn => Some("allen_cahn.txt"),
            _ => None,
        }
    }
}

impl fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ProblemKind {
    type Err = PdeError;
    fn from_str(s: &str) -> Result<Self, PdeError> {
        ProblemKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| PdeError::UnknownProblem(s.to_string()))
    }
}

/// Axis-aligned box `(lower[0], upper[0]) × (lower[1], upper[1])`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxDomain {
    pub lower: [f64; 2],
    pub upper: [f64; 2],
}

impl BoxDomain {
    pub fn new(lower: [f64; 2], upper: [f64; 2]) -> Self {
        BoxDomain { lower, upper }
    }

    pub fn extent(&self, axis: usize) -> f64 {
        self.upper[axis] - self.lower[axis]
    }

    pub fn contains_open(&self, p: &Point) -> bool {
        (0..2).all(|a| p[a] > self.lower[a] && p[a] < self.upper[a])
    }

    pub fn contains_closed(&self, p: &Point) -> bool {
        (0..2).all(|a| p[a] >= self.lower[a] && p[a] <= self.upper[a])
    }

    /// Maps unit-cube coordinates onto the box.
    pub fn from_unit(&self, u: [f64; 2]) -> Point {
        [self.lower[0] + u[0] * self.extent(0), self.lower[1] + u[1] * self.extent(1)]
    }
}

/// Residual operator and its coefficients.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "equation", rename_all = "snake_case")]
pub enum Equation {
    /// `u_t = u_xx + (π²−1) sin(πx) e^{−t}`
    Diffusion,
    /// `u_t + u u_x = ν u_xx`
    Burgers { nu: f64 },
    /// `u_t = D u_xx + r (u − u³)`
    AllenCahn { diffusivity: f64, reaction: f64 },
    /// `u_tt = c² u_xx`
    Wave { speed: f64 },
    /// `u_t = α u_xx − β u_x`
    DriftDiffusion { alpha: f64, beta: f64 },
}

/// One initial or boundary condition enforced by the ansatz.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Condition {
    /// `u(x, t_min)` prescribed.
    InitialValue,
    /// `∂u/∂t(x, t_min)` prescribed.
    InitialVelocity,
    /// `u(x_min, t)` prescribed.
    LowerBoundary,
    /// `u(x_max, t)` prescribed.
    UpperBoundary,
}

impl Condition {
    pub fn name(self) -> &'static str {
        match self {
            Condition::InitialValue => "initial value",
            Condition::InitialVelocity => "initial velocity",
            Condition::LowerBoundary => "lower x boundary",
            Condition::UpperBoundary => "upper x boundary",
        }
    }
}

/// A benchmark problem: domain, residual, hard-constraint ansatz and
/// (where available) closed-form solution.
#[derive(Clone, Debug, PartialEq)]
pub struct PdeProblem {
    kind: ProblemKind,
    equation: Equation,
    domain: BoxDomain,
    ansatz: ProblemKind,
}

/// Burgers' viscosity of the shock-forming reference dataset.
pub const BURGERS_NU: f64 = 0.01 / PI;

impl PdeProblem {
    pub fn new(kind: ProblemKind) -> Self {
        let unit_time = |lo: f64, hi: f64| BoxDomain::new([lo, 0.0], [hi, 1.0]);
        let (equation, domain) = match kind {
            ProblemKind::Diffusion => (Equation::Diffusion, unit_time(-1.0, 1.0)),
            ProblemKind::Burgers => (Equation::Burgers { nu: BURGERS_NU }, unit_time(-1.0, 1.0)),
            ProblemKind::AllenCahn => {
                (Equation::AllenCahn { diffusivity: 1e-3, reaction: 5.0 }, unit_time(-1.0, 1.0))
            }
            ProblemKind::Wave => (Equation::Wave { speed: 2.0 }, unit_time(0.0, 1.0)),
            ProblemKind::DriftDiffusion => {
                (Equation::DriftDiffusion { alpha: 1.0, beta: 20.0 }, unit_time(0.0, TAU))
            }
        };
        PdeProblem { kind, equation, domain, ansatz: kind }
    }

    pub fn burgers(nu: f64) -> Self {
        PdeProblem { equation: Equation::Burgers { nu }, ..Self::new(ProblemKind::Burgers) }
    }

    /// Same problem with a different equation's ansatz. Only useful to build
    /// deliberately broken fixtures for the constraint checks.
    pub fn with_ansatz(mut self, ansatz: ProblemKind) -> Self {
        self.ansatz = ansatz;
        self
    }

    pub fn kind(&self) -> ProblemKind {
        self.kind
    }

    pub fn name(&self) -> &'static str {
        self.kind.name()
    }

    pub fn equation(&self) -> Equation {
        self.equation
    }

    pub fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    pub fn has_closed_form(&self) -> bool {
        matches!(self.kind, ProblemKind::Diffusion | ProblemKind::Wave | ProblemKind::DriftDiffusion)
    }

    /// Derivative orders in `(x, t)` the residual needs.
    pub fn jet_order(&self) -> [u8; 2] {
        match self.equation {
            Equation::Wave { .. } => [2, 2],
            _ => [2, 1],
        }
    }

    pub fn conditions(&self) -> &'static [Condition] {
        use Condition::*;
        match self.kind {
            ProblemKind::Wave => &[InitialValue, InitialVelocity, LowerBoundary, UpperBoundary],
            _ => &[InitialValue, LowerBoundary, UpperBoundary],
        }
    }

    fn drift_coefficients(&self) -> (f64, f64) {
        match self.equation {
            Equation::DriftDiffusion { alpha, beta } => (alpha, beta),
            _ => (1.0, 20.0),
        }
    }

    /// Initial condition `u(x, 0)`.
    fn initial<S: Scalar>(&self, kind: ProblemKind, x: &S) -> S {
        match kind {
            ProblemKind::Diffusion => x.scale(PI).sin(),
            ProblemKind::Burgers => -x.scale(PI).sin(),
            ProblemKind::AllenCahn => x.square() * x.scale(PI).cos(),
            ProblemKind::Wave => x.scale(PI).sin() + x.scale(4.0 * PI).sin().scale(0.5),
            ProblemKind::DriftDiffusion => (x.scale(2.0) + S::constant(PI / 4.0)).sin(),
        }
    }

    /// Drift-diffusion boundary data `g(t) = sin(phase − 2βt) e^{−4αt}`.
    fn drift_boundary<S: Scalar>(&self, phase: f64, t: &S) -> S {
        let (alpha, beta) = self.drift_coefficients();
        (S::constant(phase) - t.scale(2.0 * beta)).sin() * t.scale(-4.0 * alpha).exp()
    }

    /// Hard-constrained surrogate from the raw network output.
    pub fn apply_ansatz<S: Scalar>(&self, x: &S, t: &S, net: S) -> S {
        let (lift, gate) = self.ansatz_parts(x, t);
        lift + gate * net
    }

    /// `(lift, gate)` with `φ̃ = lift + gate · N`: the lift carries the
    /// initial and boundary data, the gate vanishes wherever they are imposed.
    pub fn ansatz_parts<S: Scalar>(&self, x: &S, t: &S) -> (S, S) {
        let one = S::constant(1.0);
        match self.ansatz {
            ProblemKind::Diffusion | ProblemKind::Burgers | ProblemKind::AllenCahn => {
                (self.initial(self.ansatz, x), t.clone() * (one - x.square()))
            }
            ProblemKind::Wave => {
                (self.initial(ProblemKind::Wave, x), t.square() * x.clone() * (one - x.clone()))
            }
            ProblemKind::DriftDiffusion => {
                // transfinite lift of the boundary data plus a gated correction
                let len = TAU;
                let right = x.scale(1.0 / len);
                let left = one - right.clone();
                let (p0, p1) = (PI / 4.0, 17.0 * PI / 4.0);
                let g0 = self.drift_boundary(p0, t) - S::constant(p0.sin());
                let g1 = self.drift_boundary(p1, t) - S::constant(p1.sin());
                let lift = self.initial(ProblemKind::DriftDiffusion, x) + left * g0 + right * g1;
                (lift, t.clone() * x.clone() * (S::constant(len) - x.clone()))
            }
        }
    }

    /// Constrained prediction `φ̃(x; θ)` with jets of the requested orders.
    pub fn surrogate_jet<S: Scalar>(
        &self,
        spec: &MlpSpec,
        theta: &[S::Coef],
        p: &Point,
        order: [u8; 2],
    ) -> Jet<S, 2> {
        let [x, t] = Jet::<S, 2>::coordinates(p, order);
        let net = mlp::forward(spec, theta, &[x.clone(), t.clone()]);
        self.apply_ansatz(&x, &t, net)
    }

    /// Constrained prediction value only.
    pub fn surrogate_value(&self, spec: &MlpSpec, theta: &[f64], p: &Point) -> f64 {
        let net = mlp::forward(spec, theta, p);
        self.apply_ansatz(&p[0], &p[1], net)
    }

    /// Source term of the equation at `p`.
    pub fn forcing(&self, p: &Point) -> f64 {
        match self.equation {
            Equation::Diffusion => (PI * PI - 1.0) * (PI * p[0]).sin() * (-p[1]).exp(),
            _ => 0.0,
        }
    }

    /// `𝒩[u](p)` given the jets of `u` at `p`.
    pub fn residual_from_jet<S: Scalar>(&self, u: &Jet<S, 2>, p: &Point) -> S {
        let (ux, uxx, ut) = (u.d[0].clone(), u.dd[0].clone(), u.d[1].clone());
        match self.equation {
            Equation::Diffusion => ut - uxx - S::constant(self.forcing(p)),
            Equation::Burgers { nu } => ut + u.v.clone() * ux - uxx.scale(nu),
            Equation::AllenCahn { diffusivity, reaction } => {
                ut - uxx.scale(diffusivity) + (u.v.powi(3) - u.v.clone()).scale(reaction)
            }
            Equation::Wave { speed } => u.dd[1].clone() - uxx.scale(speed * speed),
            Equation::DriftDiffusion { alpha, beta } => ut - uxx.scale(alpha) + ux.scale(beta),
        }
    }

    /// Residual of the constrained surrogate at `p`.
    pub fn residual<S: Scalar>(&self, spec: &MlpSpec, theta: &[S::Coef], p: &Point) -> S {
        let u = self.surrogate_jet::<S>(spec, theta, p, self.jet_order());
        self.residual_from_jet(&u, p)
    }

    /// Mean squared residual over `points`.
    pub fn pde_loss(&self, spec: &MlpSpec, theta: &[f64], points: &[Point]) -> Result<f64, PdeError> {
        if points.is_empty() {
            return Err(PdeError::EmptySet);
        }
        let sum: f64 = points.iter().map(|p| self.residual::<f64>(spec, theta, p).powi(2)).sum();
        Ok(sum / points.len() as f64)
    }

    /// Closed-form solution over any scalar, `None` where none is known.
    pub fn exact<S: Scalar>(&self, x: &S, t: &S) -> Option<S> {
        match self.equation {
            Equation::Diffusion => Some(x.scale(PI).sin() * (-t.clone()).exp()),
            Equation::Wave { speed } => Some(
                x.scale(PI).sin() * t.scale(PI * speed).cos()
                    + (x.scale(4.0 * PI).sin() * t.scale(4.0 * PI * speed).cos()).scale(0.5),
            ),
            Equation::DriftDiffusion { alpha, beta } => Some(
                (x.scale(2.0) - t.scale(2.0 * beta) + S::constant(PI / 4.0)).sin()
                    * t.scale(-4.0 * alpha).exp(),
            ),
            Equation::Burgers { .. } | Equation::AllenCahn { .. } => None,
        }
    }

    pub fn exact_solution(&self, p: &Point) -> Result<f64, PdeError> {
        self.exact(&p[0], &p[1]).ok_or(PdeError::NoClosedForm(self.kind))
    }

    /// Value (or time derivative) the condition prescribes at the manifold
    /// coordinate `s` (x for initial conditions, t for boundaries).
    pub fn prescribed(&self, cond: Condition, s: f64) -> f64 {
        match (cond, self.kind) {
            (Condition::InitialValue, k) => self.initial(k, &s),
            (Condition::InitialVelocity, _) => 0.0,
            (Condition::LowerBoundary, ProblemKind::DriftDiffusion) => self.drift_boundary(PI / 4.0, &s),
            (Condition::UpperBoundary, ProblemKind::DriftDiffusion) => {
                self.drift_boundary(17.0 * PI / 4.0, &s)
            }
            (_, ProblemKind::AllenCahn) => -1.0,
            _ => 0.0,
        }
    }

    /// Point on the manifold of `cond` at coordinate fraction `u ∈ [0, 1]`.
    pub fn condition_point(&self, cond: Condition, u: f64) -> Point {
        let d = &self.domain;
        match cond {
            Condition::InitialValue | Condition::InitialVelocity => {
                [d.lower[0] + u * d.extent(0), d.lower[1]]
            }
            Condition::LowerBoundary => [d.lower[0], d.lower[1] + u * d.extent(1)],
            Condition::UpperBoundary => [d.upper[0], d.lower[1] + u * d.extent(1)],
        }
    }

    /// Checks every condition at `n` random manifold points; returns the
    /// largest deviation or the first violation above `tol`.
    pub fn check_constraints(
        &self,
        spec: &MlpSpec,
        theta: &[f64],
        n: usize,
        seed: u64,
        tol: f64,
    ) -> Result<f64, PdeError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst: f64 = 0.0;
        for &cond in self.conditions() {
            for _ in 0..n {
                let p = self.condition_point(cond, rng.random::<f64>());
                let s = if matches!(cond, Condition::InitialValue | Condition::InitialVelocity) { p[0] } else { p[1] };
                let got = match cond {
                    Condition::InitialVelocity => self.surrogate_jet::<f64>(spec, theta, &p, [0, 1]).d[1],
                    _ => self.surrogate_value(spec, theta, &p),
                };
                let err = (got - self.prescribed(cond, s)).abs();
                if !(err <= tol) {
                    return Err(PdeError::ConstraintViolation {
                        problem: self.kind,
                        condition: cond.name(),
                        x: p[0],
                        t: p[1],
                        error: err,
                    });
                }
                worst = worst.max(err);
            }
        }
        Ok(worst)
    }
}

/// Per-point loss `L(x; θ) = 𝒩[φ̃(x; θ)]²` as a differentiable function of θ.
#[derive(Clone, Copy, Debug)]
pub struct PointLoss<'a> {
    pub problem: &'a PdeProblem,
    pub spec: &'a MlpSpec,
    pub point: Point,
}

impl<'a> PointLoss<'a> {
    pub fn new(problem: &'a PdeProblem, spec: &'a MlpSpec, point: Point) -> Self {
        PointLoss { problem, spec, point }
    }

    pub fn over<'p>(
        problem: &'a PdeProblem,
        spec: &'a MlpSpec,
        points: &'p [Point],
    ) -> impl Iterator<Item = PointLoss<'a>> + 'p
    where
        'a: 'p,
    {
        points.iter().map(move |&p| PointLoss::new(problem, spec, p))
    }
}

impl ParamFn for PointLoss<'_> {
    fn eval<S: Scalar<Coef = S>>(&self, theta: &[S]) -> S {
        self.problem.residual::<S>(self.spec, theta, &self.point).square()
    }
}
