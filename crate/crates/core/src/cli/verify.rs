//! Self-checks run by `pinn-resample verify`: derivatives against finite
//! differences, closed-form residuals, hard constraints, the low-rank
//! influence against the dense oracle, and the sampling primitives.

use std::fmt;
use std::time::Instant;

use crate::autodiff::{grad_sum, hvp_sum, Jet};
use crate::engine;
use crate::influence::{
    arnoldi_low_rank, dense_influence_oracle_many, test_loss_grad, training_hvp, InfluenceContext,
};
use crate::mlp::{init, MlpSpec};
use crate::pde::{PdeProblem, Point, PointLoss, ProblemKind};
use crate::sampling::{build_pmf, hammersley_unit, uniform_sample};
use crate::scoring::{score_grad_dot, score_pinnfluence};

/// Outcome of one check.
#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Check { name: name.into(), passed, detail: detail.into() }
    }

    fn bound(name: impl Into<String>, value: f64, limit: f64) -> Self {
        Check::new(name, value < limit, format!("{value:.3e} < {limit:.0e}"))
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag} {}: {}", self.name, self.detail)
    }
}

fn rel(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    let base: f64 = b.iter().map(|y| y * y).sum();
    (diff / base.max(f64::MIN_POSITIVE)).sqrt()
}

fn interior(problem: &PdeProblem, n: usize, seed: u64) -> Vec<Point> {
    uniform_sample(problem.domain(), n, seed)
}

/// Gradient of the mean squared residual, tape and batched, against central
/// differences of the loss.
pub fn gradient_check(kind: ProblemKind) -> Check {
    let problem = PdeProblem::new(kind);
    let spec = MlpSpec::new(2, vec![5, 5], 1).expect("valid spec");
    let theta = init(&spec, 11).into_values();
    let pts = interior(&problem, 8, 12);
    let w = 1.0 / pts.len() as f64;
    let loss = |th: &[f64]| problem.pde_loss(&spec, th, &pts).expect("non-empty");
    let h = 1e-6;
    let mut probe = theta.clone();
    let fd: Vec<f64> = (0..theta.len())
        .map(|i| {
            probe[i] = theta[i] + h;
            let up = loss(&probe);
            probe[i] = theta[i] - h;
            let down = loss(&probe);
            probe[i] = theta[i];
            (up - down) / (2.0 * h)
        })
        .collect();
    let result = grad_sum(PointLoss::over(&problem, &spec, &pts), &theta, w)
        .and_then(|(_, tape)| Ok((tape, engine::loss_and_grad(&problem, &spec, &theta, &pts, w)?.1)));
    match result {
        Ok((tape, batched)) => Check::bound(format!("{kind} gradient"), rel(&tape, &fd).max(rel(&batched, &fd)), 1e-6),
        Err(e) => Check::new(format!("{kind} gradient"), false, e.to_string()),
    }
}

/// First and second input derivatives of the surrogate against central
/// differences.
pub fn input_jet_check(kind: ProblemKind) -> Check {
    let problem = PdeProblem::new(kind);
    let spec = MlpSpec::new(2, vec![6, 6], 1).expect("valid spec");
    let theta = init(&spec, 21).into_values();
    let value = |p: Point| problem.surrogate_value(&spec, &theta, &p);
    let (mut ad, mut fd) = (Vec::new(), Vec::new());
    for p in interior(&problem, 20, 22) {
        let jet: Jet<f64, 2> = problem.surrogate_jet::<f64>(&spec, &theta, &p, [2, 2]);
        for axis in 0..2 {
            let shift = |h: f64| {
                let mut q = p;
                q[axis] += h;
                value(q)
            };
            let (h1, h2) = (1e-5, 1e-4);
            ad.push(jet.d[axis]);
            fd.push((shift(h1) - shift(-h1)) / (2.0 * h1));
            ad.push(jet.dd[axis]);
            fd.push((shift(h2) - 2.0 * value(p) + shift(-h2)) / (h2 * h2));
        }
    }
    Check::bound(format!("{kind} input jets"), rel(&ad, &fd), 1e-5)
}

/// Hessian-vector products against a Hessian assembled from central
/// differences of the gradient; error relative to the Frobenius norm.
pub fn hvp_check(kind: ProblemKind) -> Check {
    let problem = PdeProblem::new(kind);
    let spec = MlpSpec::new(2, vec![8, 8], 1).expect("valid spec");
    let theta = init(&spec, 31).into_values();
    let pts = interior(&problem, 16, 32);
    let n = theta.len();
    let w = 1.0 / pts.len() as f64;
    let name = format!("{kind} hvp ({n} params)");
    let gradient = |th: &[f64]| engine::loss_and_grad(&problem, &spec, th, &pts, w).map(|(_, g)| g);
    let h = 1e-5;
    let mut hess = vec![vec![0.0; n]; n];
    let mut probe = theta.clone();
    for j in 0..n {
        probe[j] = theta[j] + h;
        let up = gradient(&probe);
        probe[j] = theta[j] - h;
        let down = gradient(&probe);
        probe[j] = theta[j];
        match (up, down) {
            (Ok(u), Ok(d)) => (0..n).for_each(|i| hess[i][j] = (u[i] - d[i]) / (2.0 * h)),
            (Err(e), _) | (_, Err(e)) => return Check::new(name, false, e.to_string()),
        }
    }
    let frob = hess.iter().flatten().map(|x| x * x).sum::<f64>().sqrt();
    let mut worst: f64 = 0.0;
    for k in 0..3 {
        let v: Vec<f64> = interior(&problem, n.div_ceil(2), 33 + k).into_iter().flatten().take(n).collect();
        let dense: Vec<f64> = hess.iter().map(|row| row.iter().zip(&v).map(|(a, b)| a * b).sum()).collect();
        let routes = engine::hvp(&problem, &spec, &theta, &pts, &v, w)
            .and_then(|b| Ok((b, hvp_sum(PointLoss::over(&problem, &spec, &pts), &theta, &v, w)?)));
        let (batched, tape) = match routes {
            Ok(r) => r,
            Err(e) => return Check::new(name, false, e.to_string()),
        };
        let vnorm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        for out in [&batched, &tape] {
            let err = out.iter().zip(&dense).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            worst = worst.max(err / vnorm);
        }
    }
    Check::bound(name, worst / frob, 1e-6)
}

/// Largest residual of the closed-form solution at random interior points.
pub fn closed_form_check(kind: ProblemKind) -> Check {
    let problem = PdeProblem::new(kind);
    let worst = interior(&problem, 1000, 41)
        .iter()
        .map(|p| {
            let [x, t] = Jet::<f64, 2>::coordinates(p, problem.jet_order());
            let u = problem.exact(&x, &t).expect("closed form");
            problem.residual_from_jet(&u, p).abs()
        })
        .fold(0.0, f64::max);
    Check::bound(format!("{kind} closed-form residual"), worst, 1e-8)
}

/// Initial and boundary data of the constrained surrogate; the failure
/// names the equation and condition.
pub fn constraint_check(problem: &PdeProblem) -> Check {
    let spec = MlpSpec::new(2, vec![8, 8], 1).expect("valid spec");
    let theta = init(&spec, 51).into_values();
    let name = format!("{} hard constraints", problem.name());
    match problem.check_constraints(&spec, &theta, 1000, 52, 1e-12) {
        Ok(worst) => Check::new(name, true, format!("max deviation {worst:.1e}")),
        Err(e) => Check::new(name, false, e.to_string()),
    }
}

/// Low-rank influence at full projection against the dense inverse.
pub fn influence_oracle_check() -> Check {
    let name = "dense influence equivalence";
    let problem = PdeProblem::new(ProblemKind::Diffusion);
    let spec = MlpSpec::new(2, vec![6, 6], 1).expect("valid spec");
    let theta = init(&spec, 61).into_values();
    let train = interior(&problem, 30, 62);
    let test = interior(&problem, 50, 63);
    let cands = interior(&problem, 100, 64);
    let n = theta.len();
    let run = || -> Result<(Vec<f64>, Vec<f64>), crate::influence::InfluenceError> {
        let lr = arnoldi_low_rank(|v: &[f64]| training_hvp(&problem, &spec, &theta, &train, v), n, n, n, 65, 0.0)?;
        let damping = 1e-3 * lr.max_abs_eigenvalue();
        let g_test = test_loss_grad(&problem, &spec, &theta, &test)?;
        let ctx = InfluenceContext::from_hessian(theta.clone(), g_test, lr.with_damping(damping));
        let fast = ctx.influences(&problem, &spec, &cands)?;
        let dense = dense_influence_oracle_many(&problem, &spec, &theta, &train, &test, &cands, damping)?;
        Ok((fast, dense))
    };
    match run() {
        Ok((fast, dense)) => {
            let worst = fast.iter().zip(&dense).map(|(a, b)| (a - b).abs() / b.abs()).fold(0.0, f64::max);
            Check::bound(name, worst, 1e-4)
        }
        Err(e) => Check::new(name, false, e.to_string()),
    }
}

/// Identity-Hessian influence and the test/candidate gradient product.
pub fn identity_reduction_check() -> Check {
    let name = "identity influence equals grad-dot";
    let problem = PdeProblem::new(ProblemKind::Burgers);
    let spec = MlpSpec::new(2, vec![8, 8], 1).expect("valid spec");
    let theta = init(&spec, 71).into_values();
    let test = interior(&problem, 40, 72);
    let cands = interior(&problem, 200, 73);
    let scores = test_loss_grad(&problem, &spec, &theta, &test).map_err(|e| e.to_string()).and_then(|g| {
        let ctx = InfluenceContext::identity(theta.clone(), g.clone());
        let a = score_pinnfluence(&ctx, &problem, &spec, &cands).map_err(|e| e.to_string())?;
        let b = score_grad_dot(&problem, &spec, &theta, &g, &cands).map_err(|e| e.to_string())?;
        Ok((a, b))
    });
    match scores {
        Ok((a, b)) => {
            let equal = a.scores().iter().zip(b.scores()).filter(|(x, y)| x.to_bits() == y.to_bits()).count();
            Check::new(name, equal == cands.len(), format!("{equal}/{} bitwise equal", cands.len()))
        }
        Err(e) => Check::new(name, false, e),
    }
}

/// Hand-computed distributions for scores (3, 1).
pub fn pmf_check() -> Check {
    let cases = [((1.0, 0.0), [0.75, 0.25]), ((2.0, 0.0), [0.9, 0.1]), ((1.0, 1.0), [2.0 / 3.0, 1.0 / 3.0])];
    let mut worst: f64 = 0.0;
    for ((alpha, c), want) in cases {
        match build_pmf(&[3.0, 1.0], alpha, c) {
            Ok(pmf) => {
                worst = pmf.probabilities().iter().zip(want).map(|(a, b)| (a - b).abs()).fold(worst, f64::max)
            }
            Err(e) => return Check::new("pmf", false, e.to_string()),
        }
    }
    Check::bound("pmf of scores (3, 1)", worst, 1e-15)
}

/// The four-point Hammersley set before the boundary nudge.
pub fn hammersley_check() -> Check {
    let want = [[0.0, 0.0], [0.25, 0.5], [0.5, 0.25], [0.75, 0.75]];
    let got = hammersley_unit(4);
    Check::new("hammersley n=4", got == want, format!("{got:?}"))
}

/// Every check, in a fixed order.
pub fn run_checks() -> Vec<Check> {
    let started = Instant::now();
    let mut out = Vec::new();
    for kind in ProblemKind::ALL {
        out.push(gradient_check(kind));
        out.push(input_jet_check(kind));
        out.push(hvp_check(kind));
    }
    for kind in ProblemKind::ALL.into_iter().filter(|k| PdeProblem::new(*k).has_closed_form()) {
        out.push(closed_form_check(kind));
    }
    out.extend(ProblemKind::ALL.iter().map(|&k| constraint_check(&PdeProblem::new(k))));
    out.push(influence_oracle_check());
    out.push(identity_reduction_check());
    out.push(pmf_check());
    out.push(hammersley_check());
    log::info!("verify: {} checks in {:.1} s", out.len(), started.elapsed().as_secs_f64());
    out
}
