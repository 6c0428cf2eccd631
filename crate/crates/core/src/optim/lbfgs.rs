use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::{dot, inf_norm, Objective, OptimError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LineSearch {
    StrongWolfe,
    /// Fixed unit steps, as in the common deep-learning default.
    None,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LbfgsConfig {
    pub history: usize,
    pub line_search: LineSearch,
    pub c1: f64,
    pub c2: f64,
    pub max_probes: usize,
    pub grad_tol: f64,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        LbfgsConfig {
            history: 50,
            line_search: LineSearch::StrongWolfe,
            c1: 1e-4,
            c2: 0.9,
            max_probes: 25,
            grad_tol: 1e-9,
        }
    }
}

impl LbfgsConfig {
    /// History 100 and no line search.
    pub fn unguarded() -> Self {
        LbfgsConfig { history: 100, line_search: LineSearch::None, ..Self::default() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LbfgsStop {
    Budget,
    Stationary,
    LineSearchFailed,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LbfgsReport {
    pub iterations: usize,
    pub loss: f64,
    pub stop: LbfgsStop,
}

/// Up to `n_iters` quasi-Newton iterations on `theta` in place.
pub fn lbfgs_run<O: Objective>(
    objective: &mut O,
    theta: &mut [f64],
    n_iters: usize,
    config: &LbfgsConfig,
) -> Result<LbfgsReport, OptimError> {
    let (mut loss, mut g) = objective.evaluate(theta)?;
    if !loss.is_finite() {
        return Err(OptimError::NonFinite { iteration: 0, loss });
    }
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(config.history);
    let mut gamma = 1.0;
    for iteration in 0..n_iters {
        if inf_norm(&g) < config.grad_tol {
            return Ok(LbfgsReport { iterations: iteration, loss, stop: LbfgsStop::Stationary });
        }
        let mut d = two_loop(&g, &history, gamma);
        let mut gtd = dot(&g, &d);
        if !(gtd < 0.0) {
            // stale curvature; restart from steepest descent
            history.clear();
            gamma = 1.0;
            d = g.iter().map(|x| -x).collect();
            gtd = dot(&g, &d);
        }
        let step = match config.line_search {
            LineSearch::StrongWolfe => strong_wolfe(objective, theta, &d, loss, &g, gtd, config)?,
            LineSearch::None => {
                let t = if iteration == 0 { (1.0 / g.iter().map(|x| x.abs()).sum::<f64>()).min(1.0) } else { 1.0 };
                let trial = axpy(theta, t, &d);
                let (f, gn) = objective.evaluate(&trial)?;
                Probe { t, f, g: gn, gtd: 0.0, wolfe: true }
            }
        };
        if !step.f.is_finite() {
            if config.line_search == LineSearch::None {
                return Err(OptimError::NonFinite { iteration: iteration + 1, loss: step.f });
            }
            return Ok(LbfgsReport { iterations: iteration, loss, stop: LbfgsStop::LineSearchFailed });
        }
        if !step.wolfe && !(step.f < loss) {
            return Ok(LbfgsReport { iterations: iteration, loss, stop: LbfgsStop::LineSearchFailed });
        }
        let s: Vec<f64> = d.iter().map(|di| step.t * di).collect();
        let y: Vec<f64> = step.g.iter().zip(&g).map(|(a, b)| a - b).collect();
        let ys = dot(&y, &s);
        if ys > 1e-10 {
            if history.len() == config.history {
                history.pop_front();
            }
            gamma = ys / dot(&y, &y);
            history.push_back((s.clone(), y, 1.0 / ys));
        }
        for (p, si) in theta.iter_mut().zip(&s) {
            *p += si;
        }
        loss = step.f;
        g = step.g;
        if !step.wolfe {
            return Ok(LbfgsReport { iterations: iteration + 1, loss, stop: LbfgsStop::LineSearchFailed });
        }
    }
    let stop = if inf_norm(&g) < config.grad_tol { LbfgsStop::Stationary } else { LbfgsStop::Budget };
    Ok(LbfgsReport { iterations: n_iters, loss, stop })
}

/// `−H·g` from the stored curvature pairs, with initial scaling `gamma`.
fn two_loop(g: &[f64], history: &VecDeque<(Vec<f64>, Vec<f64>, f64)>, gamma: f64) -> Vec<f64> {
    let mut q: Vec<f64> = g.iter().map(|x| -x).collect();
    let mut alphas = vec![0.0; history.len()];
    for (k, (s, y, rho)) in history.iter().enumerate().rev() {
        let a = rho * dot(s, &q);
        alphas[k] = a;
        for (qi, yi) in q.iter_mut().zip(y) {
            *qi -= a * yi;
        }
    }
    for qi in &mut q {
        *qi *= gamma;
    }
    for (k, (s, y, rho)) in history.iter().enumerate() {
        let b = rho * dot(y, &q);
        for (qi, si) in q.iter_mut().zip(s) {
            *qi += (alphas[k] - b) * si;
        }
    }
    q
}

fn axpy(x: &[f64], t: f64, d: &[f64]) -> Vec<f64> {
    x.iter().zip(d).map(|(a, b)| a + t * b).collect()
}

#[derive(Clone, Debug)]
struct Probe {
    t: f64,
    f: f64,
    g: Vec<f64>,
    gtd: f64,
    /// Whether the strong Wolfe conditions hold at `t`.
    wolfe: bool,
}

fn probe<O: Objective>(objective: &mut O, x: &[f64], t: f64, d: &[f64]) -> Result<Probe, OptimError> {
    let (f, g) = objective.evaluate(&axpy(x, t, d))?;
    if !f.is_finite() {
        return Ok(Probe { t, f: f64::INFINITY, g, gtd: f64::INFINITY, wolfe: false });
    }
    let gtd = dot(&g, d);
    Ok(Probe { t, f, g, gtd, wolfe: false })
}

/// Minimizer of the cubic through two points with slopes, clamped to
/// `bounds` (default: the interval between the points).
fn cubic_interpolate(a: (f64, f64, f64), b: (f64, f64, f64), bounds: Option<(f64, f64)>) -> f64 {
    let ((x1, f1, g1), (x2, f2, g2)) = (a, b);
    let (lo, hi) = bounds.unwrap_or(if x1 <= x2 { (x1, x2) } else { (x2, x1) });
    let d1 = g1 + g2 - 3.0 * (f1 - f2) / (x1 - x2);
    let d2_square = d1 * d1 - g1 * g2;
    if d2_square >= 0.0 {
        let d2 = d2_square.sqrt();
        let min_pos = if x1 <= x2 {
            x2 - (x2 - x1) * ((g2 + d2 - d1) / (g2 - g1 + 2.0 * d2))
        } else {
            x1 - (x1 - x2) * ((g1 + d2 - d1) / (g1 - g2 + 2.0 * d2))
        };
        if min_pos.is_finite() {
            return min_pos.clamp(lo, hi);
        }
    }
    0.5 * (lo + hi)
}

/// Bracketing-and-zoom line search for the strong Wolfe conditions,
/// starting from a unit step. On failure the lowest bracketed probe is
/// returned with `wolfe = false`.
fn strong_wolfe<O: Objective>(
    objective: &mut O,
    x: &[f64],
    d: &[f64],
    f0: f64,
    g0: &[f64],
    gtd0: f64,
    config: &LbfgsConfig,
) -> Result<Probe, OptimError> {
    let (c1, c2) = (config.c1, config.c2);
    let d_norm = inf_norm(d);
    let sufficient = |p: &Probe| p.f <= f0 + c1 * p.t * gtd0;
    let curvature = |p: &Probe| p.gtd.abs() <= -c2 * gtd0;

    let mut prev = Probe { t: 0.0, f: f0, g: g0.to_vec(), gtd: gtd0, wolfe: false };
    let mut cur = probe(objective, x, 1.0, d)?;
    let mut probes = 1;
    let mut bracket: [Probe; 2];
    let mut iter = 0;
    loop {
        if !sufficient(&cur) || (iter > 1 && cur.f >= prev.f) {
            bracket = [prev, cur];
            break;
        }
        if curvature(&cur) {
            cur.wolfe = true;
            return Ok(cur);
        }
        if cur.gtd >= 0.0 {
            bracket = [prev, cur];
            break;
        }
        if probes >= config.max_probes {
            bracket = [Probe { t: 0.0, f: f0, g: g0.to_vec(), gtd: gtd0, wolfe: false }, cur];
            break;
        }
        let min_step = cur.t + 0.01 * (cur.t - prev.t);
        let max_step = cur.t * 10.0;
        let t = cubic_interpolate((prev.t, prev.f, prev.gtd), (cur.t, cur.f, cur.gtd), Some((min_step, max_step)));
        let next = probe(objective, x, t, d)?;
        probes += 1;
        iter += 1;
        prev = std::mem::replace(&mut cur, next);
    }

    let mut insufficient_progress = false;
    let low_high = |b: &[Probe; 2]| if b[0].f <= b[1].f { (0, 1) } else { (1, 0) };
    let (mut low, mut high) = low_high(&bracket);
    while probes < config.max_probes {
        let (b0, b1) = (&bracket[0], &bracket[1]);
        if (b1.t - b0.t).abs() * d_norm < 1e-12 {
            break;
        }
        let mut t = cubic_interpolate((b0.t, b0.f, b0.gtd), (b1.t, b1.f, b1.gtd), None);
        let (lo, hi) = (b0.t.min(b1.t), b0.t.max(b1.t));
        let eps = 0.1 * (hi - lo);
        if (hi - t).min(t - lo) < eps {
            if insufficient_progress || t >= hi || t <= lo {
                t = if (t - hi).abs() < (t - lo).abs() { hi - eps } else { lo + eps };
                insufficient_progress = false;
            } else {
                insufficient_progress = true;
            }
        } else {
            insufficient_progress = false;
        }
        let mut p = probe(objective, x, t, d)?;
        probes += 1;
        if !sufficient(&p) || p.f >= bracket[low].f {
            bracket[high] = p;
            (low, high) = low_high(&bracket);
        } else {
            if curvature(&p) {
                p.wolfe = true;
                return Ok(p);
            }
            if p.gtd * (bracket[high].t - bracket[low].t) >= 0.0 {
                bracket[high] = bracket[low].clone();
            }
            bracket[low] = p;
        }
    }
    let [a, b] = bracket;
    Ok(if low == 0 { a } else { b })
}
