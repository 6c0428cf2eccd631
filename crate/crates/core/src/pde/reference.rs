//! Numerical reference solutions for the two problems without closed forms.
//!
//! Burgers' equation is solved through the Cole–Hopf transform, which turns
//! it into a heat equation with an explicit convolution solution; the
//! remaining one-dimensional integrals are evaluated by the trapezoid rule
//! in log space. Allen–Cahn is integrated on a fine finite-difference grid
//! with Strang splitting: the cubic reaction is solved exactly, diffusion by
//! Crank–Nicolson.

use std::f64::consts::PI;

use super::grid::GroundTruthGrid;

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// Viscous Burgers' solution on `[-1, 1] × [0, 1]` with `u(x, 0) = −sin(πx)`
/// and homogeneous Dirichlet boundaries.
pub fn burgers_value(nu: f64, x: f64, t: f64) -> f64 {
    if t <= 0.0 {
        return -(PI * x).sin();
    }
    // u = −∫ sin(π(x−η)) f(x−η) G(η) dη / ∫ f(x−η) G(η) dη,
    // f(y) = exp(−cos(πy) / (2πν)), G Gaussian with variance 2νt
    // the window must reach where the Gaussian beats the full swing of the
    // cos term, since the mass sits away from η = 0 once the shock forms
    let sigma = (2.0 * nu * t).sqrt();
    let half = (4.0 * nu * t * (1.0 / (PI * nu) + 60.0)).sqrt();
    let m = ((2.0 * half / (sigma / 40.0).min(1e-3)).ceil() as usize).max(4000) | 1;
    let h = 2.0 * half / (m - 1) as f64;
    let log_weight = |eta: f64| -(PI * (x - eta)).cos() / (2.0 * PI * nu) - eta * eta / (4.0 * nu * t);
    let peak = (0..m).map(|k| log_weight(-half + k as f64 * h)).fold(f64::NEG_INFINITY, f64::max);
    let (mut num, mut den) = (0.0, 0.0);
    for k in 0..m {
        let eta = -half + k as f64 * h;
        let end = if k == 0 || k == m - 1 { 0.5 } else { 1.0 };
        let w = end * (log_weight(eta) - peak).exp();
        num += w * (PI * (x - eta)).sin();
        den += w;
    }
    -num / den
}

/// Tabulates [`burgers_value`] on an `nx × nt` grid over `[-1, 1] × [0, 1]`.
pub fn burgers_grid(nu: f64, nx: usize, nt: usize) -> GroundTruthGrid {
    let x = linspace(-1.0, 1.0, nx);
    let t = linspace(0.0, 1.0, nt);
    let mut values = Vec::with_capacity(nx * nt);
    for &xi in &x {
        for &tj in &t {
            // the boundary values are zero exactly; quadrature leaves ~1e-17
            values.push(if xi.abs() == 1.0 { 0.0 } else { burgers_value(nu, xi, tj) });
        }
    }
    GroundTruthGrid::new(x, t, values).expect("well-formed grid")
}

/// Allen–Cahn `u_t = D u_xx + r(u − u³)` on `[-1, 1] × [0, 1]` with
/// `u(x, 0) = x² cos(πx)` and `u(±1, t) = −1`, tabulated on `nx × nt`.
///
/// `refine` fine cells per output cell in space, `substeps` time steps per
/// output interval.
pub fn allen_cahn_grid(
    diffusivity: f64,
    reaction: f64,
    nx: usize,
    nt: usize,
    refine: usize,
    substeps: usize,
) -> GroundTruthGrid {
    assert!(nx >= 3 && nt >= 2 && refine >= 1 && substeps >= 1);
    let n_fine = (nx - 1) * refine + 1;
    let xf = linspace(-1.0, 1.0, n_fine);
    let h = xf[1] - xf[0];
    let dt = 1.0 / ((nt - 1) * substeps) as f64;
    let mut u: Vec<f64> = xf.iter().map(|&x| x * x * (PI * x).cos()).collect();
    u[0] = -1.0;
    u[n_fine - 1] = -1.0;

    let react = |u: &mut [f64], tau: f64| {
        let decay = (-2.0 * reaction * tau).exp();
        for v in u.iter_mut() {
            *v /= (*v * *v + (1.0 - *v * *v) * decay).sqrt();
        }
    };
    let lambda = 0.5 * dt * diffusivity / (h * h);
    let interior = n_fine - 2;
    let mut rhs = vec![0.0; interior];
    let mut c_prime = vec![0.0; interior];
    let diffuse = |u: &mut [f64], rhs: &mut [f64], c_prime: &mut [f64]| {
        let (left, right) = (u[0], u[n_fine - 1]);
        for i in 0..interior {
            let k = i + 1;
            rhs[i] = u[k] + lambda * (u[k - 1] - 2.0 * u[k] + u[k + 1]);
        }
        rhs[0] += lambda * left;
        rhs[interior - 1] += lambda * right;
        // Thomas algorithm for the constant tridiagonal (−λ, 1+2λ, −λ)
        let (a, b) = (-lambda, 1.0 + 2.0 * lambda);
        c_prime[0] = a / b;
        rhs[0] /= b;
        for i in 1..interior {
            let m = b - a * c_prime[i - 1];
            c_prime[i] = a / m;
            rhs[i] = (rhs[i] - a * rhs[i - 1]) / m;
        }
        for i in (0..interior - 1).rev() {
            rhs[i] -= c_prime[i] * rhs[i + 1];
        }
        u[1..=interior].copy_from_slice(rhs);
    };

    let x = linspace(-1.0, 1.0, nx);
    let t = linspace(0.0, 1.0, nt);
    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(nt);
    columns.push((0..nx).map(|i| u[i * refine]).collect());
    for _ in 1..nt {
        for _ in 0..substeps {
            react(&mut u, 0.5 * dt);
            diffuse(&mut u, &mut rhs, &mut c_prime);
            react(&mut u, 0.5 * dt);
        }
        columns.push((0..nx).map(|i| u[i * refine]).collect());
    }
    let mut values = Vec::with_capacity(nx * nt);
    for i in 0..nx {
        for col in &columns {
            values.push(col[i]);
        }
    }
    GroundTruthGrid::new(x, t, values).expect("well-formed grid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pde::BURGERS_NU;

    #[test]
    fn burgers_initial_and_odd_symmetry() {
        assert_eq!(burgers_value(BURGERS_NU, 0.3, 0.0), -(0.3 * PI).sin());
        for &(x, t) in &[(0.2, 0.3), (0.7, 0.9), (0.05, 0.5)] {
            let a = burgers_value(BURGERS_NU, x, t);
            let b = burgers_value(BURGERS_NU, -x, t);
            assert!((a + b).abs() < 1e-10, "{a} {b}");
        }
    }

    #[test]
    fn burgers_shock_slope_matches_published_value() {
        // the slope at x = 0 peaks at −152.00516 around t = 1.6037/π for ν = 0.01/π
        let h = 1e-5;
        let t = 1.6037 / PI;
        let slope = (burgers_value(BURGERS_NU, h, t) - burgers_value(BURGERS_NU, -h, t)) / (2.0 * h);
        assert!((slope + 152.00516).abs() < 0.05, "slope {slope}");
    }

    #[test]
    fn burgers_early_time_follows_inviscid_characteristics() {
        // before the shock forms, u(x, t) = −sin(π(x − u t)) up to O(ν)
        let (x, t) = (0.5, 0.1);
        let u = burgers_value(BURGERS_NU, x, t);
        let implicit = -(PI * (x - u * t)).sin();
        assert!((u - implicit).abs() < 1e-2);
    }

    #[test]
    fn allen_cahn_converges_under_refinement() {
        let coarse = allen_cahn_grid(1e-3, 5.0, 41, 11, 10, 100);
        let fine = allen_cahn_grid(1e-3, 5.0, 41, 11, 40, 400);
        let mut worst: f64 = 0.0;
        for i in 0..41 {
            for j in 0..11 {
                worst = worst.max((coarse.at(i, j) - fine.at(i, j)).abs());
            }
        }
        assert!(worst < 5e-3, "{worst}");
        // even initial data stays even; boundaries stay pinned
        for j in 0..11 {
            assert!((fine.at(3, j) - fine.at(37, j)).abs() < 1e-9);
            assert_eq!(fine.at(0, j), -1.0);
        }
    }
}
