//! Batched residual engine.
//!
//! The per-point route through [`autodiff`](crate::autodiff) records every
//! scalar operation of a residual on a tape. This module computes the same
//! quantities for a block of points at once: the input jets of every layer
//! are stacked as matrix columns, so each layer is a single matrix product,
//! and the adjoint pass is written out by hand. Everything is generic over
//! [`Real`]; running it with [`Dual`] parameters whose tangent is `v`
//! returns `H·v` in the tangent of the gradient.
//!
//! Columns are grouped by jet component: for a block of `n` points the
//! column of component `c` at point `p` is `c·n + p`.

use matrixmultiply::dgemm;

use crate::autodiff::{AdError, Dual, Jet, Real};
use crate::mlp::MlpSpec;
use crate::pde::{Equation, PdeProblem, Point};

/// Points per block; bounds the working set.
const BLOCK: usize = 256;

const V: usize = 0;
const X: usize = 1;
const T: usize = 2;
const XX: usize = 3;
const TT: usize = 4;

/// Dense `C ← A·B` (or `C ← C + A·B`) on strided operands.
pub trait Gemm: Real {
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        a: &[Self],
        a_strides: (isize, isize),
        b: &[Self],
        b_strides: (isize, isize),
        c: &mut [Self],
        c_strides: (isize, isize),
        accumulate: bool,
    );
}

fn check_extent(len: usize, rows: usize, cols: usize, (rs, cs): (isize, isize)) {
    if rows == 0 || cols == 0 {
        return;
    }
    assert!(rs >= 0 && cs >= 0, "negative strides");
    let last = (rows - 1) as isize * rs + (cols - 1) as isize * cs;
    assert!((last as usize) < len, "strided view exceeds buffer");
}

/// # Safety
/// Each pointer must address a buffer covering its strided view.
#[allow(clippy::too_many_arguments)]
unsafe fn raw_gemm(
    m: usize,
    k: usize,
    n: usize,
    alpha: f64,
    a: *const f64,
    (rsa, csa): (isize, isize),
    b: *const f64,
    (rsb, csb): (isize, isize),
    beta: f64,
    c: *mut f64,
    (rsc, csc): (isize, isize),
) {
    dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc);
}

impl Gemm for f64 {
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        a: &[f64],
        sa: (isize, isize),
        b: &[f64],
        sb: (isize, isize),
        c: &mut [f64],
        sc: (isize, isize),
        accumulate: bool,
    ) {
        check_extent(a.len(), m, k, sa);
        check_extent(b.len(), k, n, sb);
        check_extent(c.len(), m, n, sc);
        if m == 0 || n == 0 {
            return;
        }
        let beta = if accumulate { 1.0 } else { 0.0 };
        // SAFETY: extents checked above
        unsafe { raw_gemm(m, k, n, 1.0, a.as_ptr(), sa, b.as_ptr(), sb, beta, c.as_mut_ptr(), sc) }
    }
}

impl Gemm for Dual {
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        a: &[Dual],
        sa: (isize, isize),
        b: &[Dual],
        sb: (isize, isize),
        c: &mut [Dual],
        sc: (isize, isize),
        accumulate: bool,
    ) {
        check_extent(a.len(), m, k, sa);
        check_extent(b.len(), k, n, sb);
        check_extent(c.len(), m, n, sc);
        if m == 0 || n == 0 {
            return;
        }
        // Dual is repr(C) {re, eps}: the primal parts form an f64 view with
        // doubled strides, the tangents the same view shifted by one
        let twice = |(r, c): (isize, isize)| (2 * r, 2 * c);
        let beta = if accumulate { 1.0 } else { 0.0 };
        let (pa, pb, pc) = (a.as_ptr() as *const f64, b.as_ptr() as *const f64, c.as_mut_ptr() as *mut f64);
        // SAFETY: every view lies within the reinterpreted buffers, whose
        // extents were checked in units of Dual above
        unsafe {
            raw_gemm(m, k, n, 1.0, pa, twice(sa), pb, twice(sb), beta, pc, twice(sc));
            raw_gemm(m, k, n, 1.0, pa, twice(sa), pb.add(1), twice(sb), beta, pc.add(1), twice(sc));
            raw_gemm(m, k, n, 1.0, pa.add(1), twice(sa), pb, twice(sb), 1.0, pc.add(1), twice(sc));
        }
    }
}

/// Lift and gate jets of the ansatz plus the source term at one point.
#[derive(Clone, Copy, Debug)]
struct PointData {
    lift: [f64; 5],
    gate: [f64; 5],
    forcing: f64,
}

fn jet_components(j: &Jet<f64, 2>) -> [f64; 5] {
    [j.v, j.d[0], j.d[1], j.dd[0], j.dd[1]]
}

fn point_data(problem: &PdeProblem, p: &Point) -> PointData {
    let [x, t] = Jet::<f64, 2>::coordinates(p, problem.jet_order());
    let (lift, gate) = problem.ansatz_parts(&x, &t);
    PointData { lift: jet_components(&lift), gate: jet_components(&gate), forcing: problem.forcing(p) }
}

/// Residual and its partials with respect to `(u, u_x, u_t, u_xx, u_tt)`.
fn residual_partials<R: Real>(eq: Equation, u: &[R; 5], forcing: f64) -> (R, [R; 5]) {
    let c = R::from_f64;
    let zero = c(0.0);
    match eq {
        Equation::Diffusion => (u[T] - u[XX] - c(forcing), [zero, zero, c(1.0), c(-1.0), zero]),
        Equation::Burgers { nu } => (u[T] + u[V] * u[X] - c(nu) * u[XX], [u[X], u[V], c(1.0), c(-nu), zero]),
        Equation::AllenCahn { diffusivity, reaction } => {
            let r = u[T] - c(diffusivity) * u[XX] + c(reaction) * (u[V] * u[V] * u[V] - u[V]);
            (r, [c(reaction) * (c(3.0) * u[V] * u[V] - c(1.0)), zero, c(1.0), c(-diffusivity), zero])
        }
        Equation::Wave { speed } => (u[TT] - c(speed * speed) * u[XX], [zero, zero, zero, c(-speed * speed), c(1.0)]),
        Equation::DriftDiffusion { alpha, beta } => {
            (u[T] - c(alpha) * u[XX] + c(beta) * u[X], [zero, c(beta), c(1.0), c(-alpha), zero])
        }
    }
}

/// Activations and pre-activations of one block.
struct Forward<R> {
    n: usize,
    k: usize,
    /// Input matrix of every layer, `fan_in × k·n`.
    inputs: Vec<Vec<R>>,
    /// Pre-activation of every layer, `fan_out × k·n`.
    pre: Vec<Vec<R>>,
    data: Vec<PointData>,
}

fn forward_block<R: Gemm>(problem: &PdeProblem, spec: &MlpSpec, theta: &[R], points: &[Point]) -> Forward<R> {
    let n = points.len();
    let k = if problem.jet_order()[1] >= 2 { 5 } else { 4 };
    let cols = k * n;
    let zero = R::from_f64(0.0);
    let one = R::from_f64(1.0);
    let mut input = vec![zero; 2 * cols];
    for (p, pt) in points.iter().enumerate() {
        input[2 * (V * n + p)] = R::from_f64(pt[0]);
        input[2 * (V * n + p) + 1] = R::from_f64(pt[1]);
        input[2 * (X * n + p)] = one;
        input[2 * (T * n + p) + 1] = one;
    }
    let layout = spec.layout();
    let last = layout.len() - 1;
    let mut inputs = Vec::with_capacity(layout.len());
    let mut pre = Vec::with_capacity(layout.len());
    for (li, l) in layout.iter().enumerate() {
        let (fi, fo) = (l.fan_in, l.fan_out);
        let mut z = vec![zero; fo * cols];
        R::gemm(
            fo,
            fi,
            cols,
            &theta[l.weights..l.biases],
            (fi as isize, 1),
            &input,
            (1, fi as isize),
            &mut z,
            (1, fo as isize),
            false,
        );
        let bias = &theta[l.biases..l.biases + fo];
        for p in 0..n {
            for (zi, b) in z[(V * n + p) * fo..(V * n + p + 1) * fo].iter_mut().zip(bias) {
                *zi += *b;
            }
        }
        inputs.push(input);
        if li == last {
            pre.push(z);
            break;
        }
        let mut a = vec![zero; fo * cols];
        for p in 0..n {
            let col = |c: usize| (c * n + p) * fo;
            for i in 0..fo {
                let t = z[col(V) + i].tanh();
                let s = one - t * t;
                let sp = R::from_f64(-2.0) * t * s;
                let (zx, zt) = (z[col(X) + i], z[col(T) + i]);
                a[col(V) + i] = t;
                a[col(X) + i] = s * zx;
                a[col(T) + i] = s * zt;
                a[col(XX) + i] = s * z[col(XX) + i] + sp * zx * zx;
                if k == 5 {
                    a[col(TT) + i] = s * z[col(TT) + i] + sp * zt * zt;
                }
            }
        }
        pre.push(z);
        input = a;
    }
    let data = points.iter().map(|p| point_data(problem, p)).collect();
    Forward { n, k, inputs, pre, data }
}

impl<R: Real> Forward<R> {
    /// Surrogate jet components at point `p`.
    fn surrogate(&self, p: usize) -> [R; 5] {
        let out = self.pre.last().expect("at least one layer");
        let net = |c: usize| if c < self.k { out[c * self.n + p] } else { R::from_f64(0.0) };
        let (l, g) = (&self.data[p].lift, &self.data[p].gate);
        let c = R::from_f64;
        let two = c(2.0);
        [
            c(l[V]) + c(g[V]) * net(V),
            c(l[X]) + c(g[X]) * net(V) + c(g[V]) * net(X),
            c(l[T]) + c(g[T]) * net(V) + c(g[V]) * net(T),
            c(l[XX]) + c(g[XX]) * net(V) + two * c(g[X]) * net(X) + c(g[V]) * net(XX),
            c(l[TT]) + c(g[TT]) * net(V) + two * c(g[T]) * net(T) + c(g[V]) * net(TT),
        ]
    }

    fn residual(&self, eq: Equation, p: usize) -> (R, [R; 5]) {
        residual_partials(eq, &self.surrogate(p), self.data[p].forcing)
    }
}

/// Seeds the output adjoint from per-point adjoints of the surrogate jet.
fn output_adjoint<R: Real>(fw: &Forward<R>, u_bar: &[[R; 5]]) -> Vec<R> {
    let (n, k) = (fw.n, fw.k);
    let mut out = vec![R::from_f64(0.0); k * n];
    let two = R::from_f64(2.0);
    for (p, ub) in u_bar.iter().enumerate() {
        let g = fw.data[p].gate.map(R::from_f64);
        out[V * n + p] = ub[V] * g[V] + ub[X] * g[X] + ub[T] * g[T] + ub[XX] * g[XX] + ub[TT] * g[TT];
        out[X * n + p] = ub[X] * g[V] + two * ub[XX] * g[X];
        out[T * n + p] = ub[T] * g[V] + two * ub[TT] * g[T];
        out[XX * n + p] = ub[XX] * g[V];
        if k == 5 {
            out[TT * n + p] = ub[TT] * g[V];
        }
    }
    out
}

/// Adjoint of the hidden activation: turns `∂/∂a` into `∂/∂z` in place.
fn tanh_backward<R: Real>(fw: &Forward<R>, layer: usize, a_bar: &mut [R]) {
    let (n, k) = (fw.n, fw.k);
    let z = &fw.pre[layer];
    let fo = z.len() / (k * n);
    let c = R::from_f64;
    let zero = c(0.0);
    for p in 0..n {
        let col = |cc: usize| (cc * n + p) * fo;
        for i in 0..fo {
            let t = fw.inputs[layer + 1][col(V) + i];
            let s = c(1.0) - t * t;
            let sp = c(-2.0) * t * s;
            let spp = c(-2.0) * s * s + c(4.0) * t * t * s;
            let (zx, zt, zxx) = (z[col(X) + i], z[col(T) + i], z[col(XX) + i]);
            let (av, ax, at, axx) = (a_bar[col(V) + i], a_bar[col(X) + i], a_bar[col(T) + i], a_bar[col(XX) + i]);
            let (ztt, att) = if k == 5 { (z[col(TT) + i], a_bar[col(TT) + i]) } else { (zero, zero) };
            a_bar[col(V) + i] = av * s + sp * (ax * zx + at * zt + axx * zxx + att * ztt) + spp * (axx * zx * zx + att * zt * zt);
            a_bar[col(X) + i] = ax * s + c(2.0) * axx * sp * zx;
            a_bar[col(T) + i] = at * s + c(2.0) * att * sp * zt;
            a_bar[col(XX) + i] = axx * s;
            if k == 5 {
                a_bar[col(TT) + i] = att * s;
            }
        }
    }
}

/// Pre-activation adjoints of every layer, last layer first.
fn backward<R: Gemm>(spec: &MlpSpec, theta: &[R], fw: &Forward<R>, u_bar: &[[R; 5]]) -> Vec<Vec<R>> {
    let layout = spec.layout();
    let cols = fw.k * fw.n;
    let mut z_bar = output_adjoint(fw, u_bar);
    let mut all = Vec::with_capacity(layout.len());
    for (li, l) in layout.iter().enumerate().rev() {
        if li == 0 {
            all.push(z_bar);
            break;
        }
        let (fi, fo) = (l.fan_in, l.fan_out);
        let mut a_bar = vec![R::from_f64(0.0); fi * cols];
        R::gemm(
            fi,
            fo,
            cols,
            &theta[l.weights..l.biases],
            (1, fi as isize),
            &z_bar,
            (1, fo as isize),
            &mut a_bar,
            (1, fi as isize),
            false,
        );
        tanh_backward(fw, li - 1, &mut a_bar);
        all.push(std::mem::replace(&mut z_bar, a_bar));
    }
    all.reverse();
    all
}

/// Accumulates the parameter gradient of the whole block into `grad`.
fn accumulate_gradient<R: Gemm>(spec: &MlpSpec, fw: &Forward<R>, z_bars: &[Vec<R>], grad: &mut [R]) {
    let cols = fw.k * fw.n;
    for (li, l) in spec.layout().iter().enumerate() {
        let (fi, fo) = (l.fan_in, l.fan_out);
        let zb = &z_bars[li];
        R::gemm(
            fo,
            cols,
            fi,
            zb,
            (1, fo as isize),
            &fw.inputs[li],
            (fi as isize, 1),
            &mut grad[l.weights..l.biases],
            (fi as isize, 1),
            true,
        );
        let gb = &mut grad[l.biases..l.biases + fo];
        for p in 0..fw.n {
            for (g, z) in gb.iter_mut().zip(&zb[p * fo..(p + 1) * fo]) {
                *g += *z;
            }
        }
    }
}

fn check_lengths(spec: &MlpSpec, theta_len: usize) -> Result<(), AdError> {
    let expected = spec.param_count();
    if theta_len != expected {
        return Err(AdError::DimensionMismatch { expected, got: theta_len });
    }
    Ok(())
}

/// Residuals `𝒩[φ̃](x)` at every point.
pub fn residuals(problem: &PdeProblem, spec: &MlpSpec, theta: &[f64], points: &[Point]) -> Result<Vec<f64>, AdError> {
    check_lengths(spec, theta.len())?;
    let mut out = Vec::with_capacity(points.len());
    for block in points.chunks(BLOCK) {
        let fw = forward_block(problem, spec, theta, block);
        out.extend((0..block.len()).map(|p| fw.residual(problem.equation(), p).0));
    }
    Ok(out)
}

/// `(weight · Σ r², weight · ∇_θ Σ r²)`, blocks reduced in order.
pub fn loss_and_grad<R: Gemm>(
    problem: &PdeProblem,
    spec: &MlpSpec,
    theta: &[R],
    points: &[Point],
    weight: f64,
) -> Result<(R, Vec<R>), AdError> {
    check_lengths(spec, theta.len())?;
    let w = R::from_f64(weight);
    let two_w = R::from_f64(2.0 * weight);
    let mut loss = R::from_f64(0.0);
    let mut grad = vec![R::from_f64(0.0); theta.len()];
    for (b, block) in points.chunks(BLOCK).enumerate() {
        let fw = forward_block(problem, spec, theta, block);
        let mut u_bar = Vec::with_capacity(block.len());
        for p in 0..block.len() {
            let (r, dr) = fw.residual(problem.equation(), p);
            if !r.is_finite() {
                return Err(AdError::NonFiniteResidual { point: b * BLOCK + p, value: r.primal() });
            }
            loss += w * r * r;
            u_bar.push(dr.map(|d| two_w * r * d));
        }
        let z_bars = backward(spec, theta, &fw, &u_bar);
        accumulate_gradient(spec, &fw, &z_bars, &mut grad);
    }
    Ok((loss, grad))
}

/// `weight · Σ ∇²_θ r² · v` by running [`loss_and_grad`] on dual numbers.
pub fn hvp(
    problem: &PdeProblem,
    spec: &MlpSpec,
    theta: &[f64],
    points: &[Point],
    v: &[f64],
    weight: f64,
) -> Result<Vec<f64>, AdError> {
    if v.len() != theta.len() {
        return Err(AdError::DimensionMismatch { expected: theta.len(), got: v.len() });
    }
    let dual: Vec<Dual> = theta.iter().zip(v).map(|(&t, &d)| Dual::new(t, d)).collect();
    let (_, g) = loss_and_grad(problem, spec, &dual, points, weight)?;
    Ok(g.into_iter().map(|d| d.eps).collect())
}

/// Calls `visit(index, r², ∇_θ r²)` for every point in order.
pub fn for_each_point_gradient(
    problem: &PdeProblem,
    spec: &MlpSpec,
    theta: &[f64],
    points: &[Point],
    mut visit: impl FnMut(usize, f64, &[f64]),
) -> Result<(), AdError> {
    check_lengths(spec, theta.len())?;
    let layout = spec.layout();
    let mut grad = vec![0.0; theta.len()];
    for (b, block) in points.chunks(BLOCK).enumerate() {
        let fw = forward_block(problem, spec, theta, block);
        let mut u_bar = Vec::with_capacity(block.len());
        let mut losses = Vec::with_capacity(block.len());
        for p in 0..block.len() {
            let (r, dr) = fw.residual(problem.equation(), p);
            if !r.is_finite() {
                return Err(AdError::NonFiniteResidual { point: b * BLOCK + p, value: r });
            }
            losses.push(r * r);
            u_bar.push(dr.map(|d| 2.0 * r * d));
        }
        let z_bars = backward(spec, theta, &fw, &u_bar);
        let n = fw.n;
        for p in 0..n {
            for (li, l) in layout.iter().enumerate() {
                let (fi, fo) = (l.fan_in, l.fan_out);
                let (zb, a) = (&z_bars[li], &fw.inputs[li]);
                let gw = &mut grad[l.weights..l.biases];
                gw.iter_mut().for_each(|g| *g = 0.0);
                for c in 0..fw.k {
                    let zc = &zb[(c * n + p) * fo..(c * n + p + 1) * fo];
                    let ac = &a[(c * n + p) * fi..(c * n + p + 1) * fi];
                    for (i, &zi) in zc.iter().enumerate() {
                        if zi == 0.0 {
                            continue;
                        }
                        for (g, &aj) in gw[i * fi..(i + 1) * fi].iter_mut().zip(ac) {
                            *g += zi * aj;
                        }
                    }
                }
                grad[l.biases..l.biases + fo].copy_from_slice(&zb[(V * n + p) * fo..(V * n + p + 1) * fo]);
            }
            visit(b * BLOCK + p, losses[p], &grad);
        }
    }
    Ok(())
}
