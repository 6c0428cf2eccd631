use std::ops::{Add, Div, Mul, Neg, Sub};

use super::scalar::Scalar;

/// Truncated second-order Taylor jet along each of `D` input coordinates.
///
/// Holds the value, the first derivative `∂/∂x_i` and the pure second
/// derivative `∂²/∂x_i²` for every coordinate `i`. Mixed derivatives are not
/// tracked; pure second derivatives are closed under the supported
/// operations without them. `order[i]` caps the derivative order carried in
/// direction `i` so unused components are never computed.
#[derive(Clone, Copy, Debug)]
pub struct Jet<S, const D: usize> {
    pub v: S,
    pub d: [S; D],
    pub dd: [S; D],
    order: [u8; D],
}

impl<S: Scalar, const D: usize> Jet<S, D> {
    pub fn constant_jet(v: S) -> Self {
        Jet {
            v,
            d: std::array::from_fn(|_| S::constant(0.0)),
            dd: std::array::from_fn(|_| S::constant(0.0)),
            order: [0; D],
        }
    }

    /// Independent input coordinate `dir` at `value`, carrying derivatives up
    /// to `order[i]` in each direction.
    pub fn coordinate(value: f64, dir: usize, order: [u8; D]) -> Self {
        let mut j = Self::constant_jet(S::constant(value));
        j.order = order;
        if order[dir] >= 1 {
            j.d[dir] = S::constant(1.0);
        }
        j
    }

    /// All `D` coordinates of the point `x`.
    pub fn coordinates(x: &[f64; D], order: [u8; D]) -> [Self; D] {
        std::array::from_fn(|i| Self::coordinate(x[i], i, order))
    }

    pub fn order(&self) -> [u8; D] {
        self.order
    }

    #[inline]
    fn merged_order(&self, o: &Self) -> [u8; D] {
        std::array::from_fn(|i| self.order[i].max(o.order[i]))
    }

    /// Applies a scalar function given its value and first two derivatives
    /// at `self.v`.
    fn chain(&self, f: S, df: S, d2f: Option<S>) -> Self {
        let mut out = Self::constant_jet(f);
        out.order = self.order;
        for i in 0..D {
            if self.order[i] >= 1 {
                out.d[i] = df.clone() * self.d[i].clone();
            }
            if self.order[i] >= 2 {
                let d2 = d2f.clone().expect("second derivative required");
                out.dd[i] = d2 * self.d[i].square() + df.clone() * self.dd[i].clone();
            }
        }
        out
    }

    fn needs_second(&self) -> bool {
        self.order.iter().any(|&o| o >= 2)
    }
}

impl<S: Scalar, const D: usize> Add for Jet<S, D> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        let order = self.merged_order(&o);
        let Jet { v, d, dd, .. } = self;
        let mut d = d.into_iter();
        let mut dd = dd.into_iter();
        let mut od = o.d.into_iter();
        let mut odd = o.dd.into_iter();
        Jet {
            v: v + o.v,
            d: std::array::from_fn(|_| d.next().unwrap() + od.next().unwrap()),
            dd: std::array::from_fn(|_| dd.next().unwrap() + odd.next().unwrap()),
            order,
        }
    }
}

impl<S: Scalar, const D: usize> Sub for Jet<S, D> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        self + (-o)
    }
}

impl<S: Scalar, const D: usize> Neg for Jet<S, D> {
    type Output = Self;
    fn neg(self) -> Self {
        let order = self.order;
        let mut d = self.d.into_iter();
        let mut dd = self.dd.into_iter();
        Jet {
            v: -self.v,
            d: std::array::from_fn(|i| {
                let c = d.next().unwrap();
                if order[i] >= 1 {
                    -c
                } else {
                    c
                }
            }),
            dd: std::array::from_fn(|i| {
                let c = dd.next().unwrap();
                if order[i] >= 2 {
                    -c
                } else {
                    c
                }
            }),
            order,
        }
    }
}

impl<S: Scalar, const D: usize> Mul for Jet<S, D> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        let order = self.merged_order(&o);
        let mut out = Self::constant_jet(self.v.clone() * o.v.clone());
        out.order = order;
        for i in 0..D {
            if order[i] >= 1 {
                out.d[i] = self.d[i].clone() * o.v.clone() + self.v.clone() * o.d[i].clone();
            }
            if order[i] >= 2 {
                out.dd[i] = self.dd[i].clone() * o.v.clone()
                    + (self.d[i].clone() * o.d[i].clone()).scale(2.0)
                    + self.v.clone() * o.dd[i].clone();
            }
        }
        out
    }
}

impl<S: Scalar, const D: usize> Div for Jet<S, D> {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        // a / b = a · (1/b); 1/b has derivatives -1/b², 2/b³
        let inv = S::constant(1.0) / o.v.clone();
        let inv2 = inv.square();
        let second = o.needs_second().then(|| (inv2.clone() * inv.clone()).scale(2.0));
        let recip = o.chain(inv, -inv2, second);
        self * recip
    }
}

impl<S: Scalar, const D: usize> Scalar for Jet<S, D> {
    type Coef = S::Coef;

    fn constant(c: f64) -> Self {
        Self::constant_jet(S::constant(c))
    }
    fn coef(c: f64) -> S::Coef {
        S::coef(c)
    }
    fn lift(c: &S::Coef) -> Self {
        Self::constant_jet(S::lift(c))
    }
    fn value(&self) -> f64 {
        self.v.value()
    }

    fn tanh(&self) -> Self {
        let t = self.v.tanh();
        let dt = S::constant(1.0) - t.square();
        let d2 = self.needs_second().then(|| (t.clone() * dt.clone()).scale(-2.0));
        self.chain(t, dt, d2)
    }
    fn sin(&self) -> Self {
        let s = self.v.sin();
        let c = self.v.cos();
        let d2 = self.needs_second().then(|| -s.clone());
        self.chain(s, c, d2)
    }
    fn cos(&self) -> Self {
        let s = self.v.sin();
        let c = self.v.cos();
        let d2 = self.needs_second().then(|| -c.clone());
        self.chain(c, -s, d2)
    }
    fn exp(&self) -> Self {
        let e = self.v.exp();
        let d2 = self.needs_second().then(|| e.clone());
        self.chain(e.clone(), e, d2)
    }
    fn powi(&self, n: i32) -> Self {
        match n {
            0 => Self::constant(1.0),
            1 => self.clone(),
            _ => {
                let f = self.v.powi(n);
                let df = self.v.powi(n - 1).scale(n as f64);
                let d2 = self
                    .needs_second()
                    .then(|| self.v.powi(n - 2).scale((n * (n - 1)) as f64));
                self.chain(f, df, d2)
            }
        }
    }

    fn affine(weights: &[S::Coef], bias: Option<&S::Coef>, inputs: &[Self]) -> Self {
        let mut out = Vec::with_capacity(1);
        let biases: Vec<S::Coef> = vec![bias.cloned().unwrap_or_else(|| S::coef(0.0))];
        Self::affine_layer(weights, &biases, inputs, &mut out);
        out.pop().expect("one output")
    }

    /// Gathers each jet component once per layer so that every output
    /// component is a single affine map of the matching input components.
    fn affine_layer(weights: &[S::Coef], biases: &[S::Coef], inputs: &[Self], out: &mut Vec<Self>) {
        let n_in = inputs.len();
        let order = inputs
            .iter()
            .fold([0u8; D], |acc, x| std::array::from_fn(|i| acc[i].max(x.order[i])));
        let values: Vec<S> = inputs.iter().map(|x| x.v.clone()).collect();
        let firsts: Vec<Vec<S>> = (0..D)
            .map(|i| if order[i] >= 1 { inputs.iter().map(|x| x.d[i].clone()).collect() } else { Vec::new() })
            .collect();
        let seconds: Vec<Vec<S>> = (0..D)
            .map(|i| if order[i] >= 2 { inputs.iter().map(|x| x.dd[i].clone()).collect() } else { Vec::new() })
            .collect();
        out.clear();
        for (j, b) in biases.iter().enumerate() {
            let row = &weights[j * n_in..(j + 1) * n_in];
            let mut jet = Self::constant_jet(S::affine(row, Some(b), &values));
            jet.order = order;
            for i in 0..D {
                if order[i] >= 1 {
                    jet.d[i] = S::affine(row, None, &firsts[i]);
                }
                if order[i] >= 2 {
                    jet.dd[i] = S::affine(row, None, &seconds[i]);
                }
            }
            out.push(jet);
        }
    }
}
