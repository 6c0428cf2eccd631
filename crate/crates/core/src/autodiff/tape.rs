use std::cell::RefCell;
use std::ops::{Add, Div, Mul, Neg, Sub};

use super::real::Real;
use super::scalar::Scalar;
use super::AdError;

/// Arena of recorded elementary operations.
///
/// Every node stores its value and the local partial derivatives towards its
/// parents. Constants never enter the tape, so operations against zero or
/// unit constants cost nothing.
pub struct Tape<T: Real> {
    data: RefCell<TapeData<T>>,
}

struct TapeData<T> {
    values: Vec<T>,
    edge_start: Vec<u32>,
    parents: Vec<u32>,
    partials: Vec<T>,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Tape {
            data: RefCell::new(TapeData {
                values: Vec::new(),
                edge_start: Vec::new(),
                parents: Vec::new(),
                partials: Vec::new(),
            }),
        }
    }

    /// Registers an independent input.
    pub fn var(&self, value: T) -> Var<'_, T> {
        let idx = self.push(value, std::iter::empty());
        Var { tape: Some(self), idx, val: value }
    }

    pub fn len(&self) -> usize {
        self.data.borrow().values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn clear(&self) {
        self.truncate(0);
    }

    /// Drops every node recorded after the first `len` nodes. Variables
    /// created before the mark stay valid.
    pub fn truncate(&self, len: usize) {
        let mut d = self.data.borrow_mut();
        if len >= d.values.len() {
            return;
        }
        let edges = d.edge_start[len] as usize;
        d.values.truncate(len);
        d.edge_start.truncate(len);
        d.parents.truncate(edges);
        d.partials.truncate(edges);
    }

    fn push(&self, value: T, edges: impl IntoIterator<Item = (u32, T)>) -> u32 {
        let mut d = self.data.borrow_mut();
        let idx = d.values.len() as u32;
        let start = d.parents.len() as u32;
        d.values.push(value);
        d.edge_start.push(start);
        for (p, w) in edges {
            d.parents.push(p);
            d.partials.push(w);
        }
        idx
    }

    /// Reverse sweep from `output`, seeding it with a unit adjoint.
    ///
    /// On return `adjoints[i]` holds `∂output/∂node_i` for every node up to
    /// `output`.
    pub fn backward_into(&self, output: &Var<'_, T>, adjoints: &mut Vec<T>) -> Result<(), AdError> {
        let zero = T::from_f64(0.0);
        adjoints.clear();
        let Some(_) = output.tape else {
            return Ok(());
        };
        let d = self.data.borrow();
        let out = output.idx as usize;
        adjoints.resize(out + 1, zero);
        adjoints[out] = T::from_f64(1.0);
        for i in (0..=out).rev() {
            let a = adjoints[i];
            if a == zero {
                continue;
            }
            let start = d.edge_start[i] as usize;
            let end = d.edge_start.get(i + 1).map_or(d.parents.len(), |&e| e as usize);
            for e in start..end {
                let p = d.parents[e] as usize;
                adjoints[p] += a * d.partials[e];
            }
        }
        if !output.val.is_finite() || adjoints.iter().any(|a| !a.is_finite()) {
            let node = d.values[..=out].iter().position(|v| !v.is_finite()).unwrap_or(out);
            return Err(AdError::NonFinite { node, value: d.values[node].primal() });
        }
        Ok(())
    }

    pub fn backward(&self, output: &Var<'_, T>) -> Result<Vec<T>, AdError> {
        let mut adj = Vec::new();
        self.backward_into(output, &mut adj)?;
        Ok(adj)
    }
}

/// Handle to a value that is either a constant or a node on a [`Tape`].
#[derive(Clone, Copy, Debug)]
pub struct Var<'t, T: Real> {
    tape: Option<&'t Tape<T>>,
    idx: u32,
    val: T,
}

impl<T: Real> std::fmt::Debug for Tape<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Tape({} nodes)", self.len())
    }
}

impl<'t, T: Real> Var<'t, T> {
    pub fn constant(val: T) -> Self {
        Var { tape: None, idx: u32::MAX, val }
    }

    pub fn val(&self) -> T {
        self.val
    }

    /// Node index, or `None` for constants.
    pub fn index(&self) -> Option<usize> {
        self.tape.map(|_| self.idx as usize)
    }

    pub fn is_constant(&self) -> bool {
        self.tape.is_none()
    }

    #[inline]
    fn is_const_value(&self, c: f64) -> bool {
        self.tape.is_none() && self.val == T::from_f64(c)
    }

    #[inline]
    fn unary(self, val: T, partial: T) -> Self {
        match self.tape {
            None => Var::constant(val),
            Some(t) => {
                let idx = t.push(val, [(self.idx, partial)]);
                Var { tape: Some(t), idx, val }
            }
        }
    }

    #[inline]
    fn binary(self, other: Self, val: T, da: T, db: T) -> Self {
        match (self.tape, other.tape) {
            (None, None) => Var::constant(val),
            (Some(t), None) => {
                let idx = t.push(val, [(self.idx, da)]);
                Var { tape: Some(t), idx, val }
            }
            (None, Some(t)) => {
                let idx = t.push(val, [(other.idx, db)]);
                Var { tape: Some(t), idx, val }
            }
            (Some(t), Some(_)) => {
                let idx = t.push(val, [(self.idx, da), (other.idx, db)]);
                Var { tape: Some(t), idx, val }
            }
        }
    }
}

impl<'t, T: Real> Add for Var<'t, T> {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        if o.is_const_value(0.0) {
            return self;
        }
        if self.is_const_value(0.0) {
            return o;
        }
        let one = T::from_f64(1.0);
        self.binary(o, self.val + o.val, one, one)
    }
}

impl<'t, T: Real> Sub for Var<'t, T> {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        if o.is_const_value(0.0) {
            return self;
        }
        self.binary(o, self.val - o.val, T::from_f64(1.0), T::from_f64(-1.0))
    }
}

impl<'t, T: Real> Mul for Var<'t, T> {
    type Output = Self;
    #[inline]
    fn mul(self, o: Self) -> Self {
        if self.is_const_value(0.0) || o.is_const_value(0.0) {
            return Var::constant(T::from_f64(0.0));
        }
        if o.is_const_value(1.0) {
            return self;
        }
        if self.is_const_value(1.0) {
            return o;
        }
        self.binary(o, self.val * o.val, o.val, self.val)
    }
}

impl<'t, T: Real> Div for Var<'t, T> {
    type Output = Self;
    #[inline]
    fn div(self, o: Self) -> Self {
        if o.is_const_value(1.0) {
            return self;
        }
        let q = self.val / o.val;
        let inv = T::from_f64(1.0) / o.val;
        self.binary(o, q, inv, -q * inv)
    }
}

impl<'t, T: Real> Neg for Var<'t, T> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        self.unary(-self.val, T::from_f64(-1.0))
    }
}

impl<'t, T: Real> Scalar for Var<'t, T> {
    type Coef = Var<'t, T>;

    fn constant(c: f64) -> Self {
        Var::constant(T::from_f64(c))
    }
    fn coef(c: f64) -> Self {
        Var::constant(T::from_f64(c))
    }
    fn lift(c: &Self) -> Self {
        *c
    }
    fn value(&self) -> f64 {
        self.val.primal()
    }

    fn tanh(&self) -> Self {
        let t = self.val.tanh();
        self.unary(t, T::from_f64(1.0) - t * t)
    }
    fn sin(&self) -> Self {
        self.unary(self.val.sin(), self.val.cos())
    }
    fn cos(&self) -> Self {
        self.unary(self.val.cos(), -self.val.sin())
    }
    fn exp(&self) -> Self {
        let e = self.val.exp();
        self.unary(e, e)
    }
    fn powi(&self, n: i32) -> Self {
        match n {
            0 => Var::constant(T::from_f64(1.0)),
            1 => *self,
            _ => self.unary(self.val.powi(n), T::from_f64(n as f64) * self.val.powi(n - 1)),
        }
    }

    /// Records a single n-ary node instead of a chain of binary ones.
    fn affine(weights: &[Self], bias: Option<&Self>, inputs: &[Self]) -> Self {
        let mut acc = T::from_f64(0.0);
        let mut tape = bias.and_then(|b| b.tape);
        for (w, x) in weights.iter().zip(inputs) {
            acc += w.val * x.val;
            tape = tape.or(w.tape).or(x.tape);
        }
        let val = match bias {
            Some(b) => b.val + acc,
            None => acc,
        };
        let Some(t) = tape else {
            return Var::constant(val);
        };
        let edges = weights
            .iter()
            .zip(inputs)
            .flat_map(|(w, x)| {
                let we = w.tape.filter(|_| !x.is_const_value(0.0)).map(|_| (w.idx, x.val));
                let xe = x.tape.filter(|_| !w.is_const_value(0.0)).map(|_| (x.idx, w.val));
                we.into_iter().chain(xe)
            })
            .chain(bias.and_then(|b| b.tape.map(|_| (b.idx, T::from_f64(1.0)))));
        let idx = t.push(val, edges);
        Var { tape: Some(t), idx, val }
    }
}
