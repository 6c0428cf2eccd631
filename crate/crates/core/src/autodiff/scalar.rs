use std::ops::{Add, Div, Mul, Neg, Sub};

/// Arithmetic interface shared by every number type a model can be
/// evaluated with: plain `f64`, tape variables, and input jets over either.
///
/// `Coef` is the type of trainable coefficients (network weights). For plain
/// and taped scalars it is the scalar itself; a jet borrows the coefficient
/// type of its components, because weights never carry input derivatives.
pub trait Scalar:
    Clone
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    type Coef: Clone;

    fn constant(c: f64) -> Self;
    fn coef(c: f64) -> Self::Coef;
    fn lift(c: &Self::Coef) -> Self;
    /// Primal value.
    fn value(&self) -> f64;

    fn tanh(&self) -> Self;
    fn sin(&self) -> Self;
    fn cos(&self) -> Self;
    fn exp(&self) -> Self;
    fn powi(&self, n: i32) -> Self;

    /// `bias + Σ weights[i]·inputs[i]`.
    fn affine(weights: &[Self::Coef], bias: Option<&Self::Coef>, inputs: &[Self]) -> Self;

    /// Dense layer `out[j] = biases[j] + Σ_i weights[j·n_in + i]·inputs[i]`
    /// with row-major weights.
    fn affine_layer(
        weights: &[Self::Coef],
        biases: &[Self::Coef],
        inputs: &[Self],
        out: &mut Vec<Self>,
    ) {
        let n_in = inputs.len();
        out.clear();
        for (j, b) in biases.iter().enumerate() {
            out.push(Self::affine(&weights[j * n_in..(j + 1) * n_in], Some(b), inputs));
        }
    }

    fn scale(&self, c: f64) -> Self {
        self.clone() * Self::constant(c)
    }

    fn square(&self) -> Self {
        self.clone() * self.clone()
    }
}

impl Scalar for f64 {
    type Coef = f64;

    #[inline]
    fn constant(c: f64) -> Self {
        c
    }
    #[inline]
    fn coef(c: f64) -> f64 {
        c
    }
    #[inline]
    fn lift(c: &f64) -> Self {
        *c
    }
    #[inline]
    fn value(&self) -> f64 {
        *self
    }
    fn tanh(&self) -> Self {
        f64::tanh(*self)
    }
    fn sin(&self) -> Self {
        f64::sin(*self)
    }
    fn cos(&self) -> Self {
        f64::cos(*self)
    }
    fn exp(&self) -> Self {
        f64::exp(*self)
    }
    fn powi(&self, n: i32) -> Self {
        f64::powi(*self, n)
    }

    #[inline]
    fn affine(weights: &[f64], bias: Option<&f64>, inputs: &[f64]) -> Self {
        let acc = weights.iter().zip(inputs).fold(0.0, |acc, (w, x)| acc + w * x);
        bias.map_or(acc, |b| b + acc)
    }
}
