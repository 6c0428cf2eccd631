//! Fully connected tanh networks with a flat parameter vector.

use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::Scalar;

#[derive(Debug, Error)]
pub enum MlpError {
    #[error("invalid network spec: {0}")]
    InvalidSpec(String),
    #[error("parameter vector has {got} entries, spec needs {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Architecture `input_dim → hidden[0] → … → output_dim`, tanh on hidden
/// layers, affine output.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub output_dim: usize,
}

impl MlpSpec {
    pub fn new(input_dim: usize, hidden: Vec<usize>, output_dim: usize) -> Result<Self, MlpError> {
        let spec = MlpSpec { input_dim, hidden, output_dim };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), MlpError> {
        if self.input_dim == 0 || self.output_dim == 0 || self.hidden.contains(&0) {
            return Err(MlpError::InvalidSpec(format!("all widths must be >= 1, got {:?}", self.widths())));
        }
        Ok(())
    }

    /// Layer widths including input and output.
    pub fn widths(&self) -> Vec<usize> {
        let mut w = Vec::with_capacity(self.hidden.len() + 2);
        w.push(self.input_dim);
        w.extend_from_slice(&self.hidden);
        w.push(self.output_dim);
        w
    }

    /// `(weight offset, bias offset, fan_in, fan_out)` per layer.
    pub fn layout(&self) -> Vec<LayerLayout> {
        let widths = self.widths();
        let mut offset = 0;
        widths
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let l = LayerLayout { weights: offset, biases: offset + fan_in * fan_out, fan_in, fan_out };
                offset += (fan_in + 1) * fan_out;
                l
            })
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.widths().windows(2).map(|w| (w[0] + 1) * w[1]).sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LayerLayout {
    pub weights: usize,
    pub biases: usize,
    pub fan_in: usize,
    pub fan_out: usize,
}

/// Flat parameters θ. Per layer: row-major `fan_out × fan_in` weights, then
/// `fan_out` biases.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamVector {
    spec: MlpSpec,
    values: Vec<f64>,
}

impl ParamVector {
    pub fn from_values(spec: MlpSpec, values: Vec<f64>) -> Result<Self, MlpError> {
        let expected = spec.param_count();
        if values.len() != expected {
            return Err(MlpError::LengthMismatch { expected, got: values.len() });
        }
        Ok(ParamVector { spec, values })
    }

    pub fn zeros(spec: MlpSpec) -> Self {
        let n = spec.param_count();
        ParamVector { spec, values: vec![0.0; n] }
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Per-layer `(weights, biases)` views.
    pub fn layers(&self) -> Vec<(&[f64], &[f64])> {
        self.spec
            .layout()
            .into_iter()
            .map(|l| {
                (
                    &self.values[l.weights..l.biases],
                    &self.values[l.biases..l.biases + l.fan_out],
                )
            })
            .collect()
    }

    /// Rebuilds a flat vector from per-layer parts; inverse of [`layers`](Self::layers).
    pub fn from_layers(spec: MlpSpec, layers: &[(Vec<f64>, Vec<f64>)]) -> Result<Self, MlpError> {
        let values: Vec<f64> = layers.iter().flat_map(|(w, b)| w.iter().chain(b).copied()).collect();
        Self::from_values(spec, values)
    }
}

/// Glorot-uniform weights (bound `√(6/(fan_in+fan_out))`) and zero biases.
pub fn init(spec: &MlpSpec, seed: u64) -> ParamVector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = vec![0.0; spec.param_count()];
    for l in spec.layout() {
        let bound = (6.0 / (l.fan_in + l.fan_out) as f64).sqrt();
        for w in &mut values[l.weights..l.biases] {
            *w = rng.random_range(-bound..bound);
        }
    }
    ParamVector { spec: spec.clone(), values }
}

/// Raw network output for a single-output spec.
pub fn forward<S: Scalar>(spec: &MlpSpec, theta: &[S::Coef], x: &[S]) -> S {
    let mut out = forward_all(spec, theta, x);
    debug_assert_eq!(out.len(), 1);
    out.swap_remove(0)
}

pub fn forward_all<S: Scalar>(spec: &MlpSpec, theta: &[S::Coef], x: &[S]) -> Vec<S> {
    assert_eq!(x.len(), spec.input_dim, "input dimension");
    assert_eq!(theta.len(), spec.param_count(), "parameter count");
    let layout = spec.layout();
    let last = layout.len() - 1;
    let mut act: Vec<S> = x.to_vec();
    let mut next = Vec::new();
    for (k, l) in layout.iter().enumerate() {
        S::affine_layer(&theta[l.weights..l.biases], &theta[l.biases..l.biases + l.fan_out], &act, &mut next);
        if k != last {
            for z in &mut next {
                *z = z.tanh();
            }
        }
        std::mem::swap(&mut act, &mut next);
    }
    act
}

const CHECKPOINT_MAGIC: &[u8; 8] = b"PINNCKPT";

/// Writes `magic, u32 layer count, u32 widths…, u64 seed, u64 n, n × f64`,
/// all little-endian.
pub fn write_checkpoint(path: &Path, theta: &ParamVector, seed: u64) -> Result<(), MlpError> {
    let mut buf = Vec::with_capacity(64 + 8 * theta.len());
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    let widths = theta.spec.widths();
    buf.extend_from_slice(&(widths.len() as u32).to_le_bytes());
    for w in &widths {
        buf.extend_from_slice(&(*w as u32).to_le_bytes());
    }
    buf.extend_from_slice(&seed.to_le_bytes());
    buf.extend_from_slice(&(theta.len() as u64).to_le_bytes());
    for v in &theta.values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    std::fs::File::create(path)?.write_all(&buf)?;
    Ok(())
}

/// Inverse of [`write_checkpoint`]; returns the parameters and the seed.
pub fn read_checkpoint(path: &Path) -> Result<(ParamVector, u64), MlpError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let mut cur = Cursor { bytes: &bytes, pos: 0 };
    if cur.take(8)? != CHECKPOINT_MAGIC {
        return Err(MlpError::Checkpoint("bad magic".into()));
    }
    let n_widths = cur.u32()? as usize;
    if n_widths < 2 {
        return Err(MlpError::Checkpoint(format!("need at least 2 widths, got {n_widths}")));
    }
    let widths = (0..n_widths).map(|_| cur.u32().map(|w| w as usize)).collect::<Result<Vec<_>, _>>()?;
    let seed = cur.u64()?;
    let n = cur.u64()? as usize;
    let spec = MlpSpec::new(widths[0], widths[1..n_widths - 1].to_vec(), widths[n_widths - 1])?;
    let values = (0..n).map(|_| cur.u64().map(f64::from_bits)).collect::<Result<Vec<_>, _>>()?;
    if cur.pos != bytes.len() {
        return Err(MlpError::Checkpoint("trailing bytes".into()));
    }
    Ok((ParamVector::from_values(spec, values)?, seed))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], MlpError> {
        let s = self
            .bytes
            .get(self.pos..self.pos + n)
            .ok_or_else(|| MlpError::Checkpoint("truncated file".into()))?;
        self.pos += n;
        Ok(s)
    }
    fn u32(&mut self) -> Result<u32, MlpError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64, MlpError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{input_jet, InputFn};
    use proptest::prelude::*;

    fn spec(hidden: &[usize]) -> MlpSpec {
        MlpSpec::new(2, hidden.to_vec(), 1).unwrap()
    }

    #[test]
    fn param_count_matches_layout_formula() {
        assert_eq!(spec(&[32, 32, 32]).param_count(), 2241);
        assert_eq!(init(&spec(&[32, 32, 32]), 0).len(), 2241);
    }

    #[test]
    fn zero_width_rejected() {
        assert!(MlpSpec::new(2, vec![4, 0], 1).is_err());
    }

    #[test]
    fn init_is_deterministic_and_seed_sensitive() {
        let s = spec(&[32, 32, 32]);
        let a = init(&s, 7);
        assert_eq!(a, init(&s, 7));
        let b = init(&s, 8);
        let weights: Vec<usize> = s.layout().iter().flat_map(|l| l.weights..l.biases).collect();
        let differ = weights.iter().filter(|&&i| a.values()[i] != b.values()[i]).count();
        assert!(differ as f64 >= 0.99 * weights.len() as f64);
        // biases are zero
        for l in s.layout() {
            assert!(a.values()[l.biases..l.biases + l.fan_out].iter().all(|&b| b == 0.0));
        }
    }

    #[test]
    fn glorot_bound_respected() {
        let s = spec(&[16, 8]);
        let p = init(&s, 3);
        for l in s.layout() {
            let bound = (6.0 / (l.fan_in + l.fan_out) as f64).sqrt();
            assert!(p.values()[l.weights..l.biases].iter().all(|w| w.abs() < bound));
        }
    }

    #[test]
    fn zero_network_outputs_zero() {
        let s = spec(&[5, 5]);
        let p = ParamVector::zeros(s.clone());
        assert_eq!(forward(&s, p.values(), &[0.3, -2.0]), 0.0);
    }

    #[test]
    fn linear_layer_without_hidden() {
        let s = MlpSpec::new(2, vec![], 1).unwrap();
        let y = forward(&s, &[1.0, 1.0, 0.0], &[2.0, 3.0]);
        assert_eq!(y, 5.0);
    }

    #[test]
    fn tanh_odd_symmetry() {
        let s = spec(&[2]);
        // W1 = I, b1 = 0, W2 = [1, 1], b2 = 0
        let theta = [1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 1.0, 0.0];
        let y = forward(&s, &theta, &[0.5, -0.5]);
        assert!(y.abs() < 1e-15);
    }

    struct Net<'a>(&'a MlpSpec, &'a [f64]);

    impl InputFn<2> for Net<'_> {
        fn eval<S: Scalar>(&self, x: &[S; 2]) -> S {
            let theta: Vec<S::Coef> = self.1.iter().map(|&w| S::coef(w)).collect();
            forward(self.0, &theta, x)
        }
    }

    #[test]
    fn output_bounded_by_last_layer() {
        let s = spec(&[6, 6]);
        let p = init(&s, 11);
        let l = *s.layout().last().unwrap();
        let bound: f64 = p.values()[l.weights..l.biases].iter().map(|w| w.abs()).sum::<f64>()
            + p.values()[l.biases].abs();
        for k in 0..50 {
            let x = [k as f64 * 0.37 - 9.0, (k as f64).sin() * 20.0];
            assert!(forward(&s, p.values(), &x).abs() <= bound);
            let (_, d1, d2) = input_jet(&Net(&s, p.values()), &x, k % 2);
            assert!(d1.is_finite() && d2.is_finite());
        }
    }

    #[test]
    fn checkpoint_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.bin");
        let p = init(&spec(&[3, 4]), 99);
        write_checkpoint(&path, &p, 99).unwrap();
        let (q, seed) = read_checkpoint(&path).unwrap();
        assert_eq!(seed, 99);
        assert_eq!(p, q);
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(read_checkpoint(&path).is_err());
    }

    proptest! {
        #[test]
        fn layers_roundtrip(hidden in proptest::collection::vec(1usize..6, 0..3), seed in 0u64..1000) {
            let s = spec(&hidden);
            let p = init(&s, seed);
            let parts: Vec<(Vec<f64>, Vec<f64>)> =
                p.layers().into_iter().map(|(w, b)| (w.to_vec(), b.to_vec())).collect();
            let q = ParamVector::from_layers(s, &parts).unwrap();
            prop_assert_eq!(p, q);
        }
    }
}
