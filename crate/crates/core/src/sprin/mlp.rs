use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

/// Fully connected layer `y = W·x + b`, `W` stored row-major `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    inputs: usize,
    outputs: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl Dense {
    pub fn new(inputs: usize, outputs: usize, weights: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        if weights.len() != inputs * outputs || bias.len() != outputs {
            return Err(Error::DimensionMismatch(format!(
                "dense {inputs}->{outputs} needs {} weights and {outputs} biases, got {} and {}",
                inputs * outputs,
                weights.len(),
                bias.len()
            )));
        }
        Ok(Self { inputs, outputs, weights, bias })
    }

    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self { inputs, outputs, weights: vec![0.0; inputs * outputs], bias: vec![0.0; outputs] }
    }

    /// Normal weights with variance `2 / inputs`, zero bias.
    pub fn he_normal<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let normal = Normal::new(0.0, (2.0 / inputs.max(1) as f64).sqrt()).expect("finite std");
        let weights = (0..inputs * outputs).map(|_| normal.sample(rng)).collect();
        Self { inputs, outputs, weights, bias: vec![0.0; outputs] }
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    pub fn forward_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.inputs);
        for (o, (row, b)) in out.iter_mut().zip(self.weights.chunks_exact(self.inputs).zip(&self.bias)) {
            *o = b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
        }
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.outputs];
        self.forward_into(x, &mut out);
        out
    }
}

/// Stack of dense layers with a rectifier after every layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Dense>,
}

impl Mlp {
    pub fn new(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidParameter("an MLP needs at least one layer".into()));
        }
        for pair in layers.windows(2) {
            if pair[0].outputs != pair[1].inputs {
                return Err(Error::DimensionMismatch(format!(
                    "layer widths {} and {} do not chain",
                    pair[0].outputs, pair[1].inputs
                )));
            }
        }
        Ok(Self { layers })
    }

    /// Widths `[in, hidden.., out]`, scaled-normal weights.
    pub fn random<R: Rng + ?Sized>(widths: &[usize], rng: &mut R) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::InvalidParameter(format!("invalid MLP widths {widths:?}")));
        }
        Self::new(widths.windows(2).map(|w| Dense::he_normal(w[0], w[1], rng)).collect())
    }

    /// Maps every input to `rectified(value)`.
    pub fn constant(inputs: usize, value: &[f64]) -> Self {
        let mut last = Dense::zeros(inputs, value.len());
        last.bias.copy_from_slice(value);
        Self { layers: vec![last] }
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn inputs(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn outputs(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs
    }

    pub fn widths(&self) -> Vec<usize> {
        std::iter::once(self.inputs()).chain(self.layers.iter().map(|l| l.outputs)).collect()
    }

    /// First-layer pre-activation contributed by inputs `skip..`, bias included.
    pub(crate) fn first_layer_tail(&self, skip: usize, tail: &[f64]) -> Vec<f64> {
        let first = &self.layers[0];
        debug_assert_eq!(skip + tail.len(), first.inputs);
        first
            .weights
            .chunks_exact(first.inputs)
            .zip(&first.bias)
            .map(|(row, b)| b + row[skip..].iter().zip(tail).map(|(w, v)| w * v).sum::<f64>())
            .collect()
    }

    /// Forward pass where `tail` is [`first_layer_tail`](Self::first_layer_tail)
    /// of the remaining inputs.
    pub(crate) fn forward_with_tail(&self, head: &[f64], tail: &[f64]) -> Vec<f64> {
        let first = &self.layers[0];
        let mut cur: Vec<f64> = first
            .weights
            .chunks_exact(first.inputs)
            .zip(tail)
            .map(|(row, t)| {
                (t + row[..head.len()].iter().zip(head).map(|(w, v)| w * v).sum::<f64>()).max(0.0)
            })
            .collect();
        for layer in &self.layers[1..] {
            let mut next = layer.forward(&cur);
            next.iter_mut().for_each(|v| *v = v.max(0.0));
            cur = next;
        }
        cur
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut cur = x.to_vec();
        for layer in &self.layers {
            let mut next = layer.forward(&cur);
            next.iter_mut().for_each(|v| *v = v.max(0.0));
            cur = next;
        }
        cur
    }
}

/// Point-wise filter `ψ` of a sparse correlation layer: an [`Mlp`] fed with
/// the eight relative invariants followed by the neighbor's features.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpFilter {
    mlp: Mlp,
}

impl MlpFilter {
    pub fn new(mlp: Mlp) -> Result<Self> {
        if mlp.inputs() < super::RelativeInvariant::LEN {
            return Err(Error::DimensionMismatch(format!(
                "filter input width {} is smaller than the {} invariants",
                mlp.inputs(),
                super::RelativeInvariant::LEN
            )));
        }
        Ok(Self { mlp })
    }

    pub fn random<R: Rng + ?Sized>(c_in: usize, hidden: &[usize], c_out: usize, rng: &mut R) -> Result<Self> {
        let mut widths = vec![super::RelativeInvariant::LEN + c_in];
        widths.extend_from_slice(hidden);
        widths.push(c_out);
        Self::new(Mlp::random(&widths, rng)?)
    }

    pub fn constant(c_in: usize, value: &[f64]) -> Self {
        Self { mlp: Mlp::constant(super::RelativeInvariant::LEN + c_in, value) }
    }

    pub fn c_in(&self) -> usize {
        self.mlp.inputs() - super::RelativeInvariant::LEN
    }

    pub fn c_out(&self) -> usize {
        self.mlp.outputs()
    }

    pub fn mlp(&self) -> &Mlp {
        &self.mlp
    }

    pub fn mlp_mut(&mut self) -> &mut Mlp {
        &mut self.mlp
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn dense_matches_hand_product() {
        let d = Dense::new(2, 2, vec![1.0, 2.0, -1.0, 0.5], vec![0.1, -0.2]).unwrap();
        assert_eq!(d.forward(&[3.0, 4.0]), vec![11.1, -1.2]);
    }

    #[test]
    fn widths_must_chain() {
        assert!(Mlp::new(vec![Dense::zeros(3, 4), Dense::zeros(5, 2)]).is_err());
        let m = Mlp::new(vec![Dense::zeros(3, 4), Dense::zeros(4, 2)]).unwrap();
        assert_eq!(m.widths(), vec![3, 4, 2]);
        assert!(Dense::new(2, 2, vec![0.0; 3], vec![0.0; 2]).is_err());
    }

    #[test]
    fn rectifier_clips_negatives() {
        let m = Mlp::constant(3, &[1.5, -2.0]);
        assert_eq!(m.forward(&[9.0, 9.0, 9.0]), vec![1.5, 0.0]);
    }

    #[test]
    fn scaled_normal_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = Dense::he_normal(64, 256, &mut rng);
        let n = d.weights().len() as f64;
        let mean = d.weights().iter().sum::<f64>() / n;
        let var = d.weights().iter().map(|w| (w - mean) * (w - mean)).sum::<f64>() / n;
        assert!((var / (2.0 / 64.0) - 1.0).abs() < 0.1, "{var}");
    }

    #[test]
    fn split_forward_matches_plain() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let m = Mlp::random(&[11, 7, 4], &mut rng).unwrap();
        let x: Vec<f64> = (0..11).map(|i| (i as f64 * 0.7).cos()).collect();
        let split = m.forward_with_tail(&x[..8], &m.first_layer_tail(8, &x[8..]));
        for (a, b) in split.iter().zip(m.forward(&x)) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn filter_width_checks() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let f = MlpFilter::random(5, &[16], 7, &mut rng).unwrap();
        assert_eq!((f.c_in(), f.c_out()), (5, 7));
        assert!(MlpFilter::new(Mlp::random(&[4, 3], &mut rng).unwrap()).is_err());
    }
}
