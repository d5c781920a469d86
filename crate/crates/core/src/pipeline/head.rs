use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::resample::FeatureMatrix;
use crate::sprin::Dense;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HeadConfig {
    /// Hidden widths; empty for softmax regression.
    pub hidden: Vec<usize>,
    pub classes: usize,
}

/// Standardization followed by an MLP with rectified hidden layers and a
/// softmax output.
#[derive(Debug, Clone, PartialEq)]
pub struct Head {
    mean: Vec<f64>,
    scale: Vec<f64>,
    layers: Vec<Dense>,
}

struct Tape {
    /// Input of every layer.
    inputs: Vec<Vec<f64>>,
    logits: Vec<f64>,
}

impl Head {
    /// Standardization from `feats`, scaled-normal weights.
    pub fn init(feats: &FeatureMatrix, cfg: &HeadConfig, seed: u64) -> Result<Self> {
        if cfg.classes < 2 {
            return Err(Error::InvalidParameter(format!("need at least 2 classes, got {}", cfg.classes)));
        }
        if feats.rows() == 0 || feats.cols() == 0 {
            return Err(Error::InvalidParameter("no training features".into()));
        }
        let (n, c) = (feats.rows() as f64, feats.cols());
        let mut mean = vec![0.0; c];
        for r in 0..feats.rows() {
            mean.iter_mut().zip(feats.row(r)).for_each(|(m, v)| *m += v / n);
        }
        let mut var = vec![0.0; c];
        for r in 0..feats.rows() {
            var.iter_mut().zip(feats.row(r)).zip(&mean).for_each(|((s, v), m)| *s += (v - m) * (v - m) / n);
        }
        let scale = var.into_iter().map(|v| if v > 1e-24 { 1.0 / v.sqrt() } else { 1.0 }).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let widths: Vec<usize> =
            std::iter::once(c).chain(cfg.hidden.iter().copied()).chain([cfg.classes]).collect();
        if widths.contains(&0) {
            return Err(Error::InvalidParameter(format!("invalid head widths {widths:?}")));
        }
        let layers = widths.windows(2).map(|w| Dense::he_normal(w[0], w[1], &mut rng)).collect();
        Ok(Self { mean, scale, layers })
    }

    pub fn inputs(&self) -> usize {
        self.mean.len()
    }

    pub fn classes(&self) -> usize {
        self.layers.last().expect("at least one layer").outputs()
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights().len() + l.bias().len()).sum()
    }

    /// Flat parameter view: per layer, weights then biases.
    pub fn param(&self, idx: usize) -> f64 {
        let (l, part, i) = self.locate(idx);
        if part == 0 {
            self.layers[l].weights()[i]
        } else {
            self.layers[l].bias()[i]
        }
    }

    pub fn set_param(&mut self, idx: usize, v: f64) {
        let (l, part, i) = self.locate(idx);
        if part == 0 {
            self.layers[l].weights_mut()[i] = v;
        } else {
            self.layers[l].bias_mut()[i] = v;
        }
    }

    fn locate(&self, mut idx: usize) -> (usize, usize, usize) {
        for (l, layer) in self.layers.iter().enumerate() {
            if idx < layer.weights().len() {
                return (l, 0, idx);
            }
            idx -= layer.weights().len();
            if idx < layer.bias().len() {
                return (l, 1, idx);
            }
            idx -= layer.bias().len();
        }
        panic!("parameter index out of range");
    }

    fn run(&self, x: &[f64]) -> Tape {
        let mut cur: Vec<f64> =
            x.iter().zip(&self.mean).zip(&self.scale).map(|((v, m), s)| (v - m) * s).collect();
        let mut inputs = Vec::with_capacity(self.layers.len());
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let mut next = layer.forward(&cur);
            if l < last {
                next.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            inputs.push(std::mem::replace(&mut cur, next));
        }
        Tape { inputs, logits: cur }
    }

    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        self.run(x).logits
    }

    pub fn predict(&self, feats: &FeatureMatrix) -> Vec<usize> {
        (0..feats.rows()).map(|r| argmax(&self.logits(feats.row(r)))).collect()
    }

    pub fn accuracy(&self, feats: &FeatureMatrix, labels: &[usize]) -> f64 {
        let hits = self.predict(feats).iter().zip(labels).filter(|(p, l)| p == l).count();
        hits as f64 / labels.len().max(1) as f64
    }

    /// Mean softmax cross-entropy.
    pub fn loss(&self, feats: &FeatureMatrix, labels: &[usize]) -> f64 {
        let total: f64 =
            (0..feats.rows()).map(|r| cross_entropy(&self.logits(feats.row(r)), labels[r]).0).sum();
        total / feats.rows() as f64
    }

    /// Loss and its gradient, laid out like the parameters.
    pub fn gradient(&self, feats: &FeatureMatrix, labels: &[usize]) -> (f64, Vec<f64>) {
        let n = feats.rows() as f64;
        let mut grads: Vec<(Vec<f64>, Vec<f64>)> =
            self.layers.iter().map(|l| (vec![0.0; l.weights().len()], vec![0.0; l.bias().len()])).collect();
        let mut loss = 0.0;
        for (r, &label) in labels.iter().enumerate().take(feats.rows()) {
            let tape = self.run(feats.row(r));
            let (l, mut delta) = cross_entropy(&tape.logits, label);
            loss += l / n;
            delta.iter_mut().for_each(|d| *d /= n);
            for (li, layer) in self.layers.iter().enumerate().rev() {
                let input = &tape.inputs[li];
                let (gw, gb) = &mut grads[li];
                for (o, d) in delta.iter().enumerate() {
                    gb[o] += d;
                    for (g, x) in gw[o * layer.inputs()..(o + 1) * layer.inputs()].iter_mut().zip(input) {
                        *g += d * x;
                    }
                }
                if li == 0 {
                    break;
                }
                // back through W and the rectifier of the previous layer
                let mut prev = vec![0.0; layer.inputs()];
                for (o, d) in delta.iter().enumerate() {
                    let row = &layer.weights()[o * layer.inputs()..(o + 1) * layer.inputs()];
                    prev.iter_mut().zip(row).for_each(|(p, w)| *p += w * d);
                }
                prev.iter_mut().zip(input).for_each(|(p, a)| {
                    if *a <= 0.0 {
                        *p = 0.0
                    }
                });
                delta = prev;
            }
        }
        (loss, grads.into_iter().flat_map(|(w, b)| w.into_iter().chain(b)).collect())
    }
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// `(−log softmax(z)_y, softmax(z) − e_y)`.
fn cross_entropy(z: &[f64], y: usize) -> (f64, Vec<f64>) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exp.iter().sum();
    let loss = sum.ln() - (z[y] - max);
    let mut grad: Vec<f64> = exp.iter().map(|e| e / sum).collect();
    grad[y] -= 1.0;
    (loss, grad)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub head: Head,
    /// Training accuracy before every epoch and after the last.
    pub accuracy_curve: Vec<f64>,
    pub loss_curve: Vec<f64>,
}

/// Full-batch gradient descent on the cross-entropy of a freshly initialized head.
pub fn train_head(
    feats: &FeatureMatrix,
    labels: &[usize],
    cfg: &HeadConfig,
    epochs: usize,
    lr: f64,
    seed: u64,
) -> Result<TrainReport> {
    if labels.len() != feats.rows() {
        return Err(Error::DimensionMismatch(format!(
            "{} labels for {} feature rows",
            labels.len(),
            feats.rows()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= cfg.classes) {
        return Err(Error::InvalidParameter(format!("label {bad} out of range for {} classes", cfg.classes)));
    }
    if !(lr.is_finite() && lr >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "learning rate must be finite and non-negative, got {lr}"
        )));
    }
    let mut head = Head::init(feats, cfg, seed)?;
    let mut accuracy_curve = Vec::with_capacity(epochs + 1);
    let mut loss_curve = Vec::with_capacity(epochs + 1);
    for epoch in 0..epochs {
        let (loss, grad) = head.gradient(feats, labels);
        if !loss.is_finite() {
            return Err(Error::Divergence { epoch, loss });
        }
        loss_curve.push(loss);
        accuracy_curve.push(head.accuracy(feats, labels));
        for (i, g) in grad.into_iter().enumerate() {
            head.set_param(i, head.param(i) - lr * g);
        }
    }
    let loss = head.loss(feats, labels);
    if !loss.is_finite() {
        return Err(Error::Divergence { epoch: epochs, loss });
    }
    loss_curve.push(loss);
    accuracy_curve.push(head.accuracy(feats, labels));
    Ok(TrainReport { head, accuracy_curve, loss_curve })
}
