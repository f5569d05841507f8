//! The regression predictor: a fully connected network with rectifier hidden
//! layers and a linear output, its reverse-mode gradients, and an
//! adaptive-moment optimizer.
//!
//! Every reduction runs in a fixed sequential order so that repeated runs with
//! the same parameters and inputs are bit-identical, and a batched forward
//! pass equals row-by-row evaluation exactly.

use std::path::Path;

use ndarray::ArrayView2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Width of both hidden layers of the default architecture.
pub const HIDDEN_WIDTH: usize = 64;

/// Leading bytes of a serialized checkpoint.
pub const CHECKPOINT_MAGIC: &[u8; 8] = b"WRCPMLP1";

const ACT_RELU: u8 = 1;
const ACT_IDENTITY: u8 = 0;

/// One affine layer; `weights` is `outputs × inputs`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    fn forward(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for o in 0..self.outputs {
            let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
            let mut z = self.bias[o];
            for (w, a) in row.iter().zip(x) {
                z += w * a;
            }
            out.push(z);
        }
    }
}

/// Multilayer perceptron `h_θ` with rectifier hidden units and identity output.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    layers: Vec<Dense>,
}

impl MlpModel {
    /// The `(input_dim, 64, 64, 1)` network with seeded Glorot-uniform
    /// weights and zero biases.
    pub fn new(input_dim: usize, seed: u64) -> Result<Self> {
        let model = Self::with_dims(&[input_dim, HIDDEN_WIDTH, HIDDEN_WIDTH, 1], seed)?;
        let d = input_dim;
        debug_assert_eq!(
            model.param_count(),
            d * HIDDEN_WIDTH + HIDDEN_WIDTH + HIDDEN_WIDTH * HIDDEN_WIDTH + HIDDEN_WIDTH + HIDDEN_WIDTH + 1
        );
        Ok(model)
    }

    /// Arbitrary layer widths; the last width must be 1.
    pub fn with_dims(dims: &[usize], seed: u64) -> Result<Self> {
        let mut model = Self::zeros(dims)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for layer in &mut model.layers {
            let limit = (6.0 / (layer.inputs + layer.outputs) as f64).sqrt();
            for w in &mut layer.weights {
                *w = rng.random_range(-limit..limit);
            }
        }
        Ok(model)
    }

    /// All parameters zero.
    pub fn zeros(dims: &[usize]) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::domain(format!("invalid layer dimensions {dims:?}")));
        }
        if *dims.last().unwrap() != 1 {
            return Err(Error::domain("the output layer must have width 1"));
        }
        Ok(Self {
            layers: dims.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect(),
        })
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn layer_dims(&self) -> Vec<usize> {
        std::iter::once(self.layers[0].inputs)
            .chain(self.layers.iter().map(|l| l.outputs))
            .collect()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    /// Parameters flattened layer by layer, weights before biases.
    pub fn params(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.bias).copied())
            .collect()
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::domain("parameter vector has the wrong length"));
        }
        let mut it = params.iter().copied();
        for l in &mut self.layers {
            for w in l.weights.iter_mut().chain(l.bias.iter_mut()) {
                *w = it.next().unwrap();
            }
        }
        Ok(())
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::domain(format!(
                "model expects {} features, got {}",
                self.input_dim(),
                x.len()
            )));
        }
        Ok(())
    }

    /// Prediction for one feature vector.
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        self.check_input(x)?;
        let mut cur = x.to_vec();
        let mut next = Vec::with_capacity(HIDDEN_WIDTH);
        let last = self.layers.len() - 1;
        for (li, layer) in self.layers.iter().enumerate() {
            layer.forward(&cur, &mut next);
            if li != last {
                next.iter_mut().for_each(|z| *z = z.max(0.0));
            }
            std::mem::swap(&mut cur, &mut next);
        }
        Ok(cur[0])
    }

    /// Predictions for every row of `x`.
    pub fn predict_rows(&self, x: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        if x.ncols() != self.input_dim() {
            return Err(Error::domain(format!(
                "model expects {} features, got {}",
                self.input_dim(),
                x.ncols()
            )));
        }
        x.rows()
            .into_iter()
            .map(|row| match row.as_slice() {
                Some(s) => self.predict(s),
                None => self.predict(&row.to_vec()),
            })
            .collect()
    }

    /// Gradient of `Σ_j upstream[j] · h_θ(inputs[j])` with respect to every
    /// parameter.
    pub fn backward(&self, inputs: ArrayView2<'_, f64>, upstream: &[f64]) -> Result<GradBuffer> {
        if inputs.ncols() != self.input_dim() {
            return Err(Error::domain(format!(
                "model expects {} features, got {}",
                self.input_dim(),
                inputs.ncols()
            )));
        }
        if inputs.nrows() != upstream.len() {
            return Err(Error::domain(format!(
                "{} input rows but {} upstream gradients",
                inputs.nrows(),
                upstream.len()
            )));
        }
        let mut grads = GradBuffer::zeros_like(self);
        let depth = self.layers.len();
        // acts[l] is the input of layer l; pre[l] its pre-activation output
        let mut acts: Vec<Vec<f64>> = vec![Vec::new(); depth];
        let mut pre: Vec<Vec<f64>> = vec![Vec::new(); depth];
        let mut delta = Vec::with_capacity(HIDDEN_WIDTH);
        let mut delta_prev = Vec::with_capacity(HIDDEN_WIDTH);
        let mut row_buf = Vec::with_capacity(self.input_dim());

        for (row, &g) in inputs.rows().into_iter().zip(upstream) {
            if g == 0.0 {
                continue;
            }
            row_buf.clear();
            row_buf.extend(row.iter().copied());
            acts[0].clone_from(&row_buf);
            for l in 0..depth {
                let mut out = std::mem::take(&mut pre[l]);
                self.layers[l].forward(&acts[l], &mut out);
                if l + 1 < depth {
                    let next = &mut acts[l + 1];
                    next.clear();
                    next.extend(out.iter().map(|z| z.max(0.0)));
                }
                pre[l] = out;
            }

            delta.clear();
            delta.push(g);
            for l in (0..depth).rev() {
                let layer = &self.layers[l];
                let lg = &mut grads.layers[l];
                let a = &acts[l];
                for (o, &dz) in delta.iter().enumerate() {
                    if dz == 0.0 {
                        continue;
                    }
                    let wrow = &mut lg.weights[o * layer.inputs..(o + 1) * layer.inputs];
                    for (gw, ai) in wrow.iter_mut().zip(a) {
                        *gw += dz * ai;
                    }
                    lg.bias[o] += dz;
                }
                if l == 0 {
                    break;
                }
                delta_prev.clear();
                delta_prev.resize(layer.inputs, 0.0);
                for (o, &dz) in delta.iter().enumerate() {
                    if dz == 0.0 {
                        continue;
                    }
                    let wrow = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                    for (dp, w) in delta_prev.iter_mut().zip(wrow) {
                        *dp += dz * w;
                    }
                }
                for (dp, z) in delta_prev.iter_mut().zip(&pre[l - 1]) {
                    if *z <= 0.0 {
                        *dp = 0.0;
                    }
                }
                std::mem::swap(&mut delta, &mut delta_prev);
            }
        }
        Ok(grads)
    }

    /// Serializes to the checkpoint layout: magic, `u32` layer count, `u32`
    /// widths, hidden and output activation tags (`u8`), then per layer the
    /// row-major weights and the biases as little-endian `f64`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let dims = self.layer_dims();
        let mut out = Vec::with_capacity(16 + 4 * dims.len() + 8 * self.param_count());
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&(dims.len() as u32).to_le_bytes());
        for d in &dims {
            out.extend_from_slice(&(*d as u32).to_le_bytes());
        }
        out.push(ACT_RELU);
        out.push(ACT_IDENTITY);
        for p in self.params() {
            out.extend_from_slice(&p.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = bytes;
        let mut take = |n: usize| -> Result<&[u8]> {
            if cur.len() < n {
                return Err(Error::Checkpoint("unexpected end of data".into()));
            }
            let (head, tail) = cur.split_at(n);
            cur = tail;
            Ok(head)
        };
        if take(8)? != CHECKPOINT_MAGIC {
            return Err(Error::Checkpoint("bad magic header".into()));
        }
        let read_u32 = |b: &[u8]| u32::from_le_bytes(b.try_into().unwrap()) as usize;
        let n_dims = read_u32(take(4)?);
        if !(2..=64).contains(&n_dims) {
            return Err(Error::Checkpoint(format!("implausible layer count {n_dims}")));
        }
        let dims = (0..n_dims)
            .map(|_| take(4).map(read_u32))
            .collect::<Result<Vec<_>>>()?;
        let tags = take(2)?;
        if tags != [ACT_RELU, ACT_IDENTITY] {
            return Err(Error::Checkpoint(format!("unsupported activation tags {tags:?}")));
        }
        let mut model = Self::zeros(&dims).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let params = (0..model.param_count())
            .map(|_| take(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())))
            .collect::<Result<Vec<_>>>()?;
        if !cur.is_empty() {
            return Err(Error::Checkpoint("trailing bytes after parameters".into()));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Checkpoint("non-finite parameter".into()));
        }
        model.set_params(&params)?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

/// Gradient of one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

/// One gradient tensor per parameter tensor of an [`MlpModel`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradBuffer {
    layers: Vec<LayerGrad>,
}

impl GradBuffer {
    pub fn zeros_like(model: &MlpModel) -> Self {
        Self {
            layers: model
                .layers
                .iter()
                .map(|l| LayerGrad {
                    weights: vec![0.0; l.weights.len()],
                    bias: vec![0.0; l.bias.len()],
                })
                .collect(),
        }
    }

    pub fn layers(&self) -> &[LayerGrad] {
        &self.layers
    }

    /// Flattened in the same order as [`MlpModel::params`].
    pub fn flat(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.bias).copied())
            .collect()
    }

    fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }

    fn same_shape(&self, other: &GradBuffer) -> bool {
        self.layers.len() == other.layers.len()
            && self.layers.iter().zip(&other.layers).all(|(a, b)| {
                a.weights.len() == b.weights.len() && a.bias.len() == b.bias.len()
            })
    }

    fn matches(&self, model: &MlpModel) -> bool {
        self.layers.len() == model.layers.len()
            && self.layers.iter().zip(&model.layers).all(|(g, l)| {
                g.weights.len() == l.weights.len() && g.bias.len() == l.bias.len()
            })
    }

    /// Elementwise `self += other`.
    pub fn add_assign(&mut self, other: &GradBuffer) -> Result<()> {
        if !self.same_shape(other) {
            return Err(Error::domain("gradient buffers differ in shape"));
        }
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weights.iter_mut().zip(&b.weights).for_each(|(x, y)| *x += y);
            a.bias.iter_mut().zip(&b.bias).for_each(|(x, y)| *x += y);
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: f64) {
        self.values_mut().for_each(|v| *v *= factor);
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.bias).all(|v| v.is_finite()))
    }

    pub fn is_zero(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.bias).all(|v| *v == 0.0))
    }
}

/// Adaptive-moment optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    first: GradBuffer,
    second: GradBuffer,
    step: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl OptimizerState {
    /// Moments at zero with decays (0.9, 0.999) and ε = 1e-8.
    pub fn new(model: &MlpModel, learning_rate: f64) -> Self {
        Self {
            first: GradBuffer::zeros_like(model),
            second: GradBuffer::zeros_like(model),
            step: 0,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one bias-corrected update to `model` in place.
    pub fn step(&mut self, model: &mut MlpModel, grads: &GradBuffer) -> Result<()> {
        if !grads.matches(model) || !self.first.matches(model) {
            return Err(Error::domain("gradient shape does not match the model"));
        }
        if !grads.is_finite() {
            return Err(Error::NonFinite("gradient; update refused".into()));
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.learning_rate, self.epsilon);
        for (((layer, g), m), v) in model
            .layers
            .iter_mut()
            .zip(&grads.layers)
            .zip(&mut self.first.layers)
            .zip(&mut self.second.layers)
        {
            let params = layer.weights.iter_mut().chain(layer.bias.iter_mut());
            let gs = g.weights.iter().chain(&g.bias);
            let ms = m.weights.iter_mut().chain(m.bias.iter_mut());
            let vs = v.weights.iter_mut().chain(v.bias.iter_mut());
            for (((p, &gi), mi), vi) in params.zip(gs).zip(ms).zip(vs) {
                *mi = b1 * *mi + (1.0 - b1) * gi;
                *vi = b2 * *vi + (1.0 - b2) * gi * gi;
                let m_hat = *mi / bc1;
                let v_hat = *vi / bc2;
                *p -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Mean squared error and its gradient with respect to the predictions.
pub fn mse_loss(predictions: &[f64], targets: &[f64]) -> Result<(f64, Vec<f64>)> {
    if predictions.is_empty() {
        return Err(Error::domain("mean squared error of an empty batch"));
    }
    if predictions.len() != targets.len() {
        return Err(Error::domain(format!(
            "{} predictions but {} targets",
            predictions.len(),
            targets.len()
        )));
    }
    let n = predictions.len() as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(predictions.len());
    for (p, y) in predictions.iter().zip(targets) {
        let r = p - y;
        loss += r * r;
        grad.push(2.0 * r / n);
    }
    Ok((loss / n, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};
    use rand_distr::{Distribution, StandardNormal};

    fn random_rows(n: usize, d: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((n, d), |_| StandardNormal.sample(&mut rng))
    }

    #[test]
    fn parameter_count_for_five_features() {
        let m = MlpModel::new(5, 0).unwrap();
        assert_eq!(m.param_count(), 5 * 64 + 64 + 64 * 64 + 64 + 64 + 1);
        assert_eq!(m.param_count(), 4609);
        assert_eq!(m.layer_dims(), vec![5, 64, 64, 1]);
    }

    #[test]
    fn zero_parameters_predict_zero() {
        let m = MlpModel::zeros(&[3, 64, 64, 1]).unwrap();
        assert_eq!(m.predict(&[1.0, -2.0, 5.0]).unwrap(), 0.0);
    }

    #[test]
    fn hand_rolled_small_network() {
        // 1-2-2-1: h1 = relu([2x, -x+1]), h2 = relu([h1_0 + h1_1, h1_0 - 3]), y = h2_0 - 2 h2_1 + 0.5
        let mut m = MlpModel::zeros(&[1, 2, 2, 1]).unwrap();
        let l = m.layers_mut();
        l[0].weights = vec![2.0, -1.0];
        l[0].bias = vec![0.0, 1.0];
        l[1].weights = vec![1.0, 1.0, 1.0, 0.0];
        l[1].bias = vec![0.0, -3.0];
        l[2].weights = vec![1.0, -2.0];
        l[2].bias = vec![0.5];
        // x = 3: h1 = [6, 0], h2 = [6, 3], y = 6 - 6 + 0.5
        assert_eq!(m.predict(&[3.0]).unwrap(), 0.5);
        // x = 0.5: h1 = [1, 0.5], h2 = [1.5, 0], y = 2
        assert_eq!(m.predict(&[0.5]).unwrap(), 2.0);
    }

    #[test]
    fn batch_equals_loop_exactly() {
        let m = MlpModel::new(4, 3).unwrap();
        let x = random_rows(100, 4, 1);
        let batch = m.predict_rows(x.view()).unwrap();
        for (i, row) in x.rows().into_iter().enumerate() {
            assert_eq!(batch[i].to_bits(), m.predict(&row.to_vec()).unwrap().to_bits());
        }
        assert!(m.predict(&[1.0]).is_err());
    }

    #[test]
    fn zero_upstream_gives_zero_gradient() {
        let m = MlpModel::new(2, 0).unwrap();
        let x = random_rows(10, 2, 0);
        assert!(m.backward(x.view(), &[0.0; 10]).unwrap().is_zero());
        assert!(m.backward(x.view(), &[0.0; 9]).is_err());
    }

    #[test]
    fn backward_is_linear_in_upstream() {
        let m = MlpModel::new(3, 7).unwrap();
        let x = random_rows(12, 3, 2);
        let g1: Vec<f64> = (0..12).map(|i| (i as f64 * 0.37).sin()).collect();
        let g2: Vec<f64> = (0..12).map(|i| (i as f64 * 0.11).cos()).collect();
        let sum: Vec<f64> = g1.iter().zip(&g2).map(|(a, b)| a + b).collect();
        let mut lhs = m.backward(x.view(), &g1).unwrap();
        lhs.add_assign(&m.backward(x.view(), &g2).unwrap()).unwrap();
        let rhs = m.backward(x.view(), &sum).unwrap();
        for (a, b) in lhs.flat().iter().zip(rhs.flat()) {
            assert!((a - b).abs() <= 1e-10);
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut m = MlpModel::new(2, 5).unwrap();
        let x = random_rows(20, 2, 4);
        let g: Vec<f64> = (0..20).map(|i| 1.0 - 0.1 * i as f64).collect();
        let objective = |m: &MlpModel| -> f64 {
            m.predict_rows(x.view())
                .unwrap()
                .iter()
                .zip(&g)
                .map(|(p, gi)| p * gi)
                .sum()
        };
        let analytic = m.backward(x.view(), &g).unwrap().flat();
        let base = m.params();
        let h = 1e-4;
        let mut ok = 0;
        for k in 0..base.len() {
            let mut p = base.clone();
            p[k] = base[k] + h;
            m.set_params(&p).unwrap();
            let up = objective(&m);
            p[k] = base[k] - h;
            m.set_params(&p).unwrap();
            let down = objective(&m);
            let fd = (up - down) / (2.0 * h);
            let scale = fd.abs().max(analytic[k].abs());
            if (fd - analytic[k]).abs() <= 1e-3 * scale || scale < 1e-7 {
                ok += 1;
            }
        }
        m.set_params(&base).unwrap();
        assert!(ok as f64 >= 0.95 * base.len() as f64, "{ok}/{}", base.len());
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut m = MlpModel::new(2, 1).unwrap();
        let before = m.clone();
        let mut opt = OptimizerState::new(&m, 1e-3);
        opt.step(&mut m, &GradBuffer::zeros_like(&before)).unwrap();
        assert_eq!(m, before);
        assert_eq!(opt.steps(), 1);
    }

    #[test]
    fn non_finite_gradient_is_refused() {
        let mut m = MlpModel::new(2, 1).unwrap();
        let x = array![[1.0, 2.0]];
        let g = m.backward(x.view(), &[f64::NAN]).unwrap();
        let mut opt = OptimizerState::new(&m, 1e-3);
        assert!(matches!(opt.step(&mut m, &g), Err(Error::NonFinite(_))));
        assert_eq!(opt.steps(), 0);
    }

    #[test]
    fn scalar_quadratic_descends() {
        // h(x) = w · x with a single weight; loss (w - 3)^2 via x = 1, y = 3
        let mut m = MlpModel::zeros(&[1, 1]).unwrap();
        let x = array![[1.0]];
        let mut opt = OptimizerState::new(&m, 0.02);
        let mut prev = f64::INFINITY;
        for _ in 0..100 {
            let pred = m.predict_rows(x.view()).unwrap();
            let (loss, g) = mse_loss(&pred, &[3.0]).unwrap();
            assert!(loss < prev);
            prev = loss;
            let grads = m.backward(x.view(), &g).unwrap();
            opt.step(&mut m, &grads).unwrap();
        }
        assert!(prev < 2.0);
    }

    #[test]
    fn identical_updates_are_deterministic() {
        let mut a = MlpModel::new(3, 9).unwrap();
        let mut b = a.clone();
        let x = random_rows(5, 3, 0);
        let g = a.backward(x.view(), &[1.0, -1.0, 0.5, 0.2, 0.0]).unwrap();
        let mut oa = OptimizerState::new(&a, 1e-3);
        let mut ob = OptimizerState::new(&b, 1e-3);
        oa.step(&mut a, &g).unwrap();
        ob.step(&mut b, &g).unwrap();
        assert_eq!(a.params(), b.params());
    }

    #[test]
    fn mse_examples() {
        let (l, g) = mse_loss(&[1.0, 2.0], &[1.0, 2.0]).unwrap();
        assert_eq!(l, 0.0);
        assert_eq!(g, vec![0.0, 0.0]);
        let (l, g) = mse_loss(&[1.0], &[0.0]).unwrap();
        assert_eq!((l, g), (1.0, vec![2.0]));
        assert!(mse_loss(&[], &[]).is_err());

        let p = [0.3, -1.2, 2.5];
        let y = [0.0, 1.0, 2.0];
        let (_, g) = mse_loss(&p, &y).unwrap();
        for k in 0..3 {
            let h = 1e-6;
            let mut up = p;
            up[k] += h;
            let mut down = p;
            down[k] -= h;
            let fd = (mse_loss(&up, &y).unwrap().0 - mse_loss(&down, &y).unwrap().0) / (2.0 * h);
            assert!((fd - g[k]).abs() < 1e-6);
        }
    }

    #[test]
    fn checkpoint_round_trip_and_rejection() {
        let m = MlpModel::new(3, 2).unwrap();
        let bytes = m.to_bytes();
        assert_eq!(&bytes[..8], CHECKPOINT_MAGIC);
        assert_eq!(MlpModel::from_bytes(&bytes).unwrap(), m);
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(MlpModel::from_bytes(&bad).is_err());
        assert!(MlpModel::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    }
}
