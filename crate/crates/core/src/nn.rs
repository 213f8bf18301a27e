//! A small fully connected network, written out by hand: row-major matrices,
//! explicit forward caches, hand-derived backward passes, and an AdamW loop
//! with early stopping. No numerics crate — every gradient here is checked
//! against finite differences in the test suite, which only means something if
//! the implementation is independent of the check.
//!
//! The architecture is fixed by [`MlpModel::new`]: three hidden layers of
//! 256/128/64 units, each affine -> ReLU -> batch norm -> dropout, and a
//! sigmoid output so predictions live in (0, 1). All randomness (weight init,
//! shuffling, dropout masks) flows from caller-provided seeds, so a seed pins
//! the whole training trajectory bit for bit.

use rand::distributions::{Distribution, Uniform};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hidden widths of the standard model.
pub const HIDDEN_WIDTHS: [usize; 3] = [256, 128, 64];
/// Dropout rate applied after each hidden layer during training.
pub const DEFAULT_DROPOUT: f64 = 0.1;
/// Batch-norm variance floor.
pub const BN_EPS: f64 = 1e-5;
/// Weight of the current batch in the running batch-norm statistics.
pub const BN_MOMENTUM: f64 = 0.1;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            assert_eq!(row.len(), cols, "ragged rows");
            data.extend_from_slice(row);
        }
        Matrix {
            rows: rows.len(),
            cols,
            data,
        }
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn at_mut(&mut self, r: usize, c: usize) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// `self [m,k] * other [k,n]`.
    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows, "matmul shape mismatch");
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.at(i, k);
                if a == 0.0 {
                    continue;
                }
                let orow = other.row(k);
                let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (o, &b) in out_row.iter_mut().zip(orow) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// `self^T [k,m]^T=[m,k] ... ` transpose-first product: `self^T * other`
    /// where `self` is `[k, m]` and `other` is `[k, n]`.
    pub fn matmul_at_b(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.rows, other.rows, "matmul_at_b shape mismatch");
        let mut out = Matrix::zeros(self.cols, other.cols);
        for k in 0..self.rows {
            let arow = self.row(k);
            let brow = other.row(k);
            for (i, &a) in arow.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (o, &b) in out_row.iter_mut().zip(brow) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// Product against a transposed right factor: `self * other^T` where
    /// `self` is `[m, k]` and `other` is `[n, k]`.
    pub fn matmul_a_bt(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.cols, "matmul_a_bt shape mismatch");
        let mut out = Matrix::zeros(self.rows, other.rows);
        for i in 0..self.rows {
            let arow = self.row(i);
            for j in 0..other.rows {
                let brow = other.row(j);
                let mut acc = 0.0;
                for (&a, &b) in arow.iter().zip(brow) {
                    acc += a * b;
                }
                *out.at_mut(i, j) = acc;
            }
        }
        out
    }

    /// Copy the given rows into a new matrix.
    pub fn gather_rows(&self, indices: &[usize]) -> Matrix {
        let mut out = Matrix::zeros(indices.len(), self.cols);
        for (i, &src) in indices.iter().enumerate() {
            out.data[i * self.cols..(i + 1) * self.cols].copy_from_slice(self.row(src));
        }
        out
    }
}

/// Training objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Loss {
    /// Mean absolute percentage error.
    Mape,
    /// Pinball loss; its minimizer is the `q`-quantile of the target.
    Quantile { q: f64 },
}

/// Mean loss over a batch.
pub fn loss_value(loss: Loss, preds: &[f64], targets: &[f64]) -> f64 {
    assert_eq!(preds.len(), targets.len(), "pred/target length mismatch");
    let n = preds.len() as f64;
    let sum: f64 = match loss {
        Loss::Mape => preds
            .iter()
            .zip(targets)
            .map(|(&p, &t)| (p - t).abs() / t.abs())
            .sum(),
        Loss::Quantile { q } => preds
            .iter()
            .zip(targets)
            .map(|(&p, &t)| {
                if t >= p {
                    q * (t - p)
                } else {
                    (1.0 - q) * (p - t)
                }
            })
            .sum(),
    };
    sum / n
}

/// Gradient of the mean loss with respect to each prediction.
pub fn loss_grad(loss: Loss, preds: &[f64], targets: &[f64]) -> Vec<f64> {
    assert_eq!(preds.len(), targets.len(), "pred/target length mismatch");
    let n = preds.len() as f64;
    preds
        .iter()
        .zip(targets)
        .map(|(&p, &t)| match loss {
            Loss::Mape => (p - t).signum() / (t.abs() * n),
            Loss::Quantile { q } => {
                if t > p {
                    -q / n
                } else if t < p {
                    (1.0 - q) / n
                } else {
                    0.0
                }
            }
        })
        .collect()
}

/// Per-feature batch normalization parameters and running statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchNorm {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
}

impl BatchNorm {
    fn new(width: usize) -> Self {
        BatchNorm {
            gamma: vec![1.0; width],
            beta: vec![0.0; width],
            running_mean: vec![0.0; width],
            running_var: vec![1.0; width],
        }
    }
}

/// One affine layer, with batch norm on hidden layers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    /// `[fan_in, fan_out]` weight matrix.
    pub w: Matrix,
    pub b: Vec<f64>,
    pub bn: Option<BatchNorm>,
}

/// The network. Hidden layers run affine -> ReLU -> batch norm -> dropout;
/// the last layer is affine -> sigmoid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub layers: Vec<DenseLayer>,
    pub dropout: f64,
}

impl MlpModel {
    /// Standard architecture for `input_dim` features.
    pub fn new(input_dim: usize, seed: u64) -> Self {
        let mut dims = vec![input_dim];
        dims.extend_from_slice(&HIDDEN_WIDTHS);
        dims.push(1);
        Self::with_layout(&dims, seed)
    }

    /// Arbitrary layer widths, first entry the input dimension, last the
    /// output width. Weights take He-uniform init (`+-sqrt(6 / fan_in)`).
    pub fn with_layout(dims: &[usize], seed: u64) -> Self {
        assert!(dims.len() >= 2, "need at least input and output widths");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for (li, pair) in dims.windows(2).enumerate() {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let bound = (6.0 / fan_in as f64).sqrt();
            let dist = Uniform::new_inclusive(-bound, bound);
            let mut w = Matrix::zeros(fan_in, fan_out);
            for v in &mut w.data {
                *v = dist.sample(&mut rng);
            }
            let hidden = li + 2 < dims.len();
            layers.push(DenseLayer {
                w,
                b: vec![0.0; fan_out],
                bn: hidden.then(|| BatchNorm::new(fan_out)),
            });
        }
        MlpModel {
            layers,
            dropout: DEFAULT_DROPOUT,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].w.rows
    }

    /// Inference-mode forward pass: running batch-norm statistics, no dropout.
    pub fn predict(&self, x: &Matrix) -> Vec<f64> {
        assert_eq!(x.cols, self.input_dim(), "input width mismatch");
        let mut h = x.clone();
        let last = self.layers.len() - 1;
        for (li, layer) in self.layers.iter().enumerate() {
            let mut z = h.matmul(&layer.w);
            for r in 0..z.rows {
                for c in 0..z.cols {
                    *z.at_mut(r, c) += layer.b[c];
                }
            }
            if li == last {
                h = z;
                break;
            }
            for v in &mut z.data {
                *v = v.max(0.0);
            }
            let bn = layer.bn.as_ref().expect("hidden layer without batch norm");
            for r in 0..z.rows {
                for c in 0..z.cols {
                    let xhat =
                        (z.at(r, c) - bn.running_mean[c]) / (bn.running_var[c] + BN_EPS).sqrt();
                    *z.at_mut(r, c) = bn.gamma[c] * xhat + bn.beta[c];
                }
            }
            h = z;
        }
        h.data.iter().map(|&v| sigmoid(v)).collect()
    }

    /// Training-mode forward pass: batch statistics, dropout masks from `rng`,
    /// running statistics updated in place.
    fn forward_train(&mut self, x: &Matrix, rng: &mut ChaCha8Rng) -> (ForwardCache, Vec<f64>) {
        let batch = x.rows;
        let last = self.layers.len() - 1;
        let mut cache = ForwardCache {
            inputs: Vec::with_capacity(self.layers.len()),
            hidden: Vec::with_capacity(last),
            logits: Vec::new(),
            preds: Vec::new(),
        };
        let mut h = x.clone();
        for li in 0..self.layers.len() {
            cache.inputs.push(h.clone());
            let layer = &self.layers[li];
            let mut z = h.matmul(&layer.w);
            for r in 0..z.rows {
                for c in 0..z.cols {
                    *z.at_mut(r, c) += layer.b[c];
                }
            }
            if li == last {
                cache.logits = z.data.clone();
                cache.preds = z.data.iter().map(|&v| sigmoid(v)).collect();
                let preds = cache.preds.clone();
                return (cache, preds);
            }
            let mut a = z.clone();
            for v in &mut a.data {
                *v = v.max(0.0);
            }
            // Batch statistics per feature; biased variance normalizes, the
            // unbiased one feeds the running estimate.
            let width = a.cols;
            let mut mean = vec![0.0; width];
            let mut var = vec![0.0; width];
            for r in 0..batch {
                for c in 0..width {
                    mean[c] += a.at(r, c);
                }
            }
            for m in &mut mean {
                *m /= batch as f64;
            }
            for r in 0..batch {
                for c in 0..width {
                    let d = a.at(r, c) - mean[c];
                    var[c] += d * d;
                }
            }
            for v in &mut var {
                *v /= batch as f64;
            }
            let bn = self.layers[li].bn.as_mut().expect("hidden layer without batch norm");
            let unbiased = if batch > 1 {
                batch as f64 / (batch - 1) as f64
            } else {
                1.0
            };
            for c in 0..width {
                bn.running_mean[c] =
                    (1.0 - BN_MOMENTUM) * bn.running_mean[c] + BN_MOMENTUM * mean[c];
                bn.running_var[c] =
                    (1.0 - BN_MOMENTUM) * bn.running_var[c] + BN_MOMENTUM * var[c] * unbiased;
            }
            let bn = self.layers[li].bn.as_ref().unwrap();
            let mut xhat = Matrix::zeros(batch, width);
            let mut y = Matrix::zeros(batch, width);
            for r in 0..batch {
                for c in 0..width {
                    let xh = (a.at(r, c) - mean[c]) / (var[c] + BN_EPS).sqrt();
                    *xhat.at_mut(r, c) = xh;
                    *y.at_mut(r, c) = bn.gamma[c] * xh + bn.beta[c];
                }
            }
            // Inverted dropout: scale kept units by 1/keep so inference needs
            // no correction.
            let keep = 1.0 - self.dropout;
            let mut mask = Matrix::zeros(batch, width);
            if self.dropout > 0.0 {
                for v in &mut mask.data {
                    *v = if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 };
                }
            } else {
                mask.data.fill(1.0);
            }
            let mut out = Matrix::zeros(batch, width);
            for i in 0..out.data.len() {
                out.data[i] = y.data[i] * mask.data[i];
            }
            cache.hidden.push(HiddenCache { z, var, xhat, mask });
            h = out;
        }
        unreachable!("loop returns at the output layer");
    }

    /// Backward pass for `dpreds = dL/dprediction`; returns parameter
    /// gradients matching the forward cache.
    fn backward(&self, cache: &ForwardCache, dpreds: &[f64]) -> Gradients {
        let last = self.layers.len() - 1;
        let mut grads = Gradients {
            layers: self
                .layers
                .iter()
                .map(|l| LayerGrads {
                    dw: vec![0.0; l.w.data.len()],
                    db: vec![0.0; l.b.len()],
                    dgamma: l.bn.as_ref().map(|bn| vec![0.0; bn.gamma.len()]),
                    dbeta: l.bn.as_ref().map(|bn| vec![0.0; bn.beta.len()]),
                })
                .collect(),
        };

        // Output layer: sigmoid then affine.
        let batch = cache.inputs[last].rows;
        let mut dz = Matrix::zeros(batch, 1);
        for r in 0..batch {
            let y = cache.preds[r];
            dz.data[r] = dpreds[r] * y * (1.0 - y);
        }
        let mut dh = self.affine_backward(last, &cache.inputs[last], &dz, &mut grads);

        for li in (0..last).rev() {
            let hc = &cache.hidden[li];
            let layer = &self.layers[li];
            let bn = layer.bn.as_ref().expect("hidden layer without batch norm");
            let width = hc.z.cols;
            let b = hc.z.rows as f64;

            // Dropout backward.
            let mut dy = Matrix::zeros(hc.z.rows, width);
            for i in 0..dy.data.len() {
                dy.data[i] = dh.data[i] * hc.mask.data[i];
            }

            // Batch-norm backward (through the batch statistics).
            let g = grads.layers[li]
                .dgamma
                .as_mut()
                .expect("hidden layer without gamma grads");
            for r in 0..hc.z.rows {
                for c in 0..width {
                    g[c] += dy.at(r, c) * hc.xhat.at(r, c);
                }
            }
            let gb = grads.layers[li]
                .dbeta
                .as_mut()
                .expect("hidden layer without beta grads");
            for r in 0..hc.z.rows {
                for c in 0..width {
                    gb[c] += dy.at(r, c);
                }
            }
            let mut da = Matrix::zeros(hc.z.rows, width);
            for c in 0..width {
                let inv_std = 1.0 / (hc.var[c] + BN_EPS).sqrt();
                let mut sum_dxhat = 0.0;
                let mut sum_dxhat_xhat = 0.0;
                for r in 0..hc.z.rows {
                    let dxhat = dy.at(r, c) * bn.gamma[c];
                    sum_dxhat += dxhat;
                    sum_dxhat_xhat += dxhat * hc.xhat.at(r, c);
                }
                for r in 0..hc.z.rows {
                    let dxhat = dy.at(r, c) * bn.gamma[c];
                    *da.at_mut(r, c) = inv_std / b
                        * (b * dxhat - sum_dxhat - hc.xhat.at(r, c) * sum_dxhat_xhat);
                }
            }

            // ReLU backward.
            let mut dz = da;
            for i in 0..dz.data.len() {
                if hc.z.data[i] <= 0.0 {
                    dz.data[i] = 0.0;
                }
            }
            dh = self.affine_backward(li, &cache.inputs[li], &dz, &mut grads);
        }
        grads
    }

    /// Accumulate dW and db for layer `li` and return dL/d(input).
    fn affine_backward(
        &self,
        li: usize,
        input: &Matrix,
        dz: &Matrix,
        grads: &mut Gradients,
    ) -> Matrix {
        let dw = input.matmul_at_b(dz);
        grads.layers[li].dw.copy_from_slice(&dw.data);
        let db = &mut grads.layers[li].db;
        for r in 0..dz.rows {
            for c in 0..dz.cols {
                db[c] += dz.at(r, c);
            }
        }
        dz.matmul_a_bt(&self.layers[li].w)
    }

    /// Number of trainable parameters.
    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| {
                l.w.data.len()
                    + l.b.len()
                    + l.bn.as_ref().map_or(0, |bn| bn.gamma.len() + bn.beta.len())
            })
            .sum()
    }

    /// Read parameter `i` in canonical order (per layer: weights, bias, gamma,
    /// beta). Used by gradient diagnostics.
    pub fn get_param(&self, mut i: usize) -> f64 {
        for l in &self.layers {
            for field in layer_fields(l) {
                if i < field.len() {
                    return field[i];
                }
                i -= field.len();
            }
        }
        panic!("parameter index out of range");
    }

    /// Write parameter `i` in canonical order.
    pub fn set_param(&mut self, mut i: usize, value: f64) {
        for l in &mut self.layers {
            for field in layer_fields_mut(l) {
                if i < field.len() {
                    field[i] = value;
                    return;
                }
                i -= field.len();
            }
        }
        panic!("parameter index out of range");
    }

    /// One training forward/backward pass exposed for gradient diagnostics:
    /// returns the batch loss and the flattened analytic gradient. Restores
    /// the running batch-norm statistics, so repeated calls see the same model.
    pub fn loss_and_grad(
        &mut self,
        x: &Matrix,
        targets: &[f64],
        loss: Loss,
        rng: &mut ChaCha8Rng,
    ) -> (f64, Vec<f64>) {
        let saved: Vec<Option<(Vec<f64>, Vec<f64>)>> = self
            .layers
            .iter()
            .map(|l| {
                l.bn.as_ref()
                    .map(|bn| (bn.running_mean.clone(), bn.running_var.clone()))
            })
            .collect();
        let (cache, preds) = self.forward_train(x, rng);
        for (l, s) in self.layers.iter_mut().zip(saved) {
            if let (Some(bn), Some((m, v))) = (l.bn.as_mut(), s) {
                bn.running_mean = m;
                bn.running_var = v;
            }
        }
        let value = loss_value(loss, &preds, targets);
        let dpreds = loss_grad(loss, &preds, targets);
        let grads = self.backward(&cache, &dpreds);
        (value, grads.flat())
    }

    /// Fit on `(x, targets)` with an internal validation split. Returns the
    /// training history; the model keeps the weights of its best validation
    /// epoch.
    pub fn train(&mut self, x: &Matrix, targets: &[f64], cfg: &TrainConfig) -> Result<TrainReport> {
        assert_eq!(x.rows, targets.len(), "sample/target count mismatch");
        if x.rows < 2 {
            return Err(Error::training("need at least 2 samples to split off validation"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut order: Vec<usize> = (0..x.rows).collect();
        shuffle(&mut order, &mut rng);
        let val_n = ((x.rows as f64 * cfg.val_fraction).round() as usize).clamp(1, x.rows - 1);
        let (val_idx, train_idx) = order.split_at(val_n);
        let xt = x.gather_rows(train_idx);
        let yt: Vec<f64> = train_idx.iter().map(|&i| targets[i]).collect();
        let xv = x.gather_rows(val_idx);
        let yv: Vec<f64> = val_idx.iter().map(|&i| targets[i]).collect();
        self.train_with_split(&xt, &yt, &xv, &yv, cfg, &mut rng)
    }

    /// Fit on an explicit train/validation split. `rng` drives shuffling and
    /// dropout and must come from the caller for end-to-end determinism.
    pub fn train_with_split(
        &mut self,
        x_train: &Matrix,
        y_train: &[f64],
        x_val: &Matrix,
        y_val: &[f64],
        cfg: &TrainConfig,
        rng: &mut ChaCha8Rng,
    ) -> Result<TrainReport> {
        assert_eq!(x_train.rows, y_train.len(), "train sample/target mismatch");
        assert_eq!(x_val.rows, y_val.len(), "val sample/target mismatch");
        if x_train.rows == 0 || x_val.rows == 0 {
            return Err(Error::training("empty train or validation split"));
        }
        let mut opt = AdamW::new(self, cfg);
        let mut history = Vec::new();
        let mut best_val = f64::INFINITY;
        let mut best_epoch = 0;
        let mut best_state: Option<Vec<DenseLayer>> = None;
        let mut since_best = 0;
        let mut stopped_early = false;

        for epoch in 0..cfg.max_epochs {
            let mut order: Vec<usize> = (0..x_train.rows).collect();
            shuffle(&mut order, rng);
            let mut epoch_loss = 0.0;
            for range in batch_ranges(x_train.rows, cfg.batch_size) {
                let idx = &order[range.clone()];
                let xb = x_train.gather_rows(idx);
                let yb: Vec<f64> = idx.iter().map(|&i| y_train[i]).collect();
                let (cache, preds) = self.forward_train(&xb, rng);
                let batch_loss = loss_value(cfg.loss, &preds, &yb);
                if !batch_loss.is_finite() {
                    return Err(Error::training(format!(
                        "non-finite training loss at epoch {epoch}"
                    )));
                }
                epoch_loss += batch_loss * idx.len() as f64;
                let dpreds = loss_grad(cfg.loss, &preds, &yb);
                let grads = self.backward(&cache, &dpreds);
                opt.step(self, &grads);
            }
            let train_loss = epoch_loss / x_train.rows as f64;
            let val_preds = self.predict(x_val);
            let val_loss = loss_value(cfg.loss, &val_preds, y_val);
            if !val_loss.is_finite() {
                return Err(Error::training(format!(
                    "non-finite validation loss at epoch {epoch}"
                )));
            }
            history.push(EpochStats {
                epoch,
                train_loss,
                val_loss,
            });
            if val_loss < best_val {
                best_val = val_loss;
                best_epoch = epoch;
                best_state = Some(self.layers.clone());
                since_best = 0;
            } else {
                since_best += 1;
                if since_best > cfg.patience {
                    stopped_early = true;
                    break;
                }
            }
        }
        if let Some(state) = best_state {
            self.layers = state;
        }
        Ok(TrainReport {
            history,
            best_epoch,
            best_val_loss: best_val,
            stopped_early,
        })
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn layer_fields(l: &DenseLayer) -> Vec<&[f64]> {
    let mut fields: Vec<&[f64]> = vec![&l.w.data, &l.b];
    if let Some(bn) = &l.bn {
        fields.push(&bn.gamma);
        fields.push(&bn.beta);
    }
    fields
}

fn layer_fields_mut(l: &mut DenseLayer) -> Vec<&mut [f64]> {
    let mut fields: Vec<&mut [f64]> = vec![&mut l.w.data, &mut l.b];
    if let Some(bn) = &mut l.bn {
        fields.push(&mut bn.gamma);
        fields.push(&mut bn.beta);
    }
    fields
}

/// Fisher-Yates with the caller's generator.
fn shuffle(order: &mut [usize], rng: &mut ChaCha8Rng) {
    for i in (1..order.len()).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
}

/// Contiguous batch ranges over `n` samples. A trailing batch of one sample
/// merges into its predecessor: batch statistics of a single sample are
/// degenerate.
pub fn batch_ranges(n: usize, batch_size: usize) -> Vec<std::ops::Range<usize>> {
    assert!(batch_size > 0, "batch size must be positive");
    let mut ranges = Vec::new();
    let mut start = 0;
    while start < n {
        let end = (start + batch_size).min(n);
        ranges.push(start..end);
        start = end;
    }
    if ranges.len() >= 2 && ranges.last().unwrap().len() == 1 {
        let last = ranges.pop().unwrap();
        let prev = ranges.last_mut().unwrap();
        prev.end = last.end;
    }
    ranges
}

/// Per-layer forward intermediates needed by the backward pass.
struct HiddenCache {
    /// Pre-activation affine output.
    z: Matrix,
    var: Vec<f64>,
    xhat: Matrix,
    mask: Matrix,
}

struct ForwardCache {
    /// Input to each layer's affine transform.
    inputs: Vec<Matrix>,
    hidden: Vec<HiddenCache>,
    logits: Vec<f64>,
    preds: Vec<f64>,
}

/// Parameter gradients in the model's canonical order.
pub struct Gradients {
    layers: Vec<LayerGrads>,
}

struct LayerGrads {
    dw: Vec<f64>,
    db: Vec<f64>,
    dgamma: Option<Vec<f64>>,
    dbeta: Option<Vec<f64>>,
}

impl Gradients {
    /// Flatten in the same order as [`MlpModel::get_param`].
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend_from_slice(&l.dw);
            out.extend_from_slice(&l.db);
            if let Some(g) = &l.dgamma {
                out.extend_from_slice(g);
            }
            if let Some(g) = &l.dbeta {
                out.extend_from_slice(g);
            }
        }
        out
    }
}

/// Training hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub loss: Loss,
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without validation improvement tolerated before stopping.
    pub patience: usize,
    pub val_fraction: f64,
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            loss: Loss::Mape,
            lr: 0.001,
            batch_size: 256,
            max_epochs: 200,
            patience: 20,
            val_fraction: 0.1,
            weight_decay: 0.01,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub history: Vec<EpochStats>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stopped_early: bool,
}

/// AdamW: Adam moments plus decoupled weight decay, the decay applied only to
/// weight matrices (biases and batch-norm parameters are exempt).
struct AdamW {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    weight_decay: f64,
    t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamW {
    fn new(model: &MlpModel, cfg: &TrainConfig) -> Self {
        let mut m = Vec::new();
        for l in &model.layers {
            for field in layer_fields(l) {
                m.push(vec![0.0; field.len()]);
            }
        }
        let v = m.clone();
        AdamW {
            lr: cfg.lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: cfg.weight_decay,
            t: 0,
            m,
            v,
        }
    }

    fn step(&mut self, model: &mut MlpModel, grads: &Gradients) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        let mut slot = 0;
        for (l, lg) in model.layers.iter_mut().zip(&grads.layers) {
            let mut fields: Vec<(&mut [f64], &[f64], bool)> =
                vec![(&mut l.w.data, &lg.dw, true), (&mut l.b, &lg.db, false)];
            if let Some(bn) = &mut l.bn {
                fields.push((&mut bn.gamma, lg.dgamma.as_deref().unwrap(), false));
                fields.push((&mut bn.beta, lg.dbeta.as_deref().unwrap(), false));
            }
            for (params, grad, decay) in fields {
                let m = &mut self.m[slot];
                let v = &mut self.v[slot];
                slot += 1;
                for i in 0..params.len() {
                    m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * grad[i];
                    v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
                    let mhat = m[i] / bc1;
                    let vhat = v[i] / bc2;
                    let mut p = params[i];
                    p -= self.lr * mhat / (vhat.sqrt() + self.eps);
                    if decay {
                        p -= self.lr * self.weight_decay * params[i];
                    }
                    params[i] = p;
                }
            }
        }
    }
}
