//! Multilayer perceptron trained by mini-batch gradient descent on log-loss.
//!
//! One hidden layer gives the shallow network of the benchmark; two or more
//! hidden layers give the deep variant, optionally with inverted dropout on
//! the hidden activations. The output layer is always softmax over the
//! alternatives, so the network estimates choice probabilities directly.
//!
//! The loss is evaluated through log-sum-exp, so gradients are exact and the
//! analytic backward pass can be checked against finite differences.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{ensure_finite, softmax_in_place, ChoiceModel};
use crate::dataset::ChoiceDataset;
use crate::error::{Error, Result};
use crate::rng;

/// Hidden-layer activation function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Relu,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
        }
    }

    /// Derivative expressed through the activation value itself.
    fn derivative_from_value(self, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Training settings for [`Mlp::fit`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MlpConfig {
    /// Hidden layer widths; one entry is the shallow network, two or more
    /// the deep one.
    pub hidden: Vec<usize>,
    pub activation: Activation,
    /// Drop probability for hidden activations (inverted dropout). Only
    /// meaningful for deep networks; must be 0 with a single hidden layer.
    pub dropout: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Minimum improvement of the epoch training loss that counts as
    /// progress for early stopping.
    pub tolerance: f64,
    /// Number of consecutive non-improving epochs tolerated before
    /// stopping early.
    pub patience: usize,
    pub seed: u64,
}

impl MlpConfig {
    pub fn new(hidden: Vec<usize>) -> Self {
        MlpConfig {
            hidden,
            activation: Activation::Tanh,
            dropout: 0.0,
            epochs: 200,
            batch_size: 100,
            learning_rate: 0.1,
            tolerance: 1e-5,
            patience: 10,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden.is_empty() || self.hidden.iter().any(|&w| w == 0) {
            return Err(Error::config("hidden layer widths must all be >= 1"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::config("dropout must lie in [0, 1)"));
        }
        if self.dropout > 0.0 && self.hidden.len() < 2 {
            return Err(Error::config("dropout requires at least two hidden layers"));
        }
        if self.epochs == 0 || self.batch_size == 0 || self.patience == 0 {
            return Err(Error::config("epochs, batch_size and patience must be >= 1"));
        }
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return Err(Error::config("learning_rate must be finite and positive"));
        }
        if !self.tolerance.is_finite() || self.tolerance < 0.0 {
            return Err(Error::config("tolerance must be finite and >= 0"));
        }
        Ok(())
    }
}

/// One dense layer, weights in row-major `out x in` layout.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct Layer {
    weights: Vec<f64>,
    biases: Vec<f64>,
}

/// A fitted multilayer perceptron.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Mlp {
    /// Layer widths from input to output: `[n_features, hidden..., n_alternatives]`.
    dims: Vec<usize>,
    activation: Activation,
    layers: Vec<Layer>,
    /// Mean training log-loss after each epoch, for convergence monitoring.
    pub train_loss: Vec<f64>,
}

impl Mlp {
    /// Xavier-initialised network without any training.
    fn init(n_features: usize, n_alternatives: usize, config: &MlpConfig) -> Self {
        let mut dims = Vec::with_capacity(config.hidden.len() + 2);
        dims.push(n_features);
        dims.extend_from_slice(&config.hidden);
        dims.push(n_alternatives);
        let mut init_rng = rng::stream(config.seed, "mlp/init");
        let layers = dims
            .windows(2)
            .map(|pair| {
                let (fan_in, fan_out) = (pair[0], pair[1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let weights = (0..fan_in * fan_out)
                    .map(|_| init_rng.random_range(-limit..limit))
                    .collect();
                Layer {
                    weights,
                    biases: vec![0.0; fan_out],
                }
            })
            .collect();
        Mlp {
            dims,
            activation: config.activation,
            layers,
            train_loss: Vec::new(),
        }
    }

    /// Train a network on log-loss by mini-batch gradient descent.
    ///
    /// Stops early once `config.patience` consecutive epochs fail to improve
    /// the best epoch loss by more than `config.tolerance`. A non-finite
    /// loss aborts with [`Error::Diverged`].
    pub fn fit(dataset: &ChoiceDataset, config: &MlpConfig) -> Result<Self> {
        config.validate()?;
        let n = dataset.n_rows();
        if n == 0 {
            return Err(Error::config("cannot train on an empty dataset"));
        }
        let mut model = Mlp::init(dataset.n_attributes(), dataset.n_alternatives(), config);
        let mut scratch = Workspace::new(&model.dims);
        let mut grads = model.zero_grads();
        let mut indices: Vec<usize> = (0..n).collect();
        let keep = 1.0 - config.dropout;

        let mut best = f64::INFINITY;
        let mut stale = 0usize;
        for epoch in 0..config.epochs {
            let mut shuffle_rng = rng::stream(config.seed, &format!("mlp/epoch{epoch}/shuffle"));
            let mut dropout_rng = rng::stream(config.seed, &format!("mlp/epoch{epoch}/dropout"));
            // Fisher-Yates shuffle of the visit order.
            for i in (1..n).rev() {
                let j = shuffle_rng.random_range(0..=i);
                indices.swap(i, j);
            }
            for batch in indices.chunks(config.batch_size) {
                for grad in grads.iter_mut() {
                    grad.clear_to_zero();
                }
                for &r in batch {
                    if config.dropout > 0.0 {
                        scratch.sample_masks(keep, &mut dropout_rng);
                    }
                    model.forward(dataset.row(r), config.dropout > 0.0, keep, &mut scratch);
                    model.backward(dataset.row(r), dataset.chosen(r), keep, &mut scratch, &mut grads);
                }
                let scale = config.learning_rate / batch.len() as f64;
                for (layer, grad) in model.layers.iter_mut().zip(&grads) {
                    for (w, g) in layer.weights.iter_mut().zip(&grad.weights) {
                        *w -= scale * g;
                    }
                    for (b, g) in layer.biases.iter_mut().zip(&grad.biases) {
                        *b -= scale * g;
                    }
                }
            }

            let loss = model.loss(dataset)?;
            if !loss.is_finite() {
                return Err(Error::Diverged(format!(
                    "training loss became non-finite at epoch {epoch}"
                )));
            }
            model.train_loss.push(loss);
            if best - loss > config.tolerance {
                best = loss;
                stale = 0;
            } else {
                stale += 1;
                if stale >= config.patience {
                    break;
                }
            }
        }
        Ok(model)
    }

    /// Forward pass; activations land in the workspace. When `train` is
    /// set, hidden activations are scaled by the current dropout masks.
    fn forward(&self, row: &[f64], train: bool, keep: f64, ws: &mut Workspace) {
        ws.input.copy_from_slice(row);
        let levels = self.layers.len();
        for (l, layer) in self.layers.iter().enumerate() {
            let (input, rest) = ws.split_input(l);
            let out_dim = self.dims[l + 1];
            let in_dim = self.dims[l];
            let hidden = l < levels - 1;
            let act = &mut rest[0];
            for o in 0..out_dim {
                let mut z = layer.biases[o];
                let wrow = &layer.weights[o * in_dim..(o + 1) * in_dim];
                for (wi, xi) in wrow.iter().zip(input.iter()) {
                    z += wi * xi;
                }
                act.raw[o] = if hidden { self.activation.apply(z) } else { z };
            }
            if hidden && train {
                for o in 0..out_dim {
                    act.eff[o] = act.raw[o] * act.mask[o] / keep;
                }
                act.masked = true;
            } else {
                act.eff.copy_from_slice(&act.raw);
                act.masked = false;
            }
        }
    }

    /// Backward pass for one row; adds into `grads`.
    fn backward(
        &self,
        row: &[f64],
        chosen: usize,
        keep: f64,
        ws: &mut Workspace,
        grads: &mut [LayerGrad],
    ) {
        let levels = self.layers.len();
        // dL/dz at the output: softmax minus one-hot.
        {
            let out = &ws.acts[levels - 1];
            let delta = &mut ws.deltas[levels - 1];
            delta.copy_from_slice(&out.raw);
            softmax_in_place(delta);
            delta[chosen] -= 1.0;
        }
        for l in (0..levels).rev() {
            let in_dim = self.dims[l];
            let out_dim = self.dims[l + 1];
            // Gradients of this layer's weights and biases.
            {
                let below: &[f64] = if l == 0 { row } else { &ws.acts[l - 1].eff };
                let delta = &ws.deltas[l];
                let grad = &mut grads[l];
                for o in 0..out_dim {
                    let d = delta[o];
                    grad.biases[o] += d;
                    let wrow = &mut grad.weights[o * in_dim..(o + 1) * in_dim];
                    for (slot, xi) in wrow.iter_mut().zip(below.iter()) {
                        *slot += d * xi;
                    }
                }
            }
            // Propagate to the layer below.
            if l > 0 {
                let (head, tail) = ws.deltas.split_at_mut(l);
                let delta = &tail[0];
                let prev_delta = &mut head[l - 1];
                let act = &ws.acts[l - 1];
                let layer = &self.layers[l];
                for i in 0..in_dim {
                    let mut acc = 0.0;
                    for o in 0..out_dim {
                        acc += layer.weights[o * in_dim + i] * delta[o];
                    }
                    let gate = self.activation.derivative_from_value(act.raw[i])
                        * if act.masked {
                            act.mask[i] / keep
                        } else {
                            1.0
                        };
                    prev_delta[i] = acc * gate;
                }
            }
        }
    }

    /// Mean log-loss over a dataset, evaluated without dropout.
    pub fn loss(&self, dataset: &ChoiceDataset) -> Result<f64> {
        self.check_features(dataset.n_attributes())?;
        if dataset.n_rows() == 0 {
            return Err(Error::config("loss of an empty dataset is undefined"));
        }
        let mut ws = Workspace::new(&self.dims);
        let mut total = 0.0;
        for r in 0..dataset.n_rows() {
            self.forward(dataset.row(r), false, 1.0, &mut ws);
            let z = &ws.acts.last().unwrap().raw;
            let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = z.iter().map(|v| (v - max).exp()).sum();
            total += max + sum.ln() - z[dataset.chosen(r)];
        }
        Ok(total / dataset.n_rows() as f64)
    }

    /// Gradient of [`Mlp::loss`] with respect to the flat parameter vector.
    pub fn loss_grad(&self, dataset: &ChoiceDataset) -> Result<Vec<f64>> {
        self.check_features(dataset.n_attributes())?;
        if dataset.n_rows() == 0 {
            return Err(Error::config("loss of an empty dataset is undefined"));
        }
        let mut ws = Workspace::new(&self.dims);
        let mut grads = self.zero_grads();
        for r in 0..dataset.n_rows() {
            self.forward(dataset.row(r), false, 1.0, &mut ws);
            self.backward(dataset.row(r), dataset.chosen(r), 1.0, &mut ws, &mut grads);
        }
        let n = dataset.n_rows() as f64;
        let mut flat = Vec::with_capacity(self.n_params());
        for grad in &grads {
            flat.extend(grad.weights.iter().map(|g| g / n));
            flat.extend(grad.biases.iter().map(|g| g / n));
        }
        Ok(flat)
    }

    pub fn n_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.biases.len())
            .sum()
    }

    /// All parameters as one flat vector: per layer, weights then biases.
    pub fn params(&self) -> Vec<f64> {
        let mut flat = Vec::with_capacity(self.n_params());
        for layer in &self.layers {
            flat.extend_from_slice(&layer.weights);
            flat.extend_from_slice(&layer.biases);
        }
        flat
    }

    /// Overwrite all parameters from a flat vector laid out like [`Mlp::params`].
    pub fn set_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.n_params() {
            return Err(Error::dimension(format!(
                "network has {} parameters, got {}",
                self.n_params(),
                flat.len()
            )));
        }
        let mut offset = 0;
        for layer in self.layers.iter_mut() {
            let w = layer.weights.len();
            layer.weights.copy_from_slice(&flat[offset..offset + w]);
            offset += w;
            let b = layer.biases.len();
            layer.biases.copy_from_slice(&flat[offset..offset + b]);
            offset += b;
        }
        Ok(())
    }

    /// Untrained network with explicit dimensions, for tests and tooling.
    pub fn with_dims(
        n_features: usize,
        hidden: Vec<usize>,
        n_alternatives: usize,
        activation: Activation,
        seed: u64,
    ) -> Result<Self> {
        let mut config = MlpConfig::new(hidden);
        config.activation = activation;
        config.seed = seed;
        config.validate()?;
        if n_features == 0 || n_alternatives < 2 {
            return Err(Error::config("need >= 1 feature and >= 2 alternatives"));
        }
        Ok(Mlp::init(n_features, n_alternatives, &config))
    }

    fn zero_grads(&self) -> Vec<LayerGrad> {
        self.layers
            .iter()
            .map(|l| LayerGrad {
                weights: vec![0.0; l.weights.len()],
                biases: vec![0.0; l.biases.len()],
            })
            .collect()
    }

    fn check_features(&self, n: usize) -> Result<()> {
        if n != self.dims[0] {
            return Err(Error::dimension(format!(
                "network expects {} features, got {}",
                self.dims[0], n
            )));
        }
        Ok(())
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.dims.len() < 2 || self.dims.iter().any(|&d| d == 0) {
            return Err(Error::InvalidModel("layer widths must all be >= 1".into()));
        }
        if *self.dims.last().unwrap() < 2 {
            return Err(Error::InvalidModel("output layer needs >= 2 alternatives".into()));
        }
        if self.layers.len() != self.dims.len() - 1 {
            return Err(Error::InvalidModel(format!(
                "{} dims describe {} layers, document carries {}",
                self.dims.len(),
                self.dims.len() - 1,
                self.layers.len()
            )));
        }
        for (l, layer) in self.layers.iter().enumerate() {
            let (in_dim, out_dim) = (self.dims[l], self.dims[l + 1]);
            if layer.weights.len() != in_dim * out_dim || layer.biases.len() != out_dim {
                return Err(Error::InvalidModel(format!(
                    "layer {l} shape does not match dims {in_dim}x{out_dim}"
                )));
            }
            ensure_finite(&layer.weights, "mlp weights")?;
            ensure_finite(&layer.biases, "mlp biases")?;
        }
        Ok(())
    }
}

impl ChoiceModel for Mlp {
    fn n_features(&self) -> usize {
        self.dims[0]
    }

    fn n_alternatives(&self) -> usize {
        *self.dims.last().unwrap()
    }

    fn predict_proba_row(&self, row: &[f64]) -> Result<Vec<f64>> {
        self.check_features(row.len())?;
        let mut ws = Workspace::new(&self.dims);
        self.forward(row, false, 1.0, &mut ws);
        let mut probs = ws.acts.last().unwrap().raw.clone();
        softmax_in_place(&mut probs);
        Ok(probs)
    }
}

/// Per-layer activations of one forward pass.
struct LayerState {
    /// Raw activations (pre-dropout).
    raw: Vec<f64>,
    /// Activations fed to the next layer (post-dropout during training).
    eff: Vec<f64>,
    /// Bernoulli dropout mask, 0.0 or 1.0 per unit.
    mask: Vec<f64>,
    /// Whether `mask` participated in the last forward pass.
    masked: bool,
}

/// Reusable buffers for forward/backward passes.
struct Workspace {
    input: Vec<f64>,
    acts: Vec<LayerState>,
    deltas: Vec<Vec<f64>>,
}

impl Workspace {
    fn new(dims: &[usize]) -> Self {
        Workspace {
            input: vec![0.0; dims[0]],
            acts: dims[1..]
                .iter()
                .map(|&d| LayerState {
                    raw: vec![0.0; d],
                    eff: vec![0.0; d],
                    mask: vec![1.0; d],
                    masked: false,
                })
                .collect(),
            deltas: dims[1..].iter().map(|&d| vec![0.0; d]).collect(),
        }
    }

    /// Draw fresh dropout masks for all hidden layers.
    fn sample_masks(&mut self, keep: f64, rng: &mut impl Rng) {
        let hidden_levels = self.acts.len() - 1;
        for act in self.acts.iter_mut().take(hidden_levels) {
            for m in act.mask.iter_mut() {
                *m = if rng.random::<f64>() < keep { 1.0 } else { 0.0 };
            }
        }
    }

    /// Input slice of layer `l` and the layer states from `l` on.
    fn split_input(&mut self, l: usize) -> (&[f64], &mut [LayerState]) {
        if l == 0 {
            (&self.input, &mut self.acts[..])
        } else {
            let (head, tail) = self.acts.split_at_mut(l);
            (&head[l - 1].eff, tail)
        }
    }
}

/// Accumulated parameter gradients of one layer.
struct LayerGrad {
    weights: Vec<f64>,
    biases: Vec<f64>,
}

impl LayerGrad {
    fn clear_to_zero(&mut self) {
        self.weights.iter_mut().for_each(|g| *g = 0.0);
        self.biases.iter_mut().for_each(|g| *g = 0.0);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use approx::assert_relative_eq;
    use rand::Rng;

    fn toy_dataset(n: usize, seed: u64) -> ChoiceDataset {
        let mut attr = rng::stream(seed, "mlp-test/attrs");
        let mut features = Vec::with_capacity(n * 4);
        let mut chosen = Vec::with_capacity(n);
        for _ in 0..n {
            let row: Vec<f64> = (0..4).map(|_| attr.random::<f64>()).collect();
            let label = if row[0] + row[1] > 1.0 {
                0
            } else if row[2] > 0.5 {
                1
            } else {
                2
            };
            features.extend(row);
            chosen.push(label);
        }
        ChoiceDataset::new(
            (0..4).map(|i| format!("f{i}")).collect(),
            vec!["a".into(), "b".into(), "c".into()],
            features,
            chosen,
            None,
            None,
        )
        .unwrap()
    }

    #[test]
    fn config_validation_catches_bad_settings() {
        assert!(MlpConfig::new(vec![]).validate().is_err());
        assert!(MlpConfig::new(vec![0]).validate().is_err());
        let mut c = MlpConfig::new(vec![8]);
        c.dropout = 0.5;
        assert!(c.validate().is_err(), "dropout needs a deep network");
        c.hidden = vec![8, 8];
        assert!(c.validate().is_ok());
    }

    #[test]
    fn gradient_matches_central_differences() {
        let ds = toy_dataset(40, 21);
        let mut net = Mlp::with_dims(4, vec![5, 4], 3, Activation::Tanh, 77).unwrap();
        let mut point_rng = rng::stream(3, "mlp-test/points");
        let base: Vec<f64> = (0..net.n_params())
            .map(|_| point_rng.random::<f64>() - 0.5)
            .collect();
        net.set_params(&base).unwrap();
        let analytic = net.loss_grad(&ds).unwrap();
        let h = 1e-5;
        for i in (0..net.n_params()).step_by(7) {
            let mut plus = base.clone();
            let mut minus = base.clone();
            plus[i] += h;
            minus[i] -= h;
            net.set_params(&plus).unwrap();
            let fp = net.loss(&ds).unwrap();
            net.set_params(&minus).unwrap();
            let fm = net.loss(&ds).unwrap();
            let fd = (fp - fm) / (2.0 * h);
            assert_relative_eq!(analytic[i], fd, max_relative = 1e-5, epsilon = 1e-9);
        }
    }

    #[test]
    fn training_reduces_loss_and_is_deterministic() {
        let ds = toy_dataset(300, 4);
        let mut config = MlpConfig::new(vec![16]);
        config.epochs = 60;
        config.seed = 9;
        let a = Mlp::fit(&ds, &config).unwrap();
        assert!(a.train_loss.last().unwrap() < &a.train_loss[0]);
        let b = Mlp::fit(&ds, &config).unwrap();
        assert_eq!(a.params(), b.params());
    }

    #[test]
    fn dropout_training_still_learns() {
        let ds = toy_dataset(300, 6);
        let mut config = MlpConfig::new(vec![16, 16]);
        config.activation = Activation::Relu;
        config.dropout = 0.1;
        config.epochs = 50;
        config.seed = 2;
        let net = Mlp::fit(&ds, &config).unwrap();
        assert!(*net.train_loss.last().unwrap() < 3.0f64.ln());
    }

    #[test]
    fn probabilities_form_a_distribution() {
        let net = Mlp::with_dims(4, vec![6], 3, Activation::Tanh, 5).unwrap();
        let probs = net.predict_proba_row(&[0.2, 0.8, 0.5, 0.1]).unwrap();
        assert_relative_eq!(probs.iter().sum::<f64>(), 1.0, epsilon = 1e-9);
        assert!(probs.iter().all(|&p| p >= 0.0));
        assert!(net.predict_proba_row(&[0.2, 0.8]).is_err());
    }

    #[test]
    fn document_round_trip_preserves_predictions() {
        let ds = toy_dataset(100, 13);
        let mut config = MlpConfig::new(vec![8]);
        config.epochs = 10;
        let net = Mlp::fit(&ds, &config).unwrap();
        let doc = crate::models::ModelDocument::from(net.clone());
        let text = doc.to_json().unwrap();
        let restored = crate::models::ModelDocument::from_json(&text).unwrap();
        let row = [0.3, 0.9, 0.1, 0.5];
        let a = net.predict_proba_row(&row).unwrap();
        let b = restored.as_model().predict_proba_row(&row).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_relative_eq!(x, y, epsilon = 1e-12);
        }
    }
}
