//! Feed-forward MLP engine: construction, forward pass, regularised MAE
//! loss, seven optimizers, inverted dropout and an early-stopped minibatch
//! training loop.
//!
//! Hidden layers share one activation; the output layer is linear. Weights
//! are initialised from Normal(0, 0.1), biases at zero. All randomness
//! (init, shuffling, dropout masks) flows from the model's seed, so a
//! (config, seed, data, schedule) tuple always trains to identical
//! parameters.

mod activation;
mod optimizer;
mod train;

pub use activation::{Activation, SELU_ALPHA, SELU_LAMBDA};
pub use optimizer::{step_slot, Optimizer, OptimizerKind, SlotState, EPSILON};
pub use train::{
    backward, loss_regularised_mae, train, EarlyStopping, Gradients, TrainingHistory,
    TrainingSchedule,
};

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeds;

/// l1/l2 rates selectable by the hyperparameter search.
pub const REGULARISATION_RATES: [f64; 5] = [0.0, 1e-5, 1e-4, 1e-3, 1e-2];

/// Weight initializer: Normal(0, 0.1).
pub const INIT_STD: f64 = 0.1;

/// Architecture and training hyperparameters of one network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub hidden_layers: usize,
    pub neurons_per_layer: Vec<usize>,
    pub activation: Activation,
    pub optimizer: OptimizerKind,
    pub l1_rate: f64,
    pub l2_rate: f64,
    pub dropout_rate: f64,
    pub input_dim: usize,
    pub output_dim: usize,
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        if !(1..=4).contains(&self.hidden_layers) {
            return Err(Error::config(format!(
                "hidden_layers must be in [1,4], got {}",
                self.hidden_layers
            )));
        }
        if self.neurons_per_layer.len() != self.hidden_layers {
            return Err(Error::config(
                "neurons_per_layer length must equal hidden_layers",
            ));
        }
        if self
            .neurons_per_layer
            .iter()
            .any(|&n| !(1..=1000).contains(&n))
        {
            return Err(Error::config("neuron counts must be in [1,1000]"));
        }
        if !(0.0..0.9).contains(&self.dropout_rate) {
            return Err(Error::config("dropout_rate must be in [0,0.9)"));
        }
        for (name, rate) in [("l1_rate", self.l1_rate), ("l2_rate", self.l2_rate)] {
            if !REGULARISATION_RATES.contains(&rate) {
                return Err(Error::config(format!(
                    "{name} must be one of {REGULARISATION_RATES:?}, got {rate}"
                )));
            }
        }
        if self.input_dim == 0 || self.output_dim == 0 {
            return Err(Error::config("input_dim and output_dim must be positive"));
        }
        Ok(())
    }

    /// Layer widths from input through hidden layers to output.
    pub fn layer_dims(&self) -> Vec<usize> {
        let mut dims = Vec::with_capacity(self.hidden_layers + 2);
        dims.push(self.input_dim);
        dims.extend_from_slice(&self.neurons_per_layer);
        dims.push(self.output_dim);
        dims
    }
}

/// One dense layer. Weights are `[out][in]` row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Layer {
    fn zeros(in_dim: usize, out_dim: usize) -> Layer {
        Layer {
            in_dim,
            out_dim,
            weights: vec![0.0; in_dim * out_dim],
            biases: vec![0.0; out_dim],
        }
    }

    /// (rows, cols) as the weight matrix chains: input dim x output dim.
    pub fn shape(&self) -> (usize, usize) {
        (self.in_dim, self.out_dim)
    }

    #[inline]
    pub fn weight(&self, out: usize, inp: usize) -> f64 {
        self.weights[out * self.in_dim + inp]
    }

    #[inline]
    pub fn weight_mut(&mut self, out: usize, inp: usize) -> &mut f64 {
        &mut self.weights[out * self.in_dim + inp]
    }
}

/// A concrete network: per-layer weights and biases plus the config and
/// seed that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkModel {
    pub config: NetworkConfig,
    pub rng_seed: u64,
    pub layers: Vec<Layer>,
}

const INIT_STREAM: u64 = 0x1217;

/// Builds a network with Normal(0, 0.1) weights and zero biases,
/// deterministically from the seed.
pub fn init_network(config: &NetworkConfig, seed: u64) -> NetworkModel {
    config.validate().expect("invalid network config");
    let dims = config.layer_dims();
    let mut rng = seeds::rng(seed, &[INIT_STREAM]);
    let dist: Normal<f64> = Normal::new(0.0, INIT_STD).expect("valid normal");
    let layers = dims
        .windows(2)
        .map(|pair| {
            let mut layer = Layer::zeros(pair[0], pair[1]);
            for w in layer.weights.iter_mut() {
                *w = dist.sample(&mut rng);
            }
            layer
        })
        .collect();
    NetworkModel {
        config: config.clone(),
        rng_seed: seed,
        layers,
    }
}

/// Four-accumulator dot product; keeps the FP pipeline fed in the forward
/// pass hot loop.
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (qa, qb) in (&mut ca).zip(&mut cb) {
        acc[0] += qa[0] * qb[0];
        acc[1] += qa[1] * qb[1];
        acc[2] += qa[2] * qb[2];
        acc[3] += qa[3] * qb[3];
    }
    let mut tail = 0.0;
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Inverted-dropout mask: each unit is zeroed with probability `rate`,
/// survivors scaled by 1/(1-rate).
#[cfg(test)]
pub(crate) fn dropout_mask(rng: &mut impl rand::Rng, rate: f64, len: usize) -> Vec<f64> {
    let mut mask = Vec::new();
    fill_dropout_mask(rng, rate, len, &mut mask);
    mask
}

fn fill_dropout_mask(rng: &mut impl rand::Rng, rate: f64, len: usize, mask: &mut Vec<f64>) {
    let keep_scale = 1.0 / (1.0 - rate);
    let threshold = (rate * (u32::MAX as f64 + 1.0)) as u64;
    mask.clear();
    mask.extend((0..len).map(|_| {
        if (rng.random::<u32>() as u64) < threshold {
            0.0
        } else {
            keep_scale
        }
    }));
}

/// Per-layer forward state kept for backpropagation: preactivations,
/// post-activation outputs (after dropout) and dropout masks. Reusable
/// across batches; buffers are resized in place.
#[derive(Default)]
pub(crate) struct ForwardTrace {
    /// z values per layer, n x out_dim flattened.
    pub z: Vec<Vec<f64>>,
    /// activations fed to the next layer (input batch first).
    pub a: Vec<Vec<f64>>,
    /// dropout masks per hidden layer (empty when not training or p=0).
    pub masks: Vec<Vec<f64>>,
}

impl ForwardTrace {
    pub fn new() -> ForwardTrace {
        ForwardTrace::default()
    }

    fn prepare(&mut self, n_layers: usize) {
        self.z.resize_with(n_layers, Vec::new);
        self.a.resize_with(n_layers + 1, Vec::new);
        self.masks.resize_with(n_layers.saturating_sub(1), Vec::new);
    }
}

/// Overwrites `buf` with `len` zeros without reallocating when possible.
fn reset(buf: &mut Vec<f64>, len: usize) {
    buf.clear();
    buf.resize(len, 0.0);
}

impl NetworkModel {
    pub fn input_dim(&self) -> usize {
        self.config.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.config.output_dim
    }

    /// Total number of weight entries (biases excluded).
    pub fn weight_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len()).sum()
    }

    /// Slices of all weight matrices; the regularisation penalty runs over
    /// exactly these.
    pub fn weight_slices(&self) -> Vec<&[f64]> {
        self.layers.iter().map(|l| l.weights.as_slice()).collect()
    }

    /// Inference-mode predictions for a flat row-major batch.
    pub fn predict(&self, inputs: &[f64], n_rows: usize) -> Result<Vec<f64>> {
        self.forward(inputs, n_rows, false, 0)
    }

    /// Single-row convenience wrapper around [`NetworkModel::predict`].
    pub fn predict_one(&self, input: &[f64]) -> Result<f64> {
        Ok(self.predict(input, 1)?[0])
    }

    /// Forward pass. In train mode with dropout_rate p > 0, each hidden
    /// unit is zeroed with probability p and survivors are scaled by
    /// 1/(1-p); with train_mode off dropout is the identity.
    pub fn forward(
        &self,
        inputs: &[f64],
        n_rows: usize,
        train_mode: bool,
        dropout_mask_seed: u64,
    ) -> Result<Vec<f64>> {
        let trace = self.forward_trace(inputs, n_rows, train_mode, dropout_mask_seed)?;
        Ok(trace.a.into_iter().next_back().expect("at least one layer"))
    }

    pub(crate) fn forward_trace(
        &self,
        inputs: &[f64],
        n_rows: usize,
        train_mode: bool,
        dropout_mask_seed: u64,
    ) -> Result<ForwardTrace> {
        let mut trace = ForwardTrace::new();
        self.forward_trace_into(inputs, n_rows, train_mode, dropout_mask_seed, &mut trace)?;
        Ok(trace)
    }

    /// Forward pass into a reusable trace; the training loop calls this
    /// once per minibatch without reallocating.
    pub(crate) fn forward_trace_into(
        &self,
        inputs: &[f64],
        n_rows: usize,
        train_mode: bool,
        dropout_mask_seed: u64,
        trace: &mut ForwardTrace,
    ) -> Result<()> {
        if inputs.len() != n_rows * self.config.input_dim {
            return Err(Error::data(format!(
                "input batch has {} values, expected {} rows x {} dims",
                inputs.len(),
                n_rows,
                self.config.input_dim
            )));
        }
        if inputs.iter().any(|v| !v.is_finite()) {
            return Err(Error::data("non-finite input value"));
        }

        let n_layers = self.layers.len();
        trace.prepare(n_layers);
        trace.a[0].clear();
        trace.a[0].extend_from_slice(inputs);

        let p = self.config.dropout_rate;
        let use_dropout = train_mode && p > 0.0;

        for (l, layer) in self.layers.iter().enumerate() {
            let (below, above) = trace.a.split_at_mut(l + 1);
            let prev = &below[l];
            let z = &mut trace.z[l];
            reset(z, n_rows * layer.out_dim);
            for s in 0..n_rows {
                let row = &prev[s * layer.in_dim..(s + 1) * layer.in_dim];
                let out = &mut z[s * layer.out_dim..(s + 1) * layer.out_dim];
                for (o, zo) in out.iter_mut().enumerate() {
                    let w = &layer.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
                    *zo = layer.biases[o] + dot(w, row);
                }
            }

            let is_output = l == n_layers - 1;
            let a = &mut above[0];
            if is_output {
                a.clear();
                a.extend_from_slice(z); // linear output layer
            } else {
                activate_layer_into(self.config.activation, z, n_rows, layer.out_dim, a);
            }

            if !is_output {
                let mask = &mut trace.masks[l];
                mask.clear();
                if use_dropout {
                    let mut rng = seeds::rng(dropout_mask_seed, &[l as u64]);
                    fill_dropout_mask(&mut rng, p, a.len(), mask);
                    for (v, m) in a.iter_mut().zip(mask.iter()) {
                        *v *= m;
                    }
                }
            }
        }
        Ok(())
    }

    /// Versioned lossless JSON serialization.
    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let file = ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            model: self.clone(),
        };
        Ok(std::fs::write(path, serde_json::to_string(&file)?)?)
    }

    pub fn load(path: &std::path::Path) -> Result<NetworkModel> {
        let file: ModelFile = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if file.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::data(format!(
                "unsupported model format version {}",
                file.format_version
            )));
        }
        Ok(file.model)
    }
}

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    model: NetworkModel,
}

/// Applies the activation over a layer's outputs. Softmax normalizes per
/// sample across the layer's units (with max subtraction for stability);
/// every other kind is an elementwise map.
pub(crate) fn activate_layer(
    kind: Activation,
    z: &[f64],
    n_rows: usize,
    out_dim: usize,
) -> Vec<f64> {
    let mut a = Vec::new();
    activate_layer_into(kind, z, n_rows, out_dim, &mut a);
    a
}

fn activate_layer_into(
    kind: Activation,
    z: &[f64],
    n_rows: usize,
    out_dim: usize,
    a: &mut Vec<f64>,
) {
    reset(a, z.len());
    if kind.is_softmax() {
        for s in 0..n_rows {
            let zs = &z[s * out_dim..(s + 1) * out_dim];
            let out = &mut a[s * out_dim..(s + 1) * out_dim];
            let zmax = zs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for (o, &zv) in out.iter_mut().zip(zs) {
                *o = (zv - zmax).exp();
                sum += *o;
            }
            for o in out.iter_mut() {
                *o /= sum;
            }
        }
    } else {
        for (av, &zv) in a.iter_mut().zip(z) {
            *av = kind.apply(zv);
        }
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn small_config() -> NetworkConfig {
        NetworkConfig {
            hidden_layers: 1,
            neurons_per_layer: vec![3],
            activation: Activation::Relu,
            optimizer: OptimizerKind::Adam,
            l1_rate: 0.0,
            l2_rate: 0.0,
            dropout_rate: 0.0,
            input_dim: 5,
            output_dim: 1,
        }
    }

    #[test]
    fn init_shapes_chain() {
        let model = init_network(&small_config(), 42);
        assert_eq!(model.layers.len(), 2);
        assert_eq!(model.layers[0].shape(), (5, 3));
        assert_eq!(model.layers[1].shape(), (3, 1));
        assert!(model
            .layers
            .iter()
            .all(|l| l.biases.iter().all(|&b| b == 0.0)));
    }

    #[test]
    fn init_weight_std_near_point_one() {
        let config = small_config();
        let mut values = Vec::new();
        for seed in 0..100u64 {
            let model = init_network(&config, seed);
            for layer in &model.layers {
                values.extend_from_slice(&layer.weights);
            }
        }
        assert!(values.len() >= 1000);
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let std =
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / values.len() as f64).sqrt();
        assert!((0.05..=0.15).contains(&std), "sample std {std}");
    }

    #[test]
    fn init_is_deterministic_and_seed_sensitive() {
        let config = small_config();
        assert_eq!(init_network(&config, 42), init_network(&config, 42));
        let a = init_network(&config, 42);
        let b = init_network(&config, 43);
        assert!(a.layers[0].weights != b.layers[0].weights);
    }

    #[test]
    fn zero_network_outputs_zero() {
        let mut model = init_network(&small_config(), 1);
        for layer in &mut model.layers {
            layer.weights.iter_mut().for_each(|w| *w = 0.0);
        }
        let out = model.predict(&[0.3, -0.2, 0.9, 0.0, 1.0], 1).unwrap();
        assert_eq!(out, vec![0.0]);
    }

    #[test]
    fn hand_evaluated_relu_forward() {
        // 1 hidden neuron, weights (1,1), bias 0, relu; output weight 2.
        let config = NetworkConfig {
            hidden_layers: 1,
            neurons_per_layer: vec![1],
            input_dim: 2,
            ..small_config()
        };
        let mut model = init_network(&config, 0);
        model.layers[0].weights = vec![1.0, 1.0];
        model.layers[1].weights = vec![2.0];
        let out = model.predict(&[0.5, 0.25], 1).unwrap();
        assert!((out[0] - 1.5).abs() < 1e-15);
    }

    #[test]
    fn softmax_layer_sums_to_one() {
        // Output weights all 1 with zero bias, so the prediction equals the
        // sum of the softmax activations.
        let config = NetworkConfig {
            hidden_layers: 1,
            neurons_per_layer: vec![7],
            activation: Activation::Softmax,
            input_dim: 3,
            ..small_config()
        };
        let mut model = init_network(&config, 5);
        model.layers[1].weights = vec![1.0; 7];
        model.layers[1].biases = vec![0.0];
        for case in [[0.1, -3.0, 2.5], [100.0, 100.0, 100.0], [0.0, 0.0, 0.0]] {
            let out = model.predict(&case, 1).unwrap();
            assert!((out[0] - 1.0).abs() < 1e-12, "sum {}", out[0]);
        }
    }

    #[test]
    fn forward_rejects_non_finite_input() {
        let model = init_network(&small_config(), 1);
        let err = model.predict(&[0.0, f64::NAN, 0.0, 0.0, 0.0], 1);
        assert!(matches!(err, Err(crate::Error::Data(_))));
    }

    #[test]
    fn dropout_mask_expectation_is_identity() {
        // mean over many masked passes of a fixed vector ~= the vector
        for &p in &[0.25f64, 0.5] {
            let values = [1.0, -2.0, 0.5, 3.0];
            let mut sums = [0.0; 4];
            let mut rng = crate::seeds::rng(9, &[p.to_bits()]);
            let n = 20_000;
            for _ in 0..n {
                let mask = dropout_mask(&mut rng, p, values.len());
                for (i, (v, m)) in values.iter().zip(&mask).enumerate() {
                    sums[i] += v * m;
                }
            }
            for (i, &v) in values.iter().enumerate() {
                let mean = sums[i] / n as f64;
                assert!(
                    ((mean - v) / v).abs() < 0.02,
                    "p={p} unit {i}: mean {mean} vs {v}"
                );
            }
        }
    }

    #[test]
    fn dropout_off_matches_inference() {
        let config = NetworkConfig {
            dropout_rate: 0.0,
            ..small_config()
        };
        let model = init_network(&config, 3);
        let batch = [0.1, 0.2, 0.3, 0.4, 0.5, -0.1, -0.2, -0.3, -0.4, -0.5];
        let trained_mode = model.forward(&batch, 2, true, 1234).unwrap();
        let inference = model.predict(&batch, 2).unwrap();
        assert_eq!(trained_mode, inference);
    }

    #[test]
    fn model_serialization_round_trips_losslessly() {
        let dir = tempfile::tempdir().unwrap();
        let model = init_network(&small_config(), 77);
        let path = dir.path().join("model.json");
        model.save(&path).unwrap();
        let loaded = NetworkModel::load(&path).unwrap();
        assert_eq!(model, loaded);
    }

    #[test]
    fn config_validation_rejects_bad_values() {
        let ok = small_config();
        assert!(ok.validate().is_ok());
        let mut bad = ok.clone();
        bad.hidden_layers = 5;
        bad.neurons_per_layer = vec![1; 5];
        assert!(bad.validate().is_err());
        let mut bad = ok.clone();
        bad.neurons_per_layer = vec![1001];
        assert!(bad.validate().is_err());
        let mut bad = ok.clone();
        bad.dropout_rate = 0.9;
        assert!(bad.validate().is_err());
        let mut bad = ok.clone();
        bad.l1_rate = 0.5;
        assert!(bad.validate().is_err());
    }
}
