//! Regularised-MAE loss, reverse-mode gradients and the early-stopped
//! minibatch training loop.
//!
//! The MAE subgradient at a zero residual is 0. The l1/l2 penalty runs over
//! weight matrices only, never biases. Early stopping restores the
//! parameters from the best-validation epoch.

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::seeds;

use super::{activate_layer, Activation, NetworkModel, Optimizer};

/// Mean absolute error plus l1/l2 weight penalties:
/// mean|y - yhat| + l1 * sum|w| + l2 * sum w^2.
pub fn loss_regularised_mae(
    predictions: &[f64],
    targets: &[f64],
    weights: &[&[f64]],
    l1_rate: f64,
    l2_rate: f64,
) -> Result<f64> {
    if predictions.is_empty() || predictions.len() != targets.len() {
        return Err(Error::data(format!(
            "loss needs equal nonzero lengths, got {} predictions and {} targets",
            predictions.len(),
            targets.len()
        )));
    }
    let data_term = predictions
        .iter()
        .zip(targets)
        .map(|(p, t)| (p - t).abs())
        .sum::<f64>()
        / predictions.len() as f64;
    let mut penalty = 0.0;
    if l1_rate != 0.0 || l2_rate != 0.0 {
        for slice in weights {
            for &w in *slice {
                penalty += l1_rate * w.abs() + l2_rate * w * w;
            }
        }
    }
    Ok(data_term + penalty)
}

/// Parameter gradients, shaped exactly like the model's layers.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub layers: Vec<LayerGradients>,
}

#[derive(Debug, Clone)]
pub struct LayerGradients {
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

/// Reusable buffers for training steps: the forward trace, the two delta
/// buffers of the backward sweep and the gradient accumulators.
pub(crate) struct TrainWorkspace {
    trace: crate::nn::ForwardTrace,
    delta: Vec<f64>,
    below: Vec<f64>,
    pub grads: Gradients,
}

impl TrainWorkspace {
    pub fn for_model(model: &NetworkModel) -> TrainWorkspace {
        TrainWorkspace {
            trace: crate::nn::ForwardTrace::new(),
            delta: Vec::new(),
            below: Vec::new(),
            grads: Gradients {
                layers: model
                    .layers
                    .iter()
                    .map(|l| LayerGradients {
                        weights: vec![0.0; l.weights.len()],
                        biases: vec![0.0; l.biases.len()],
                    })
                    .collect(),
            },
        }
    }
}

/// Gradient of the regularised MAE loss with respect to every weight and
/// bias, via reverse-mode differentiation through the forward trace.
pub fn backward(
    model: &NetworkModel,
    inputs: &[f64],
    n_rows: usize,
    targets: &[f64],
    train_mode: bool,
    dropout_mask_seed: u64,
) -> Result<Gradients> {
    let mut ws = TrainWorkspace::for_model(model);
    loss_and_gradients(
        model,
        inputs,
        n_rows,
        targets,
        train_mode,
        dropout_mask_seed,
        &mut ws,
    )?;
    Ok(ws.grads)
}

/// Computes the batch loss and leaves the parameter gradients in the
/// workspace. The backward sweep applies the chain rule layer by layer,
/// undoing dropout before the activation derivative of each hidden layer.
pub(crate) fn loss_and_gradients(
    model: &NetworkModel,
    inputs: &[f64],
    n_rows: usize,
    targets: &[f64],
    train_mode: bool,
    dropout_mask_seed: u64,
    ws: &mut TrainWorkspace,
) -> Result<f64> {
    if n_rows == 0 {
        return Err(Error::data("empty batch"));
    }
    if targets.len() != n_rows * model.output_dim() {
        return Err(Error::data("target batch length mismatch"));
    }
    model.forward_trace_into(inputs, n_rows, train_mode, dropout_mask_seed, &mut ws.trace)?;
    let predictions = ws.trace.a.last().expect("output layer");
    let loss = loss_regularised_mae(
        predictions,
        targets,
        &model.weight_slices(),
        model.config.l1_rate,
        model.config.l2_rate,
    )?;
    if !loss.is_finite() {
        return Err(Error::data("non-finite training loss"));
    }

    let n_layers = model.layers.len();
    let denom = (n_rows * model.output_dim()) as f64;
    // dL/dz of the linear output layer; MAE subgradient at 0 is 0.
    ws.delta.clear();
    ws.delta
        .extend(predictions.iter().zip(targets).map(|(p, t)| {
            let r = p - t;
            if r > 0.0 {
                1.0 / denom
            } else if r < 0.0 {
                -1.0 / denom
            } else {
                0.0
            }
        }));

    for (lg, layer) in ws.grads.layers.iter_mut().zip(&model.layers) {
        lg.weights.iter_mut().for_each(|g| *g = 0.0);
        lg.biases.iter_mut().for_each(|g| *g = 0.0);
        debug_assert_eq!(lg.weights.len(), layer.weights.len());
    }

    for l in (0..n_layers).rev() {
        let layer = &model.layers[l];
        let below_act = &ws.trace.a[l]; // inputs to this layer (post-dropout)
        let lg = &mut ws.grads.layers[l];

        if l == 0 {
            // Innermost layer: only the parameter gradients are needed.
            for s in 0..n_rows {
                let d = &ws.delta[s * layer.out_dim..(s + 1) * layer.out_dim];
                let x = &below_act[s * layer.in_dim..(s + 1) * layer.in_dim];
                for (o, &dv) in d.iter().enumerate() {
                    if dv == 0.0 {
                        continue;
                    }
                    lg.biases[o] += dv;
                    let row = &mut lg.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
                    for (wi, xi) in row.iter_mut().zip(x) {
                        *wi += dv * xi;
                    }
                }
            }
            break;
        }

        // Parameter gradients and the gradient w.r.t. this layer's
        // (post-dropout) input in one pass over the weight rows.
        ws.below.clear();
        ws.below.resize(n_rows * layer.in_dim, 0.0);
        for s in 0..n_rows {
            let d = &ws.delta[s * layer.out_dim..(s + 1) * layer.out_dim];
            let x = &below_act[s * layer.in_dim..(s + 1) * layer.in_dim];
            let bg = &mut ws.below[s * layer.in_dim..(s + 1) * layer.in_dim];
            for (o, &dv) in d.iter().enumerate() {
                if dv == 0.0 {
                    continue;
                }
                lg.biases[o] += dv;
                let grad_row = &mut lg.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
                let w_row = &layer.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
                for (((gw, xi), bgi), wi) in
                    grad_row.iter_mut().zip(x).zip(bg.iter_mut()).zip(w_row)
                {
                    *gw += dv * xi;
                    *bgi += dv * wi;
                }
            }
        }

        // Undo dropout, then the activation of the hidden layer below.
        let mask = &ws.trace.masks[l - 1];
        if !mask.is_empty() {
            for (g, m) in ws.below.iter_mut().zip(mask) {
                *g *= m;
            }
        }

        let hidden = l - 1;
        let z = &ws.trace.z[hidden];
        let width = model.layers[hidden].out_dim;
        if model.config.activation.is_softmax() {
            // Jacobian of per-sample softmax: d_k = s_k (g_k - sum_j g_j s_j),
            // with s recomputed from z (the trace stores post-dropout values).
            let soft = activate_layer(Activation::Softmax, z, n_rows, width);
            for s in 0..n_rows {
                let sm = &soft[s * width..(s + 1) * width];
                let g = &mut ws.below[s * width..(s + 1) * width];
                let dot: f64 = g.iter().zip(sm).map(|(gi, si)| gi * si).sum();
                for (gi, si) in g.iter_mut().zip(sm) {
                    *gi = si * (*gi - dot);
                }
            }
        } else {
            let act = model.config.activation;
            for (g, &zv) in ws.below.iter_mut().zip(z) {
                *g *= act.derivative(zv);
            }
        }
        std::mem::swap(&mut ws.delta, &mut ws.below);
    }

    // Regularisation: weights only.
    let l1 = model.config.l1_rate;
    let l2 = model.config.l2_rate;
    if l1 != 0.0 || l2 != 0.0 {
        for (lg, layer) in ws.grads.layers.iter_mut().zip(&model.layers) {
            for (gw, &w) in lg.weights.iter_mut().zip(&layer.weights) {
                *gw += l1 * w.signum_or_zero() + 2.0 * l2 * w;
            }
        }
    }

    Ok(loss)
}

trait SignumOrZero {
    fn signum_or_zero(self) -> f64;
}

impl SignumOrZero for f64 {
    fn signum_or_zero(self) -> f64 {
        if self > 0.0 {
            1.0
        } else if self < 0.0 {
            -1.0
        } else {
            0.0
        }
    }
}

/// Epoch/patience/batch parameters for one training run.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct TrainingSchedule {
    pub max_epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    /// None picks the optimizer's default.
    pub learning_rate: Option<f64>,
}

impl Default for TrainingSchedule {
    fn default() -> Self {
        TrainingSchedule {
            max_epochs: 20,
            patience: 5,
            batch_size: 128,
            learning_rate: None,
        }
    }
}

impl TrainingSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.max_epochs == 0 || self.patience == 0 || self.batch_size == 0 {
            return Err(Error::config(
                "max_epochs, patience and batch_size must be positive",
            ));
        }
        if let Some(lr) = self.learning_rate {
            if !(lr > 0.0) {
                return Err(Error::config("learning_rate must be positive"));
            }
        }
        Ok(())
    }
}

/// Per-epoch losses and stopping bookkeeping for one training run.
#[derive(Debug, Clone, Default)]
pub struct TrainingHistory {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    pub epochs_run: usize,
    /// 1-based epoch with the lowest validation loss; 0 if none completed.
    pub best_epoch: usize,
    pub diverged: bool,
}

/// Patience-based stopping on validation loss. Improvement means strictly
/// lower than the best seen so far.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    best_epoch: usize,
    epochs_since_improvement: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> EarlyStopping {
        EarlyStopping {
            patience,
            best: f64::INFINITY,
            best_epoch: 0,
            epochs_since_improvement: 0,
        }
    }

    /// Records one epoch's validation loss; returns true when training
    /// should stop (no improvement for `patience` consecutive epochs).
    pub fn observe(&mut self, epoch: usize, val_loss: f64) -> bool {
        if val_loss < self.best {
            self.best = val_loss;
            self.best_epoch = epoch;
            self.epochs_since_improvement = 0;
            false
        } else {
            self.epochs_since_improvement += 1;
            self.epochs_since_improvement >= self.patience
        }
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    pub fn improved_last(&self) -> bool {
        self.epochs_since_improvement == 0
    }
}

const SHUFFLE_STREAM: u64 = 0x7aff1e;
const DROPOUT_STREAM: u64 = 0xd70900;

/// Trains with shuffled minibatches and early stopping, returning the
/// parameters from the best-validation epoch. Divergence (a non-finite
/// loss) is flagged in the history rather than raised.
pub fn train(
    model: NetworkModel,
    train_set: &Dataset,
    val_set: &Dataset,
    schedule: &TrainingSchedule,
) -> Result<(NetworkModel, TrainingHistory)> {
    schedule.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::data("train and validation sets must be nonempty"));
    }
    if train_set.dim() != model.input_dim() || val_set.dim() != model.input_dim() {
        return Err(Error::data("dataset dimension does not match the network"));
    }

    let mut model = model;
    let lr = schedule
        .learning_rate
        .unwrap_or_else(|| model.config.optimizer.default_learning_rate());
    let slot_lens: Vec<usize> = model
        .layers
        .iter()
        .flat_map(|l| [l.weights.len(), l.biases.len()])
        .collect();
    let mut optimizer = Optimizer::new(model.config.optimizer, lr, &slot_lens);

    let mut history = TrainingHistory::default();
    let mut stopping = EarlyStopping::new(schedule.patience);
    let mut best_model = model.clone();

    let n = train_set.len();
    let dim = train_set.dim();
    let mut order: Vec<usize> = (0..n).collect();
    let mut batch_x = Vec::with_capacity(schedule.batch_size * dim);
    let mut batch_y = Vec::with_capacity(schedule.batch_size);
    let mut ws = TrainWorkspace::for_model(&model);

    'epochs: for epoch in 1..=schedule.max_epochs {
        let mut rng = seeds::rng(model.rng_seed, &[SHUFFLE_STREAM, epoch as u64]);
        crate::data::shuffle(&mut order, &mut rng);

        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for (batch_index, chunk) in order.chunks(schedule.batch_size).enumerate() {
            batch_x.clear();
            batch_y.clear();
            for &i in chunk {
                batch_x.extend_from_slice(train_set.row(i));
                batch_y.push(train_set.target(i));
            }
            let dropout_seed = seeds::derive(
                model.rng_seed,
                &[DROPOUT_STREAM, epoch as u64, batch_index as u64],
            );
            let step = loss_and_gradients(
                &model,
                &batch_x,
                chunk.len(),
                &batch_y,
                true,
                dropout_seed,
                &mut ws,
            );
            let loss = match step {
                Ok(loss) => loss,
                Err(_) => {
                    history.diverged = true;
                    break 'epochs;
                }
            };
            epoch_loss += loss;
            batches += 1;

            let mut params: Vec<&mut [f64]> = Vec::with_capacity(model.layers.len() * 2);
            for layer in &mut model.layers {
                params.push(layer.weights.as_mut_slice());
                params.push(layer.biases.as_mut_slice());
            }
            let grad_slices: Vec<&[f64]> = ws
                .grads
                .layers
                .iter()
                .flat_map(|g| [g.weights.as_slice(), g.biases.as_slice()])
                .collect();
            optimizer.apply(&mut params, &grad_slices);
        }

        history.train_loss.push(epoch_loss / batches.max(1) as f64);
        history.epochs_run = epoch;

        let val_mae = validation_mae(&model, val_set, &mut ws)?;
        if !val_mae.is_finite() {
            history.diverged = true;
            break;
        }
        history.val_loss.push(val_mae);

        let stop = stopping.observe(epoch, val_mae);
        if stopping.improved_last() {
            best_model = model.clone();
        }
        if stop {
            break;
        }
    }

    history.best_epoch = stopping.best_epoch();
    Ok((best_model, history))
}

/// Validation MAE in chunks through the reusable workspace.
fn validation_mae(model: &NetworkModel, val_set: &Dataset, ws: &mut TrainWorkspace) -> Result<f64> {
    const CHUNK: usize = 512;
    let dim = val_set.dim();
    let mut total = 0.0;
    let mut offset = 0;
    while offset < val_set.len() {
        let rows = CHUNK.min(val_set.len() - offset);
        let flat = &val_set.rows_flat()[offset * dim..(offset + rows) * dim];
        model.forward_trace_into(flat, rows, false, 0, &mut ws.trace)?;
        let predictions = ws.trace.a.last().expect("output layer");
        for (p, t) in predictions
            .iter()
            .zip(&val_set.targets()[offset..offset + rows])
        {
            total += (p - t).abs();
        }
        offset += rows;
    }
    Ok(total / val_set.len() as f64)
}
