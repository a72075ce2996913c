//! The seven selectable first-order optimizers with their framework-default
//! learning rates: sgd 0.01, adam/nadam/adamax 0.001 (beta1 0.9, beta2
//! 0.999), rmsprop 0.001 (rho 0.9), adagrad 0.01, adadelta 1.0 (rho 0.95).
//! Epsilon is 1e-7 throughout.

use serde::{Deserialize, Serialize};

pub const EPSILON: f64 = 1e-7;
const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const RMSPROP_RHO: f64 = 0.9;
const ADADELTA_RHO: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
    Nadam,
    Rmsprop,
    Adagrad,
    Adadelta,
    Adamax,
}

impl OptimizerKind {
    /// Decode order of the hyperparameter search space.
    pub const ALL: [OptimizerKind; 7] = [
        OptimizerKind::Sgd,
        OptimizerKind::Adam,
        OptimizerKind::Nadam,
        OptimizerKind::Rmsprop,
        OptimizerKind::Adagrad,
        OptimizerKind::Adadelta,
        OptimizerKind::Adamax,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Adam => "adam",
            OptimizerKind::Nadam => "nadam",
            OptimizerKind::Rmsprop => "rmsprop",
            OptimizerKind::Adagrad => "adagrad",
            OptimizerKind::Adadelta => "adadelta",
            OptimizerKind::Adamax => "adamax",
        }
    }

    pub fn default_learning_rate(self) -> f64 {
        match self {
            OptimizerKind::Sgd => 0.01,
            OptimizerKind::Adam | OptimizerKind::Nadam | OptimizerKind::Adamax => 0.001,
            OptimizerKind::Rmsprop => 0.001,
            OptimizerKind::Adagrad => 0.01,
            OptimizerKind::Adadelta => 1.0,
        }
    }
}

impl std::fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.name())
    }
}

/// Moment/accumulator state for one parameter tensor.
#[derive(Debug, Clone, Default)]
pub struct SlotState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl SlotState {
    pub fn new(len: usize) -> SlotState {
        SlotState {
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }
}

/// Optimizer over a fixed set of parameter tensors (one slot per tensor).
/// The step counter is shared by all slots.
#[derive(Debug, Clone)]
pub struct Optimizer {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    slots: Vec<SlotState>,
    step: u64,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, learning_rate: f64, slot_lens: &[usize]) -> Optimizer {
        Optimizer {
            kind,
            learning_rate,
            slots: slot_lens.iter().map(|&n| SlotState::new(n)).collect(),
            step: 0,
        }
    }

    /// Applies one update across all slots; `params[i]` must match the
    /// length slot `i` was created with.
    pub fn apply(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) {
        assert_eq!(params.len(), self.slots.len());
        assert_eq!(grads.len(), self.slots.len());
        self.step += 1;
        for ((slot, p), g) in self.slots.iter_mut().zip(params).zip(grads) {
            step_slot(self.kind, self.learning_rate, slot, p, g, self.step);
        }
    }
}

/// One in-place update of a parameter tensor; `step_index` starts at 1.
pub fn step_slot(
    kind: OptimizerKind,
    lr: f64,
    state: &mut SlotState,
    params: &mut [f64],
    grads: &[f64],
    step_index: u64,
) {
    assert_eq!(params.len(), grads.len());
    assert_eq!(params.len(), state.m.len());
    let t = step_index as i32;
    match kind {
        OptimizerKind::Sgd => {
            for (p, &g) in params.iter_mut().zip(grads) {
                *p -= lr * g;
            }
        }
        OptimizerKind::Adam => {
            let bc1 = 1.0 - BETA1.powi(t);
            let bc2 = 1.0 - BETA2.powi(t);
            for ((p, &g), (m, v)) in params
                .iter_mut()
                .zip(grads)
                .zip(state.m.iter_mut().zip(state.v.iter_mut()))
            {
                *m = BETA1 * *m + (1.0 - BETA1) * g;
                *v = BETA2 * *v + (1.0 - BETA2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *p -= lr * m_hat / (v_hat.sqrt() + EPSILON);
            }
        }
        OptimizerKind::Nadam => {
            // Nesterov-accelerated Adam with constant momentum (no schedule).
            let bc1_next = 1.0 - BETA1.powi(t + 1);
            let bc1 = 1.0 - BETA1.powi(t);
            let bc2 = 1.0 - BETA2.powi(t);
            for ((p, &g), (m, v)) in params
                .iter_mut()
                .zip(grads)
                .zip(state.m.iter_mut().zip(state.v.iter_mut()))
            {
                *m = BETA1 * *m + (1.0 - BETA1) * g;
                *v = BETA2 * *v + (1.0 - BETA2) * g * g;
                let m_hat = BETA1 * *m / bc1_next + (1.0 - BETA1) * g / bc1;
                let v_hat = *v / bc2;
                *p -= lr * m_hat / (v_hat.sqrt() + EPSILON);
            }
        }
        OptimizerKind::Rmsprop => {
            for ((p, &g), v) in params.iter_mut().zip(grads).zip(state.v.iter_mut()) {
                *v = RMSPROP_RHO * *v + (1.0 - RMSPROP_RHO) * g * g;
                *p -= lr * g / (v.sqrt() + EPSILON);
            }
        }
        OptimizerKind::Adagrad => {
            for ((p, &g), v) in params.iter_mut().zip(grads).zip(state.v.iter_mut()) {
                *v += g * g;
                *p -= lr * g / (*v + EPSILON).sqrt();
            }
        }
        OptimizerKind::Adadelta => {
            // m accumulates squared updates, v accumulates squared grads.
            for ((p, &g), (m, v)) in params
                .iter_mut()
                .zip(grads)
                .zip(state.m.iter_mut().zip(state.v.iter_mut()))
            {
                *v = ADADELTA_RHO * *v + (1.0 - ADADELTA_RHO) * g * g;
                let delta = -((*m + EPSILON).sqrt() / (*v + EPSILON).sqrt()) * g;
                *m = ADADELTA_RHO * *m + (1.0 - ADADELTA_RHO) * delta * delta;
                *p += lr * delta;
            }
        }
        OptimizerKind::Adamax => {
            let bc1 = 1.0 - BETA1.powi(t);
            for ((p, &g), (m, u)) in params
                .iter_mut()
                .zip(grads)
                .zip(state.m.iter_mut().zip(state.v.iter_mut()))
            {
                *m = BETA1 * *m + (1.0 - BETA1) * g;
                *u = (BETA2 * *u).max(g.abs());
                *p -= (lr / bc1) * *m / (*u + EPSILON);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_step(kind: OptimizerKind, lr: f64, p0: f64, g: f64) -> f64 {
        let mut state = SlotState::new(1);
        let mut p = [p0];
        step_slot(kind, lr, &mut state, &mut p, &[g], 1);
        p[0]
    }

    #[test]
    fn sgd_hand_step() {
        assert!((one_step(OptimizerKind::Sgd, 0.1, 1.0, 0.5) - 0.95).abs() < 1e-15);
    }

    #[test]
    fn adam_first_step_closed_form() {
        // m_hat = g, v_hat = g^2, so delta = -lr * g / (|g| + eps).
        let g: f64 = 0.2;
        let lr = 0.001;
        let expected = -lr * g / (g.abs() + EPSILON);
        let p = one_step(OptimizerKind::Adam, lr, 0.0, g);
        assert!((p - expected).abs() < 1e-10, "{p} vs {expected}");
        assert!((p - (-0.000999)).abs() < 1e-6);
    }

    #[test]
    fn nadam_first_step_closed_form() {
        let g = 0.2;
        let lr = 0.001;
        let m = (1.0 - BETA1) * g;
        let v = (1.0 - BETA2) * g * g;
        let m_hat = BETA1 * m / (1.0 - BETA1.powi(2)) + (1.0 - BETA1) * g / (1.0 - BETA1);
        let v_hat = v / (1.0 - BETA2);
        let expected = -lr * m_hat / (v_hat.sqrt() + EPSILON);
        let p = one_step(OptimizerKind::Nadam, lr, 0.0, g);
        assert!((p - expected).abs() < 1e-10);
    }

    #[test]
    fn rmsprop_first_step_closed_form() {
        let g = 0.2;
        let lr = 0.001;
        let v = (1.0 - RMSPROP_RHO) * g * g;
        let expected = -lr * g / (v.sqrt() + EPSILON);
        let p = one_step(OptimizerKind::Rmsprop, lr, 0.0, g);
        assert!((p - expected).abs() < 1e-10);
    }

    #[test]
    fn adagrad_two_unit_gradients() {
        let mut state = SlotState::new(1);
        let mut p = [0.0];
        step_slot(OptimizerKind::Adagrad, 0.01, &mut state, &mut p, &[1.0], 1);
        let after_first = p[0];
        step_slot(OptimizerKind::Adagrad, 0.01, &mut state, &mut p, &[1.0], 2);
        let second_delta = p[0] - after_first;
        let expected = -0.01 / (2.0 + EPSILON).sqrt();
        assert!((second_delta - expected).abs() < 1e-10);
        assert!((second_delta - (-0.007071)).abs() < 1e-6);
    }

    #[test]
    fn adadelta_first_step_closed_form() {
        let g = 0.2;
        let v = (1.0 - ADADELTA_RHO) * g * g;
        let expected = -(EPSILON.sqrt() / (v + EPSILON).sqrt()) * g;
        let p = one_step(OptimizerKind::Adadelta, 1.0, 0.0, g);
        assert!((p - expected).abs() < 1e-10);
    }

    #[test]
    fn adamax_first_step_closed_form() {
        let g = 0.2;
        let lr = 0.001;
        let m = (1.0 - BETA1) * g;
        let u = g.abs();
        let expected = -(lr / (1.0 - BETA1)) * m / (u + EPSILON);
        let p = one_step(OptimizerKind::Adamax, lr, 0.0, g);
        assert!((p - expected).abs() < 1e-10);
    }

    #[test]
    fn optimizer_steps_all_slots_and_counts() {
        let mut opt = Optimizer::new(OptimizerKind::Sgd, 0.5, &[2, 1]);
        let mut a = [1.0, 2.0];
        let mut b = [3.0];
        opt.apply(&mut [&mut a, &mut b], &[&[1.0, 1.0], &[2.0]]);
        assert_eq!(a, [0.5, 1.5]);
        assert_eq!(b, [2.0]);
        assert_eq!(opt.step, 1);
    }
}
