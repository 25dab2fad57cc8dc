use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use super::store::ParamStore;

/// Adam optimizer state: per-parameter first and second moments plus the
/// shared step counter and hyperparameters.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AdamState {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step: u64,
    moments: BTreeMap<String, (Matrix, Matrix)>,
}

impl AdamState {
    pub fn new(store: &ParamStore, learning_rate: f64) -> Self {
        let moments = store
            .iter()
            .map(|(name, p)| {
                let shape = (
                    Matrix::zeros(p.value.rows(), p.value.cols()),
                    Matrix::zeros(p.value.rows(), p.value.cols()),
                );
                (name.to_string(), shape)
            })
            .collect();
        AdamState {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            moments,
        }
    }

    pub(crate) fn from_parts(
        learning_rate: f64,
        beta1: f64,
        beta2: f64,
        epsilon: f64,
        step: u64,
        moments: BTreeMap<String, (Matrix, Matrix)>,
    ) -> Self {
        AdamState {
            learning_rate,
            beta1,
            beta2,
            epsilon,
            step,
            moments,
        }
    }

    pub(crate) fn moments(&self) -> &BTreeMap<String, (Matrix, Matrix)> {
        &self.moments
    }
}

/// One Adam update with bias correction over every parameter in the store.
///
/// Gradients are read but not modified; the caller zeroes them between
/// batches. Panics on a shape mismatch between a parameter and its moment
/// buffers, which can only arise from store corruption.
pub fn adam_step(store: &mut ParamStore, state: &mut AdamState) {
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);

    for (name, p) in store.iter_mut() {
        let (m, v) = state
            .moments
            .get_mut(name)
            .unwrap_or_else(|| panic!("no adam moments for parameter {name:?}"));
        assert!(
            m.same_shape(&p.value) && v.same_shape(&p.value),
            "adam moment shape mismatch for {name:?}"
        );
        let g = p.grad.values();
        let mv = m.values_mut();
        let vv = v.values_mut();
        let pv = p.value.values_mut();
        for i in 0..g.len() {
            mv[i] = state.beta1 * mv[i] + (1.0 - state.beta1) * g[i];
            vv[i] = state.beta2 * vv[i] + (1.0 - state.beta2) * g[i] * g[i];
            let m_hat = mv[i] / bc1;
            let v_hat = vv[i] / bc2;
            pv[i] -= state.learning_rate * m_hat / (v_hat.sqrt() + state.epsilon);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_param(values: Vec<f64>) -> ParamStore {
        let mut s = ParamStore::new();
        let n = values.len();
        s.insert("w", Matrix::from_values(1, n, values), false);
        s
    }

    #[test]
    fn first_step_moves_by_roughly_lr() {
        let mut s = single_param(vec![1.0]);
        let mut adam = AdamState::new(&s, 0.0025);
        s.params_set_grad("w", &[0.5]);
        adam_step(&mut s, &mut adam);
        let moved = 1.0 - s.get("w").values()[0];
        // m_hat/(sqrt(v_hat)+eps) ~= sign(g) on the first step
        assert!((moved - 0.0025).abs() < 1e-9, "moved {moved}");
        assert_eq!(adam.step, 1);
    }

    #[test]
    fn zero_gradient_is_identity() {
        let mut s = single_param(vec![0.7, -0.3]);
        let mut adam = AdamState::new(&s, 0.01);
        for _ in 0..5 {
            adam_step(&mut s, &mut adam);
        }
        assert_eq!(s.get("w").values(), &[0.7, -0.3]);
        assert_eq!(adam.step, 5);
    }

    // Hand-iterated oracle: the scalar Adam recurrence applied entry by
    // entry, written independently of the Matrix-based implementation.
    #[test]
    fn three_step_trajectory_matches_hand_iteration() {
        let init = [0.5, -1.0, 2.0, 0.0];
        let grads = [
            [0.1, -0.2, 0.3, 0.4],
            [-0.1, 0.0, 0.25, -0.4],
            [0.05, 0.05, -0.3, 0.2],
        ];
        let (lr, b1, b2, eps) = (0.002, 0.9, 0.999, 1e-8);

        let mut expected = init;
        let mut m = [0.0f64; 4];
        let mut v = [0.0f64; 4];
        for (step, g) in grads.iter().enumerate() {
            let t = (step + 1) as i32;
            for i in 0..4 {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                let mh = m[i] / (1.0 - b1.powi(t));
                let vh = v[i] / (1.0 - b2.powi(t));
                expected[i] -= lr * mh / (vh.sqrt() + eps);
            }
        }

        let mut s = ParamStore::new();
        s.insert("w", Matrix::from_values(2, 2, init.to_vec()), false);
        let mut adam = AdamState::new(&s, lr);
        for g in &grads {
            s.params_set_grad("w", g);
            adam_step(&mut s, &mut adam);
        }
        for (got, want) in s.get("w").values().iter().zip(&expected) {
            assert!((got - want).abs() < 1e-15, "got {got}, want {want}");
        }
    }

    impl ParamStore {
        fn params_set_grad(&mut self, name: &str, grad: &[f64]) {
            for (n, p) in self.iter_mut() {
                if n == name {
                    p.grad.values_mut().copy_from_slice(grad);
                }
            }
        }
    }
}
