use super::{Matrix, ParamId, ParamStore};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// L2 coefficient added to the gradient before the moment updates.
    pub weight_decay: f64,
}

impl AdamConfig {
    pub fn new(lr: f64, weight_decay: f64) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay }
    }
}

/// Classic Adam over a fixed set of parameters.
#[derive(Clone, Debug)]
pub struct Adam {
    config: AdamConfig,
    params: Vec<ParamId>,
    m: Vec<Matrix>,
    v: Vec<Matrix>,
    t: u64,
}

impl Adam {
    pub fn new(config: AdamConfig, store: &ParamStore, params: Vec<ParamId>) -> Self {
        let zeros = |id: &ParamId| {
            let p = store.value(*id);
            Matrix::zeros(p.rows(), p.cols())
        };
        let m = params.iter().map(zeros).collect();
        let v = params.iter().map(zeros).collect();
        Self { config, params, m, v, t: 0 }
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// One update from the gradients currently in `store`; zeroes those
    /// gradients afterwards.
    pub fn step(&mut self, store: &mut ParamStore) {
        self.t += 1;
        let AdamConfig { lr, beta1, beta2, eps, weight_decay } = self.config;
        let bc1 = 1.0 - beta1.powi(self.t as i32);
        let bc2 = 1.0 - beta2.powi(self.t as i32);
        for (i, &id) in self.params.iter().enumerate() {
            let p = store.get_mut(id);
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            for (k, (w, g)) in p
                .value
                .data_mut()
                .iter_mut()
                .zip(p.grad.data_mut().iter_mut())
                .enumerate()
            {
                let grad = *g + weight_decay * *w;
                m[k] = beta1 * m[k] + (1.0 - beta1) * grad;
                v[k] = beta2 * v[k] + (1.0 - beta2) * grad * grad;
                let m_hat = m[k] / bc1;
                let v_hat = v[k] / bc2;
                *w -= lr * m_hat / (v_hat.sqrt() + eps);
                *g = 0.0;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::ParamGroup;

    fn single(value: f64, grad: f64) -> (ParamStore, ParamId) {
        let mut store = ParamStore::new();
        let id = store.add("p", ParamGroup::Mil, Matrix::filled(1, 1, value));
        store.get_mut(id).grad = Matrix::filled(1, 1, grad);
        (store, id)
    }

    #[test]
    fn first_step_moves_by_lr() {
        let (mut store, id) = single(0.0, 1.0);
        let mut adam = Adam::new(AdamConfig::new(0.1, 0.0), &store, vec![id]);
        adam.step(&mut store);
        // m̂ = 1, v̂ = 1: update is lr / (1 + eps)
        assert!((store.value(id).scalar() + 0.1).abs() < 1e-8);
        assert_eq!(store.grad(id).scalar(), 0.0);
        assert_eq!(adam.steps(), 1);
    }

    #[test]
    fn zero_gradient_no_decay_is_noop() {
        let (mut store, id) = single(1.25, 0.0);
        let mut adam = Adam::new(AdamConfig::new(0.1, 0.0), &store, vec![id]);
        for _ in 0..3 {
            adam.step(&mut store);
        }
        assert_eq!(store.value(id).scalar(), 1.25);
    }

    #[test]
    fn weight_decay_pulls_towards_zero() {
        let (mut store, id) = single(2.0, 0.0);
        let mut adam = Adam::new(AdamConfig::new(0.01, 0.5), &store, vec![id]);
        adam.step(&mut store);
        assert!(store.value(id).scalar() < 2.0);
    }

    #[test]
    fn deterministic() {
        let run = || {
            let (mut store, id) = single(0.3, -0.7);
            let mut adam = Adam::new(AdamConfig::new(0.05, 1e-3), &store, vec![id]);
            for i in 0..5 {
                store.get_mut(id).grad = Matrix::filled(1, 1, (i as f64).sin());
                adam.step(&mut store);
            }
            store.value(id).scalar().to_bits()
        };
        assert_eq!(run(), run());
    }
}
