use alloc::vec::Vec;

use crate::math;
use crate::model::ParamStore;
use crate::tensor::Tensor;

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub steps: u64,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
}

impl Adam {
    pub fn new(store: &ParamStore, learning_rate: f64) -> Self {
        let zeros: Vec<Tensor> = store.tensors().iter().map(|t| Tensor::zeros(t.shape())).collect();
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            steps: 0,
            first: zeros.clone(),
            second: zeros,
        }
    }

    /// Applies one update; `grads` aligns with the store order.
    pub fn update(&mut self, store: &mut ParamStore, grads: &[Tensor]) {
        assert_eq!(grads.len(), self.first.len(), "gradient count");
        self.steps += 1;
        let c1 = 1.0 - math::powi(self.beta1, self.steps);
        let c2 = 1.0 - math::powi(self.beta2, self.steps);
        for (k, param) in store.tensors_mut().iter_mut().enumerate() {
            let (m, v) = (self.first[k].data_mut(), self.second[k].data_mut());
            for (i, (p, g)) in param.data_mut().iter_mut().zip(grads[k].data()).enumerate() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
                *p -= self.learning_rate * (m[i] / c1) / (math::sqrt(v[i] / c2) + self.eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut store = ParamStore::new();
        store.insert("a", Tensor::new(&[2], alloc::vec![1.0, -1.0]).unwrap());
        let mut adam = Adam::new(&store, 0.1);
        adam.update(&mut store, &[Tensor::new(&[2], alloc::vec![3.0, -0.5]).unwrap()]);
        let d = store.get("a").unwrap().data();
        assert!((d[0] - 0.9).abs() < 1e-7 && (d[1] + 0.9).abs() < 1e-6);
    }

    #[test]
    fn minimizes_quadratic() {
        let mut store = ParamStore::new();
        store.insert("x", Tensor::new(&[1], alloc::vec![5.0]).unwrap());
        let mut adam = Adam::new(&store, 0.1);
        for _ in 0..500 {
            let x = store.get("x").unwrap().data()[0];
            adam.update(&mut store, &[Tensor::new(&[1], alloc::vec![2.0 * (x - 2.0)]).unwrap()]);
        }
        assert!((store.get("x").unwrap().data()[0] - 2.0).abs() < 1e-2);
    }
}
