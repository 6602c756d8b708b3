use alloc::vec::Vec;

use super::{Graph, Tensor, Var};
use crate::error::Result;

/// `|a - b| / max(|a|, |b|, 1e-8)`
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

/// Largest relative error between reverse-mode gradients of the scalar
/// function `f` and central differences with step `eps`, over every element
/// of every input.
pub fn gradcheck<F>(f: F, inputs: &[Tensor], eps: f64) -> Result<f64>
where
    F: for<'g> Fn(&'g Graph, &[Var<'g>]) -> Result<Var<'g>>,
{
    Ok(gradcheck_inputs(f, inputs, eps)?.into_iter().fold(0.0, f64::max))
}

/// Like [`gradcheck`], reporting the worst relative error of each input separately.
pub fn gradcheck_inputs<F>(f: F, inputs: &[Tensor], eps: f64) -> Result<Vec<f64>>
where
    F: for<'g> Fn(&'g Graph, &[Var<'g>]) -> Result<Var<'g>>,
{
    let analytic: Vec<Tensor> = {
        let g = Graph::new();
        let vars: Vec<Var<'_>> = inputs.iter().map(|t| g.param(t.clone())).collect();
        let loss = f(&g, &vars)?;
        let grads = g.backward(loss)?;
        vars.iter().map(|v| grads.get(*v)).collect()
    };
    let eval = |inputs: &[Tensor]| -> Result<f64> {
        let g = Graph::new();
        let vars: Vec<Var<'_>> = inputs.iter().map(|t| g.constant(t.clone())).collect();
        Ok(f(&g, &vars)?.item())
    };
    let mut worst = alloc::vec![0.0f64; inputs.len()];
    let mut probe = inputs.to_vec();
    for (k, a) in analytic.iter().enumerate() {
        for e in 0..inputs[k].len() {
            let x = inputs[k].data()[e];
            probe[k].data_mut()[e] = x + eps;
            let up = eval(&probe)?;
            probe[k].data_mut()[e] = x - eps;
            let down = eval(&probe)?;
            probe[k].data_mut()[e] = x;
            let numeric = (up - down) / (2.0 * eps);
            worst[k] = worst[k].max(relative_error(a.data()[e], numeric));
        }
    }
    Ok(worst)
}
