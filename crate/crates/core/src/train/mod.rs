//! Losses, optimizer and the one-step training loop with rollout noise.

mod adam;
mod losses;

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use adam::Adam;
pub use losses::{
    loss_body_collision, loss_garment_collision, loss_mse, loss_normal, normals_var, patch_centers_var, total_loss,
    LossBreakdown, LossConfig, DEFAULT_MARGIN_RATIO,
};

use crate::error::{Error, Result};
use crate::model::{forward_step, predict, GarmentSetup, ModelParams, ParamVars, StepInput};
use crate::sequence::Sequence;
use crate::tensor::{Graph, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Upper bound of gradient-free prediction steps taken before the trained step.
    pub rollout_noise_steps: usize,
    pub learning_rate: f64,
    /// Frames whose gradients are averaged into one optimizer step.
    pub batch_size: usize,
    pub epochs: usize,
    /// Stop after this many optimizer steps regardless of epochs.
    pub max_steps: Option<usize>,
    pub seed: u64,
    pub loss: LossConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            rollout_noise_steps: 3,
            learning_rate: 1e-4,
            batch_size: 1,
            epochs: 10,
            max_steps: None,
            seed: 0,
            loss: LossConfig::default(),
        }
    }
}

/// Model, optimizer state and sampling stream.
pub struct Trainer {
    pub params: ModelParams,
    pub adam: Adam,
    pub config: TrainConfig,
    rng: ChaCha8Rng,
}

/// One optimizer step's record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub step: usize,
    pub epoch: usize,
    /// First sample of the batch.
    pub sequence: usize,
    pub frame: usize,
    /// Summed over the batch.
    pub noise_steps: usize,
    /// Batch mean.
    pub loss: LossBreakdown,
}

/// Sequence prepared for training.
pub struct TrainingSequence<'a> {
    pub sequence: &'a Sequence,
    pub setup: GarmentSetup,
    pub track: Vec<Vec<crate::geometry::Vec3>>,
    pub margin: f64,
}

impl<'a> TrainingSequence<'a> {
    pub fn new(sequence: &'a Sequence, params: &ModelParams, loss: &LossConfig) -> Result<Self> {
        let setup = GarmentSetup::new(sequence, &params.config)?;
        let track = setup.garment_track(sequence);
        Ok(Self {
            sequence,
            margin: loss.margin_for(sequence.cloth_size),
            setup,
            track,
        })
    }
}

impl Trainer {
    pub fn new(params: ModelParams, config: TrainConfig) -> Self {
        Self {
            adam: Adam::new(&params.store, config.learning_rate),
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            params,
            config,
        }
    }

    /// Loss and gradients of predicting frame `t + 1`, after replacing
    /// frames `t - noise + 1 ..= t` of the input history by the model's own
    /// gradient-free predictions.
    pub fn loss_and_gradients(
        &mut self,
        data: &TrainingSequence<'_>,
        t: usize,
        noise: usize,
    ) -> Result<(LossBreakdown, Vec<Tensor>)> {
        let seq = data.sequence;
        let h = self.params.config.history;
        let start = t - noise;
        let mut track = data.track[..=start].to_vec();
        for k in start..t {
            let input = StepInput::from_track(&track, seq, k, h)?;
            let next = predict(&self.params, &data.setup, &input)?;
            track.push(next);
        }
        let graph = Graph::new();
        let vars = ParamVars::new(&graph, &self.params.store, true);
        let input = StepInput::from_track(&track, seq, t, h)?;
        let out = forward_step(&graph, &vars, &self.params.config, &data.setup, &input)?;
        let next = &seq.frames[t + 1];
        let (loss, breakdown) = total_loss(
            out.positions,
            &data.track[t + 1],
            &next.body_positions,
            &next.body_normals,
            &data.setup,
            &self.config.loss,
            data.margin,
        )?;
        let grads = graph.backward(loss)?;
        Ok((breakdown, vars.vars().iter().map(|v| grads.get(*v)).collect()))
    }

    /// Mean one-step loss over every frame of the given sequences, from
    /// ground-truth inputs and without updating the parameters.
    pub fn evaluate(&self, data: &[TrainingSequence<'_>]) -> Result<LossBreakdown> {
        let mut sum = LossBreakdown::default();
        let mut n = 0usize;
        for d in data {
            let seq = d.sequence;
            for t in 0..seq.len().saturating_sub(1) {
                let graph = Graph::new();
                let vars = ParamVars::new(&graph, &self.params.store, false);
                let input = StepInput::from_track(&d.track, seq, t, self.params.config.history)?;
                let out = forward_step(&graph, &vars, &self.params.config, &d.setup, &input)?;
                let next = &seq.frames[t + 1];
                let (_, l) = total_loss(
                    out.positions,
                    &d.track[t + 1],
                    &next.body_positions,
                    &next.body_normals,
                    &d.setup,
                    &self.config.loss,
                    d.margin,
                )?;
                sum.mse += l.mse;
                sum.normal += l.normal;
                sum.body_collision += l.body_collision;
                sum.garment_collision += l.garment_collision;
                sum.total += l.total;
                n += 1;
            }
        }
        let k = 1.0 / n.max(1) as f64;
        Ok(LossBreakdown {
            mse: sum.mse * k,
            normal: sum.normal * k,
            body_collision: sum.body_collision * k,
            garment_collision: sum.garment_collision * k,
            total: sum.total * k,
        })
    }

    /// Samples the noise length, then takes one optimizer step on frame `t`.
    pub fn train_step(&mut self, data: &TrainingSequence<'_>, t: usize) -> Result<(usize, LossBreakdown)> {
        let (noise, loss) = self.train_batch(core::slice::from_ref(data), &[(0, t)])?;
        Ok((noise, loss))
    }

    /// One optimizer step on the mean gradient of `(sequence, frame)`
    /// samples. Returns the summed noise length and the mean loss.
    pub fn train_batch(&mut self, data: &[TrainingSequence<'_>], batch: &[(usize, usize)]) -> Result<(usize, LossBreakdown)> {
        let h = self.params.config.history;
        let mut total: Option<Vec<Tensor>> = None;
        let mut mean = LossBreakdown::default();
        let mut noise_sum = 0;
        let k = 1.0 / batch.len().max(1) as f64;
        for &(s, t) in batch {
            let cap = self.config.rollout_noise_steps.min(t.saturating_sub(h));
            let noise = self.rng.gen_range(0..=cap);
            noise_sum += noise;
            let (loss, grads) = self.loss_and_gradients(&data[s], t, noise)?;
            if grads.iter().any(|g| g.data().iter().any(|v| !v.is_finite())) {
                return Err(Error::NonFinite("gradient".into()));
            }
            mean.mse += k * loss.mse;
            mean.normal += k * loss.normal;
            mean.body_collision += k * loss.body_collision;
            mean.garment_collision += k * loss.garment_collision;
            mean.total += k * loss.total;
            match &mut total {
                None => total = Some(grads),
                Some(acc) => {
                    for (a, g) in acc.iter_mut().zip(&grads) {
                        for (x, y) in a.data_mut().iter_mut().zip(g.data()) {
                            *x += y;
                        }
                    }
                }
            }
        }
        let Some(mut grads) = total else {
            return Ok((0, mean));
        };
        if batch.len() > 1 {
            for g in &mut grads {
                for x in g.data_mut() {
                    *x *= k;
                }
            }
        }
        self.adam.update(&mut self.params.store, &grads);
        Ok((noise_sum, mean))
    }

    /// Runs the configured epochs over every `(sequence, frame)` pair in a
    /// shuffled order, `batch_size` pairs per step, reporting each step to
    /// `log`.
    pub fn train(&mut self, data: &[TrainingSequence<'_>], mut log: impl FnMut(&StepLog)) -> Result<Vec<StepLog>> {
        let mut samples = Vec::new();
        for (s, d) in data.iter().enumerate() {
            for t in 0..d.sequence.len().saturating_sub(1) {
                samples.push((s, t));
            }
        }
        let mut history = Vec::new();
        let limit = self.config.max_steps.unwrap_or(usize::MAX);
        let batch = self.config.batch_size.max(1);
        'outer: for epoch in 0..self.config.epochs {
            samples.shuffle(&mut self.rng);
            for chunk in samples.chunks(batch) {
                if history.len() >= limit {
                    break 'outer;
                }
                let (noise_steps, loss) = self.train_batch(data, chunk)?;
                let entry = StepLog {
                    step: history.len(),
                    epoch,
                    sequence: chunk[0].0,
                    frame: chunk[0].1,
                    noise_steps,
                    loss,
                };
                log(&entry);
                history.push(entry);
            }
        }
        Ok(history)
    }
}

/// Adds seeded Gaussian noise of scale `sigma` to every parameter.
pub fn jitter_params(params: &mut ModelParams, sigma: f64, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for t in params.store.tensors_mut() {
        for v in t.data_mut() {
            *v += sigma * crate::math::gaussian(&mut rng);
        }
    }
}

/// Worst relative gradient error of every parameter tensor for the one-step
/// loss of frame `t`, against central differences with step `eps`.
pub fn gradcheck_one_step(
    params: &ModelParams,
    seq: &Sequence,
    t: usize,
    loss: &LossConfig,
    eps: f64,
) -> Result<Vec<(alloc::string::String, f64)>> {
    let data = TrainingSequence::new(seq, params, loss)?;
    let store = &params.store;
    let errors = crate::tensor::gradcheck_inputs(
        |graph, leaves| {
            let vars = ParamVars::from_vars(leaves.to_vec(), store);
            let input = StepInput::from_track(&data.track, seq, t, params.config.history)?;
            let out = forward_step(graph, &vars, &params.config, &data.setup, &input)?;
            let next = &seq.frames[t + 1];
            Ok(total_loss(
                out.positions,
                &data.track[t + 1],
                &next.body_positions,
                &next.body_normals,
                &data.setup,
                loss,
                data.margin,
            )?
            .0)
        },
        store.tensors(),
        eps,
    )?;
    Ok(store.names().iter().cloned().zip(errors).collect())
}

#[cfg(test)]
mod tests;
