//! Learned adjustment payments: one network per producer, trained jointly on
//! the composite IR + WBB loss over samples from the prior.

pub mod loss;
pub mod mlp;

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adjustment::PriorSupport;
use crate::error::{Error, Result};
use crate::model::Profile;
use crate::optimizer::Solver;

pub use loss::{composite_loss, loss_gradient, loss_terms, LossTerms, SampleSurplus};
pub use mlp::{Activation, Gradients, Mlp};

/// Trained networks plus the bounds used to normalize their inputs.
///
/// Network `i` sees the other producers' capacities, then their cost types,
/// then the valuation types, each scaled to `[0, 1]` by the prior bounds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearnedAdjustment {
    pub n: usize,
    pub m: usize,
    pub dim: usize,
    pub rng_seed: u64,
    pub normalization: PriorSupport,
    pub nets: Vec<Mlp>,
}

impl LearnedAdjustment {
    pub fn input_width(n: usize, m: usize, dim: usize) -> usize {
        (n - 1) * dim + (n - 1) + m
    }

    fn layout(&self, hidden: &[usize]) -> Vec<usize> {
        let mut sizes = vec![Self::input_width(self.n, self.m, self.dim)];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        sizes
    }

    fn empty(support: &PriorSupport, rng_seed: u64) -> Result<Self> {
        support.validate()?;
        if support.n() < 2 {
            return Err(Error::Config("learned adjustments need at least two producers".into()));
        }
        Ok(Self {
            n: support.n(),
            m: support.m(),
            dim: support.dim(),
            rng_seed,
            normalization: support.clone(),
            nets: Vec::new(),
        })
    }

    /// Networks with every parameter zero (all adjustments 0).
    pub fn zeros(support: &PriorSupport, hidden: &[usize]) -> Result<Self> {
        let mut model = Self::empty(support, 0)?;
        let sizes = model.layout(hidden);
        model.nets = (0..model.n).map(|_| Mlp::zeros(&sizes, Activation::Relu)).collect::<Result<_>>()?;
        Ok(model)
    }

    /// Randomly initialized networks, seeded per producer.
    pub fn random(support: &PriorSupport, hidden: &[usize], rng_seed: u64) -> Result<Self> {
        let mut model = Self::empty(support, rng_seed)?;
        let sizes = model.layout(hidden);
        let init_seed = crate::rng::derive(rng_seed, 2);
        model.nets = (0..model.n)
            .map(|i| Mlp::random(&sizes, Activation::Relu, &mut crate::rng::stream(init_seed, i as u64)))
            .collect::<Result<_>>()?;
        Ok(model)
    }

    /// Normalized network input for producer `i`; `others` excludes `i`.
    pub fn input(&self, i: usize, others: &Profile) -> Result<Vec<f64>> {
        if i >= self.n {
            return Err(Error::InvalidInput(format!("producer {i} out of range for {} networks", self.n)));
        }
        if others.n() + 1 != self.n || others.m() != self.m || others.dim() != self.dim {
            return Err(Error::Dimension(format!(
                "adjustment model expects {} other producers and {} consumers of dimension {}, got {}, {}, {}",
                self.n - 1,
                self.m,
                self.dim,
                others.n(),
                others.m(),
                others.dim()
            )));
        }
        let support = &self.normalization;
        let original = |k: usize| if k < i { k } else { k + 1 };
        let mut input = Vec::with_capacity(Self::input_width(self.n, self.m, self.dim));
        for (k, cap) in others.capacities.iter().enumerate() {
            let bounds = &support.capacities[original(k)];
            input.extend(cap.values().iter().zip(bounds).map(|(v, b)| b.normalize(*v)));
        }
        for (k, g) in others.cost_types.iter().enumerate() {
            input.push(support.cost_types[original(k)].normalize(*g));
        }
        for (j, t) in others.valuation_types.iter().enumerate() {
            input.push(support.valuation_types[j].normalize(*t));
        }
        Ok(input)
    }

    /// `h_i(x_-i, gamma_-i, theta)`.
    pub fn evaluate(&self, i: usize, others: &Profile) -> Result<f64> {
        let input = self.input(i, others)?;
        self.nets[i].forward(&input)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let model: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        let width = Self::input_width(model.n, model.m, model.dim);
        if model.nets.len() != model.n || model.nets.iter().any(|n| n.input_width() != width || !n.is_finite()) {
            return Err(Error::Config(format!("checkpoint {} is inconsistent", path.display())));
        }
        Ok(model)
    }
}

/// Parameter update rule.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    /// Gradient descent with heavy-ball momentum.
    Momentum,
    /// Adam with beta1 = 0.9, beta2 = 0.999, eps = 1e-8.
    #[default]
    Adam,
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    /// Fresh prior samples drawn each epoch (`T`).
    pub samples_per_epoch: usize,
    /// Minibatch size; one gradient step per minibatch.
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    /// Step size at epoch `e` is `learning_rate / (1 + lr_decay * e)`.
    pub lr_decay: f64,
    pub optimizer: Optimizer,
    /// Only used by [`Optimizer::Momentum`].
    pub momentum: f64,
    pub hidden: Vec<usize>,
    pub rng_seed: u64,
    /// Stop once the mean loss of the last `patience` epochs is at or below this.
    pub loss_tolerance: f64,
    pub patience: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            samples_per_epoch: 256,
            batch_size: 64,
            epochs: 500,
            learning_rate: 1e-2,
            lr_decay: 0.03,
            optimizer: Optimizer::Adam,
            momentum: 0.9,
            hidden: vec![10, 10, 10],
            rng_seed: 1,
            loss_tolerance: 1e-6,
            patience: 20,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.samples_per_epoch == 0 || self.batch_size == 0 {
            return Err(Error::Config("sample and batch sizes must be at least 1".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        if !(self.lr_decay.is_finite() && self.lr_decay >= 0.0) {
            return Err(Error::Config(format!("lr_decay must be non-negative, got {}", self.lr_decay)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!("momentum must be in [0, 1), got {}", self.momentum)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub epoch: usize,
    pub step: usize,
    pub loss: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainingTrace {
    /// Mean loss of each epoch's batch, measured before that epoch's updates.
    pub epoch_losses: Vec<f64>,
    pub steps: Vec<StepRecord>,
    pub final_loss: f64,
    #[serde(skip)]
    pub wall_clock_secs: f64,
}

impl TrainingTrace {
    pub fn epochs_run(&self) -> usize {
        self.epoch_losses.len()
    }
}

/// Precompute `S*` and all `S*_-i` for each sample, in parallel.
pub fn precompute_surpluses(solver: &Solver, batch: &[Profile]) -> Result<Vec<SampleSurplus>> {
    batch.par_iter().map(|p| SampleSurplus::compute(solver, p)).collect()
}

/// Mean loss over `batch` and, per network, the loss gradient.
pub fn batch_gradients(model: &LearnedAdjustment, batch: &[Profile], surpluses: &[SampleSurplus]) -> Result<(f64, Vec<Gradients>)> {
    let scale = 1.0 / batch.len() as f64;
    let per_sample: Vec<(f64, Vec<Gradients>)> = batch
        .par_iter()
        .zip(surpluses)
        .map(|(profile, surplus)| {
            let mut traces = Vec::with_capacity(model.n);
            let mut h = Vec::with_capacity(model.n);
            for i in 0..model.n {
                let trace = model.nets[i].forward_trace(&model.input(i, &profile.without(i))?)?;
                h.push(trace.output());
                traces.push(trace);
            }
            let loss = loss_terms(surplus, &h).total();
            let dh = loss_gradient(surplus, &h);
            let grads = model
                .nets
                .iter()
                .zip(&traces)
                .zip(&dh)
                .map(|((net, trace), d)| {
                    let mut g = Gradients::zeros_like(net);
                    net.backward(trace, d * scale, &mut g);
                    g
                })
                .collect();
            Ok((loss, grads))
        })
        .collect::<Result<_>>()?;

    // sequential reduction keeps the sum order fixed
    let mut total = 0.0;
    let mut grads: Vec<Gradients> = model.nets.iter().map(Gradients::zeros_like).collect();
    for (loss, g) in per_sample {
        total += loss;
        for (acc, gi) in grads.iter_mut().zip(&g) {
            acc.add_assign(gi);
        }
    }
    Ok((total * scale, grads))
}

/// Mean composite loss of a learned model over a precomputed batch.
pub fn batch_loss(model: &LearnedAdjustment, batch: &[Profile], surpluses: &[SampleSurplus]) -> Result<f64> {
    Ok(batch_gradients(model, batch, surpluses)?.0)
}

/// Train all networks jointly against fresh prior samples each epoch.
pub fn train(model: &mut LearnedAdjustment, config: &TrainingConfig, solver: &Solver) -> Result<TrainingTrace> {
    config.validate()?;
    let started = Instant::now();
    let support = model.normalization.clone();
    let sample_seed = crate::rng::derive(config.rng_seed, 1);
    // first moment (or velocity) and second moment per network
    let mut first: Vec<Vec<f64>> = model.nets.iter().map(|n| vec![0.0; n.parameter_count()]).collect();
    let mut second = first.clone();
    let mut epoch_losses = Vec::new();
    let mut steps = Vec::new();
    let mut final_loss = f64::NAN;
    let mut step_index = 0;

    for epoch in 0..config.epochs {
        let base = (epoch * config.samples_per_epoch) as u64;
        let batch: Vec<Profile> = (0..config.samples_per_epoch as u64)
            .map(|k| support.sample_one(sample_seed, base + k))
            .collect::<Result<_>>()?;
        let surpluses = precompute_surpluses(solver, &batch)?;

        let rate = config.learning_rate / (1.0 + config.lr_decay * epoch as f64);
        let mut epoch_total = 0.0;
        for (chunk, chunk_surplus) in batch.chunks(config.batch_size).zip(surpluses.chunks(config.batch_size)) {
            let (loss, grads) = batch_gradients(model, chunk, chunk_surplus)?;
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, loss });
            }
            epoch_total += loss * chunk.len() as f64;
            steps.push(StepRecord { epoch, step: step_index, loss });
            step_index += 1;

            let t = step_index as i32;
            for (((net, g), m1), m2) in model.nets.iter_mut().zip(&grads).zip(&mut first).zip(&mut second) {
                let params = net.parameters_mut().zip(g.flatten()).zip(m1.iter_mut().zip(m2.iter_mut()));
                match config.optimizer {
                    Optimizer::Momentum => {
                        for ((p, gi), (v, _)) in params {
                            *v = config.momentum * *v - rate * gi;
                            *p += *v;
                        }
                    }
                    Optimizer::Adam => {
                        let c1 = 1.0 - ADAM_BETA1.powi(t);
                        let c2 = 1.0 - ADAM_BETA2.powi(t);
                        for ((p, gi), (m, v)) in params {
                            *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * gi;
                            *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * gi * gi;
                            *p -= rate * (*m / c1) / ((*v / c2).sqrt() + ADAM_EPS);
                        }
                    }
                }
            }
            if model.nets.iter().any(|n| !n.is_finite()) {
                return Err(Error::Diverged { epoch, loss: f64::NAN });
            }
        }
        let epoch_loss = epoch_total / batch.len() as f64;
        epoch_losses.push(epoch_loss);
        final_loss = epoch_loss;
        let window = &epoch_losses[epoch_losses.len().saturating_sub(config.patience.max(1))..];
        if window.len() >= config.patience && window.iter().sum::<f64>() / window.len() as f64 <= config.loss_tolerance {
            break;
        }
    }

    Ok(TrainingTrace {
        epoch_losses,
        steps,
        final_loss,
        wall_clock_secs: started.elapsed().as_secs_f64(),
    })
}
