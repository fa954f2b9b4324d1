//! Pseudo-disambiguation training for [`MlpScorer`]: binary cross-entropy
//! over (attested, perturbed) pairs, Adam with linear learning-rate warmup,
//! and an optional max-over-abstractions aggregate inside the loss.

use std::collections::{BTreeSet, HashMap};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::abstraction::{Abstractions, Event};
use crate::aggregator::ConceptMaxContext;
use crate::corpus::{item_rng, TrainingPair};
use crate::numeric::{logistic, logsumexp, softmax, softplus};

use super::mlp::{Activations, MlpScorer, Vocab};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub warmup_steps: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_epsilon: f64,
    pub dim: usize,
    pub hidden: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            batch_size: 128,
            epochs: 2,
            warmup_steps: 1000,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            adam_epsilon: 1e-8,
            dim: 64,
            hidden: 128,
        }
    }
}

impl TrainConfig {
    /// Schedule used for fine-tuning large pretrained encoders:
    /// learning rate 2e-5 warmed up over 10,000 steps.
    pub fn transformer_schedule() -> Self {
        TrainConfig {
            learning_rate: 2e-5,
            warmup_steps: 10_000,
            ..TrainConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::InvalidConfig(m.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch size must be at least 1");
        }
        if self.dim == 0 || self.hidden == 0 {
            return bad("dimensions must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("Adam decay rates must lie in [0, 1)");
        }
        Ok(())
    }

    /// Learning rate at 1-based optimizer step `step`.
    pub fn learning_rate_at(&self, step: usize) -> f64 {
        if self.warmup_steps == 0 || step >= self.warmup_steps {
            self.learning_rate
        } else {
            self.learning_rate * step as f64 / self.warmup_steps as f64
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum TrainError {
    #[error("no training pairs")]
    EmptyPairs,
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("non-finite loss in epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Mean per-pair loss for each epoch.
    pub epoch_losses: Vec<f64>,
    pub steps: usize,
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(n: usize) -> Self {
        Adam {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64, cfg: &TrainConfig) {
        self.t += 1;
        let c1 = 1.0 - cfg.beta1.powi(self.t);
        let c2 = 1.0 - cfg.beta2.powi(self.t);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = cfg.beta1 * self.m[i] + (1.0 - cfg.beta1) * g;
            self.v[i] = cfg.beta2 * self.v[i] + (1.0 - cfg.beta2) * g * g;
            let mhat = self.m[i] / c1;
            let vhat = self.v[i] / c2;
            params[i] -= lr * mhat / (vhat.sqrt() + cfg.adam_epsilon);
        }
    }
}

/// Forward pass over the cells of one side; returns the aggregated logit.
fn side_forward(model: &MlpScorer, cells: &[[usize; 3]]) -> (f64, Vec<Activations>) {
    let acts: Vec<Activations> = cells.iter().map(|&t| model.forward_tokens(t)).collect();
    let z = if acts.len() == 1 {
        acts[0].logit
    } else {
        logsumexp(&acts.iter().map(|a| a.logit).collect::<Vec<_>>())
    };
    (z, acts)
}

fn side_backward(model: &MlpScorer, acts: &[Activations], dz: f64, grad: &mut [f64]) {
    if acts.len() == 1 {
        model.backward(&acts[0], dz, grad);
        return;
    }
    let weights = softmax(&acts.iter().map(|a| a.logit).collect::<Vec<_>>());
    for (a, w) in acts.iter().zip(weights) {
        model.backward(a, dz * w, grad);
    }
}

/// `-ln f(pos) - ln(1 - f(neg))` where each side's logit is the LSE of its
/// cells. Adds `scale * dL/dparams` into `grad` when given.
fn pair_objective(
    model: &MlpScorer,
    pos: &[[usize; 3]],
    neg: &[[usize; 3]],
    grad: Option<(&mut [f64], f64)>,
) -> f64 {
    let (zp, ap) = side_forward(model, pos);
    let (zn, an) = side_forward(model, neg);
    let loss = softplus(-zp) + softplus(zn);
    if let Some((grad, scale)) = grad {
        side_backward(model, &ap, scale * (logistic(zp) - 1.0), grad);
        side_backward(model, &an, scale * logistic(zn), grad);
    }
    loss
}

/// Loss of a single pair under the plain (unaggregated) scorer.
pub fn pair_loss(sc: &MlpScorer, pair: &TrainingPair) -> f64 {
    pair_objective(sc, &[sc.tokens(&pair.positive)], &[sc.tokens(&pair.negative)], None)
}

/// Analytic vs central-difference gradients of the pair loss.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientCheck {
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
    pub max_relative_error: f64,
}

pub const FD_STEP: f64 = 1e-5;
/// Denominator floor for the relative error. Central differences at
/// [`FD_STEP`] on an O(1) loss carry about 1e-10 of round-off, so smaller
/// gradients are compared on absolute error (1e-4 relative = 1e-10 absolute).
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-6;

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(RELATIVE_ERROR_FLOOR)
}

/// Compares the analytic gradient of the pair loss with central finite
/// differences (step [`FD_STEP`]) for every parameter.
pub fn gradient_check(sc: &MlpScorer, pair: &TrainingPair) -> GradientCheck {
    gradient_check_cells(sc, std::slice::from_ref(&pair.positive), std::slice::from_ref(&pair.negative))
}

/// As [`gradient_check`], with each side aggregated by LSE over several
/// surface events.
pub fn gradient_check_cells(sc: &MlpScorer, pos: &[Event], neg: &[Event]) -> GradientCheck {
    let pos: Vec<[usize; 3]> = pos.iter().map(|e| sc.tokens(e)).collect();
    let neg: Vec<[usize; 3]> = neg.iter().map(|e| sc.tokens(e)).collect();
    let mut analytic = vec![0.0; sc.params().len()];
    pair_objective(sc, &pos, &neg, Some((&mut analytic, 1.0)));
    let mut probe = sc.clone();
    let mut numeric = Vec::with_capacity(analytic.len());
    for i in 0..analytic.len() {
        let orig = probe.params()[i];
        probe.params_mut()[i] = orig + FD_STEP;
        let plus = pair_objective(&probe, &pos, &neg, None);
        probe.params_mut()[i] = orig - FD_STEP;
        let minus = pair_objective(&probe, &pos, &neg, None);
        probe.params_mut()[i] = orig;
        numeric.push((plus - minus) / (2.0 * FD_STEP));
    }
    let max_relative_error = analytic
        .iter()
        .zip(&numeric)
        .map(|(&a, &n)| relative_error(a, n))
        .fold(0.0, f64::max);
    GradientCheck {
        analytic,
        numeric,
        max_relative_error,
    }
}

/// Cached abstraction axes for each distinct training event.
struct AbstractionCache<'a, 'h> {
    ctx: &'a ConceptMaxContext<'h>,
    grids: HashMap<Event, Abstractions>,
}

impl<'a, 'h> AbstractionCache<'a, 'h> {
    fn build(ctx: &'a ConceptMaxContext<'h>, pairs: &[TrainingPair]) -> Self {
        let mut grids = HashMap::new();
        for p in pairs {
            for e in [&p.positive, &p.negative] {
                if !grids.contains_key(e) {
                    grids.insert(e.clone(), ctx.abstractions(e));
                }
            }
        }
        AbstractionCache { ctx, grids }
    }

    fn vocab_words(&self) -> [BTreeSet<String>; 3] {
        let h = self.ctx.hierarchy();
        let mut words: [BTreeSet<String>; 3] = Default::default();
        for abs in self.grids.values() {
            words[0].extend(abs.subject_axis.iter().map(|a| a.render(h)));
            words[1].insert(abs.verb.clone());
            words[2].extend(abs.object_axis.iter().map(|a| a.render(h)));
        }
        words
    }
}

const SAMPLE_STREAM_SALT: u64 = 0x5eed_ab57_0000_0000;

/// Trains an [`MlpScorer`] on `pairs`. With a ConceptMax context, each
/// side's logit is the LSE over the original event and a fresh sample of
/// its abstractions, redrawn every epoch.
pub fn train(
    pairs: &[TrainingPair],
    cfg: &TrainConfig,
    concept_max: Option<&ConceptMaxContext<'_>>,
) -> Result<(MlpScorer, TrainReport), TrainError> {
    cfg.validate()?;
    if pairs.is_empty() {
        return Err(TrainError::EmptyPairs);
    }
    let cache = concept_max.map(|ctx| AbstractionCache::build(ctx, pairs));
    let [s_words, v_words, o_words] = match &cache {
        Some(c) => c.vocab_words(),
        None => {
            let mut w: [BTreeSet<String>; 3] = Default::default();
            for p in pairs {
                for e in [&p.positive, &p.negative] {
                    w[0].insert(e.subject.clone());
                    w[1].insert(e.verb.clone());
                    w[2].insert(e.object.clone());
                }
            }
            w
        }
    };
    let vocab = [Vocab::new(s_words), Vocab::new(v_words), Vocab::new(o_words)];
    let mut init_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = MlpScorer::random(vocab, cfg.dim, cfg.hidden, &mut init_rng);

    // Plain training uses fixed token triples.
    let plain: Vec<([usize; 3], [usize; 3])> = if cache.is_none() {
        pairs
            .iter()
            .map(|p| (model.tokens(&p.positive), model.tokens(&p.negative)))
            .collect()
    } else {
        Vec::new()
    };

    let n = pairs.len();
    let mut adam = Adam::new(model.params().len());
    let mut grad = vec![0.0; model.params().len()];
    let mut order: Vec<usize> = (0..n).collect();
    let mut report = TrainReport {
        epoch_losses: Vec::with_capacity(cfg.epochs),
        steps: 0,
    };
    let mut pos_cells: Vec<[usize; 3]> = Vec::new();
    let mut neg_cells: Vec<[usize; 3]> = Vec::new();

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut item_rng(cfg.seed, u64::MAX - epoch as u64));
        let mut epoch_loss = 0.0;
        for (batch, chunk) in order.chunks(cfg.batch_size).enumerate() {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let scale = 1.0 / chunk.len() as f64;
            let mut batch_loss = 0.0;
            for &i in chunk {
                pos_cells.clear();
                neg_cells.clear();
                match &cache {
                    None => {
                        pos_cells.push(plain[i].0);
                        neg_cells.push(plain[i].1);
                    }
                    Some(c) => {
                        let h = c.ctx.hierarchy();
                        let stream = ((epoch * n + i) as u64) * 2;
                        for (side, e, out) in [
                            (0, &pairs[i].positive, &mut pos_cells),
                            (1, &pairs[i].negative, &mut neg_cells),
                        ] {
                            let mut rng = item_rng(cfg.seed ^ SAMPLE_STREAM_SALT, stream + side);
                            let cells = c.ctx.sample_train_cells(&c.grids[e], &mut rng);
                            out.extend(cells.iter().map(|ce| model.tokens(&ce.render(h))));
                        }
                    }
                }
                batch_loss += pair_objective(&model, &pos_cells, &neg_cells, Some((&mut grad, scale)));
            }
            if !batch_loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(TrainError::NonFiniteLoss { epoch, batch });
            }
            epoch_loss += batch_loss;
            report.steps += 1;
            let lr = cfg.learning_rate_at(report.steps);
            adam.step(model.params_mut(), &grad, lr, cfg);
        }
        report.epoch_losses.push(epoch_loss / n as f64);
    }
    Ok((model, report))
}
