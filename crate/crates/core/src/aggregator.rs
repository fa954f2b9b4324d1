//! Max-over-abstractions aggregation of any base scorer.
//!
//! At inference the logit of an event is the hard maximum of the base
//! logits over every cell of its abstraction grid. During training it is a
//! log-sum-exp over the original cell plus a few sampled abstractions.
//! Aggregation happens on logits; the logistic is applied afterwards so the
//! result is always a valid probability.

use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::abstraction::{
    abstraction_events, concept_abstractions, score_grid, Abstractions, ConceptEvent, Event, GridError,
};
use crate::corpus::item_rng;
use crate::lexicon::{FilteredHierarchy, Hierarchy, SenseMap};
use crate::numeric::{fnv1a, logsumexp};
use crate::scorers::{ScoreError, Scorer};

pub const DEFAULT_TRAIN_SAMPLES: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Inference,
}

/// Hierarchy view, sense map and sampling settings shared by the scorer
/// wrapper and the trainer.
#[derive(Debug, Clone)]
pub struct ConceptMaxContext<'h> {
    view: FilteredHierarchy<'h>,
    senses: &'h SenseMap,
    pub train_sample_count: usize,
    pub seed: u64,
}

impl<'h> ConceptMaxContext<'h> {
    pub fn new(view: FilteredHierarchy<'h>, senses: &'h SenseMap) -> Self {
        ConceptMaxContext {
            view,
            senses,
            train_sample_count: DEFAULT_TRAIN_SAMPLES,
            seed: 0,
        }
    }

    pub fn with_train_samples(mut self, k: usize) -> Self {
        self.train_sample_count = k;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn view(&self) -> &FilteredHierarchy<'h> {
        &self.view
    }

    pub fn hierarchy(&self) -> &'h Hierarchy {
        self.view.hierarchy()
    }

    pub fn senses(&self) -> &'h SenseMap {
        self.senses
    }

    pub fn abstractions(&self, e: &Event) -> Abstractions {
        abstraction_events(&self.view, self.senses, e)
    }

    pub fn resolve(&self, e: &Event) -> ConceptEvent {
        ConceptEvent::resolve(self.hierarchy(), self.senses, e)
    }

    /// The original cell followed by up to `train_sample_count` other cells
    /// drawn uniformly without replacement.
    pub fn sample_train_cells<R: Rng + ?Sized>(&self, abs: &Abstractions, rng: &mut R) -> Vec<ConceptEvent> {
        let shape = abs.shape();
        let original = shape.len() - 1;
        let k = self.train_sample_count.min(original);
        let mut out = Vec::with_capacity(k + 1);
        out.push(abs.original());
        // Row-major index `original` is the last cell, so the candidates are
        // exactly 0..original.
        for i in sample(rng, original, k).into_iter() {
            out.push(abs.cell(i / shape.cols, i % shape.cols));
        }
        out
    }

    /// Deterministic RNG for training-mode sampling of `e`.
    pub fn event_rng(&self, e: &Event) -> ChaCha8Rng {
        item_rng(self.seed, fnv1a(e.to_string().as_bytes()))
    }
}

pub struct ConceptMaxScorer<'h, S> {
    base: S,
    ctx: ConceptMaxContext<'h>,
    mode: Mode,
}

impl<'h, S: Scorer> ConceptMaxScorer<'h, S> {
    pub fn new(base: S, ctx: ConceptMaxContext<'h>, mode: Mode) -> Self {
        ConceptMaxScorer { base, ctx, mode }
    }

    pub fn inference(base: S, ctx: ConceptMaxContext<'h>) -> Self {
        Self::new(base, ctx, Mode::Inference)
    }

    pub fn base(&self) -> &S {
        &self.base
    }

    pub fn context(&self) -> &ConceptMaxContext<'h> {
        &self.ctx
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    /// Hard maximum of base logits over the whole abstraction grid of `e`.
    pub fn inference_logit(&self, e: &Event) -> Result<f64, GridError> {
        let abs = self.ctx.abstractions(e);
        let grid = score_grid(&self.base, self.ctx.hierarchy(), &abs)?;
        Ok(grid.values().iter().copied().fold(f64::NEG_INFINITY, f64::max))
    }

    /// Log-sum-exp of base logits over the original cell and a sample of
    /// its abstractions.
    pub fn train_logit(&self, e: &Event) -> Result<f64, GridError> {
        let abs = self.ctx.abstractions(e);
        let cells = self.ctx.sample_train_cells(&abs, &mut self.ctx.event_rng(e));
        let h = self.ctx.hierarchy();
        let logits = self.base.concept_logits(h, &cells).map_err(|err| match err.cell_index() {
            Some(i) => GridError::Cell {
                row: abs.subject_axis.iter().position(|a| *a == cells[i].subject).unwrap_or(0),
                col: abs.object_axis.iter().position(|a| *a == cells[i].object).unwrap_or(0),
                event: cells[i].render(h),
                source: err,
            },
            None => GridError::Batch {
                event: e.clone(),
                source: err,
            },
        })?;
        Ok(logsumexp(&logits))
    }
}

impl<S: Scorer> Scorer for ConceptMaxScorer<'_, S> {
    fn name(&self) -> String {
        format!("conceptmax({})", self.base.name())
    }

    fn is_deterministic(&self) -> bool {
        self.base.is_deterministic()
    }

    fn is_concurrent_safe(&self) -> bool {
        self.base.is_concurrent_safe()
    }

    fn logit(&self, event: &Event) -> Result<f64, ScoreError> {
        let ce = self.ctx.resolve(event);
        let h = self.ctx.hierarchy();
        Ok(self.concept_logits(h, &[ce])?[0])
    }

    /// Aggregates each cell over its own abstraction set. Sub-cells shared
    /// between cells are scored once.
    fn concept_logits(&self, _h: &Hierarchy, cells: &[ConceptEvent]) -> Result<Vec<f64>, ScoreError> {
        let h = self.ctx.hierarchy();
        let mut unique: BTreeMap<ConceptEvent, usize> = BTreeMap::new();
        let mut members: Vec<Vec<ConceptEvent>> = Vec::with_capacity(cells.len());
        for cell in cells {
            let abs = concept_abstractions(&self.ctx.view, cell);
            let subs = match self.mode {
                Mode::Inference => abs.cells(),
                Mode::Train => {
                    let e = cell.render(h);
                    self.ctx.sample_train_cells(&abs, &mut self.ctx.event_rng(&e))
                }
            };
            for s in &subs {
                let next = unique.len();
                unique.entry(s.clone()).or_insert(next);
            }
            members.push(subs);
        }
        let mut order: Vec<(&ConceptEvent, usize)> = unique.iter().map(|(c, &i)| (c, i)).collect();
        order.sort_by_key(|&(_, i)| i);
        let batch: Vec<ConceptEvent> = order.into_iter().map(|(c, _)| c.clone()).collect();
        let logits = self.base.concept_logits(h, &batch).map_err(|err| match err.cell_index() {
            Some(i) => {
                let failing = &batch[i];
                let owner = members.iter().position(|m| m.contains(failing)).unwrap_or(0);
                ScoreError::at(
                    owner,
                    ScoreError::Abstraction {
                        event: failing.render(h),
                        source: Box::new(err),
                    },
                )
            }
            None => err,
        })?;
        Ok(members
            .iter()
            .map(|subs| {
                let vals: Vec<f64> = subs.iter().map(|s| logits[unique[s]]).collect();
                match self.mode {
                    Mode::Inference => vals.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                    Mode::Train => logsumexp(&vals),
                }
            })
            .collect())
    }
}
