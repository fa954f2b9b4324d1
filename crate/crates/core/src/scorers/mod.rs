//! The scorer contract and its implementations.
//!
//! A scorer maps an [`Event`] to a finite real logit; the plausibility of
//! the event is the logistic of that logit.

use std::sync::Arc;

use thiserror::Error;

use crate::abstraction::{ConceptEvent, Event};
use crate::lexicon::Hierarchy;
use crate::numeric::logistic;

pub mod external;
pub mod mlp;
pub mod ngram;
mod train;

pub use external::{ExternalError, ExternalScorer};
pub use mlp::{MlpScorer, TrainConfig, TrainReport};
pub use ngram::NGramScorer;

#[derive(Debug, Error)]
pub enum ScoreError {
    #[error("item {index}: {source}")]
    AtIndex {
        index: usize,
        #[source]
        source: Box<ScoreError>,
    },
    #[error("abstraction {event}: {source}")]
    Abstraction {
        event: Event,
        #[source]
        source: Box<ScoreError>,
    },
    #[error(transparent)]
    External(#[from] ExternalError),
    #[error("non-finite logit for {0}")]
    NonFinite(Event),
    #[error("{0}")]
    Failed(String),
}

impl ScoreError {
    pub fn at(index: usize, source: ScoreError) -> ScoreError {
        match source {
            ScoreError::AtIndex { index: inner, source } => ScoreError::AtIndex {
                index: index + inner,
                source,
            },
            other => ScoreError::AtIndex {
                index,
                source: Box::new(other),
            },
        }
    }

    /// Shifts the failing item index by `offset`, for errors raised on a
    /// slice of a larger batch.
    pub fn offset_index(self, offset: usize) -> ScoreError {
        match self {
            ScoreError::AtIndex { index, source } => ScoreError::AtIndex {
                index: index + offset,
                source,
            },
            other => other,
        }
    }

    pub fn cell_index(&self) -> Option<usize> {
        match self {
            ScoreError::AtIndex { index, .. } => Some(*index),
            _ => None,
        }
    }

    /// The underlying error with any index wrapping removed.
    pub fn root(&self) -> &ScoreError {
        match self {
            ScoreError::AtIndex { source, .. } => source.root(),
            other => other,
        }
    }
}

pub trait Scorer: Send + Sync {
    fn name(&self) -> String;

    fn is_deterministic(&self) -> bool {
        true
    }

    fn is_concurrent_safe(&self) -> bool {
        true
    }

    fn logit(&self, event: &Event) -> Result<f64, ScoreError>;

    /// Batch scoring. Errors carry the index of the failing event.
    fn logits(&self, events: &[Event]) -> Result<Vec<f64>, ScoreError> {
        events
            .iter()
            .enumerate()
            .map(|(i, e)| self.logit(e).map_err(|err| ScoreError::at(i, err)))
            .collect()
    }

    /// Scores sense-resolved events. The default renders each cell through
    /// its lemmas and defers to [`Scorer::logits`].
    fn concept_logits(&self, h: &Hierarchy, cells: &[ConceptEvent]) -> Result<Vec<f64>, ScoreError> {
        let events: Vec<Event> = cells.iter().map(|c| c.render(h)).collect();
        self.logits(&events)
    }

    fn plausibility(&self, event: &Event) -> Result<f64, ScoreError> {
        self.logit(event).map(logistic)
    }
}

macro_rules! forward_scorer {
    ($($ty:ty),*) => {$(
        impl<S: Scorer + ?Sized> Scorer for $ty {
            fn name(&self) -> String {
                (**self).name()
            }
            fn is_deterministic(&self) -> bool {
                (**self).is_deterministic()
            }
            fn is_concurrent_safe(&self) -> bool {
                (**self).is_concurrent_safe()
            }
            fn logit(&self, event: &Event) -> Result<f64, ScoreError> {
                (**self).logit(event)
            }
            fn logits(&self, events: &[Event]) -> Result<Vec<f64>, ScoreError> {
                (**self).logits(events)
            }
            fn concept_logits(
                &self,
                h: &Hierarchy,
                cells: &[ConceptEvent],
            ) -> Result<Vec<f64>, ScoreError> {
                (**self).concept_logits(h, cells)
            }
        }
    )*};
}

forward_scorer!(&S, Box<S>, Arc<S>);

/// Returns the same logit for every event.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantScorer {
    value: f64,
}

impl ConstantScorer {
    pub fn new(value: f64) -> Self {
        assert!(value.is_finite(), "constant logit must be finite");
        ConstantScorer { value }
    }
}

impl Scorer for ConstantScorer {
    fn name(&self) -> String {
        format!("constant:{}", self.value)
    }

    fn logit(&self, _event: &Event) -> Result<f64, ScoreError> {
        Ok(self.value)
    }
}

/// Scores from a fixed table of events; events not in the table get the
/// default logit. Mostly useful in tests and for precomputed model output.
#[derive(Debug, Clone, Default)]
pub struct TableScorer {
    table: std::collections::HashMap<Event, f64>,
    default: f64,
}

impl TableScorer {
    pub fn new(default: f64) -> Self {
        TableScorer {
            table: Default::default(),
            default,
        }
    }

    pub fn insert(&mut self, e: Event, logit: f64) {
        self.table.insert(e, logit);
    }
}

impl FromIterator<(Event, f64)> for TableScorer {
    fn from_iter<I: IntoIterator<Item = (Event, f64)>>(iter: I) -> Self {
        TableScorer {
            table: iter.into_iter().collect(),
            default: 0.0,
        }
    }
}

impl Scorer for TableScorer {
    fn name(&self) -> String {
        "table".into()
    }

    fn logit(&self, event: &Event) -> Result<f64, ScoreError> {
        Ok(self.table.get(event).copied().unwrap_or(self.default))
    }
}
