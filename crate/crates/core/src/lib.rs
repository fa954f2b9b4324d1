//! Abstraction-consistency evaluation of event plausibility models.
//!
//! Events are subject-verb-object triples. The subject and object are
//! lifted along a hypernym hierarchy to form a grid of abstractions, each
//! cell scored by a plausibility model, and the grid is checked for
//! concavity and local extrema.

pub mod abstraction;
pub mod aggregator;
pub mod corpus;
pub mod evaluation;
pub mod heatmap;
pub mod lexicon;
pub mod metrics;
pub mod numeric;
pub mod scorers;

pub use abstraction::{abstraction_events, grid_windows, score_grid, AbstractionGrid, Event};
pub use aggregator::{ConceptMaxContext, ConceptMaxScorer, Mode};
pub use corpus::{apply_filters, extract_triples, FilterConfig, TripleCorpus};
pub use evaluation::{evaluate, EvalReport};
pub use lexicon::{filter_hierarchy, load_hierarchy, FilteredHierarchy, Hierarchy, SenseMap, SynsetId};
pub use metrics::{auc, ccd, consistency, ler, Label, LabeledEvent};
pub use scorers::Scorer;
