//! Scores a labeled evaluation set: AUC of the event logits plus
//! consistency metrics over each event's abstraction grid.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::abstraction::{abstraction_events, score_grid, AbstractionGrid, GridError};
use crate::lexicon::{FilteredHierarchy, SenseMap};
use crate::metrics::{auc, consistency, ConsistencyReport, Label, LabeledEvent, WindowStats};
use crate::scorers::Scorer;

#[derive(Debug, Clone)]
pub struct EventResult {
    pub labeled: LabeledEvent,
    pub logit: f64,
    /// Plausibility grid (logistic of the per-cell logits).
    pub grid: AbstractionGrid,
    pub stats: WindowStats,
}

#[derive(Debug, Clone)]
pub struct EvalReport {
    pub scorer: String,
    pub seed: u64,
    pub auc: Option<f64>,
    pub consistency: ConsistencyReport,
    pub n_plausible: usize,
    pub n_implausible: usize,
    pub events: Vec<EventResult>,
}

fn score_one<S: Scorer + ?Sized>(
    scorer: &S,
    view: &FilteredHierarchy<'_>,
    sm: &SenseMap,
    le: &LabeledEvent,
) -> Result<(f64, AbstractionGrid), GridError> {
    let h = view.hierarchy();
    let abs = abstraction_events(view, sm, &le.event);
    let grid = score_grid(scorer, h, &abs)?;
    let logit = scorer.logit(&le.event).map_err(|source| GridError::Batch {
        event: le.event.clone(),
        source,
    })?;
    Ok((logit, grid.to_probabilities()))
}

/// Evaluates `scorer` on `events`. Grids use `view` for abstraction
/// enumeration; CCD and LER are pooled over all windows of all grids.
pub fn evaluate<S: Scorer + ?Sized>(
    scorer: &S,
    view: &FilteredHierarchy<'_>,
    sm: &SenseMap,
    events: &[LabeledEvent],
    seed: u64,
) -> Result<EvalReport, GridError> {
    let scored: Vec<(f64, AbstractionGrid)> = if scorer.is_concurrent_safe() {
        events
            .par_iter()
            .map(|le| score_one(scorer, view, sm, le))
            .collect::<Result<_, _>>()?
    } else {
        events
            .iter()
            .map(|le| score_one(scorer, view, sm, le))
            .collect::<Result<_, _>>()?
    };
    let grids: Vec<AbstractionGrid> = scored.iter().map(|(_, g)| g.clone()).collect();
    let consistency = consistency(&grids);
    let pairs: Vec<(LabeledEvent, f64)> = events.iter().cloned().zip(scored.iter().map(|(l, _)| *l)).collect();
    let auc = auc(&pairs).ok();
    let n_plausible = events.iter().filter(|e| e.label == Label::Plausible).count();
    let results = events
        .iter()
        .zip(scored)
        .zip(&consistency.per_event)
        .map(|((le, (logit, grid)), stats)| EventResult {
            labeled: le.clone(),
            logit,
            grid,
            stats: *stats,
        })
        .collect();
    Ok(EvalReport {
        scorer: scorer.name(),
        seed,
        auc,
        n_plausible,
        n_implausible: events.len() - n_plausible,
        consistency,
        events: results,
    })
}

fn fmt_auc(auc: Option<f64>) -> String {
    auc.map_or_else(|| "undefined".to_string(), |a| format!("{a:.6}"))
}

impl EvalReport {
    /// `key=value` lines for machine consumption.
    pub fn key_values(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "seed={}", self.seed);
        let _ = writeln!(s, "scorer={}", self.scorer);
        let _ = writeln!(s, "auc={}", fmt_auc(self.auc));
        let _ = writeln!(s, "ccd={:.6}", self.consistency.ccd);
        let _ = writeln!(s, "ler={:.6}", self.consistency.ler);
        let _ = writeln!(s, "window_count={}", self.consistency.window_count);
        let _ = writeln!(s, "n_plausible={}", self.n_plausible);
        let _ = writeln!(s, "n_implausible={}", self.n_implausible);
        s
    }

    pub fn table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# seed: {}", self.seed);
        let _ = writeln!(s, "scorer         {}", self.scorer);
        let _ = writeln!(s, "events         {} ({} plausible, {} implausible)", self.events.len(), self.n_plausible, self.n_implausible);
        let _ = writeln!(s, "AUC            {}", fmt_auc(self.auc));
        let _ = writeln!(s, "CCD            {:.6}", self.consistency.ccd);
        let _ = writeln!(s, "LER            {:.6}", self.consistency.ler);
        let _ = writeln!(s, "windows        {}", self.consistency.window_count);
        let _ = writeln!(s, "extrema        {}", self.consistency.extremum_count);
        s
    }

    /// Per-event breakdown as tab-separated rows.
    pub fn per_event_tsv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "#seed\t{}", self.seed);
        let _ = writeln!(s, "subject\tverb\tobject\tlabel\tlogit\trows\tcols\twindows\tccd\tler");
        for r in &self.events {
            let e = &r.labeled.event;
            let shape = r.grid.shape();
            let _ = writeln!(
                s,
                "{}\t{}\t{}\t{}\t{:.6}\t{}\t{}\t{}\t{:.6}\t{:.6}",
                e.subject,
                e.verb,
                e.object,
                u8::from(r.labeled.label == Label::Plausible),
                r.logit,
                shape.rows,
                shape.cols,
                r.stats.windows,
                r.stats.ccd(),
                r.stats.ler()
            );
        }
        s
    }
}
