//! Inconsistency metrics over abstraction grids (concavity delta, local
//! extremum rate) and rank-based ROC AUC.
//!
//! Grid metrics take whatever values the grids hold; the evaluation
//! pipeline passes plausibility (post-logistic) grids.

use std::cmp::Ordering;
use std::io::{self, BufRead};

use thiserror::Error;

use crate::abstraction::{grid_windows, AbstractionGrid, Event};

/// Divergence from concavity of one window: how far the middle value sits
/// below the mean of its neighbours, or 0 when it does not.
pub fn concavity_delta(a_prev: f64, a_mid: f64, a_next: f64) -> f64 {
    if 2.0 * a_mid < a_prev + a_next {
        0.5 * (a_prev + a_next) - a_mid
    } else {
        0.0
    }
}

/// Whether the middle value is a strict local maximum or minimum.
pub fn is_local_extremum(a_prev: f64, a_mid: f64, a_next: f64) -> bool {
    a_mid > a_prev.max(a_next) || a_mid < a_prev.min(a_next)
}

/// Per-grid sums underlying the pooled metrics.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct WindowStats {
    pub windows: usize,
    pub delta_sum: f64,
    pub extrema: usize,
}

impl WindowStats {
    pub fn of_grid(g: &AbstractionGrid) -> WindowStats {
        let mut s = WindowStats::default();
        for [a, b, c] in grid_windows(g) {
            s.windows += 1;
            s.delta_sum += concavity_delta(a, b, c);
            if is_local_extremum(a, b, c) {
                s.extrema += 1;
            }
        }
        s
    }

    pub fn ccd(&self) -> f64 {
        if self.windows == 0 {
            0.0
        } else {
            self.delta_sum / self.windows as f64
        }
    }

    pub fn ler(&self) -> f64 {
        if self.windows == 0 {
            0.0
        } else {
            self.extrema as f64 / self.windows as f64
        }
    }

    fn add(&mut self, other: &WindowStats) {
        self.windows += other.windows;
        self.delta_sum += other.delta_sum;
        self.extrema += other.extrema;
    }
}

/// Mean concavity delta over every window of every grid; 0 without windows.
pub fn ccd(grids: &[AbstractionGrid]) -> f64 {
    pooled(grids).ccd()
}

/// Fraction of windows whose middle value is a strict local extremum.
pub fn ler(grids: &[AbstractionGrid]) -> f64 {
    pooled(grids).ler()
}

fn pooled(grids: &[AbstractionGrid]) -> WindowStats {
    let mut total = WindowStats::default();
    for g in grids {
        total.add(&WindowStats::of_grid(g));
    }
    total
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConsistencyReport {
    pub ccd: f64,
    pub ler: f64,
    pub window_count: usize,
    pub extremum_count: usize,
    /// Per-grid statistics, in input order.
    pub per_event: Vec<WindowStats>,
}

/// Pooled CCD and LER with the per-grid breakdown.
pub fn consistency(grids: &[AbstractionGrid]) -> ConsistencyReport {
    let per_event: Vec<WindowStats> = grids.iter().map(WindowStats::of_grid).collect();
    let mut total = WindowStats::default();
    for s in &per_event {
        total.add(s);
    }
    ConsistencyReport {
        ccd: total.ccd(),
        ler: total.ler(),
        window_count: total.windows,
        extremum_count: total.extrema,
        per_event,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Plausible,
    Implausible,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledEvent {
    pub event: Event,
    pub label: Label,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AucError {
    #[error("AUC undefined: {plausible} plausible and {implausible} implausible examples")]
    SingleClass { plausible: usize, implausible: usize },
    #[error("non-finite score at index {0}")]
    NonFinite(usize),
}

/// Rank-based ROC AUC: the probability that a random plausible example
/// outscores a random implausible one, ties counting one half. Uses
/// mid-ranks, O(N log N).
pub fn auc_scores(scored: &[(Label, f64)]) -> Result<f64, AucError> {
    if let Some(i) = scored.iter().position(|(_, s)| !s.is_finite()) {
        return Err(AucError::NonFinite(i));
    }
    let n_pos = scored.iter().filter(|(l, _)| *l == Label::Plausible).count();
    let n_neg = scored.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(AucError::SingleClass {
            plausible: n_pos,
            implausible: n_neg,
        });
    }
    let mut order: Vec<usize> = (0..scored.len()).collect();
    order.sort_by(|&a, &b| scored[a].1.partial_cmp(&scored[b].1).unwrap_or(Ordering::Equal));
    // Sum of 2 * mid-rank over plausible examples, kept integral.
    let mut twice_rank_sum: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && scored[order[j]].1 == scored[order[i]].1 {
            j += 1;
        }
        // ranks i+1 ..= j share mid-rank (i + 1 + j) / 2
        let twice_mid = (i + 1 + j) as u128;
        let pos_in_tie = order[i..j]
            .iter()
            .filter(|&&k| scored[k].0 == Label::Plausible)
            .count() as u128;
        twice_rank_sum += twice_mid * pos_in_tie;
        i = j;
    }
    let (p, n) = (n_pos as u128, n_neg as u128);
    // 2U = 2R - p(p+1)
    let twice_u = twice_rank_sum - p * (p + 1);
    Ok(twice_u as f64 / (2 * p * n) as f64)
}

pub fn auc(scored: &[(LabeledEvent, f64)]) -> Result<f64, AucError> {
    let flat: Vec<(Label, f64)> = scored.iter().map(|(le, s)| (le.label, *s)).collect();
    auc_scores(&flat)
}

#[derive(Debug, Error)]
pub enum EvalFileError {
    #[error("evaluation file line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Reads `subject<TAB>verb<TAB>object<TAB>label` lines, label 1 or 0.
pub fn read_labeled_events<R: BufRead>(r: R) -> Result<Vec<LabeledEvent>, EvalFileError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let line_no = i + 1;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let [s, v, o, label] = fields.as_slice() else {
            return Err(EvalFileError::Parse {
                line: line_no,
                message: format!("expected 4 tab-separated fields, found {}", fields.len()),
            });
        };
        let event = Event::new(s, v, o).map_err(|e| EvalFileError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let label = match label.trim() {
            "1" => Label::Plausible,
            "0" => Label::Implausible,
            other => {
                return Err(EvalFileError::Parse {
                    line: line_no,
                    message: format!("label must be 1 or 0, found {other:?}"),
                })
            }
        };
        out.push(LabeledEvent { event, label });
    }
    Ok(out)
}
