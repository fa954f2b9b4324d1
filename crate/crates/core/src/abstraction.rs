//! Events, their conceptual abstractions, and grids of per-abstraction
//! scores.
//!
//! A grid is indexed `[subject position][object position]`. Position 0 on
//! each axis is the most abstract enumerable synset (root side); the last
//! row and column hold the original argument, so the bottom-right cell is
//! the original event.

use std::fmt;
use std::io::{self, BufRead, Write};

use rayon::prelude::*;
use thiserror::Error;

use crate::lexicon::{resolve_sense, FilteredHierarchy, Hierarchy, Role, SenseMap, SynsetId};
use crate::numeric::logistic;
use crate::scorers::{ScoreError, Scorer};

/// Surface subject-verb-object triple of lower-cased lemmas.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Event {
    pub subject: String,
    pub verb: String,
    pub object: String,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EventError {
    #[error("empty {0} in event")]
    Empty(&'static str),
    #[error("{0} contains whitespace: {1:?}")]
    Whitespace(&'static str, String),
}

impl Event {
    pub fn new(subject: &str, verb: &str, object: &str) -> Result<Event, EventError> {
        fn clean(field: &'static str, w: &str) -> Result<String, EventError> {
            let w = w.trim();
            if w.is_empty() {
                return Err(EventError::Empty(field));
            }
            if w.chars().any(char::is_whitespace) {
                return Err(EventError::Whitespace(field, w.to_string()));
            }
            Ok(w.to_lowercase())
        }
        Ok(Event {
            subject: clean("subject", subject)?,
            verb: clean("verb", verb)?,
            object: clean("object", object)?,
        })
    }

    pub fn word(&self, role: Role) -> &str {
        match role {
            Role::Subject => &self.subject,
            Role::Object => &self.object,
        }
    }
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}-{}", self.subject, self.verb, self.object)
    }
}

/// An event argument after sense resolution.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Argument {
    Concept(SynsetId),
    /// Word with no synset in the hierarchy; never abstracted.
    Word(String),
}

impl Argument {
    pub fn synset(&self) -> Option<&SynsetId> {
        match self {
            Argument::Concept(id) => Some(id),
            Argument::Word(_) => None,
        }
    }

    /// Surface form: the synset's lemma, or the word itself.
    pub fn render(&self, h: &Hierarchy) -> String {
        match self {
            Argument::Concept(id) => h
                .lemma(id)
                .map(str::to_lowercase)
                .unwrap_or_else(|| id.as_str().to_string()),
            Argument::Word(w) => w.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ConceptEvent {
    pub subject: Argument,
    pub verb: String,
    pub object: Argument,
}

impl ConceptEvent {
    /// Resolves both arguments of `e` through the sense map.
    pub fn resolve(h: &Hierarchy, sm: &SenseMap, e: &Event) -> ConceptEvent {
        let arg = |role| match resolve_sense(sm, h, e.word(role), role) {
            Some(id) => Argument::Concept(id.clone()),
            None => Argument::Word(e.word(role).to_string()),
        };
        ConceptEvent {
            subject: arg(Role::Subject),
            verb: e.verb.clone(),
            object: arg(Role::Object),
        }
    }

    /// Substitutes synset lemmas to get a surface event for scoring.
    pub fn render(&self, h: &Hierarchy) -> Event {
        Event {
            subject: self.subject.render(h),
            verb: self.verb.clone(),
            object: self.object.render(h),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridShape {
    pub rows: usize,
    pub cols: usize,
}

impl GridShape {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// The abstraction axes of one event.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Abstractions {
    pub event: Event,
    pub verb: String,
    /// Enumerable subject chain, root side first.
    pub subject_axis: Vec<Argument>,
    /// Enumerable object chain, root side first.
    pub object_axis: Vec<Argument>,
}

impl Abstractions {
    pub fn shape(&self) -> GridShape {
        GridShape {
            rows: self.subject_axis.len(),
            cols: self.object_axis.len(),
        }
    }

    pub fn cell(&self, row: usize, col: usize) -> ConceptEvent {
        ConceptEvent {
            subject: self.subject_axis[row].clone(),
            verb: self.verb.clone(),
            object: self.object_axis[col].clone(),
        }
    }

    /// All cells in row-major order.
    pub fn cells(&self) -> Vec<ConceptEvent> {
        let shape = self.shape();
        (0..shape.rows)
            .flat_map(|r| (0..shape.cols).map(move |c| (r, c)))
            .map(|(r, c)| self.cell(r, c))
            .collect()
    }

    /// The cell corresponding to the sense-resolved original event.
    pub fn original(&self) -> ConceptEvent {
        let s = self.shape();
        self.cell(s.rows - 1, s.cols - 1)
    }
}

fn axis(view: &FilteredHierarchy<'_>, arg: Argument) -> Vec<Argument> {
    match &arg {
        Argument::Concept(id) => match view.enumerable_chain(id) {
            Ok(chain) => chain.ids.into_iter().map(Argument::Concept).collect(),
            Err(_) => vec![arg],
        },
        Argument::Word(_) => vec![arg],
    }
}

/// Enumerates every (subject abstraction, object abstraction) pair of `e`
/// over the filtered view. Arguments without a synset get a length-1 axis.
pub fn abstraction_events(view: &FilteredHierarchy<'_>, sm: &SenseMap, e: &Event) -> Abstractions {
    let resolved = ConceptEvent::resolve(view.hierarchy(), sm, e);
    Abstractions {
        event: e.clone(),
        verb: e.verb.clone(),
        subject_axis: axis(view, resolved.subject),
        object_axis: axis(view, resolved.object),
    }
}

/// Abstractions of an already-resolved event.
pub fn concept_abstractions(view: &FilteredHierarchy<'_>, ce: &ConceptEvent) -> Abstractions {
    let h = view.hierarchy();
    Abstractions {
        event: ce.render(h),
        verb: ce.verb.clone(),
        subject_axis: axis(view, ce.subject.clone()),
        object_axis: axis(view, ce.object.clone()),
    }
}

/// Matrix of per-abstraction values with axis labels.
#[derive(Debug, Clone, PartialEq)]
pub struct AbstractionGrid {
    pub verb: String,
    pub subject_labels: Vec<String>,
    pub object_labels: Vec<String>,
    values: Vec<f64>,
}

#[derive(Debug, Error)]
pub enum GridError {
    #[error("scoring cell ({row}, {col}) {event} failed: {source}")]
    Cell {
        row: usize,
        col: usize,
        event: Event,
        #[source]
        source: ScoreError,
    },
    #[error("scoring grid for {event} failed: {source}")]
    Batch {
        event: Event,
        #[source]
        source: ScoreError,
    },
    #[error("grid value at ({row}, {col}) is not finite")]
    NonFinite { row: usize, col: usize },
    #[error("grid has {got} values, expected {rows}x{cols}")]
    Shape { rows: usize, cols: usize, got: usize },
    #[error("grid file line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl AbstractionGrid {
    pub fn new(
        verb: impl Into<String>,
        subject_labels: Vec<String>,
        object_labels: Vec<String>,
        values: Vec<f64>,
    ) -> Result<Self, GridError> {
        let (rows, cols) = (subject_labels.len(), object_labels.len());
        if values.len() != rows * cols || rows == 0 || cols == 0 {
            return Err(GridError::Shape {
                rows,
                cols,
                got: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(GridError::NonFinite {
                row: i / cols,
                col: i % cols,
            });
        }
        Ok(AbstractionGrid {
            verb: verb.into(),
            subject_labels,
            object_labels,
            values,
        })
    }

    /// Unlabelled grid from row vectors; handy for metric computations.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, GridError> {
        let cols = rows.first().map_or(0, Vec::len);
        let values: Vec<f64> = rows.iter().flatten().copied().collect();
        AbstractionGrid::new(
            "",
            (0..rows.len()).map(|i| format!("s{i}")).collect(),
            (0..cols).map(|j| format!("o{j}")).collect(),
            values,
        )
    }

    pub fn shape(&self) -> GridShape {
        GridShape {
            rows: self.subject_labels.len(),
            cols: self.object_labels.len(),
        }
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.object_labels.len() + col]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Value of the original (least abstract) event.
    pub fn original(&self) -> f64 {
        *self.values.last().expect("grids are non-empty")
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> AbstractionGrid {
        AbstractionGrid {
            verb: self.verb.clone(),
            subject_labels: self.subject_labels.clone(),
            object_labels: self.object_labels.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Logit grid to plausibility grid.
    pub fn to_probabilities(&self) -> AbstractionGrid {
        self.map(logistic)
    }

    /// Writes the tab-separated grid export: optional `#` header lines, a
    /// column header row (verb, then object labels), then one row per
    /// subject abstraction.
    pub fn write_tsv<W: Write>(&self, mut w: W, header: &[(&str, String)]) -> io::Result<()> {
        for (k, v) in header {
            writeln!(w, "#{k}\t{v}")?;
        }
        write!(w, "{}", self.verb)?;
        for label in &self.object_labels {
            write!(w, "\t{label}")?;
        }
        writeln!(w)?;
        let cols = self.object_labels.len();
        for (r, label) in self.subject_labels.iter().enumerate() {
            write!(w, "{label}")?;
            for v in &self.values[r * cols..(r + 1) * cols] {
                write!(w, "\t{v:.6}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn read_tsv<R: BufRead>(r: R) -> Result<AbstractionGrid, GridError> {
        let mut header: Option<(String, Vec<String>)> = None;
        let mut subject_labels = Vec::new();
        let mut values = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            let line_no = i + 1;
            if line.starts_with('#') || line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            match &header {
                None => {
                    if fields.len() < 2 {
                        return Err(GridError::Parse {
                            line: line_no,
                            message: "header row needs at least one column label".into(),
                        });
                    }
                    header = Some((
                        fields[0].to_string(),
                        fields[1..].iter().map(|s| s.to_string()).collect(),
                    ));
                }
                Some((_, cols)) => {
                    if fields.len() != cols.len() + 1 {
                        return Err(GridError::Parse {
                            line: line_no,
                            message: format!(
                                "expected {} fields, found {}",
                                cols.len() + 1,
                                fields.len()
                            ),
                        });
                    }
                    subject_labels.push(fields[0].to_string());
                    for f in &fields[1..] {
                        let v: f64 = f.trim().parse().map_err(|_| GridError::Parse {
                            line: line_no,
                            message: format!("not a number: {f:?}"),
                        })?;
                        if !v.is_finite() {
                            return Err(GridError::Parse {
                                line: line_no,
                                message: format!("non-finite value {f:?}"),
                            });
                        }
                        values.push(v);
                    }
                }
            }
        }
        let Some((verb, object_labels)) = header else {
            return Err(GridError::Parse {
                line: 0,
                message: "empty grid file".into(),
            });
        };
        if subject_labels.is_empty() {
            return Err(GridError::Parse {
                line: 0,
                message: "grid has no rows".into(),
            });
        }
        AbstractionGrid::new(verb, subject_labels, object_labels, values)
    }
}

/// Scores every abstraction cell and assembles the grid. Cells are scored
/// in parallel when the scorer allows concurrent use; the result order is
/// fixed either way.
pub fn score_grid<S: Scorer + ?Sized>(
    scorer: &S,
    h: &Hierarchy,
    abs: &Abstractions,
) -> Result<AbstractionGrid, GridError> {
    let shape = abs.shape();
    let cells = abs.cells();
    let values = if scorer.is_concurrent_safe() && cells.len() > 64 {
        cells
            .par_chunks(16)
            .enumerate()
            .map(|(k, chunk)| {
                scorer
                    .concept_logits(h, chunk)
                    .map_err(|e| e.offset_index(k * 16))
            })
            .collect::<Result<Vec<_>, _>>()
            .map(|v| v.into_iter().flatten().collect::<Vec<f64>>())
    } else {
        scorer.concept_logits(h, &cells)
    };
    let values = values.map_err(|e| match e.cell_index() {
        Some(i) => GridError::Cell {
            row: i / shape.cols,
            col: i % shape.cols,
            event: cells[i].render(h),
            source: e,
        },
        None => GridError::Batch {
            event: abs.event.clone(),
            source: e,
        },
    })?;
    let label = |a: &Argument| a.render(h);
    AbstractionGrid::new(
        abs.verb.clone(),
        abs.subject_axis.iter().map(label).collect(),
        abs.object_axis.iter().map(label).collect(),
        values,
    )
}

/// Every contiguous length-3 window along the subject axis (object fixed)
/// and then along the object axis (subject fixed).
pub fn grid_windows(g: &AbstractionGrid) -> Vec<[f64; 3]> {
    let GridShape { rows, cols } = g.shape();
    let mut out = Vec::with_capacity(cols * rows.saturating_sub(2) + rows * cols.saturating_sub(2));
    for c in 0..cols {
        for r in 2..rows {
            out.push([g.get(r - 2, c), g.get(r - 1, c), g.get(r, c)]);
        }
    }
    for r in 0..rows {
        for c in 2..cols {
            out.push([g.get(r, c - 2), g.get(r, c - 1), g.get(r, c)]);
        }
    }
    out
}
