//! Triple extraction from dependency parses, frequency filtering, and
//! pseudo-disambiguation training pairs.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{self, BufRead, Write};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::abstraction::Event;

/// Counters collected while reading CoNLL-U input.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ExtractDiagnostics {
    pub sentences: usize,
    pub extracted: usize,
    pub malformed_sentences: usize,
    /// Line numbers of the first malformed record of each skipped sentence.
    pub malformed_lines: Vec<usize>,
    pub io_error: Option<String>,
}

#[derive(Debug, Clone)]
struct Token {
    id: usize,
    form: String,
    lemma: String,
    upos: String,
    head: usize,
    deprel: String,
}

/// Streaming s-v-o extractor over CoNLL-U text.
///
/// A sentence yields an event when its root is a verb with an `nsubj` and
/// an `obj` dependent that are both common nouns, and the sentence has no
/// `iobj`. Arguments are the lemmas of the relation heads, so modifiers
/// are dropped ("a hot dog" gives `dog`).
pub struct ConlluTriples<R> {
    lines: io::Lines<R>,
    line_no: usize,
    diagnostics: ExtractDiagnostics,
    done: bool,
}

/// Starts extraction over a CoNLL-U stream.
pub fn extract_triples<R: BufRead>(reader: R) -> ConlluTriples<R> {
    ConlluTriples {
        lines: reader.lines(),
        line_no: 0,
        diagnostics: ExtractDiagnostics::default(),
        done: false,
    }
}

impl<R: BufRead> ConlluTriples<R> {
    pub fn diagnostics(&self) -> &ExtractDiagnostics {
        &self.diagnostics
    }

    pub fn into_diagnostics(self) -> ExtractDiagnostics {
        self.diagnostics
    }

    /// Reads one sentence block. `Ok(None)` at end of input; the inner
    /// result is `Err(line)` for a malformed record.
    fn next_sentence(&mut self) -> Option<Result<Vec<Token>, usize>> {
        let mut tokens = Vec::new();
        let mut malformed: Option<usize> = None;
        let mut seen_any = false;
        loop {
            let line = match self.lines.next() {
                None => break,
                Some(Ok(l)) => l,
                Some(Err(e)) => {
                    self.diagnostics.io_error = Some(e.to_string());
                    self.done = true;
                    break;
                }
            };
            self.line_no += 1;
            let line = line.strip_suffix('\r').unwrap_or(&line);
            if line.trim().is_empty() {
                if seen_any {
                    break;
                }
                continue;
            }
            seen_any = true;
            if line.starts_with('#') || malformed.is_some() {
                continue;
            }
            match parse_token(line) {
                Ok(Some(t)) => tokens.push(t),
                Ok(None) => {}
                Err(()) => malformed = Some(self.line_no),
            }
        }
        if !seen_any {
            return None;
        }
        Some(match malformed {
            Some(line) => Err(line),
            None => Ok(tokens),
        })
    }
}

fn parse_token(line: &str) -> Result<Option<Token>, ()> {
    let fields: Vec<&str> = line.split('\t').collect();
    if fields.len() != 10 {
        return Err(());
    }
    // Multiword ranges and empty nodes carry no basic dependency.
    if fields[0].contains('-') || fields[0].contains('.') {
        return Ok(None);
    }
    let id: usize = fields[0].parse().map_err(|_| ())?;
    let head: usize = fields[6].parse().map_err(|_| ())?;
    if id == 0 {
        return Err(());
    }
    Ok(Some(Token {
        id,
        form: fields[1].to_string(),
        lemma: fields[2].to_string(),
        upos: fields[3].to_string(),
        head,
        deprel: fields[7].to_string(),
    }))
}

fn token_lemma(t: &Token) -> &str {
    if t.lemma.is_empty() || t.lemma == "_" {
        &t.form
    } else {
        &t.lemma
    }
}

fn sentence_event(tokens: &[Token]) -> Option<Event> {
    if tokens
        .iter()
        .any(|t| t.deprel.split(':').next() == Some("iobj"))
    {
        return None;
    }
    let root = tokens.iter().find(|t| t.head == 0 && t.deprel == "root")?;
    if root.upos != "VERB" {
        return None;
    }
    let dependent = |rels: &[&str]| {
        tokens
            .iter()
            .find(|t| t.head == root.id && rels.contains(&t.deprel.as_str()))
    };
    let subj = dependent(&["nsubj"])?;
    let obj = dependent(&["obj", "dobj"])?;
    if subj.upos != "NOUN" || obj.upos != "NOUN" {
        return None;
    }
    Event::new(token_lemma(subj), token_lemma(root), token_lemma(obj)).ok()
}

impl<R: BufRead> Iterator for ConlluTriples<R> {
    type Item = Event;

    fn next(&mut self) -> Option<Event> {
        while !self.done {
            let sentence = self.next_sentence()?;
            self.diagnostics.sentences += 1;
            match sentence {
                Err(line) => {
                    self.diagnostics.malformed_sentences += 1;
                    self.diagnostics.malformed_lines.push(line);
                }
                Ok(tokens) => {
                    if let Some(e) = sentence_event(&tokens) {
                        self.diagnostics.extracted += 1;
                        return Some(e);
                    }
                }
            }
        }
        None
    }
}

/// Thresholds for [`apply_filters`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FilterConfig {
    pub min_triple_count: u64,
    pub min_word_count: u64,
    pub per_triple_cap: u64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            min_triple_count: 2,
            min_word_count: 1000,
            per_triple_cap: 1000,
        }
    }
}

/// Event counts plus the positional and pair marginals derived from them.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TripleCorpus {
    counts: BTreeMap<Event, u64>,
    subjects: BTreeMap<String, u64>,
    verbs: BTreeMap<String, u64>,
    objects: BTreeMap<String, u64>,
    subject_verb: HashMap<(String, String), u64>,
    verb_object: HashMap<(String, String), u64>,
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("corpus line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl TripleCorpus {
    /// Builds a corpus from event counts; zero counts are dropped.
    pub fn from_counts(counts: BTreeMap<Event, u64>) -> TripleCorpus {
        let mut c = TripleCorpus::default();
        for (e, n) in counts {
            if n == 0 {
                continue;
            }
            *c.subjects.entry(e.subject.clone()).or_default() += n;
            *c.verbs.entry(e.verb.clone()).or_default() += n;
            *c.objects.entry(e.object.clone()).or_default() += n;
            *c.subject_verb
                .entry((e.subject.clone(), e.verb.clone()))
                .or_default() += n;
            *c.verb_object
                .entry((e.verb.clone(), e.object.clone()))
                .or_default() += n;
            c.counts.insert(e, n);
        }
        c
    }

    pub fn from_events<I: IntoIterator<Item = Event>>(events: I) -> TripleCorpus {
        let mut counts = BTreeMap::new();
        for e in events {
            *counts.entry(e).or_insert(0u64) += 1;
        }
        TripleCorpus::from_counts(counts)
    }

    pub fn counts(&self) -> &BTreeMap<Event, u64> {
        &self.counts
    }

    pub fn count(&self, e: &Event) -> u64 {
        self.counts.get(e).copied().unwrap_or(0)
    }

    pub fn contains(&self, e: &Event) -> bool {
        self.counts.contains_key(e)
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Number of distinct events.
    pub fn len(&self) -> usize {
        self.counts.len()
    }

    /// Sum of all event counts.
    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }

    pub fn positional(&self, role: Position) -> &BTreeMap<String, u64> {
        match role {
            Position::Subject => &self.subjects,
            Position::Verb => &self.verbs,
            Position::Object => &self.objects,
        }
    }

    pub fn subject_verb_count(&self, s: &str, v: &str) -> u64 {
        self.subject_verb
            .get(&(s.to_string(), v.to_string()))
            .copied()
            .unwrap_or(0)
    }

    pub fn verb_object_count(&self, v: &str, o: &str) -> u64 {
        self.verb_object
            .get(&(v.to_string(), o.to_string()))
            .copied()
            .unwrap_or(0)
    }

    pub fn verb_count(&self, v: &str) -> u64 {
        self.verbs.get(v).copied().unwrap_or(0)
    }

    /// All words in subject or object position.
    pub fn argument_vocab(&self) -> std::collections::BTreeSet<String> {
        self.subjects.keys().chain(self.objects.keys()).cloned().collect()
    }

    /// Writes `subject<TAB>verb<TAB>object<TAB>count` lines, sorted.
    pub fn write_tsv<W: Write>(&self, mut w: W) -> io::Result<()> {
        for (e, n) in &self.counts {
            writeln!(w, "{}\t{}\t{}\t{}", e.subject, e.verb, e.object, n)?;
        }
        Ok(())
    }

    pub fn read_tsv<R: BufRead>(r: R) -> Result<TripleCorpus, CorpusError> {
        let mut counts = BTreeMap::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            let line_no = i + 1;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let [s, v, o, n] = fields.as_slice() else {
                return Err(CorpusError::Parse {
                    line: line_no,
                    message: format!("expected 4 tab-separated fields, found {}", fields.len()),
                });
            };
            let e = Event::new(s, v, o).map_err(|err| CorpusError::Parse {
                line: line_no,
                message: err.to_string(),
            })?;
            let n: u64 = n.trim().parse().map_err(|_| CorpusError::Parse {
                line: line_no,
                message: format!("bad count {n:?}"),
            })?;
            *counts.entry(e).or_insert(0) += n;
        }
        Ok(TripleCorpus::from_counts(counts))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Position {
    Subject,
    Verb,
    Object,
}

fn word_filter_pass(counts: &mut BTreeMap<Event, u64>, min_word_count: u64) -> bool {
    let mut pos: [HashMap<&str, u64>; 3] = Default::default();
    for (e, &n) in counts.iter() {
        *pos[0].entry(&e.subject).or_default() += n;
        *pos[1].entry(&e.verb).or_default() += n;
        *pos[2].entry(&e.object).or_default() += n;
    }
    let drop: Vec<Event> = counts
        .keys()
        .filter(|e| {
            pos[0][e.subject.as_str()] < min_word_count
                || pos[1][e.verb.as_str()] < min_word_count
                || pos[2][e.object.as_str()] < min_word_count
        })
        .cloned()
        .collect();
    for e in &drop {
        counts.remove(e);
    }
    !drop.is_empty()
}

/// Applies the frequency filters in a fixed order: cap each event's count,
/// drop events with a word rarer than `min_word_count` in its position,
/// then drop events seen fewer than `min_triple_count` times. The word and
/// triple filters repeat until nothing changes, so the output is a fixed
/// point of the filter.
pub fn filter_counts(mut counts: BTreeMap<Event, u64>, cfg: FilterConfig) -> TripleCorpus {
    for n in counts.values_mut() {
        *n = (*n).min(cfg.per_triple_cap);
    }
    counts.retain(|_, n| *n > 0);
    loop {
        let words_changed = word_filter_pass(&mut counts, cfg.min_word_count);
        let before = counts.len();
        counts.retain(|_, n| *n >= cfg.min_triple_count);
        if !words_changed && counts.len() == before {
            break;
        }
    }
    TripleCorpus::from_counts(counts)
}

/// Counts a raw event stream and filters it.
pub fn apply_filters<I: IntoIterator<Item = Event>>(raw: I, cfg: FilterConfig) -> TripleCorpus {
    let mut counts = BTreeMap::new();
    for e in raw {
        *counts.entry(e).or_insert(0u64) += 1;
    }
    filter_counts(counts, cfg)
}

/// Which positions of an attested event a negative replaces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Perturbation {
    S,
    O,
    SO,
}

impl Perturbation {
    pub const ALL: [Perturbation; 3] = [Perturbation::S, Perturbation::O, Perturbation::SO];

    pub fn subject(self) -> bool {
        matches!(self, Perturbation::S | Perturbation::SO)
    }

    pub fn object(self) -> bool {
        matches!(self, Perturbation::O | Perturbation::SO)
    }
}

impl fmt::Display for Perturbation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Perturbation::S => "S",
            Perturbation::O => "O",
            Perturbation::SO => "SO",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TrainingPair {
    pub positive: Event,
    pub negative: Event,
    pub form: Perturbation,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SampleError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("could not perturb {event} ({form}) within {draws} draws")]
    UnableToPerturb {
        event: Event,
        form: Perturbation,
        draws: usize,
    },
}

/// Maximum replacement draws per perturbed position.
pub const MAX_PERTURB_DRAWS: usize = 100;

struct Unigram {
    words: Vec<String>,
    dist: WeightedIndex<u64>,
}

impl Unigram {
    fn new(counts: &BTreeMap<String, u64>) -> Option<Unigram> {
        let words: Vec<String> = counts.keys().cloned().collect();
        let dist = WeightedIndex::new(counts.values().copied()).ok()?;
        Some(Unigram { words, dist })
    }

    fn draw_other<R: Rng + ?Sized>(&self, rng: &mut R, original: &str) -> Option<&str> {
        (0..MAX_PERTURB_DRAWS)
            .map(|_| self.words[self.dist.sample(rng)].as_str())
            .find(|w| *w != original)
    }
}

/// Draws replacement arguments in proportion to their positional counts.
pub struct NegativeSampler {
    subjects: Unigram,
    objects: Unigram,
}

impl NegativeSampler {
    pub fn new(corpus: &TripleCorpus) -> Result<NegativeSampler, SampleError> {
        let subjects = Unigram::new(&corpus.subjects).ok_or(SampleError::EmptyCorpus)?;
        let objects = Unigram::new(&corpus.objects).ok_or(SampleError::EmptyCorpus)?;
        Ok(NegativeSampler { subjects, objects })
    }

    /// Picks a perturbation form uniformly, then perturbs.
    pub fn sample<R: Rng + ?Sized>(&self, e: &Event, rng: &mut R) -> Result<TrainingPair, SampleError> {
        let form = Perturbation::ALL[rng.random_range(0..3)];
        self.sample_with_form(e, form, rng)
    }

    pub fn sample_with_form<R: Rng + ?Sized>(
        &self,
        e: &Event,
        form: Perturbation,
        rng: &mut R,
    ) -> Result<TrainingPair, SampleError> {
        let fail = || SampleError::UnableToPerturb {
            event: e.clone(),
            form,
            draws: MAX_PERTURB_DRAWS,
        };
        let mut negative = e.clone();
        if form.subject() {
            negative.subject = self.subjects.draw_other(rng, &e.subject).ok_or_else(fail)?.to_string();
        }
        if form.object() {
            negative.object = self.objects.draw_other(rng, &e.object).ok_or_else(fail)?.to_string();
        }
        Ok(TrainingPair {
            positive: e.clone(),
            negative,
            form,
        })
    }
}

/// RNG for item `index` under `seed`; each index gets its own stream so
/// pairs can be generated in any order or sharded.
pub fn item_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index.wrapping_add(1));
    rng
}

/// Samples one perturbed negative for `e`.
pub fn sample_negative(corpus: &TripleCorpus, e: &Event, seed: u64) -> Result<TrainingPair, SampleError> {
    let sampler = NegativeSampler::new(corpus)?;
    sampler.sample(e, &mut ChaCha8Rng::seed_from_u64(seed))
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TrainingSet {
    pub pairs: Vec<TrainingPair>,
    /// Occurrences skipped because no distinct negative could be drawn.
    pub skipped: usize,
}

/// One training pair per (capped) event occurrence, in a seeded shuffled
/// order.
pub fn build_training_set(corpus: &TripleCorpus, seed: u64) -> TrainingSet {
    let Ok(sampler) = NegativeSampler::new(corpus) else {
        return TrainingSet::default();
    };
    let mut occurrences: Vec<&Event> = corpus
        .counts
        .iter()
        .flat_map(|(e, &n)| std::iter::repeat_n(e, n as usize))
        .collect();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(seed);
    occurrences.shuffle(&mut shuffle_rng);
    let mut set = TrainingSet::default();
    for (k, e) in occurrences.into_iter().enumerate() {
        match sampler.sample(e, &mut item_rng(seed, k as u64)) {
            Ok(p) => set.pairs.push(p),
            Err(_) => set.skipped += 1,
        }
    }
    set
}
