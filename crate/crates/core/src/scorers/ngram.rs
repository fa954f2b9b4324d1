//! Count-based bigram scorer: `P(s, o | v) ~ Count(s,v) * Count(v,o) / Count(v)^2`.

use crate::abstraction::Event;
use crate::corpus::TripleCorpus;
use crate::numeric::logit;

use super::{ScoreError, Scorer};

pub const DEFAULT_EPSILON: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct NGramScorer {
    corpus: TripleCorpus,
    epsilon: f64,
}

impl NGramScorer {
    pub fn new(corpus: TripleCorpus) -> Self {
        Self::with_epsilon(corpus, DEFAULT_EPSILON)
    }

    pub fn with_epsilon(corpus: TripleCorpus, epsilon: f64) -> Self {
        assert!(epsilon > 0.0 && epsilon < 0.5, "epsilon must lie in (0, 0.5)");
        NGramScorer { corpus, epsilon }
    }

    /// Unclamped probability estimate; 0 when the verb is unseen.
    pub fn probability(&self, e: &Event) -> f64 {
        let v = self.corpus.verb_count(&e.verb);
        if v == 0 {
            return 0.0;
        }
        let sv = self.corpus.subject_verb_count(&e.subject, &e.verb) as f64;
        let vo = self.corpus.verb_object_count(&e.verb, &e.object) as f64;
        let v = v as f64;
        (sv * vo) / (v * v)
    }

    pub fn corpus(&self) -> &TripleCorpus {
        &self.corpus
    }
}

/// Logit of the estimate clamped to `[eps, 1 - eps]`.
pub fn ngram_logit(sc: &NGramScorer, e: &Event) -> f64 {
    let p = sc.probability(e).clamp(sc.epsilon, 1.0 - sc.epsilon);
    logit(p)
}

impl Scorer for NGramScorer {
    fn name(&self) -> String {
        "ngram".into()
    }

    fn logit(&self, event: &Event) -> Result<f64, ScoreError> {
        Ok(ngram_logit(self, event))
    }
}
