use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use proptest::sample::Index;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use abx::abstraction::{abstraction_events, grid_windows, score_grid, AbstractionGrid, Event};
use abx::aggregator::{ConceptMaxContext, ConceptMaxScorer};
use abx::corpus::{
    apply_filters, build_training_set, filter_counts, FilterConfig, Perturbation, Position, TrainingPair, TripleCorpus,
};
use abx::lexicon::{filter_hierarchy, Hierarchy, SenseMap, SynsetId};
use abx::metrics::{auc_scores, ccd, concavity_delta, ler, Label};
use abx::numeric::{fnv1a, logistic, logsumexp};
use abx::scorers::mlp::{train, Vocab};
use abx::scorers::ngram::ngram_logit;
use abx::scorers::{MlpScorer, NGramScorer, ScoreError, Scorer, TrainConfig};

// ------------------------------------------------------------ hierarchies

/// Edge-list lines for a random DAG rooted at `n0`; node i > 0 draws its
/// parents from nodes before it.
fn dag_lines(parents: &[Vec<Index>]) -> Vec<String> {
    let mut lines = vec!["n0\tw0\t".to_string()];
    for (k, ps) in parents.iter().enumerate() {
        let i = k + 1;
        let set: BTreeSet<usize> = ps.iter().map(|ix| ix.index(i)).collect();
        let ps: Vec<String> = set.iter().map(|p| format!("n{p}")).collect();
        lines.push(format!("n{i}\tw{i}\t{}", ps.join(",")));
    }
    lines
}

fn dag_strategy() -> impl Strategy<Value = Vec<Vec<Index>>> {
    prop::collection::vec(prop::collection::vec(any::<Index>(), 1..4), 0..14)
}

fn edge_text(lines: &[String]) -> String {
    lines.iter().map(|l| format!("{l}\n")).collect()
}

/// Every root-to-`id` path, by walking parent edges.
fn all_paths(h: &Hierarchy, id: &SynsetId) -> Vec<Vec<String>> {
    let s = h.get(id).unwrap();
    if s.parents.is_empty() {
        return vec![vec![id.as_str().to_string()]];
    }
    let mut out = Vec::new();
    for p in &s.parents {
        for mut path in all_paths(h, p) {
            path.push(id.as_str().to_string());
            out.push(path);
        }
    }
    out
}

fn chain_strings(ids: &[SynsetId]) -> Vec<String> {
    ids.iter().map(|i| i.as_str().to_string()).collect()
}

proptest! {
    #[test]
    fn depth_is_one_plus_min_parent_depth(parents in dag_strategy()) {
        let h = Hierarchy::from_edge_list(&edge_text(&dag_lines(&parents))).unwrap();
        for s in h.synsets() {
            let want = s.parents.iter().map(|p| h.depth(p).unwrap() + 1).min().unwrap_or(1);
            prop_assert_eq!(s.depth, want);
        }
    }

    #[test]
    fn shortest_chain_matches_path_enumeration(parents in dag_strategy()) {
        let h = Hierarchy::from_edge_list(&edge_text(&dag_lines(&parents))).unwrap();
        for s in h.synsets() {
            let paths = all_paths(&h, &s.id);
            let min_len = paths.iter().map(Vec::len).min().unwrap();
            let best = paths.into_iter().filter(|p| p.len() == min_len).min().unwrap();
            let chain = h.shortest_chain(&s.id).unwrap();
            prop_assert_eq!(chain.len(), s.depth);
            prop_assert_eq!(chain_strings(&chain.ids), best);
        }
    }

    #[test]
    fn load_is_order_insensitive(parents in dag_strategy(), seed in any::<u64>()) {
        let lines = dag_lines(&parents);
        let mut shuffled = lines.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let a = Hierarchy::from_edge_list(&edge_text(&lines)).unwrap();
        let b = Hierarchy::from_edge_list(&edge_text(&shuffled)).unwrap();
        prop_assert_eq!(&a, &b);
        for s in a.synsets() {
            prop_assert_eq!(a.shortest_chain(&s.id).unwrap(), b.shortest_chain(&s.id).unwrap());
        }
    }

    #[test]
    fn filtering_preserves_chain_order(
        parents in dag_strategy(),
        min_depth in 1usize..6,
        keep in prop::collection::vec(any::<bool>(), 15),
    ) {
        let h = Hierarchy::from_edge_list(&edge_text(&dag_lines(&parents))).unwrap();
        let vocab: BTreeSet<String> = (0..15).filter(|&i| keep[i]).map(|i| format!("w{i}")).collect();
        let view = filter_hierarchy(&h, min_depth, Some(&vocab));
        for s in h.synsets() {
            let full = h.shortest_chain(&s.id).unwrap().ids;
            let filtered = view.enumerable_chain(&s.id).unwrap().ids;
            let want: Vec<SynsetId> = full
                .iter()
                .filter(|c| *c == &s.id || view.is_enumerable(c))
                .cloned()
                .collect();
            prop_assert_eq!(filtered, want);
        }
    }
}

// ------------------------------------------------------------ grids

fn hashed(salt: u64, e: &Event, levels: u64) -> f64 {
    let h = fnv1a(format!("{salt}|{e}").as_bytes());
    (h % levels) as f64 / levels as f64 * 10.0 - 5.0
}

struct HashScorer(u64);

impl Scorer for HashScorer {
    fn name(&self) -> String {
        "hash".into()
    }

    fn logit(&self, e: &Event) -> Result<f64, ScoreError> {
        Ok(hashed(self.0, e, 1 << 20))
    }
}

fn pick_word(h: &Hierarchy, ix: &Index, unknown: bool) -> String {
    if unknown {
        return "zzunknown".into();
    }
    let all: Vec<&str> = h.synsets().map(|s| s.lemma.as_str()).collect();
    all[ix.index(all.len())].to_string()
}

proptest! {
    #[test]
    fn window_count_formula(rows in 1usize..12, cols in 1usize..12) {
        let g = AbstractionGrid::from_rows(&vec![vec![0.5; cols]; rows]).unwrap();
        let direct = (0..rows).map(|_| cols.saturating_sub(2)).sum::<usize>()
            + (0..cols).map(|_| rows.saturating_sub(2)).sum::<usize>();
        prop_assert_eq!(grid_windows(&g).len(), direct);
        prop_assert_eq!(direct, cols * rows.saturating_sub(2) + rows * cols.saturating_sub(2));
    }

    #[test]
    fn abstraction_cells_are_the_full_product(
        parents in dag_strategy(),
        min_depth in 1usize..4,
        s in any::<Index>(),
        o in any::<Index>(),
        s_unknown in any::<bool>(),
    ) {
        let h = Hierarchy::from_edge_list(&edge_text(&dag_lines(&parents))).unwrap();
        let sm = SenseMap::new();
        let view = filter_hierarchy(&h, min_depth, None);
        let e = Event::new(&pick_word(&h, &s, s_unknown), "relate", &pick_word(&h, &o, false)).unwrap();
        let abs = abstraction_events(&view, &sm, &e);
        let shape = abs.shape();
        prop_assert_eq!(abs.cells().len(), shape.rows * shape.cols);
        prop_assert_eq!(shape.rows, abs.subject_axis.len());
        // Words are lemmas here, so the original cell renders back to the event.
        prop_assert_eq!(abs.original().render(&h), e);
    }

    #[test]
    fn conceptmax_grids_are_monotone(
        parents in dag_strategy(),
        min_depth in 1usize..4,
        salt in any::<u64>(),
        s in any::<Index>(),
        o in any::<Index>(),
    ) {
        let h = Hierarchy::from_edge_list(&edge_text(&dag_lines(&parents))).unwrap();
        let sm = SenseMap::new();
        let view = filter_hierarchy(&h, min_depth, None);
        let base = HashScorer(salt);
        let cm = ConceptMaxScorer::inference(&base, ConceptMaxContext::new(view.clone(), &sm));
        let e = Event::new(&pick_word(&h, &s, false), "relate", &pick_word(&h, &o, false)).unwrap();
        let g = score_grid(&cm, &h, &abstraction_events(&view, &sm, &e)).unwrap();
        let shape = g.shape();
        for r in 0..shape.rows {
            for c in 0..shape.cols {
                if r > 0 {
                    prop_assert!(g.get(r, c) >= g.get(r - 1, c));
                }
                if c > 0 {
                    prop_assert!(g.get(r, c) >= g.get(r, c - 1));
                }
            }
        }
        prop_assert_eq!(ler(&[g.to_probabilities()]), 0.0);
        let top = cm.inference_logit(&e).unwrap();
        prop_assert!(top >= base.logit(&e).unwrap());
    }
}

// ------------------------------------------------------------ metrics

proptest! {
    #[test]
    fn delta_nonnegative_and_zero_iff_concave(a in 0.0f64..1.0, b in 0.0f64..1.0, c in 0.0f64..1.0) {
        let d = concavity_delta(a, b, c);
        prop_assert!(d >= 0.0);
        prop_assert_eq!(d == 0.0, 2.0 * b >= a + c);
    }

    #[test]
    fn pooled_metrics_ignore_enumeration_order(
        grids in prop::collection::vec(
            (1usize..6, 1usize..6).prop_flat_map(|(r, c)| prop::collection::vec(prop::collection::vec(0u8..5, c), r)),
            1..8,
        ),
        seed in any::<u64>(),
    ) {
        let to_grid = |rows: &Vec<Vec<u8>>| {
            AbstractionGrid::from_rows(&rows.iter().map(|r| r.iter().map(|&v| v as f64 / 4.0).collect()).collect::<Vec<_>>()).unwrap()
        };
        let transpose = |rows: &Vec<Vec<u8>>| -> Vec<Vec<u8>> {
            (0..rows[0].len()).map(|c| rows.iter().map(|r| r[c]).collect()).collect()
        };
        let a: Vec<AbstractionGrid> = grids.iter().map(to_grid).collect();
        let mut shuffled = grids.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let b: Vec<AbstractionGrid> = shuffled.iter().map(|g| to_grid(&transpose(g))).collect();
        prop_assert!((ccd(&a) - ccd(&b)).abs() < 1e-12);
        prop_assert_eq!(ler(&a), ler(&b));
    }

    #[test]
    fn auc_invariant_under_monotone_transforms(
        data in prop::collection::vec((any::<bool>(), -200i32..200), 2..200),
        kind in 0usize..4,
    ) {
        let mut scored: Vec<(Label, f64)> = data
            .iter()
            .map(|&(p, s)| (if p { Label::Plausible } else { Label::Implausible }, s as f64 / 40.0))
            .collect();
        scored[0].0 = Label::Plausible;
        scored[1].0 = Label::Implausible;
        let f = |x: f64| match kind {
            0 => 3.0 * x + 1.0,
            1 => x.exp(),
            2 => x * x * x,
            _ => x.atan(),
        };
        let mapped: Vec<(Label, f64)> = scored.iter().map(|&(l, s)| (l, f(s))).collect();
        prop_assert_eq!(auc_scores(&scored).unwrap(), auc_scores(&mapped).unwrap());
    }

    #[test]
    fn auc_of_negated_scores_is_complement(labels in prop::collection::vec(any::<bool>(), 2..300), seed in any::<u64>()) {
        let mut values: Vec<f64> = (0..labels.len()).map(|i| i as f64).collect();
        values.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let mut scored: Vec<(Label, f64)> = labels
            .iter()
            .zip(&values)
            .map(|(&p, &s)| (if p { Label::Plausible } else { Label::Implausible }, s))
            .collect();
        scored[0].0 = Label::Plausible;
        scored[1].0 = Label::Implausible;
        let negated: Vec<(Label, f64)> = scored.iter().map(|&(l, s)| (l, -s)).collect();
        let sum = auc_scores(&scored).unwrap() + auc_scores(&negated).unwrap();
        prop_assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn lse_between_max_and_max_plus_log_k(xs in prop::collection::vec(-50.0f64..50.0, 1..20)) {
        let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let l = logsumexp(&xs);
        prop_assert!(l >= m);
        prop_assert!(l <= m + (xs.len() as f64).ln() + 1e-12);
    }
}

// ------------------------------------------------------------ corpus

fn corpus_strategy() -> impl Strategy<Value = BTreeMap<Event, u64>> {
    let word = |p: &'static str| (0u8..4).prop_map(move |i| format!("{p}{i}"));
    prop::collection::btree_map(
        (word("s"), word("v"), word("o")).prop_map(|(s, v, o)| Event::new(&s, &v, &o).unwrap()),
        1u64..6,
        1..25,
    )
}

fn expand(counts: &BTreeMap<Event, u64>) -> Vec<Event> {
    counts
        .iter()
        .flat_map(|(e, &n)| std::iter::repeat_n(e.clone(), n as usize))
        .collect()
}

proptest! {
    #[test]
    fn filters_are_idempotent(
        counts in corpus_strategy(),
        min_triple_count in 1u64..4,
        min_word_count in 1u64..8,
        per_triple_cap in 1u64..5,
    ) {
        let cfg = FilterConfig { min_triple_count, min_word_count, per_triple_cap };
        let once = apply_filters(expand(&counts), cfg);
        let twice = apply_filters(expand(once.counts()), cfg);
        prop_assert_eq!(&once, &twice);
        prop_assert_eq!(&filter_counts(once.counts().clone(), cfg), &once);
    }

    #[test]
    fn pair_counts_are_consistent(counts in corpus_strategy()) {
        let c = TripleCorpus::from_counts(counts);
        for v in c.positional(Position::Verb).keys() {
            let by_s: u64 = c.positional(Position::Subject).keys().map(|s| c.subject_verb_count(s, v)).sum();
            let by_o: u64 = c.positional(Position::Object).keys().map(|o| c.verb_object_count(v, o)).sum();
            prop_assert_eq!(c.verb_count(v), by_s);
            prop_assert_eq!(c.verb_count(v), by_o);
        }
    }

    #[test]
    fn training_pairs_follow_their_form(counts in corpus_strategy(), seed in any::<u64>()) {
        let c = TripleCorpus::from_counts(counts);
        let set = build_training_set(&c, seed);
        prop_assert_eq!(set.pairs.len() + set.skipped, c.total() as usize);
        for p in &set.pairs {
            prop_assert!(c.contains(&p.positive));
            prop_assert_eq!(&p.positive.verb, &p.negative.verb);
            prop_assert_eq!(p.positive.subject != p.negative.subject, p.form.subject());
            prop_assert_eq!(p.positive.object != p.negative.object, p.form.object());
        }
    }
}

// ------------------------------------------------------------ scorers

proptest! {
    #[test]
    fn logistic_in_open_unit_interval(x in -36.0f64..36.0) {
        let p = logistic(x);
        prop_assert!(p > 0.0 && p < 1.0);
    }

    #[test]
    fn scorer_plausibility_in_open_unit_interval(
        counts in corpus_strategy(),
        seed in any::<u64>(),
        s in 0u8..5, v in 0u8..5, o in 0u8..5,
    ) {
        let c = TripleCorpus::from_counts(counts);
        let vocab = [Vocab::new(["s0", "s1"]), Vocab::new(["v0"]), Vocab::new(["o0", "o1"])];
        let mlp = MlpScorer::random(vocab, 8, 8, &mut ChaCha8Rng::seed_from_u64(seed));
        let e = Event::new(&format!("s{s}"), &format!("v{v}"), &format!("o{o}")).unwrap();
        for p in [NGramScorer::new(c).plausibility(&e).unwrap(), mlp.plausibility(&e).unwrap()] {
            prop_assert!(p > 0.0 && p < 1.0);
        }
    }

    #[test]
    fn ngram_monotone_in_subject_verb_count(a in 1u64..20, m in 1u64..20) {
        // Moving occurrences of (t, v, x) to (s, v, x) raises Count(s, v)
        // and leaves Count(v) and Count(v, o) unchanged.
        let ev = |s: &str, o: &str| Event::new(s, "v", o).unwrap();
        let mut prev = f64::NEG_INFINITY;
        for k in 0..=m {
            let mut counts = BTreeMap::new();
            counts.insert(ev("s", "o"), a);
            counts.insert(ev("s", "x"), k);
            counts.insert(ev("t", "x"), m - k);
            let sc = NGramScorer::new(TripleCorpus::from_counts(counts));
            let z = ngram_logit(&sc, &ev("s", "o"));
            prop_assert!(z >= prev);
            prev = z;
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn training_is_bit_reproducible(seed in any::<u64>(), n in 1usize..30) {
        let words = ["cat", "dog", "rock", "tree"];
        let pairs: Vec<TrainingPair> = (0..n)
            .map(|i| TrainingPair {
                positive: Event::new(words[i % 2], "see", words[2 + i % 2]).unwrap(),
                negative: Event::new(words[2 + i % 2], "see", words[i % 2]).unwrap(),
                form: Perturbation::SO,
            })
            .collect();
        let cfg = TrainConfig { seed, dim: 4, hidden: 4, batch_size: 4, epochs: 2, warmup_steps: 3, ..TrainConfig::default() };
        let (a, ra) = train(&pairs, &cfg, None).unwrap();
        let (b, rb) = train(&pairs, &cfg, None).unwrap();
        prop_assert_eq!(a.params(), b.params());
        prop_assert_eq!(ra, rb);
    }
}
