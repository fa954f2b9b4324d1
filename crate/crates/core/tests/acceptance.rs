//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use abx::abstraction::{abstraction_events, score_grid, AbstractionGrid, Event};
use abx::aggregator::{ConceptMaxContext, ConceptMaxScorer};
use abx::corpus::{build_training_set, item_rng, NegativeSampler, TrainingPair, Perturbation, TripleCorpus};
use abx::lexicon::{filter_hierarchy, Hierarchy, SenseMap};
use abx::metrics::{auc_scores, ccd, concavity_delta, ler, Label};
use abx::numeric::fnv1a;
use abx::scorers::mlp::{gradient_check, pair_loss, train, Vocab};
use abx::scorers::{MlpScorer, NGramScorer, ScoreError, Scorer, TrainConfig};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn within(elapsed: Duration, limit_s: f64) -> bool {
    elapsed.as_secs_f64() < limit_s
}

// ---------------------------------------------------------------- metrics

fn random_grid(rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let rows = rng.random_range(1..=8);
    let cols = rng.random_range(1..=8);
    let quantized = rng.random_bool(0.5);
    (0..rows)
        .map(|_| {
            (0..cols)
                .map(|_| {
                    if quantized {
                        rng.random_range(0..=4) as f64 / 4.0
                    } else {
                        rng.random::<f64>()
                    }
                })
                .collect()
        })
        .collect()
}

/// Every length-3 run along a column, then along a row.
fn oracle_windows(g: &[Vec<f64>]) -> Vec<(f64, f64, f64)> {
    let rows = g.len();
    let cols = g[0].len();
    let mut out = Vec::new();
    for c in 0..cols {
        for r in 2..rows {
            out.push((g[r - 2][c], g[r - 1][c], g[r][c]));
        }
    }
    for row in g {
        for c in 2..cols {
            out.push((row[c - 2], row[c - 1], row[c]));
        }
    }
    out
}

fn oracle_delta(a: f64, b: f64, c: f64) -> f64 {
    ((a + c) / 2.0 - b).max(0.0)
}

fn oracle_extremum(a: f64, b: f64, c: f64) -> bool {
    (b > a && b > c) || (b < a && b < c)
}

fn oracle_pooled(grids: &[Vec<Vec<f64>>]) -> (f64, f64) {
    let windows: Vec<_> = grids.iter().flat_map(|g| oracle_windows(g)).collect();
    if windows.is_empty() {
        return (0.0, 0.0);
    }
    let n = windows.len() as f64;
    let d: f64 = windows.iter().map(|&(a, b, c)| oracle_delta(a, b, c)).sum();
    let x = windows.iter().filter(|&&(a, b, c)| oracle_extremum(a, b, c)).count() as f64;
    (d / n, x / n)
}

fn metric_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let raw: Vec<Vec<Vec<f64>>> = (0..10_000).map(|_| random_grid(&mut rng)).collect();
    let grids: Vec<AbstractionGrid> = raw.iter().map(|g| AbstractionGrid::from_rows(g).unwrap()).collect();
    let mut max_err: f64 = 0.0;
    for (g, r) in grids.iter().zip(&raw) {
        for (a, b, c) in oracle_windows(r) {
            max_err = max_err.max((concavity_delta(a, b, c) - oracle_delta(a, b, c)).abs());
        }
        let (oc, ol) = oracle_pooled(std::slice::from_ref(r));
        max_err = max_err.max((ccd(std::slice::from_ref(g)) - oc).abs());
        max_err = max_err.max((ler(std::slice::from_ref(g)) - ol).abs());
    }
    for (gs, rs) in grids.chunks(10).zip(raw.chunks(10)) {
        let (oc, ol) = oracle_pooled(rs);
        max_err = max_err.max((ccd(gs) - oc).abs());
        max_err = max_err.max((ler(gs) - ol).abs());
    }
    let t = start.elapsed();
    outcome(
        max_err <= 1e-12 && within(t, 10.0),
        format!("10000 grids, max abs error {max_err:.1e}, {:.2} s", t.as_secs_f64()),
    )
}

// ---------------------------------------------------------------- auc

fn pairwise_auc(scored: &[(Label, f64)]) -> f64 {
    let pos: Vec<f64> = scored.iter().filter(|(l, _)| *l == Label::Plausible).map(|p| p.1).collect();
    let neg: Vec<f64> = scored.iter().filter(|(l, _)| *l == Label::Implausible).map(|p| p.1).collect();
    let mut wins = 0.0;
    for &p in &pos {
        for &n in &neg {
            if p > n {
                wins += 1.0;
            } else if p == n {
                wins += 0.5;
            }
        }
    }
    wins / (pos.len() * neg.len()) as f64
}

fn auc_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut max_err: f64 = 0.0;
    for _ in 0..1000 {
        let n = rng.random_range(2..=1000);
        let levels = [3u32, 10, 100, 0][rng.random_range(0..4)];
        let p_pos = rng.random_range(0.05..0.95);
        let scored: Vec<(Label, f64)> = (0..n)
            .map(|i| {
                let label = match i {
                    0 => Label::Plausible,
                    1 => Label::Implausible,
                    _ if rng.random_bool(p_pos) => Label::Plausible,
                    _ => Label::Implausible,
                };
                let s = if levels == 0 {
                    rng.random_range(-5.0..5.0)
                } else {
                    rng.random_range(0..levels) as f64
                };
                (label, s)
            })
            .collect();
        let got = auc_scores(&scored).unwrap();
        max_err = max_err.max((got - pairwise_auc(&scored)).abs());
    }
    let t = start.elapsed();
    outcome(
        max_err <= 1e-12 && within(t, 30.0),
        format!("1000 sets, max abs error {max_err:.1e}, {:.2} s", t.as_secs_f64()),
    )
}

// ---------------------------------------------------------------- conceptmax

/// Pseudo-random logit from a hash of the rendered event.
struct HashScorer {
    salt: u64,
    levels: u64,
}

impl Scorer for HashScorer {
    fn name(&self) -> String {
        "hash".into()
    }

    fn logit(&self, e: &Event) -> Result<f64, ScoreError> {
        let h = fnv1a(format!("{}|{e}", self.salt).as_bytes());
        Ok((h % self.levels) as f64 / self.levels as f64 * 12.0 - 6.0)
    }
}

const LEMMAS: [&str; 8] = ["alpha", "beta", "gamma", "delta", "eps", "zeta", "eta", "theta"];

fn random_hierarchy(rng: &mut ChaCha8Rng) -> (Hierarchy, Vec<String>) {
    let n: usize = rng.random_range(1..=40);
    let mut text = String::from("n0\troot\t\n");
    let mut lemmas = vec!["root".to_string()];
    for i in 1..n {
        let k = rng.random_range(1..=3.min(i));
        // Mostly recent parents, so chains get deep.
        let parents: BTreeSet<usize> = (0..k)
            .map(|_| if rng.random_bool(0.7) { rng.random_range(i.saturating_sub(3)..i) } else { rng.random_range(0..i) })
            .collect();
        let lemma = if rng.random_bool(0.3) {
            LEMMAS[rng.random_range(0..LEMMAS.len())].to_string()
        } else {
            format!("w{i}")
        };
        let ps: Vec<String> = parents.iter().map(|p| format!("n{p}")).collect();
        text.push_str(&format!("n{i}\t{lemma}\t{}\n", ps.join(",")));
        lemmas.push(lemma);
    }
    (Hierarchy::from_edge_list(&text).unwrap(), lemmas)
}

fn conceptmax_ler() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let sm = SenseMap::new();
    let mut grids = 0usize;
    let mut windows = 0usize;
    let mut failures = 0usize;
    let mut base_grids = Vec::new();
    for trial in 0..500u64 {
        let (h, lemmas) = random_hierarchy(&mut rng);
        let min_depth = rng.random_range(1..=3);
        let view = filter_hierarchy(&h, min_depth, None);
        let base = HashScorer {
            salt: trial,
            levels: [4, 64, 1 << 30][rng.random_range(0..3)],
        };
        let cm = ConceptMaxScorer::inference(&base, ConceptMaxContext::new(view.clone(), &sm));
        for _ in 0..4 {
            let pick = |rng: &mut ChaCha8Rng| {
                if rng.random_bool(0.1) {
                    "unknownword".to_string()
                } else {
                    lemmas[rng.random_range(0..lemmas.len())].clone()
                }
            };
            let e = Event::new(&pick(&mut rng), "relate", &pick(&mut rng)).unwrap();
            let abs = abstraction_events(&view, &sm, &e);
            let g = score_grid(&cm, &h, &abs).unwrap().to_probabilities();
            base_grids.push(score_grid(&base, &h, &abs).unwrap().to_probabilities());
            grids += 1;
            windows += abx::abstraction::grid_windows(&g).len();
            if ler(std::slice::from_ref(&g)) != 0.0 {
                failures += 1;
            }
        }
    }
    let t = start.elapsed();
    outcome(
        failures == 0 && within(t, 60.0),
        format!(
            "{grids} grids over 500 hierarchies, {windows} windows, {failures} with LER > 0 (base scorer LER {:.3}), {:.2} s",
            ler(&base_grids),
            t.as_secs_f64()
        ),
    )
}

// ---------------------------------------------------------------- point checks

fn ngram_point() -> Outcome {
    let mut events = Vec::new();
    let e = Event::new("s", "v", "o").unwrap();
    // Count(s,v) = 2, Count(v,o) = 3, Count(v) = 4.
    events.extend(std::iter::repeat_n(e.clone(), 2));
    events.push(Event::new("x", "v", "o").unwrap());
    events.push(Event::new("y", "v", "z").unwrap());
    let sc = NGramScorer::new(TripleCorpus::from_events(events));
    let p = sc.probability(&e);
    outcome((p - 0.375).abs() < 1e-15, format!("p = {p}"))
}

fn bce_point() -> Outcome {
    let vocab = [Vocab::new(["a", "b"]), Vocab::new(["v"]), Vocab::new(["o"])];
    let m = MlpScorer::zeros(vocab, 4, 3);
    let pair = TrainingPair {
        positive: Event::new("a", "v", "o").unwrap(),
        negative: Event::new("b", "v", "o").unwrap(),
        form: Perturbation::S,
    };
    let l = pair_loss(&m, &pair);
    let want = 2.0 * std::f64::consts::LN_2;
    outcome((l - want).abs() < 1e-9, format!("loss = {l:.12}, 2 ln 2 = {want:.12}"))
}

fn gradient() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for seed in 0..3u64 {
        let vocab = [
            Vocab::new(["cat", "dog", "rock"]),
            Vocab::new(["eat", "chase"]),
            Vocab::new(["fish", "ball", "tree"]),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = MlpScorer::random(vocab, 16, 32, &mut rng);
        let pair = TrainingPair {
            positive: Event::new("cat", "eat", "fish").unwrap(),
            negative: Event::new("rock", "eat", "tree").unwrap(),
            form: Perturbation::SO,
        };
        worst = worst.max(gradient_check(&m, &pair).max_relative_error);
    }
    let t = start.elapsed();
    outcome(
        worst < 1e-4 && within(t, 5.0),
        format!("3 seeds, max relative error {worst:.2e}, {:.2} s", t.as_secs_f64()),
    )
}

// ---------------------------------------------------------------- planted preference

const CLASSES: usize = 3;
const LEAVES: usize = 20;
/// (verb, subject classes, object classes) it accepts.
const AFFORDANCES: [(&str, [bool; CLASSES], [bool; CLASSES]); 6] = [
    ("grab", [true, false, false], [true, true, false]),
    ("melt", [false, true, false], [false, true, false]),
    ("paint", [false, false, true], [true, false, true]),
    ("lift", [true, true, false], [false, false, true]),
    ("sniff", [false, true, true], [true, false, false]),
    ("toss", [true, false, true], [false, true, false]),
];

fn subj_leaf(c: usize, k: usize) -> String {
    format!("agent{c}x{k:02}")
}

fn obj_leaf(c: usize, k: usize) -> String {
    format!("thing{c}x{k:02}")
}

fn planted_hierarchy() -> Hierarchy {
    let mut t = String::from("entity\tentity\t\nphysical\tphysical\tentity\nagents\tagents\tphysical\nthings\tthings\tphysical\n");
    for c in 0..CLASSES {
        t.push_str(&format!("agentclass{c}\tagentclass{c}\tagents\n"));
        t.push_str(&format!("thingclass{c}\tthingclass{c}\tthings\n"));
        for k in 0..LEAVES {
            t.push_str(&format!("{0}\t{0}\tagentclass{c}\n", subj_leaf(c, k)));
            t.push_str(&format!("{0}\t{0}\tthingclass{c}\n", obj_leaf(c, k)));
        }
    }
    Hierarchy::from_edge_list(&t).unwrap()
}

fn leaf_class(word: &str) -> usize {
    word.as_bytes()[5] as usize - b'0' as usize
}

fn afforded(e: &Event) -> bool {
    let (_, s, o) = AFFORDANCES.iter().find(|a| a.0 == e.verb).unwrap();
    s[leaf_class(&e.subject)] && o[leaf_class(&e.object)]
}

/// Every triple the generator accepts.
fn afforded_triples() -> Vec<Event> {
    let mut out = Vec::new();
    for (verb, s, o) in AFFORDANCES {
        for (sc, _) in s.iter().enumerate().filter(|x| *x.1) {
            for (oc, _) in o.iter().enumerate().filter(|x| *x.1) {
                for i in 0..LEAVES {
                    for j in 0..LEAVES {
                        out.push(Event::new(&subj_leaf(sc, i), verb, &obj_leaf(oc, j)).unwrap());
                    }
                }
            }
        }
    }
    out
}

/// Verb uniformly, then an accepted class pair, then leaves uniformly.
fn generate(rng: &mut ChaCha8Rng) -> Event {
    let (verb, s, o) = AFFORDANCES[rng.random_range(0..AFFORDANCES.len())];
    let pairs: Vec<(usize, usize)> = (0..CLASSES)
        .flat_map(|a| (0..CLASSES).map(move |b| (a, b)))
        .filter(|&(a, b)| s[a] && o[b])
        .collect();
    let (sc, oc) = pairs[rng.random_range(0..pairs.len())];
    Event::new(
        &subj_leaf(sc, rng.random_range(0..LEAVES)),
        verb,
        &obj_leaf(oc, rng.random_range(0..LEAVES)),
    )
    .unwrap()
}

const HELD_OUT: usize = 500;

fn planted() -> Outcome {
    let start = Instant::now();
    let h = planted_hierarchy();
    let sm = SenseMap::new();

    // Hold out a random slice of the accepted triples; the corpus never
    // contains them.
    let mut all = afforded_triples();
    all.shuffle(&mut ChaCha8Rng::seed_from_u64(20));
    let held_pos: BTreeSet<Event> = all[..HELD_OUT].iter().cloned().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut events = Vec::with_capacity(50_000);
    while events.len() < 50_000 {
        let e = generate(&mut rng);
        if !held_pos.contains(&e) {
            events.push(e);
        }
    }
    let corpus = TripleCorpus::from_events(events);
    let set = build_training_set(&corpus, 21);

    // Negatives: perturbations of the held-out positives that the generator
    // rejects.
    let sampler = NegativeSampler::new(&corpus).unwrap();
    let mut held: Vec<(Event, Label)> = held_pos.iter().map(|e| (e.clone(), Label::Plausible)).collect();
    let mut n_neg = 0;
    for (k, e) in held_pos.iter().cycle().take(20 * HELD_OUT).enumerate() {
        if n_neg == HELD_OUT {
            break;
        }
        let neg = sampler.sample(e, &mut item_rng(23, k as u64)).unwrap().negative;
        if !afforded(&neg) {
            held.push((neg, Label::Implausible));
            n_neg += 1;
        }
    }

    // 2 epochs of 50,000 pairs at the default batch of 128 is 782 steps,
    // which never leaves the 1,000-step warmup; batch 32 gives 3,125.
    let cfg = TrainConfig {
        epochs: 2,
        batch_size: 32,
        seed: 21,
        ..TrainConfig::default()
    };
    let (plain, _) = train(&set.pairs, &cfg, None).unwrap();
    let score = |s: &dyn Scorer| -> f64 {
        let scored: Vec<(Label, f64)> = held.iter().map(|(e, l)| (*l, s.logit(e).unwrap())).collect();
        auc_scores(&scored).unwrap()
    };
    let auc_plain = score(&plain);

    let ctx = ConceptMaxContext::new(filter_hierarchy(&h, 4, None), &sm).with_seed(21);
    let (cm_model, _) = train(&set.pairs, &cfg, Some(&ctx)).unwrap();
    let cm = ConceptMaxScorer::inference(&cm_model, ConceptMaxContext::new(filter_hierarchy(&h, 4, None), &sm));
    let auc_cm = score(&cm);

    let t = start.elapsed();
    outcome(
        auc_plain >= 0.90 && auc_cm >= auc_plain - 0.02 && within(t, 120.0),
        format!(
            "{} pairs, held-out AUC {auc_plain:.4}, ConceptMax {auc_cm:.4}, {:.1} s",
            set.pairs.len(),
            t.as_secs_f64()
        ),
    )
}

// ---------------------------------------------------------------- cli

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn abx(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_abx")).args(args).output().unwrap()
}

fn extraction() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("corpus.tsv");
    let run = abx(&[
        "extract",
        "--input",
        fixture("extract10.conllu").to_str().unwrap(),
        "--output",
        out.to_str().unwrap(),
        "--min-word-count",
        "1",
        "--seed",
        "7",
    ]);
    if !run.status.success() {
        return outcome(false, format!("exit {:?}: {}", run.status.code(), String::from_utf8_lossy(&run.stderr)));
    }
    let got = fs::read(&out).unwrap();
    let want = fs::read(fixture("extract10.expected.tsv")).unwrap();
    outcome(got == want, format!("{} bytes, identical: {}", got.len(), got == want))
}

fn read_tree(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let p = |s: &str| dir.path().join(s).to_str().unwrap().to_string();
    let hier = fixture("hierarchy.tsv");
    let corpus = fixture("ngram_corpus.tsv");
    let eval = fixture("eval.tsv");
    let mut runs = Vec::new();
    for i in 0..2 {
        let model = p(&format!("model{i}.abxn"));
        let out = p(&format!("run{i}"));
        let train = abx(&[
            "train", "--corpus", corpus.to_str().unwrap(), "--output", &model, "--hierarchy",
            hier.to_str().unwrap(), "--conceptmax", "--dim", "8", "--hidden", "8", "--epochs", "3",
            "--batch-size", "4", "--warmup-steps", "2", "--seed", "5",
        ]);
        if !train.status.success() {
            return outcome(false, format!("train failed: {}", String::from_utf8_lossy(&train.stderr)));
        }
        let spec = format!("mlp:{model}");
        let run = abx(&[
            "eval", "--scorer", &spec, "--conceptmax", "--input", eval.to_str().unwrap(), "--hierarchy",
            hier.to_str().unwrap(), "--out-dir", &out, "--grids", "--heatmaps", "--seed", "5",
        ]);
        if !run.status.success() {
            return outcome(false, format!("eval failed: {}", String::from_utf8_lossy(&run.stderr)));
        }
        runs.push((fs::read(&model).unwrap(), read_tree(Path::new(&out))));
    }
    let files = runs[0].1.len();
    let same = runs[0] == runs[1];
    outcome(same && files > 0, format!("model + {files} report/grid/heatmap files, identical: {same}"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("metric formula oracle", metric_oracle),
        ("rank AUC oracle", auc_oracle),
        ("ConceptMax LER is zero", conceptmax_ler),
        ("n-gram point check", ngram_point),
        ("BCE loss at one half", bce_point),
        ("gradient check", gradient),
        ("planted preference", planted),
        ("extraction fixture", extraction),
        ("eval determinism", determinism),
    ];
    // Optional substring filter: `cargo test --test acceptance -- planted`.
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let selected: Vec<_> = criteria
        .into_iter()
        .filter(|(name, _)| filter.is_empty() || filter.iter().any(|f| name.contains(f.as_str())))
        .collect();
    let mut failed = 0;
    for &(name, check) in &selected {
        let o = check();
        if !o.pass {
            failed += 1;
        }
        println!("{} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    println!("{} of {} criteria passed", selected.len() - failed, selected.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
