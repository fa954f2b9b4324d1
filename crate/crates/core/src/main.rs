use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use abx::abstraction::{abstraction_events, score_grid, AbstractionGrid, Event, GridError};
use abx::aggregator::{ConceptMaxContext, ConceptMaxScorer, Mode};
use abx::corpus::{build_training_set, extract_triples, filter_counts, FilterConfig, TripleCorpus};
use abx::evaluation::evaluate;
use abx::heatmap::render_svg;
use abx::lexicon::{filter_hierarchy, load_hierarchy, FilteredHierarchy, Hierarchy, SenseMap};
use abx::metrics::{consistency, read_labeled_events, LabeledEvent};
use abx::numeric::logistic;
use abx::scorers::external::timeout_from_env;
use abx::scorers::mlp::train;
use abx::scorers::{ConstantScorer, ExternalScorer, MlpScorer, NGramScorer, ScoreError, Scorer, TrainConfig};

#[derive(Parser)]
#[command(name = "abx", version, about = "Abstraction-consistency toolkit for event plausibility models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract subject-verb-object triples from CoNLL-U and write a filtered corpus.
    Extract {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[command(flatten)]
        thresholds: Thresholds,
        /// Skip malformed sentences instead of failing.
        #[arg(long)]
        skip_malformed: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Re-apply count filters to an existing corpus file.
    Filter {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[command(flatten)]
        thresholds: Thresholds,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train the MLP scorer on a corpus with sampled negatives.
    Train {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[command(flatten)]
        lexicon: LexiconArgs,
        /// Train through the ConceptMax objective (requires --hierarchy).
        #[arg(long)]
        conceptmax: bool,
        #[arg(long, default_value_t = abx::aggregator::DEFAULT_TRAIN_SAMPLES)]
        train_samples: usize,
        #[arg(long, default_value_t = 2)]
        epochs: usize,
        #[arg(long, default_value_t = 128)]
        batch_size: usize,
        #[arg(long, default_value_t = 1e-3)]
        learning_rate: f64,
        #[arg(long, default_value_t = 1000)]
        warmup_steps: usize,
        #[arg(long, default_value_t = 64)]
        dim: usize,
        #[arg(long, default_value_t = 128)]
        hidden: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Score events (subject, verb, object per line).
    Score {
        #[command(flatten)]
        scoring: ScoringArgs,
        #[arg(long)]
        input: PathBuf,
        /// Defaults to stdout.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Export the abstraction grid of each event.
    Grid {
        #[command(flatten)]
        scoring: ScoringArgs,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// CCD and LER over exported grid files.
    Metrics {
        #[arg(required = true)]
        grids: Vec<PathBuf>,
    },
    /// AUC, CCD and LER over a labeled evaluation file.
    Eval {
        #[command(flatten)]
        scoring: ScoringArgs,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Also export per-event grids.
        #[arg(long)]
        grids: bool,
        /// Also render per-event heatmaps.
        #[arg(long)]
        heatmaps: bool,
    },
    /// Render an exported grid as an SVG heatmap.
    Heatmap {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
}

#[derive(Args)]
struct Thresholds {
    #[arg(long, default_value_t = 2)]
    min_triple_count: u64,
    #[arg(long, default_value_t = 1000)]
    min_word_count: u64,
    #[arg(long, default_value_t = 1000)]
    cap: u64,
}

impl Thresholds {
    fn config(&self) -> FilterConfig {
        FilterConfig {
            min_triple_count: self.min_triple_count,
            min_word_count: self.min_word_count,
            per_triple_cap: self.cap,
        }
    }

    fn header(&self, seed: u64) -> Vec<(&'static str, String)> {
        vec![
            ("seed", seed.to_string()),
            ("min_triple_count", self.min_triple_count.to_string()),
            ("min_word_count", self.min_word_count.to_string()),
            ("cap", self.cap.to_string()),
        ]
    }
}

#[derive(Args)]
struct LexiconArgs {
    #[arg(long)]
    hierarchy: Option<PathBuf>,
    #[arg(long)]
    sense_map: Option<PathBuf>,
    /// Synsets shallower than this are not enumerated as abstractions.
    #[arg(long, default_value_t = 4)]
    min_depth: usize,
    /// Only enumerate synsets whose lemma occurs as an argument in this corpus.
    #[arg(long)]
    vocab_corpus: Option<PathBuf>,
}

#[derive(Args)]
struct ScoringArgs {
    /// ngram:<corpus> | mlp:<model> | external:<command> | constant:<logit>
    #[arg(long)]
    scorer: String,
    /// Wrap the scorer in ConceptMax (hard max over abstractions).
    #[arg(long)]
    conceptmax: bool,
    #[command(flatten)]
    lexicon: LexiconArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug)]
struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    fn input(message: impl Into<String>) -> Self {
        CliError {
            code: 2,
            message: message.into(),
        }
    }

    fn internal(message: impl Into<String>) -> Self {
        CliError {
            code: 1,
            message: message.into(),
        }
    }

    fn external(message: impl Into<String>) -> Self {
        CliError {
            code: 3,
            message: message.into(),
        }
    }

    fn from_score(e: &ScoreError) -> Self {
        match e.root() {
            ScoreError::External(_) => CliError::external(e.to_string()),
            _ => CliError::internal(e.to_string()),
        }
    }

    fn from_grid(e: GridError) -> Self {
        match &e {
            GridError::Cell { source, .. } | GridError::Batch { source, .. } => {
                let base = CliError::from_score(source);
                CliError { message: e.to_string(), ..base }
            }
            _ => CliError::internal(e.to_string()),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

fn open(path: &Path) -> CliResult<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, contents: &[u8]) -> CliResult<()> {
    fs::write(path, contents).map_err(|e| CliError::internal(format!("writing {}: {e}", path.display())))
}

fn create_dir(path: &Path) -> CliResult<()> {
    fs::create_dir_all(path).map_err(|e| CliError::internal(format!("creating {}: {e}", path.display())))
}

fn write_header(out: &mut Vec<u8>, header: &[(&str, String)]) {
    for (k, v) in header {
        let _ = writeln!(out, "#{k}\t{v}");
    }
}

fn read_corpus(path: &Path) -> CliResult<TripleCorpus> {
    TripleCorpus::read_tsv(open(path)?).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

fn write_corpus(path: &Path, corpus: &TripleCorpus, header: &[(&str, String)]) -> CliResult<()> {
    let mut out = Vec::new();
    write_header(&mut out, header);
    corpus.write_tsv(&mut out).map_err(|e| CliError::internal(e.to_string()))?;
    write_file(path, &out)
}

/// Events from `s<TAB>v<TAB>o[<TAB>...]` lines; extra columns are ignored.
fn read_events(path: &Path) -> CliResult<Vec<Event>> {
    let mut events = Vec::new();
    for (i, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() < 3 {
            return Err(CliError::input(format!(
                "{} line {}: expected at least 3 tab-separated fields",
                path.display(),
                i + 1
            )));
        }
        let e = Event::new(f[0], f[1], f[2])
            .map_err(|err| CliError::input(format!("{} line {}: {err}", path.display(), i + 1)))?;
        events.push(e);
    }
    Ok(events)
}

fn build_scorer(spec: &str) -> CliResult<Box<dyn Scorer>> {
    let (kind, arg) = spec
        .split_once(':')
        .ok_or_else(|| CliError::input(format!("scorer spec {spec:?} must look like kind:argument")))?;
    Ok(match kind {
        "ngram" => Box::new(NGramScorer::new(read_corpus(Path::new(arg))?)),
        "mlp" => Box::new(MlpScorer::load(arg).map_err(|e| CliError::input(format!("{arg}: {e}")))?),
        "external" => Box::new(
            ExternalScorer::spawn(arg, timeout_from_env()).map_err(|e| CliError::external(e.to_string()))?,
        ),
        "constant" => {
            let v: f64 = arg
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| CliError::input(format!("constant scorer needs a finite number, got {arg:?}")))?;
            Box::new(ConstantScorer::new(v))
        }
        other => return Err(CliError::input(format!("unknown scorer kind {other:?}"))),
    })
}

struct Lexicon {
    hierarchy: Hierarchy,
    senses: SenseMap,
    vocab: Option<std::collections::BTreeSet<String>>,
    min_depth: usize,
}

impl Lexicon {
    fn load(args: &LexiconArgs) -> CliResult<Option<Lexicon>> {
        let Some(hpath) = &args.hierarchy else {
            if args.sense_map.is_some() {
                return Err(CliError::input("--sense-map requires --hierarchy"));
            }
            return Ok(None);
        };
        if args.min_depth == 0 {
            return Err(CliError::input("--min-depth must be at least 1"));
        }
        let hierarchy = load_hierarchy(hpath).map_err(|e| CliError::input(format!("{}: {e}", hpath.display())))?;
        let senses = match &args.sense_map {
            Some(p) => SenseMap::load(p, &hierarchy).map_err(|e| CliError::input(format!("{}: {e}", p.display())))?,
            None => SenseMap::new(),
        };
        let vocab = match &args.vocab_corpus {
            Some(p) => Some(read_corpus(p)?.argument_vocab()),
            None => None,
        };
        Ok(Some(Lexicon {
            hierarchy,
            senses,
            vocab,
            min_depth: args.min_depth,
        }))
    }

    fn view(&self) -> FilteredHierarchy<'_> {
        filter_hierarchy(&self.hierarchy, self.min_depth, self.vocab.as_ref())
    }
}

fn require(lex: &Option<Lexicon>, what: &str) -> CliResult<()> {
    if lex.is_none() {
        return Err(CliError::input(format!("{what} requires --hierarchy")));
    }
    Ok(())
}

fn wrap<'h>(
    base: Box<dyn Scorer>,
    conceptmax: bool,
    lex: Option<&'h Lexicon>,
    seed: u64,
) -> CliResult<Box<dyn Scorer + 'h>> {
    if !conceptmax {
        return Ok(base);
    }
    let lex = lex.ok_or_else(|| CliError::input("--conceptmax requires --hierarchy"))?;
    let ctx = ConceptMaxContext::new(lex.view(), &lex.senses).with_seed(seed);
    Ok(Box::new(ConceptMaxScorer::new(base, ctx, Mode::Inference)))
}

fn file_stem(index: usize, e: &Event) -> String {
    let safe: String = e
        .to_string()
        .chars()
        .map(|c| if c.is_alphanumeric() || c == '-' || c == '_' || c == '.' { c } else { '_' })
        .collect();
    format!("{index:04}_{safe}")
}

fn grid_header(seed: u64, scorer: &str, e: &Event) -> Vec<(&'static str, String)> {
    vec![
        ("seed", seed.to_string()),
        ("scorer", scorer.to_string()),
        ("event", e.to_string()),
    ]
}

fn grid_bytes(g: &AbstractionGrid, header: &[(&str, String)]) -> CliResult<Vec<u8>> {
    let mut out = Vec::new();
    g.write_tsv(&mut out, header).map_err(|e| CliError::internal(e.to_string()))?;
    Ok(out)
}

fn cmd_extract(input: &Path, output: &Path, th: &Thresholds, skip_malformed: bool, seed: u64) -> CliResult<()> {
    let mut it = extract_triples(open(input)?);
    let events: Vec<Event> = it.by_ref().collect();
    let diag = it.into_diagnostics();
    if let Some(err) = diag.io_error {
        return Err(CliError::input(format!("{}: {err}", input.display())));
    }
    if !diag.malformed_lines.is_empty() && !skip_malformed {
        return Err(CliError::input(format!(
            "{}: malformed record at line {} ({} malformed sentence(s); pass --skip-malformed to ignore)",
            input.display(),
            diag.malformed_lines[0],
            diag.malformed_sentences
        )));
    }
    let corpus = abx::corpus::apply_filters(events, th.config());
    write_corpus(output, &corpus, &th.header(seed))?;
    eprintln!(
        "{} sentences, {} triples extracted, {} malformed skipped, {} distinct triples kept",
        diag.sentences,
        diag.extracted,
        diag.malformed_sentences,
        corpus.len()
    );
    Ok(())
}

fn cmd_filter(input: &Path, output: &Path, th: &Thresholds, seed: u64) -> CliResult<()> {
    let corpus = read_corpus(input)?;
    let filtered = filter_counts(corpus.counts().clone(), th.config());
    write_corpus(output, &filtered, &th.header(seed))
}

#[allow(clippy::too_many_arguments)]
fn cmd_train(
    corpus: &Path,
    output: &Path,
    lexicon: &LexiconArgs,
    conceptmax: bool,
    train_samples: usize,
    cfg: TrainConfig,
) -> CliResult<()> {
    let corpus = read_corpus(corpus)?;
    let lex = Lexicon::load(lexicon)?;
    if conceptmax {
        require(&lex, "--conceptmax")?;
    }
    let ctx = match (&lex, conceptmax) {
        (Some(l), true) => Some(
            ConceptMaxContext::new(l.view(), &l.senses)
                .with_train_samples(train_samples)
                .with_seed(cfg.seed),
        ),
        _ => None,
    };
    let set = build_training_set(&corpus, cfg.seed);
    if set.pairs.is_empty() {
        return Err(CliError::input("corpus yields no training pairs"));
    }
    let (model, report) = train(&set.pairs, &cfg, ctx.as_ref()).map_err(|e| CliError::internal(e.to_string()))?;
    let mut buf = Vec::new();
    model.write_to(&mut buf).map_err(|e| CliError::internal(e.to_string()))?;
    write_file(output, &buf)?;

    let mut log = Vec::new();
    write_header(
        &mut log,
        &[
            ("seed", cfg.seed.to_string()),
            ("conceptmax", conceptmax.to_string()),
            ("pairs", set.pairs.len().to_string()),
            ("skipped", set.skipped.to_string()),
            ("steps", report.steps.to_string()),
        ],
    );
    let _ = writeln!(log, "epoch\tloss");
    for (i, l) in report.epoch_losses.iter().enumerate() {
        let _ = writeln!(log, "{}\t{l:.6}", i + 1);
    }
    let mut log_path = output.as_os_str().to_owned();
    log_path.push(".log");
    write_file(Path::new(&log_path), &log)?;
    eprint!("{}", String::from_utf8_lossy(&log));
    Ok(())
}

fn cmd_score(args: &ScoringArgs, input: &Path, output: Option<&Path>) -> CliResult<()> {
    let events = read_events(input)?;
    let lex = Lexicon::load(&args.lexicon)?;
    let scorer = wrap(build_scorer(&args.scorer)?, args.conceptmax, lex.as_ref(), args.seed)?;
    let logits = scorer.logits(&events).map_err(|e| CliError::from_score(&e))?;
    let mut out = Vec::new();
    write_header(&mut out, &[("seed", args.seed.to_string()), ("scorer", scorer.name())]);
    let _ = writeln!(out, "subject\tverb\tobject\tlogit\tplausibility");
    for (e, z) in events.iter().zip(logits) {
        let _ = writeln!(out, "{}\t{}\t{}\t{z:.6}\t{:.6}", e.subject, e.verb, e.object, logistic(z));
    }
    match output {
        Some(p) => write_file(p, &out),
        None => io::stdout().write_all(&out).map_err(|e| CliError::internal(e.to_string())),
    }
}

fn cmd_grid(args: &ScoringArgs, input: &Path, out_dir: &Path) -> CliResult<()> {
    let events = read_events(input)?;
    let lex = Lexicon::load(&args.lexicon)?;
    require(&lex, "grid")?;
    let lex = lex.as_ref().expect("checked");
    let view = lex.view();
    let scorer = wrap(build_scorer(&args.scorer)?, args.conceptmax, Some(lex), args.seed)?;
    create_dir(out_dir)?;
    for (i, e) in events.iter().enumerate() {
        let abs = abstraction_events(&view, &lex.senses, e);
        let grid = score_grid(&*scorer, &lex.hierarchy, &abs)
            .map_err(CliError::from_grid)?
            .to_probabilities();
        let bytes = grid_bytes(&grid, &grid_header(args.seed, &scorer.name(), e))?;
        write_file(&out_dir.join(format!("{}.tsv", file_stem(i, e))), &bytes)?;
    }
    Ok(())
}

fn cmd_metrics(paths: &[PathBuf]) -> CliResult<()> {
    let mut grids = Vec::with_capacity(paths.len());
    for p in paths {
        grids.push(AbstractionGrid::read_tsv(open(p)?).map_err(|e| CliError::input(format!("{}: {e}", p.display())))?);
    }
    let r = consistency(&grids);
    println!("ccd={:.6}\nler={:.6}\nwindow_count={}", r.ccd, r.ler, r.window_count);
    Ok(())
}

fn cmd_eval(args: &ScoringArgs, input: &Path, out_dir: &Path, grids: bool, heatmaps: bool) -> CliResult<()> {
    let events: Vec<LabeledEvent> =
        read_labeled_events(open(input)?).map_err(|e| CliError::input(format!("{}: {e}", input.display())))?;
    let lex = Lexicon::load(&args.lexicon)?;
    require(&lex, "eval")?;
    let lex = lex.as_ref().expect("checked");
    let view = lex.view();
    let scorer = wrap(build_scorer(&args.scorer)?, args.conceptmax, Some(lex), args.seed)?;
    let report = evaluate(&*scorer, &view, &lex.senses, &events, args.seed).map_err(CliError::from_grid)?;

    create_dir(out_dir)?;
    write_file(&out_dir.join("report.txt"), report.table().as_bytes())?;
    write_file(&out_dir.join("report.kv"), report.key_values().as_bytes())?;
    write_file(&out_dir.join("events.tsv"), report.per_event_tsv().as_bytes())?;
    if grids {
        create_dir(&out_dir.join("grids"))?;
    }
    if heatmaps {
        create_dir(&out_dir.join("heatmaps"))?;
    }
    for (i, r) in report.events.iter().enumerate() {
        let stem = file_stem(i, &r.labeled.event);
        if grids {
            let bytes = grid_bytes(&r.grid, &grid_header(args.seed, &report.scorer, &r.labeled.event))?;
            write_file(&out_dir.join("grids").join(format!("{stem}.tsv")), &bytes)?;
        }
        if heatmaps {
            write_file(&out_dir.join("heatmaps").join(format!("{stem}.svg")), render_svg(&r.grid).as_bytes())?;
        }
    }
    print!("{}", report.table());
    Ok(())
}

fn cmd_heatmap(input: &Path, output: &Path) -> CliResult<()> {
    let grid = AbstractionGrid::read_tsv(open(input)?).map_err(|e| CliError::input(format!("{}: {e}", input.display())))?;
    let file = File::create(output).map_err(|e| CliError::internal(format!("{}: {e}", output.display())))?;
    let mut w = BufWriter::new(file);
    w.write_all(render_svg(&grid).as_bytes())
        .and_then(|_| w.flush())
        .map_err(|e| CliError::internal(e.to_string()))
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Extract {
            input,
            output,
            thresholds,
            skip_malformed,
            seed,
        } => cmd_extract(&input, &output, &thresholds, skip_malformed, seed),
        Command::Filter {
            input,
            output,
            thresholds,
            seed,
        } => cmd_filter(&input, &output, &thresholds, seed),
        Command::Train {
            corpus,
            output,
            lexicon,
            conceptmax,
            train_samples,
            epochs,
            batch_size,
            learning_rate,
            warmup_steps,
            dim,
            hidden,
            seed,
        } => {
            let cfg = TrainConfig {
                learning_rate,
                batch_size,
                epochs,
                warmup_steps,
                seed,
                dim,
                hidden,
                ..TrainConfig::default()
            };
            cfg.validate().map_err(|e| CliError::input(e.to_string()))?;
            cmd_train(&corpus, &output, &lexicon, conceptmax, train_samples, cfg)
        }
        Command::Score { scoring, input, output } => cmd_score(&scoring, &input, output.as_deref()),
        Command::Grid { scoring, input, out_dir } => cmd_grid(&scoring, &input, &out_dir),
        Command::Metrics { grids } => cmd_metrics(&grids),
        Command::Eval {
            scoring,
            input,
            out_dir,
            grids,
            heatmaps,
        } => cmd_eval(&scoring, &input, &out_dir, grids, heatmaps),
        Command::Heatmap { input, output } => cmd_heatmap(&input, &output),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("abx: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
