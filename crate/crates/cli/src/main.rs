use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use latgen_core::decoder::{self, format_result, BeamConfig, RandomMode};
use latgen_core::grammar::{parse_grammar, parse_lexicon, Category, Realizer};
use latgen_core::lattice::{read_lattice, write_lattice, Lattice};
use latgen_core::lm::{self, corrected_score, LmConfig, NGramModel, ScoredSentence};
use latgen_core::morphology::{load_exceptions_with_limit, ExceptionTable, DEFAULT_EXCEPTION_WARN_SIZE};
use latgen_core::semantics::parse_spl;

/// Bad flags or flag combinations: exit code 1.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

#[derive(Parser, Debug)]
#[command(name = "latgen", version, about = "Generate sentences from semantic inputs via word lattices and n-gram models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train an n-gram model from a plain-text corpus.
    Train(TrainArgs),
    /// Build a word lattice from an SPL input.
    Generate(GenerateArgs),
    /// Extract sentences from a lattice.
    Extract(ExtractArgs),
    /// Score sentences (one pre-tokenized sentence per line).
    Score(ScoreArgs),
    /// Score and rank sentences, best first.
    Rank(RankArgs),
    /// Print lattice statistics.
    Stats(StatsArgs),
    /// Check a lattice, grammar, lexicon, SPL input or model file.
    Validate(ValidateArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Default)]
enum Format {
    #[default]
    Text,
    Records,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Strategy {
    Statistical,
    Random,
    Default,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u8).range(2..=3))]
    order: u8,
    #[arg(long)]
    out: PathBuf,
    /// Minimum probability mass reserved for unseen continuations.
    #[arg(long, default_value_t = LmConfig::default().unseen_floor)]
    unseen_floor: f64,
    #[arg(long, value_enum, default_value_t)]
    format: Format,
}

#[derive(Args, Debug)]
struct GrammarFiles {
    #[arg(long)]
    grammar: PathBuf,
    #[arg(long)]
    lexicon: PathBuf,
    /// Irregular forms: `lemma<TAB>feature<TAB>form[,form]` per line.
    #[arg(long)]
    exceptions: Option<PathBuf>,
    /// Warn when the exception table grows past this many entries.
    #[arg(long, default_value_t = DEFAULT_EXCEPTION_WARN_SIZE)]
    exception_warn_size: usize,
}

#[derive(Args, Debug)]
struct GenerateArgs {
    #[command(flatten)]
    files: GrammarFiles,
    #[arg(long)]
    input: PathBuf,
    /// Category to realize the input as.
    #[arg(long, default_value = "s")]
    goal: String,
    /// Where to write the lattice.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t)]
    format: Format,
}

#[derive(Args, Debug)]
struct ExtractArgs {
    #[arg(long)]
    lattice: PathBuf,
    #[arg(long, value_enum, default_value_t = Strategy::Statistical)]
    strategy: Strategy,
    #[arg(long)]
    model: Option<PathBuf>,
    /// Number of results for the statistical strategy.
    #[arg(long, default_value_t = 5)]
    n: usize,
    /// Hypotheses kept per state and LM context (defaults to N).
    #[arg(long)]
    beam: Option<usize>,
    /// Hypotheses kept per state overall; makes the search approximate.
    #[arg(long)]
    global_beam: Option<usize>,
    /// Seed for the random strategy; chosen and printed when absent.
    #[arg(long)]
    seed: Option<u64>,
    /// Pick uniformly among outgoing arcs instead of among whole paths.
    #[arg(long)]
    per_arc: bool,
    #[arg(long, value_enum, default_value_t)]
    format: Format,
}

#[derive(Args, Debug)]
struct ScoreArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, conflicts_with = "file", required_unless_present = "file")]
    sentence: Option<String>,
    #[arg(long)]
    file: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t)]
    format: Format,
}

#[derive(Args, Debug)]
struct RankArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    file: PathBuf,
    #[arg(long, value_enum, default_value_t)]
    format: Format,
}

#[derive(Args, Debug)]
struct StatsArgs {
    #[arg(long)]
    lattice: PathBuf,
    #[arg(long, value_enum, default_value_t)]
    format: Format,
}

#[derive(Args, Debug)]
struct ValidateArgs {
    #[arg(long)]
    lattice: Option<PathBuf>,
    #[arg(long)]
    grammar: Option<PathBuf>,
    #[arg(long, requires = "grammar")]
    lexicon: Option<PathBuf>,
    #[arg(long)]
    spl: Option<PathBuf>,
    #[arg(long)]
    model: Option<PathBuf>,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn load_model(path: &Path) -> Result<NGramModel> {
    lm::read_model(&read(path)?).with_context(|| format!("{}", path.display()))
}

fn load_lattice(path: &Path) -> Result<Lattice> {
    read_lattice(&read(path)?).with_context(|| format!("{}", path.display()))
}

fn load_exception_table(files: &GrammarFiles) -> Result<ExceptionTable> {
    match &files.exceptions {
        Some(p) => load_exceptions_with_limit(&read(p)?, files.exception_warn_size)
            .with_context(|| format!("{}", p.display())),
        None => Ok(ExceptionTable::new()),
    }
}

fn record(s: &ScoredSentence, rank: Option<usize>) -> serde_json::Value {
    let mut v = json!({
        "sentence": s.text(),
        "words": s.words,
        "logprob": s.logprob,
        "corrected": s.corrected,
    });
    if let Some(k) = rank {
        v["rank"] = json!(k);
    }
    v
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let text = read(&args.corpus)?;
    let sentences = lm::tokenize(&text);
    let config = LmConfig { unseen_floor: args.unseen_floor };
    let model = lm::train(&sentences, args.order as usize, config).map_err(|e| match e {
        lm::LmError::BadFloor(_) | lm::LmError::BadOrder(_) => usage(e.to_string()),
        other => anyhow::Error::new(other).context(format!("{}", args.corpus.display())),
    })?;
    write(&args.out, &lm::write_model(&model))?;
    let types = model.vocab().len() - 3;
    match args.format {
        Format::Text => println!(
            "{} sentences, {} tokens, {} types; order {} model written to {}",
            model.sentences(),
            model.corpus_tokens(),
            types,
            model.order(),
            args.out.display()
        ),
        Format::Records => println!(
            "{}",
            json!({
                "sentences": model.sentences(),
                "tokens": model.corpus_tokens(),
                "types": types,
                "order": model.order(),
                "out": args.out.display().to_string(),
            })
        ),
    }
    Ok(())
}

fn cmd_generate(args: GenerateArgs) -> Result<()> {
    let grammar_path = &args.files.grammar;
    let grammar = parse_grammar(&read(grammar_path)?).with_context(|| format!("{}", grammar_path.display()))?;
    let lexicon_path = &args.files.lexicon;
    let lexicon = parse_lexicon(&read(lexicon_path)?).with_context(|| format!("{}", lexicon_path.display()))?;
    let exceptions = load_exception_table(&args.files)?;
    let input_text = read(&args.input)?;
    let input = parse_spl(&input_text).with_context(|| format!("{}", args.input.display()))?;
    if !grammar.has_category(&args.goal) {
        return Err(usage(format!("goal category {} is not declared by the grammar", args.goal)));
    }
    let realizer = Realizer::new(&grammar, &lexicon, &exceptions)?;
    let lattice = realizer.realize(&input, &Category::new(&args.goal))?;
    let stats = lattice.stats()?;
    if let Some(out) = &args.out {
        write(out, &write_lattice(&lattice))?;
    }
    match args.format {
        Format::Text => {
            println!("INPUT\n{}\nLATTICE CREATED\n{stats}", input_text.trim_end());
        }
        Format::Records => println!(
            "{}",
            json!({
                "nodes": stats.nodes,
                "arcs": stats.arcs,
                "paths": stats.paths.to_string(),
                "distinct_unigrams": stats.distinct_unigrams,
                "distinct_bigrams": stats.distinct_bigrams,
            })
        ),
    }
    Ok(())
}

fn cmd_extract(args: ExtractArgs) -> Result<()> {
    if args.strategy == Strategy::Statistical && args.model.is_none() {
        return Err(usage("--strategy statistical requires --model"));
    }
    let lattice = load_lattice(&args.lattice)?;
    match args.strategy {
        Strategy::Default => {
            let words = decoder::default_path(&lattice)?;
            match args.format {
                Format::Text => println!("DEFAULT EXTRACTION\n{}", words.join(" ")),
                Format::Records => println!("{}", json!({ "strategy": "default", "sentence": words.join(" "), "words": words })),
            }
        }
        Strategy::Random => {
            let seed = args.seed.unwrap_or_else(|| {
                SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_nanos() as u64).unwrap_or(0)
            });
            let mode = if args.per_arc { RandomMode::UniformArc } else { RandomMode::UniformPath };
            let words = decoder::random_path(&lattice, seed, mode)?;
            match args.format {
                Format::Text => println!("RANDOM EXTRACTION (seed {seed})\n{}", words.join(" ")),
                Format::Records => println!(
                    "{}",
                    json!({ "strategy": "random", "seed": seed, "sentence": words.join(" "), "words": words })
                ),
            }
        }
        Strategy::Statistical => {
            let model = load_model(args.model.as_deref().unwrap())?;
            let config = BeamConfig { n: args.n, k: args.beam.unwrap_or(args.n), global_beam: args.global_beam };
            if config.k < config.n {
                return Err(usage(format!("--beam {} must be at least --n {}", config.k, config.n)));
            }
            let results = decoder::nbest(&lattice, &model, config)?;
            let title = if model.order() == 2 { "BIGRAM" } else { "TRIGRAM" };
            match args.format {
                Format::Text => {
                    println!("STATISTICAL {title} EXTRACTION");
                    for (i, s) in results.iter().enumerate() {
                        println!("{}", format_result(i + 1, s));
                    }
                }
                Format::Records => {
                    for (i, s) in results.iter().enumerate() {
                        println!("{}", record(s, Some(i + 1)));
                    }
                }
            }
        }
    }
    Ok(())
}

fn sentence_lines(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .map(|l| l.split_whitespace().map(String::from).collect::<Vec<_>>())
        .filter(|w| !w.is_empty())
        .collect()
}

fn cmd_score(args: ScoreArgs) -> Result<()> {
    let model = load_model(&args.model)?;
    let sentences = match (&args.sentence, &args.file) {
        (Some(s), _) => vec![s.split_whitespace().map(String::from).collect()],
        (None, Some(p)) => sentence_lines(&read(p)?),
        (None, None) => unreachable!("clap requires one of --sentence or --file"),
    };
    for words in &sentences {
        let s = corrected_score(&model, words);
        match args.format {
            Format::Text => println!("{}\t{:.6}\t[ {:.6} ]", s.text(), s.logprob, s.corrected),
            Format::Records => println!("{}", record(&s, None)),
        }
    }
    Ok(())
}

fn cmd_rank(args: RankArgs) -> Result<()> {
    let model = load_model(&args.model)?;
    let sentences = sentence_lines(&read(&args.file)?);
    for (i, s) in decoder::rank_sentences(&model, &sentences).iter().enumerate() {
        match args.format {
            Format::Text => println!("{}", format_result(i + 1, s)),
            Format::Records => println!("{}", record(s, Some(i + 1))),
        }
    }
    Ok(())
}

fn cmd_stats(args: StatsArgs) -> Result<()> {
    let stats = load_lattice(&args.lattice)?.stats()?;
    match args.format {
        Format::Text => println!("{stats}"),
        Format::Records => println!(
            "{}",
            json!({
                "nodes": stats.nodes,
                "arcs": stats.arcs,
                "paths": stats.paths.to_string(),
                "distinct_unigrams": stats.distinct_unigrams,
                "distinct_bigrams": stats.distinct_bigrams,
            })
        ),
    }
    Ok(())
}

fn cmd_validate(args: ValidateArgs) -> Result<()> {
    let mut checked = 0;
    if let Some(p) = &args.lattice {
        let l = load_lattice(p)?;
        println!("{}: valid lattice ({} states, {} arcs)", p.display(), l.num_states(), l.num_arcs());
        checked += 1;
    }
    if let Some(g) = &args.grammar {
        let grammar = parse_grammar(&read(g)?).with_context(|| format!("{}", g.display()))?;
        println!("{}: {} rules, {} categories", g.display(), grammar.rules().len(), grammar.categories().len());
        if let Some(lx) = &args.lexicon {
            let lexicon = parse_lexicon(&read(lx)?).with_context(|| format!("{}", lx.display()))?;
            let none = ExceptionTable::new();
            Realizer::new(&grammar, &lexicon, &none).with_context(|| format!("{}", lx.display()))?;
            println!("{}: {} entries", lx.display(), lexicon.len());
        }
        checked += 1;
    }
    if let Some(p) = &args.spl {
        let node = parse_spl(&read(p)?).with_context(|| format!("{}", p.display()))?;
        println!("{}: depth {}", p.display(), node.depth());
        checked += 1;
    }
    if let Some(p) = &args.model {
        let m = load_model(p)?;
        println!("{}: order {} model, {} tokens", p.display(), m.order(), m.corpus_tokens());
        checked += 1;
    }
    if checked == 0 {
        return Err(usage("nothing to validate: pass --lattice, --grammar, --spl or --model"));
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::new().parse_filters("warn").init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Generate(a) => cmd_generate(a),
        Command::Extract(a) => cmd_extract(a),
        Command::Score(a) => cmd_score(a),
        Command::Rank(a) => cmd_rank(a),
        Command::Stats(a) => cmd_stats(a),
        Command::Validate(a) => cmd_validate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
