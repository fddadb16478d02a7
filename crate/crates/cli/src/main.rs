use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use biosearch_core::eval::{self, Gain, DEFAULT_KS};
use biosearch_core::ingest::{ingest_document, Corpus, RecordFormat};
use biosearch_core::kg::{read_synonyms, read_triplets, write_graph, FacetField, FacetFilter, GraphFormat, KnowledgeSynthesizer, Ontology};
use biosearch_core::{Engine, EngineConfig};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "biosearch", version, about = "Hybrid retrieval over biomedical corpora")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert CORD-19 full-text records to native NDJSON.
    Convert {
        /// JSON files, NDJSON files, or directories of `.json` files.
        #[arg(long = "input", required = true, num_args = 1..)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Validate and clean a corpus, writing native NDJSON.
    Ingest {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Native)]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build the lexical, dense and triplet indexes into one directory.
    Index {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Native)]
        format: Format,
        /// Entity NDJSON used for linking.
        #[arg(long)]
        ontology: Option<PathBuf>,
        /// Relation synonym TSV (`variant<TAB>canonical`).
        #[arg(long)]
        synonyms: Option<PathBuf>,
        /// Extra triplet NDJSON merged into the store.
        #[arg(long)]
        triplets: Option<PathBuf>,
    },
    /// Ranked paragraphs for a query, one JSON record per line.
    Search {
        #[command(flatten)]
        index: IndexArgs,
        #[arg(long)]
        q: String,
        #[arg(long)]
        r: Option<usize>,
    },
    /// Triplets matching a query, one JSON record per line, then facet counts.
    Triplets {
        #[command(flatten)]
        index: IndexArgs,
        #[arg(long)]
        q: String,
        /// `field=value`, repeatable.
        #[arg(long = "facet")]
        facets: Vec<String>,
        #[arg(long)]
        k: Option<usize>,
    },
    /// Answer a question.
    Qa {
        #[command(flatten)]
        index: IndexArgs,
        #[arg(long)]
        q: String,
    },
    /// Spell-correct a query against the index vocabulary.
    Spell {
        #[command(flatten)]
        index: IndexArgs,
        #[arg(long)]
        q: String,
    },
    /// Score a run against qrels and/or predictions against gold answers.
    Eval {
        #[arg(long, requires = "qrels")]
        run: Option<PathBuf>,
        #[arg(long, requires = "run")]
        qrels: Option<PathBuf>,
        /// Cutoffs; defaults to 5, 10 and 20.
        #[arg(long = "k")]
        ks: Vec<usize>,
        #[arg(long, value_enum, default_value_t = GainArg::Linear)]
        gain: GainArg,
        #[arg(long, requires = "answers")]
        predictions: Option<PathBuf>,
        #[arg(long, requires = "predictions")]
        answers: Option<PathBuf>,
    },
    /// Export the triplet graph.
    ExportGraph {
        #[command(flatten)]
        index: IndexArgs,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value = "ndjson")]
        format: String,
    },
    /// Serve the HTTP API over an index snapshot.
    Serve {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        index: Option<PathBuf>,
        #[arg(long)]
        listen: Option<String>,
    },
}

#[derive(Args)]
struct IndexArgs {
    #[arg(long)]
    index: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Native,
    Cord19,
}

impl From<Format> for RecordFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Native => RecordFormat::Native,
            Format::Cord19 => RecordFormat::Cord19,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum GainArg {
    Linear,
    Exponential,
}

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

fn open(path: &Path) -> Result<BufReader<File>> {
    let f = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    Ok(BufReader::new(f))
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("cannot create {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn load_config(path: Option<&Path>) -> Result<EngineConfig> {
    let mut cfg = match path {
        Some(p) => EngineConfig::load(p)?,
        None => EngineConfig::default(),
    };
    cfg.apply_env();
    Ok(cfg)
}

fn load_engine(args: &IndexArgs) -> Result<Engine> {
    let mut cfg = load_config(args.config.as_deref())?;
    if let Some(dir) = &args.index {
        cfg.index_dir = Some(dir.clone());
    }
    let dir = cfg
        .index_dir
        .clone()
        .ok_or_else(|| usage("no index given (use --index or BIOSEARCH_INDEX)"))?;
    Ok(Engine::load(&dir, cfg)?)
}

fn read_corpus(path: &Path, format: RecordFormat) -> Result<Corpus> {
    Corpus::read_ndjson(open(path)?, format).with_context(|| format!("reading corpus {}", path.display()))
}

fn convert_inputs(inputs: &[PathBuf]) -> Result<Corpus> {
    let mut files = Vec::new();
    for input in inputs {
        if input.is_dir() {
            let mut found: Vec<PathBuf> = std::fs::read_dir(input)
                .with_context(|| format!("cannot list {}", input.display()))?
                .map(|e| e.map(|e| e.path()))
                .collect::<io::Result<_>>()?;
            found.retain(|p| p.extension().is_some_and(|e| e == "json"));
            found.sort();
            files.extend(found);
        } else {
            files.push(input.clone());
        }
    }
    let mut corpus = Corpus::new();
    for file in files {
        if file.extension().is_some_and(|e| e == "json") {
            let text = std::fs::read_to_string(&file).with_context(|| format!("cannot read {}", file.display()))?;
            let doc = ingest_document(&text, RecordFormat::Cord19).with_context(|| file.display().to_string())?;
            corpus.add(doc)?;
        } else {
            for doc in read_corpus(&file, RecordFormat::Cord19)?.into_documents() {
                corpus.add(doc)?;
            }
        }
    }
    Ok(corpus)
}

fn write_corpus(corpus: &Corpus, out: Option<&Path>) -> Result<()> {
    let mut w = output(out)?;
    for doc in corpus.documents() {
        serde_json::to_writer(&mut w, doc)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

fn parse_facets(raw: &[String]) -> Result<FacetFilter> {
    let mut filter = FacetFilter::new();
    for clause in raw {
        let (field, value) = clause
            .split_once('=')
            .ok_or_else(|| usage(format!("--facet expects field=value, got `{clause}`")))?;
        let field: FacetField = field
            .parse()
            .map_err(|_| usage(format!("unknown facet field `{field}`")))?;
        filter = filter.with(field, value);
    }
    Ok(filter)
}

fn print_line(w: &mut dyn Write, value: &impl serde::Serialize) -> Result<()> {
    serde_json::to_writer(&mut *w, value)?;
    w.write_all(b"\n")?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Convert { inputs, out } => {
            let corpus = convert_inputs(&inputs)?;
            write_corpus(&corpus, out.as_deref())?;
            log::info!("converted {} documents", corpus.len());
        }
        Command::Ingest { corpus, format, out } => {
            let corpus = read_corpus(&corpus, format.into())?;
            write_corpus(&corpus, out.as_deref())?;
            log::info!("ingested {} documents", corpus.len());
        }
        Command::Index {
            corpus,
            out,
            config,
            format,
            ontology,
            synonyms,
            triplets,
        } => {
            let cfg = load_config(config.as_deref())?;
            let docs = read_corpus(&corpus, format.into())?.into_documents();
            let mut synth = KnowledgeSynthesizer::default();
            if let Some(p) = ontology {
                synth.ontology = Ontology::read(open(&p)?).with_context(|| p.display().to_string())?;
            }
            if let Some(p) = synonyms {
                synth.synonyms = read_synonyms(open(&p)?).with_context(|| p.display().to_string())?;
            }
            let extra = match triplets {
                Some(p) => read_triplets(open(&p)?).with_context(|| p.display().to_string())?,
                None => Vec::new(),
            };
            let engine = Engine::build(&docs, cfg, &synth, extra)?;
            engine.save(&out)?;
            let reloaded = Engine::load(&out, engine.config().clone())?;
            let mut w = output(None)?;
            print_line(
                &mut w,
                &serde_json::json!({"stats": reloaded.stats(), "fingerprint": reloaded.fingerprint()}),
            )?;
            w.flush()?;
        }
        Command::Search { index, q, r } => {
            if r == Some(0) {
                return Err(usage("--r must be positive"));
            }
            let engine = load_engine(&index)?;
            let resp = engine.search(&q, r)?;
            let mut w = output(None)?;
            for hit in &resp.results {
                print_line(&mut w, hit)?;
            }
            w.flush()?;
        }
        Command::Triplets { index, q, facets, k } => {
            if k == Some(0) {
                return Err(usage("--k must be positive"));
            }
            let filter = parse_facets(&facets)?;
            let engine = load_engine(&index)?;
            let resp = engine.search_triplets(&q, &filter, k)?;
            let mut w = output(None)?;
            for hit in &resp.results {
                print_line(&mut w, hit)?;
            }
            print_line(&mut w, &serde_json::json!({ "facet_counts": resp.facet_counts }))?;
            w.flush()?;
        }
        Command::Qa { index, q } => {
            let engine = load_engine(&index)?;
            let mut w = output(None)?;
            print_line(&mut w, &engine.qa(&q)?)?;
            w.flush()?;
        }
        Command::Spell { index, q } => {
            let engine = load_engine(&index)?;
            let mut w = output(None)?;
            print_line(&mut w, &engine.spell(&q)?)?;
            w.flush()?;
        }
        Command::Eval {
            run,
            qrels,
            ks,
            gain,
            predictions,
            answers,
        } => {
            if run.is_none() && predictions.is_none() {
                return Err(usage("eval needs --run/--qrels and/or --predictions/--answers"));
            }
            let ks = if ks.is_empty() { DEFAULT_KS.to_vec() } else { ks };
            if ks.contains(&0) {
                return Err(usage("--k must be positive"));
            }
            let gain = match gain {
                GainArg::Linear => Gain::Linear,
                GainArg::Exponential => Gain::Exponential,
            };
            let retrieval = match (run, qrels) {
                (Some(run), Some(qrels)) => {
                    let run_data = eval::read_run(open(&run)?).with_context(|| run.display().to_string())?;
                    let qrels_data = eval::read_qrels(open(&qrels)?).with_context(|| qrels.display().to_string())?;
                    Some(eval::evaluate_run(&run_data, &qrels_data, &ks, gain)?)
                }
                _ => None,
            };
            let qa = match (predictions, answers) {
                (Some(p), Some(a)) => {
                    let preds = eval::read_answers(open(&p)?).with_context(|| p.display().to_string())?;
                    let golds = eval::read_answers(open(&a)?).with_context(|| a.display().to_string())?;
                    Some(eval::evaluate_answers(&preds, &golds))
                }
                _ => None,
            };
            let mut w = output(None)?;
            w.write_all(eval::format_report(retrieval.as_ref(), qa.as_ref()).as_bytes())?;
            w.flush()?;
        }
        Command::ExportGraph { index, out, format } => {
            let format: GraphFormat = format.parse().map_err(|e| usage(format!("{e}")))?;
            let engine = load_engine(&index)?;
            let mut w = output(out.as_deref())?;
            write_graph(&engine.export_graph(), format, &mut w)?;
            w.flush()?;
        }
        Command::Serve { config, index, listen } => {
            let mut cfg = load_config(config.as_deref())?;
            cfg.apply_overrides(listen, index.map(|p| p.display().to_string()));
            let state = biosearch_server::load_state(&cfg)?;
            biosearch_server::run(state, &cfg.service.listen)?;
        }
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return 1;
        }
        if let Some(e) = cause.downcast_ref::<biosearch_core::Error>() {
            return if e.is_data_error() { 2 } else { 3 };
        }
        if cause.is::<io::Error>() {
            return 3;
        }
        if cause.is::<serde_json::Error>() {
            return 2;
        }
    }
    2
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
