use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use cpgsum::checkpoint;
use cpgsum::config::{RunConfig, StaticAgg};
use cpgsum::corpus::{import_dir, read_jsonl, write_jsonl};
use cpgsum::cpg::{export_dot, export_json};
use cpgsum::error::{Error, ErrorClass};
use cpgsum::pipeline::{self, Retriever};
use cpgsum::retrieval::{Backend, RetrievalIndex};

/// Code summarization over code property graphs.
///
/// Set CPGSUM_LOG to `quiet`, `info` (default) or `debug` to control the
/// JSON event log on stderr.
#[derive(Parser)]
#[command(name = "cpgsum", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the code property graph of one function.
    BuildGraph {
        /// C source file, `-` for stdin.
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = GraphFormat::Json)]
        format: GraphFormat,
    },
    /// Build a retrieval index from a JSONL corpus.
    Index {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Similarity backend: `cosine` or `edit`.
        #[arg(long, visible_alias = "retrieval", default_value = "cosine")]
        backend: Backend,
    },
    /// Train a model and write a checkpoint.
    Train(TrainArgs),
    /// Beam-decode a corpus and score it.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        /// Report JSON destination; stdout when omitted.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Hypotheses JSONL destination.
        #[arg(long)]
        hypotheses: Option<PathBuf>,
        #[arg(long)]
        beam: Option<usize>,
        /// Retrieval index; defaults to the checkpoint's sidecar.
        #[arg(long)]
        index: Option<PathBuf>,
        /// Never retrieve a record's own id (for scoring the training corpus).
        #[arg(long)]
        exclude_self: bool,
    },
    /// Summarize a single function.
    Summarize {
        #[arg(long)]
        checkpoint: PathBuf,
        /// C source file, `-` for stdin.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        beam: Option<usize>,
        #[arg(long)]
        show_retrieval: bool,
        #[arg(long)]
        emit_attention: bool,
        /// Skip retrieval and the retrieved-graph injection.
        #[arg(long)]
        no_augment: bool,
        #[arg(long)]
        index: Option<PathBuf>,
    },
    /// Turn a directory of `.c` files with `.txt` summaries into JSONL.
    ImportDir {
        #[arg(long)]
        dir: PathBuf,
        /// JSONL destination; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum GraphFormat {
    Json,
    Dot,
}

#[derive(Args)]
struct TrainArgs {
    /// TOML run configuration; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    train: Option<PathBuf>,
    #[arg(long)]
    valid: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    hops: Option<usize>,
    #[arg(long)]
    dropout: Option<f64>,
    #[arg(long)]
    vocab_cap: Option<usize>,
    #[arg(long)]
    beam: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    target_loss: Option<f64>,
    /// Similarity backend: `cosine` or `edit`.
    #[arg(long, visible_alias = "retrieval")]
    backend: Option<Backend>,
    /// Static neighbour aggregation: `sum` or `mean`.
    #[arg(long)]
    static_agg: Option<StaticAgg>,
    #[arg(long)]
    no_retrieval: bool,
    #[arg(long)]
    no_static: bool,
    #[arg(long)]
    no_dynamic: bool,
    #[arg(long)]
    no_augment: bool,
}

#[derive(Clone, Copy, PartialEq, PartialOrd)]
enum Level {
    Quiet,
    Info,
    Debug,
}

fn log_level() -> Result<Level, Error> {
    match std::env::var("CPGSUM_LOG").as_deref() {
        Err(_) | Ok("") | Ok("info") => Ok(Level::Info),
        Ok("quiet") => Ok(Level::Quiet),
        Ok("debug") => Ok(Level::Debug),
        Ok(other) => Err(Error::Config(format!("CPGSUM_LOG must be quiet, info or debug, got `{other}`"))),
    }
}

/// Per-record events (`skip`, `missing-summary`) only show at `debug`.
fn emit(level: Level, event: &serde_json::Value) {
    let need = match event["event"].as_str() {
        Some("skip") | Some("missing-summary") => Level::Debug,
        _ => Level::Info,
    };
    if level >= need {
        eprintln!("{event}");
    }
}

fn read_source(path: &Path) -> Result<String, Error> {
    if path.as_os_str() == "-" {
        let mut s = String::new();
        std::io::stdin().read_to_string(&mut s)?;
        return Ok(s);
    }
    fs::read_to_string(path).map_err(|e| Error::Corpus(format!("cannot read {}: {e}", path.display())))
}

fn write_out(path: Option<&Path>, bytes: &[u8]) -> Result<(), Error> {
    match path {
        Some(p) => fs::write(p, bytes)?,
        None => std::io::stdout().write_all(bytes)?,
    }
    Ok(())
}

fn load_retriever(
    model: &cpgsum::model::Model,
    checkpoint_path: &Path,
    index: Option<&Path>,
) -> Result<Option<Retriever>, Error> {
    if !model.config.uses_retrieval() {
        return Ok(None);
    }
    let path = index.map(Path::to_path_buf).unwrap_or_else(|| checkpoint::index_path(checkpoint_path));
    let index = RetrievalIndex::load(&path)?;
    Ok(Some(Retriever::new(index, model)?))
}

fn train_config(args: &TrainArgs) -> Result<RunConfig, Error> {
    let mut cfg = match &args.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(p) = &args.train {
        cfg.train_corpus = Some(p.clone());
    }
    if let Some(p) = &args.valid {
        cfg.valid_corpus = Some(p.clone());
    }
    macro_rules! set {
        ($($f:ident),*) => { $(if let Some(v) = args.$f { cfg.$f = v; })* };
    }
    set!(epochs, batch, lr, d, hops, dropout, vocab_cap, beam, seed, backend, static_agg);
    if args.target_loss.is_some() {
        cfg.target_loss = args.target_loss;
    }
    cfg.retrieval &= !args.no_retrieval;
    cfg.no_static |= args.no_static;
    cfg.no_dynamic |= args.no_dynamic;
    cfg.no_augment |= args.no_augment;
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli, level: Level) -> Result<(), Error> {
    match cli.command {
        Command::BuildGraph { input, format } => {
            let graph = pipeline::graph_of(&read_source(&input)?)?;
            let text = match format {
                GraphFormat::Json => export_json(&graph),
                GraphFormat::Dot => export_dot(&graph),
            };
            write_out(None, text.as_bytes())
        }
        Command::Index { corpus, out, backend } => {
            let records = read_jsonl(&corpus)?;
            let (parsed, skipped) = pipeline::parse_records(&records);
            for (id, err) in &skipped {
                emit(level, &json!({"event": "skip", "id": id, "error": err}));
            }
            let cfg = RunConfig { backend, ..RunConfig::default() };
            let index = Retriever::build_index(&parsed, &cfg)?;
            index.save(&out)?;
            emit(level, &json!({"event": "index", "entries": index.entries.len(), "skipped": skipped.len()}));
            Ok(())
        }
        Command::Train(args) => {
            let cfg = train_config(&args)?;
            let train_path = cfg
                .train_corpus
                .clone()
                .ok_or_else(|| Error::Config("no training corpus given (--train or train_corpus)".into()))?;
            let train = read_jsonl(&train_path)?;
            let valid = match &cfg.valid_corpus {
                Some(p) => read_jsonl(p)?,
                None => Vec::new(),
            };
            let trained = pipeline::train(&cfg, &train, &valid, &mut |e| emit(level, &e))?;
            checkpoint::save(&trained.model, trained.report.best_epoch, &args.out)?;
            let sidecar = checkpoint::index_path(&args.out);
            match &trained.index {
                Some(index) => index.save(&sidecar)?,
                None if sidecar.exists() => fs::remove_file(&sidecar)?,
                None => {}
            }
            emit(
                level,
                &json!({"event": "saved", "checkpoint": args.out, "index": trained.index.is_some().then_some(sidecar)}),
            );
            Ok(())
        }
        Command::Evaluate { checkpoint: ckpt, corpus, report, hypotheses, beam, index, exclude_self } => {
            let (model, _) = checkpoint::load(&ckpt)?;
            let retriever = load_retriever(&model, &ckpt, index.as_deref())?;
            let records = read_jsonl(&corpus)?;
            let beam = beam.unwrap_or(model.config.beam);
            let eval = pipeline::evaluate(&model, retriever.as_ref(), &records, beam, exclude_self)?;
            if let Some(path) = hypotheses {
                let mut buf = Vec::new();
                for h in &eval.hypotheses {
                    serde_json::to_writer(&mut buf, h)?;
                    buf.push(b'\n');
                }
                fs::write(path, buf)?;
            }
            let mut text = serde_json::to_vec_pretty(&eval)?;
            text.push(b'\n');
            write_out(report.as_deref(), &text)?;
            emit(
                level,
                &json!({"event": "evaluated", "bleu4": eval.report.bleu4, "rouge_l": eval.report.rouge_l,
                        "meteor-exact": eval.report.meteor, "unparsed": eval.unparsed.len()}),
            );
            Ok(())
        }
        Command::Summarize { checkpoint: ckpt, input, beam, show_retrieval, emit_attention, no_augment, index } => {
            let code = read_source(&input)?;
            let (mut model, _) = checkpoint::load(&ckpt)?;
            if no_augment {
                model.config.no_augment = true;
                model.encoder.ablation.no_augment = true;
            }
            let retriever = load_retriever(&model, &ckpt, index.as_deref())?;
            let beam = beam.unwrap_or(model.config.beam);
            let out = pipeline::summarize(&model, retriever.as_ref(), &code, beam, emit_attention)?;
            let mut stdout = std::io::stdout().lock();
            writeln!(stdout, "{}", out.summary)?;
            if show_retrieval {
                match &out.retrieval {
                    Some(r) => writeln!(stdout, "{}", json!({"retrieved": r}))?,
                    None => writeln!(stdout, "{}", json!({"retrieved": null}))?,
                }
            }
            if emit_attention {
                writeln!(stdout, "{}", json!({"attention": out.attention}))?;
            }
            Ok(())
        }
        Command::ImportDir { dir, out } => {
            let (records, missing) = import_dir(&dir)?;
            for path in &missing {
                emit(level, &json!({"event": "missing-summary", "path": path}));
            }
            let mut buf = Vec::new();
            write_jsonl(&records, &mut buf)?;
            write_out(out.as_deref(), &buf)?;
            emit(level, &json!({"event": "imported", "records": records.len(), "missing": missing.len()}));
            Ok(())
        }
    }
}

fn fail(class: ErrorClass, message: &str) -> ExitCode {
    let line = message.lines().map(str::trim).filter(|l| !l.is_empty()).collect::<Vec<_>>().join(" ");
    eprintln!("cpgsum: error[{}]: {line}", class.tag());
    ExitCode::from(class.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("invalid arguments");
            return fail(ErrorClass::Usage, first.trim_start_matches("error: "));
        }
    };
    let level = match log_level() {
        Ok(l) => l,
        Err(e) => return fail(e.class(), &e.to_string()),
    };
    match run(cli, level) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e.class(), &e.to_string()),
    }
}
