//! `hrot` command-line runner.
//!
//! Exit codes: 0 ok, 1 config error, 2 data error, 3 backend error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use hrot::config::{ClassifierKind, ConfigError, RunConfig};
use hrot::corpus::{ingest_corpus_lenient, CorpusFormat};
use hrot::evalmetrics::{build_report, diff_scores, ExternalScore, Layout, PredictionRecord, TableMode};
use hrot::jsonl::{read_jsonl, write_jsonl};
use hrot::llmgateway::MockEntry;
use hrot::pipeline::{self, missing_artifact, PipelineError, PREDICTIONS_FILE};
use hrot::promptkit::Strategy;
use hrot::retrieval::ScorerKind;
use hrot::tabletree::HeaderSource;

#[derive(Parser)]
#[command(name = "hrot", version, about = "Hybrid table-text QA pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct RunArgs {
    /// Run config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Override `output_dir`.
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

#[derive(clap::Args)]
struct RetrievalArgs {
    /// Override `retrieval.scorer` (lexical, oracle or external).
    #[arg(long)]
    scorer: Option<ScorerKind>,
    /// Relevance scores JSONL for the external scorer.
    #[arg(long)]
    scores: Option<PathBuf>,
    /// Type labels JSONL; switches the classifier to external.
    #[arg(long)]
    labels: Option<PathBuf>,
}

impl RetrievalArgs {
    fn apply(self, cfg: &mut RunConfig) {
        if let Some(s) = self.scorer {
            cfg.retrieval.scorer = s;
        }
        if self.scores.is_some() {
            cfg.scores = self.scores;
        }
        if self.labels.is_some() {
            cfg.classifier = ClassifierKind::External;
            cfg.labels = self.labels;
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Validate a corpus and write it in canonical JSONL form.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value = "canonical")]
        format: CorpusFormat,
        /// Header bands from markup, or inferred from cell contents.
        #[arg(long, default_value = "markup", value_parser = parse_header_source)]
        header_source: HeaderSource,
        /// Skip invalid records instead of failing.
        #[arg(long)]
        lenient: bool,
    },
    /// Classify and retrieve evidence; writes evidence.jsonl.
    Retrieve {
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        retrieval: RetrievalArgs,
    },
    /// Reconstruct tables from evidence.jsonl; writes reconstructions.jsonl.
    Reconstruct(RunArgs),
    /// Pick representative train questions and write demonstration stubs.
    SelectDemos {
        #[command(flatten)]
        run: RunArgs,
        /// Demonstrations per question type (defaults to `shots`).
        #[arg(long)]
        k: Option<usize>,
        /// Stub directory (defaults to `demo_dir`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overwrite existing stub files.
        #[arg(long)]
        force: bool,
    },
    /// Run the whole pipeline.
    Run {
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        retrieval: RetrievalArgs,
        #[arg(long)]
        strategy: Option<Strategy>,
        #[arg(long)]
        shots: Option<usize>,
        #[arg(long)]
        table_mode: Option<TableMode>,
    },
    /// Score a predictions file, optionally against external per-question scores.
    Eval {
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long, default_value = "main")]
        layout: Layout,
        /// JSONL of `{q_id, em, f1}` from another evaluator.
        #[arg(long)]
        external: Option<PathBuf>,
    },
    /// Render a report over one or more predictions files.
    Report {
        #[arg(long, default_value = "main")]
        layout: Layout,
        #[arg(long, required = true, num_args = 1..)]
        predictions: Vec<PathBuf>,
        /// Print JSON instead of the text table.
        #[arg(long)]
        json: bool,
    },
    /// Write a mock LLM script answering every fixture prompt from gold.
    AuthorMock {
        #[arg(long, required = true, num_args = 1..)]
        config: Vec<PathBuf>,
        #[arg(long)]
        output: PathBuf,
        /// Fail if the existing file differs instead of writing it.
        #[arg(long)]
        check: bool,
    },
}

fn parse_header_source(s: &str) -> Result<HeaderSource, String> {
    match s {
        "markup" => Ok(HeaderSource::Markup),
        "infer" => Ok(HeaderSource::Infer),
        _ => Err(format!("unknown header source `{s}` (expected markup or infer)")),
    }
}

fn load_config(args: &RunArgs) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(&args.config)?;
    if let Some(dir) = &args.output_dir {
        cfg.output_dir = dir.clone();
    }
    Ok(cfg)
}

fn read_predictions(path: &Path) -> Result<Vec<PredictionRecord<f64>>> {
    if !path.exists() {
        return Err(missing_artifact(path, "run").into());
    }
    Ok(read_jsonl(path)?)
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if let Some(p) = err.downcast_ref::<PipelineError>() {
        return p.exit_code() as u8;
    }
    if err.downcast_ref::<ConfigError>().is_some() {
        return 1;
    }
    2
}

/// The error chain, skipping causes already quoted by their parent.
fn render_error(err: &anyhow::Error) -> String {
    let mut msg = err.to_string();
    for cause in err.chain().skip(1) {
        let c = cause.to_string();
        if !msg.contains(&c) {
            msg = format!("{msg}: {c}");
        }
    }
    msg
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest {
            input,
            output,
            format,
            header_source,
            lenient,
        } => {
            let report = ingest_corpus_lenient::<f64>(&input, format, header_source)
                .with_context(|| format!("ingesting {}", input.display()))?;
            for e in &report.rejected {
                eprintln!("rejected: {e}");
            }
            if !lenient && !report.rejected.is_empty() {
                bail!(PipelineError::Data(format!(
                    "{} invalid records (use --lenient to skip them)",
                    report.rejected.len()
                )));
            }
            report.corpus.write_canonical(&output)?;
            let (docs, paragraphs, tables, questions) = report.corpus.counts();
            println!("documents={docs} questions={questions} tables={tables} paragraphs={paragraphs}");
        }
        Command::Retrieve { run, retrieval } => {
            let mut cfg = load_config(&run)?;
            retrieval.apply(&mut cfg);
            cfg.validate()?;
            let (ev, errs) = pipeline::run_retrieve::<f64>(&cfg)?;
            println!(
                "evidence for {} questions ({} errors) -> {}",
                ev.len(),
                errs.len(),
                cfg.output_dir.join(pipeline::EVIDENCE_FILE).display()
            );
        }
        Command::Reconstruct(args) => {
            let cfg = load_config(&args)?;
            let recs = pipeline::run_reconstruct::<f64>(&cfg)?;
            println!(
                "{} reconstructed tables -> {}",
                recs.len(),
                cfg.output_dir.join(pipeline::RECONSTRUCTIONS_FILE).display()
            );
        }
        Command::SelectDemos { run, k, out, force } => {
            let cfg = load_config(&run)?;
            let k = k.unwrap_or(cfg.shots.max(1));
            let dir = out
                .or_else(|| cfg.demo_dir.clone())
                .ok_or_else(|| PipelineError::Config("no --out and no demo_dir configured".into()))?;
            let stubs = pipeline::select_demo_stubs::<f64>(&cfg, k)?;
            fs::create_dir_all(&dir).with_context(|| dir.display().to_string())?;
            for s in &stubs {
                let path = dir.join(format!("{}.txt", s.demo_id));
                if path.exists() && !force {
                    bail!(PipelineError::Data(format!(
                        "{} exists (use --force to overwrite)",
                        path.display()
                    )));
                }
                fs::write(&path, s.to_file_string()).with_context(|| path.display().to_string())?;
                println!("{}", path.display());
            }
        }
        Command::Run {
            run,
            retrieval,
            strategy,
            shots,
            table_mode,
        } => {
            let mut cfg = load_config(&run)?;
            retrieval.apply(&mut cfg);
            if let Some(s) = strategy {
                cfg.strategy = s;
            }
            if let Some(k) = shots {
                cfg.shots = k;
            }
            if let Some(t) = table_mode {
                cfg.table_mode = t;
            }
            cfg.validate()?;
            let summary = pipeline::run_pipeline::<f64>(&cfg)?;
            println!(
                "questions={} errors={} backend_calls={} -> {}",
                summary.n_questions,
                summary.n_errors,
                summary.backend_calls,
                summary.output_dir.display()
            );
            if let Some(r) = summary.report {
                print!("{}", r.table);
            }
        }
        Command::Eval {
            predictions,
            layout,
            external,
        } => {
            let preds = read_predictions(&predictions)?;
            let report = build_report(&preds, layout).map_err(|e| PipelineError::Data(e.to_string()))?;
            print!("{}", report.table);
            if let Some(path) = external {
                let ext: Vec<ExternalScore> = read_jsonl(&path)?;
                let diff = diff_scores(&preds, &ext, 1e-6);
                println!("{}", serde_json::to_string_pretty(&diff)?);
                if !diff.is_clean() {
                    bail!(PipelineError::Data(format!(
                        "{} EM and {} F1 disagreements, {} missing",
                        diff.em_mismatches.len(),
                        diff.f1_mismatches.len(),
                        diff.missing.len()
                    )));
                }
            }
        }
        Command::Report {
            layout,
            predictions,
            json,
        } => {
            let mut all = Vec::new();
            for p in &predictions {
                let p = if p.is_dir() {
                    p.join(PREDICTIONS_FILE)
                } else {
                    p.clone()
                };
                all.extend(read_predictions(&p)?);
            }
            let report = build_report(&all, layout).map_err(|e| PipelineError::Data(e.to_string()))?;
            if json {
                println!("{}", serde_json::to_string_pretty(&report)?);
            } else {
                print!("{}", report.table);
            }
        }
        Command::AuthorMock { config, output, check } => {
            let cfgs = config
                .iter()
                .map(|c| RunConfig::load(c))
                .collect::<Result<Vec<_>, _>>()?;
            let entries = pipeline::author_mock_script::<f64>(&cfgs)?;
            if check {
                let current: Vec<MockEntry> = if output.exists() {
                    read_jsonl(&output)?
                } else {
                    Vec::new()
                };
                if current != entries {
                    bail!(PipelineError::Data(format!(
                        "{} is stale; rerun without --check",
                        output.display()
                    )));
                }
                println!("{} entries up to date", entries.len());
            } else {
                write_jsonl(&output, &entries)?;
                println!("{} entries -> {}", entries.len(), output.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", render_error(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}
