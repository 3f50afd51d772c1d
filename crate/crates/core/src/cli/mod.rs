//! The `attrex` command line: training, tagging, annotation, evaluation and
//! format conversion over the library modules.
//!
//! Exit codes: 0 success, 2 config error, 3 data error, 4 model mismatch,
//! 5 endpoint unreachable.

mod config;
mod tagger;

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::annotate::{annotate_corpus, AnnotationRunReport, ChatClient, HttpClient, ReplayClient};
use crate::corpus::{
    read_annotations, read_conll, read_conll_open, record_to_query, split, synth_corpus, write_annotations,
    write_conll, AnnotationRecord, Grammar, Pair, Source,
};
use crate::crf::{train, CrfModel, Hypothesis};
use crate::drc::{build_pair_dataset, train_drc, DrcModel};
use crate::encoder::SpanEncoder;
use crate::eval::{evaluate, hsr, read_judgments};
use crate::schema::{tokenize, EntitySpan, Schema, TaggedQuery};

pub use config::{parse_pairs, sub_seed, RunConfig};
pub use tagger::{Decoder, Tagged, Tagger};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitKind {
    Config = 2,
    Data = 3,
    Model = 4,
    Endpoint = 5,
}

#[derive(Debug, Error)]
#[error("{message}")]
pub struct CliError {
    pub kind: ExitKind,
    pub message: String,
}

impl CliError {
    pub fn config(m: impl Into<String>) -> Self {
        CliError {
            kind: ExitKind::Config,
            message: m.into(),
        }
    }

    pub fn data(m: impl Into<String>) -> Self {
        CliError {
            kind: ExitKind::Data,
            message: m.into(),
        }
    }

    pub fn model(m: impl Into<String>) -> Self {
        CliError {
            kind: ExitKind::Model,
            message: m.into(),
        }
    }

    pub fn endpoint(m: impl Into<String>) -> Self {
        CliError {
            kind: ExitKind::Endpoint,
            message: m.into(),
        }
    }

    pub fn code(&self) -> u8 {
        self.kind as u8
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "attrex",
    version,
    about = "Product attribute extraction for e-commerce queries"
)]
pub struct Cli {
    /// Flat `key = value` config file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override a config key, e.g. `--set crf.epochs=8`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,
    /// Root seed; overrides the config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Only log warnings and errors.
    #[arg(short, long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train the CRF tagger.
    TrainCrf {
        /// Training corpus (.conll or .jsonl); defaults to corpus.train.
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the decorative-relation classifier.
    TrainDrc {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Tag queries, one per line, and print JSON Lines.
    Tag {
        #[command(flatten)]
        stack: StackArgs,
        /// Query file; standard input when absent.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Output file; standard output when absent.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Annotate queries with a chat model.
    Annotate {
        /// Query file, one per line.
        #[arg(long)]
        queries: PathBuf,
        /// Replay file of recorded responses instead of the live endpoint.
        #[arg(long)]
        mock: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Score a tagger (or a predictions file) against a gold corpus.
    Eval {
        #[arg(long)]
        gold: Option<PathBuf>,
        #[command(flatten)]
        stack: StackArgs,
        /// Predictions as `tag` output or annotation records, in gold order.
        #[arg(long)]
        predictions: Option<PathBuf>,
        /// Add one row per attribute kind.
        #[arg(long)]
        per_attribute: bool,
        /// Add the macro-averaged row.
        #[arg(long = "macro")]
        macro_avg: bool,
        /// Only score records marked ambiguous.
        #[arg(long)]
        ambiguous_only: bool,
        /// Write `<prefix>.json` and `<prefix>.txt`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Convert between CoNLL and annotation JSON Lines.
    Convert {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, value_enum)]
        from: Option<Format>,
        #[arg(long, value_enum)]
        to: Option<Format>,
    },
    /// Generate a synthetic annotated corpus.
    Synth {
        #[arg(long, default_value_t = 2000)]
        n: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write train/dev/test splits into this directory.
        #[arg(long)]
        split_dir: Option<PathBuf>,
    },
    /// Human satisfaction rates from a judgments file.
    Hsr {
        #[arg(long)]
        judgments: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Switch {
    On,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Conll,
    Jsonl,
}

#[derive(Debug, Args)]
pub struct StackArgs {
    /// CRF model file.
    #[arg(long)]
    pub crf: Option<PathBuf>,
    /// DRC model file, used with `--drc on`.
    #[arg(long)]
    pub drc_model: Option<PathBuf>,
    /// Hypotheses to report per query.
    #[arg(long, default_value_t = 1)]
    pub k: usize,
    #[arg(long, value_enum, default_value_t = Switch::Off)]
    pub drc: Switch,
    #[arg(long, value_enum, default_value_t = Decoder::Crf)]
    pub decoder: Decoder,
}

/// Parses the process arguments, runs, and maps errors to exit codes.
pub fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet { "warn" } else { "info" };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .target(env_logger::Target::Stderr)
        .try_init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let text = match &cli.config {
        Some(p) => Some(fs::read_to_string(p).map_err(|e| CliError::config(format!("{}: {e}", p.display())))?),
        None => None,
    };
    let mut overrides = Vec::new();
    for o in &cli.overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| CliError::config(format!("--set expects KEY=VALUE, got {o:?}")))?;
        overrides.push((k.trim().to_string(), v.trim().to_string()));
    }
    if let Some(s) = cli.seed {
        overrides.push(("seed".into(), s.to_string()));
    }
    RunConfig::build(text.as_deref(), &overrides)
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = load_config(&cli)?;
    match cli.command {
        Command::TrainCrf { corpus, out } => cmd_train_crf(&cfg, corpus, out),
        Command::TrainDrc { corpus, out } => cmd_train_drc(&cfg, corpus, out),
        Command::Tag { stack, input, output } => cmd_tag(&cfg, &stack, input, output),
        Command::Annotate {
            queries,
            mock,
            out,
            report,
        } => cmd_annotate(&cfg, &queries, mock, out, report),
        Command::Eval {
            gold,
            stack,
            predictions,
            per_attribute,
            macro_avg,
            ambiguous_only,
            out,
        } => cmd_eval(
            &cfg,
            gold,
            &stack,
            predictions,
            EvalFlags {
                per_attribute,
                macro_avg,
                ambiguous_only,
            },
            out,
        ),
        Command::Convert {
            input,
            output,
            from,
            to,
        } => cmd_convert(&cfg, &input, &output, from, to),
        Command::Synth { n, out, split_dir } => cmd_synth(&cfg, n, out, split_dir),
        Command::Hsr { judgments, out } => cmd_hsr(&cfg, &judgments, out),
    }
}

fn open(path: &Path) -> Result<BufReader<fs::File>, CliError> {
    fs::File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::data(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, contents).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

fn format_of(path: &Path, explicit: Option<Format>) -> Format {
    explicit.unwrap_or_else(|| match path.extension().and_then(|e| e.to_str()) {
        Some("jsonl") | Some("json") => Format::Jsonl,
        _ => Format::Conll,
    })
}

/// One gold query plus whether its record carried the ambiguity marker.
struct GoldItem {
    query: TaggedQuery,
    ambiguous: bool,
}

fn keep_for_training(r: &AnnotationRecord, cfg: &RunConfig) -> bool {
    cfg.include_unreviewed || r.source != Source::Llm || r.review_verdict == Some(true)
}

fn load_corpus(path: &Path, schema: &Schema, cfg: &RunConfig, training: bool) -> Result<Vec<GoldItem>, CliError> {
    let reader = open(path)?;
    let data = |e: &dyn std::fmt::Display| CliError::data(format!("{}: {e}", path.display()));
    match format_of(path, None) {
        Format::Conll => Ok(read_conll(reader, schema)
            .map_err(|e| data(&e))?
            .into_iter()
            .map(|query| GoldItem {
                query,
                ambiguous: false,
            })
            .collect()),
        Format::Jsonl => {
            let records = read_annotations(reader).map_err(|e| data(&e))?;
            let mut out = Vec::with_capacity(records.len());
            let mut skipped = 0;
            for r in &records {
                if training && !keep_for_training(r, cfg) {
                    skipped += 1;
                    continue;
                }
                let (query, drops) = record_to_query(r, schema, &cfg.aliases).map_err(|e| data(&e))?;
                if !drops.is_empty() {
                    log::debug!("{:?}: {} pair(s) not aligned", r.query, drops.len());
                }
                out.push(GoldItem {
                    query,
                    ambiguous: r.is_ambiguous(),
                });
            }
            if skipped > 0 {
                log::info!("skipped {skipped} unreviewed or review-failed LLM records");
            }
            Ok(out)
        }
    }
}

fn corpus_path(given: Option<PathBuf>, fallback: &Option<PathBuf>) -> Result<PathBuf, CliError> {
    given
        .or_else(|| fallback.clone())
        .ok_or_else(|| CliError::config("no corpus given (use --corpus or corpus.train)"))
}

fn cmd_train_crf(cfg: &RunConfig, corpus: Option<PathBuf>, out: Option<PathBuf>) -> Result<(), CliError> {
    let schema = cfg.load_schema()?;
    let path = corpus_path(corpus, &cfg.train)?;
    let queries: Vec<TaggedQuery> = load_corpus(&path, &schema, cfg, true)?
        .into_iter()
        .map(|g| g.query)
        .collect();
    log::info!("training CRF on {} queries from {}", queries.len(), path.display());
    let model = train(&queries, &schema, &cfg.encoder, &cfg.crf).map_err(|e| CliError::data(e.to_string()))?;
    let out = out.unwrap_or_else(|| cfg.output_dir.join("crf.json"));
    let mut buf = Vec::new();
    model.save(&mut buf).map_err(|e| CliError::data(e.to_string()))?;
    write_file(&out, &String::from_utf8(buf).expect("model JSON is UTF-8"))?;
    log::info!("final loss {:.4}; wrote {}", model.meta().final_loss, out.display());
    Ok(())
}

fn cmd_train_drc(cfg: &RunConfig, corpus: Option<PathBuf>, out: Option<PathBuf>) -> Result<(), CliError> {
    let schema = cfg.load_schema()?;
    let path = corpus_path(corpus, &cfg.train)?;
    let queries: Vec<TaggedQuery> = load_corpus(&path, &schema, cfg, true)?
        .into_iter()
        .map(|g| g.query)
        .collect();
    let enc = SpanEncoder::from_config(&cfg.encoder).map_err(|e| CliError::data(e.to_string()))?;
    let data =
        build_pair_dataset(&queries, &schema, &enc, cfg.sampler_seed()).map_err(|e| CliError::data(e.to_string()))?;
    log::info!(
        "DRC pairs: {} positive, {} negative",
        data.positives(),
        data.negatives()
    );
    let model = train_drc(&data, &cfg.drc).map_err(|e| CliError::data(e.to_string()))?;
    let out = out.unwrap_or_else(|| cfg.output_dir.join("drc.json"));
    let mut buf = Vec::new();
    model.save(&mut buf).map_err(|e| CliError::data(e.to_string()))?;
    write_file(&out, &String::from_utf8(buf).expect("model JSON is UTF-8"))?;
    log::info!("wrote {}", out.display());
    Ok(())
}

fn load_crf(path: &Path, schema: Option<&Schema>) -> Result<CrfModel, CliError> {
    CrfModel::load(open(path)?, schema).map_err(|e| CliError::model(format!("{}: {e}", path.display())))
}

fn build_tagger(cfg: &RunConfig, stack: &StackArgs) -> Result<Tagger, CliError> {
    let crf_path = stack.crf.clone().unwrap_or_else(|| cfg.output_dir.join("crf.json"));
    let schema = match &cfg.schema {
        Some(_) => Some(cfg.load_schema()?),
        None => None,
    };
    let crf = load_crf(&crf_path, schema.as_ref())?;
    let drc = match stack.drc {
        Switch::Off => None,
        Switch::On => {
            let p = stack
                .drc_model
                .clone()
                .unwrap_or_else(|| cfg.output_dir.join("drc.json"));
            let m = DrcModel::load(open(&p)?, None).map_err(|e| CliError::model(format!("{}: {e}", p.display())))?;
            Some(m)
        }
    };
    Tagger::new(crf, drc, stack.k, stack.decoder)
}

fn span_json(s: &EntitySpan, schema: &Schema) -> Value {
    json!({ "kind": schema.name(s.kind), "value": s.value, "start": s.start, "end": s.end })
}

fn hypothesis_json(h: &Hypothesis, tokens: &[String], schema: &Schema) -> Value {
    let spans: Vec<Value> = h.spans(tokens).iter().map(|s| span_json(s, schema)).collect();
    json!({ "rank": h.rank, "log_score": h.log_score, "posterior": h.posterior, "spans": spans })
}

fn tagged_json(query: &str, tokens: &[String], t: &Tagged, k: usize, schema: &Schema) -> Value {
    let mut obj = Map::new();
    obj.insert("query".into(), query.into());
    obj.insert("spans".into(), t.spans.iter().map(|s| span_json(s, schema)).collect());
    if let Some(h) = &t.chosen {
        obj.insert("rank".into(), h.rank.into());
    }
    if k > 1 {
        let hyps: Vec<Value> = t
            .hypotheses
            .iter()
            .take(k)
            .map(|h| hypothesis_json(h, tokens, schema))
            .collect();
        obj.insert("hypotheses".into(), hyps.into());
    }
    if let Some(d) = &t.decision {
        let scores: Vec<Value> = d
            .scores
            .iter()
            .map(|s| {
                let verdicts: Vec<Value> = s
                    .verdicts
                    .iter()
                    .map(|v| json!({ "attr": v.attr.value, "ptype": v.ptype.value, "probability": v.probability, "valid": v.valid }))
                    .collect();
                json!({ "rank": s.rank, "score": s.score, "verdicts": verdicts })
            })
            .collect();
        obj.insert("drc".into(), json!({ "applied": d.applied, "scores": scores }));
    }
    Value::Object(obj)
}

fn cmd_tag(
    cfg: &RunConfig,
    stack: &StackArgs,
    input: Option<PathBuf>,
    output: Option<PathBuf>,
) -> Result<(), CliError> {
    let tagger = build_tagger(cfg, stack)?;
    let schema = tagger.crf().schema().clone();
    let reader: Box<dyn BufRead> = match &input {
        Some(p) => Box::new(open(p)?),
        None => Box::new(BufReader::new(std::io::stdin())),
    };
    let mut out = String::new();
    for line in reader.lines() {
        let line = line.map_err(|e| CliError::data(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let tokens = tokenize(&line);
        let tagged = tagger.tag(&tokens)?;
        if let Some(d) = &tagged.decision {
            let scores: Vec<String> = d
                .scores
                .iter()
                .map(|s| format!("#{}={}", s.rank, s.score.map_or("-".to_string(), |v| v.to_string())))
                .collect();
            log::info!("{line:?}: drc scores [{}], chose #{}", scores.join(" "), d.chosen.rank);
        }
        out.push_str(&tagged_json(line.trim(), &tokens, &tagged, stack.k, &schema).to_string());
        out.push('\n');
    }
    match output {
        Some(p) => write_file(&p, &out),
        None => std::io::stdout()
            .write_all(out.as_bytes())
            .map_err(|e| CliError::data(e.to_string())),
    }
}

fn pct(x: f64) -> String {
    format!("{x:.2}")
}

fn cmd_annotate(
    cfg: &RunConfig,
    queries: &Path,
    mock: Option<PathBuf>,
    out: Option<PathBuf>,
    report_path: Option<PathBuf>,
) -> Result<(), CliError> {
    let schema = cfg.load_schema()?;
    let mut text = String::new();
    open(queries)?
        .read_to_string(&mut text)
        .map_err(|e| CliError::data(format!("{}: {e}", queries.display())))?;
    let qs: Vec<String> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect();
    let client: Box<dyn ChatClient> = match &mock {
        Some(p) => Box::new(ReplayClient::read(open(p)?).map_err(|e| CliError::data(format!("{}: {e}", p.display())))?),
        None => Box::new(HttpClient::new(&cfg.annotate.endpoint).map_err(|e| CliError::config(e.to_string()))?),
    };
    let (records, report) =
        annotate_corpus(&qs, &schema, client.as_ref(), &cfg.annotate).map_err(|e| CliError::config(e.to_string()))?;
    let out = out.unwrap_or_else(|| cfg.output_dir.join("annotations.jsonl"));
    write_file(&out, &write_annotations(&records))?;
    let report_path = report_path.unwrap_or_else(|| cfg.output_dir.join("annotation_report.json"));
    write_file(&report_path, &(report_json(&report).to_string() + "\n"))?;
    println!("queries:       {}", report.total);
    println!(
        "format valid:  {}% ({})",
        pct(report.format_valid_rate()),
        report.format_valid
    );
    println!(
        "review passed: {}% ({})",
        pct(report.review_pass_rate()),
        report.review_pass
    );
    println!("failures:      {}", report.failures);
    for (reason, n) in &report.drops {
        println!("dropped {reason}: {n}");
    }
    if mock.is_none() && report.total > 0 && report.failures == report.total {
        return Err(CliError::endpoint(format!(
            "endpoint {} unreachable for every query",
            cfg.annotate.endpoint.base_url
        )));
    }
    Ok(())
}

fn report_json(r: &AnnotationRunReport) -> Value {
    let mut v = serde_json::to_value(r).expect("report serializes");
    v["format_valid_rate"] = json!(r.format_valid_rate());
    v["review_pass_rate"] = json!(r.review_pass_rate());
    v
}

struct EvalFlags {
    per_attribute: bool,
    macro_avg: bool,
    ambiguous_only: bool,
}

/// Predicted spans from a `tag` output line or an annotation record.
fn predicted_spans(line: &str, schema: &Schema, cfg: &RunConfig) -> Result<(String, Vec<EntitySpan>), CliError> {
    let v: Value = serde_json::from_str(line).map_err(|e| CliError::data(format!("predictions: {e}")))?;
    let query = v["query"].as_str().unwrap_or_default().to_string();
    let tokens = tokenize(&query);
    if let Some(spans) = v.get("spans").and_then(Value::as_array) {
        let mut out = Vec::with_capacity(spans.len());
        for s in spans {
            let kind = s["kind"].as_str().and_then(|k| schema.lookup(k));
            let (start, end) = (s["start"].as_u64(), s["end"].as_u64());
            match (kind, start, end) {
                (Some(k), Some(a), Some(b)) if a <= b && (b as usize) < tokens.len() => {
                    out.push(EntitySpan::new(k, a as usize, b as usize, &tokens))
                }
                _ => {
                    return Err(CliError::model(format!(
                        "predictions: span {s} does not fit the schema or query"
                    )))
                }
            }
        }
        return Ok((query, out));
    }
    let record: AnnotationRecord =
        serde_json::from_value(v).map_err(|e| CliError::data(format!("predictions: {e}")))?;
    let (q, _) = record_to_query(&record, schema, &cfg.aliases).map_err(|e| CliError::data(e.to_string()))?;
    Ok((record.query, q.spans()))
}

fn cmd_eval(
    cfg: &RunConfig,
    gold: Option<PathBuf>,
    stack: &StackArgs,
    predictions: Option<PathBuf>,
    flags: EvalFlags,
    out: Option<PathBuf>,
) -> Result<(), CliError> {
    let gold_path = gold
        .or_else(|| cfg.test.clone())
        .ok_or_else(|| CliError::config("no gold corpus (use --gold or corpus.test)"))?;
    let tagger = match &predictions {
        Some(_) => None,
        None => Some(build_tagger(cfg, stack)?),
    };
    let schema = match (&tagger, &cfg.schema) {
        (Some(t), None) => t.crf().schema().clone(),
        _ => cfg.load_schema()?,
    };
    let mut items = load_corpus(&gold_path, &schema, cfg, false)?;
    if flags.ambiguous_only {
        items.retain(|g| g.ambiguous);
    }
    let gold_queries: Vec<TaggedQuery> = items.into_iter().map(|g| g.query).collect();

    let report = match (&tagger, &predictions) {
        (Some(t), _) => evaluate(&gold_queries, &schema, |tokens| t.tag(tokens).map(|x| x.spans)),
        (None, Some(p)) => {
            let lines: Vec<String> = open(p)?
                .lines()
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| CliError::data(e.to_string()))?
                .into_iter()
                .filter(|l| !l.trim().is_empty())
                .collect();
            if lines.len() != gold_queries.len() {
                return Err(CliError::data(format!(
                    "{} predictions for {} gold records",
                    lines.len(),
                    gold_queries.len()
                )));
            }
            let mut it = lines.iter().zip(&gold_queries);
            evaluate(&gold_queries, &schema, |_| {
                let (line, g) = it.next().expect("counts checked");
                let (query, spans) = predicted_spans(line, &schema, cfg)?;
                if tokenize(&query) != g.tokens() {
                    return Err(CliError::data(format!("prediction for {query:?} is out of gold order")));
                }
                Ok::<_, CliError>(spans)
            })
        }
        (None, None) => unreachable!("tagger is built when no predictions are given"),
    }
    .map_err(|e| CliError::data(e.to_string()))?;

    let mut report = report;
    let mut echo: Map<String, Value> = cfg.echo().into_iter().map(|(k, v)| (k, Value::String(v))).collect();
    echo.insert("gold".into(), gold_path.display().to_string().into());
    echo.insert("decoder".into(), format!("{:?}", stack.decoder).to_lowercase().into());
    echo.insert("drc".into(), (stack.drc == Switch::On).into());
    echo.insert("k".into(), stack.k.into());
    echo.insert("ambiguous_only".into(), flags.ambiguous_only.into());
    if let Some(p) = &predictions {
        echo.insert("predictions".into(), p.display().to_string().into());
    }
    report.config = echo;
    let table = report.to_table(flags.per_attribute, flags.macro_avg);
    print!("{table}");
    if let Some(prefix) = out {
        let json = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
        write_file(&prefix.with_extension("json"), &json)?;
        write_file(&prefix.with_extension("txt"), &table)?;
    }
    Ok(())
}

fn cmd_convert(
    cfg: &RunConfig,
    input: &Path,
    output: &Path,
    from: Option<Format>,
    to: Option<Format>,
) -> Result<(), CliError> {
    let (from, to) = (format_of(input, from), format_of(output, to));
    let data = |e: &dyn std::fmt::Display| CliError::data(format!("{}: {e}", input.display()));
    let text = match (from, to) {
        (Format::Conll, Format::Jsonl) => {
            let (schema, queries) = match &cfg.schema {
                Some(_) => {
                    let s = cfg.load_schema()?;
                    let q = read_conll(open(input)?, &s).map_err(|e| data(&e))?;
                    (s, q)
                }
                None => read_conll_open(open(input)?).map_err(|e| data(&e))?,
            };
            let records: Vec<AnnotationRecord> = queries
                .iter()
                .map(|q| {
                    let pairs = q
                        .spans()
                        .iter()
                        .map(|s| Pair::new(schema.name(s.kind), &s.value))
                        .collect();
                    AnnotationRecord::new(q.text(), pairs, Source::Human)
                })
                .collect();
            write_annotations(&records)
        }
        (Format::Jsonl, Format::Conll) => {
            let schema = cfg.load_schema()?;
            let records = read_annotations(open(input)?).map_err(|e| data(&e))?;
            let mut queries = Vec::with_capacity(records.len());
            for (i, r) in records.iter().enumerate() {
                let (q, drops) = record_to_query(r, &schema, &cfg.aliases).map_err(|e| data(&e))?;
                for (j, reason) in drops {
                    let p = &r.pairs[j];
                    eprintln!(
                        "record {}: {}: {:?} dropped ({})",
                        i + 1,
                        p.kind,
                        p.value,
                        reason.as_str()
                    );
                }
                queries.push(q);
            }
            write_conll(&queries, &schema)
        }
        (Format::Conll, Format::Conll) => {
            let (schema, queries) = read_conll_open(open(input)?).map_err(|e| data(&e))?;
            write_conll(&queries, &schema)
        }
        (Format::Jsonl, Format::Jsonl) => write_annotations(&read_annotations(open(input)?).map_err(|e| data(&e))?),
    };
    write_file(output, &text)
}

fn cmd_synth(cfg: &RunConfig, n: usize, out: Option<PathBuf>, split_dir: Option<PathBuf>) -> Result<(), CliError> {
    let schema = cfg.load_schema()?;
    let grammar = match &cfg.grammar {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| CliError::config(format!("{}: {e}", p.display())))?;
            Grammar::parse(&text).map_err(|e| CliError::config(format!("{}: {e}", p.display())))?
        }
        None => Grammar::default_grammar(),
    };
    let records = synth_corpus(&grammar, &schema, n, cfg.corpus_seed()).map_err(|e| CliError::config(e.to_string()))?;
    let out = out.unwrap_or_else(|| cfg.output_dir.join("synth.jsonl"));
    write_file(&out, &write_annotations(&records))?;
    log::info!("wrote {} records to {}", records.len(), out.display());
    if let Some(dir) = split_dir {
        let (tr, dv, te) = split(&records, &cfg.split).map_err(|e| CliError::config(e.to_string()))?;
        for (name, part) in [("train", tr), ("dev", dv), ("test", te)] {
            write_file(&dir.join(format!("{name}.jsonl")), &write_annotations(&part))?;
        }
    }
    Ok(())
}

fn cmd_hsr(cfg: &RunConfig, judgments: &Path, out: Option<PathBuf>) -> Result<(), CliError> {
    let schema = cfg.load_schema()?;
    let j = read_judgments(open(judgments)?, Some(&schema))
        .map_err(|e| CliError::data(format!("{}: {e}", judgments.display())))?;
    let report = hsr(&j);
    print!("{}", report.to_table());
    if let Some(p) = out {
        write_file(
            &p,
            &(serde_json::to_string_pretty(&report).expect("report serializes") + "\n"),
        )?;
    }
    Ok(())
}
