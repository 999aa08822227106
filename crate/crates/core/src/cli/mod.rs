//! Command-line surface over the library.

pub mod config;

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::corpus::{
    default_gazetteer, make_synthetic_corpus_with_log, SyntheticDesign,load_corpus, read_corpus, write_corpus, Article, CanonicalOrder, CorpusError, LoadMode};
use crate::embed::{EmbeddingProvider, HttpProvider, ProviderError, StubProvider};
use crate::evalsuite::report::{bar_chart_svg, log_line_chart_svg, write_csv, write_json, write_table};
use crate::evalsuite::{
    ablate_fields, ablate_order, ablate_topk, perplexity, perplexity_model, AblationTable, EvalError, Experiment,
    MaskPolicy,
};
use crate::generate::{generate_field, generate_greedy, SamplerConfig};
use crate::lm::{load_checkpoint, load_checkpoint_forced, save_checkpoint, LmError, ModelConfig};
use crate::ner::{build_candidate_index, ner_recall, oracle_entities, parse_gazetteer, visual_ner, CandidateIndex, GazetteerTagger};
use crate::pipeline::{build_documents, train_on_documents, ClipContext, DocConfig, NeContext, NeSource, FIELD_ABLATIONS};
use crate::retrieval::{evaluate_retrieval, RetrievalMode, RetrievalRecord};
use crate::serializer::{generation_context, AnnotatedDocument};
use crate::tokenizer::{train_bpe, Vocab};

use config::{RunConfig, DEFAULT_PROVIDER_DIM};

#[derive(Debug, Parser)]
#[command(name = "newsgen", version, about = "Entity-aware structured article modeling")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Flags shared by every subcommand; each one overrides the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct Common {
    /// TOML run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Tab-separated `surface<TAB>CATEGORY` lines.
    #[arg(long)]
    pub gazetteer: Option<PathBuf>,
    #[arg(long)]
    pub order: Option<String>,
    #[arg(long)]
    pub ne_source: Option<String>,
    #[arg(long)]
    pub scope: Option<String>,
    #[arg(long)]
    pub k: Option<usize>,
    /// `stub` or an http endpoint.
    #[arg(long)]
    pub provider: Option<String>,
    #[arg(long)]
    pub provider_dim: Option<usize>,
    #[arg(long)]
    pub provider_fallback: bool,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub seq_len: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Where to write the run manifest (default: next to the main output).
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum AblationKind {
    Fields,
    Topk,
    Order,
    Scale,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PolicyArg {
    Body,
    All,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a seeded synthetic corpus and its gazetteer.
    Synth {
        #[arg(long, default_value_t = 500)]
        n: usize,
        #[arg(long, default_value_t = 300)]
        gazetteer_size: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        gazetteer_out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Serialize a corpus into annotated documents (JSONL).
    Prepare {
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Learn a BPE vocabulary from prepared documents (or the corpus).
    TrainTokenizer {
        #[arg(long)]
        docs: Option<PathBuf>,
        #[arg(long, default_value_t = 8192)]
        vocab_size: usize,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Train a model on prepared documents.
    Train {
        #[arg(long)]
        docs: Option<PathBuf>,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Body perplexity of a checkpoint.
    EvalPpl {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        docs: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = PolicyArg::Body)]
        policy: PolicyArg,
        /// Accept a checkpoint trained with a different tokenizer.
        #[arg(long)]
        force: bool,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Ablation tables (JSON and CSV) over fields, top-k, order or model size.
    Ablate {
        #[arg(long, value_enum)]
        kind: AblationKind,
        #[arg(long)]
        vocab: Option<PathBuf>,
        #[arg(long, default_value_t = 1024)]
        vocab_size: usize,
        #[arg(long, default_value_t = 400)]
        n_train: usize,
        #[arg(long, default_value_t = 100)]
        n_eval: usize,
        /// Comma-separated config names (fields) or model presets (scale).
        #[arg(long)]
        configs: Option<String>,
        #[arg(long, default_value = "0,10,20")]
        ks: String,
        /// Checkpoint to score (order).
        #[arg(long)]
        ckpt: Option<PathBuf>,
        /// Semicolon-separated field lists (order); the configured order is always included.
        #[arg(long)]
        orders: Option<String>,
        #[arg(long)]
        out_dir: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Generate a body from a context.
    Generate {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        /// A serialized prefix ending in `<start-body>`, or one JSON article.
        #[arg(long)]
        context_file: PathBuf,
        #[arg(long, default_value_t = 0.95)]
        p: f64,
        #[arg(long, default_value_t = 1.0)]
        temperature: f64,
        #[arg(long, default_value_t = 256)]
        max_new_tokens: usize,
        #[arg(long)]
        greedy: bool,
        #[arg(long)]
        strip_categories: bool,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Top-k entities for each article's first image.
    VisualNer {
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Image/article Recall@K.
    Retrieve {
        #[arg(long, default_value = "ne-ea")]
        mode: String,
        #[arg(long, default_value = "1,5,10")]
        ks: String,
        #[arg(long, default_value_t = 100)]
        sample: usize,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Render SVG charts from ablation, scaling or retrieval JSON.
    Report {
        #[arg(long, required = true, num_args = 1..)]
        input: Vec<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
        #[command(flatten)]
        common: Common,
    },
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Synth { common, .. }
            | Command::Prepare { common, .. }
            | Command::TrainTokenizer { common, .. }
            | Command::Train { common, .. }
            | Command::EvalPpl { common, .. }
            | Command::Ablate { common, .. }
            | Command::Generate { common, .. }
            | Command::VisualNer { common, .. }
            | Command::Retrieve { common, .. }
            | Command::Report { common, .. } => common,
        }
    }

    fn name(&self) -> &'static str {
        match self {
            Command::Synth { .. } => "synth",
            Command::Prepare { .. } => "prepare",
            Command::TrainTokenizer { .. } => "train-tokenizer",
            Command::Train { .. } => "train",
            Command::EvalPpl { .. } => "eval-ppl",
            Command::Ablate { .. } => "ablate",
            Command::Generate { .. } => "generate",
            Command::VisualNer { .. } => "visual-ner",
            Command::Retrieve { .. } => "retrieve",
            Command::Report { .. } => "report",
        }
    }
}

fn flags_config(c: &Common) -> Result<RunConfig> {
    let mut cfg = RunConfig {
        corpus: c.corpus.clone(),
        gazetteer: c.gazetteer.clone(),
        order: c.order.clone(),
        ne_source: c.ne_source.as_deref().map(str::parse).transpose()?,
        scope: c.scope.clone(),
        k: c.k,
        provider: c.provider.clone(),
        provider_dim: c.provider_dim,
        provider_fallback: c.provider_fallback.then_some(true),
        seed: c.seed,
        ..Default::default()
    };
    cfg.model.preset = c.preset.clone();
    cfg.train.steps = c.steps;
    cfg.train.batch_size = c.batch_size;
    cfg.train.seq_len = c.seq_len;
    cfg.train.max_lr = c.lr;
    Ok(cfg)
}

fn resolve_config(c: &Common) -> Result<RunConfig> {
    let flags = flags_config(c)?;
    Ok(match &c.config {
        Some(p) => RunConfig::load(p)?.merge(&flags),
        None => flags,
    })
}

/// Reproducibility record written by every run.
#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub argv: Vec<String>,
    pub config: RunConfig,
    pub config_fingerprint: String,
    pub seed: u64,
    pub version: String,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<String>,
}

#[derive(Debug, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

struct Run {
    command: &'static str,
    argv: Vec<String>,
    cfg: RunConfig,
    manifest: Option<PathBuf>,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
}

impl Run {
    fn input(&mut self, p: &Path) {
        self.inputs.push(p.to_path_buf());
    }

    fn output(&mut self, p: &Path) {
        self.outputs.push(p.to_path_buf());
    }

    fn finish(self) -> Result<()> {
        let Some(primary) = self.outputs.first() else { return Ok(()) };
        let path = self.manifest.clone().unwrap_or_else(|| {
            if primary.is_dir() {
                primary.join("manifest.json")
            } else {
                PathBuf::from(format!("{}.manifest.json", primary.display()))
            }
        });
        let config_json = serde_json::to_string(&self.cfg)?;
        let inputs = self
            .inputs
            .iter()
            .map(|p| Ok(FileDigest { path: p.display().to_string(), sha256: sha256_file(p)? }))
            .collect::<Result<Vec<_>>>()?;
        let m = Manifest {
            command: self.command.to_string(),
            argv: self.argv,
            config_fingerprint: hex::encode(Sha256::digest(config_json.as_bytes())),
            seed: self.cfg.seed(),
            config: self.cfg,
            version: env!("CARGO_PKG_VERSION").to_string(),
            inputs,
            outputs: self.outputs.iter().map(|p| p.display().to_string()).collect(),
        };
        write_json(&path, &m).with_context(|| format!("writing manifest {}", path.display()))
    }
}

/// Parses the process arguments, runs the subcommand and returns the exit code.
pub fn run() -> i32 {
    let argv: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli.command, argv) {
        Ok(()) => 0,
        Err(e) => {
            let msg = format!("{e:#}").replace('\n', " ");
            eprintln!("error[{}]: {msg}", failure_class(&e));
            exit_code(&e)
        }
    }
}

fn failure_class(e: &anyhow::Error) -> &'static str {
    for cause in e.chain() {
        if cause.is::<ProviderError>() {
            return "provider";
        }
        if cause.is::<CorpusError>() || cause.is::<std::io::Error>() {
            return "input";
        }
        if cause.is::<LmError>() || cause.is::<EvalError>() {
            return "model";
        }
    }
    "config"
}

fn exit_code(e: &anyhow::Error) -> i32 {
    match failure_class(e) {
        "input" => 3,
        "config" => 4,
        "model" => 5,
        _ => 6,
    }
}

/// Runs one parsed subcommand.
pub fn execute(command: Command, argv: Vec<String>) -> Result<()> {
    let common = command.common().clone();
    let cfg = resolve_config(&common)?;
    let mut run = Run { command: command.name(), argv, cfg: cfg.clone(), manifest: common.manifest.clone(), inputs: vec![], outputs: vec![] };
    if let Some(p) = &common.config {
        run.input(p);
    }
    match command {
        Command::Synth { n, gazetteer_size, out, gazetteer_out, .. } => {
            let gaz = default_gazetteer(cfg.seed(), gazetteer_size);
            let corpus = make_synthetic_corpus_with_log(cfg.seed(), n, &gaz, &SyntheticDesign::default())?;
            write_corpus(&out, &corpus.articles)?;
            let mut g = String::new();
            for (s, c) in &gaz {
                g.push_str(&format!("{s}\t{}\n", c.as_str()));
            }
            std::fs::write(&gazetteer_out, g)?;
            run.output(&out);
            run.output(&gazetteer_out);
        }
        Command::Prepare { out, .. } => {
            let docs = prepare_docs(&cfg, &mut run)?;
            write_jsonl(&out, &docs)?;
            run.output(&out);
        }
        Command::TrainTokenizer { docs, vocab_size, out, .. } => {
            let docs = docs_from(&cfg, docs.as_deref(), &mut run)?;
            let texts: Vec<&str> = docs.iter().map(|d| d.serialized.as_str()).collect();
            let vocab = train_bpe(&texts, vocab_size)?;
            vocab.save(&out)?;
            run.output(&out);
        }
        Command::Train { docs, vocab, out, .. } => {
            let docs = docs_from(&cfg, docs.as_deref(), &mut run)?;
            let vocab = load_vocab(&vocab, &mut run)?;
            let model_cfg = cfg.model_config(vocab.len())?;
            let trained = train_on_documents(&docs, &vocab, &model_cfg, &cfg.train_config()?)?;
            save_checkpoint(&trained.checkpoint, &out)?;
            let log = PathBuf::from(format!("{}.log.csv", out.display()));
            write_csv(&log, &trained.report.steps)?;
            run.output(&out);
            run.output(&log);
        }
        Command::EvalPpl { ckpt, vocab, docs, policy, force, out, .. } => {
            let docs = docs_from(&cfg, docs.as_deref(), &mut run)?;
            let vocab = load_vocab(&vocab, &mut run)?;
            run.input(&ckpt);
            let policy = match policy {
                PolicyArg::Body => MaskPolicy::Body,
                PolicyArg::All => MaskPolicy::All,
            };
            let report = if force {
                let ck = load_checkpoint_forced(&ckpt)?;
                perplexity_model(&ck.model()?, &vocab, &docs, policy, 4)?
            } else {
                let ck = load_checkpoint(&ckpt, &vocab.hash())?;
                perplexity(&ck, &vocab, &docs, policy)?
            };
            write_json(&out, &report)?;
            println!("ppl {:.6} over {} tokens", report.ppl, report.n_tokens);
            run.output(&out);
        }
        Command::Ablate { kind, vocab, vocab_size, n_train, n_eval, configs, ks, ckpt, orders, out_dir, .. } => {
            std::fs::create_dir_all(&out_dir)?;
            run.output(&out_dir);
            let table = ablate(&cfg, &mut run, kind, vocab, vocab_size, (n_train, n_eval), configs, &ks, ckpt, orders, &out_dir)?;
            for r in &table.rows {
                println!("{}\t{}\t{:.4}", r.config, r.order.as_deref().unwrap_or(""), r.ppl);
            }
        }
        Command::Generate { ckpt, vocab, context_file, p, temperature, max_new_tokens, greedy, strip_categories, out, .. } => {
            let vocab = load_vocab(&vocab, &mut run)?;
            run.input(&ckpt);
            run.input(&context_file);
            let model = load_checkpoint(&ckpt, &vocab.hash())?.model()?;
            let context = read_context(&cfg, &context_file)?;
            let g = if greedy {
                generate_greedy(&model, &vocab, &context, max_new_tokens)?
            } else {
                let sc = SamplerConfig { p, temperature, max_new_tokens, seed: cfg.seed() };
                generate_field(&model, &vocab, &context, &sc)?
            };
            let text = if strip_categories { &g.stripped } else { &g.text };
            match &out {
                Some(path) => {
                    write_json(path, &g)?;
                    run.output(path);
                }
                None => println!("{text}"),
            }
        }
        Command::VisualNer { out, .. } => {
            let articles = load_articles(&cfg, &mut run)?;
            let tagger = build_tagger(&cfg, &articles, &mut run)?;
            let provider = make_provider(&cfg)?;
            let mut index = build_candidate_index(&articles, &tagger);
            index.embed_with(provider.as_ref())?;
            let k = cfg.k.unwrap_or(config::DEFAULT_K);
            let mut rows = Vec::new();
            for a in &articles {
                let Some(image) = a.image_refs.first() else { continue };
                let predicted = visual_ner(image, &index, provider.as_ref(), k)?;
                let gold = oracle_entities(a, &tagger);
                let recall = ner_recall(&predicted, &gold).ok();
                rows.push(serde_json::json!({"id": a.id, "image": image, "k": k, "entities": predicted, "recall": recall}));
            }
            write_jsonl(&out, &rows)?;
            run.output(&out);
        }
        Command::Retrieve { mode, ks, sample, out, .. } => {
            let articles = load_articles(&cfg, &mut run)?;
            let tagger = build_tagger(&cfg, &articles, &mut run)?;
            let provider = make_provider(&cfg)?;
            let mode: RetrievalMode = mode.parse()?;
            let ks = parse_usize_list(&ks)?;
            let records = evaluate_retrieval(&articles, mode, provider.as_ref(), &tagger, &ks, sample, cfg.seed())?;
            write_json(&out, &records)?;
            run.output(&out);
        }
        Command::Report { input, out_dir, .. } => {
            std::fs::create_dir_all(&out_dir)?;
            for path in &input {
                run.input(path);
                let svg = render_report(path)?;
                let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("report");
                let target = out_dir.join(format!("{stem}.svg"));
                std::fs::write(&target, svg)?;
                run.output(&target);
            }
        }
    }
    run.finish()
}

fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?);
    for r in rows {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

fn read_docs(path: &Path) -> Result<Vec<AnnotatedDocument>> {
    let f = std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).with_context(|| format!("{}:{}: not a prepared document", path.display(), i + 1))?);
    }
    Ok(out)
}

fn load_articles(cfg: &RunConfig, run: &mut Run) -> Result<Vec<Article>> {
    let path = cfg.corpus.as_ref().ok_or_else(|| anyhow!("no corpus given (--corpus or `corpus` in the config)"))?;
    run.input(path);
    Ok(load_corpus(path)?)
}

fn load_vocab(path: &Path, run: &mut Run) -> Result<Vocab> {
    run.input(path);
    Ok(Vocab::load(path)?)
}

/// Tagger over the gazetteer file (if any) plus every entity the corpus supplies.
fn build_tagger(cfg: &RunConfig, articles: &[Article], run: &mut Run) -> Result<GazetteerTagger> {
    let mut pairs = Vec::new();
    if let Some(p) = &cfg.gazetteer {
        run.input(p);
        pairs = parse_gazetteer(&std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)?;
    }
    let mut tagger = GazetteerTagger::new(pairs.iter().map(|(s, c)| (s.as_str(), *c)));
    for a in articles {
        for e in a.oracle_entities.iter().flatten() {
            tagger.insert(&e.surface, e.category);
        }
    }
    Ok(tagger)
}

fn make_provider(cfg: &RunConfig) -> Result<Box<dyn EmbeddingProvider>> {
    let dim = cfg.provider_dim.unwrap_or(DEFAULT_PROVIDER_DIM);
    let stub = || Box::new(StubProvider::new(dim, cfg.seed())) as Box<dyn EmbeddingProvider>;
    match cfg.provider.as_deref() {
        None | Some("stub") => Ok(stub()),
        Some(url) => {
            let connected = match cfg.provider_dim {
                Some(d) => HttpProvider::connect_expecting(url, d),
                None => HttpProvider::connect(url),
            };
            match connected {
                Ok(p) => Ok(Box::new(p)),
                Err(ProviderError::Transport(_)) if cfg.provider_fallback == Some(true) => {
                    eprintln!("warning: provider {url} unreachable, using the stub");
                    Ok(stub())
                }
                Err(e) => Err(e.into()),
            }
        }
    }
}

fn prepare_docs(cfg: &RunConfig, run: &mut Run) -> Result<Vec<AnnotatedDocument>> {
    let articles = load_articles(cfg, run)?;
    let doc_cfg = cfg.doc_config()?;
    docs_for(cfg, &articles, &doc_cfg, run)
}

fn docs_for(cfg: &RunConfig, articles: &[Article], doc_cfg: &DocConfig, run: &mut Run) -> Result<Vec<AnnotatedDocument>> {
    let tagger = build_tagger(cfg, articles, run)?;
    let clip = clip_parts(cfg, articles, &tagger, doc_cfg.ne_source == NeSource::Clip)?;
    let ctx = NeContext {
        tagger: &tagger,
        clip: clip.as_ref().map(|(index, provider)| ClipContext { index, provider: provider.as_ref() }),
    };
    Ok(build_documents(articles, doc_cfg, &ctx)?)
}

fn clip_parts(
    cfg: &RunConfig,
    articles: &[Article],
    tagger: &GazetteerTagger,
    needed: bool,
) -> Result<Option<(CandidateIndex, Box<dyn EmbeddingProvider>)>> {
    if !needed {
        return Ok(None);
    }
    let provider = make_provider(cfg)?;
    let mut index = build_candidate_index(articles, tagger);
    index.embed_with(provider.as_ref())?;
    Ok(Some((index, provider)))
}

fn docs_from(cfg: &RunConfig, docs: Option<&Path>, run: &mut Run) -> Result<Vec<AnnotatedDocument>> {
    match docs {
        Some(p) => {
            run.input(p);
            read_docs(p)
        }
        None => prepare_docs(cfg, run),
    }
}

fn read_context(cfg: &RunConfig, path: &Path) -> Result<String> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    if text.trim_start().starts_with('{') {
        let articles = read_corpus(text.as_bytes(), LoadMode::Strict)?.articles;
        let [article] = articles.as_slice() else { bail!("context file holds {} articles, expected one", articles.len()) };
        let mut run = Run { command: "generate", argv: vec![], cfg: cfg.clone(), manifest: None, inputs: vec![], outputs: vec![] };
        let doc = docs_for(cfg, std::slice::from_ref(article), &cfg.doc_config()?, &mut run)?.remove(0);
        return Ok(generation_context(&doc));
    }
    Ok(text.trim_end_matches('\n').to_string())
}

fn parse_usize_list(s: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(|x| x.trim().parse::<usize>().with_context(|| format!("`{x}` is not a non-negative integer")))
        .collect()
}

#[derive(Debug, Serialize, serde::Deserialize)]
struct ScaleRow {
    preset: String,
    n_params: usize,
    ppl: f64,
}

#[allow(clippy::too_many_arguments)]
fn ablate(
    cfg: &RunConfig,
    run: &mut Run,
    kind: AblationKind,
    vocab_path: Option<PathBuf>,
    vocab_size: usize,
    (n_train, n_eval): (usize, usize),
    configs: Option<String>,
    ks: &str,
    ckpt: Option<PathBuf>,
    orders: Option<String>,
    out_dir: &Path,
) -> Result<AblationTable> {
    let articles = load_articles(cfg, run)?;
    if articles.len() < n_train + n_eval {
        bail!("corpus has {} articles, {} + {} requested", articles.len(), n_train, n_eval);
    }
    let (train, rest) = articles.split_at(n_train);
    let eval = &rest[..n_eval];
    let base = cfg.order()?;
    let tagger = build_tagger(cfg, &articles, run)?;
    let clip = clip_parts(cfg, &articles, &tagger, matches!(kind, AblationKind::Topk) || cfg.ne_source() == NeSource::Clip)?;
    let ne = NeContext {
        tagger: &tagger,
        clip: clip.as_ref().map(|(index, provider)| ClipContext { index, provider: provider.as_ref() }),
    };
    let vocab = match vocab_path {
        Some(p) => load_vocab(&p, run)?,
        None => {
            // learn the tokenizer on the richest serialization of the training split
            let docs = build_documents(train, &DocConfig::preset("ne", &base, 10)?, &ne)?;
            let texts: Vec<&str> = docs.iter().map(|d| d.serialized.as_str()).collect();
            let v = train_bpe(&texts, vocab_size)?;
            let path = out_dir.join("vocab.json");
            v.save(&path)?;
            run.output(&path);
            v
        }
    };
    let exp = Experiment {
        train,
        eval,
        ne,
        vocab: &vocab,
        model: cfg.model_config(vocab.len())?,
        train_cfg: cfg.train_config()?,
    };
    let (stem, table) = match kind {
        AblationKind::Fields => {
            let names: Vec<String> = match configs {
                Some(c) => c.split(',').map(|s| s.trim().to_string()).collect(),
                None => FIELD_ABLATIONS.iter().map(|s| s.to_string()).collect(),
            };
            let k = cfg.k.unwrap_or(config::DEFAULT_K);
            let dcs = names.iter().map(|n| DocConfig::preset(n, &base, k)).collect::<Result<Vec<_>, _>>()?;
            ("ablation_fields", ablate_fields(&exp, &dcs)?)
        }
        AblationKind::Topk => ("ppl_vs_topk", ablate_topk(&exp, &base, &parse_usize_list(ks)?)?),
        AblationKind::Order => {
            let ckpt = ckpt.ok_or_else(|| anyhow!("order ablation needs --ckpt"))?;
            run.input(&ckpt);
            let ck = load_checkpoint(&ckpt, &vocab.hash())?;
            let doc_cfg = cfg.doc_config()?;
            let mut list = vec![doc_cfg.order.clone()];
            for o in orders.as_deref().unwrap_or("").split(';').filter(|s| !s.trim().is_empty()) {
                list.push(CanonicalOrder::parse_list(o)?);
            }
            ("ablation_canonical_order", ablate_order(&ck, &vocab, eval, &doc_cfg, &exp.ne, &list)?)
        }
        AblationKind::Scale => {
            let presets: Vec<String> = configs
                .unwrap_or_else(|| "tiny,nano".into())
                .split(',')
                .map(|s| s.trim().to_string())
                .collect();
            let doc_cfg = cfg.doc_config()?;
            let mut rows = Vec::new();
            let mut table = AblationTable { rows: vec![] };
            for p in presets {
                let mut model = ModelConfig::preset(&p, vocab.len())?;
                model.seed = cfg.seed();
                let e = Experiment { model, ..exp_clone(&exp) };
                let out = e.run(&doc_cfg)?;
                rows.push(ScaleRow { preset: p.clone(), n_params: e.model.n_params(), ppl: out.ppl.ppl });
                table.rows.push(crate::evalsuite::AblationRow {
                    config: p,
                    k: None,
                    order: None,
                    ppl: out.ppl.ppl,
                    n_tokens: out.ppl.n_tokens,
                    final_train_loss: out.final_train_loss,
                    seed: Some(cfg.seed()),
                });
            }
            let path = out_dir.join("ppl_vs_params.json");
            write_json(&path, &rows)?;
            run.output(&path);
            ("ablation_scale", table)
        }
    };
    write_table(out_dir, stem, &table)?;
    Ok(table)
}

fn exp_clone<'a>(e: &Experiment<'a>) -> Experiment<'a> {
    Experiment {
        train: e.train,
        eval: e.eval,
        ne: NeContext {
            tagger: e.ne.tagger,
            clip: e.ne.clip.as_ref().map(|c| ClipContext { index: c.index, provider: c.provider }),
        },
        vocab: e.vocab,
        model: e.model.clone(),
        train_cfg: e.train_cfg.clone(),
    }
}

/// Chooses a chart from the JSON shape: ablation tables become bar charts,
/// `{preset, n_params, ppl}` rows a log-scale line and retrieval records bars.
fn render_report(path: &Path) -> Result<String> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let title = path.file_stem().and_then(|s| s.to_str()).unwrap_or("report").to_string();
    if let Ok(table) = serde_json::from_str::<AblationTable>(&text) {
        let bars: Vec<(String, f64)> = table
            .rows
            .iter()
            .map(|r| {
                let label = match (&r.order, r.k) {
                    (Some(o), _) => o.clone(),
                    (None, Some(k)) if r.config.starts_with("clipne") => format!("k={k}"),
                    _ => r.config.clone(),
                };
                (label, r.ppl)
            })
            .collect();
        return Ok(bar_chart_svg(&title, "body perplexity", &bars));
    }
    if let Ok(rows) = serde_json::from_str::<Vec<ScaleRow>>(&text) {
        let pts: Vec<(f64, f64)> = rows.iter().map(|r| (r.n_params as f64, r.ppl)).collect();
        return Ok(log_line_chart_svg(&title, "parameters", "body perplexity", &pts));
    }
    if let Ok(recs) = serde_json::from_str::<Vec<RetrievalRecord>>(&text) {
        let bars: Vec<(String, f64)> = recs
            .iter()
            .map(|r| {
                let dir = match r.direction {
                    crate::retrieval::Direction::ImageToArticle => "i2a",
                    crate::retrieval::Direction::ArticleToImage => "a2i",
                };
                (format!("{} {dir} R@{}", r.mode, r.k), r.recall * 100.0)
            })
            .collect();
        return Ok(bar_chart_svg(&title, "recall (%)", &bars));
    }
    bail!("{}: not an ablation table, scaling table or retrieval report", path.display())
}
