//! Subcommands of the `persuade` binary.
//!
//! Exit codes: 0 success, 1 validation failure, 2 I/O failure, 3 remote
//! failure (captioning requests that still failed after retries).

use std::collections::BTreeMap;
use std::fmt;
use std::io;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use persuade_core::baseline::{self, FeatureConfig, Hyperparams, InputMode, TrainWarning};
use persuade_core::corpus::{self, CaptionSource, MemeInstance, PredictionSet};
use persuade_core::metrics::BootstrapConfig;
use persuade_core::textmetrics::{bleu4, rouge_l, RougeL, TextMetricError, TokenSequence};
use persuade_core::{parse_hierarchy, LabelHierarchy};
use serde::Serialize;
use serde_json::json;

use crate::captioning::{self, RunOptions, SystemClock};
use crate::formats::{self, FieldAliases, Task};
use crate::http::{HttpTransport, ProviderConfig, ProviderOverrides, Secret};
use crate::manifest::Manifest;
use crate::report;

#[derive(Debug, Parser)]
#[command(name = "persuade", version, about = "Hierarchical persuasion-technique scoring, captioning and baseline toolkit")]
pub struct Cli {
    /// Upper bound on worker threads.
    #[arg(long, global = true, default_value_t = 1, value_parser = clap::value_parser!(u16).range(1..))]
    pub jobs: u16,
    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a hierarchy and, optionally, a dataset, predictions and captions.
    Validate(ValidateArgs),
    /// Score predictions against gold labels.
    Score(ScoreArgs),
    /// Caption images through a chat-completions endpoint.
    Caption(CaptionArgs),
    /// Train the hashed n-gram logistic baseline.
    Train(TrainArgs),
    /// Predict label sets with a trained model.
    Predict(PredictArgs),
    /// ROUGE-L and BLEU-4 of captions against references.
    CaptionEval(CaptionEvalArgs),
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub hierarchy: PathBuf,
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub pred: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Task::Hier)]
    pub task: Task,
    #[arg(long)]
    pub captions: Option<PathBuf>,
    /// Extra dataset field name, as `field=name` (repeatable).
    #[arg(long)]
    pub alias: Vec<String>,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    /// Required for the hierarchical task.
    #[arg(long)]
    pub hierarchy: Option<PathBuf>,
    #[arg(long)]
    pub gold: PathBuf,
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long, value_enum, default_value_t = Task::Hier)]
    pub task: Task,
    #[arg(long, default_value_t = 1.0)]
    pub beta: f64,
    /// Number of bootstrap resamples; needs --seed.
    #[arg(long, requires = "seed")]
    pub bootstrap: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 0.95)]
    pub confidence: f64,
    /// Output directory for report.json, report.txt and manifest.json.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CaptionArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Provider settings file (TOML).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub endpoint: Option<String>,
    #[arg(long)]
    pub model: Option<String>,
    /// Name of the environment variable holding the API key.
    #[arg(long)]
    pub credential_env: Option<String>,
    #[arg(long)]
    pub temperature: Option<f64>,
    /// 0 disables rate limiting.
    #[arg(long)]
    pub rate_per_minute: Option<f64>,
    /// Recaption instances that already have a caption.
    #[arg(long)]
    pub force: bool,
    /// Base directory for local image paths (default: the corpus directory).
    #[arg(long)]
    pub image_root: Option<PathBuf>,
    #[arg(long)]
    pub alias: Vec<String>,
    /// Output directory; holds the checkpoint, so rerunning resumes.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub hierarchy: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    /// Labelled dev set for threshold tuning.
    #[arg(long)]
    pub dev: Option<PathBuf>,
    /// Captions file merged into the corpus and dev set.
    #[arg(long)]
    pub captions: Option<PathBuf>,
    #[arg(long, default_value = "text", value_parser = parse_mode)]
    pub mode: InputMode,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub epochs: Option<u32>,
    #[arg(long)]
    pub l2: Option<f64>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Hashed feature dimension (a power of two).
    #[arg(long)]
    pub dimension: Option<u32>,
    /// Fail on missing captions in text+caption mode.
    #[arg(long)]
    pub strict_captions: bool,
    #[arg(long)]
    pub alias: Vec<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub hierarchy: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub captions: Option<PathBuf>,
    #[arg(long)]
    pub alias: Vec<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CaptionEvalArgs {
    /// Generated captions, one per line.
    #[arg(long)]
    pub candidates: PathBuf,
    /// Reference captions, one per line, aligned with the candidates.
    #[arg(long)]
    pub references: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_mode(s: &str) -> Result<InputMode, String> {
    InputMode::parse(s).ok_or_else(|| format!("expected `text` or `text+caption`, got `{s}`"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Validation,
    Io,
    Remote,
}

#[derive(Debug)]
pub struct CliError {
    pub kind: ErrorKind,
    pub message: String,
}

impl CliError {
    pub fn validation(message: impl Into<String>) -> Self {
        Self {
            kind: ErrorKind::Validation,
            message: message.into(),
        }
    }

    fn io(path: &Path, e: io::Error) -> Self {
        Self {
            kind: ErrorKind::Io,
            message: format!("{}: {e}", path.display()),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind {
            ErrorKind::Validation => 1,
            ErrorKind::Io => 2,
            ErrorKind::Remote => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

fn invalid(path: &Path) -> impl Fn(formats::FormatError) -> CliError + '_ {
    move |e| CliError::validation(format!("{}: {e}", path.display()))
}

fn invalid_msg<E: fmt::Display>(e: E) -> CliError {
    CliError::validation(e.to_string())
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn load_hierarchy(path: &Path, manifest: Option<&mut Manifest>) -> Result<LabelHierarchy, CliError> {
    let text = read(path)?;
    if let Some(m) = manifest {
        m.input("hierarchy", path, text.as_bytes());
    }
    parse_hierarchy(&text).map_err(|e| CliError::validation(format!("{}: {e}", path.display())))
}

fn aliases(specs: &[String]) -> Result<FieldAliases, CliError> {
    let mut a = FieldAliases::default();
    for s in specs {
        a.push_spec(s).map_err(CliError::validation)?;
    }
    Ok(a)
}

struct OutDir<'a> {
    dir: &'a Path,
}

impl<'a> OutDir<'a> {
    fn create(dir: &'a Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        Ok(Self { dir })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn write(&self, name: &str, contents: &str, manifest: Option<&mut Manifest>) -> Result<PathBuf, CliError> {
        let p = self.path(name);
        std::fs::write(&p, contents).map_err(|e| CliError::io(&p, e))?;
        if let Some(m) = manifest {
            m.output(name, &p, contents.as_bytes());
        }
        Ok(p)
    }

    fn finish(&self, manifest: &Manifest) -> Result<(), CliError> {
        self.write("manifest.json", &formats::to_pretty(manifest), None).map(drop)
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let jobs = usize::from(cli.jobs);
    match cli.command {
        Command::Validate(a) => validate(&a),
        Command::Score(a) => score(&a),
        Command::Caption(a) => caption(&a, jobs),
        Command::Train(a) => train(&a),
        Command::Predict(a) => predict(&a),
        Command::CaptionEval(a) => caption_eval(&a),
    }
}

fn validate(a: &ValidateArgs) -> Result<(), CliError> {
    // fail on unreadable inputs before reporting anything
    let htext = read(&a.hierarchy)?;
    let ctext = a.corpus.as_deref().map(read).transpose()?;
    let ptext = a.pred.as_deref().map(read).transpose()?;
    let xtext = a.captions.as_deref().map(read).transpose()?;
    let aliases = aliases(&a.alias)?;

    let mut diags: Vec<String> = Vec::new();
    let h = match parse_hierarchy(&htext) {
        Ok(h) => Some(h),
        Err(e) => {
            diags.push(format!("{}: {e}", a.hierarchy.display()));
            None
        }
    };

    let mut corpus_ids: Option<Vec<String>> = None;
    if let (Some(path), Some(text)) = (&a.corpus, &ctext) {
        match formats::check_corpus(text, h.as_ref(), &aliases) {
            Ok(errors) => {
                diags.extend(errors.iter().map(|e| format!("{}: {e}", path.display())));
                if errors.is_empty() {
                    let loaded = formats::load_corpus(text, h.as_ref(), &aliases).map_err(invalid(path))?;
                    corpus_ids = Some(loaded.instances.into_iter().map(|i| i.id).collect());
                }
            }
            Err(e) => diags.push(format!("{}: {e}", path.display())),
        }
    }

    if let (Some(path), Some(text)) = (&a.pred, &ptext) {
        match formats::check_predictions(text, a.task, h.as_ref()) {
            Ok((ids, errors)) => {
                diags.extend(errors.iter().map(|e| format!("{}: {e}", path.display())));
                if let Some(cids) = &corpus_ids {
                    let known: std::collections::BTreeSet<&str> = cids.iter().map(String::as_str).collect();
                    let have: std::collections::BTreeSet<&str> = ids.iter().map(String::as_str).collect();
                    for id in ids.iter().filter(|id| !known.contains(id.as_str())) {
                        diags.push(format!("{}: id `{id}` is not in the dataset", path.display()));
                    }
                    for id in cids.iter().filter(|id| !have.contains(id.as_str())) {
                        diags.push(format!("{}: no prediction for id `{id}`", path.display()));
                    }
                }
            }
            Err(e) => diags.push(format!("{}: {e}", path.display())),
        }
    }

    if let (Some(path), Some(text)) = (&a.captions, &xtext) {
        match formats::load_captions(text) {
            Ok(caps) => {
                if let Some(cids) = &corpus_ids {
                    for id in caps.keys().filter(|id| !cids.contains(id)) {
                        diags.push(format!("{}: caption for unknown id `{id}`", path.display()));
                    }
                }
            }
            Err(e) => diags.push(format!("{}: {e}", path.display())),
        }
    }

    for d in &diags {
        println!("{d}");
    }
    if diags.is_empty() {
        println!("ok");
        Ok(())
    } else {
        Err(CliError::validation(format!("{} problem(s) found", diags.len())))
    }
}

fn score(a: &ScoreArgs) -> Result<(), CliError> {
    let mut manifest = Manifest::new(
        "score",
        a.seed,
        json!({"task": a.task, "beta": a.beta, "bootstrap": a.bootstrap, "confidence": a.confidence}),
    );
    let gtext = read(&a.gold)?;
    let ptext = read(&a.pred)?;
    manifest.input("gold", &a.gold, gtext.as_bytes());
    manifest.input("pred", &a.pred, ptext.as_bytes());
    let boot = a.bootstrap.map(|resamples| BootstrapConfig {
        resamples,
        seed: a.seed.unwrap_or_default(),
        confidence: a.confidence,
    });
    let rep = match a.task {
        Task::Hier => {
            let hpath = a
                .hierarchy
                .as_deref()
                .ok_or_else(|| CliError::validation("--hierarchy is required for the hier task"))?;
            let h = load_hierarchy(hpath, Some(&mut manifest))?;
            let gold = formats::load_label_sets(&gtext, &h).map_err(invalid(&a.gold))?;
            for (id, g) in &gold {
                if !h.is_consistent(g).unwrap_or(true) {
                    log::warn!("gold for `{id}` is not ancestor-closed; scoring its closure");
                }
            }
            let pred = formats::load_label_sets(&ptext, &h).map_err(invalid(&a.pred))?;
            report::hierarchical_report(&h, &gold, &pred, a.beta, boot.as_ref()).map_err(invalid_msg)?
        }
        Task::Binary => {
            let gold = formats::load_binary(&gtext).map_err(invalid(&a.gold))?;
            let pred = formats::load_binary(&ptext).map_err(invalid(&a.pred))?;
            report::binary_report(&gold, &pred, boot.as_ref()).map_err(invalid_msg)?
        }
    };
    for id in &rep.missing_predictions {
        log::warn!("no prediction for `{id}`; scored as an empty set");
    }
    let out = OutDir::create(&a.out)?;
    let table = rep.table();
    out.write("report.json", &formats::to_pretty(&rep), Some(&mut manifest))?;
    out.write("report.txt", &table, Some(&mut manifest))?;
    out.finish(&manifest)?;
    print!("{table}");
    Ok(())
}

fn caption(a: &CaptionArgs, jobs: usize) -> Result<(), CliError> {
    let ctext = read(&a.corpus)?;
    let file = a.config.as_deref().map(read).transpose()?;
    let flags = ProviderOverrides {
        endpoint: a.endpoint.clone(),
        model: a.model.clone(),
        credential_env: a.credential_env.clone(),
        temperature: a.temperature,
        requests_per_minute: a.rate_per_minute,
    };
    let provider = ProviderConfig::resolve(file.as_deref(), &flags, |k| std::env::var(k).ok())
        .map_err(|e| CliError::validation(format!("provider config: {e}")))?;
    let corpus = formats::load_corpus(&ctext, None, &aliases(&a.alias)?)
        .map_err(invalid(&a.corpus))?
        .instances;

    let mut manifest = Manifest::new("caption", None, json!({"provider": provider, "force": a.force, "jobs": jobs}));
    manifest.input("corpus", &a.corpus, ctext.as_bytes());
    if let (Some(p), Some(t)) = (&a.config, &file) {
        manifest.input("config", p, t.as_bytes());
    }

    let credential = std::env::var(&provider.credential_env).ok().map(Secret::new);
    if credential.is_none() {
        log::warn!("{} is not set; sending requests without credentials", provider.credential_env);
    }
    let image_root = match &a.image_root {
        Some(p) => p.clone(),
        None => a.corpus.parent().map(Path::to_path_buf).unwrap_or_default(),
    };
    let transport = HttpTransport::new(&provider, credential, &image_root);
    let out = OutDir::create(&a.out)?;
    let checkpoint = out.path("checkpoint.jsonl");
    let source = CaptionSource::ExternalZeroShot;
    let opts = RunOptions {
        concurrency: jobs,
        rate_per_minute: Some(provider.requests_per_minute),
        force: a.force,
        checkpoint: Some(&checkpoint),
        cancel: None,
        source,
    };
    let run = captioning::caption_corpus(&corpus, &provider.protocol(), &transport, &SystemClock::default(), &opts)
        .map_err(|e| CliError::io(&checkpoint, e))?;

    let captions = run.captions(source);
    let merged = corpus::merge_captions(&corpus, &captions, a.force).map_err(invalid_msg)?;
    out.write("captions.json", &formats::write_captions(&captions), Some(&mut manifest))?;
    out.write("corpus.json", &formats::write_corpus(&merged), Some(&mut manifest))?;
    let ck = std::fs::read(&checkpoint).map_err(|e| CliError::io(&checkpoint, e))?;
    manifest.output("checkpoint.jsonl", &checkpoint, &ck);
    out.finish(&manifest)?;

    println!(
        "requested {}, captioned {}, refused {}, failed {}, skipped (already captioned) {}, without image {}",
        run.requested.len(),
        captions.len(),
        run.refused.len(),
        run.failed.len(),
        run.skipped_existing.len(),
        run.no_image.len()
    );
    if !run.refused.is_empty() {
        println!("refused by both prompts: {}", run.refused.join(", "));
    }
    if run.failed.is_empty() {
        Ok(())
    } else {
        Err(CliError {
            kind: ErrorKind::Remote,
            message: format!(
                "{} instance(s) failed after retries ({}); rerun with the same --out to retry them",
                run.failed.len(),
                run.failed.join(", ")
            ),
        })
    }
}

/// Load a dataset and attach captions from `captions`, if given. Captions
/// for ids outside the dataset are ignored.
fn load_with_captions(
    path: &Path,
    h: &LabelHierarchy,
    captions: Option<&(PathBuf, String)>,
    aliases: &FieldAliases,
    role: &str,
    manifest: &mut Manifest,
) -> Result<Vec<MemeInstance>, CliError> {
    let text = read(path)?;
    manifest.input(role, path, text.as_bytes());
    let corpus = formats::load_corpus(&text, Some(h), aliases).map_err(invalid(path))?.instances;
    let Some((cpath, ctext)) = captions else {
        return Ok(corpus);
    };
    let mut caps = formats::load_captions(ctext).map_err(invalid(cpath))?;
    let ids: std::collections::BTreeSet<&str> = corpus.iter().map(|i| i.id.as_str()).collect();
    caps.retain(|id, _| ids.contains(id.as_str()));
    corpus::merge_captions(&corpus, &caps, true).map_err(invalid_msg)
}

fn read_captions(path: Option<&Path>, manifest: &mut Manifest) -> Result<Option<(PathBuf, String)>, CliError> {
    let Some(p) = path else { return Ok(None) };
    let text = read(p)?;
    manifest.input("captions", p, text.as_bytes());
    Ok(Some((p.to_path_buf(), text)))
}

fn train(a: &TrainArgs) -> Result<(), CliError> {
    let mut hyper = Hyperparams::default();
    hyper.features = FeatureConfig {
        mode: a.mode,
        dimension: a.dimension.unwrap_or(hyper.features.dimension),
        ..hyper.features
    };
    hyper.epochs = a.epochs.unwrap_or(hyper.epochs);
    hyper.l2 = a.l2.unwrap_or(hyper.l2);
    hyper.learning_rate = a.learning_rate.unwrap_or(hyper.learning_rate);
    hyper.strict_captions = a.strict_captions;

    let mut manifest = Manifest::new("train", Some(a.seed), json!({"hyperparams": hyper}));
    let h = load_hierarchy(&a.hierarchy, Some(&mut manifest))?;
    let aliases = aliases(&a.alias)?;
    let caps = read_captions(a.captions.as_deref(), &mut manifest)?;
    let corpus = load_with_captions(&a.corpus, &h, caps.as_ref(), &aliases, "corpus", &mut manifest)?;
    let trained = baseline::train(&corpus, &h, &hyper, a.seed).map_err(invalid_msg)?;
    for w in &trained.warnings {
        match w {
            TrainWarning::NoPositives(label) => log::warn!("no positives for `{label}`; its head always predicts negative"),
            TrainWarning::MissingCaptions(n) => log::warn!("{n} instance(s) have no caption; trained on their text alone"),
        }
    }
    let mut model = trained.model;
    if let Some(dev_path) = &a.dev {
        let dev = load_with_captions(dev_path, &h, caps.as_ref(), &aliases, "dev", &mut manifest)?;
        let before = baseline::evaluate_hf1(&model, &dev, &h).map_err(invalid_msg)?;
        model = baseline::tune_thresholds(&model, &dev, &h).map_err(invalid_msg)?;
        let after = baseline::evaluate_hf1(&model, &dev, &h).map_err(invalid_msg)?;
        println!("dev H-F1 {before:.6} -> {after:.6} after threshold tuning");
    }
    let out = OutDir::create(&a.out)?;
    out.write("model.json", &formats::write_model(&model), Some(&mut manifest))?;
    out.finish(&manifest)?;
    println!("trained {} heads on {} instances", model.heads.len(), corpus.len());
    Ok(())
}

fn predict(a: &PredictArgs) -> Result<(), CliError> {
    let mut manifest = Manifest::new("predict", None, json!({}));
    let h = load_hierarchy(&a.hierarchy, Some(&mut manifest))?;
    let mtext = read(&a.model)?;
    manifest.input("model", &a.model, mtext.as_bytes());
    let model = formats::load_model(&mtext).map_err(invalid(&a.model))?;
    manifest.seed = Some(model.seed);
    manifest.config = json!({"mode": model.features.mode});
    model.check_hierarchy(&h).map_err(invalid_msg)?;
    let caps = read_captions(a.captions.as_deref(), &mut manifest)?;
    let corpus = load_with_captions(&a.corpus, &h, caps.as_ref(), &aliases(&a.alias)?, "corpus", &mut manifest)?;
    let mut preds = BTreeMap::new();
    let mut degraded = 0;
    for inst in &corpus {
        if model.features.mode == InputMode::TextCaption && inst.caption.is_none() {
            degraded += 1;
        }
        preds.insert(inst.id.clone(), baseline::predict(&model, &h, inst).map_err(invalid_msg)?);
    }
    if degraded > 0 {
        log::warn!("{degraded} instance(s) have no caption; predicted from text alone");
    }
    let out = OutDir::create(&a.out)?;
    let body = formats::write_predictions(&PredictionSet::Hierarchical(preds), &h);
    out.write("predictions.json", &body, Some(&mut manifest))?;
    out.finish(&manifest)?;
    println!("wrote {} predictions", corpus.len());
    Ok(())
}

#[derive(Debug, Serialize)]
struct LineScores {
    line: usize,
    rouge_l: RougeL,
    bleu4: f64,
}

#[derive(Debug, Serialize)]
struct CaptionEvalReport {
    pairs: usize,
    rouge_l_precision: f64,
    rouge_l_recall: f64,
    rouge_l_f1: f64,
    bleu4: f64,
    /// Not computed here; left for externally produced values.
    bertscore: Option<f64>,
    per_line: Vec<LineScores>,
}

fn caption_lines(text: &str) -> Vec<&str> {
    let mut lines: Vec<&str> = text.split('\n').map(|l| l.strip_suffix('\r').unwrap_or(l)).collect();
    if lines.last() == Some(&"") {
        lines.pop();
    }
    lines
}

fn caption_eval(a: &CaptionEvalArgs) -> Result<(), CliError> {
    let mut manifest = Manifest::new("caption-eval", None, json!({}));
    let ctext = read(&a.candidates)?;
    let rtext = read(&a.references)?;
    manifest.input("candidates", &a.candidates, ctext.as_bytes());
    manifest.input("references", &a.references, rtext.as_bytes());
    let (cands, refs) = (caption_lines(&ctext), caption_lines(&rtext));
    if cands.len() != refs.len() {
        return Err(CliError::validation(format!(
            "{} candidate line(s) but {} reference line(s)",
            cands.len(),
            refs.len()
        )));
    }
    if cands.is_empty() {
        return Err(CliError::validation("no caption pairs"));
    }
    let mut per_line = Vec::with_capacity(cands.len());
    for (i, (c, r)) in cands.iter().zip(&refs).enumerate() {
        let wrap = |e: TextMetricError| CliError::validation(format!("{} line {}: {e}", a.references.display(), i + 1));
        let (c, r) = (TokenSequence::tokenize(c), TokenSequence::tokenize(r));
        let rl = rouge_l(&c, &r).map_err(wrap)?;
        per_line.push(LineScores {
            line: i + 1,
            rouge_l: RougeL {
                precision: report::round6(rl.precision),
                recall: report::round6(rl.recall),
                f1: report::round6(rl.f1),
            },
            bleu4: report::round6(bleu4(&c, std::slice::from_ref(&r)).map_err(wrap)?),
        });
    }
    let n = per_line.len() as f64;
    let mean = |f: fn(&LineScores) -> f64| report::round6(per_line.iter().map(f).sum::<f64>() / n);
    let rep = CaptionEvalReport {
        pairs: per_line.len(),
        rouge_l_precision: mean(|s| s.rouge_l.precision),
        rouge_l_recall: mean(|s| s.rouge_l.recall),
        rouge_l_f1: mean(|s| s.rouge_l.f1),
        bleu4: mean(|s| s.bleu4),
        bertscore: None,
        per_line,
    };
    let out = OutDir::create(&a.out)?;
    out.write("caption_eval.json", &formats::to_pretty(&rep), Some(&mut manifest))?;
    out.finish(&manifest)?;
    println!("{:<8} {:>10} {:>10}", "", "ROUGE-L", "BLEU-4");
    println!("{:<8} {:>10.6} {:>10.6}", "mean", rep.rouge_l_f1, rep.bleu4);
    Ok(())
}
