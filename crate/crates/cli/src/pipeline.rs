//! Config-driven runner for the whole pipeline. Each stage writes one
//! artifact into the work directory and is skipped when that artifact
//! already exists, so an interrupted run resumes where it stopped.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use frameprobe::eval::{evaluate, random_baseline, EvalConfig};
use frameprobe::jsonl::{write_jsonl, ArtifactHeader};
use frameprobe::parser::{TrainConfig, DEFAULT_FE_HIDDEN};
use frameprobe::probes::Probe;
use frameprobe::registry::{build_adapter, AdapterSettings};

use crate::commands;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PipelineConfig {
    lexicon: PathBuf,
    #[serde(default = "default_workdir")]
    workdir: PathBuf,
    #[serde(default)]
    seed: u64,
    stages: Vec<Stage>,
    train: Option<TrainSection>,
    parse: Option<ParseSection>,
    graph: Option<GraphSection>,
    probes: Option<ProbesSection>,
    baseline: Option<BaselineSection>,
    eval: Option<EvalSection>,
}

fn default_workdir() -> PathBuf {
    PathBuf::from("run")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Stage {
    Train,
    Parse,
    Graph,
    Probes,
    Baseline,
    Eval,
}

impl Stage {
    fn name(self) -> &'static str {
        match self {
            Stage::Train => "train",
            Stage::Parse => "parse",
            Stage::Graph => "graph",
            Stage::Probes => "probes",
            Stage::Baseline => "baseline",
            Stage::Eval => "eval",
        }
    }

    fn artifact(self) -> &'static str {
        match self {
            Stage::Train => "heads.json",
            Stage::Parse => "annotations.jsonl",
            Stage::Graph => "graph.json",
            Stage::Probes => "probes.jsonl",
            Stage::Baseline => "baseline.json",
            Stage::Eval => "report.json",
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrainSection {
    gold: PathBuf,
    #[serde(default = "default_epochs")]
    epochs: usize,
    #[serde(default = "default_lr")]
    lr: f64,
    #[serde(default = "default_batch")]
    batch_size: usize,
    #[serde(default = "default_encoder")]
    encoder: String,
    #[serde(default = "default_dim")]
    dim: usize,
    #[serde(default = "default_fe_hidden")]
    fe_hidden: usize,
}

fn default_epochs() -> usize {
    50
}
fn default_lr() -> f64 {
    0.1
}
fn default_batch() -> usize {
    8
}
fn default_encoder() -> String {
    "hash".into()
}
fn default_dim() -> usize {
    64
}
fn default_fe_hidden() -> usize {
    DEFAULT_FE_HIDDEN
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParseSection {
    input: PathBuf,
    /// Existing checkpoint, used instead of the train stage output.
    heads: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphSection {
    /// Existing annotations, used instead of the parse stage output.
    annotations: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProbesSection {
    #[serde(default = "default_types")]
    types: String,
    #[serde(default = "default_k")]
    k: usize,
    templates: Option<PathBuf>,
}

fn default_types() -> String {
    "IFES,EFES,SFES,IFESR,EFESR,FFR".into()
}
fn default_k() -> usize {
    3
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct BaselineSection {
    #[serde(default = "default_repeats")]
    repeats: usize,
}

fn default_repeats() -> usize {
    5
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct EvalSection {
    adapter: String,
    #[serde(default)]
    model: String,
    base_url: Option<String>,
    token_env: Option<String>,
    rate_limit_per_minute: Option<u32>,
    max_retries: Option<u32>,
    backoff_base_ms: Option<u64>,
    reply: Option<String>,
    #[serde(default = "default_concurrency")]
    concurrency: usize,
    #[serde(default = "default_eval_retries")]
    retries: u32,
    #[serde(default = "default_timeout")]
    timeout_ms: u64,
}

fn default_concurrency() -> usize {
    4
}
fn default_eval_retries() -> u32 {
    2
}
fn default_timeout() -> u64 {
    60_000
}

struct Runner {
    cfg: PipelineConfig,
    base: PathBuf,
    work: PathBuf,
}

impl Runner {
    fn resolve(&self, p: &Path) -> PathBuf {
        self.base.join(p)
    }

    fn artifact(&self, stage: Stage) -> PathBuf {
        self.work.join(stage.artifact())
    }

    /// Path of a stage input: an explicit override or the artifact of the
    /// producing stage, which must exist.
    fn input(&self, from: Stage, explicit: Option<&Path>) -> Result<PathBuf> {
        let path = match explicit {
            Some(p) => self.resolve(p),
            None => self.artifact(from),
        };
        if !path.exists() {
            bail!("needs {} from stage {}, which has not run", path.display(), from.name());
        }
        Ok(path)
    }

    fn section<'a, T>(&self, stage: Stage, s: &'a Option<T>) -> Result<&'a T> {
        s.as_ref()
            .with_context(|| format!("stage {} is listed but has no [{}] section", stage.name(), stage.name()))
    }

    fn run_stage(&self, stage: Stage) -> Result<()> {
        let out = self.artifact(stage);
        let seed = self.cfg.seed;
        match stage {
            Stage::Train => {
                let t = self.section(stage, &self.cfg.train)?;
                let lex = commands::load_lexicon(&self.resolve(&self.cfg.lexicon))?;
                let gold = commands::load_annotations(&self.resolve(&t.gold))?;
                let tc = TrainConfig {
                    lr: t.lr,
                    batch_size: t.batch_size,
                    epochs: t.epochs,
                    seed,
                    fe_hidden: t.fe_hidden,
                };
                let ck = commands::do_train(&lex, &gold, &t.encoder, t.dim, tc)?;
                commands::write(&out, ck.to_json().as_bytes())
            }
            Stage::Parse => {
                let p = self.section(stage, &self.cfg.parse)?;
                let heads = self.input(Stage::Train, p.heads.as_deref())?;
                let lex = commands::load_lexicon(&self.resolve(&self.cfg.lexicon))?;
                let ck = commands::load_heads(&heads)?;
                let input = commands::read_sentences(&self.resolve(&p.input))?;
                let parsed = commands::do_parse(&lex, &ck, &input)?;
                let mut buf = Vec::new();
                write_jsonl(
                    &mut buf,
                    &ArtifactHeader::new("annotations", Some(ck.seed), ck.config_digest.clone()),
                    &parsed,
                )?;
                commands::write(&out, &buf)
            }
            Stage::Graph => {
                let explicit = self.cfg.graph.as_ref().and_then(|g| g.annotations.as_deref());
                let ann = self.input(Stage::Parse, explicit)?;
                let lex = commands::load_lexicon(&self.resolve(&self.cfg.lexicon))?;
                let file = commands::do_graph(&lex, &commands::load_annotations(&ann)?)?;
                commands::write(&out, file.to_json().as_bytes())
            }
            Stage::Probes => {
                let p = self.section(stage, &self.cfg.probes)?;
                let graph = self.input(Stage::Graph, None)?;
                let lex = commands::load_lexicon(&self.resolve(&self.cfg.lexicon))?;
                let templates = p.templates.as_ref().map(|t| self.resolve(t));
                let pc = commands::probe_config(p.k, seed, templates.as_deref())?;
                let (batch, header) = commands::do_probes(&lex, &commands::load_graph(&graph)?, &p.types, &pc)?;
                let mut buf = Vec::new();
                write_jsonl(&mut buf, &header, &batch.probes)?;
                commands::write(&out, &buf)
            }
            Stage::Baseline => {
                let repeats = self.cfg.baseline.as_ref().map_or(default_repeats(), |b| b.repeats);
                let items = self.probe_items()?;
                let report = random_baseline(&items, seed, repeats)?;
                let mut text = serde_json::to_string_pretty(&report)?;
                text.push('\n');
                commands::write(&out, text.as_bytes())
            }
            Stage::Eval => {
                let e = self.section(stage, &self.cfg.eval)?;
                let items = self.probe_items()?;
                let settings = AdapterSettings {
                    model: e.model.clone(),
                    base_url: e.base_url.clone(),
                    token_env: e.token_env.clone(),
                    rate_limit_per_minute: e.rate_limit_per_minute,
                    max_concurrent: Some(e.concurrency),
                    max_retries: e.max_retries,
                    backoff_base_ms: e.backoff_base_ms,
                    reply: e.reply.clone(),
                    seed,
                };
                let adapter = build_adapter(&e.adapter, &settings)?;
                let ec = EvalConfig {
                    concurrency: e.concurrency,
                    retries: e.retries,
                    timeout_ms: e.timeout_ms,
                    seed,
                };
                let run = evaluate(adapter.as_ref(), &items, &ec)?;
                commands::write(&out, run.report.to_json().as_bytes())
            }
        }
    }

    fn probe_items(&self) -> Result<Vec<frameprobe::eval::McqaItem>> {
        let path = self.input(Stage::Probes, None)?;
        Ok(commands::load_probes(&path)?.iter().map(Probe::to_item).collect())
    }
}

pub fn run(config: &Path) -> Result<ExitCode> {
    let text = fs::read_to_string(config).with_context(|| format!("cannot read {}", config.display()))?;
    let cfg: PipelineConfig = toml::from_str(&text).with_context(|| format!("{}", config.display()))?;
    if cfg.stages.is_empty() {
        bail!("{}: no stages listed", config.display());
    }
    let base = config.parent().map(Path::to_path_buf).unwrap_or_default();
    let work = base.join(&cfg.workdir);
    let runner = Runner { cfg, base, work };
    for &stage in &runner.cfg.stages {
        let out = runner.artifact(stage);
        if out.exists() {
            log::info!("stage {}: {} exists, skipping", stage.name(), out.display());
            continue;
        }
        log::info!("stage {}: writing {}", stage.name(), out.display());
        runner
            .run_stage(stage)
            .with_context(|| format!("stage {} failed", stage.name()))?;
    }
    Ok(ExitCode::SUCCESS)
}
