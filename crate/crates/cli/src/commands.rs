use std::collections::BTreeMap;
use std::fs;
use std::io::{BufReader, Write};
use std::path::Path;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use serde::Serialize;

use frameprobe::annotation::{read_annotations, AnnotatedSentence, Token};
use frameprobe::digest::config_digest;
use frameprobe::eval::{
    compare_reports, evaluate, load_mcqa_dataset, random_baseline, sample_items, EvalConfig, EvalReport, McqaItem,
};
use frameprobe::graph::{build_graphs, GraphFile};
use frameprobe::jsonl::{read_jsonl, write_jsonl, ArtifactHeader};
use frameprobe::lexicon::{parse_lexicon, parse_lexicon_lenient, FrameLexicon, LexiconError};
use frameprobe::parser::{parse_sentence, train_heads, EncoderSpec, HeadsCheckpoint, TrainConfig};
use frameprobe::probes::{
    export_augmentation, generate_for_graphs, parse_type_list, Probe, ProbeBatch, ProbeConfig, TemplateSet,
};
use frameprobe::registry::{build_adapter, build_encoder, AdapterSettings};

use crate::{
    EvalCompareArgs, EvalRandomArgs, EvalRunArgs, GraphBuildArgs, ItemSource, ParseArgs, ProbesGenArgs, TrainArgs,
};

pub fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).with_context(|| format!("cannot read {}", path.display()))
}

pub fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    fs::write(&tmp, bytes).with_context(|| format!("cannot write {}", path.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("cannot write {}", path.display()))
}

fn write_records<T: Serialize>(path: &Path, header: &ArtifactHeader, records: &[T]) -> Result<()> {
    let mut buf = Vec::new();
    write_jsonl(&mut buf, header, records)?;
    write(path, &buf)
}

fn json_pretty<T: Serialize>(v: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s.into_bytes()
}

fn output(path: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match path {
        Some(p) => write(p, bytes),
        None => {
            std::io::stdout().write_all(bytes)?;
            Ok(())
        }
    }
}

pub fn load_lexicon(path: &Path) -> Result<FrameLexicon> {
    match parse_lexicon(&read(path)?) {
        Ok(lex) => Ok(lex),
        Err(LexiconError::Invalid(v)) => {
            let lines: Vec<String> = v.iter().map(|x| x.to_string()).collect();
            bail!("{}: invalid lexicon\n{}", path.display(), lines.join("\n"))
        }
        Err(e) => Err(e).with_context(|| format!("{}", path.display())),
    }
}

pub fn lexicon_validate(path: &Path) -> Result<ExitCode> {
    let (_, violations) = parse_lexicon_lenient(&read(path)?).with_context(|| format!("{}", path.display()))?;
    let mut out = std::io::stdout().lock();
    for v in &violations {
        writeln!(out, "{v}")?;
    }
    Ok(if violations.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

pub fn lexicon_stats(path: &Path) -> Result<ExitCode> {
    let lex = load_lexicon(path)?;
    std::io::stdout().write_all(&json_pretty(&lex.stats()))?;
    Ok(ExitCode::SUCCESS)
}

pub fn load_annotations(path: &Path) -> Result<Vec<AnnotatedSentence>> {
    let f = fs::File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    read_annotations(BufReader::new(f)).with_context(|| format!("{}", path.display()))
}

/// A sentence of the plain input format.
pub struct InputSentence {
    pub doc_id: String,
    pub index: usize,
    pub text: String,
    pub tokens: Vec<Token>,
}

/// Reads `DOC_ID<TAB>tokens` or `tokens` lines. Sentences without a document
/// id belong to document `doc`. Indices count per document.
pub fn read_sentences(path: &Path) -> Result<Vec<InputSentence>> {
    let text = String::from_utf8(read(path)?).with_context(|| format!("{} is not UTF-8", path.display()))?;
    let mut counters: BTreeMap<String, usize> = BTreeMap::new();
    let mut out = Vec::new();
    for line in text.lines() {
        if line.trim().is_empty() {
            continue;
        }
        let (doc, sent) = match line.split_once('\t') {
            Some((d, s)) => (d.trim().to_string(), s.trim()),
            None => ("doc".to_string(), line.trim()),
        };
        let n = counters.entry(doc.clone()).or_default();
        out.push(InputSentence {
            doc_id: doc,
            index: *n,
            text: sent.to_string(),
            tokens: frameprobe::annotation::tokenize_whitespace(sent),
        });
        *n += 1;
    }
    Ok(out)
}

pub fn do_train(
    lex: &FrameLexicon,
    gold: &[AnnotatedSentence],
    encoder: &str,
    dim: usize,
    cfg: TrainConfig,
) -> Result<HeadsCheckpoint> {
    let enc = build_encoder(encoder, dim)?;
    let out = train_heads(gold, lex, enc.as_ref(), &cfg)?;
    log::info!(
        "trained {} epochs, final loss {:.6}",
        out.loss_trace.len(),
        out.loss_trace.last().copied().unwrap_or(f64::NAN)
    );
    Ok(HeadsCheckpoint::new(
        cfg,
        EncoderSpec {
            name: encoder.to_string(),
            dim,
        },
        out.heads,
        out.loss_trace,
    ))
}

pub fn train(a: &TrainArgs) -> Result<ExitCode> {
    let lex = load_lexicon(&a.lexicon)?;
    let gold = load_annotations(&a.gold)?;
    let cfg = TrainConfig {
        lr: a.lr,
        batch_size: a.batch_size,
        epochs: a.epochs,
        seed: a.seed,
        fe_hidden: a.fe_hidden,
    };
    let ck = do_train(&lex, &gold, &a.encoder, a.dim, cfg)?;
    write(&a.out, ck.to_json().as_bytes())?;
    Ok(ExitCode::SUCCESS)
}

pub fn load_heads(path: &Path) -> Result<HeadsCheckpoint> {
    let text = String::from_utf8(read(path)?)?;
    HeadsCheckpoint::from_json(&text).with_context(|| format!("{}", path.display()))
}

pub fn do_parse(lex: &FrameLexicon, ck: &HeadsCheckpoint, input: &[InputSentence]) -> Result<Vec<AnnotatedSentence>> {
    let enc = build_encoder(&ck.encoder.name, ck.encoder.dim)?;
    input
        .iter()
        .map(|s| {
            let parsed = parse_sentence(&s.tokens, lex, enc.as_ref(), &ck.heads)
                .with_context(|| format!("sentence {}#{}", s.doc_id, s.index))?;
            Ok(parsed.to_annotation(lex, &s.doc_id, s.index, &s.text, &s.tokens))
        })
        .collect()
}

pub fn parse(a: &ParseArgs) -> Result<ExitCode> {
    let lex = load_lexicon(&a.lexicon)?;
    let ck = load_heads(&a.heads)?;
    let input = read_sentences(&a.input)?;
    let out = do_parse(&lex, &ck, &input)?;
    let header = ArtifactHeader::new("annotations", Some(ck.seed), ck.config_digest.clone());
    write_records(&a.out, &header, &out)?;
    Ok(ExitCode::SUCCESS)
}

pub fn do_graph(lex: &FrameLexicon, annotations: &[AnnotatedSentence]) -> Result<GraphFile> {
    let graphs = build_graphs(annotations, lex)?;
    Ok(GraphFile::new(
        graphs,
        config_digest(&("graph", frameprobe::FORMAT_VERSION)),
    ))
}

pub fn graph_build(a: &GraphBuildArgs) -> Result<ExitCode> {
    let lex = load_lexicon(&a.lexicon)?;
    let file = do_graph(&lex, &load_annotations(&a.annotations)?)?;
    write(&a.out, file.to_json().as_bytes())?;
    if let Some(dot) = &a.dot {
        let text: String = file.graphs.iter().map(|g| g.to_dot()).collect();
        write(dot, text.as_bytes())?;
    }
    Ok(ExitCode::SUCCESS)
}

pub fn load_graph(path: &Path) -> Result<GraphFile> {
    let text = String::from_utf8(read(path)?)?;
    GraphFile::from_json(&text).with_context(|| format!("{}", path.display()))
}

pub fn probe_config(k: usize, seed: u64, templates: Option<&Path>) -> Result<ProbeConfig> {
    let templates = match templates {
        Some(p) => TemplateSet::from_json(&String::from_utf8(read(p)?)?).with_context(|| format!("{}", p.display()))?,
        None => TemplateSet::default(),
    };
    Ok(ProbeConfig { k, seed, templates })
}

pub fn do_probes(
    lex: &FrameLexicon,
    graphs: &GraphFile,
    types: &str,
    cfg: &ProbeConfig,
) -> Result<(ProbeBatch, ArtifactHeader)> {
    let types = parse_type_list(types)?;
    if types.is_empty() {
        bail!("no probe types given");
    }
    let batch = generate_for_graphs(&graphs.graphs, lex, &types, cfg)?;
    for s in batch.skips.entries() {
        log::info!("skipped {} {} candidates: {:?}", s.count, s.ptype, s.reason);
    }
    if !batch.skips.is_empty() {
        eprintln!(
            "generated {} probes, skipped {} candidates",
            batch.probes.len(),
            batch.skips.total()
        );
    }
    let header = ArtifactHeader::new("probes", Some(cfg.seed), cfg.digest(&types));
    Ok((batch, header))
}

pub fn probes_gen(a: &ProbesGenArgs) -> Result<ExitCode> {
    let lex = load_lexicon(&a.lexicon)?;
    let graphs = load_graph(&a.graph)?;
    let cfg = probe_config(a.k, a.seed, a.templates.as_deref())?;
    let (batch, header) = do_probes(&lex, &graphs, &a.types, &cfg)?;
    write_records(&a.out, &header, &batch.probes)?;
    if let Some(path) = &a.augment_out {
        let items = export_augmentation(&batch.probes)?;
        write_records(
            path,
            &ArtifactHeader::new("mcqa", Some(a.seed), header.config_digest.clone()),
            &items,
        )?;
    }
    Ok(ExitCode::SUCCESS)
}

pub fn load_probes(path: &Path) -> Result<Vec<Probe>> {
    let f = fs::File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    Ok(read_jsonl(BufReader::new(f), true)
        .with_context(|| format!("{}", path.display()))?
        .records)
}

pub fn load_items(src: &ItemSource) -> Result<Vec<McqaItem>> {
    match (&src.probes, &src.dataset) {
        (Some(p), _) => Ok(load_probes(p)?.iter().map(Probe::to_item).collect()),
        (None, Some(d)) => {
            let f = fs::File::open(d).with_context(|| format!("cannot open {}", d.display()))?;
            load_mcqa_dataset(BufReader::new(f)).with_context(|| format!("{}", d.display()))
        }
        (None, None) => bail!("either --probes or --dataset is required"),
    }
}

#[derive(Serialize)]
struct SampledReport {
    mean_accuracy: f64,
    sample: usize,
    repeats: usize,
    runs: Vec<EvalReport>,
}

pub fn eval_run(a: &EvalRunArgs) -> Result<ExitCode> {
    let items = load_items(&a.items)?;
    let settings = AdapterSettings {
        model: a.model.clone(),
        base_url: a.base_url.clone(),
        token_env: a.token_env.clone(),
        rate_limit_per_minute: a.rate_limit,
        max_concurrent: Some(a.concurrency),
        reply: a.reply.clone(),
        seed: a.seed,
        ..Default::default()
    };
    let adapter = build_adapter(&a.adapter, &settings)?;
    let cfg = EvalConfig {
        concurrency: a.concurrency,
        retries: a.retries,
        timeout_ms: a.timeout_ms,
        seed: a.seed,
    };
    if a.repeats == 0 {
        bail!("--repeats must be at least 1");
    }
    let mut runs = Vec::new();
    let mut replies = Vec::new();
    for r in 0..a.repeats {
        let subset = match a.sample {
            Some(n) => sample_items(&items, n, a.seed, r),
            None => items.clone(),
        };
        let run = evaluate(adapter.as_ref(), &subset, &cfg)?;
        replies.extend(run.replies);
        runs.push(run.report);
    }
    if let Some(path) = &a.replies {
        let header = ArtifactHeader::new("replies", Some(a.seed), runs[0].config_digest.clone());
        write_records(path, &header, &replies)?;
    }
    let degraded = runs.iter().any(|r| r.degraded);
    if a.repeats == 1 && a.sample.is_none() {
        write(&a.out, runs[0].to_json().as_bytes())?;
    } else {
        let mean_accuracy = runs.iter().map(|r| r.accuracy()).sum::<f64>() / runs.len() as f64;
        let summary = SampledReport {
            mean_accuracy,
            sample: a.sample.unwrap_or(items.len()),
            repeats: a.repeats,
            runs,
        };
        write(&a.out, &json_pretty(&summary))?;
    }
    if degraded {
        eprintln!("warning: more than half of the items abstained; report flagged degraded");
    }
    Ok(ExitCode::SUCCESS)
}

pub fn eval_random(a: &EvalRandomArgs) -> Result<ExitCode> {
    let items = load_items(&a.items)?;
    let report = random_baseline(&items, a.seed, a.repeats)?;
    output(a.out.as_deref(), &json_pretty(&report))?;
    Ok(ExitCode::SUCCESS)
}

fn load_report(path: &Path) -> Result<EvalReport> {
    EvalReport::from_json(&String::from_utf8(read(path)?)?).with_context(|| format!("{}", path.display()))
}

pub fn eval_compare(a: &EvalCompareArgs) -> Result<ExitCode> {
    let delta = compare_reports(&load_report(&a.skp)?, &load_report(&a.hkp)?, a.force)?;
    if let Some(path) = &a.radar {
        let radar: BTreeMap<String, Option<f64>> = delta.radar.iter().map(|x| (x.axis.to_string(), x.value)).collect();
        write(path, &json_pretty(&radar))?;
    }
    output(a.out.as_deref(), &json_pretty(&delta))?;
    Ok(ExitCode::SUCCESS)
}
