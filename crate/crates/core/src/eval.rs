//! Black-box evaluation of multiple-choice items.
//!
//! Models are reached through the [`ModelAdapter`] trait. The harness renders
//! every item to a prompt, fans requests out over a fixed number of worker
//! threads, and scores all replies on one thread once they are in, so the
//! report does not depend on the concurrency level.

use std::collections::{BTreeMap, HashSet};
use std::io::BufRead;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::digest::{config_digest, digest_u64};
use crate::jsonl::{read_jsonl, JsonlError};
use crate::normalize::normalize_text;
use crate::probes::ProbeType;
use crate::{FORMAT_VERSION, TOOL_VERSION};

/// Per-type key used for items that did not come from a probe.
pub const SURFACE: &str = "SURFACE";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct McqaItem {
    #[serde(default)]
    pub id: String,
    pub doc_id: String,
    pub context: String,
    pub question: String,
    pub choices: Vec<String>,
    pub answer_index: usize,
    #[serde(default)]
    pub split: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ptype: Option<ProbeType>,
}

impl McqaItem {
    pub fn check(&self) -> Result<(), String> {
        if !(2..=26).contains(&self.choices.len()) {
            return Err(format!("{} choices, expected 2 to 26", self.choices.len()));
        }
        if self.answer_index >= self.choices.len() {
            return Err(format!(
                "answer_index {} out of range for {} choices",
                self.answer_index,
                self.choices.len()
            ));
        }
        let mut seen = HashSet::new();
        for c in &self.choices {
            if !seen.insert(normalize_text(c)) {
                return Err(format!("duplicate choice '{c}'"));
            }
        }
        Ok(())
    }

    fn type_key(&self) -> &'static str {
        self.ptype.map(ProbeType::as_str).unwrap_or(SURFACE)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("{0}")]
    Dataset(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("model names differ: SKP report is '{0}', HKP report is '{1}' (use force to compare anyway)")]
    ModelMismatch(String, String),
}

/// Reads a surface-QA file: one JSON record per line, optional header line.
/// Items without an id get `{doc_id}:{line}`.
pub fn load_mcqa_dataset<R: BufRead>(reader: R) -> Result<Vec<McqaItem>, EvalError> {
    let doc = read_jsonl::<serde_json::Value, _>(reader, false).map_err(|e| EvalError::Dataset(e.to_string()))?;
    let offset = usize::from(doc.header.is_some());
    let mut out = Vec::with_capacity(doc.records.len());
    for (i, v) in doc.records.into_iter().enumerate() {
        let line = i + 1 + offset;
        let mut item: McqaItem = serde_json::from_value(v).map_err(|e| {
            EvalError::Dataset(
                JsonlError::Record {
                    line,
                    message: e.to_string(),
                }
                .to_string(),
            )
        })?;
        item.check()
            .map_err(|m| EvalError::Dataset(format!("line {line}: {m}")))?;
        if item.id.is_empty() {
            item.id = format!("{}:{line}", item.doc_id);
        }
        out.push(item);
    }
    Ok(out)
}

/// Renders an item as the text sent to a model: context, question, lettered
/// choices and an answer instruction.
pub fn render_item_prompt(item: &McqaItem) -> String {
    let mut s = String::new();
    if !item.context.is_empty() {
        s.push_str(&item.context);
        s.push_str("\n\n");
    }
    s.push_str("Question: ");
    s.push_str(&item.question);
    s.push('\n');
    for (i, c) in item.choices.iter().enumerate() {
        s.push_str(&format!("{}. {}\n", letter(i), c));
    }
    s.push_str("Answer with the letter of the correct choice.");
    s
}

fn letter(i: usize) -> char {
    (b'A' + i as u8) as char
}

fn word_bounded(hay: &str, needle: &str) -> bool {
    hay.match_indices(needle).any(|(pos, m)| {
        let before = hay[..pos].chars().next_back();
        let after = hay[pos + m.len()..].chars().next();
        !before.is_some_and(char::is_alphanumeric) && !after.is_some_and(char::is_alphanumeric)
    })
}

/// Maps a free-text reply onto a choice index. Rules, first hit wins:
///
/// 1. the reply starts with a single capital letter (optionally after
///    `Answer:` or an opening parenthesis) that names a choice;
/// 2. the reply equals a choice, or exactly one choice appears in it as a
///    whole word sequence (ignoring choices contained in a longer match);
/// 3. exactly one choice is named at all, either as a substring or as a
///    standalone letter.
///
/// Otherwise the reply is an abstention (`None`).
pub fn parse_model_answer(raw: &str, choices: &[String]) -> Option<usize> {
    let k = choices.len();
    let mut t = raw.trim_start();
    if let Some(rest) = t
        .get(..7)
        .filter(|p| p.eq_ignore_ascii_case("answer:"))
        .map(|_| &t[7..])
    {
        t = rest.trim_start();
    }
    t = t.trim_start_matches(['(', '[', '*']);
    let mut chars = t.chars();
    if let Some(c) = chars.next() {
        let next = chars.next();
        if c.is_ascii_uppercase() && !next.is_some_and(char::is_alphanumeric) {
            let idx = (c as u8 - b'A') as usize;
            if idx < k {
                return Some(idx);
            }
        }
    }

    let norm = normalize_text(raw);
    let norm_choices: Vec<String> = choices.iter().map(|c| normalize_text(c)).collect();
    if let Some(i) = norm_choices.iter().position(|c| *c == norm) {
        return Some(i);
    }
    let mut whole: Vec<usize> = (0..k)
        .filter(|&i| !norm_choices[i].is_empty() && word_bounded(&norm, &norm_choices[i]))
        .collect();
    // A hit inside a longer hit ("w1" within "w1 w2") is not a separate mention.
    let hits = whole.clone();
    whole.retain(|&i| {
        !hits
            .iter()
            .any(|&j| j != i && norm_choices[j].contains(&norm_choices[i]))
    });
    if whole.len() == 1 {
        return Some(whole[0]);
    }

    let letters: HashSet<usize> = raw
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| w.len() == 1 && w.as_bytes()[0].is_ascii_uppercase())
        .map(|w| (w.as_bytes()[0] - b'A') as usize)
        .filter(|&i| i < k)
        .collect();
    let named: HashSet<usize> = (0..k)
        .filter(|&i| !norm_choices[i].is_empty() && norm.contains(&norm_choices[i]))
        .chain(letters)
        .collect();
    if named.len() == 1 {
        return named.into_iter().next();
    }
    None
}

/// What an adapter is asked. The gold index is never part of it.
#[derive(Debug, Clone)]
pub struct AdapterRequest<'a> {
    pub item_id: &'a str,
    pub prompt: &'a str,
    pub choices: &'a [String],
    pub timeout: Duration,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdapterReply {
    pub raw_text: String,
    pub parsed_index: Option<usize>,
    pub latency_ms: u64,
    /// Delays slept before retrying rate-limited or failed requests.
    #[serde(default)]
    pub backoff_ms: Vec<u64>,
}

impl AdapterReply {
    pub fn from_text(raw_text: String, choices: &[String], latency_ms: u64) -> Self {
        Self {
            parsed_index: parse_model_answer(&raw_text, choices),
            raw_text,
            latency_ms,
            backoff_ms: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum AdapterError {
    /// Worth retrying: connection failures, timeouts, exhausted 429/5xx retries.
    #[error("transport error: {message}")]
    Transport { message: String, backoff_ms: Vec<u64> },
    #[error("permanent error: {message}")]
    Permanent { message: String, backoff_ms: Vec<u64> },
}

impl AdapterError {
    fn backoffs(&self) -> &[u64] {
        match self {
            AdapterError::Transport { backoff_ms, .. } | AdapterError::Permanent { backoff_ms, .. } => backoff_ms,
        }
    }
}

/// A black-box model. Implementations must be callable from several threads
/// at once, or report `max_concurrency() == Some(1)`.
pub trait ModelAdapter: Send + Sync {
    fn name(&self) -> &str;

    fn max_concurrency(&self) -> Option<usize> {
        None
    }

    fn answer(&self, request: &AdapterRequest<'_>) -> Result<AdapterReply, AdapterError>;
}

/// Always replies with the same text.
pub struct ConstantAdapter {
    pub reply: String,
}

impl ModelAdapter for ConstantAdapter {
    fn name(&self) -> &str {
        "constant"
    }

    fn answer(&self, request: &AdapterRequest<'_>) -> Result<AdapterReply, AdapterError> {
        Ok(AdapterReply::from_text(self.reply.clone(), request.choices, 0))
    }
}

/// Picks a letter uniformly at random. The draw depends only on the seed and
/// the item id, never on request order.
pub struct RandomAdapter {
    pub seed: u64,
}

impl ModelAdapter for RandomAdapter {
    fn name(&self) -> &str {
        "random"
    }

    fn answer(&self, request: &AdapterRequest<'_>) -> Result<AdapterReply, AdapterError> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ digest_u64(request.item_id.as_bytes()));
        let i = rng.gen_range(0..request.choices.len().max(1));
        Ok(AdapterReply::from_text(letter(i).to_string(), request.choices, 0))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub concurrency: usize,
    /// Extra attempts after a transport error.
    pub retries: u32,
    pub timeout_ms: u64,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            concurrency: 4,
            retries: 2,
            timeout_ms: 60_000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TypeStats {
    pub items: usize,
    pub correct: usize,
    pub abstain: usize,
    pub accuracy: f64,
}

impl TypeStats {
    fn add(&mut self, correct: bool, abstain: bool) {
        self.items += 1;
        self.correct += usize::from(correct);
        self.abstain += usize::from(abstain);
        self.accuracy = self.correct as f64 / self.items as f64;
    }
}

/// Wall-clock and transport figures. Kept apart from the scored fields
/// because they vary between otherwise identical runs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub wall_clock_ms: u64,
    pub mean_latency_ms: f64,
    pub backoffs: usize,
    pub transport_failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub format_version: u32,
    pub tool_version: String,
    pub model: String,
    pub seed: u64,
    pub config_digest: String,
    pub overall: TypeStats,
    pub per_type: BTreeMap<String, TypeStats>,
    /// More than half of the items abstained.
    pub degraded: bool,
    pub metadata: RunMetadata,
}

impl EvalReport {
    pub fn accuracy(&self) -> f64 {
        self.overall.accuracy
    }

    /// Builds a report from per-item outcomes `(type key, correct, abstained)`.
    pub fn from_outcomes<'a>(
        model: &str,
        seed: u64,
        config_digest: String,
        outcomes: impl IntoIterator<Item = (&'a str, bool, bool)>,
    ) -> Self {
        let mut overall = TypeStats::default();
        let mut per_type: BTreeMap<String, TypeStats> = BTreeMap::new();
        for (key, correct, abstain) in outcomes {
            overall.add(correct, abstain);
            per_type.entry(key.to_string()).or_default().add(correct, abstain);
        }
        Self {
            format_version: FORMAT_VERSION,
            tool_version: TOOL_VERSION.to_string(),
            model: model.to_string(),
            seed,
            config_digest,
            degraded: overall.abstain * 2 > overall.items,
            overall,
            per_type,
            metadata: RunMetadata::default(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, EvalError> {
        let r: EvalReport = serde_json::from_str(text).map_err(|e| EvalError::Dataset(format!("bad report: {e}")))?;
        if r.format_version != FORMAT_VERSION {
            return Err(EvalError::Dataset(format!(
                "unsupported format_version {}",
                r.format_version
            )));
        }
        Ok(r)
    }
}

/// One logged reply, keyed by item id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplyLog {
    pub item_id: String,
    pub attempts: u32,
    pub raw_text: Option<String>,
    pub parsed_index: Option<usize>,
    pub error: Option<String>,
    pub latency_ms: u64,
    pub backoff_ms: Vec<u64>,
}

#[derive(Debug, Clone)]
pub struct EvalRun {
    pub report: EvalReport,
    /// In item order.
    pub replies: Vec<ReplyLog>,
}

fn ask(adapter: &dyn ModelAdapter, item: &McqaItem, cfg: &EvalConfig) -> ReplyLog {
    let prompt = render_item_prompt(item);
    let request = AdapterRequest {
        item_id: &item.id,
        prompt: &prompt,
        choices: &item.choices,
        timeout: Duration::from_millis(cfg.timeout_ms),
    };
    let mut log = ReplyLog {
        item_id: item.id.clone(),
        attempts: 0,
        raw_text: None,
        parsed_index: None,
        error: None,
        latency_ms: 0,
        backoff_ms: Vec::new(),
    };
    loop {
        log.attempts += 1;
        match adapter.answer(&request) {
            Ok(reply) => {
                log.backoff_ms.extend(&reply.backoff_ms);
                log.latency_ms = reply.latency_ms;
                log.parsed_index = reply.parsed_index.filter(|&i| i < item.choices.len());
                log.raw_text = Some(reply.raw_text);
                log.error = None;
                return log;
            }
            Err(e) => {
                log.backoff_ms.extend(e.backoffs());
                log.error = Some(e.to_string());
                let retryable = matches!(e, AdapterError::Transport { .. });
                if !retryable || log.attempts > cfg.retries {
                    log::warn!("item {}: {} (abstaining)", item.id, e);
                    return log;
                }
            }
        }
    }
}

/// Sends every item through `adapter` and scores the replies. Abstentions
/// and failed items count as incorrect.
pub fn evaluate(adapter: &dyn ModelAdapter, items: &[McqaItem], cfg: &EvalConfig) -> Result<EvalRun, EvalError> {
    if items.is_empty() {
        return Err(EvalError::Config("no items to evaluate".into()));
    }
    if cfg.concurrency == 0 {
        return Err(EvalError::Config("concurrency must be positive".into()));
    }
    for it in items {
        it.check()
            .map_err(|m| EvalError::Dataset(format!("item {}: {m}", it.id)))?;
    }
    let workers = cfg
        .concurrency
        .min(adapter.max_concurrency().unwrap_or(usize::MAX))
        .clamp(1, items.len());
    let started = Instant::now();
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<ReplyLog>>> = Mutex::new(vec![None; items.len()]);
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let log = ask(adapter, &items[i], cfg);
                slots.lock().expect("reply log lock")[i] = Some(log);
            });
        }
    });
    let replies: Vec<ReplyLog> = slots
        .into_inner()
        .expect("reply log lock")
        .into_iter()
        .map(|r| r.expect("every item answered"))
        .collect();

    let digest = config_digest(&(adapter.name(), cfg.retries, cfg.timeout_ms, cfg.seed));
    let mut report = EvalReport::from_outcomes(
        adapter.name(),
        cfg.seed,
        digest,
        items.iter().zip(&replies).map(|(it, r)| {
            (
                it.type_key(),
                r.parsed_index == Some(it.answer_index),
                r.parsed_index.is_none(),
            )
        }),
    );
    let lat: u64 = replies.iter().map(|r| r.latency_ms).sum();
    report.metadata = RunMetadata {
        wall_clock_ms: started.elapsed().as_millis() as u64,
        mean_latency_ms: lat as f64 / replies.len() as f64,
        backoffs: replies.iter().map(|r| r.backoff_ms.len()).sum(),
        transport_failures: replies.iter().filter(|r| r.error.is_some()).count(),
    };
    if report.degraded {
        log::warn!(
            "{} of {} items abstained; report flagged degraded",
            report.overall.abstain,
            report.overall.items
        );
    }
    Ok(EvalRun { report, replies })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineReport {
    pub format_version: u32,
    pub tool_version: String,
    pub seed: u64,
    pub config_digest: String,
    pub items: usize,
    pub repeats: usize,
    pub mean: f64,
    pub runs: Vec<f64>,
}

/// Accuracy of uniform guessing, repeated `repeats` times. Repeat `r` uses
/// ChaCha stream `r` of the seed.
pub fn random_baseline(items: &[McqaItem], seed: u64, repeats: usize) -> Result<BaselineReport, EvalError> {
    if repeats == 0 {
        return Err(EvalError::Config("repeats must be at least 1".into()));
    }
    let mut runs = Vec::with_capacity(repeats);
    for r in 0..repeats {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(r as u64);
        let correct = items
            .iter()
            .filter(|it| rng.gen_range(0..it.choices.len()) == it.answer_index)
            .count();
        runs.push(if items.is_empty() {
            0.0
        } else {
            correct as f64 / items.len() as f64
        });
    }
    Ok(BaselineReport {
        format_version: FORMAT_VERSION,
        tool_version: TOOL_VERSION.to_string(),
        seed,
        config_digest: config_digest(&("random_baseline", seed, repeats)),
        items: items.len(),
        repeats,
        mean: runs.iter().sum::<f64>() / repeats as f64,
        runs,
    })
}

/// `n` items drawn without replacement for repeat `r`, in original order.
pub fn sample_items(items: &[McqaItem], n: usize, seed: u64, r: usize) -> Vec<McqaItem> {
    if n >= items.len() {
        return items.to_vec();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(r as u64);
    let mut idx: Vec<usize> = (0..items.len()).collect();
    let (chosen, _) = idx.partial_shuffle(&mut rng, n);
    let mut chosen = chosen.to_vec();
    chosen.sort_unstable();
    chosen.into_iter().map(|i| items[i].clone()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeDelta {
    pub skp: Option<f64>,
    pub hkp: Option<f64>,
    pub delta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadarAxis {
    pub axis: ProbeType,
    pub value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaReport {
    pub model: String,
    pub skp: f64,
    pub hkp: f64,
    /// `hkp - skp`.
    pub delta: f64,
    pub per_type: BTreeMap<String, TypeDelta>,
    /// HKP accuracy per probe type, `None` for types without items.
    pub radar: Vec<RadarAxis>,
}

/// Pairs a surface-QA report with a probe report of the same model.
pub fn compare_reports(skp: &EvalReport, hkp: &EvalReport, force: bool) -> Result<DeltaReport, EvalError> {
    if skp.model != hkp.model && !force {
        return Err(EvalError::ModelMismatch(skp.model.clone(), hkp.model.clone()));
    }
    let acc = |r: &EvalReport, k: &str| r.per_type.get(k).filter(|s| s.items > 0).map(|s| s.accuracy);
    let keys: std::collections::BTreeSet<&String> = skp.per_type.keys().chain(hkp.per_type.keys()).collect();
    let per_type = keys
        .into_iter()
        .map(|k| {
            let (s, h) = (acc(skp, k), acc(hkp, k));
            let delta = s.zip(h).map(|(s, h)| h - s);
            (k.clone(), TypeDelta { skp: s, hkp: h, delta })
        })
        .collect();
    Ok(DeltaReport {
        model: hkp.model.clone(),
        skp: skp.accuracy(),
        hkp: hkp.accuracy(),
        delta: hkp.accuracy() - skp.accuracy(),
        per_type,
        radar: ProbeType::ALL
            .into_iter()
            .map(|t| RadarAxis {
                axis: t,
                value: acc(hkp, t.as_str()),
            })
            .collect(),
    })
}
