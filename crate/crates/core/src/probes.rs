//! Conversion of graph triples into multiple-choice probes.
//!
//! Each probe type is a [`ProbeStrategy`]: it walks a document graph and
//! proposes candidates (slot bindings, gold answer, distractor pool). The
//! generator then renders the prompt, drops leaking and duplicate
//! candidates, samples distractors and places the gold choice.
//!
//! Type mappings:
//!
//! | type  | triple                  | gold              | distractor pool                          |
//! |-------|-------------------------|-------------------|------------------------------------------|
//! | IFES  | role                    | FE name           | FE names of other lexicon frames          |
//! | EFES  | role                    | FE name           | FE names of other frames in the document  |
//! | SFES  | `same_fe` filler pair   | other filler text | fillers with a different FE name          |
//! | IFESR | two roles, one instance | second FE name    | FE names outside the frame               |
//! | EFESR | `cross_frame` pair      | other filler text | fillers of the remaining frame instances |
//! | FFR   | frame relation          | target frame name | other frame names in the lexicon          |
//!
//! In every pool, names belonging to the probed frame itself are excluded.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::digest::{config_digest, digest_u64};
use crate::eval::McqaItem;
use crate::graph::{extract_triples, FillerNode, FrameGraph, FrameNode, Triple, TripleKind, CROSS_FRAME, SAME_FE};
use crate::lexicon::FrameLexicon;
use crate::normalize::normalize_text;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ProbeType {
    IFES,
    EFES,
    SFES,
    IFESR,
    EFESR,
    FFR,
}

impl ProbeType {
    pub const ALL: [ProbeType; 6] = [
        ProbeType::IFES,
        ProbeType::EFES,
        ProbeType::SFES,
        ProbeType::IFESR,
        ProbeType::EFESR,
        ProbeType::FFR,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ProbeType::IFES => "IFES",
            ProbeType::EFES => "EFES",
            ProbeType::SFES => "SFES",
            ProbeType::IFESR => "IFESR",
            ProbeType::EFESR => "EFESR",
            ProbeType::FFR => "FFR",
        }
    }

    pub fn index(self) -> usize {
        ProbeType::ALL.iter().position(|t| *t == self).expect("listed")
    }

    /// Triple kind a probe of this type must come from.
    pub fn triple_kind(self) -> TripleKind {
        match self {
            ProbeType::IFES | ProbeType::EFES | ProbeType::IFESR => TripleKind::Role,
            ProbeType::SFES | ProbeType::EFESR => TripleKind::FillerRelation,
            ProbeType::FFR => TripleKind::FrameRelation,
        }
    }

    /// Slots the type's mapping binds. Templates may only use these.
    pub fn provided_slots(self) -> &'static [&'static str] {
        match self {
            ProbeType::IFES | ProbeType::EFES | ProbeType::IFESR => &["filler", "frame", "scenario"],
            ProbeType::SFES => &["filler", "fe", "frame", "frame2", "scenario"],
            ProbeType::EFESR => &["fe", "frame", "fe2", "frame2", "scenario"],
            ProbeType::FFR => &["frame", "relation", "scenario"],
        }
    }
}

impl fmt::Display for ProbeType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ProbeType {
    type Err = ProbeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ProbeType::ALL
            .into_iter()
            .find(|t| t.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| ProbeError::Template(format!("unknown probe type '{s}'")))
    }
}

/// Parses a comma-separated type list such as `IFES,FFR`.
pub fn parse_type_list(s: &str) -> Result<Vec<ProbeType>, ProbeError> {
    let mut out: Vec<ProbeType> = s
        .split(',')
        .filter(|p| !p.trim().is_empty())
        .map(str::parse)
        .collect::<Result<_, _>>()?;
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

#[derive(Debug, thiserror::Error)]
pub enum ProbeError {
    #[error("template error: {0}")]
    Template(String),
    #[error("unbound slot '{0}'")]
    Render(String),
    #[error("need {needed} distractors, only {available} available")]
    InsufficientPool { needed: usize, available: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("probe {0} has no split tag")]
    MissingSplit(String),
}

pub const SLOT_NAMES: [&str; 7] = ["filler", "frame", "fe", "frame2", "fe2", "relation", "scenario"];

enum Piece<'a> {
    Text(&'a str),
    Slot(&'a str),
}

fn pieces(template: &str) -> Vec<Piece<'_>> {
    let mut out = Vec::new();
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        let after = &rest[open + 1..];
        let close = after.find('}');
        let name = close.map(|c| &after[..c]);
        match name {
            Some(n) if !n.is_empty() && n.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') => {
                out.push(Piece::Text(&rest[..open]));
                out.push(Piece::Slot(n));
                rest = &after[n.len() + 1..];
            }
            _ => {
                out.push(Piece::Text(&rest[..=open]));
                rest = after;
            }
        }
    }
    out.push(Piece::Text(rest));
    out
}

/// Slot names used by a template, in order of first use.
pub fn template_slots(template: &str) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for p in pieces(template) {
        if let Piece::Slot(s) = p {
            if !out.iter().any(|o| o == s) {
                out.push(s.to_string());
            }
        }
    }
    out
}

/// Substitutes `{slot}` occurrences. Braces that do not enclose an
/// identifier are copied through.
pub fn render_prompt(template: &str, slots: &BTreeMap<&str, String>) -> Result<String, ProbeError> {
    let mut out = String::with_capacity(template.len() + 32);
    for p in pieces(template) {
        match p {
            Piece::Text(t) => out.push_str(t),
            Piece::Slot(s) => out.push_str(slots.get(s).ok_or_else(|| ProbeError::Render(s.to_string()))?),
        }
    }
    Ok(out)
}

/// Prompt template per probe type.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplateSet(pub BTreeMap<ProbeType, String>);

impl Default for TemplateSet {
    fn default() -> Self {
        let t = [
            (ProbeType::IFES, "In {frame} scenario, {filler} is a [mask]."),
            (
                ProbeType::EFES,
                "Among the scenarios {scenario}, {filler} in {frame} is a [mask].",
            ),
            (
                ProbeType::SFES,
                "In {frame} scenario, {filler} is the {fe}; in {frame2} scenario, the {fe} is [mask].",
            ),
            (
                ProbeType::IFESR,
                "In {frame} scenario, {filler} takes part together with the [mask].",
            ),
            (
                ProbeType::EFESR,
                "The {fe} of {frame} is also the {fe2} of {frame2}, namely [mask].",
            ),
            (ProbeType::FFR, "{frame} {relation} [mask]."),
        ];
        TemplateSet(t.into_iter().map(|(k, v)| (k, v.to_string())).collect())
    }
}

impl TemplateSet {
    /// Reads a JSON object mapping type names to templates. Types not listed
    /// keep their default template.
    pub fn from_json(text: &str) -> Result<Self, ProbeError> {
        let raw: BTreeMap<String, String> =
            serde_json::from_str(text).map_err(|e| ProbeError::Template(format!("bad template file: {e}")))?;
        let mut set = TemplateSet::default();
        for (k, v) in raw {
            set.0.insert(k.parse()?, v);
        }
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<(), ProbeError> {
        for (t, tpl) in &self.0 {
            if tpl.matches("[mask]").count() != 1 {
                return Err(ProbeError::Template(format!(
                    "{t}: template must contain [mask] exactly once"
                )));
            }
            for slot in template_slots(tpl) {
                if !SLOT_NAMES.contains(&slot.as_str()) {
                    return Err(ProbeError::Template(format!("{t}: unknown slot '{slot}'")));
                }
                if !t.provided_slots().contains(&slot.as_str()) {
                    return Err(ProbeError::Template(format!(
                        "{t}: slot '{slot}' is not bound for this type"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn get(&self, t: ProbeType) -> Result<&str, ProbeError> {
        self.0
            .get(&t)
            .map(String::as_str)
            .ok_or_else(|| ProbeError::Template(format!("no template for {t}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub k: usize,
    pub seed: u64,
    pub templates: TemplateSet,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            k: 3,
            seed: 0,
            templates: TemplateSet::default(),
        }
    }
}

impl ProbeConfig {
    pub fn digest(&self, types: &[ProbeType]) -> String {
        config_digest(&(self, types))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub doc_id: String,
    pub split: Option<String>,
    pub triple: Triple,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub secondary: Option<Triple>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Probe {
    pub id: String,
    pub ptype: ProbeType,
    pub prompt: String,
    /// Rendered frame-based context of the probe.
    pub context: String,
    pub choices: Vec<String>,
    pub answer_index: usize,
    pub provenance: Provenance,
    pub seed: u64,
}

impl Probe {
    pub fn gold(&self) -> &str {
        &self.choices[self.answer_index]
    }

    pub fn to_item(&self) -> McqaItem {
        McqaItem {
            id: self.id.clone(),
            doc_id: self.provenance.doc_id.clone(),
            context: self.context.clone(),
            question: self.prompt.clone(),
            choices: self.choices.clone(),
            answer_index: self.answer_index,
            split: self.provenance.split.clone(),
            ptype: Some(self.ptype),
        }
    }

    /// Checks the choice invariants and the leakage rule.
    pub fn check(&self) -> Result<(), String> {
        if self.answer_index >= self.choices.len() {
            return Err("answer_index out of range".into());
        }
        let norm: Vec<String> = self.choices.iter().map(|c| normalize_text(c)).collect();
        if norm.iter().collect::<HashSet<_>>().len() != norm.len() {
            return Err("duplicate choices".into());
        }
        if normalize_text(&self.prompt).contains(&norm[self.answer_index]) {
            return Err("prompt contains the gold answer".into());
        }
        if self.provenance.triple.kind != self.ptype.triple_kind() {
            return Err("provenance triple kind does not match type".into());
        }
        Ok(())
    }
}

/// Content id: digest of type, document, prompt, gold answer and sorted
/// choices. Distractor order does not affect it.
pub fn probe_id(ptype: ProbeType, doc_id: &str, prompt: &str, gold: &str, choices: &[String]) -> String {
    let mut sorted = choices.to_vec();
    sorted.sort();
    config_digest(&(ptype, doc_id, prompt, gold, sorted))
}

/// A probe before distractor sampling.
#[derive(Debug, Clone)]
pub struct Candidate {
    pub bindings: BTreeMap<&'static str, String>,
    pub gold: String,
    pub pool: Vec<String>,
    pub triple: Triple,
    pub secondary: Option<Triple>,
}

/// Read-only view of one document graph shared by the strategies.
pub struct DocView<'a> {
    pub graph: &'a FrameGraph,
    pub lex: &'a FrameLexicon,
    pub triples: Vec<Triple>,
    frames: BTreeMap<&'a str, &'a FrameNode>,
    fillers: BTreeMap<&'a str, &'a FillerNode>,
    scenario: String,
}

impl<'a> DocView<'a> {
    pub fn new(graph: &'a FrameGraph, lex: &'a FrameLexicon) -> Self {
        let mut names: Vec<&str> = Vec::new();
        for n in &graph.frame_nodes {
            if !names.contains(&n.frame_name.as_str()) {
                names.push(&n.frame_name);
            }
        }
        Self {
            graph,
            lex,
            triples: extract_triples(graph),
            frames: graph.frame_nodes.iter().map(|n| (n.instance_id.as_str(), n)).collect(),
            fillers: graph.filler_nodes.iter().map(|n| (n.instance_id.as_str(), n)).collect(),
            scenario: names.join(", "),
        }
    }

    pub fn frame_node(&self, id: &str) -> &'a FrameNode {
        self.frames[id]
    }

    pub fn filler_node(&self, id: &str) -> &'a FillerNode {
        self.fillers[id]
    }

    /// Rendered context: the frames present in the document followed by its
    /// sentences.
    pub fn hidden_context(&self) -> String {
        let text: Vec<&str> = self.graph.sentences.iter().map(|s| s.text.as_str()).collect();
        format!("Frames: {}.\n{}", self.scenario, text.join("\n"))
    }

    fn bindings(&self) -> BTreeMap<&'static str, String> {
        BTreeMap::from([("scenario", self.scenario.clone())])
    }

    fn fe_names_of(&self, frame_id: &str) -> BTreeSet<&'a str> {
        self.lex
            .frame_fes(frame_id)
            .into_iter()
            .map(|fe| fe.name.as_str())
            .collect()
    }

    /// FE names of the given frames, minus the names used by `exclude`.
    fn fe_pool<'f>(&self, frames: impl Iterator<Item = &'f str>, exclude: &str) -> Vec<String> {
        let own = self.fe_names_of(exclude);
        let mut out = Vec::new();
        for f in frames {
            for fe in self.lex.frame_fes(f) {
                if !own.contains(fe.name.as_str()) {
                    out.push(fe.name.clone());
                }
            }
        }
        out
    }

    fn role_triples(&self) -> impl Iterator<Item = &Triple> {
        self.triples.iter().filter(|t| t.kind == TripleKind::Role)
    }
}

/// One probe type's triple mapping.
pub trait ProbeStrategy: Send + Sync {
    fn ptype(&self) -> ProbeType;
    fn candidates(&self, view: &DocView<'_>) -> Vec<Candidate>;
}

pub struct InternalFe;
pub struct ExternalFe;
pub struct SameFe;
pub struct InternalFeReasoning;
pub struct ExternalFeReasoning;
pub struct FrameRelationProbe;

impl ProbeStrategy for InternalFe {
    fn ptype(&self) -> ProbeType {
        ProbeType::IFES
    }

    fn candidates(&self, view: &DocView<'_>) -> Vec<Candidate> {
        view.role_triples()
            .map(|t| {
                let frame = view.frame_node(&t.source);
                let filler = view.filler_node(&t.target);
                let mut b = view.bindings();
                b.insert("frame", frame.frame_name.clone());
                b.insert("filler", filler.text.clone());
                Candidate {
                    bindings: b,
                    gold: filler.fe_name.clone(),
                    pool: view.fe_pool(
                        view.lex
                            .frames()
                            .map(|f| f.id.as_str())
                            .filter(|id| *id != frame.frame_id),
                        &frame.frame_id,
                    ),
                    triple: t.clone(),
                    secondary: None,
                }
            })
            .collect()
    }
}

impl ProbeStrategy for ExternalFe {
    fn ptype(&self) -> ProbeType {
        ProbeType::EFES
    }

    fn candidates(&self, view: &DocView<'_>) -> Vec<Candidate> {
        let doc_frames: BTreeSet<&str> = view.graph.frame_nodes.iter().map(|n| n.frame_id.as_str()).collect();
        view.role_triples()
            .map(|t| {
                let frame = view.frame_node(&t.source);
                let filler = view.filler_node(&t.target);
                let mut b = view.bindings();
                b.insert("frame", frame.frame_name.clone());
                b.insert("filler", filler.text.clone());
                Candidate {
                    bindings: b,
                    gold: filler.fe_name.clone(),
                    pool: view.fe_pool(
                        doc_frames.iter().copied().filter(|id| *id != frame.frame_id),
                        &frame.frame_id,
                    ),
                    triple: t.clone(),
                    secondary: None,
                }
            })
            .collect()
    }
}

impl ProbeStrategy for SameFe {
    fn ptype(&self) -> ProbeType {
        ProbeType::SFES
    }

    fn candidates(&self, view: &DocView<'_>) -> Vec<Candidate> {
        view.triples
            .iter()
            .filter(|t| t.kind == TripleKind::FillerRelation && t.relation == SAME_FE)
            .map(|t| {
                let a = view.filler_node(&t.source);
                let b = view.filler_node(&t.target);
                let mut bind = view.bindings();
                bind.insert("filler", a.text.clone());
                bind.insert("fe", a.fe_name.clone());
                bind.insert("frame", view.frame_node(&a.owner).frame_name.clone());
                bind.insert("frame2", view.frame_node(&b.owner).frame_name.clone());
                Candidate {
                    bindings: bind,
                    gold: b.text.clone(),
                    pool: view
                        .graph
                        .filler_nodes
                        .iter()
                        .filter(|f| f.fe_name != a.fe_name)
                        .map(|f| f.text.clone())
                        .collect(),
                    triple: t.clone(),
                    secondary: None,
                }
            })
            .collect()
    }
}

impl ProbeStrategy for InternalFeReasoning {
    fn ptype(&self) -> ProbeType {
        ProbeType::IFESR
    }

    fn candidates(&self, view: &DocView<'_>) -> Vec<Candidate> {
        let roles: Vec<&Triple> = view.role_triples().collect();
        let mut out = Vec::new();
        for x in &roles {
            for y in &roles {
                let (fx, fy) = (view.filler_node(&x.target), view.filler_node(&y.target));
                if x.source != y.source || fx.fe_name == fy.fe_name {
                    continue;
                }
                let frame = view.frame_node(&x.source);
                let mut b = view.bindings();
                b.insert("frame", frame.frame_name.clone());
                b.insert("filler", fx.text.clone());
                out.push(Candidate {
                    bindings: b,
                    gold: fy.fe_name.clone(),
                    pool: view.fe_pool(
                        view.lex
                            .frames()
                            .map(|f| f.id.as_str())
                            .filter(|id| *id != frame.frame_id),
                        &frame.frame_id,
                    ),
                    triple: (*x).clone(),
                    secondary: Some((*y).clone()),
                });
            }
        }
        out
    }
}

impl ProbeStrategy for ExternalFeReasoning {
    fn ptype(&self) -> ProbeType {
        ProbeType::EFESR
    }

    fn candidates(&self, view: &DocView<'_>) -> Vec<Candidate> {
        view.triples
            .iter()
            .filter(|t| t.kind == TripleKind::FillerRelation && t.relation == CROSS_FRAME)
            .map(|t| {
                let a = view.filler_node(&t.source);
                let b = view.filler_node(&t.target);
                let mut bind = view.bindings();
                bind.insert("fe", a.fe_name.clone());
                bind.insert("frame", view.frame_node(&a.owner).frame_name.clone());
                bind.insert("fe2", b.fe_name.clone());
                bind.insert("frame2", view.frame_node(&b.owner).frame_name.clone());
                Candidate {
                    bindings: bind,
                    gold: b.text.clone(),
                    pool: view
                        .graph
                        .filler_nodes
                        .iter()
                        .filter(|f| f.owner != a.owner && f.owner != b.owner)
                        .map(|f| f.text.clone())
                        .collect(),
                    triple: t.clone(),
                    secondary: None,
                }
            })
            .collect()
    }
}

/// `aims_at` reads as "aims at"; `co_occurrence` as "co-occurs with".
pub fn humanize_relation(kind: &str) -> String {
    if kind == crate::graph::CO_OCCURRENCE {
        "co-occurs with".to_string()
    } else {
        kind.replace('_', " ")
    }
}

impl ProbeStrategy for FrameRelationProbe {
    fn ptype(&self) -> ProbeType {
        ProbeType::FFR
    }

    fn candidates(&self, view: &DocView<'_>) -> Vec<Candidate> {
        view.triples
            .iter()
            .filter(|t| t.kind == TripleKind::FrameRelation)
            .map(|t| {
                let mut b = view.bindings();
                b.insert("frame", t.subject.clone());
                b.insert("relation", humanize_relation(&t.relation));
                Candidate {
                    bindings: b,
                    gold: t.object.clone(),
                    pool: view
                        .lex
                        .frames()
                        .filter(|f| f.name != t.subject)
                        .map(|f| f.name.clone())
                        .collect(),
                    triple: t.clone(),
                    secondary: None,
                }
            })
            .collect()
    }
}

/// Samples `n` distinct distractors. The pool is deduplicated by normalized
/// text (first occurrence kept) and stripped of anything equal to `gold`
/// before sampling.
pub fn sample_distractors<R: Rng>(
    gold: &str,
    pool: &[String],
    n: usize,
    rng: &mut R,
) -> Result<Vec<String>, ProbeError> {
    let gold_norm = normalize_text(gold);
    let mut seen = HashSet::new();
    let mut clean: Vec<String> = pool
        .iter()
        .filter(|p| {
            let k = normalize_text(p);
            !k.is_empty() && k != gold_norm && seen.insert(k)
        })
        .cloned()
        .collect();
    if clean.len() < n {
        return Err(ProbeError::InsufficientPool {
            needed: n,
            available: clean.len(),
        });
    }
    let (chosen, _) = clean.partial_shuffle(rng, n);
    Ok(chosen.to_vec())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkipReason {
    InsufficientDistractors,
    Leakage,
    Duplicate,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkipEntry {
    pub ptype: ProbeType,
    pub reason: SkipReason,
    pub count: usize,
}

/// Counts of candidates dropped per (type, reason).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SkipReport(BTreeMap<(ProbeType, SkipReason), usize>);

impl SkipReport {
    pub fn add(&mut self, t: ProbeType, r: SkipReason) {
        *self.0.entry((t, r)).or_default() += 1;
    }

    pub fn merge(&mut self, other: &SkipReport) {
        for (k, v) in &other.0 {
            *self.0.entry(*k).or_default() += v;
        }
    }

    pub fn total(&self) -> usize {
        self.0.values().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn count(&self, t: ProbeType, r: SkipReason) -> usize {
        self.0.get(&(t, r)).copied().unwrap_or(0)
    }

    pub fn entries(&self) -> Vec<SkipEntry> {
        self.0
            .iter()
            .map(|(&(ptype, reason), &count)| SkipEntry { ptype, reason, count })
            .collect()
    }
}

#[derive(Debug, Clone, Default)]
pub struct ProbeBatch {
    pub probes: Vec<Probe>,
    pub skips: SkipReport,
}

/// Random stream for one (document, type): the seed XOR a digest of the
/// document id, with the type selecting the ChaCha stream.
fn substream(seed: u64, doc_id: &str, t: ProbeType) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ digest_u64(doc_id.as_bytes()));
    rng.set_stream(t.index() as u64);
    rng
}

/// Generates probes of the requested types from one document graph using
/// the built-in strategies.
pub fn generate_probes(
    g: &FrameGraph,
    lex: &FrameLexicon,
    types: &[ProbeType],
    cfg: &ProbeConfig,
) -> Result<ProbeBatch, ProbeError> {
    let strategies = crate::registry::probe_strategies();
    let mut chosen = Vec::new();
    for t in types {
        chosen.push(
            strategies
                .get(t.as_str())
                .map_err(|e| ProbeError::Config(e.to_string()))?,
        );
    }
    generate_with(g, lex, &chosen, cfg)
}

/// Generates probes with an explicit list of strategies.
pub fn generate_with(
    g: &FrameGraph,
    lex: &FrameLexicon,
    strategies: &[Arc<dyn ProbeStrategy>],
    cfg: &ProbeConfig,
) -> Result<ProbeBatch, ProbeError> {
    if cfg.k < 2 {
        return Err(ProbeError::Config("k must be at least 2".into()));
    }
    cfg.templates.validate()?;
    let mut batch = ProbeBatch::default();
    if g.frame_nodes.is_empty() {
        return Ok(batch);
    }
    let view = DocView::new(g, lex);
    let context = view.hidden_context();
    let mut done = BTreeSet::new();
    for strategy in strategies {
        let t = strategy.ptype();
        if !done.insert(t) {
            continue;
        }
        let template = cfg.templates.get(t)?;
        let mut rng = substream(cfg.seed, &g.doc_id, t);
        let mut seen = HashSet::new();
        for cand in strategy.candidates(&view) {
            let prompt = render_prompt(template, &cand.bindings)?;
            let gold_norm = normalize_text(&cand.gold);
            if gold_norm.is_empty() || normalize_text(&prompt).contains(&gold_norm) {
                batch.skips.add(t, SkipReason::Leakage);
                continue;
            }
            if !seen.insert((prompt.clone(), gold_norm)) {
                batch.skips.add(t, SkipReason::Duplicate);
                continue;
            }
            let mut choices = match sample_distractors(&cand.gold, &cand.pool, cfg.k - 1, &mut rng) {
                Ok(d) => d,
                Err(ProbeError::InsufficientPool { .. }) => {
                    batch.skips.add(t, SkipReason::InsufficientDistractors);
                    continue;
                }
                Err(e) => return Err(e),
            };
            let answer_index = rng.gen_range(0..cfg.k);
            choices.insert(answer_index, cand.gold.clone());
            batch.probes.push(Probe {
                id: probe_id(t, &g.doc_id, &prompt, &cand.gold, &choices),
                ptype: t,
                prompt,
                context: context.clone(),
                choices,
                answer_index,
                provenance: Provenance {
                    doc_id: g.doc_id.clone(),
                    split: g.split.clone(),
                    triple: cand.triple,
                    secondary: cand.secondary,
                },
                seed: cfg.seed,
            });
        }
    }
    Ok(batch)
}

/// Runs [`generate_probes`] over several documents and concatenates the
/// results in input order.
pub fn generate_for_graphs(
    graphs: &[FrameGraph],
    lex: &FrameLexicon,
    types: &[ProbeType],
    cfg: &ProbeConfig,
) -> Result<ProbeBatch, ProbeError> {
    let mut out = ProbeBatch::default();
    for g in graphs {
        let b = generate_probes(g, lex, types, cfg)?;
        out.probes.extend(b.probes);
        out.skips.merge(&b.skips);
    }
    Ok(out)
}

/// Converts probes from the `train` split into surface-QA records for data
/// augmentation. Probes without a split tag are an error.
pub fn export_augmentation(probes: &[Probe]) -> Result<Vec<McqaItem>, ProbeError> {
    let mut out = Vec::new();
    for p in probes {
        match p.provenance.split.as_deref() {
            None => return Err(ProbeError::MissingSplit(p.id.clone())),
            Some("train") => out.push(p.to_item()),
            Some(_) => {}
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::build_graph;
    use crate::synthetic;

    fn fig7_graph() -> (FrameLexicon, FrameGraph) {
        let lex = synthetic::travel_dialogue_lexicon();
        let g = build_graph(&synthetic::travel_dialogue_annotations(), &lex).unwrap();
        (lex, g)
    }

    #[test]
    fn type_names_round_trip() {
        for t in ProbeType::ALL {
            assert_eq!(t.as_str().parse::<ProbeType>().unwrap(), t);
            assert_eq!(serde_json::to_string(&t).unwrap(), format!("\"{t}\""));
        }
        assert_eq!(
            parse_type_list("FFR,IFES,FFR").unwrap(),
            vec![ProbeType::IFES, ProbeType::FFR]
        );
        assert!(parse_type_list("IFES,XYZ").is_err());
    }

    #[test]
    fn render_cases() {
        let slots = BTreeMap::from([("frame", "Travel".to_string()), ("filler", "you".to_string())]);
        assert_eq!(
            render_prompt("In {frame} scenario, {filler} is a [mask].", &slots).unwrap(),
            "In Travel scenario, you is a [mask]."
        );
        assert_eq!(
            render_prompt("no slots {} here {", &slots).unwrap(),
            "no slots {} here {"
        );
        match render_prompt("{frame} and {fe2}", &slots) {
            Err(ProbeError::Render(s)) => assert_eq!(s, "fe2"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn template_validation() {
        assert!(TemplateSet::default().validate().is_ok());
        assert!(TemplateSet::from_json(r#"{"IFES": "{frame} {bogus}"}"#).is_err());
        assert!(TemplateSet::from_json(r#"{"IFESR": "{frame} {fe2}"}"#).is_err());
        let err = TemplateSet::from_json(r#"{"IFES": "In {frame} scenario, {filler} is a role."}"#).unwrap_err();
        assert!(err.to_string().contains("exactly once"));
        assert!(TemplateSet::from_json(r#"{"FFR": "[mask] {relation} [mask]"}"#).is_err());
        let set = TemplateSet::from_json(r#"{"FFR": "{frame} -> {relation} -> [mask]"}"#).unwrap();
        assert_eq!(set.get(ProbeType::FFR).unwrap(), "{frame} -> {relation} -> [mask]");
    }

    #[test]
    fn distractor_sampling_covers_subsets_deterministically() {
        let pool: Vec<String> = ["Reader", "Hearer", "Buyer"].iter().map(|s| s.to_string()).collect();
        let subsets = [["Reader", "Hearer"], ["Reader", "Buyer"], ["Hearer", "Buyer"]];
        let mut hit = HashSet::new();
        for seed in 0..50u64 {
            let mut a = ChaCha8Rng::seed_from_u64(seed);
            let mut b = ChaCha8Rng::seed_from_u64(seed);
            let x = sample_distractors("Traveler", &pool, 2, &mut a).unwrap();
            assert_eq!(x, sample_distractors("Traveler", &pool, 2, &mut b).unwrap());
            let mut s = x.clone();
            s.sort();
            let idx = subsets
                .iter()
                .position(|sub| {
                    let mut v: Vec<String> = sub.iter().map(|s| s.to_string()).collect();
                    v.sort();
                    v == s
                })
                .expect("sample is one of the 2-subsets");
            hit.insert(idx);
        }
        assert_eq!(hit.len(), 3);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(sample_distractors("x", &pool, 0, &mut rng).unwrap().is_empty());
        let dup: Vec<String> = ["traveler", " TRAVELER ", "Reader"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        assert_eq!(
            sample_distractors("Traveler", &dup, 1, &mut rng).unwrap(),
            vec!["Reader"]
        );
        assert!(matches!(
            sample_distractors("Traveler", &dup, 2, &mut rng),
            Err(ProbeError::InsufficientPool {
                needed: 2,
                available: 1
            })
        ));
    }

    #[test]
    fn ifes_prompt_renders_travel_example() {
        let (lex, g) = fig7_graph();
        let cfg = ProbeConfig {
            seed: 7,
            ..Default::default()
        };
        let batch = generate_probes(&g, &lex, &[ProbeType::IFES], &cfg).unwrap();
        let p = batch
            .probes
            .iter()
            .find(|p| p.prompt == "In Travel scenario, you is a [mask].")
            .expect("probe present");
        assert_eq!(p.gold(), "Traveler");
        assert_eq!(p.choices.len(), 3);
        p.check().unwrap();
    }

    #[test]
    fn ffr_probe_for_aims_at() {
        let (lex, g) = fig7_graph();
        let batch = generate_probes(&g, &lex, &[ProbeType::FFR], &ProbeConfig::default()).unwrap();
        let p = batch
            .probes
            .iter()
            .find(|p| p.prompt == "Motion aims at [mask].")
            .unwrap();
        assert_eq!(p.gold(), "Travel");
    }

    #[test]
    fn all_types_are_sound_on_fixture() {
        let (lex, g) = fig7_graph();
        let batch = generate_probes(&g, &lex, &ProbeType::ALL, &ProbeConfig::default()).unwrap();
        for t in [
            ProbeType::IFES,
            ProbeType::EFES,
            ProbeType::IFESR,
            ProbeType::FFR,
            ProbeType::EFESR,
        ] {
            assert!(batch.probes.iter().any(|p| p.ptype == t), "no {t} probe");
        }
        for p in &batch.probes {
            p.check().unwrap();
            assert_eq!(
                p.id,
                probe_id(p.ptype, &p.provenance.doc_id, &p.prompt, p.gold(), &p.choices)
            );
            assert!(!p.context.is_empty());
        }
    }

    #[test]
    fn empty_graph_gives_nothing() {
        let lex = synthetic::travel_dialogue_lexicon();
        let batch = generate_probes(&FrameGraph::default(), &lex, &ProbeType::ALL, &ProbeConfig::default()).unwrap();
        assert!(batch.probes.is_empty());
        assert!(batch.skips.is_empty());
    }

    #[test]
    fn k_below_two_rejected() {
        let (lex, g) = fig7_graph();
        let cfg = ProbeConfig {
            k: 1,
            ..Default::default()
        };
        assert!(matches!(
            generate_probes(&g, &lex, &ProbeType::ALL, &cfg),
            Err(ProbeError::Config(_))
        ));
    }

    #[test]
    fn large_k_skips_instead_of_failing() {
        let (lex, g) = fig7_graph();
        let cfg = ProbeConfig {
            k: 40,
            ..Default::default()
        };
        let batch = generate_probes(&g, &lex, &ProbeType::ALL, &cfg).unwrap();
        assert!(batch.probes.is_empty());
        assert!(batch.skips.count(ProbeType::IFES, SkipReason::InsufficientDistractors) > 0);
    }

    #[test]
    fn augmentation_export_filters_split() {
        let (lex, g) = fig7_graph();
        let batch = generate_probes(&g, &lex, &[ProbeType::IFES], &ProbeConfig::default()).unwrap();
        let items = export_augmentation(&batch.probes).unwrap();
        assert_eq!(items.len(), batch.probes.len());
        assert_eq!(items[0].choices[items[0].answer_index], batch.probes[0].gold());

        let mut dev = batch.probes.clone();
        for p in &mut dev {
            p.provenance.split = Some("dev".into());
        }
        assert!(export_augmentation(&dev).unwrap().is_empty());
        dev[0].provenance.split = None;
        assert!(matches!(export_augmentation(&dev), Err(ProbeError::MissingSplit(_))));
    }
}
