//! Frame-based knowledge graph built from the annotations of one document.
//!
//! Nodes are frame instances (one per target) and frame-element fillers.
//! Edges come in three kinds:
//!
//! * `FE` from a frame instance to each of its fillers, labeled with the FE
//!   name;
//! * `FF` between frame instances whose frames have a lexicon relation
//!   (labeled with the relation kind) and between instances of the same
//!   sentence (labeled `co_occurrence`);
//! * `EE` between fillers: `cross_frame` when they belong to different frame
//!   instances and their spans overlap or their texts are equal, `same_fe`
//!   when their FE names are equal.
//!
//! Nodes and edges are kept in a canonical order (sentence index, then span)
//! so serialization is stable under any permutation of the input.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::annotation::AnnotatedSentence;
use crate::lexicon::FrameLexicon;
use crate::normalize::normalize_text;
use crate::{FORMAT_VERSION, TOOL_VERSION};

pub const CO_OCCURRENCE: &str = "co_occurrence";
pub const SAME_FE: &str = "same_fe";
pub const CROSS_FRAME: &str = "cross_frame";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameNode {
    pub instance_id: String,
    pub frame_id: String,
    pub frame_name: String,
    pub sentence_index: usize,
    pub token_start: usize,
    pub token_end: usize,
    pub target_text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FillerNode {
    pub instance_id: String,
    pub text: String,
    pub fe_id: String,
    pub fe_name: String,
    pub owner: String,
    pub sentence_index: usize,
    pub token_start: usize,
    pub token_end: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EdgeKind {
    FE,
    FF,
    EE,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub kind: EdgeKind,
    pub source: String,
    pub target: String,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextSentence {
    pub index: usize,
    pub text: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameGraph {
    pub doc_id: String,
    #[serde(default)]
    pub split: Option<String>,
    pub sentences: Vec<ContextSentence>,
    pub frame_nodes: Vec<FrameNode>,
    pub filler_nodes: Vec<FillerNode>,
    pub edges: Vec<Edge>,
}

#[derive(Debug, thiserror::Error)]
pub enum GraphError {
    #[error("record {record}: {message}")]
    Record { record: String, message: String },
    #[error("annotations span several documents ({0} and {1}); build one graph per document")]
    MixedDocuments(String, String),
    #[error("bad graph file: {0}")]
    File(String),
}

fn record_err(sent: &AnnotatedSentence, message: impl Into<String>) -> GraphError {
    GraphError::Record {
        record: sent.record_name(),
        message: message.into(),
    }
}

fn spans_overlap(a: (usize, usize), b: (usize, usize)) -> bool {
    a.0 < b.1 && b.0 < a.1
}

/// Builds the graph of a single document.
pub fn build_graph(annotations: &[AnnotatedSentence], lex: &FrameLexicon) -> Result<FrameGraph, GraphError> {
    let Some(first) = annotations.first() else {
        return Ok(FrameGraph::default());
    };
    if let Some(other) = annotations.iter().find(|a| a.doc_id != first.doc_id) {
        return Err(GraphError::MixedDocuments(first.doc_id.clone(), other.doc_id.clone()));
    }
    let mut sents: Vec<&AnnotatedSentence> = annotations.iter().collect();
    sents.sort_by_key(|s| s.sentence_index);
    for w in sents.windows(2) {
        if w[0].sentence_index == w[1].sentence_index {
            return Err(record_err(w[1], "duplicate sentence index in document"));
        }
    }

    let mut split: Option<String> = None;
    for s in &sents {
        s.check(lex).map_err(|m| record_err(s, m))?;
        if let Some(sp) = &s.split {
            match &split {
                Some(existing) if existing != sp => {
                    return Err(record_err(s, format!("split '{sp}' conflicts with '{existing}'")))
                }
                _ => split = Some(sp.clone()),
            }
        }
    }

    let mut g = FrameGraph {
        doc_id: first.doc_id.clone(),
        split,
        ..FrameGraph::default()
    };

    for s in &sents {
        g.sentences.push(ContextSentence {
            index: s.sentence_index,
            text: s.text.clone(),
        });
        let mut targets: Vec<_> = s.targets.iter().collect();
        targets.sort_by_key(|t| (t.start, t.end));
        for w in targets.windows(2) {
            if (w[0].start, w[0].end) == (w[1].start, w[1].end) {
                return Err(record_err(
                    s,
                    format!("two targets share span [{}, {})", w[1].start, w[1].end),
                ));
            }
        }
        for t in targets {
            let frame = lex.frame(&t.frame_id).expect("checked");
            let fid = format!("F{}:{}-{}", s.sentence_index, t.start, t.end);
            g.frame_nodes.push(FrameNode {
                instance_id: fid.clone(),
                frame_id: frame.id.clone(),
                frame_name: frame.name.clone(),
                sentence_index: s.sentence_index,
                token_start: t.start,
                token_end: t.end,
                target_text: s.span_text(t.start, t.end),
            });
            let mut fillers: Vec<_> = t.fes.iter().collect();
            fillers.sort_by(|a, b| (a.start, a.end, &a.fe_id).cmp(&(b.start, b.end, &b.fe_id)));
            fillers.dedup();
            for f in fillers {
                let fe = lex.frame_element(&f.fe_id).expect("checked");
                g.filler_nodes.push(FillerNode {
                    instance_id: format!(
                        "E{}:{}-{}/{}-{}:{}",
                        s.sentence_index, t.start, t.end, f.start, f.end, f.fe_id
                    ),
                    text: s.span_text(f.start, f.end),
                    fe_id: fe.id.clone(),
                    fe_name: fe.name.clone(),
                    owner: fid.clone(),
                    sentence_index: s.sentence_index,
                    token_start: f.start,
                    token_end: f.end,
                });
            }
        }
    }

    let mut edges = Vec::new();
    for f in &g.filler_nodes {
        edges.push(Edge {
            kind: EdgeKind::FE,
            source: f.owner.clone(),
            target: f.instance_id.clone(),
            label: f.fe_name.clone(),
        });
    }
    for (i, a) in g.frame_nodes.iter().enumerate() {
        for (j, b) in g.frame_nodes.iter().enumerate() {
            if i == j {
                continue;
            }
            let mut kinds: Vec<&str> = lex
                .relations_between(&a.frame_id, &b.frame_id)
                .map(|r| r.kind.as_str())
                .collect();
            kinds.sort_unstable();
            kinds.dedup();
            for kind in kinds {
                edges.push(Edge {
                    kind: EdgeKind::FF,
                    source: a.instance_id.clone(),
                    target: b.instance_id.clone(),
                    label: kind.to_string(),
                });
            }
            if i < j && a.sentence_index == b.sentence_index {
                edges.push(Edge {
                    kind: EdgeKind::FF,
                    source: a.instance_id.clone(),
                    target: b.instance_id.clone(),
                    label: CO_OCCURRENCE.to_string(),
                });
            }
        }
    }
    let texts: Vec<String> = g.filler_nodes.iter().map(|f| normalize_text(&f.text)).collect();
    for (i, a) in g.filler_nodes.iter().enumerate() {
        for (j, b) in g.filler_nodes.iter().enumerate().skip(i + 1) {
            if a.owner != b.owner {
                let overlap = a.sentence_index == b.sentence_index
                    && spans_overlap((a.token_start, a.token_end), (b.token_start, b.token_end));
                if overlap || texts[i] == texts[j] {
                    edges.push(Edge {
                        kind: EdgeKind::EE,
                        source: a.instance_id.clone(),
                        target: b.instance_id.clone(),
                        label: CROSS_FRAME.to_string(),
                    });
                }
            }
            if a.fe_name == b.fe_name {
                edges.push(Edge {
                    kind: EdgeKind::EE,
                    source: a.instance_id.clone(),
                    target: b.instance_id.clone(),
                    label: SAME_FE.to_string(),
                });
            }
        }
    }

    let order = g.node_order();
    edges.sort_by(|x, y| {
        (&order[&x.source], x.kind, &order[&x.target], &x.label).cmp(&(
            &order[&y.source],
            y.kind,
            &order[&y.target],
            &y.label,
        ))
    });
    g.edges = edges;
    Ok(g)
}

/// Groups annotations by document and builds one graph per document, in
/// document id order.
pub fn build_graphs(annotations: &[AnnotatedSentence], lex: &FrameLexicon) -> Result<Vec<FrameGraph>, GraphError> {
    let mut docs: BTreeMap<&str, Vec<AnnotatedSentence>> = BTreeMap::new();
    for a in annotations {
        docs.entry(&a.doc_id).or_default().push(a.clone());
    }
    docs.values().map(|d| build_graph(d, lex)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct GraphStats {
    pub frame_nodes: usize,
    pub filler_nodes: usize,
    pub fe_edges: usize,
    pub ff_edges: usize,
    pub ee_edges: usize,
}

pub fn graph_stats(g: &FrameGraph) -> GraphStats {
    let count = |k| g.edges.iter().filter(|e| e.kind == k).count();
    GraphStats {
        frame_nodes: g.frame_nodes.len(),
        filler_nodes: g.filler_nodes.len(),
        fe_edges: count(EdgeKind::FE),
        ff_edges: count(EdgeKind::FF),
        ee_edges: count(EdgeKind::EE),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TripleKind {
    Role,
    FrameRelation,
    FillerRelation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Triple {
    pub subject: String,
    pub relation: String,
    pub object: String,
    pub kind: TripleKind,
    /// Node ids of the edge the triple came from.
    pub source: String,
    pub target: String,
}

/// One triple per edge, in the graph's canonical edge order.
pub fn extract_triples(g: &FrameGraph) -> Vec<Triple> {
    let frames: BTreeMap<&str, &FrameNode> = g.frame_nodes.iter().map(|n| (n.instance_id.as_str(), n)).collect();
    let fillers: BTreeMap<&str, &FillerNode> = g.filler_nodes.iter().map(|n| (n.instance_id.as_str(), n)).collect();
    g.edges
        .iter()
        .map(|e| {
            let (subject, relation, object, kind) = match e.kind {
                EdgeKind::FE => {
                    let f = frames[e.source.as_str()];
                    let filler = fillers[e.target.as_str()];
                    (
                        filler.text.clone(),
                        f.frame_name.clone(),
                        filler.fe_name.clone(),
                        TripleKind::Role,
                    )
                }
                EdgeKind::FF => (
                    frames[e.source.as_str()].frame_name.clone(),
                    e.label.clone(),
                    frames[e.target.as_str()].frame_name.clone(),
                    TripleKind::FrameRelation,
                ),
                EdgeKind::EE => (
                    fillers[e.source.as_str()].text.clone(),
                    e.label.clone(),
                    fillers[e.target.as_str()].text.clone(),
                    TripleKind::FillerRelation,
                ),
            };
            Triple {
                subject,
                relation,
                object,
                kind,
                source: e.source.clone(),
                target: e.target.clone(),
            }
        })
        .collect()
}

/// Sort key of a node: sentence, span start, span end, frames before
/// fillers, filler span, FE id.
type NodeKey = (usize, usize, usize, u8, usize, usize, String);

impl FrameGraph {
    /// Canonical position of every node: frame nodes and fillers sorted by
    /// (sentence, span), frame nodes before their own fillers.
    fn node_order(&self) -> BTreeMap<String, NodeKey> {
        let mut out = BTreeMap::new();
        let spans: BTreeMap<&str, (usize, usize)> = self
            .frame_nodes
            .iter()
            .map(|n| (n.instance_id.as_str(), (n.token_start, n.token_end)))
            .collect();
        for n in &self.frame_nodes {
            out.insert(
                n.instance_id.clone(),
                (n.sentence_index, n.token_start, n.token_end, 0, 0, 0, String::new()),
            );
        }
        for f in &self.filler_nodes {
            let (os, oe) = spans[f.owner.as_str()];
            out.insert(
                f.instance_id.clone(),
                (f.sentence_index, os, oe, 1, f.token_start, f.token_end, f.fe_id.clone()),
            );
        }
        out
    }

    pub fn frame_node(&self, id: &str) -> Option<&FrameNode> {
        self.frame_nodes.iter().find(|n| n.instance_id == id)
    }

    pub fn filler_node(&self, id: &str) -> Option<&FillerNode> {
        self.filler_nodes.iter().find(|n| n.instance_id == id)
    }

    pub fn sentence_text(&self, index: usize) -> Option<&str> {
        self.sentences
            .iter()
            .find(|s| s.index == index)
            .map(|s| s.text.as_str())
    }

    /// Graphviz rendering, for inspection only.
    pub fn to_dot(&self) -> String {
        let mut s = String::from("digraph frame_graph {\n");
        for n in &self.frame_nodes {
            let _ = writeln!(
                s,
                "  \"{}\" [shape=box,label=\"{}\"];",
                n.instance_id,
                escape(&n.frame_name)
            );
        }
        for n in &self.filler_nodes {
            let _ = writeln!(
                s,
                "  \"{}\" [shape=ellipse,label=\"{}\"];",
                n.instance_id,
                escape(&n.text)
            );
        }
        for e in &self.edges {
            let style = match e.kind {
                EdgeKind::FE => "solid",
                EdgeKind::FF => "bold",
                EdgeKind::EE => "dashed",
            };
            let _ = writeln!(
                s,
                "  \"{}\" -> \"{}\" [label=\"{}\",style={}];",
                e.source,
                e.target,
                escape(&e.label),
                style
            );
        }
        s.push_str("}\n");
        s
    }
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

/// Checks the structural invariants of a graph. Returns one message per
/// violation.
pub fn check_invariants(g: &FrameGraph) -> Vec<String> {
    let mut out = Vec::new();
    let frame_ids: HashSet<&str> = g.frame_nodes.iter().map(|n| n.instance_id.as_str()).collect();
    let filler_ids: HashSet<&str> = g.filler_nodes.iter().map(|n| n.instance_id.as_str()).collect();
    if frame_ids.len() != g.frame_nodes.len() || filler_ids.len() != g.filler_nodes.len() {
        out.push("duplicate node instance id".to_string());
    }
    if frame_ids.iter().any(|id| filler_ids.contains(id)) {
        out.push("frame and filler share an instance id".to_string());
    }
    let mut fe_edge_count: BTreeMap<&str, usize> = BTreeMap::new();
    let mut undirected = HashSet::new();
    for e in &g.edges {
        let (s_frame, t_frame) = (
            frame_ids.contains(e.source.as_str()),
            frame_ids.contains(e.target.as_str()),
        );
        let (s_fill, t_fill) = (
            filler_ids.contains(e.source.as_str()),
            filler_ids.contains(e.target.as_str()),
        );
        if !(s_frame || s_fill) || !(t_frame || t_fill) {
            out.push(format!("edge {} -> {} has a dangling endpoint", e.source, e.target));
            continue;
        }
        match e.kind {
            EdgeKind::FF if !(s_frame && t_frame) => {
                out.push(format!("FF edge {} -> {} not between frames", e.source, e.target))
            }
            EdgeKind::FE if !(s_frame && t_fill) => {
                out.push(format!("FE edge {} -> {} not frame->filler", e.source, e.target))
            }
            EdgeKind::EE if !(s_fill && t_fill) => {
                out.push(format!("EE edge {} -> {} not between fillers", e.source, e.target))
            }
            _ => {}
        }
        if e.kind == EdgeKind::FE {
            *fe_edge_count.entry(e.target.as_str()).or_default() += 1;
            if let Some(f) = g.filler_node(&e.target) {
                if f.owner != e.source {
                    out.push(format!("FE edge into {} does not come from its owner", e.target));
                }
            }
        }
        if e.kind == EdgeKind::EE {
            let (a, b) = (g.filler_node(&e.source), g.filler_node(&e.target));
            if let (Some(a), Some(b)) = (a, b) {
                if e.label == SAME_FE && a.fe_name != b.fe_name {
                    out.push(format!(
                        "same_fe edge {} -> {} joins different FE names",
                        e.source, e.target
                    ));
                }
                if e.label == CROSS_FRAME && a.owner == b.owner {
                    out.push(format!(
                        "cross_frame edge {} -> {} within one frame",
                        e.source, e.target
                    ));
                }
            }
            let key = if e.source <= e.target {
                (e.source.clone(), e.target.clone(), e.label.clone())
            } else {
                (e.target.clone(), e.source.clone(), e.label.clone())
            };
            if !undirected.insert(key) {
                out.push(format!(
                    "EE edge {} -- {} ({}) stored twice",
                    e.source, e.target, e.label
                ));
            }
        }
    }
    for f in &g.filler_nodes {
        if fe_edge_count.get(f.instance_id.as_str()).copied().unwrap_or(0) != 1 {
            out.push(format!("filler {} does not have exactly one FE edge", f.instance_id));
        }
    }
    out
}

/// On-disk graph artifact: a list of per-document graphs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphFile {
    pub format_version: u32,
    pub tool_version: String,
    pub seed: Option<u64>,
    pub config_digest: String,
    pub graphs: Vec<FrameGraph>,
}

impl GraphFile {
    pub fn new(graphs: Vec<FrameGraph>, config_digest: impl Into<String>) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            tool_version: TOOL_VERSION.to_string(),
            seed: None,
            config_digest: config_digest.into(),
            graphs,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("graph serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, GraphError> {
        let f: GraphFile = serde_json::from_str(text).map_err(|e| GraphError::File(e.to_string()))?;
        if f.format_version != FORMAT_VERSION {
            return Err(GraphError::File(format!(
                "unsupported format_version {}",
                f.format_version
            )));
        }
        for g in &f.graphs {
            let problems = check_invariants(g);
            if !problems.is_empty() {
                return Err(GraphError::File(format!(
                    "document {}: {}",
                    g.doc_id,
                    problems.join("; ")
                )));
            }
        }
        Ok(f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic;

    #[test]
    fn empty_annotations_give_empty_graph() {
        let lex = synthetic::travel_dialogue_lexicon();
        let g = build_graph(&[], &lex).unwrap();
        assert_eq!(graph_stats(&g), GraphStats::default());
        assert!(extract_triples(&g).is_empty());
    }

    #[test]
    fn travel_dialogue_has_aims_at_edge() {
        let lex = synthetic::travel_dialogue_lexicon();
        let g = build_graph(&synthetic::travel_dialogue_annotations(), &lex).unwrap();
        assert_eq!(g.frame_nodes.len(), 4);
        let motion = g.frame_nodes.iter().find(|n| n.frame_name == "Motion").unwrap();
        let travel = g.frame_nodes.iter().find(|n| n.frame_name == "Travel").unwrap();
        assert!(g.edges.iter().any(|e| e.kind == EdgeKind::FF
            && e.source == motion.instance_id
            && e.target == travel.instance_id
            && e.label == "aims_at"));
        let triples = extract_triples(&g);
        assert!(triples
            .iter()
            .any(|t| t.subject == "Motion" && t.relation == "aims_at" && t.object == "Travel"));
        assert!(triples.iter().any(|t| t.subject == "you"
            && t.relation == "Travel"
            && t.object == "Traveler"
            && t.kind == TripleKind::Role));
        assert!(check_invariants(&g).is_empty());
    }

    #[test]
    fn single_frame_two_fillers() {
        let lex = synthetic::travel_dialogue_lexicon();
        let mut sents = synthetic::travel_dialogue_annotations();
        sents.truncate(1);
        sents[0].targets.retain(|t| t.frame_id == "F_Travel");
        sents[0].targets[0].fes.truncate(2);
        let g = build_graph(&sents, &lex).unwrap();
        let st = graph_stats(&g);
        assert_eq!(
            (st.frame_nodes, st.filler_nodes, st.fe_edges, st.ff_edges),
            (1, 2, 2, 0)
        );
    }

    #[test]
    fn nested_targets_stats() {
        let lex = synthetic::nested_targets_lexicon();
        let g = build_graph(&synthetic::nested_targets_annotations(), &lex).unwrap();
        let st = graph_stats(&g);
        assert_eq!((st.frame_nodes, st.filler_nodes, st.fe_edges), (2, 3, 3));
        assert_eq!(
            st.frame_nodes + st.filler_nodes,
            g.frame_nodes.len() + g.filler_nodes.len()
        );
        assert_eq!(st.fe_edges + st.ff_edges + st.ee_edges, g.edges.len());
    }

    #[test]
    fn unknown_frame_names_record() {
        let lex = synthetic::travel_dialogue_lexicon();
        let mut sents = synthetic::travel_dialogue_annotations();
        sents[0].targets[0].frame_id = "F_Nope".into();
        match build_graph(&sents, &lex) {
            Err(GraphError::Record { record, .. }) => assert_eq!(record, "dlg-0001#0"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn graph_file_round_trips() {
        let lex = synthetic::travel_dialogue_lexicon();
        let g = build_graph(&synthetic::travel_dialogue_annotations(), &lex).unwrap();
        let file = GraphFile::new(vec![g], "x");
        let back = GraphFile::from_json(&file.to_json()).unwrap();
        assert_eq!(back, file);
        assert!(file.graphs[0].to_dot().starts_with("digraph"));
    }
}
