//! FrameNet-style lexicon: frames, frame elements, lexical units and
//! frame-to-frame relations.
//!
//! The on-disk form is a JSON document with `format_version: 1` and three
//! top-level arrays (`frames`, `frame_elements`, `lexical_units`). Loading is
//! two-step: the document is decoded, then indexed into a [`FrameLexicon`] and
//! validated. Validation collects every violation instead of stopping at the
//! first one.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::normalize::normalize_lemma;
use crate::FORMAT_VERSION;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameRelation {
    pub kind: String,
    pub target: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Frame {
    pub id: String,
    pub name: String,
    #[serde(default)]
    pub definition: String,
    #[serde(default)]
    pub fe_ids: Vec<String>,
    #[serde(default)]
    pub relations: Vec<FrameRelation>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameElement {
    pub id: String,
    pub name: String,
    pub frame_id: String,
    #[serde(default)]
    pub definition: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LexicalUnit {
    pub id: String,
    pub lemma: String,
    pub pos: String,
    pub frame_id: String,
}

/// Serialized form of a lexicon.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LexiconDocument {
    pub format_version: u32,
    #[serde(default)]
    pub frames: Vec<Frame>,
    #[serde(default)]
    pub frame_elements: Vec<FrameElement>,
    #[serde(default)]
    pub lexical_units: Vec<LexicalUnit>,
}

/// A broken lexicon invariant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub rule: &'static str,
    pub id: String,
    pub message: String,
}

impl Violation {
    fn new(rule: &'static str, id: &str, message: String) -> Self {
        Self {
            rule,
            id: id.to_string(),
            message,
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}\t{}\t{}", self.rule, self.id, self.message)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum LexiconError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unsupported lexicon format_version {0} (expected {FORMAT_VERSION})")]
    Version(u32),
    #[error("lexicon has {} violation(s): {}", .0.len(), summarize(.0))]
    Invalid(Vec<Violation>),
}

fn summarize(v: &[Violation]) -> String {
    v.iter()
        .map(|v| format!("[{}] {}", v.rule, v.message))
        .collect::<Vec<_>>()
        .join("; ")
}

/// Indexed, read-only lexicon. Maps are keyed by id so iteration is in id
/// order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FrameLexicon {
    frames: BTreeMap<String, Frame>,
    fes: BTreeMap<String, FrameElement>,
    lus: BTreeMap<String, LexicalUnit>,
    lemma_index: BTreeMap<String, Vec<String>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct LexiconStats {
    pub frames: usize,
    pub frame_elements: usize,
    pub lexical_units: usize,
    pub relations: usize,
}

impl FrameLexicon {
    /// Indexes a decoded document without validating it. Returns the
    /// lexicon together with violations that only exist at document level
    /// (duplicate ids, which the indexed form cannot represent).
    pub fn from_document(doc: LexiconDocument) -> (Self, Vec<Violation>) {
        let mut violations = Vec::new();
        let mut lex = FrameLexicon::default();
        for f in doc.frames {
            if lex.frames.contains_key(&f.id) {
                violations.push(Violation::new(
                    "duplicate-frame-id",
                    &f.id,
                    format!("frame id '{}' defined more than once", f.id),
                ));
                continue;
            }
            lex.frames.insert(f.id.clone(), f);
        }
        for fe in doc.frame_elements {
            if lex.fes.contains_key(&fe.id) {
                violations.push(Violation::new(
                    "duplicate-fe-id",
                    &fe.id,
                    format!("frame element id '{}' defined more than once", fe.id),
                ));
                continue;
            }
            lex.fes.insert(fe.id.clone(), fe);
        }
        for lu in doc.lexical_units {
            if lex.lus.contains_key(&lu.id) {
                violations.push(Violation::new(
                    "duplicate-lu-id",
                    &lu.id,
                    format!("lexical unit id '{}' defined more than once", lu.id),
                ));
                continue;
            }
            lex.lus.insert(lu.id.clone(), lu);
        }
        lex.rebuild_lemma_index();
        (lex, violations)
    }

    /// Builds a lexicon from parts, failing on any violation.
    pub fn from_parts(frames: Vec<Frame>, fes: Vec<FrameElement>, lus: Vec<LexicalUnit>) -> Result<Self, LexiconError> {
        build_strict(LexiconDocument {
            format_version: FORMAT_VERSION,
            frames,
            frame_elements: fes,
            lexical_units: lus,
        })
    }

    fn rebuild_lemma_index(&mut self) {
        self.lemma_index.clear();
        // lus iterate in id order, so each posting list is sorted by LU id.
        for lu in self.lus.values() {
            self.lemma_index
                .entry(normalize_lemma(&lu.lemma))
                .or_default()
                .push(lu.id.clone());
        }
    }

    pub fn to_document(&self) -> LexiconDocument {
        LexiconDocument {
            format_version: FORMAT_VERSION,
            frames: self.frames.values().cloned().collect(),
            frame_elements: self.fes.values().cloned().collect(),
            lexical_units: self.lus.values().cloned().collect(),
        }
    }

    pub fn frame(&self, id: &str) -> Option<&Frame> {
        self.frames.get(id)
    }

    pub fn frame_element(&self, id: &str) -> Option<&FrameElement> {
        self.fes.get(id)
    }

    pub fn lexical_unit(&self, id: &str) -> Option<&LexicalUnit> {
        self.lus.get(id)
    }

    pub fn frames(&self) -> impl Iterator<Item = &Frame> {
        self.frames.values()
    }

    pub fn frame_elements(&self) -> impl Iterator<Item = &FrameElement> {
        self.fes.values()
    }

    pub fn lexical_units(&self) -> impl Iterator<Item = &LexicalUnit> {
        self.lus.values()
    }

    pub fn frame_by_name(&self, name: &str) -> Option<&Frame> {
        self.frames.values().find(|f| f.name == name)
    }

    /// Frame elements owned by a frame, in the frame's declared order.
    pub fn frame_fes(&self, frame_id: &str) -> Vec<&FrameElement> {
        self.frames
            .get(frame_id)
            .map(|f| f.fe_ids.iter().filter_map(|id| self.fes.get(id)).collect())
            .unwrap_or_default()
    }

    /// Relations declared from `from` to `to`.
    pub fn relations_between<'a>(&'a self, from: &str, to: &'a str) -> impl Iterator<Item = &'a FrameRelation> + 'a {
        self.frames
            .get(from)
            .into_iter()
            .flat_map(|f| f.relations.iter())
            .filter(move |r| r.target == to)
    }

    pub fn has_lemma(&self, normalized: &str) -> bool {
        self.lemma_index.contains_key(normalized)
    }

    pub fn stats(&self) -> LexiconStats {
        LexiconStats {
            frames: self.frames.len(),
            frame_elements: self.fes.len(),
            lexical_units: self.lus.len(),
            relations: self.frames.values().map(|f| f.relations.len()).sum(),
        }
    }
}

/// Decodes the JSON lexicon format. Syntax errors carry line and column.
pub fn parse_document(input: &[u8]) -> Result<LexiconDocument, LexiconError> {
    let doc: LexiconDocument = serde_json::from_slice(input).map_err(|e| LexiconError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    if doc.format_version != FORMAT_VERSION {
        return Err(LexiconError::Version(doc.format_version));
    }
    Ok(doc)
}

/// Parses and validates a lexicon file. Any violation fails the parse and
/// every violation is reported.
pub fn parse_lexicon(input: &[u8]) -> Result<FrameLexicon, LexiconError> {
    build_strict(parse_document(input)?)
}

/// Parses a lexicon and returns it with all violations, without failing on
/// them.
pub fn parse_lexicon_lenient(input: &[u8]) -> Result<(FrameLexicon, Vec<Violation>), LexiconError> {
    let (lex, mut violations) = FrameLexicon::from_document(parse_document(input)?);
    violations.extend(validate_lexicon(&lex));
    Ok((lex, violations))
}

fn build_strict(doc: LexiconDocument) -> Result<FrameLexicon, LexiconError> {
    let (lex, mut violations) = FrameLexicon::from_document(doc);
    violations.extend(validate_lexicon(&lex));
    if violations.is_empty() {
        Ok(lex)
    } else {
        Err(LexiconError::Invalid(violations))
    }
}

pub fn serialize_lexicon(lex: &FrameLexicon) -> String {
    serde_json::to_string_pretty(&lex.to_document()).expect("lexicon serializes")
}

/// Checks every lexicon invariant and returns the violations found.
pub fn validate_lexicon(lex: &FrameLexicon) -> Vec<Violation> {
    let mut out = Vec::new();

    for frame in lex.frames.values() {
        if frame.name.trim().is_empty() {
            out.push(Violation::new(
                "empty-frame-name",
                &frame.id,
                format!("frame '{}' has an empty name", frame.id),
            ));
        }
        let mut seen = HashSet::new();
        for fe_id in &frame.fe_ids {
            if !seen.insert(fe_id) {
                out.push(Violation::new(
                    "duplicate-fe-ref",
                    &frame.id,
                    format!("frame '{}' lists frame element '{}' twice", frame.name, fe_id),
                ));
                continue;
            }
            match lex.fes.get(fe_id) {
                None => out.push(Violation::new(
                    "dangling-fe-ref",
                    &frame.id,
                    format!("frame '{}' lists unknown frame element '{}'", frame.name, fe_id),
                )),
                Some(fe) if fe.frame_id != frame.id => out.push(Violation::new(
                    "fe-owner-mismatch",
                    fe_id,
                    format!(
                        "frame element '{}' is listed by frame '{}' but owned by '{}'",
                        fe.name, frame.id, fe.frame_id
                    ),
                )),
                Some(_) => {}
            }
        }
        for rel in &frame.relations {
            if !lex.frames.contains_key(&rel.target) {
                out.push(Violation::new(
                    "dangling-frame-relation",
                    &frame.id,
                    format!(
                        "frame '{}' relation '{}' targets unknown frame '{}'",
                        frame.name, rel.kind, rel.target
                    ),
                ));
            }
        }
    }

    let mut names_per_frame: BTreeMap<(&str, &str), usize> = BTreeMap::new();
    for fe in lex.fes.values() {
        if fe.name.trim().is_empty() {
            out.push(Violation::new(
                "empty-fe-name",
                &fe.id,
                format!("frame element '{}' has an empty name", fe.id),
            ));
        }
        match lex.frames.get(&fe.frame_id) {
            None => out.push(Violation::new(
                "dangling-fe-frame",
                &fe.id,
                format!("frame element '{}' references unknown frame '{}'", fe.name, fe.frame_id),
            )),
            Some(frame) => {
                if !frame.fe_ids.contains(&fe.id) {
                    out.push(Violation::new(
                        "fe-not-listed",
                        &fe.id,
                        format!("frame element '{}' is not listed in frame '{}'", fe.name, frame.name),
                    ));
                }
                let count = names_per_frame.entry((&fe.frame_id, &fe.name)).or_default();
                *count += 1;
                if *count == 2 {
                    out.push(Violation::new(
                        "duplicate-fe-name",
                        &fe.id,
                        format!(
                            "frame '{}' has more than one frame element named '{}'",
                            frame.name, fe.name
                        ),
                    ));
                }
            }
        }
    }

    let mut lu_keys = BTreeSet::new();
    for lu in lex.lus.values() {
        if !lex.frames.contains_key(&lu.frame_id) {
            out.push(Violation::new(
                "dangling-lu-frame",
                &lu.id,
                format!(
                    "lexical unit '{}/{}' evokes unknown frame '{}'",
                    lu.lemma, lu.pos, lu.frame_id
                ),
            ));
        }
        if !lu_keys.insert((normalize_lemma(&lu.lemma), &lu.pos, &lu.frame_id)) {
            out.push(Violation::new(
                "duplicate-lu",
                &lu.id,
                format!(
                    "lexical unit '{}/{}' for frame '{}' is defined twice",
                    lu.lemma, lu.pos, lu.frame_id
                ),
            ));
        }
    }

    let mut expected: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for lu in lex.lus.values() {
        expected
            .entry(normalize_lemma(&lu.lemma))
            .or_default()
            .push(lu.id.clone());
    }
    if expected != lex.lemma_index {
        out.push(Violation::new(
            "lemma-index-mismatch",
            "",
            "lemma index is not the inverse of the lexical unit table".to_string(),
        ));
    }

    out
}

/// All lexical units whose normalized lemma equals the normalized query, in
/// LU id order.
pub fn lookup_lus<'a>(lex: &'a FrameLexicon, lemma: &str) -> Vec<&'a LexicalUnit> {
    lookup_normalized(lex, &normalize_lemma(lemma))
}

pub(crate) fn lookup_normalized<'a>(lex: &'a FrameLexicon, normalized: &str) -> Vec<&'a LexicalUnit> {
    lex.lemma_index
        .get(normalized)
        .map(|ids| ids.iter().filter_map(|id| lex.lus.get(id)).collect())
        .unwrap_or_default()
}

/// Deduplicated frames evoked by `lus`, ordered by frame id. LUs that point at
/// unknown frames are ignored.
pub fn candidate_frames<'a>(lex: &'a FrameLexicon, lus: &[&LexicalUnit]) -> Vec<&'a Frame> {
    let ids: BTreeSet<&str> = lus.iter().map(|lu| lu.frame_id.as_str()).collect();
    ids.into_iter().filter_map(|id| lex.frames.get(id)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn travel_json() -> &'static str {
        r#"{
  "format_version": 1,
  "frames": [
    {"id": "F_Travel", "name": "Travel", "definition": "A traveler goes on a journey.",
     "fe_ids": ["FE_Travel_Traveler", "FE_Travel_Goal", "FE_Travel_Time"]}
  ],
  "frame_elements": [
    {"id": "FE_Travel_Traveler", "name": "Traveler", "frame_id": "F_Travel"},
    {"id": "FE_Travel_Goal", "name": "Goal", "frame_id": "F_Travel"},
    {"id": "FE_Travel_Time", "name": "Time", "frame_id": "F_Travel"}
  ],
  "lexical_units": [
    {"id": "LU_lvxing_v", "lemma": "旅行", "pos": "v", "frame_id": "F_Travel"}
  ]
}"#
    }

    fn frame(id: &str, name: &str, fes: &[&str]) -> Frame {
        Frame {
            id: id.into(),
            name: name.into(),
            definition: String::new(),
            fe_ids: fes.iter().map(|s| s.to_string()).collect(),
            relations: vec![],
        }
    }

    fn fe(id: &str, name: &str, frame: &str) -> FrameElement {
        FrameElement {
            id: id.into(),
            name: name.into(),
            frame_id: frame.into(),
            definition: String::new(),
        }
    }

    fn lu(id: &str, lemma: &str, frame: &str) -> LexicalUnit {
        LexicalUnit {
            id: id.into(),
            lemma: lemma.into(),
            pos: "v".into(),
            frame_id: frame.into(),
        }
    }

    #[test]
    fn parses_travel_fixture() {
        let lex = parse_lexicon(travel_json().as_bytes()).unwrap();
        let stats = lex.stats();
        assert_eq!((stats.frames, stats.frame_elements, stats.lexical_units), (1, 3, 1));
        let names: Vec<_> = lex.frame_fes("F_Travel").iter().map(|f| f.name.as_str()).collect();
        assert_eq!(names, ["Traveler", "Goal", "Time"]);
    }

    #[test]
    fn empty_lexicon_is_valid() {
        let lex = parse_lexicon(br#"{"format_version": 1}"#).unwrap();
        assert_eq!(lex.stats().frames, 0);
        assert!(validate_lexicon(&lex).is_empty());
    }

    #[test]
    fn missing_version_is_a_parse_error() {
        assert!(matches!(
            parse_lexicon(br#"{"frames": []}"#),
            Err(LexiconError::Parse { .. })
        ));
        assert!(matches!(
            parse_lexicon(br#"{"format_version": 7}"#),
            Err(LexiconError::Version(7))
        ));
    }

    #[test]
    fn syntax_error_has_position() {
        match parse_lexicon(b"{\n  \"format_version\": 1,\n  \"frames\": [,]\n}") {
            Err(LexiconError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn fe_with_missing_frame_is_named() {
        let text = r#"{"format_version": 1,
          "frame_elements": [{"id": "FE_Goods", "name": "Goods", "frame_id": "F_Missing"}]}"#;
        match parse_lexicon(text.as_bytes()) {
            Err(LexiconError::Invalid(v)) => {
                assert_eq!(v.len(), 1);
                assert_eq!(v[0].rule, "dangling-fe-frame");
                assert!(v[0].message.contains("Goods"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn all_violations_are_reported() {
        let text = r#"{"format_version": 1,
          "frames": [{"id": "F1", "name": "", "fe_ids": ["FE_x"], "relations": [{"kind": "uses", "target": "F9"}]}],
          "lexical_units": [{"id": "L1", "lemma": "go", "pos": "v", "frame_id": "F2"}]}"#;
        match parse_lexicon(text.as_bytes()) {
            Err(LexiconError::Invalid(v)) => {
                let rules: Vec<_> = v.iter().map(|v| v.rule).collect();
                assert_eq!(
                    rules,
                    [
                        "empty-frame-name",
                        "dangling-fe-ref",
                        "dangling-frame-relation",
                        "dangling-lu-frame"
                    ]
                );
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn well_formed_has_no_violations() {
        let lex = parse_lexicon(travel_json().as_bytes()).unwrap();
        assert!(validate_lexicon(&lex).is_empty());
    }

    #[test]
    fn duplicate_fe_name_in_frame() {
        let doc = LexiconDocument {
            format_version: 1,
            frames: vec![frame("F1", "Travel", &["A", "B"])],
            frame_elements: vec![fe("A", "Traveler", "F1"), fe("B", "Traveler", "F1")],
            lexical_units: vec![],
        };
        let (lex, doc_v) = FrameLexicon::from_document(doc);
        assert!(doc_v.is_empty());
        let v = validate_lexicon(&lex);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].rule, "duplicate-fe-name");
    }

    #[test]
    fn dangling_relation_single_violation() {
        let mut f = frame("F1", "Motion", &[]);
        f.relations.push(FrameRelation {
            kind: "aims_at".into(),
            target: "F_unknown".into(),
        });
        let (lex, _) = FrameLexicon::from_document(LexiconDocument {
            format_version: 1,
            frames: vec![f],
            frame_elements: vec![],
            lexical_units: vec![],
        });
        let v = validate_lexicon(&lex);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].rule, "dangling-frame-relation");
        assert_eq!(v[0].id, "F1");
    }

    #[test]
    fn duplicate_ids_detected_at_document_level() {
        let doc = LexiconDocument {
            format_version: 1,
            frames: vec![frame("F1", "A", &[]), frame("F1", "B", &[])],
            frame_elements: vec![],
            lexical_units: vec![],
        };
        let (_, v) = FrameLexicon::from_document(doc);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].rule, "duplicate-frame-id");
    }

    #[test]
    fn lookup_chinese_lemma() {
        let lex = parse_lexicon(travel_json().as_bytes()).unwrap();
        let hits = lookup_lus(&lex, "旅行");
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].frame_id, "F_Travel");
        assert!(lookup_lus(&lex, "zzz").is_empty());
    }

    #[test]
    fn lookup_is_case_insensitive_for_latin() {
        let lex =
            FrameLexicon::from_parts(vec![frame("F1", "Travel", &[])], vec![], vec![lu("L1", "Travel", "F1")]).unwrap();
        assert_eq!(lookup_lus(&lex, "TRAVEL").len(), 1);
    }

    #[test]
    fn lemma_with_two_frames_returns_both_in_id_order() {
        let lex = FrameLexicon::from_parts(
            vec![frame("F_Motion", "Motion", &[]), frame("F_Travel", "Travel", &[])],
            vec![],
            vec![lu("LU_b", "去", "F_Travel"), lu("LU_a", "去", "F_Motion")],
        )
        .unwrap();
        let ids: Vec<_> = lookup_lus(&lex, "去").iter().map(|l| l.id.as_str()).collect();
        assert_eq!(ids, ["LU_a", "LU_b"]);
    }

    #[test]
    fn candidate_frames_dedup_and_order() {
        let lex = FrameLexicon::from_parts(
            vec![frame("F_Motion", "Motion", &[]), frame("F_Travel", "Travel", &[])],
            vec![],
            vec![
                lu("L1", "go", "F_Travel"),
                lu("L2", "trip", "F_Travel"),
                lu("L3", "move", "F_Motion"),
            ],
        )
        .unwrap();
        let l1 = lex.lexical_unit("L1").unwrap();
        let l2 = lex.lexical_unit("L2").unwrap();
        let l3 = lex.lexical_unit("L3").unwrap();
        let names = |fs: Vec<&Frame>| fs.iter().map(|f| f.name.clone()).collect::<Vec<_>>();
        assert_eq!(names(candidate_frames(&lex, &[l1])), ["Travel"]);
        assert_eq!(names(candidate_frames(&lex, &[l1, l2])), ["Travel"]);
        assert_eq!(names(candidate_frames(&lex, &[l1, l3])), ["Motion", "Travel"]);
    }
}
