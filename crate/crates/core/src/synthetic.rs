//! Synthetic fixtures. None of this is real annotated data: the small
//! lexicons mirror the frames of the travel dialogue and the awareness
//! example used throughout the docs, and the generators produce seeded random
//! corpora for property tests and benchmarks.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::annotation::{tokenize_whitespace, AnnotatedSentence, FeFiller, TargetAnnotation};
use crate::lexicon::{Frame, FrameElement, FrameLexicon, FrameRelation, LexicalUnit};

struct FrameSpec<'a> {
    id: &'a str,
    name: &'a str,
    definition: &'a str,
    fes: &'a [&'a str],
    relations: &'a [(&'a str, &'a str)],
}

fn fe_id(frame: &str, fe: &str) -> String {
    format!("FE_{}_{}", frame.trim_start_matches("F_"), fe)
}

fn build_lexicon(specs: &[FrameSpec<'_>], lus: &[(&str, &str, &str, &str)]) -> FrameLexicon {
    let mut frames = Vec::new();
    let mut fes = Vec::new();
    for s in specs {
        let ids: Vec<String> = s.fes.iter().map(|fe| fe_id(s.id, fe)).collect();
        for (fe, id) in s.fes.iter().zip(&ids) {
            fes.push(FrameElement {
                id: id.clone(),
                name: fe.to_string(),
                frame_id: s.id.to_string(),
                definition: String::new(),
            });
        }
        frames.push(Frame {
            id: s.id.to_string(),
            name: s.name.to_string(),
            definition: s.definition.to_string(),
            fe_ids: ids,
            relations: s
                .relations
                .iter()
                .map(|(kind, target)| FrameRelation {
                    kind: kind.to_string(),
                    target: target.to_string(),
                })
                .collect(),
        });
    }
    let lus = lus
        .iter()
        .map(|(id, lemma, pos, frame)| LexicalUnit {
            id: id.to_string(),
            lemma: lemma.to_string(),
            pos: pos.to_string(),
            frame_id: frame.to_string(),
        })
        .collect();
    FrameLexicon::from_parts(frames, fes, lus).expect("fixture lexicon is valid")
}

/// Frames of the travel dialogue: Hearsay, Motion, Travel, Commerce_buy, plus
/// Reading. Lexical units exist for both the Chinese words and their English
/// glosses.
pub fn travel_dialogue_lexicon() -> FrameLexicon {
    build_lexicon(
        &[
            FrameSpec {
                id: "F_Commerce_buy",
                name: "Commerce_buy",
                definition: "A buyer exchanges money with a seller for goods.",
                fes: &["Buyer", "Goods", "Seller"],
                relations: &[],
            },
            FrameSpec {
                id: "F_Hearsay",
                name: "Hearsay",
                definition: "A hearer learns a message from an unspecified source.",
                fes: &["Hearer", "Message"],
                relations: &[],
            },
            FrameSpec {
                id: "F_Motion",
                name: "Motion",
                definition: "A theme changes location.",
                fes: &["Theme", "Goal", "Time", "Dur_action"],
                relations: &[("aims_at", "F_Travel")],
            },
            FrameSpec {
                id: "F_Reading",
                name: "Reading",
                definition: "A reader takes in a message from a text.",
                fes: &["Reader", "Text"],
                relations: &[],
            },
            FrameSpec {
                id: "F_Travel",
                name: "Travel",
                definition: "A traveler goes on a journey.",
                fes: &["Traveler", "Goal", "Time"],
                relations: &[],
            },
        ],
        &[
            ("LU_buy_en", "bought", "v", "F_Commerce_buy"),
            ("LU_buy_zh", "买", "v", "F_Commerce_buy"),
            ("LU_hearsay_en", "heard", "v", "F_Hearsay"),
            ("LU_hearsay_zh", "听说", "v", "F_Hearsay"),
            ("LU_motion_en", "going", "v", "F_Motion"),
            ("LU_motion_zh", "去", "v", "F_Motion"),
            ("LU_read_en", "read", "v", "F_Reading"),
            ("LU_travel_en", "travel", "v", "F_Travel"),
            ("LU_travel_zh", "旅行", "v", "F_Travel"),
        ],
    )
}

/// The tokenized Chinese opening of the travel dialogue.
pub fn travel_dialogue_chinese() -> &'static str {
    "听说 你 下周 要 去 日本 旅行"
}

fn sentence(
    doc: &str,
    index: usize,
    split: Option<&str>,
    text: &str,
    targets: Vec<TargetAnnotation>,
) -> AnnotatedSentence {
    AnnotatedSentence {
        doc_id: doc.to_string(),
        sentence_index: index,
        split: split.map(str::to_string),
        text: text.to_string(),
        tokens: tokenize_whitespace(text),
        targets,
    }
}

fn target(start: usize, end: usize, lu: &str, frame: &str, fes: &[(usize, usize, &str)]) -> TargetAnnotation {
    TargetAnnotation {
        start,
        end,
        lu_id: Some(lu.to_string()),
        frame_id: frame.to_string(),
        fes: fes
            .iter()
            .map(|(s, e, fe)| FeFiller {
                start: *s,
                end: *e,
                fe_id: fe_id(frame, fe),
            })
            .collect(),
    }
}

/// English-gloss annotation of the travel dialogue context, one document with
/// Hearsay, Motion, Travel and Commerce_buy instances.
pub fn travel_dialogue_annotations() -> Vec<AnnotatedSentence> {
    let doc = "dlg-0001";
    vec![
        sentence(
            doc,
            0,
            Some("train"),
            "I heard you are going to Japan to travel next week",
            vec![
                target(1, 2, "LU_hearsay_en", "F_Hearsay", &[(0, 1, "Hearer")]),
                target(
                    4,
                    5,
                    "LU_motion_en",
                    "F_Motion",
                    &[(2, 3, "Theme"), (6, 7, "Goal"), (9, 11, "Time")],
                ),
                target(
                    8,
                    9,
                    "LU_travel_en",
                    "F_Travel",
                    &[(2, 3, "Traveler"), (6, 7, "Goal"), (9, 11, "Time")],
                ),
            ],
        ),
        sentence(
            doc,
            1,
            Some("train"),
            "have you bought the plane tickets",
            vec![target(
                2,
                3,
                "LU_buy_en",
                "F_Commerce_buy",
                &[(1, 2, "Buyer"), (3, 6, "Goods")],
            )],
        ),
    ]
}

/// Awareness / Come_up_with lexicon.
pub fn nested_targets_lexicon() -> FrameLexicon {
    build_lexicon(
        &[
            FrameSpec {
                id: "F_Awareness",
                name: "Awareness",
                definition: "A cognizer knows some content.",
                fes: &["Cognizer", "Content"],
                relations: &[],
            },
            FrameSpec {
                id: "F_Come_up_with",
                name: "Come_up_with",
                definition: "A cognizer forms an idea.",
                fes: &["Cognizer", "Idea"],
                relations: &[],
            },
        ],
        &[
            ("LU_know", "knows", "v", "F_Awareness"),
            ("LU_come_up_with", "came up with", "v", "F_Come_up_with"),
        ],
    )
}

/// One sentence evoking Awareness and Come_up_with with three fillers.
pub fn nested_targets_annotations() -> Vec<AnnotatedSentence> {
    vec![sentence(
        "nested",
        0,
        Some("train"),
        "Tom knows she came up with the idea",
        vec![
            target(1, 2, "LU_know", "F_Awareness", &[(0, 1, "Cognizer")]),
            target(
                3,
                6,
                "LU_come_up_with",
                "F_Come_up_with",
                &[(2, 3, "Cognizer"), (6, 8, "Idea")],
            ),
        ],
    )]
}

/// A small corpus that a linear tagger over the hash encoder can fit
/// exactly: every (token, position) pair carries one label throughout.
///
/// Templates: `AGENT travels to PLACE`, `AGENT goes to PLACE` (the lemma
/// `goes` is ambiguous between Motion and Travel) and
/// `AGENT bought the ITEM`.
pub fn separable_corpus() -> (FrameLexicon, Vec<AnnotatedSentence>) {
    let lex = build_lexicon(
        &[
            FrameSpec {
                id: "F_Commerce_buy",
                name: "Commerce_buy",
                definition: "",
                fes: &["Buyer", "Goods"],
                relations: &[],
            },
            FrameSpec {
                id: "F_Motion",
                name: "Motion",
                definition: "",
                fes: &["Theme", "Goal"],
                relations: &[("aims_at", "F_Travel")],
            },
            FrameSpec {
                id: "F_Travel",
                name: "Travel",
                definition: "",
                fes: &["Traveler", "Goal"],
                relations: &[],
            },
        ],
        &[
            ("LU_bought", "bought", "v", "F_Commerce_buy"),
            ("LU_goes_motion", "goes", "v", "F_Motion"),
            ("LU_goes_travel", "goes", "v", "F_Travel"),
            ("LU_travels", "travels", "v", "F_Travel"),
        ],
    );
    let agents = ["Tom", "Mary", "Li", "Wang", "Anna"];
    let places = ["Japan", "Paris", "Beijing", "Rome"];
    let items = ["tickets", "books", "bread", "shoes"];
    let mut out = Vec::new();
    let mut idx = 0;
    for i in 0..15 {
        let (a, p) = (agents[i % 5], places[(i / 5 + i) % 4]);
        out.push(sentence(
            "sep",
            idx,
            Some("train"),
            &format!("{a} travels to {p}"),
            vec![target(
                1,
                2,
                "LU_travels",
                "F_Travel",
                &[(0, 1, "Traveler"), (3, 4, "Goal")],
            )],
        ));
        idx += 1;
    }
    for i in 0..15 {
        let (a, p) = (agents[(i + 2) % 5], places[(i / 5 + 2 * i) % 4]);
        out.push(sentence(
            "sep",
            idx,
            Some("train"),
            &format!("{a} goes to {p}"),
            vec![target(
                1,
                2,
                "LU_goes_motion",
                "F_Motion",
                &[(0, 1, "Theme"), (3, 4, "Goal")],
            )],
        ));
        idx += 1;
    }
    for i in 0..15 {
        let (a, it) = (agents[(i + 4) % 5], items[(i / 5 + 3 * i) % 4]);
        out.push(sentence(
            "sep",
            idx,
            Some("train"),
            &format!("{a} bought the {it}"),
            vec![target(
                1,
                2,
                "LU_bought",
                "F_Commerce_buy",
                &[(0, 1, "Buyer"), (2, 4, "Goods")],
            )],
        ));
        idx += 1;
    }
    (lex, out)
}

/// Parameters for [`random_lexicon`].
#[derive(Debug, Clone, Copy)]
pub struct LexiconShape {
    pub frames: usize,
    pub max_fes: usize,
    pub relation_prob: f64,
}

/// Random valid lexicon. FE names are drawn from a shared pool so that
/// frames share some role names.
pub fn random_lexicon<R: Rng>(rng: &mut R, shape: LexiconShape) -> FrameLexicon {
    const ROLE_NAMES: [&str; 16] = [
        "Agent", "Theme", "Goal", "Source", "Time", "Place", "Manner", "Means", "Buyer", "Seller", "Goods", "Reader",
        "Text", "Hearer", "Message", "Traveler",
    ];
    let ids: Vec<String> = (0..shape.frames).map(|i| format!("F{i:03}")).collect();
    let mut frames = Vec::new();
    let mut fes = Vec::new();
    let mut lus = Vec::new();
    for (i, id) in ids.iter().enumerate() {
        let n = rng.gen_range(1..=shape.max_fes.max(1));
        let mut names: Vec<&str> = ROLE_NAMES
            .choose_multiple(rng, n.min(ROLE_NAMES.len()))
            .copied()
            .collect();
        names.sort_unstable();
        let mut fe_ids = Vec::new();
        for name in names {
            let fid = format!("{id}_{name}");
            fes.push(FrameElement {
                id: fid.clone(),
                name: name.to_string(),
                frame_id: id.clone(),
                definition: String::new(),
            });
            fe_ids.push(fid);
        }
        let mut relations = Vec::new();
        for target in &ids {
            if target != id && rng.gen_bool(shape.relation_prob) {
                let kind = ["uses", "inherits", "aims_at", "precedes"][rng.gen_range(0..4)];
                relations.push(FrameRelation {
                    kind: kind.to_string(),
                    target: target.clone(),
                });
            }
        }
        frames.push(Frame {
            id: id.clone(),
            name: format!("Frame_{i:03}"),
            definition: format!("Synthetic frame {i}."),
            fe_ids,
            relations,
        });
        lus.push(LexicalUnit {
            id: format!("LU{i:03}"),
            lemma: format!("evoke{i}"),
            pos: "v".into(),
            frame_id: id.clone(),
        });
    }
    FrameLexicon::from_parts(frames, fes, lus).expect("generated lexicon is valid")
}

/// Parameters for [`random_document`].
#[derive(Debug, Clone, Copy)]
pub struct DocumentShape {
    pub sentences: usize,
    pub max_tokens: usize,
    pub max_targets: usize,
    pub vocabulary: usize,
}

/// Random annotated document over `lex`. Tokens come from a small
/// vocabulary so filler texts repeat and produce `cross_frame` edges.
pub fn random_document<R: Rng>(
    rng: &mut R,
    lex: &FrameLexicon,
    doc_id: &str,
    split: Option<&str>,
    shape: DocumentShape,
) -> Vec<AnnotatedSentence> {
    let frames: Vec<&Frame> = lex.frames().collect();
    let mut out = Vec::new();
    for s in 0..shape.sentences {
        let n = rng.gen_range(2..=shape.max_tokens.max(2));
        let words: Vec<String> = (0..n)
            .map(|_| format!("w{}", rng.gen_range(0..shape.vocabulary.max(1))))
            .collect();
        let text = words.join(" ");
        let mut targets: Vec<TargetAnnotation> = Vec::new();
        for _ in 0..rng.gen_range(0..=shape.max_targets) {
            let start = rng.gen_range(0..n);
            let end = rng.gen_range(start + 1..=(start + 2).min(n));
            if targets.iter().any(|t| (t.start, t.end) == (start, end)) {
                continue;
            }
            let frame = frames[rng.gen_range(0..frames.len())];
            let mut fes = Vec::new();
            for fe in &frame.fe_ids {
                if rng.gen_bool(0.6) {
                    let fs = rng.gen_range(0..n);
                    let fe_end = rng.gen_range(fs + 1..=(fs + 3).min(n));
                    fes.push(FeFiller {
                        start: fs,
                        end: fe_end,
                        fe_id: fe.clone(),
                    });
                }
            }
            targets.push(TargetAnnotation {
                start,
                end,
                lu_id: None,
                frame_id: frame.id.clone(),
                fes,
            });
        }
        out.push(sentence(doc_id, s, split, &text, targets));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lexicon::validate_lexicon;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn fixtures_are_consistent() {
        let lex = travel_dialogue_lexicon();
        for s in travel_dialogue_annotations() {
            s.check(&lex).unwrap();
        }
        let nested = nested_targets_lexicon();
        for s in nested_targets_annotations() {
            s.check(&nested).unwrap();
        }
        let (lex_s, corpus) = separable_corpus();
        assert!(corpus.len() <= 50);
        for s in &corpus {
            s.check(&lex_s).unwrap();
        }
    }

    #[test]
    fn travel_dialogue_fillers_have_expected_text() {
        let s = &travel_dialogue_annotations()[0];
        let travel = s.targets.iter().find(|t| t.frame_id == "F_Travel").unwrap();
        assert_eq!(s.span_text(travel.fes[0].start, travel.fes[0].end), "you");
    }

    #[test]
    fn random_fixtures_are_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let lex = random_lexicon(
            &mut rng,
            LexiconShape {
                frames: 12,
                max_fes: 4,
                relation_prob: 0.1,
            },
        );
        assert!(validate_lexicon(&lex).is_empty());
        let shape = DocumentShape {
            sentences: 4,
            max_tokens: 8,
            max_targets: 3,
            vocabulary: 10,
        };
        for s in random_document(&mut rng, &lex, "d", None, shape) {
            s.check(&lex).unwrap();
        }
    }
}
