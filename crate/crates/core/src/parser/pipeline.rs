use serde::{Deserialize, Serialize};

use super::encoder::{target_embedding, Encoder};
use super::heads::{classify_fe, identify_arguments, identify_frame};
use super::marking::mark_target;
use super::targets::identify_targets;
use super::train::{ParserHeads, TrainConfig};
use super::ParserError;
use crate::annotation::{tokens_well_formed, AnnotatedSentence, FeFiller, TargetAnnotation, Token};
use crate::digest::config_digest;
use crate::lexicon::{candidate_frames, FrameLexicon};
use crate::{FORMAT_VERSION, TOOL_VERSION};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArgumentParse {
    pub token_start: usize,
    pub token_end: usize,
    pub fe_id: String,
    pub score: f64,
    pub distribution: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetParse {
    pub token_start: usize,
    pub token_end: usize,
    pub lu_ids: Vec<String>,
    pub frame_id: String,
    pub distribution: Vec<(String, f64)>,
    pub arguments: Vec<ArgumentParse>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParseResult {
    pub targets: Vec<TargetParse>,
}

/// Runs target identification, frame identification, argument
/// identification and FE classification over one tokenized sentence.
///
/// Frames that own no frame elements get no arguments.
pub fn parse_sentence(
    tokens: &[Token],
    lex: &FrameLexicon,
    encoder: &dyn Encoder,
    heads: &ParserHeads,
) -> Result<ParseResult, ParserError> {
    if heads.dim() != encoder.dim() || heads.bio.dim() != encoder.dim() || heads.fe.dim() != encoder.dim() {
        return Err(ParserError::Config(format!(
            "heads expect dimension {}, encoder produces {}",
            heads.dim(),
            encoder.dim()
        )));
    }
    if !tokens_well_formed(tokens) {
        return Err(ParserError::Argument("tokens overlap or are empty".into()));
    }
    let mut targets = Vec::new();
    for span in identify_targets(tokens, lex) {
        let lus: Vec<_> = span.lu_ids.iter().filter_map(|id| lex.lexical_unit(id)).collect();
        let cands: Vec<&str> = candidate_frames(lex, &lus).iter().map(|f| f.id.as_str()).collect();
        if cands.is_empty() {
            continue;
        }
        let marked = mark_target(tokens, &span)?;
        let emb = encoder.encode(&marked.symbols);
        let t = target_embedding(&emb, &marked.target_mask)?;
        let choice = identify_frame(&t, &cands, &heads.frame)?;
        let frame = lex.frame(&choice.frame_id).expect("candidate frames resolve");

        let mut arguments = Vec::new();
        if !frame.fe_ids.is_empty() {
            let fe_emb = encoder.encode(&marked.with_frame(&frame.name));
            for (s, e) in identify_arguments(&fe_emb, &marked, &heads.bio) {
                let fe = classify_fe(&fe_emb, (s, e), &frame.id, &heads.fe, lex)?;
                let (Some(ts), Some(te)) = (marked.token_of_symbol(s), marked.token_of_symbol(e - 1)) else {
                    unreachable!("marker symbols are always labeled O");
                };
                arguments.push(ArgumentParse {
                    token_start: ts,
                    token_end: te + 1,
                    fe_id: fe.fe_id,
                    score: fe.score,
                    distribution: fe.distribution,
                });
            }
        }
        targets.push(TargetParse {
            token_start: span.token_start,
            token_end: span.token_end,
            lu_ids: span.lu_ids.clone(),
            frame_id: choice.frame_id,
            distribution: choice.distribution,
            arguments,
        });
    }
    Ok(ParseResult { targets })
}

impl ParseResult {
    /// Converts the parse into an annotation record. The LU recorded for a
    /// target is the first matched LU that evokes the chosen frame.
    pub fn to_annotation(
        &self,
        lex: &FrameLexicon,
        doc_id: &str,
        sentence_index: usize,
        text: &str,
        tokens: &[Token],
    ) -> AnnotatedSentence {
        AnnotatedSentence {
            doc_id: doc_id.to_string(),
            sentence_index,
            split: None,
            text: text.to_string(),
            tokens: tokens.to_vec(),
            targets: self
                .targets
                .iter()
                .map(|t| TargetAnnotation {
                    start: t.token_start,
                    end: t.token_end,
                    lu_id: t
                        .lu_ids
                        .iter()
                        .find(|id| lex.lexical_unit(id).is_some_and(|lu| lu.frame_id == t.frame_id))
                        .cloned(),
                    frame_id: t.frame_id.clone(),
                    fes: t
                        .arguments
                        .iter()
                        .map(|a| FeFiller {
                            start: a.token_start,
                            end: a.token_end,
                            fe_id: a.fe_id.clone(),
                        })
                        .collect(),
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderSpec {
    pub name: String,
    pub dim: usize,
}

/// Head checkpoint file: dimensions, id orderings and all parameters as
/// nested arrays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadsCheckpoint {
    pub format_version: u32,
    pub tool_version: String,
    pub seed: u64,
    pub config_digest: String,
    pub config: TrainConfig,
    pub encoder: EncoderSpec,
    pub heads: ParserHeads,
    pub loss_trace: Vec<f64>,
}

impl HeadsCheckpoint {
    pub fn new(config: TrainConfig, encoder: EncoderSpec, heads: ParserHeads, loss_trace: Vec<f64>) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            tool_version: TOOL_VERSION.to_string(),
            seed: config.seed,
            config_digest: config_digest(&(&config, &encoder)),
            config,
            encoder,
            heads,
            loss_trace,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ParserError> {
        let ck: HeadsCheckpoint =
            serde_json::from_str(text).map_err(|e| ParserError::Data(format!("bad heads file: {e}")))?;
        if ck.format_version != FORMAT_VERSION {
            return Err(ParserError::Data(format!(
                "unsupported heads format_version {}",
                ck.format_version
            )));
        }
        let h = &ck.heads;
        let d = ck.encoder.dim;
        let consistent = h.frame.weight.cols() == d
            && h.frame.weight.rows() == h.frame.frame_ids.len()
            && h.frame.bias.len() == h.frame.frame_ids.len()
            && h.bio.weight.rows() == 3
            && h.bio.weight.cols() == d
            && h.bio.bias.len() == 3
            && h.fe.w1.cols() == d
            && h.fe.b1.len() == h.fe.w1.rows()
            && h.fe.w2.cols() == h.fe.w1.rows()
            && h.fe.w2.rows() == h.fe.fe_ids.len()
            && h.fe.b2.len() == h.fe.fe_ids.len();
        if !consistent {
            return Err(ParserError::Data("heads file has inconsistent dimensions".into()));
        }
        Ok(ck)
    }
}
