//! Frame-semantic parser: target identification, frame identification,
//! B-I-O argument identification and frame-element classification over a
//! pluggable [`Encoder`].

mod encoder;
pub mod gradcheck;
mod heads;
pub mod linalg;
mod marking;
mod pipeline;
mod targets;
mod train;

pub use encoder::{fnv1a64, sentence_embedding, splitmix64, target_embedding, Encoder, HashEncoder};
pub use gradcheck::{analytic_gradient_check, random_example, GradExample, HeadKind};
pub use heads::{
    argument_representation, classify_fe, decode_bio, encode_bio, frame_fe_rows, identify_arguments, identify_frame,
    marker_positions, predict_bio_labels, BioHead, BioLabel, FeChoice, FeHead, FrameChoice, FrameIdHead, HeadParams,
    DEFAULT_FE_HIDDEN,
};
pub use marking::{mark_target, MarkedInput, CLS, FRAME_MARK, SEP, TARGET_MARK};
pub use pipeline::{parse_sentence, ArgumentParse, EncoderSpec, HeadsCheckpoint, ParseResult, TargetParse};
pub use targets::{identify_targets, TargetSpan, MAX_TARGET_TOKENS};
pub use train::{
    build_examples, head_accuracy, train_heads, FeItem, HeadAccuracy, ParserHeads, TrainConfig, TrainExample,
    TrainOutcome, INIT_SCALE,
};

pub use crate::annotation::Token;

#[derive(Debug, thiserror::Error)]
pub enum ParserError {
    #[error("argument error: {0}")]
    Argument(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("training error at epoch {epoch}: {message}")]
    Training { epoch: usize, message: String },
}
