//! Frame-semantic knowledge probing toolkit.
//!
//! The crate is organised as a pipeline:
//!
//! * [`lexicon`] loads and validates a FrameNet-style lexicon.
//! * [`parser`] identifies targets, frames, arguments and frame elements over a
//!   pluggable [`parser::Encoder`].
//! * [`graph`] turns annotated sentences into a per-document frame graph and
//!   extracts typed triples from it.
//! * [`probes`] converts triples into six kinds of multiple-choice probes.
//! * [`eval`] runs black-box models over probes or surface QA items and
//!   reports accuracy.
//!
//! Interchangeable pieces (encoders, probe strategies, model adapters) are
//! trait objects registered by name, see [`registry`].

pub mod annotation;
pub mod digest;
pub mod eval;
pub mod graph;
pub mod http;
pub mod jsonl;
pub mod lexicon;
pub mod normalize;
pub mod parser;
pub mod probes;
pub mod registry;
pub mod synthetic;

/// Version written into every artifact this crate produces.
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Current version of every on-disk format.
pub const FORMAT_VERSION: u32 = 1;
