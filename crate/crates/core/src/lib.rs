//! Relation-coupled trigger detection transfer.
//!
//! Event triggers are detected as IOB2 sequence labels. Relations extracted by a
//! rule-based open information extraction system are post-processed into
//! non-overlapping spans and injected into the model either as an extra input
//! embedding (`implicit` design) or as an auxiliary tagging task (`explicit`
//! design). Training regimes cover in-domain few-shot fine-tuning, joint mixed
//! batches and sequential transfer, each optionally alternated with masked
//! language modeling on the target domain.
//!
//! The crate is `no_std` and only needs an allocator. File formats, the
//! command line and concurrency live in the `relbridge` crate.

#![no_std]
#![warn(missing_debug_implementations)]

extern crate alloc;

pub mod corpus;
pub mod experiment;
pub mod hash;
pub mod model;
pub mod oie;
pub mod regimes;
pub mod rng;
pub mod span;
pub mod synth;
pub mod tagging;

pub use corpus::{Corpus, Sentence, Split, SplitStats, Stats};
pub use model::{Design, ModelBundle, ModelConfig};
pub use oie::{RelationTagging, TripleExtraction};
pub use span::Span;
pub use tagging::{EvalResult, SpanType, Tag, TagSequence};
