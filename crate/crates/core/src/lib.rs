pub mod alloc;
pub mod corpus;
pub mod decontam;
pub mod dedup;
pub mod endpoint;
pub mod filter;
pub mod hash;
pub mod mixeval;
pub mod mm;
pub mod pipeline;
pub mod quality;
pub mod recall;
pub mod sft;

pub use corpus::{Document, Source, TokenSequence, TokenizerSpec};
