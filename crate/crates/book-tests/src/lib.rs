//! Runs the code listings of the guide in `book/` as doctests.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/corpus.md")]
pub mod corpus {}
#[doc = include_str!("../../../book/src/filtering.md")]
pub mod filtering {}
#[doc = include_str!("../../../book/src/dedup.md")]
pub mod dedup {}
#[doc = include_str!("../../../book/src/decontamination.md")]
pub mod decontamination {}
#[doc = include_str!("../../../book/src/quality.md")]
pub mod quality {}
#[doc = include_str!("../../../book/src/evaluation.md")]
pub mod evaluation {}
#[doc = include_str!("../../../book/src/sft.md")]
pub mod sft {}
#[doc = include_str!("../../../book/src/multimodal.md")]
pub mod multimodal {}
#[doc = include_str!("../../../book/src/pipeline.md")]
pub mod pipeline {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
