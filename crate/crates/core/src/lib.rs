//! Build a corpus of typo-fixing edits from open-source commit histories.

pub mod atomic;
pub mod classifier;
pub mod error;
pub mod extract;
pub mod features;
pub mod harvest;
pub mod langid;
pub mod lm;
pub mod metrics;
pub mod model;
pub mod pipeline;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/corpus.md")]
    mod corpus {}
    #[doc = include_str!("../../../book/src/harvest.md")]
    mod harvest {}
    #[doc = include_str!("../../../book/src/extraction.md")]
    mod extraction {}
    #[doc = include_str!("../../../book/src/language.md")]
    mod language {}
    #[doc = include_str!("../../../book/src/features.md")]
    mod features {}
    #[doc = include_str!("../../../book/src/classifier.md")]
    mod classifier {}
    #[doc = include_str!("../../../book/src/atomic.md")]
    mod atomic {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/pipeline.md")]
    mod pipeline {}
}
