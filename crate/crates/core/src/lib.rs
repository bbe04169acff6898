//! Device-cloud collaborative sequential recommendation.
//!
//! A high-capacity cloud ranker sees each user's history only up to a lag and
//! proposes a candidate slate with an initial ranking. A small device ranker
//! sees the real-time history and reranks the slate; the two score vectors
//! are min-max normalized and blended. When the two orders disagree strongly
//! the device may spend part of a request budget to have the cloud rebuild
//! the slate from fresh data.
//!
//! ```
//! use dcrec::infer::{fuse, CandidateSlate, FusionConfig};
//! use dcrec::model::ScoreVector;
//! use dcrec::types::ItemId;
//!
//! let slate = CandidateSlate::new(vec![ItemId(4), ItemId(9)], vec![2.0, 1.0])?;
//! let device = ScoreVector::new(vec![0.1, 0.8]);
//! let fused = fuse(&slate, &device, &FusionConfig::with_alpha(0.3))?;
//! assert_eq!(fused.final_order, vec![ItemId(9), ItemId(4)]);
//! # Ok::<(), dcrec::Error>(())
//! ```

pub mod collab;
pub mod config;
pub mod data;
pub mod digest;
mod error;
pub mod infer;
pub mod model;
pub mod pipeline;
pub mod request;
pub mod rng;
pub mod simeval;
pub mod types;

pub use error::{Error, Result};

// The book's code blocks run as doctests, one module per chapter.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/data.md")]
    mod data {}
    #[doc = include_str!("../../../book/src/models.md")]
    mod models {}
    #[doc = include_str!("../../../book/src/collaborative-training.md")]
    mod collaborative_training {}
    #[doc = include_str!("../../../book/src/inference.md")]
    mod inference {}
    #[doc = include_str!("../../../book/src/requests.md")]
    mod requests {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
    #[doc = include_str!("../../../book/src/bridge.md")]
    mod bridge {}
}
