//! Discrete intonation codes for phrase-level F0 control.

pub mod banded;
pub mod codes;
pub mod config;
pub mod corpus;
pub mod f0;
pub mod mlpg;
pub mod nn;
pub mod model;
pub mod phrase;
pub mod pipeline;
pub mod stats;
pub mod synth;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/phrasing.md")]
    mod phrasing {}
    #[doc = include_str!("../../../book/src/features.md")]
    mod features {}
    #[doc = include_str!("../../../book/src/mlpg.md")]
    mod mlpg {}
    #[doc = include_str!("../../../book/src/networks.md")]
    mod networks {}
    #[doc = include_str!("../../../book/src/models.md")]
    mod models {}
    #[doc = include_str!("../../../book/src/codes.md")]
    mod codes {}
    #[doc = include_str!("../../../book/src/synthesis.md")]
    mod synthesis {}
    #[doc = include_str!("../../../book/src/statistics.md")]
    mod statistics {}
    #[doc = include_str!("../../../book/src/workflow.md")]
    mod workflow {}
}
