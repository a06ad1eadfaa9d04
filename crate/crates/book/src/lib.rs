//! The guide in `book/src`, one module per chapter, so that `cargo test`
//! compiles and runs every snippet against the current library.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/sensing.md")]
pub mod sensing {}
#[doc = include_str!("../../../book/src/simulation.md")]
pub mod simulation {}
#[doc = include_str!("../../../book/src/dataset.md")]
pub mod dataset {}
#[doc = include_str!("../../../book/src/classifier.md")]
pub mod classifier {}
#[doc = include_str!("../../../book/src/analytics.md")]
pub mod analytics {}
#[doc = include_str!("../../../book/src/formats.md")]
pub mod formats {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
