//! Compiles the Rust snippets of the guide in `book/` as doctests.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/concepts.md")]
pub mod concepts {}

#[doc = include_str!("../../../book/src/config.md")]
pub mod config {}

#[doc = include_str!("../../../book/src/outputs.md")]
pub mod outputs {}

#[doc = include_str!("../../../book/src/library.md")]
pub mod library {}

#[doc = include_str!("../../../book/src/walkthrough.md")]
pub mod walkthrough {}
