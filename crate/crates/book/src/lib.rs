//! Runs every Rust sample in `book/` as a doctest.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/projections.md")]
pub mod projections {}

#[doc = include_str!("../../../book/src/trees.md")]
pub mod trees {}

#[doc = include_str!("../../../book/src/voting.md")]
pub mod voting {}

#[doc = include_str!("../../../book/src/evaluation.md")]
pub mod evaluation {}

#[doc = include_str!("../../../book/src/files.md")]
pub mod files {}
