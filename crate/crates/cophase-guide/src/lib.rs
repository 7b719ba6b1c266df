//! Doctest host for the guide in `book/`.
//!
//! mdbook cannot run snippets that use external crates, so every chapter
//! is attached here as a module's documentation; `cargo test` then builds
//! and executes each code block through rustdoc. A failing snippet fails
//! the build, which keeps the book in sync with the library.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/observations.md")]
pub mod observations {}

#[doc = include_str!("../../../book/src/null-space.md")]
pub mod null_space {}

#[doc = include_str!("../../../book/src/pinning.md")]
pub mod pinning {}

#[doc = include_str!("../../../book/src/functionals.md")]
pub mod functionals {}

#[doc = include_str!("../../../book/src/experiments.md")]
pub mod experiments {}

#[doc = include_str!("../../../book/src/antenna.md")]
pub mod antenna {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
