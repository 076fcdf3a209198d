//! Unsupervised alignment of several word-embedding spaces into a single
//! common space, with mappings that stay accurate when composed through the
//! pivot language.

pub mod bilingual;
#[cfg(feature = "cli")]
pub mod cli;
pub mod embeddings;
pub mod error;
pub mod evaluation;
mod linalg;
pub mod multilingual;
pub mod objectives;
pub mod synthetic;
pub mod transport;

pub use error::{Error, Result};
