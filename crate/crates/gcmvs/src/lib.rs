//! File formats, pipeline runner and CLI around [`gcmvs_core`].

pub mod ablation;
pub mod camfile;
pub mod cli;
pub mod config;
pub mod error;
pub mod imageio;
pub mod kernelfile;
pub mod pfm;
pub mod pipeline;
pub mod ply;

pub use error::{Error, Result};
