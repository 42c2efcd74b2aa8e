//! Std companion of `oema-core`: the LLM gateway, the three agents, JSONL
//! corpora, run configuration, reports and pipeline orchestration behind
//! the `oema` binary.
//!
//! ```no_run
//! use oema::config::RunConfig;
//! use oema::pipeline::{cmd_annotate, cmd_predict, Pipeline};
//!
//! let config = RunConfig::load("run.toml".as_ref())?;
//! let pipeline = Pipeline::new(config)?;
//! cmd_annotate(&pipeline)?;
//! let predictions = cmd_predict(&pipeline)?;
//! println!("{} sentences predicted", predictions.len());
//! # Ok::<(), Box<dyn std::error::Error>>(())
//! ```

#![warn(missing_docs)]

pub mod agents;
pub mod config;
pub mod corpus_io;
pub mod gateway;
pub mod pipeline;
pub mod report;

pub use oema_core as core;
