//! envforge builds fully simulated tool-calling environments from raw tool
//! catalogs and synthesizes verifiable agentic training data on top of them.
//!
//! The pipeline runs in stages, each exposed as a library module and a CLI
//! subcommand: catalog ingestion → similarity graph + domain partition →
//! environment materialization → task synthesis → simulated interplay →
//! funnel filtering → training export and evaluation analytics.

pub mod artifact;
pub mod catalog;
pub mod cli;
pub mod config;
pub mod export;
pub mod filter;
pub mod graph;
pub mod interplay;
pub mod materialize;
pub mod pipeline;
pub mod runtime;
pub mod synth;
pub mod util;
