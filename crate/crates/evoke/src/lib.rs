//! IO companion for the `evoke-core` engine: dataset files, bank and
//! checkpoint persistence, report logs, the external embedding client, and
//! the CLI command implementations.

pub mod commands;
pub mod dataset;
pub mod error;
pub mod hashes;
pub mod persist;
pub mod remote;
pub mod report;
pub mod settings;
pub mod synth;
