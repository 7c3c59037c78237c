//! Library surface of the experiment CLI: configuration parsing, CSV
//! ingestion, and the command implementations shared with the binary.

pub mod commands;
pub mod config;
pub mod csv_data;
