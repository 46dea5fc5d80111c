//! Batch front end: config parsing, command dispatch and JSON reports.

pub mod commands;
pub mod config;
pub mod error;
pub mod report;
