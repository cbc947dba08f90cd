//! Experiment harness library: configuration parsing, run-directory layout,
//! plotting, sample grids, and the subcommand implementations behind the
//! `gptk` binary.

pub mod commands;
pub mod config;
pub mod data_cfg;
pub mod grid;
pub mod layout;
pub mod plot;
