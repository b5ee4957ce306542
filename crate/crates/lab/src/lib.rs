//! Experiments, file formats and the command-line driver built on
//! `driftlab-core`.

pub mod config;
pub mod experiments;
pub mod mc;
pub mod output;
pub mod cli;
