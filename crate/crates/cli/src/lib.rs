//! Experiment runner for Gromov-Wasserstein generative modeling: TOML-driven
//! training runs, output artifacts (sample CSVs, JSONL metrics, checkpoints)
//! and standalone evaluation of sample files.

pub mod config;
pub mod formats;
pub mod runner;
