//! Experiment configuration, baselines, runner, reports and checkpoints.

pub mod baselines;
pub mod sbm;
pub mod checkpoint;
pub mod config;
pub mod report;
pub mod runner;
pub mod cora;
