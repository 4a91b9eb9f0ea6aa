//! Experiment runner around the operator laboratory: deterministic signal
//! corpora, measurement campaigns over a work pool, and reproducible CSV
//! plus JSON reports.

pub mod campaign;
pub mod config;
pub mod corpus;
pub mod report;
