//! Benchmark toolkit behind the `routeq` CLI: corpus preparation, experiment
//! and ablation drivers, and metric reports.

pub mod corpus;
pub mod io;
pub mod prepare;
pub mod report;
pub mod runner;
