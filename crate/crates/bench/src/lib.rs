//! Benchmark harness: grids of (environment, method, seed) runs, resumable
//! result records, and Table-style reports.

pub mod cli;
pub mod config;
pub mod error;
pub mod report;
pub mod runner;

pub use config::{BenchmarkConfig, Seeds};
pub use error::{BenchError, Result};
pub use report::{load_records, write_report, ReportTable};
pub use runner::{run_benchmark, GridSummary, JobSpec};
