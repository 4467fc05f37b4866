//! Data ingestion, rolling-window orchestration, metrics and reporting.

pub mod backtest;
pub mod data;
pub mod metrics;
pub mod report;

pub use backtest::{decide_window, run_backtest, BacktestConfig, BacktestReport, BaselineMethod, Strategy};
pub use data::{ingest_csv, PricePanel, SeriesBlock, SimulationSpec};
