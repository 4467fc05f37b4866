//! Benchmark replication by per-asset principal component factorization under
//! normal and skew-normal return models, with optimization baselines and a
//! rolling-window backtest engine.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod calibrate;
pub mod engine;
pub mod error;
pub mod optim;
pub mod pcf;
pub mod processes;
pub mod selector;
pub mod skewdist;
pub mod special;
pub mod tracking;

pub use error::{Error, Result};
pub use pcf::{ComponentShapes, EigenPair, PairCov};
pub use processes::{AssetSpec, SabmState, SgbmParams, SimulatedPanel, UniverseSpec};
pub use skewdist::SkewNormalParams;
pub use tracking::{AssetModel, BenchmarkModel, MarketModel, U2Mode, Weights};
pub use selector::{Mode, TrackingPortfolio};
pub use calibrate::{CalibrationResult, CorrelationKind};
pub use engine::{BacktestConfig, BacktestReport, PricePanel, Strategy};
