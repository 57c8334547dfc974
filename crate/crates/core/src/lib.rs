//! Discrete-time hazard scorecard pipeline.
//!
//! This crate fits a monthly-default hazard model on mortgage performance
//! panels and turns it into a credit scorecard. The stages, in pipeline
//! order:
//!
//! 1. [`ingest`] — parse loan, performance, and macroeconomic files; label
//!    each loan good/bad with Type I censoring and exclude malformed
//!    histories, accounting for every rejected row.
//! 2. [`panel`] — expand each labeled history into its exploded panel of
//!    snapshot sub-panels, or — the production path — draw a backward
//!    weighted sample of that panel directly from the original rows, with
//!    inverse-probability weights so weighted totals estimate the full
//!    panel. Also the stratified train/test split.
//! 3. [`features`] — panel rows to regressors: piecewise-linear splines,
//!    spread at origination, macro-series transforms, calendar indicators,
//!    and a FICO × balance interaction calibrated on group bad rates.
//! 4. [`hazard`] — weighted logistic regression read as a discrete-time
//!    hazard model: Newton fit, standard errors, Wald statistics, hazard
//!    and horizon-default prediction.
//! 5. [`eval`] — monthly backtests, ROC / Youden cutoff selection, log-odds
//!    to score conversion, score bands, confusion matrices and
//!    classification metrics.
//! 6. [`synth`] — synthetic portfolio generator with a known true model,
//!    used as the ground-truth oracle in tests and demos.
//!
//! Everything downstream of a seed is deterministic: random work is keyed
//! per loan via [`rng::substream`], so results are independent of row order
//! and thread count.

pub mod eval;
pub mod features;
pub mod hazard;
pub mod ingest;
pub mod month;
pub mod panel;
pub mod rng;
pub mod synth;
pub mod types;

pub use eval::{BacktestReport, ConfusionMatrix, RocCurve, ScoreScale};
pub use features::{FeatureAssembler, FeatureSpec};
pub use hazard::{CoefficientTable, DesignRow, FitOptions};
pub use month::{CalMonth, MonthParseError};
pub use panel::{PanelRow, SamplingRateTable, Split, SplitAssignment};
pub use synth::GeneratorSpec;
pub use types::Status;
