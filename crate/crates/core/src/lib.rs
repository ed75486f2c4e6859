//! Time-varying interest income and expense betas for bank decile panels.
//!
//! The crate covers the full estimation chain: call-report ingestion and
//! decile aggregation ([`ingest`]), constant-coefficient beta regressions
//! ([`ols`]), the random-walk coefficient state-space model and its
//! likelihood ([`kalman`]), stability / causality / unit-root tests
//! ([`diagnostics`]), synthetic data and Monte Carlo helpers
//! ([`simulation`]), and the batch pipeline that writes every table and
//! figure ([`pipeline`]).

pub mod diagnostics;
pub mod error;
pub mod figures;
pub mod ingest;
pub mod kalman;
pub mod ols;
pub mod optim;
pub mod pipeline;
pub mod quarter;
pub mod simulation;
pub mod table;

pub use error::{Error, ErrorClass, Result};
pub use quarter::Quarter;
