//! Backtest-free evaluation toolkit for formulaic alphas.
//!
//! The crate parses alpha expressions in a prefix function-call language,
//! evaluates them over a date × asset × feature panel, and scores alpha sets
//! along five dimensions: predictive power, temporal stability, robustness
//! to input perturbations, financial logic, and diversity. A small backtest
//! module (top/bottom-K long-short) provides the classical diagnostics used
//! to sanity-check those scores.
//!
//! Start with the runnable examples (`cargo run --example <name>`), or with
//! the `alphaeval` binary for file-to-file workflows.

pub mod backtest;
pub mod cli;
pub mod engine;
pub mod error;
pub mod expr;
pub mod logic;
pub mod metrics;
pub mod panel;
pub mod parallel;
pub mod report;
pub mod run;
pub mod seed;
pub mod stats;
pub mod synth;

pub use engine::{evaluate, evaluate_many, SignalMatrix};
pub use error::{Error, Result};
pub use expr::{parse, validate, Alpha, AlphaExpr, Schema};
pub use panel::{compute_returns, index_volatility, NoiseFamily, NoiseSpec, Panel, ReturnMatrix};
