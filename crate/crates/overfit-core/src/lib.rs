//! Closed-form expected in-sample and out-of-sample Sharpe ratios and
//! replication ratios for linear predictive trading strategies, validated
//! against an internal Monte-Carlo simulation engine.
//!
//! The model is `r_{t+1} = beta s_t + eps_{t+1}` traded through
//! `w_t = Z beta_hat s_t` with `beta_hat` fitted on a training window. The
//! [`analytic`] module carries every closed form, [`simulation`] the
//! Monte-Carlo oracle and study engine, [`estimation`] the fitting and
//! preprocessing steps, and [`calibration`] the implied-signal-strength
//! calibration plus the resampling-study harness.

pub mod analytic;
pub mod calibration;
pub mod estimation;
pub mod kan;
pub mod linalg;
pub mod model;
pub mod simulation;
pub mod special;

pub use analytic::{
    analytic_report, ar1_beta_for_target_sr, ar1_true_sharpe, expected_moments_general,
    expected_moments_special, expected_sharpes, moment_constants, true_sharpe,
    uniform_beta_for_target_eis, uniform_beta_for_true_sr, uniform_beta_replication,
    uniform_beta_spec, univariate_replication, AnalyticError, EpsilonPolicy, MomentConstants,
    MomentSummary, SharpeReport,
};
pub use kan::{kan_comparison_curve, kan_expected_is_sr, kan_expected_oos_sr, KanComparisonRow};
pub use model::{
    derive_matrices, validate_model, BacktestWindow, DerivedMatrices, ModelError, ModelSpec,
    ValidationReport, WeightRule,
};
pub use special::{hyp1f1, log_gamma, SeriesControl, SpecialFnError};
