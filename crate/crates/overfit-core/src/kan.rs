//! Expected in-/out-of-sample Sharpe ratios for the constant-parameter
//! Markowitz benchmark, and the comparison curve against the signal-driven
//! model. Gamma ratios are evaluated through log-Gamma differences.

use serde::Serialize;

use crate::analytic::{
    uniform_beta_for_true_sr, uniform_beta_replication, AnalyticError,
};
use crate::special::{hyp1f1, log_gamma, SeriesControl};

fn check_domain(theta: f64, m: usize, t: usize) -> Result<(), AnalyticError> {
    if t <= m + 2 {
        return Err(AnalyticError::KanDomain { t, m });
    }
    if !(theta >= 0.0) {
        return Err(AnalyticError::InvalidArgument(format!(
            "theta must be non-negative, got {theta}"
        )));
    }
    Ok(())
}

/// Series control sized for the argument: the transformed series needs of the
/// order of |z| terms before it starts converging.
fn series_control(z_abs: f64) -> SeriesControl {
    SeriesControl {
        rel_tol: 1e-12,
        max_terms: 10_000.max((2.2 * z_abs) as usize + 1_000),
    }
}

/// Expected in-sample Sharpe ratio of the estimated Markowitz portfolio on
/// `m` assets and `t` training steps, at true Sharpe ratio `theta` per step.
pub fn kan_expected_is_sr(theta: f64, m: usize, t: usize) -> Result<f64, AnalyticError> {
    check_domain(theta, m, t)?;
    let (mf, tf) = (m as f64, t as f64);
    let log_ratio = log_gamma((mf + 1.0) / 2.0)? + log_gamma((tf - mf - 1.0) / 2.0)?
        - log_gamma(mf / 2.0)?
        - log_gamma((tf - mf) / 2.0)?;
    let z = -mf * theta * theta / 2.0;
    let f = hyp1f1(-0.5, mf / 2.0, z, series_control(z.abs()))?;
    Ok(log_ratio.exp() * f.value)
}

/// Expected out-of-sample Sharpe ratio of the estimated Markowitz portfolio.
pub fn kan_expected_oos_sr(theta: f64, m: usize, t: usize) -> Result<f64, AnalyticError> {
    check_domain(theta, m, t)?;
    let (mf, tf) = (m as f64, t as f64);
    let log_ratio = log_gamma((mf + 1.0) / 2.0)?
        + log_gamma((tf - mf + 2.0) / 2.0)?
        + log_gamma(tf / 2.0)?
        - log_gamma((mf + 2.0) / 2.0)?
        - log_gamma((tf - mf + 1.0) / 2.0)?
        - log_gamma((tf + 1.0) / 2.0)?;
    let z = -tf * theta * theta / 2.0;
    let f = hyp1f1(0.5, (mf + 2.0) / 2.0, z, series_control(z.abs()))?;
    Ok(theta * theta * tf.sqrt() / 2.0_f64.sqrt() * log_ratio.exp() * f.value)
}

/// One comparison point: both models' replication ratios at `m` assets.
#[derive(Debug, Clone, Serialize)]
pub struct KanComparisonRow {
    pub m: usize,
    pub kan_is_sr: f64,
    pub kan_oos_sr: f64,
    pub kan_replication: f64,
    pub ours_replication: f64,
}

/// Replication-ratio curves for the Markowitz benchmark and the uniform-beta
/// signal model, matched at the same true Sharpe ratio `theta` (per step) and
/// `t = t1` training steps.
pub fn kan_comparison_curve(
    theta: f64,
    t: usize,
    m_values: &[usize],
    p_ours: usize,
) -> Result<Vec<KanComparisonRow>, AnalyticError> {
    let mut rows = Vec::with_capacity(m_values.len());
    for &m in m_values {
        let kan_is_sr = kan_expected_is_sr(theta, m, t)?;
        let kan_oos_sr = kan_expected_oos_sr(theta, m, t)?;
        let k = uniform_beta_for_true_sr(theta, p_ours, m)?;
        rows.push(KanComparisonRow {
            m,
            kan_is_sr,
            kan_oos_sr,
            kan_replication: kan_oos_sr / kan_is_sr,
            ours_replication: uniform_beta_replication(k, p_ours, m, t)?,
        });
    }
    Ok(rows)
}
