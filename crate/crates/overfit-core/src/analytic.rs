//! Closed-form engine: true Sharpe ratio, expected in-/out-of-sample PnL
//! moments (special and general case), expected-Sharpe approximations,
//! replication ratios, and the AR(1) true Sharpe ratio.
//!
//! All quantities are per time step. Annualization is a presentation-layer
//! multiplier applied when building a [`SharpeReport`], never baked into
//! stored moments.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

use crate::linalg::quad_form;
use crate::model::{derive_matrices, BacktestWindow, ModelError, ModelSpec, WeightRule};
use crate::special::SpecialFnError;

#[derive(Debug, Error)]
pub enum AnalyticError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("special case requires Z=\u{03a3}_\u{03b5}\u{207b}\u{00b9}, \u{03bc}_s=0, \u{03a3}_s=I")]
    SpecialCasePrecondition,
    #[error("signal second-moment matrix sigma_s + mu_s mu_s^T is singular")]
    SingularSignalMoment,
    #[error("non-positive variance: {0}")]
    NonPositiveVariance(String),
    #[error("non-stationary signal: |phi| must be < 1, got {0}")]
    NonStationary(f64),
    #[error("t1 must exceed 2, got {0}")]
    DegenerateUnivariateWindow(usize),
    #[error("Gamma argument non-positive: requires t > m+2, got t={t}, m={m}")]
    KanDomain { t: usize, m: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("target unreachable: supremum is {supremum}")]
    TargetUnreachable { supremum: f64 },
    #[error(transparent)]
    Special(#[from] SpecialFnError),
}

/// Treatment of the epsilon remainder in the in-sample variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum EpsilonPolicy {
    /// Drop the term (it has no closed form and is small for p/T1 < 0.1).
    DroppedZero,
    /// Add a Monte-Carlo estimate of the term to the in-sample variance.
    SimulatedEstimate(f64),
}

impl EpsilonPolicy {
    fn value(&self) -> f64 {
        match self {
            EpsilonPolicy::DroppedZero => 0.0,
            EpsilonPolicy::SimulatedEstimate(v) => *v,
        }
    }
}

/// The four scalar constants of the special-case variance formulas.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MomentConstants {
    pub c1: f64,
    pub c1_tilde: f64,
    pub c2: f64,
    pub c2_tilde: f64,
}

/// Constants as functions of (m, p, T1); valid for T1 > p+1.
pub fn moment_constants(m: usize, p: usize, t1: usize) -> MomentConstants {
    let (mf, pf, t) = (m as f64, p as f64, t1 as f64);
    let d = t - pf - 1.0;
    let c1 = 1.0 + (pf + 1.0) / d;
    let c1_tilde = (2.0 * pf + 5.0) / d + 2.0 * mf * (pf * pf + pf + 2.0 * t) / (t * d);
    let c2 = mf * pf / d;
    let c2_tilde = mf * pf * (2.0 * mf + pf + t + 4.0) / (t * (t + 2.0))
        - 2.0 * mf * mf * pf * pf / (t * t * (t + 2.0))
        - mf * pf / d;
    MomentConstants { c1, c1_tilde, c2, c2_tilde }
}

/// Expected per-step PnL mean and variance for both periods.
#[derive(Debug, Clone, Serialize)]
pub struct MomentSummary {
    pub is_mean: f64,
    pub oos_mean: f64,
    pub is_var: f64,
    pub oos_var: f64,
    /// Populated only by the special case.
    pub constants: Option<MomentConstants>,
    pub epsilon_policy: EpsilonPolicy,
}

/// Expected-Sharpe approximations plus the replication ratio.
#[derive(Debug, Clone, Serialize)]
pub struct SharpeReport {
    /// True Sharpe ratio of the exact model parameters.
    pub sr_true: f64,
    pub sr_eis: f64,
    pub sr_eoos: f64,
    /// `sr_eoos / sr_eis`; `None` when `sr_eis` is zero.
    pub replication_ratio: Option<f64>,
    /// Zero expected out-of-sample return: the ratio is 0 because the model
    /// carries no information, not because of a near-0/0 cancellation.
    pub informationless: bool,
    /// Multiplier applied to the stored Sharpe ratios (sqrt(252), sqrt(12), 1).
    pub annualization_factor: f64,
}

/// True per-step Sharpe ratio of the exact model.
///
/// Returns 0 when both the expected PnL and its variance vanish (beta = 0
/// convention).
pub fn true_sharpe(spec: &ModelSpec) -> Result<f64, AnalyticError> {
    let d = derive_matrices(spec)?;
    let gs = &d.g * &spec.sigma_s;
    let num = gs.trace() + quad_form(&spec.mu_s, &d.g);
    let gsg = &d.g * &spec.sigma_s * &d.g;
    let fs = &d.f * &spec.sigma_s;
    let var = 2.0 * (&gs * &gs).trace()
        + 4.0 * quad_form(&spec.mu_s, &gsg)
        + fs.trace()
        + quad_form(&spec.mu_s, &d.f);
    if var <= 0.0 {
        if num == 0.0 {
            return Ok(0.0);
        }
        return Err(AnalyticError::NonPositiveVariance(
            "true PnL variance vanished with nonzero mean".into(),
        ));
    }
    Ok(num / var.sqrt())
}

fn is_zero_vector(v: &DVector<f64>) -> bool {
    v.iter().all(|&x| x.abs() <= 1e-14)
}

fn is_identity(a: &DMatrix<f64>) -> bool {
    if !a.is_square() {
        return false;
    }
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            let want = if i == j { 1.0 } else { 0.0 };
            if (a[(i, j)] - want).abs() > 1e-12 {
                return false;
            }
        }
    }
    true
}

/// Whether the spec sits in the special-case domain of the simplified
/// moment formulas (Markowitz weights, centred standardized signals).
pub fn in_special_domain(spec: &ModelSpec) -> bool {
    spec.weight_rule == WeightRule::Precision
        && !spec.has_intercept
        && is_zero_vector(&spec.mu_s)
        && is_identity(&spec.sigma_s)
}

/// Expected moments in the special case `Z = sigma_eps^{-1}`, `mu_s = 0`,
/// `sigma_s = I`.
pub fn expected_moments_special(
    spec: &ModelSpec,
    window: &BacktestWindow,
    policy: EpsilonPolicy,
) -> Result<MomentSummary, AnalyticError> {
    if !in_special_domain(spec) {
        return Err(AnalyticError::SpecialCasePrecondition);
    }
    let (m, p) = (spec.n_assets(), spec.n_signals());
    window.validate_for(p)?;
    let gamma = derive_matrices(spec)?.gamma;
    let trg = gamma.trace();
    let trg2 = (&gamma * &gamma).trace();
    let c = moment_constants(m, p, window.t1);
    let t1 = window.t1 as f64;
    let eps = policy.value();
    Ok(MomentSummary {
        is_mean: trg + (p * m) as f64 / t1,
        oos_mean: trg,
        is_var: 2.0 * trg2 + (c.c1 + c.c1_tilde) * trg + c.c2 + c.c2_tilde + eps,
        oos_var: 2.0 * trg2 + c.c1 * trg + c.c2,
        constants: Some(c),
        epsilon_policy: policy,
    })
}

/// Expected moments for an arbitrary symmetric weight rule, signal mean and
/// signal covariance. Reduces exactly to [`expected_moments_special`] on the
/// special-case domain.
pub fn expected_moments_general(
    spec: &ModelSpec,
    window: &BacktestWindow,
    policy: EpsilonPolicy,
) -> Result<MomentSummary, AnalyticError> {
    let p = spec.n_signals();
    window.validate_for(p)?;

    let z = spec.weight_matrix()?;
    let d = derive_matrices(spec)?;
    let (g, f) = (&d.g, &d.f);
    let sigma_s = &spec.sigma_s;
    let mu = &spec.mu_s;

    let mu_outer = mu * mu.transpose();
    let second_moment = sigma_s + &mu_outer;
    let second_moment_inv = nalgebra::Cholesky::new(second_moment.clone())
        .map(|c| c.inverse())
        .ok_or(AnalyticError::SingularSignalMoment)?;

    let t1 = window.t1 as f64;
    let pf = p as f64;
    let denom = t1 - pf - 1.0;
    let ones_mu: f64 = mu.iter().sum();

    let z_se = &z * &spec.sigma_eps;
    let tr_zse = z_se.trace();
    let tr_zeze = (&z_se * &z_se).trace();

    let gs = g * sigma_s;
    let fs = f * sigma_s;
    let tr_gs = gs.trace();
    let tr_fs = fs.trace();
    let quad_g = quad_form(mu, g);
    let quad_f = quad_form(mu, f);

    let is_mean = tr_gs + quad_g + pf / t1 * tr_zse;
    let oos_mean = tr_gs + quad_g;

    let gsg = g * sigma_s * g;
    let base_var =
        2.0 * (&gs * &gs).trace() + 4.0 * quad_form(mu, &gsg) + tr_fs + quad_f;

    // In-sample corrections.
    let centred_diff = &second_moment_inv * (sigma_s - &mu_outer);
    let tr_centred = centred_diff.trace();
    let bracket_f = 2.0 * (f * &second_moment).trace() + quad_f * tr_centred + pf * tr_fs;
    let bracket_g = 2.0 * (g * &second_moment).trace() + quad_g * tr_centred + pf * tr_gs;

    let t12 = t1 * t1;
    let hat_scale = t12 * (t1 + 1.0) * (t1 + 2.0);
    let hat2 = pf * (pf + t1 + 4.0) / (t1 * (t1 + 2.0))
        - ones_mu * 2.0 * (pf - t1 - 2.0) * (pf - t1) / hat_scale;
    let zsq_coef =
        2.0 * (pf - t1) * ((pf - 2.0) * ones_mu + t1 * (pf - ones_mu) + pf) / hat_scale;

    let is_var = base_var
        + 3.0 / denom * bracket_f
        + tr_zeze * hat2
        - tr_zse * tr_zse * zsq_coef
        + 2.0 / denom * tr_zse * bracket_g
        - 2.0 * pf / t1 * tr_zse * (tr_gs + quad_g)
        + policy.value();

    // Out-of-sample corrections.
    let d_mat = second_moment_inv / denom;
    let ds = &d_mat * sigma_s;
    let dsf = &ds * f;
    let mu_term_mat = 2.0 * &dsf + tr_fs * &d_mat + ds.trace() * f;
    let oos_var = base_var
        + quad_form(mu, &mu_term_mat)
        + (&dsf * sigma_s).trace()
        + ds.trace() * tr_fs
        + tr_zeze * (ds.trace() + quad_form(mu, &d_mat));

    Ok(MomentSummary {
        is_mean,
        oos_mean,
        is_var,
        oos_var,
        constants: None,
        epsilon_policy: policy,
    })
}

/// Ratio-of-expectations Sharpe approximations from a moment summary.
pub fn expected_sharpes(
    sr_true: f64,
    moments: &MomentSummary,
    annualization: f64,
) -> Result<SharpeReport, AnalyticError> {
    if moments.is_var <= 0.0 || moments.oos_var <= 0.0 {
        return Err(AnalyticError::NonPositiveVariance(format!(
            "is_var={}, oos_var={}",
            moments.is_var, moments.oos_var
        )));
    }
    let sr_eis = moments.is_mean / moments.is_var.sqrt() * annualization;
    let sr_eoos = moments.oos_mean / moments.oos_var.sqrt() * annualization;
    let replication_ratio = if sr_eis == 0.0 { None } else { Some(sr_eoos / sr_eis) };
    Ok(SharpeReport {
        sr_true: sr_true * annualization,
        sr_eis,
        sr_eoos,
        replication_ratio,
        informationless: moments.oos_mean == 0.0,
        annualization_factor: annualization,
    })
}

/// Full analytic pipeline: true Sharpe, moments (special case when the spec
/// qualifies, general otherwise), and the Sharpe report.
pub fn analytic_report(
    spec: &ModelSpec,
    window: &BacktestWindow,
    policy: EpsilonPolicy,
    annualization: f64,
) -> Result<(MomentSummary, SharpeReport), AnalyticError> {
    let sr_true = true_sharpe(spec)?;
    let moments = if in_special_domain(spec) {
        expected_moments_special(spec, window, policy)?
    } else {
        expected_moments_general(spec, window, policy)?
    };
    let report = expected_sharpes(sr_true, &moments, annualization)?;
    Ok((moments, report))
}

/// Univariate expected in-sample/out-of-sample moments under the
/// one-asset, one-signal scalar Markowitz convention `sigma_s = sigma_eps = 1`.
/// Kept as literal transcriptions; the cross-check against the general
/// pipeline is enforced by test, not by sharing code.
pub fn univariate_moments(beta: f64, t1: usize) -> Result<MomentSummary, AnalyticError> {
    if t1 <= 2 {
        return Err(AnalyticError::DegenerateUnivariateWindow(t1));
    }
    let t = t1 as f64;
    let b2 = beta * beta;
    let b4 = b2 * b2;
    Ok(MomentSummary {
        is_mean: b2 + 1.0 / t,
        oos_mean: b2,
        is_var: 2.0 * b4 + (1.0 + 15.0 / (t - 2.0) - 2.0 / t) * b2 + 4.0 / t
            - 3.0 / (t + 2.0)
            - 1.0 / (t * t),
        oos_var: 2.0 * b4 + (1.0 + 2.0 / (t - 2.0)) * b2 + 1.0 / (t - 2.0),
        constants: None,
        epsilon_policy: EpsilonPolicy::DroppedZero,
    })
}

/// Univariate replication ratio; depends only on beta and T1.
pub fn univariate_replication(beta: f64, t1: usize) -> Result<f64, AnalyticError> {
    let m = univariate_moments(beta, t1)?;
    Ok(beta * beta * m.is_var.sqrt() / (m.is_mean * m.oos_var.sqrt()))
}

/// Model with `beta = k * ones(m, p)`, `sigma_s = I`, `sigma_eps = I`,
/// `Z = I`, no intercept: the uncorrelated worst case for overfitting.
pub fn uniform_beta_spec(k: f64, m: usize, p: usize) -> ModelSpec {
    ModelSpec::new(
        DMatrix::from_element(m, p, k),
        DVector::zeros(p),
        DMatrix::identity(p, p),
        DMatrix::identity(m, m),
        WeightRule::Identity,
        false,
    )
    .expect("uniform-beta dimensions are consistent by construction")
}

/// Replication ratio for the uniform-beta model.
///
/// With `sigma_eps = I` the identity weight rule coincides with the Markowitz
/// rule, so the special-case constants apply with `tr(Gamma) = k^2 p m` and
/// `tr(Gamma^2) = (k^2 p m)^2`.
pub fn uniform_beta_replication(
    k: f64,
    p: usize,
    m: usize,
    t1: usize,
) -> Result<f64, AnalyticError> {
    if t1 <= p + 1 {
        return Err(ModelError::InvalidWindow(format!(
            "degenerate window: t1={} must exceed p+1={}",
            t1,
            p + 1
        ))
        .into());
    }
    let g = k * k * (p * m) as f64;
    let c = moment_constants(m, p, t1);
    let is_var = 2.0 * g * g + (c.c1 + c.c1_tilde) * g + c.c2 + c.c2_tilde;
    let oos_var = 2.0 * g * g + c.c1 * g + c.c2;
    let is_mean = g + (p * m) as f64 / t1 as f64;
    Ok(g / is_mean * (is_var / oos_var).sqrt())
}

/// Supremum of the true per-step Sharpe ratio as `k -> inf` under the
/// uniform-beta convention.
pub const UNIFORM_BETA_SR_SUPREMUM: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// Scale `k` so that the uniform-beta model has true Sharpe ratio `theta`
/// per step. `theta` must lie below `1/sqrt(2)`.
pub fn uniform_beta_for_true_sr(theta: f64, p: usize, m: usize) -> Result<f64, AnalyticError> {
    if theta < 0.0 || theta >= UNIFORM_BETA_SR_SUPREMUM {
        return Err(AnalyticError::TargetUnreachable { supremum: UNIFORM_BETA_SR_SUPREMUM });
    }
    if theta == 0.0 {
        return Ok(0.0);
    }
    // theta^2 = g/(2g+1) with g = tr(Gamma) = k^2 p m.
    let g = theta * theta / (1.0 - 2.0 * theta * theta);
    Ok((g / (p * m) as f64).sqrt())
}

/// Scale `k` so the uniform-beta model hits a target per-step `SR_EIS`.
///
/// Solving `target^2 (2g^2 + b g + c) = (g + a)^2` for `g = k^2 p m` is a
/// quadratic; the smaller positive root (the ascending branch) is taken.
pub fn uniform_beta_for_target_eis(
    target: f64,
    p: usize,
    m: usize,
    t1: usize,
) -> Result<f64, AnalyticError> {
    if t1 <= p + 1 {
        return Err(ModelError::InvalidWindow(format!(
            "degenerate window: t1={} must exceed p+1={}",
            t1,
            p + 1
        ))
        .into());
    }
    let c = moment_constants(m, p, t1);
    let a = (p * m) as f64 / t1 as f64;
    let b = c.c1 + c.c1_tilde;
    let cc = c.c2 + c.c2_tilde;
    let s2 = target * target;

    let eis = |g: f64| (g + a) / (2.0 * g * g + b * g + cc).sqrt();
    let supremum = (0..=600)
        .map(|i| eis(1e-6 * 10f64.powf(i as f64 * 0.02)))
        .fold(eis(0.0), f64::max);

    let qa = 2.0 * s2 - 1.0;
    let qb = b * s2 - 2.0 * a;
    let qc = cc * s2 - a * a;
    let mut roots = Vec::new();
    if qa.abs() < 1e-300 {
        if qb.abs() > 0.0 {
            roots.push(-qc / qb);
        }
    } else {
        let disc = qb * qb - 4.0 * qa * qc;
        if disc >= 0.0 {
            let sq = disc.sqrt();
            roots.push((-qb - sq) / (2.0 * qa));
            roots.push((-qb + sq) / (2.0 * qa));
        }
    }
    roots.retain(|&g| g > 0.0 && (eis(g) - target).abs() <= 1e-8 * target.max(1.0));
    match roots.iter().cloned().fold(f64::INFINITY, f64::min) {
        g if g.is_finite() => Ok((g / (p * m) as f64).sqrt()),
        _ => Err(AnalyticError::TargetUnreachable { supremum }),
    }
}

/// True Sharpe ratio of the one-asset AR(1)-signal model with unit-variance
/// shocks and unit residual variance: `beta / sqrt(1 + 2 beta^2 - phi^2)`.
pub fn ar1_true_sharpe(beta: f64, phi: f64) -> Result<f64, AnalyticError> {
    if phi.abs() >= 1.0 {
        return Err(AnalyticError::NonStationary(phi));
    }
    Ok(beta / (1.0 + 2.0 * beta * beta - phi * phi).sqrt())
}

/// Invert [`ar1_true_sharpe`]: the beta achieving a target true Sharpe ratio
/// at persistence `phi`. Targets at or above `1/sqrt(2)` are unreachable.
pub fn ar1_beta_for_target_sr(sr: f64, phi: f64) -> Result<f64, AnalyticError> {
    if phi.abs() >= 1.0 {
        return Err(AnalyticError::NonStationary(phi));
    }
    let s2 = sr * sr;
    if s2 >= 0.5 {
        return Err(AnalyticError::TargetUnreachable {
            supremum: UNIFORM_BETA_SR_SUPREMUM,
        });
    }
    Ok(sr * ((1.0 - phi * phi) / (1.0 - 2.0 * s2)).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn scalar_spec(beta: f64) -> ModelSpec {
        ModelSpec::new(
            DMatrix::from_element(1, 1, beta),
            DVector::zeros(1),
            DMatrix::identity(1, 1),
            DMatrix::identity(1, 1),
            WeightRule::Precision,
            false,
        )
        .unwrap()
    }

    #[test]
    fn scalar_true_sharpe_is_one_over_sqrt_three() {
        let sr = true_sharpe(&scalar_spec(1.0)).unwrap();
        assert_relative_eq!(sr, 1.0 / 3.0_f64.sqrt(), max_relative = 1e-12);
    }

    #[test]
    fn zero_beta_true_sharpe_is_zero() {
        assert_eq!(true_sharpe(&scalar_spec(0.0)).unwrap(), 0.0);
    }

    #[test]
    fn two_assets_one_signal_true_sharpe() {
        // Closed form gives 2/sqrt(10); the Monte-Carlo confirmation lives in
        // tests/oracle_values.rs.
        let spec = ModelSpec::new(
            DMatrix::from_row_slice(2, 1, &[1.0, 1.0]),
            DVector::zeros(1),
            DMatrix::identity(1, 1),
            DMatrix::identity(2, 2),
            WeightRule::Identity,
            false,
        )
        .unwrap();
        assert_relative_eq!(
            true_sharpe(&spec).unwrap(),
            2.0 / 10.0_f64.sqrt(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn special_moments_zero_beta() {
        let window = BacktestWindow::new(252, 63).unwrap();
        let m = expected_moments_special(&scalar_spec(0.0), &window, EpsilonPolicy::DroppedZero)
            .unwrap();
        assert_relative_eq!(m.is_mean, 1.0 / 252.0, max_relative = 1e-14);
        assert_eq!(m.oos_mean, 0.0);
        assert_relative_eq!(m.oos_var, 1.0 / 250.0, max_relative = 1e-14);
    }

    #[test]
    fn special_moments_unit_beta_oos_var() {
        let window = BacktestWindow::new(252, 63).unwrap();
        let m = expected_moments_special(&scalar_spec(1.0), &window, EpsilonPolicy::DroppedZero)
            .unwrap();
        // 2 + (1 + 2/250) + 1/250 = 3.012
        assert_relative_eq!(m.oos_var, 3.012, max_relative = 1e-12);
    }

    #[test]
    fn in_sample_inflation_is_pm_over_t1() {
        for (m, p, t1) in [(1usize, 1usize, 60usize), (3, 2, 252), (5, 8, 504)] {
            let spec = ModelSpec::new(
                DMatrix::from_fn(m, p, |i, j| 0.05 * ((i + 2 * j) as f64 - 1.0)),
                DVector::zeros(p),
                DMatrix::identity(p, p),
                DMatrix::identity(m, m),
                WeightRule::Precision,
                false,
            )
            .unwrap();
            let window = BacktestWindow::new(t1, 63).unwrap();
            let mom =
                expected_moments_special(&spec, &window, EpsilonPolicy::DroppedZero).unwrap();
            assert_relative_eq!(
                mom.is_mean - mom.oos_mean,
                (p * m) as f64 / t1 as f64,
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn special_precondition_violation_errors() {
        let mut spec = scalar_spec(1.0);
        spec.weight_rule = WeightRule::Identity;
        spec.sigma_eps = DMatrix::from_element(1, 1, 2.0);
        let window = BacktestWindow::new(252, 63).unwrap();
        let err = expected_moments_special(&spec, &window, EpsilonPolicy::DroppedZero)
            .unwrap_err();
        assert!(matches!(err, AnalyticError::SpecialCasePrecondition));
    }

    #[test]
    fn general_reduces_to_special_scalar() {
        let spec = scalar_spec(0.7);
        let window = BacktestWindow::new(120, 30).unwrap();
        let s = expected_moments_special(&spec, &window, EpsilonPolicy::DroppedZero).unwrap();
        let g = expected_moments_general(&spec, &window, EpsilonPolicy::DroppedZero).unwrap();
        assert_relative_eq!(s.is_mean, g.is_mean, max_relative = 1e-12);
        assert_relative_eq!(s.oos_mean, g.oos_mean, max_relative = 1e-12);
        assert_relative_eq!(s.is_var, g.is_var, max_relative = 1e-12);
        assert_relative_eq!(s.oos_var, g.oos_var, max_relative = 1e-12);
    }

    #[test]
    fn univariate_coefficients_match_constants() {
        // c1 + c1~ and c2 + c2~ collapse to the univariate closed forms at
        // m = p = 1.
        for t1 in [10usize, 50, 252, 2520, 10_000] {
            let t = t1 as f64;
            let c = moment_constants(1, 1, t1);
            assert_relative_eq!(
                c.c1 + c.c1_tilde,
                1.0 + 15.0 / (t - 2.0) - 2.0 / t,
                max_relative = 1e-12
            );
            assert_relative_eq!(
                c.c2 + c.c2_tilde,
                4.0 / t - 3.0 / (t + 2.0) - 1.0 / (t * t),
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn general_with_intercept_zero_beta() {
        // m=1, p=2 (intercept + one signal), beta = 0, T1 = 120:
        // is_mean = (p/T1) tr(Z sigma_eps) = 2/120; oos_mean = 0.
        let spec = ModelSpec::new(
            DMatrix::zeros(1, 2),
            DVector::from_vec(vec![1.0, 0.0]),
            DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0]),
            DMatrix::identity(1, 1),
            WeightRule::Precision,
            true,
        )
        .unwrap();
        let window = BacktestWindow::new(120, 60).unwrap();
        let m = expected_moments_general(&spec, &window, EpsilonPolicy::DroppedZero).unwrap();
        assert_relative_eq!(m.is_mean, 2.0 / 120.0, max_relative = 1e-12);
        assert_eq!(m.oos_mean, 0.0);
    }

    #[test]
    fn sharpes_zero_beta_replication_is_zero_with_flag() {
        let window = BacktestWindow::new(252, 63).unwrap();
        let mom = expected_moments_special(&scalar_spec(0.0), &window, EpsilonPolicy::DroppedZero)
            .unwrap();
        let rep = expected_sharpes(0.0, &mom, 1.0).unwrap();
        assert_eq!(rep.sr_eoos, 0.0);
        assert_eq!(rep.replication_ratio, Some(0.0));
        assert!(rep.informationless);
    }

    #[test]
    fn sharpes_match_desk_scale_reference_row() {
        // Two-decimal rounded moments from the reference simulation row; the
        // tolerances absorb the input rounding.
        let mom = MomentSummary {
            is_mean: 0.28,
            oos_mean: 0.11,
            is_var: 0.30,
            oos_var: 0.29,
            constants: None,
            epsilon_policy: EpsilonPolicy::DroppedZero,
        };
        let rep = expected_sharpes(0.5, &mom, 252.0_f64.sqrt()).unwrap();
        assert!((rep.sr_eis - 8.22).abs() < 0.25, "sr_eis = {}", rep.sr_eis);
        assert!((rep.sr_eoos - 3.13).abs() < 0.15, "sr_eoos = {}", rep.sr_eoos);
        assert!(
            (rep.replication_ratio.unwrap() - 0.38).abs() < 0.025,
            "replication = {:?}",
            rep.replication_ratio
        );
    }

    #[test]
    fn sharpes_identical_moments_replicate_fully() {
        let mom = MomentSummary {
            is_mean: 0.2,
            oos_mean: 0.2,
            is_var: 1.3,
            oos_var: 1.3,
            constants: None,
            epsilon_policy: EpsilonPolicy::DroppedZero,
        };
        let rep = expected_sharpes(0.1, &mom, 1.0).unwrap();
        assert_relative_eq!(rep.replication_ratio.unwrap(), 1.0, max_relative = 1e-14);
    }

    #[test]
    fn univariate_replication_limits() {
        assert_eq!(univariate_replication(0.0, 252).unwrap(), 0.0);
        let near_one = univariate_replication(1e6, 252).unwrap();
        assert!((near_one - 1.0).abs() < 1e-6, "got {near_one}");
        assert!(univariate_replication(0.5, 2).is_err());
    }

    #[test]
    fn univariate_matches_general_pipeline() {
        // Independent transcription vs. the Prop-style pipeline at m = p = 1.
        for &beta in &[0.05, 0.1, 0.3, 1.0] {
            for t1 in [50usize, 252, 2520] {
                let window = BacktestWindow::new(t1, 1).unwrap();
                let spec = scalar_spec(beta);
                let mom =
                    expected_moments_general(&spec, &window, EpsilonPolicy::DroppedZero).unwrap();
                let uni = univariate_moments(beta, t1).unwrap();
                assert_relative_eq!(mom.is_mean, uni.is_mean, max_relative = 1e-10);
                assert_relative_eq!(mom.is_var, uni.is_var, max_relative = 1e-10);
                assert_relative_eq!(mom.oos_var, uni.oos_var, max_relative = 1e-10);
                let pipeline = expected_sharpes(0.0, &mom, 1.0).unwrap();
                assert_relative_eq!(
                    pipeline.replication_ratio.unwrap(),
                    univariate_replication(beta, t1).unwrap(),
                    max_relative = 1e-10
                );
            }
        }
    }

    #[test]
    fn uniform_beta_agrees_with_univariate_at_unit_dims() {
        for &k in &[0.05, 0.2, 0.8] {
            for t1 in [100usize, 1260] {
                assert_relative_eq!(
                    uniform_beta_replication(k, 1, 1, t1).unwrap(),
                    univariate_replication(k, t1).unwrap(),
                    max_relative = 1e-10
                );
            }
        }
    }

    #[test]
    fn uniform_beta_zero_k_is_zero() {
        assert_eq!(uniform_beta_replication(0.0, 5, 3, 252).unwrap(), 0.0);
    }

    #[test]
    fn uniform_beta_replication_declines_in_m_at_fixed_eis() {
        // Fixed SR_EIS; beyond some m the target is unreachable because the
        // pure-noise in-sample Sharpe alone exceeds it, so stop there.
        let target = 3.0 / 252.0_f64.sqrt();
        let t1 = 252 * 100;
        for p in [1usize, 4, 10] {
            let mut last = f64::INFINITY;
            let mut feasible = 0;
            for m in (1..=100).step_by(9) {
                let k = match uniform_beta_for_target_eis(target, p, m, t1) {
                    Ok(k) => k,
                    Err(AnalyticError::TargetUnreachable { .. }) => break,
                    Err(e) => panic!("unexpected error: {e}"),
                };
                let r = uniform_beta_replication(k, p, m, t1).unwrap();
                assert!(
                    r < last + 1e-12,
                    "replication not declining at p={p}, m={m}: {r} vs {last}"
                );
                last = r;
                feasible += 1;
            }
            assert!(feasible >= 8, "too few feasible grid points at p={p}");
        }
    }

    #[test]
    fn uniform_beta_eis_solver_round_trip() {
        let (p, m, t1) = (5usize, 3usize, 2520usize);
        let k = 0.07;
        let spec = uniform_beta_spec(k, m, p);
        let window = BacktestWindow::new(t1, 1).unwrap();
        let mom = expected_moments_general(&spec, &window, EpsilonPolicy::DroppedZero).unwrap();
        let target = mom.is_mean / mom.is_var.sqrt();
        let k_back = uniform_beta_for_target_eis(target, p, m, t1).unwrap();
        assert_relative_eq!(k_back, k, max_relative = 1e-8);
    }

    #[test]
    fn oos_mean_is_independent_of_t1() {
        let spec = scalar_spec(0.4);
        let m1 = expected_moments_special(
            &spec,
            &BacktestWindow::new(100, 1).unwrap(),
            EpsilonPolicy::DroppedZero,
        )
        .unwrap();
        let m2 = expected_moments_special(
            &spec,
            &BacktestWindow::new(5000, 1).unwrap(),
            EpsilonPolicy::DroppedZero,
        )
        .unwrap();
        assert_eq!(m1.oos_mean, m2.oos_mean);
    }

    #[test]
    fn ar1_sharpe_reference_points() {
        assert_relative_eq!(
            ar1_true_sharpe(1.0, 0.0).unwrap(),
            1.0 / 3.0_f64.sqrt(),
            max_relative = 1e-12
        );
        let limit = ar1_true_sharpe(1.0, 1.0 - 1e-9).unwrap();
        assert!((limit - 1.0 / 2.0_f64.sqrt()).abs() < 1e-6);
        assert!(ar1_true_sharpe(1.0, 1.0).is_err());
        assert!(ar1_true_sharpe(1.0, -1.2).is_err());
    }

    #[test]
    fn ar1_beta_inversion_round_trips() {
        for &phi in &[0.0, 0.5, 0.9, 0.999] {
            for &sr in &[0.01, 0.063, 0.126] {
                let beta = ar1_beta_for_target_sr(sr, phi).unwrap();
                assert_relative_eq!(
                    ar1_true_sharpe(beta, phi).unwrap(),
                    sr,
                    max_relative = 1e-12
                );
            }
        }
    }

    #[test]
    fn epsilon_estimate_shifts_is_variance() {
        let window = BacktestWindow::new(252, 63).unwrap();
        let base = expected_moments_special(&scalar_spec(1.0), &window, EpsilonPolicy::DroppedZero)
            .unwrap();
        let shifted = expected_moments_special(
            &scalar_spec(1.0),
            &window,
            EpsilonPolicy::SimulatedEstimate(-0.01),
        )
        .unwrap();
        assert_relative_eq!(shifted.is_var, base.is_var - 0.01, max_relative = 1e-12);
        assert_eq!(shifted.oos_var, base.oos_var);
    }
}
