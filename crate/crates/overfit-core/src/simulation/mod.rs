//! Monte-Carlo oracle and study engine: path generators, PnL backtesting,
//! averaged experiments with standard errors, the random-model sampler, and
//! the epsilon-term and convexity-gap estimators.

mod backtest;
mod generate;
mod random_model;
mod rng;

pub use backtest::{run_backtest, sample_stats, SampleStats};
pub use generate::{simulate_returns, simulate_signals, stationary_covariance};
pub use random_model::{
    lkj_correlation, sample_random_model, sample_random_model_with_eta, DEFAULT_LKJ_ETA,
};
pub use rng::{stream_rng, stream_tag};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::analytic::{
    analytic_report, expected_moments_special, in_special_domain, AnalyticError, EpsilonPolicy,
    MomentSummary, SharpeReport,
};
use crate::estimation::{
    ols_fit, panel_fit, ridge_fit, sample_covariance, shrink_covariance, EstimationError,
    PanelGrouping, StackedData,
};
use crate::linalg;
use crate::model::{BacktestWindow, ModelError, ModelSpec};

#[derive(Debug, Error)]
pub enum SimulationError {
    #[error("AR(1) parameter is unstable: spectral radius {0} >= 1")]
    UnstablePhi(f64),
    #[error("degrees of freedom must exceed 2 for finite variance, got {0}")]
    InvalidDof(f64),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Estimation(#[from] EstimationError),
    #[error(transparent)]
    Analytic(#[from] AnalyticError),
}

/// Signal path generator kind. For the AR(1) kinds the model's `sigma_s` is
/// read as the shock covariance of the dynamic block.
#[derive(Debug, Clone)]
pub enum SignalKind {
    GaussianIid,
    Ar1 { phi: DMatrix<f64> },
    Ar1StudentT { phi: DMatrix<f64>, dof: DVector<f64> },
}

/// Residual generator kind; Student-t draws are rescaled to unit variance
/// before correlation so `sigma_eps` stays the true covariance.
#[derive(Debug, Clone)]
pub enum NoiseKind {
    Gaussian,
    StudentT { dof: DVector<f64> },
}

#[derive(Debug, Clone)]
pub struct SimulationConfig {
    pub signal_kind: SignalKind,
    pub noise_kind: NoiseKind,
    pub n_paths: usize,
    pub seed: u64,
    /// AR(1) warm-up steps; 0 is exact thanks to the stationary start.
    pub burn_in: usize,
}

impl SimulationConfig {
    pub fn gaussian_iid(n_paths: usize, seed: u64) -> Self {
        Self {
            signal_kind: SignalKind::GaussianIid,
            noise_kind: NoiseKind::Gaussian,
            n_paths,
            seed,
            burn_in: 0,
        }
    }

    fn validate(&self) -> Result<(), SimulationError> {
        if self.n_paths < 1 {
            return Err(SimulationError::InvalidConfig("n_paths must be at least 1".into()));
        }
        let check_dof = |dof: &DVector<f64>| {
            dof.iter()
                .find(|&&nu| nu <= 2.0)
                .map_or(Ok(()), |&nu| Err(SimulationError::InvalidDof(nu)))
        };
        match &self.signal_kind {
            SignalKind::Ar1 { phi } | SignalKind::Ar1StudentT { phi, .. } => {
                let radius = linalg::spectral_radius(phi);
                if radius >= 1.0 {
                    return Err(SimulationError::UnstablePhi(radius));
                }
            }
            SignalKind::GaussianIid => {}
        }
        if let SignalKind::Ar1StudentT { dof, .. } = &self.signal_kind {
            check_dof(dof)?;
        }
        if let NoiseKind::StudentT { dof } = &self.noise_kind {
            check_dof(dof)?;
        }
        Ok(())
    }
}

/// How the regression parameter is fitted on the in-sample window.
#[derive(Debug, Clone)]
pub enum FitMethod {
    Ols,
    Ridge(f64),
    Panel(PanelGrouping),
}

/// Source of the weight matrix used for portfolio construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CovSource {
    /// The spec's own weight rule with the true covariance.
    TrueCov,
    /// Markowitz with the (shrunk) in-sample residual covariance estimate.
    EstimatedCov,
}

/// Per-path in-sample and out-of-sample statistics.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct PathRecord {
    pub is: SampleStats,
    pub oos: SampleStats,
}

/// Averages with standard errors for one period across paths.
#[derive(Debug, Clone, Serialize)]
pub struct PeriodAggregate {
    /// Average of per-path sample means.
    pub mean_pnl: f64,
    pub mean_pnl_se: Option<f64>,
    /// Average of per-path sample variances.
    pub mean_variance: f64,
    pub mean_variance_se: Option<f64>,
    /// Average of per-path sample Sharpe ratios (degenerate paths excluded).
    pub mean_sharpe: Option<f64>,
    pub mean_sharpe_se: Option<f64>,
    /// Ratio-of-expectations estimate: mean PnL over sqrt(mean variance).
    pub sharpe_of_means: Option<f64>,
    pub n: usize,
    pub n_sharpe: usize,
}

/// Quantiles of the per-path Sharpe distribution.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SharpeQuantiles {
    pub q05: f64,
    pub q25: f64,
    pub q50: f64,
    pub q75: f64,
    pub q95: f64,
}

/// Replication-ratio aggregates across paths.
#[derive(Debug, Clone, Serialize)]
pub struct ReplicationSummary {
    /// mean(SR_OOS) / mean(SR_IS) over paths where both are defined.
    pub ratio_of_mean_sharpes: Option<f64>,
    /// Delta-method standard error of the ratio.
    pub ratio_se: Option<f64>,
    /// mean(SR_OOS / SR_IS); the expectation-of-ratio alternative.
    pub mean_path_ratio: Option<f64>,
}

/// Simulated experiment output with the analytic prediction attached
/// side by side (computed under the Gaussian-iid assumptions even when the
/// generator departs from them, which is exactly the comparison of interest).
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentResult {
    pub analytic_moments: Option<MomentSummary>,
    pub analytic_sharpes: Option<SharpeReport>,
    pub is_aggregate: PeriodAggregate,
    pub oos_aggregate: PeriodAggregate,
    pub replication: ReplicationSummary,
    pub is_sharpe_quantiles: Option<SharpeQuantiles>,
    pub oos_sharpe_quantiles: Option<SharpeQuantiles>,
    pub n_paths: usize,
    /// Paths whose fit or weight construction was singular; reported, never
    /// silently dropped.
    pub singular_paths: usize,
    /// Paths with zero PnL variance, excluded from Sharpe averages.
    pub degenerate_sharpe_paths: usize,
    #[serde(skip)]
    pub records: Vec<PathRecord>,
}

enum PathOutcome {
    Fitted(PathRecord),
    SingularFit,
}

fn mean_and_se(xs: &[f64]) -> (f64, Option<f64>) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, None);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, None);
    }
    let var = xs.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n as f64 - 1.0);
    (mean, Some((var / n as f64).sqrt()))
}

fn quantiles(values: &mut Vec<f64>) -> Option<SharpeQuantiles> {
    if values.len() < 2 {
        return None;
    }
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let pick = |q: f64| {
        let pos = q * (values.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        let w = pos - lo as f64;
        values[lo] * (1.0 - w) + values[hi] * w
    };
    Some(SharpeQuantiles {
        q05: pick(0.05),
        q25: pick(0.25),
        q50: pick(0.50),
        q75: pick(0.75),
        q95: pick(0.95),
    })
}

fn aggregate_period(records: &[PathRecord], oos: bool) -> (PeriodAggregate, Option<SharpeQuantiles>) {
    let stats: Vec<&SampleStats> =
        records.iter().map(|r| if oos { &r.oos } else { &r.is }).collect();
    let means: Vec<f64> = stats.iter().map(|s| s.mean).collect();
    let vars: Vec<f64> = stats.iter().map(|s| s.variance).collect();
    let mut sharpes: Vec<f64> = stats.iter().filter_map(|s| s.sharpe).collect();
    let (mean_pnl, mean_pnl_se) = mean_and_se(&means);
    let (mean_variance, mean_variance_se) = mean_and_se(&vars);
    let (mean_sharpe, mean_sharpe_se) = if sharpes.is_empty() {
        (None, None)
    } else {
        let (m, se) = mean_and_se(&sharpes);
        (Some(m), se)
    };
    let sharpe_of_means =
        (mean_variance > 0.0).then(|| mean_pnl / mean_variance.sqrt());
    let agg = PeriodAggregate {
        mean_pnl,
        mean_pnl_se,
        mean_variance,
        mean_variance_se,
        mean_sharpe,
        mean_sharpe_se,
        sharpe_of_means,
        n: records.len(),
        n_sharpe: sharpes.len(),
    };
    let q = quantiles(&mut sharpes);
    (agg, q)
}

fn replication_summary(records: &[PathRecord]) -> ReplicationSummary {
    let pairs: Vec<(f64, f64)> = records
        .iter()
        .filter_map(|r| match (r.is.sharpe, r.oos.sharpe) {
            (Some(a), Some(b)) => Some((a, b)),
            _ => None,
        })
        .collect();
    if pairs.is_empty() {
        return ReplicationSummary {
            ratio_of_mean_sharpes: None,
            ratio_se: None,
            mean_path_ratio: None,
        };
    }
    let n = pairs.len() as f64;
    let mean_is = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_oos = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let ratio = (mean_is != 0.0).then_some(mean_oos / mean_is);
    let ratio_se = if pairs.len() >= 2 && mean_is != 0.0 {
        let mut v_is = 0.0;
        let mut v_oos = 0.0;
        let mut cov = 0.0;
        for &(a, b) in &pairs {
            v_is += (a - mean_is) * (a - mean_is);
            v_oos += (b - mean_oos) * (b - mean_oos);
            cov += (a - mean_is) * (b - mean_oos);
        }
        v_is /= n - 1.0;
        v_oos /= n - 1.0;
        cov /= n - 1.0;
        let var = (v_oos / (mean_is * mean_is)
            + mean_oos * mean_oos * v_is / mean_is.powi(4)
            - 2.0 * mean_oos * cov / mean_is.powi(3))
            / n;
        (var > 0.0).then(|| var.sqrt())
    } else {
        None
    };
    let path_ratios: Vec<f64> = pairs
        .iter()
        .filter(|(a, _)| a.abs() > 1e-12)
        .map(|(a, b)| b / a)
        .collect();
    let mean_path_ratio =
        (!path_ratios.is_empty()).then(|| path_ratios.iter().sum::<f64>() / path_ratios.len() as f64);
    ReplicationSummary { ratio_of_mean_sharpes: ratio, ratio_se, mean_path_ratio }
}

/// Simulate, fit, and backtest `n_paths` independent paths of `t1 + t2`
/// steps, aggregating in-sample and out-of-sample statistics with standard
/// errors and attaching the analytic prediction.
pub fn monte_carlo_experiment(
    spec: &ModelSpec,
    window: &BacktestWindow,
    config: &SimulationConfig,
    fit: &FitMethod,
    cov: CovSource,
) -> Result<ExperimentResult, SimulationError> {
    config.validate()?;
    let t1 = window.t1;
    let total = window.total();
    let true_z = spec.weight_matrix()?;

    let outcomes: Vec<PathOutcome> = (0..config.n_paths as u64)
        .into_par_iter()
        .map(|path| -> Result<PathOutcome, SimulationError> {
            let signals =
                simulate_signals(&spec.mu_s, &spec.sigma_s, spec.has_intercept, total, config, path)?;
            let returns = simulate_returns(spec, &signals, config, path)?;
            let is_signals = signals.columns(0, t1).into_owned();
            let is_returns = returns.columns(0, t1).into_owned();
            let oos_signals = signals.columns(t1, total - t1).into_owned();
            let oos_returns = returns.columns(t1, total - t1).into_owned();

            let data = StackedData::new(is_returns, is_signals)?;
            let fitted = match fit {
                FitMethod::Ols => ols_fit(&data),
                FitMethod::Ridge(gamma) => ridge_fit(&data, *gamma),
                FitMethod::Panel(grouping) => panel_fit(&data, grouping),
            };
            let fitted = match fitted {
                Ok(f) => f,
                Err(EstimationError::RankDeficient(_)) => return Ok(PathOutcome::SingularFit),
                Err(e) => return Err(e.into()),
            };
            let z = match cov {
                CovSource::TrueCov => true_z.clone(),
                CovSource::EstimatedCov => {
                    let sigma_hat = sample_covariance(&fitted.residuals, false)?;
                    let regularized = shrink_covariance(&sigma_hat, t1.saturating_sub(1).max(1))?;
                    match linalg::spd_inverse(&regularized) {
                        Some(inv) => inv,
                        None => return Ok(PathOutcome::SingularFit),
                    }
                }
            };
            let (_, is_stats) = run_backtest(&fitted.beta_hat, &z, &data.signals, &data.returns)?;
            let (_, oos_stats) = run_backtest(&fitted.beta_hat, &z, &oos_signals, &oos_returns)?;
            Ok(PathOutcome::Fitted(PathRecord { is: is_stats, oos: oos_stats }))
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut records = Vec::with_capacity(outcomes.len());
    let mut singular_paths = 0usize;
    for outcome in outcomes {
        match outcome {
            PathOutcome::Fitted(r) => records.push(r),
            PathOutcome::SingularFit => singular_paths += 1,
        }
    }

    let (is_aggregate, is_q) = aggregate_period(&records, false);
    let (oos_aggregate, oos_q) = aggregate_period(&records, true);
    let degenerate = records
        .iter()
        .map(|r| usize::from(r.is.sharpe.is_none()) + usize::from(r.oos.sharpe.is_none()))
        .sum();
    let replication = replication_summary(&records);
    let analytic = analytic_report(spec, window, EpsilonPolicy::DroppedZero, 1.0).ok();
    let (analytic_moments, analytic_sharpes) = match analytic {
        Some((m, s)) => (Some(m), Some(s)),
        None => (None, None),
    };

    Ok(ExperimentResult {
        analytic_moments,
        analytic_sharpes,
        is_aggregate,
        oos_aggregate,
        replication,
        is_sharpe_quantiles: is_q,
        oos_sharpe_quantiles: oos_q,
        n_paths: config.n_paths,
        singular_paths,
        degenerate_sharpe_paths: degenerate,
        records,
    })
}

/// Monte-Carlo estimate of the dropped epsilon term: simulated expected
/// in-sample variance minus the closed form with epsilon = 0.
#[derive(Debug, Clone, Serialize)]
pub struct EpsilonEstimate {
    pub epsilon: f64,
    pub se: Option<f64>,
    /// Epsilon as a percentage of the in-sample variance.
    pub pct_of_is_var: f64,
}

pub fn estimate_epsilon(
    spec: &ModelSpec,
    window: &BacktestWindow,
    n_paths: usize,
    rng_seed: u64,
) -> Result<EpsilonEstimate, SimulationError> {
    if n_paths == 0 {
        return Err(SimulationError::InvalidConfig("n_paths must be positive".into()));
    }
    if !in_special_domain(spec) {
        return Err(SimulationError::InvalidConfig(
            "epsilon estimation requires the special-case domain".into(),
        ));
    }
    let config = SimulationConfig::gaussian_iid(n_paths, rng_seed);
    let result = monte_carlo_experiment(spec, window, &config, &FitMethod::Ols, CovSource::TrueCov)?;
    let analytic = expected_moments_special(spec, window, EpsilonPolicy::DroppedZero)?;
    let epsilon = result.is_aggregate.mean_variance - analytic.is_var;
    Ok(EpsilonEstimate {
        epsilon,
        se: result.is_aggregate.mean_variance_se,
        pct_of_is_var: 100.0 * epsilon / analytic.is_var,
    })
}

/// Difference between the mean per-path Sharpe ratio and the
/// ratio-of-expectations approximation, estimated from one path set.
#[derive(Debug, Clone, Serialize)]
pub struct ConvexityGap {
    pub is_gap: f64,
    pub oos_gap: f64,
    /// Standard error of the mean-Sharpe component; `None` for a single path.
    pub is_gap_se: Option<f64>,
    pub oos_gap_se: Option<f64>,
}

pub fn convexity_gap(
    spec: &ModelSpec,
    window: &BacktestWindow,
    n_paths: usize,
    rng_seed: u64,
) -> Result<ConvexityGap, SimulationError> {
    let config = SimulationConfig::gaussian_iid(n_paths, rng_seed);
    let result = monte_carlo_experiment(spec, window, &config, &FitMethod::Ols, CovSource::TrueCov)?;
    let need = |v: Option<f64>, what: &str| {
        v.ok_or_else(|| SimulationError::InvalidConfig(format!("{what} undefined")))
    };
    let is_gap = need(result.is_aggregate.mean_sharpe, "in-sample mean Sharpe")?
        - need(result.is_aggregate.sharpe_of_means, "in-sample ratio of expectations")?;
    let oos_gap = need(result.oos_aggregate.mean_sharpe, "out-of-sample mean Sharpe")?
        - need(result.oos_aggregate.sharpe_of_means, "out-of-sample ratio of expectations")?;
    Ok(ConvexityGap {
        is_gap,
        oos_gap,
        is_gap_se: result.is_aggregate.mean_sharpe_se,
        oos_gap_se: result.oos_aggregate.mean_sharpe_se,
    })
}
