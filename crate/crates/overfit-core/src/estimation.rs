//! Fitting and preprocessing: OLS, ridge and pooled (panel) regression,
//! sample covariance, trace-preserving shrinkage, signal standardization and
//! whitening.
//!
//! Sample statistics use the unbiased T-1 denominator throughout.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::linalg;

#[derive(Debug, Error)]
pub enum EstimationError {
    #[error("insufficient data: need at least {required} observations, got {actual}")]
    InsufficientData { required: usize, actual: usize },
    #[error("rank-deficient design: {0}")]
    RankDeficient(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("signal row {0} has zero variance")]
    ZeroVarianceRow(usize),
    #[error("matrix is not symmetric")]
    NotSymmetric,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("date mismatch at row {index}: returns file has {returns_date:?}, signals file has {signals_date:?}")]
    DateMismatch { index: usize, returns_date: String, signals_date: String },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse: {0}")]
    Parse(String),
}

/// Returns stacked as `m x T` next to signals stacked as `p x T`.
/// Column `t` of `returns` is the return realized over `(t, t+1]`, already
/// aligned with the predicting signal in column `t` of `signals`.
#[derive(Debug, Clone)]
pub struct StackedData {
    pub returns: DMatrix<f64>,
    pub signals: DMatrix<f64>,
}

impl StackedData {
    pub fn new(returns: DMatrix<f64>, signals: DMatrix<f64>) -> Result<Self, EstimationError> {
        if returns.ncols() != signals.ncols() {
            return Err(EstimationError::DimensionMismatch(format!(
                "returns span {} steps but signals span {}",
                returns.ncols(),
                signals.ncols()
            )));
        }
        Ok(Self { returns, signals })
    }

    pub fn n_assets(&self) -> usize {
        self.returns.nrows()
    }

    pub fn n_signals(&self) -> usize {
        self.signals.nrows()
    }

    pub fn n_steps(&self) -> usize {
        self.signals.ncols()
    }

    /// View of the first `t` steps.
    pub fn window(&self, from: usize, to: usize) -> StackedData {
        StackedData {
            returns: self.returns.columns(from, to - from).into_owned(),
            signals: self.signals.columns(from, to - from).into_owned(),
        }
    }
}

/// Estimated coefficients with the fitted residual matrix `R - beta_hat S`.
#[derive(Debug, Clone)]
pub struct FittedModel {
    pub beta_hat: DMatrix<f64>,
    pub residuals: DMatrix<f64>,
}

/// Exactly degenerate rows (zero or pairwise collinear) read off the Gram
/// matrix, whose entries are the pairwise dot products.
fn find_exact_collinearity(gram: &DMatrix<f64>) -> Option<String> {
    let p = gram.nrows();
    for i in 0..p {
        if gram[(i, i)] <= 0.0 {
            return Some(format!("signal row {i} is identically zero"));
        }
    }
    for i in 0..p {
        for j in (i + 1)..p {
            let cos = gram[(i, j)].abs() / (gram[(i, i)] * gram[(j, j)]).sqrt();
            if (cos - 1.0).abs() < 1e-12 {
                return Some(format!("signal rows {i} and {j} are collinear"));
            }
        }
    }
    None
}

/// Solve `gram X = rhs`. Exact pairwise collinearity is an error; otherwise a
/// jitter escalation handles near-collinear empirical signals before giving
/// up.
fn solve_gram(gram: &DMatrix<f64>, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>, EstimationError> {
    if let Some(msg) = find_exact_collinearity(gram) {
        return Err(EstimationError::RankDeficient(msg));
    }
    linalg::spd_solve_with_jitter(gram, rhs)
        .map(|(x, _)| x)
        .ok_or_else(|| {
            EstimationError::RankDeficient("signal Gram matrix is singular".into())
        })
}

/// OLS estimator `beta_hat = R S^T (S S^T)^{-1}`.
pub fn ols_fit(data: &StackedData) -> Result<FittedModel, EstimationError> {
    let (p, t) = (data.n_signals(), data.n_steps());
    if t < p {
        return Err(EstimationError::InsufficientData { required: p, actual: t });
    }
    let s = &data.signals;
    let gram = s * s.transpose();
    let rhs = s * data.returns.transpose();
    let beta_hat = solve_gram(&gram, &rhs)?.transpose();
    let residuals = &data.returns - &beta_hat * s;
    Ok(FittedModel { beta_hat, residuals })
}

/// Ridge estimator `beta_hat = R S^T (S S^T + gamma T I)^{-1}`.
///
/// The penalty is scaled by the sample count so a fixed `gamma` has a
/// comparable effect across sample sizes; with unit-variance signals the Gram
/// matrix grows like `T I`, so `gamma = 0.1` shrinks by roughly 10%.
pub fn ridge_fit(data: &StackedData, gamma: f64) -> Result<FittedModel, EstimationError> {
    if gamma < 0.0 {
        return Err(EstimationError::InvalidParameter(format!(
            "ridge penalty must be non-negative, got {gamma}"
        )));
    }
    if gamma == 0.0 {
        return ols_fit(data);
    }
    let (p, t) = (data.n_signals(), data.n_steps());
    let s = &data.signals;
    let mut gram = s * s.transpose();
    let ridge = gamma * t as f64;
    for i in 0..p {
        gram[(i, i)] += ridge;
    }
    let rhs = s * data.returns.transpose();
    let beta_hat = nalgebra::Cholesky::new(gram)
        .map(|c| c.solve(&rhs))
        .ok_or_else(|| {
            EstimationError::RankDeficient("ridge system is singular".into())
        })?
        .transpose();
    let residuals = &data.returns - &beta_hat * s;
    Ok(FittedModel { beta_hat, residuals })
}

/// Where a `(asset, signal)` coefficient lives in the pooled design.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoeffAssignment {
    /// Tied to the shared coefficient with this index.
    Group(usize),
    /// Structurally zero (for example another asset's own signal).
    Zero,
}

/// Mapping from every `(asset, signal)` pair to a pooled coefficient.
#[derive(Debug, Clone)]
pub struct PanelGrouping {
    /// `assign[asset][signal]`.
    pub assign: Vec<Vec<CoeffAssignment>>,
    pub n_groups: usize,
}

impl PanelGrouping {
    /// Every pair its own group: the pooled fit reduces to plain OLS.
    pub fn singleton(m: usize, p: usize) -> Self {
        let assign = (0..m)
            .map(|i| (0..p).map(|j| CoeffAssignment::Group(i * p + j)).collect())
            .collect();
        Self { assign, n_groups: m * p }
    }

    /// One tied coefficient per signal, shared across all assets.
    pub fn one_group_per_signal(m: usize, p: usize) -> Self {
        let assign = (0..m)
            .map(|_| (0..p).map(CoeffAssignment::Group).collect())
            .collect();
        Self { assign, n_groups: p }
    }

    /// Cross-sectional layout: signal column 0 is an optional intercept with
    /// one group per asset, followed by `m` blocks of `n_families` per-asset
    /// signals. Asset `i` loads only on its own block, with one shared
    /// coefficient per family; everything else is structurally zero.
    pub fn cross_sectional(m: usize, n_families: usize, has_intercept: bool) -> Self {
        let offset = usize::from(has_intercept);
        let p = offset + m * n_families;
        let intercept_groups = if has_intercept { m } else { 0 };
        let mut assign = vec![vec![CoeffAssignment::Zero; p]; m];
        for (i, row) in assign.iter_mut().enumerate() {
            if has_intercept {
                row[0] = CoeffAssignment::Group(i);
            }
            for f in 0..n_families {
                row[offset + i * n_families + f] =
                    CoeffAssignment::Group(intercept_groups + f);
            }
        }
        Self { assign, n_groups: intercept_groups + n_families }
    }

    fn validate(&self, m: usize, p: usize) -> Result<(), EstimationError> {
        if self.assign.len() != m || self.assign.iter().any(|r| r.len() != p) {
            return Err(EstimationError::DimensionMismatch(
                "grouping shape does not match (assets, signals)".into(),
            ));
        }
        for row in &self.assign {
            for a in row {
                if let CoeffAssignment::Group(g) = a {
                    if *g >= self.n_groups {
                        return Err(EstimationError::InvalidParameter(format!(
                            "group index {g} out of range (n_groups = {})",
                            self.n_groups
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Pooled least squares with coefficients tied per group, expanded back to an
/// `m x p` matrix (structural zeros stay zero).
pub fn panel_fit(
    data: &StackedData,
    grouping: &PanelGrouping,
) -> Result<FittedModel, EstimationError> {
    let (m, p, t) = (data.n_assets(), data.n_signals(), data.n_steps());
    grouping.validate(m, p)?;
    let k = grouping.n_groups;
    let mut normal = DMatrix::<f64>::zeros(k, k);
    let mut rhs = DVector::<f64>::zeros(k);
    let mut x = DVector::<f64>::zeros(k);
    for step in 0..t {
        let s_col = data.signals.column(step);
        for asset in 0..m {
            x.fill(0.0);
            for (j, a) in grouping.assign[asset].iter().enumerate() {
                if let CoeffAssignment::Group(g) = a {
                    x[*g] += s_col[j];
                }
            }
            let r = data.returns[(asset, step)];
            for gi in 0..k {
                let xi = x[gi];
                if xi == 0.0 {
                    continue;
                }
                rhs[gi] += xi * r;
                for gj in 0..k {
                    normal[(gi, gj)] += xi * x[gj];
                }
            }
        }
    }
    let coeffs = nalgebra::Cholesky::new(normal)
        .map(|c| c.solve(&rhs))
        .ok_or_else(|| {
            EstimationError::RankDeficient("pooled design has deficient rank".into())
        })?;
    let mut beta_hat = DMatrix::<f64>::zeros(m, p);
    for i in 0..m {
        for j in 0..p {
            if let CoeffAssignment::Group(g) = grouping.assign[i][j] {
                beta_hat[(i, j)] = coeffs[g];
            }
        }
    }
    let residuals = &data.returns - &beta_hat * &data.signals;
    Ok(FittedModel { beta_hat, residuals })
}

/// Unbiased sample covariance of `d x T` data (T-1 denominator).
pub fn sample_covariance(x: &DMatrix<f64>, demean: bool) -> Result<DMatrix<f64>, EstimationError> {
    let t = x.ncols();
    if t < 2 {
        return Err(EstimationError::InsufficientData { required: 2, actual: t });
    }
    let centred;
    let data = if demean {
        let mut c = x.clone();
        for mut row in c.row_iter_mut() {
            let mean = row.iter().sum::<f64>() / t as f64;
            row.iter_mut().for_each(|v| *v -= mean);
        }
        centred = c;
        &centred
    } else {
        x
    };
    Ok(linalg::symmetrize(&((data * data.transpose()) / (t as f64 - 1.0))))
}

/// Trace-preserving linear shrinkage for rank-deficient sample covariances.
///
/// With `q = m / t_eff`: below one the estimate is used directly; above one
/// the output is `(1/q) sigma_hat + (1 - 1/q) lambda_bar I` where
/// `lambda_bar = tr(sigma_hat)/m`, preserving the trace exactly.
pub fn shrink_covariance(
    sigma_hat: &DMatrix<f64>,
    t_eff: usize,
) -> Result<DMatrix<f64>, EstimationError> {
    if !linalg::is_symmetric(sigma_hat, 1e-9) {
        return Err(EstimationError::NotSymmetric);
    }
    if t_eff == 0 {
        return Err(EstimationError::InvalidParameter("t_eff must be positive".into()));
    }
    let m = sigma_hat.nrows();
    let q = m as f64 / t_eff as f64;
    if q <= 1.0 {
        return Ok(sigma_hat.clone());
    }
    let alpha = 1.0 / q;
    let lambda_bar = sigma_hat.trace() / m as f64;
    let mut out = sigma_hat * alpha;
    let ridge = (1.0 - alpha) * lambda_bar;
    for i in 0..m {
        out[(i, i)] += ridge;
    }
    Ok(out)
}

/// Per-row centring/scaling parameters, kept for out-of-sample application.
#[derive(Debug, Clone, Copy)]
pub struct RowTransform {
    pub mean: f64,
    pub std: f64,
}

impl RowTransform {
    pub fn apply(&self, v: f64) -> f64 {
        (v - self.mean) / self.std
    }

    pub fn invert(&self, v: f64) -> f64 {
        v * self.std + self.mean
    }
}

/// Rescale each signal row to mean zero and unit sample standard deviation.
/// Intercept rows must be excluded by the caller: a constant has no scale.
pub fn standardize_signals(
    s: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, Vec<RowTransform>), EstimationError> {
    let t = s.ncols();
    if t < 2 {
        return Err(EstimationError::InsufficientData { required: 2, actual: t });
    }
    let mut out = s.clone();
    let mut transforms = Vec::with_capacity(s.nrows());
    for (i, mut row) in out.row_iter_mut().enumerate() {
        let mean = row.iter().sum::<f64>() / t as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (t as f64 - 1.0);
        if var <= 0.0 {
            return Err(EstimationError::ZeroVarianceRow(i));
        }
        let std = var.sqrt();
        row.iter_mut().for_each(|v| *v = (*v - mean) / std);
        transforms.push(RowTransform { mean, std });
    }
    Ok((out, transforms))
}

/// Centring plus the inverse-Cholesky map taking the sample covariance to I.
#[derive(Debug, Clone)]
pub struct Whitening {
    pub whitened: DMatrix<f64>,
    /// `p x p` transform applied after centring.
    pub transform: DMatrix<f64>,
    pub means: DVector<f64>,
}

impl Whitening {
    /// Apply the stored centring and transform to new columns.
    pub fn apply(&self, s: &DMatrix<f64>) -> DMatrix<f64> {
        let mut centred = s.clone();
        for (i, mut row) in centred.row_iter_mut().enumerate() {
            row.iter_mut().for_each(|v| *v -= self.means[i]);
        }
        &self.transform * centred
    }
}

/// Whiten signal rows using a Cholesky factor of their sample covariance.
pub fn whiten_signals(s: &DMatrix<f64>) -> Result<Whitening, EstimationError> {
    let (p, t) = (s.nrows(), s.ncols());
    if t < 2 {
        return Err(EstimationError::InsufficientData { required: 2, actual: t });
    }
    let mut centred = s.clone();
    let mut means = DVector::zeros(p);
    for (i, mut row) in centred.row_iter_mut().enumerate() {
        let mean = row.iter().sum::<f64>() / t as f64;
        means[i] = mean;
        row.iter_mut().for_each(|v| *v -= mean);
    }
    let cov = linalg::symmetrize(&((&centred * centred.transpose()) / (t as f64 - 1.0)));
    let eye = DMatrix::identity(p, p);
    let singular = || {
        EstimationError::RankDeficient(
            "signal sample covariance is singular; remove collinear or constant signals".into(),
        )
    };
    let chol = nalgebra::Cholesky::new(cov.clone()).ok_or_else(singular)?;
    let transform = chol
        .l()
        .solve_lower_triangular(&eye)
        .ok_or_else(singular)?;
    // Guard against silently passing a numerically defective factorization.
    let check = &transform * &cov * transform.transpose();
    let max_dev = (check - &eye).amax();
    if max_dev > 1e-8 {
        return Err(singular());
    }
    let whitened = &transform * centred;
    Ok(Whitening { whitened, transform, means })
}

/// Diagonal of the hat matrix `S^T (S S^T)^{-1} S`.
pub fn hat_diagonal(signals: &DMatrix<f64>) -> Result<DVector<f64>, EstimationError> {
    let (p, t) = (signals.nrows(), signals.ncols());
    if t < p {
        return Err(EstimationError::InsufficientData { required: p, actual: t });
    }
    let gram = signals * signals.transpose();
    let solved = solve_gram(&gram, signals)?;
    let mut h = DVector::zeros(t);
    for t_idx in 0..t {
        h[t_idx] = signals.column(t_idx).dot(&solved.column(t_idx));
    }
    Ok(h)
}

/// `E[h_tt] = p / T` for iid centred Gaussian designs.
pub fn hat_diag_mean(p: usize, t: usize) -> f64 {
    p as f64 / t as f64
}

/// `E[h_tt^2]` for iid Gaussian designs: the Beta moment without an
/// intercept, with a correction term when column one is a constant.
pub fn hat_diag_second_moment(p: usize, t: usize, intercept: bool) -> f64 {
    let (pf, tf) = (p as f64, t as f64);
    let base = pf * (pf + 2.0) / (tf * (tf + 2.0));
    if intercept {
        base - 2.0 * (tf - pf) * (tf - pf + 2.0) / (tf * tf * (tf + 1.0) * (tf + 2.0))
    } else {
        base
    }
}

/// Load stacked data from two aligned CSV files. Both carry a leading date
/// column; dates must match row by row under exact string equality. The
/// signal file is expected to be pre-lagged so that same-date columns pair a
/// predictor with the return it predicts.
pub fn load_stacked_csv(
    returns_path: &std::path::Path,
    signals_path: &std::path::Path,
) -> Result<StackedData, EstimationError> {
    let (ret_dates, returns) = read_dated_matrix(returns_path)?;
    let (sig_dates, signals) = read_dated_matrix(signals_path)?;
    if ret_dates.len() != sig_dates.len() {
        return Err(EstimationError::DimensionMismatch(format!(
            "returns file has {} rows, signals file has {}",
            ret_dates.len(),
            sig_dates.len()
        )));
    }
    for (i, (rd, sd)) in ret_dates.iter().zip(&sig_dates).enumerate() {
        if rd != sd {
            return Err(EstimationError::DateMismatch {
                index: i,
                returns_date: rd.clone(),
                signals_date: sd.clone(),
            });
        }
    }
    StackedData::new(returns, signals)
}

/// Read a dates-by-columns CSV into a (columns x T) matrix.
fn read_dated_matrix(
    path: &std::path::Path,
) -> Result<(Vec<String>, DMatrix<f64>), EstimationError> {
    let mut reader = csv::Reader::from_path(path)?;
    let width = reader.headers()?.len();
    if width < 2 {
        return Err(EstimationError::Parse(format!(
            "{} must have a date column plus at least one value column",
            path.display()
        )));
    }
    let d = width - 1;
    let mut dates = Vec::new();
    let mut values: Vec<f64> = Vec::new();
    for record in reader.records() {
        let record = record?;
        if record.len() != width {
            return Err(EstimationError::Parse(format!(
                "ragged row {} in {}",
                dates.len() + 1,
                path.display()
            )));
        }
        dates.push(record[0].to_string());
        for field in record.iter().skip(1) {
            values.push(field.trim().parse::<f64>().map_err(|e| {
                EstimationError::Parse(format!("{}: {e} in field {field:?}", path.display()))
            })?);
        }
    }
    let t = dates.len();
    // values is row-major (t rows, d columns); we want d x T.
    let mut out = DMatrix::zeros(d, t);
    for row in 0..t {
        for col in 0..d {
            out[(col, row)] = values[row * d + col];
        }
    }
    Ok((dates, out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian_matrix(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut rng))
    }

    #[test]
    fn ols_recovers_noiseless_beta() {
        let beta = DMatrix::from_row_slice(2, 2, &[0.5, -0.2, 0.1, 0.9]);
        let signals = gaussian_matrix(2, 50, 1);
        let returns = &beta * &signals;
        let fit = ols_fit(&StackedData::new(returns, signals).unwrap()).unwrap();
        assert!((fit.beta_hat - beta).amax() < 1e-10);
        assert!(fit.residuals.amax() < 1e-10);
    }

    #[test]
    fn ols_rejects_more_signals_than_steps() {
        let data = StackedData::new(gaussian_matrix(1, 3, 2), gaussian_matrix(5, 3, 3)).unwrap();
        assert!(matches!(
            ols_fit(&data),
            Err(EstimationError::InsufficientData { required: 5, actual: 3 })
        ));
    }

    #[test]
    fn ols_is_consistent_at_large_t() {
        let beta = DMatrix::from_row_slice(2, 2, &[0.5, -0.2, 0.1, 0.9]);
        let signals = gaussian_matrix(2, 100_000, 4);
        let noise = gaussian_matrix(2, 100_000, 5);
        let returns = &beta * &signals + noise;
        let fit = ols_fit(&StackedData::new(returns, signals).unwrap()).unwrap();
        assert!((fit.beta_hat - beta).norm() < 0.05);
    }

    #[test]
    fn ols_error_decomposition_identity() {
        // beta_hat - beta = E S^T (S S^T)^{-1} when E is the true noise.
        let beta = DMatrix::from_row_slice(1, 3, &[0.2, -0.4, 0.7]);
        let signals = gaussian_matrix(3, 200, 6);
        let noise = gaussian_matrix(1, 200, 7);
        let returns = &beta * &signals + &noise;
        let fit = ols_fit(&StackedData::new(returns, signals.clone()).unwrap()).unwrap();
        let gram = &signals * signals.transpose();
        let expected = &noise
            * signals.transpose()
            * nalgebra::Cholesky::new(gram).unwrap().inverse();
        assert!((fit.beta_hat - beta - expected).amax() < 1e-10);
    }

    #[test]
    fn ols_names_collinear_rows() {
        let mut signals = gaussian_matrix(3, 40, 8);
        let dup = signals.row(0).into_owned();
        signals.set_row(2, &dup);
        let data = StackedData::new(gaussian_matrix(1, 40, 9), signals).unwrap();
        match ols_fit(&data) {
            Err(EstimationError::RankDeficient(msg)) => {
                assert!(msg.contains('0') && msg.contains('2'), "got {msg}");
            }
            // Jitter may rescue the solve; acceptable only if it did not.
            other => panic!("expected rank deficiency, got {other:?}"),
        }
    }

    #[test]
    fn ridge_zero_penalty_equals_ols() {
        let data =
            StackedData::new(gaussian_matrix(2, 120, 10), gaussian_matrix(3, 120, 11)).unwrap();
        let ols = ols_fit(&data).unwrap();
        let ridge = ridge_fit(&data, 0.0).unwrap();
        assert!((ols.beta_hat - ridge.beta_hat).amax() < 1e-12);
    }

    #[test]
    fn ridge_infinite_penalty_kills_beta() {
        let data =
            StackedData::new(gaussian_matrix(2, 120, 12), gaussian_matrix(3, 120, 13)).unwrap();
        let fit = ridge_fit(&data, 1e12).unwrap();
        assert!(fit.beta_hat.amax() < 1e-6);
    }

    #[test]
    fn ridge_shrinks_relative_to_ols() {
        let beta = DMatrix::from_row_slice(2, 3, &[0.3, -0.1, 0.2, 0.0, 0.4, -0.3]);
        let signals = gaussian_matrix(3, 2520, 14);
        let noise = gaussian_matrix(2, 2520, 15);
        let returns = &beta * &signals + noise;
        let data = StackedData::new(returns, signals).unwrap();
        let ols = ols_fit(&data).unwrap();
        let ridge = ridge_fit(&data, 0.1).unwrap();
        assert!(ridge.beta_hat.norm() < ols.beta_hat.norm());
    }

    #[test]
    fn panel_singleton_grouping_is_ols() {
        let data =
            StackedData::new(gaussian_matrix(2, 150, 16), gaussian_matrix(3, 150, 17)).unwrap();
        let ols = ols_fit(&data).unwrap();
        let panel = panel_fit(&data, &PanelGrouping::singleton(2, 3)).unwrap();
        assert!((ols.beta_hat - panel.beta_hat).amax() < 1e-8);
    }

    #[test]
    fn panel_ties_equal_rows_and_beats_ols_at_small_t() {
        // Two assets share the same true coefficients; pooling halves the
        // parameter count and should estimate them better on short samples.
        let true_row = DMatrix::from_row_slice(1, 3, &[0.25, -0.15, 0.05]);
        let mut beta = DMatrix::zeros(2, 3);
        beta.set_row(0, &true_row.row(0));
        beta.set_row(1, &true_row.row(0));
        let grouping = PanelGrouping::one_group_per_signal(2, 3);
        let mut panel_err = 0.0;
        let mut ols_err = 0.0;
        for seed in 0..40 {
            let signals = gaussian_matrix(3, 30, 100 + seed);
            let noise = gaussian_matrix(2, 30, 200 + seed);
            let returns = &beta * &signals + noise;
            let data = StackedData::new(returns, signals).unwrap();
            let panel = panel_fit(&data, &grouping).unwrap();
            let ols = ols_fit(&data).unwrap();
            let r0 = panel.beta_hat.row(0).into_owned();
            let r1 = panel.beta_hat.row(1).into_owned();
            assert!((r0 - r1).amax() < 1e-12, "tied rows must be equal");
            panel_err += (panel.beta_hat.clone() - beta.clone()).norm();
            ols_err += (ols.beta_hat.clone() - beta.clone()).norm();
        }
        assert!(panel_err < ols_err, "pooled error {panel_err} vs OLS {ols_err}");
    }

    #[test]
    fn cross_sectional_grouping_reduces_parameter_count() {
        // 12 assets, 3 families plus per-asset intercepts: 444 raw entries
        // collapse to 3 shared family coefficients (plus the 12 intercepts).
        let grouping = PanelGrouping::cross_sectional(12, 3, true);
        assert_eq!(grouping.assign.len(), 12);
        assert_eq!(grouping.assign[0].len(), 37);
        assert_eq!(12 * 37, 444);
        assert_eq!(grouping.n_groups, 12 + 3);
        let zero_count = grouping
            .assign
            .iter()
            .flatten()
            .filter(|a| matches!(a, CoeffAssignment::Zero))
            .count();
        assert_eq!(zero_count, 12 * 33);
        // Fitted cross-asset entries stay exactly zero.
        let data = StackedData::new(gaussian_matrix(12, 90, 18), {
            let mut s = gaussian_matrix(37, 90, 19);
            s.row_mut(0).iter_mut().for_each(|v| *v = 1.0);
            s
        })
        .unwrap();
        let fit = panel_fit(&data, &grouping).unwrap();
        for i in 0..12 {
            for j in 0..37 {
                if matches!(grouping.assign[i][j], CoeffAssignment::Zero) {
                    assert_eq!(fit.beta_hat[(i, j)], 0.0);
                }
            }
        }
    }

    #[test]
    fn sample_covariance_of_constants_is_zero() {
        let x = DMatrix::from_element(3, 10, 2.5);
        let c = sample_covariance(&x, true).unwrap();
        assert!(c.amax() < 1e-12);
    }

    #[test]
    fn sample_covariance_two_points() {
        let x = DMatrix::from_row_slice(1, 2, &[1.0, -1.0]);
        let c = sample_covariance(&x, true).unwrap();
        assert_relative_eq!(c[(0, 0)], 2.0);
    }

    #[test]
    fn sample_covariance_converges() {
        let x = gaussian_matrix(2, 40_000, 20);
        let c = sample_covariance(&x, true).unwrap();
        assert!((c - DMatrix::identity(2, 2)).norm() < 0.05);
    }

    #[test]
    fn shrinkage_identity_below_threshold() {
        let sigma = sample_covariance(&gaussian_matrix(3, 50, 21), true).unwrap();
        let out = shrink_covariance(&sigma, 49).unwrap();
        assert_eq!(sigma, out);
    }

    #[test]
    fn shrinkage_preserves_trace_exactly() {
        let x = gaussian_matrix(5, 4, 22);
        let sigma = sample_covariance(&x, false).unwrap();
        let out = shrink_covariance(&sigma, 3).unwrap();
        assert_relative_eq!(out.trace(), sigma.trace(), max_relative = 1e-14);
    }

    #[test]
    fn shrinkage_lifts_smallest_eigenvalue() {
        let x = gaussian_matrix(5, 4, 23);
        let sigma = sample_covariance(&x, false).unwrap();
        let out = shrink_covariance(&sigma, 3).unwrap();
        let q: f64 = 5.0 / 3.0;
        let floor = (1.0 - 1.0 / q) * sigma.trace() / 5.0;
        let (min, _) = crate::linalg::sym_eig_bounds(&out);
        assert!(min >= floor - 1e-12, "min eigenvalue {min} below floor {floor}");
    }

    #[test]
    fn shrinkage_rejects_asymmetry() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, -0.5, 1.0]);
        assert!(matches!(shrink_covariance(&a, 1), Err(EstimationError::NotSymmetric)));
    }

    #[test]
    fn standardize_two_point_row() {
        let s = DMatrix::from_row_slice(1, 2, &[0.0, 2.0]);
        let (out, tr) = standardize_signals(&s).unwrap();
        let r = 1.0 / 2.0_f64.sqrt();
        assert_relative_eq!(out[(0, 0)], -r, max_relative = 1e-12);
        assert_relative_eq!(out[(0, 1)], r, max_relative = 1e-12);
        assert_relative_eq!(tr[0].mean, 1.0);
        assert_relative_eq!(tr[0].std, 2.0_f64.sqrt());
    }

    #[test]
    fn standardize_is_idempotent_and_invertible() {
        let s = gaussian_matrix(3, 500, 24);
        let (once, tr) = standardize_signals(&s).unwrap();
        let (twice, _) = standardize_signals(&once).unwrap();
        assert!((&once - twice).amax() < 1e-10);
        for i in 0..3 {
            for t in 0..500 {
                assert_relative_eq!(tr[i].invert(once[(i, t)]), s[(i, t)], epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn standardize_names_zero_variance_row() {
        let mut s = gaussian_matrix(3, 20, 25);
        s.row_mut(1).iter_mut().for_each(|v| *v = 3.0);
        assert!(matches!(
            standardize_signals(&s),
            Err(EstimationError::ZeroVarianceRow(1))
        ));
    }

    #[test]
    fn whitening_yields_identity_covariance() {
        let mix = DMatrix::from_row_slice(3, 3, &[1.0, 0.8, 0.0, 0.0, 1.0, 0.5, 0.2, 0.0, 1.0]);
        let s = &mix * gaussian_matrix(3, 2000, 26);
        let w = whiten_signals(&s).unwrap();
        let cov = sample_covariance(&w.whitened, true).unwrap();
        assert!((cov - DMatrix::identity(3, 3)).amax() < 1e-8);
    }

    #[test]
    fn whitening_twice_is_identity_transform() {
        let s = gaussian_matrix(2, 300, 27);
        let first = whiten_signals(&s).unwrap();
        let second = whiten_signals(&first.whitened).unwrap();
        assert!((second.transform - DMatrix::identity(2, 2)).amax() < 1e-8);
    }

    #[test]
    fn whitening_rejects_duplicated_rows() {
        let mut s = gaussian_matrix(3, 100, 28);
        let dup = s.row(0).into_owned();
        s.set_row(1, &dup);
        assert!(whiten_signals(&s).is_err());
    }

    #[test]
    fn hat_diagonal_sums_to_p() {
        let s = gaussian_matrix(4, 60, 29);
        let h = hat_diagonal(&s).unwrap();
        assert_relative_eq!(h.sum(), 4.0, max_relative = 1e-10);
        assert!(h.iter().all(|&v| (0.0..=1.0 + 1e-12).contains(&v)));
    }

    #[test]
    fn csv_round_trip_and_date_mismatch() {
        let dir = std::env::temp_dir().join(format!("overfit_csv_{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let ret = dir.join("returns.csv");
        let sig = dir.join("signals.csv");
        std::fs::write(&ret, "date,a1,a2\n2020-01-01,0.1,0.2\n2020-01-02,-0.1,0.0\n").unwrap();
        std::fs::write(&sig, "date,s1\n2020-01-01,1.5\n2020-01-02,-0.5\n").unwrap();
        let data = load_stacked_csv(&ret, &sig).unwrap();
        assert_eq!(data.n_assets(), 2);
        assert_eq!(data.n_signals(), 1);
        assert_eq!(data.n_steps(), 2);
        assert_relative_eq!(data.returns[(1, 0)], 0.2);
        assert_relative_eq!(data.signals[(0, 1)], -0.5);

        std::fs::write(&sig, "date,s1\n2020-01-01,1.5\n2020-01-03,-0.5\n").unwrap();
        match load_stacked_csv(&ret, &sig) {
            Err(EstimationError::DateMismatch { index, returns_date, signals_date }) => {
                assert_eq!(index, 1);
                assert_eq!(returns_date, "2020-01-02");
                assert_eq!(signals_date, "2020-01-03");
            }
            other => panic!("expected date mismatch, got {other:?}"),
        }
        std::fs::remove_dir_all(&dir).ok();
    }
}
