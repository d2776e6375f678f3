//! Domain types for the generative model: regression parameter, signal and
//! residual covariances, portfolio weight rule, and the backtest window.
//!
//! The model is `r_{t+1} = beta s_t + eps_{t+1}` with iid Gaussian signals
//! `s_t ~ N(mu_s, sigma_s)` and residuals `eps ~ N(0, sigma_eps)`, traded
//! through the linear portfolio `w_t = Z beta_hat s_t`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg;

/// Relative tolerance for the scale-free positive-definiteness test:
/// smallest eigenvalue must exceed `PD_REL_TOL * largest`.
pub const PD_REL_TOL: f64 = 1e-10;

/// Symmetry tolerance for validation checks.
const SYM_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("residual covariance not invertible")]
    SingularResidualCovariance,
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("invalid window: {0}")]
    InvalidWindow(String),
    #[error("model json: {0}")]
    Json(#[from] serde_json::Error),
}

/// Choice of the symmetric weight matrix `Z` in `w_t = Z beta s_t`.
#[derive(Debug, Clone, PartialEq)]
pub enum WeightRule {
    /// Markowitz: `Z = sigma_eps^{-1}`.
    Precision,
    /// Inverse variance per asset: `Z = diag(sigma_eps)^{-1}`.
    DiagInverse,
    /// Risk indifferent: `Z = I`.
    Identity,
    /// Arbitrary symmetric matrix supplied by the caller.
    Custom(DMatrix<f64>),
}

/// Full generative model specification.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    /// Regression parameter, `m x p` (PnL units per unit signal).
    pub beta: DMatrix<f64>,
    /// Signal mean, length `p`. All zeros, except a leading 1 when the model
    /// has an intercept.
    pub mu_s: DVector<f64>,
    /// Signal covariance, `p x p`, symmetric PSD. The intercept row/column
    /// (when present) is zero: the constant signal does not vary.
    pub sigma_s: DMatrix<f64>,
    /// Residual covariance, `m x m`, symmetric PD.
    pub sigma_eps: DMatrix<f64>,
    pub weight_rule: WeightRule,
    pub has_intercept: bool,
}

/// Derived matrices entering every moment formula:
/// `G = beta^T Z beta`, `F = beta^T Z sigma_eps Z beta`,
/// `Gamma = beta^T sigma_eps^{-1} beta`.
#[derive(Debug, Clone)]
pub struct DerivedMatrices {
    pub g: DMatrix<f64>,
    pub f: DMatrix<f64>,
    pub gamma: DMatrix<f64>,
}

/// In-sample / out-of-sample step counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BacktestWindow {
    pub t1: usize,
    pub t2: usize,
}

impl BacktestWindow {
    pub fn new(t1: usize, t2: usize) -> Result<Self, ModelError> {
        if t1 < 1 {
            return Err(ModelError::InvalidWindow("t1 must be positive".into()));
        }
        if t2 < 1 {
            return Err(ModelError::InvalidWindow("t2 must be positive".into()));
        }
        Ok(Self { t1, t2 })
    }

    /// The moment formulas divide by `T1 - p - 1`; reject degenerate windows.
    pub fn validate_for(&self, p: usize) -> Result<(), ModelError> {
        if self.t1 <= p + 1 {
            return Err(ModelError::InvalidWindow(format!(
                "degenerate window: t1={} must exceed p+1={}",
                self.t1,
                p + 1
            )));
        }
        Ok(())
    }

    pub fn total(&self) -> usize {
        self.t1 + self.t2
    }
}

/// One validation check with a human-readable diagnostic.
#[derive(Debug, Clone, Serialize)]
pub struct ValidationCheck {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Report-style validation output: one entry per invariant.
#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<ValidationCheck>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> Vec<&ValidationCheck> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }

    fn push(&mut self, name: &'static str, passed: bool, detail: String) {
        self.checks.push(ValidationCheck { name, passed, detail });
    }
}

impl ModelSpec {
    /// Build a spec, checking dimensional consistency only. Run
    /// [`validate_model`] for the full invariant report.
    pub fn new(
        beta: DMatrix<f64>,
        mu_s: DVector<f64>,
        sigma_s: DMatrix<f64>,
        sigma_eps: DMatrix<f64>,
        weight_rule: WeightRule,
        has_intercept: bool,
    ) -> Result<Self, ModelError> {
        let (m, p) = beta.shape();
        if mu_s.len() != p {
            return Err(ModelError::DimensionMismatch(format!(
                "mu_s has length {}, expected p={}",
                mu_s.len(),
                p
            )));
        }
        if sigma_s.shape() != (p, p) {
            return Err(ModelError::DimensionMismatch(format!(
                "sigma_s is {:?}, expected {}x{}",
                sigma_s.shape(),
                p,
                p
            )));
        }
        if sigma_eps.shape() != (m, m) {
            return Err(ModelError::DimensionMismatch(format!(
                "sigma_eps is {:?}, expected {}x{}",
                sigma_eps.shape(),
                m,
                m
            )));
        }
        if let WeightRule::Custom(z) = &weight_rule {
            if z.shape() != (m, m) {
                return Err(ModelError::DimensionMismatch(format!(
                    "custom Z is {:?}, expected {}x{}",
                    z.shape(),
                    m,
                    m
                )));
            }
        }
        Ok(Self { beta, mu_s, sigma_s, sigma_eps, weight_rule, has_intercept })
    }

    /// Number of assets `m`.
    pub fn n_assets(&self) -> usize {
        self.beta.nrows()
    }

    /// Number of signals `p` (including the intercept when present).
    pub fn n_signals(&self) -> usize {
        self.beta.ncols()
    }

    /// Materialize the weight matrix `Z`.
    pub fn weight_matrix(&self) -> Result<DMatrix<f64>, ModelError> {
        let m = self.n_assets();
        match &self.weight_rule {
            WeightRule::Precision => linalg::spd_inverse(&self.sigma_eps)
                .ok_or(ModelError::SingularResidualCovariance),
            WeightRule::DiagInverse => {
                let mut z = DMatrix::zeros(m, m);
                for i in 0..m {
                    let v = self.sigma_eps[(i, i)];
                    if v <= 0.0 {
                        return Err(ModelError::SingularResidualCovariance);
                    }
                    z[(i, i)] = 1.0 / v;
                }
                Ok(z)
            }
            WeightRule::Identity => Ok(DMatrix::identity(m, m)),
            WeightRule::Custom(z) => Ok(z.clone()),
        }
    }

    pub fn to_json(&self) -> Result<String, ModelError> {
        Ok(serde_json::to_string_pretty(&ModelSpecWire::from(self))?)
    }

    pub fn from_json(json: &str) -> Result<Self, ModelError> {
        let wire: ModelSpecWire = serde_json::from_str(json)?;
        wire.try_into()
    }
}

/// Check every model invariant; never errors, failures are reported entries.
pub fn validate_model(spec: &ModelSpec) -> ValidationReport {
    let mut report = ValidationReport { checks: Vec::new() };
    let p = spec.n_signals();

    report.push(
        "dimensions",
        true,
        format!("m={}, p={}", spec.n_assets(), p),
    );

    let ss_sym = linalg::is_symmetric(&spec.sigma_s, SYM_TOL);
    report.push("sigma_s symmetric", ss_sym, String::new());
    if ss_sym {
        let (min, max) = linalg::sym_eig_bounds(&spec.sigma_s);
        let ok = min >= -PD_REL_TOL * max.max(1.0);
        report.push(
            "sigma_s positive semidefinite",
            ok,
            format!("eigenvalues in [{min:.3e}, {max:.3e}]"),
        );
    }

    let se_sym = linalg::is_symmetric(&spec.sigma_eps, SYM_TOL);
    report.push("sigma_eps symmetric", se_sym, String::new());
    if se_sym {
        let (min, max) = linalg::sym_eig_bounds(&spec.sigma_eps);
        let ok = min > PD_REL_TOL * max.abs();
        report.push(
            "sigma_eps positive definite",
            ok,
            if ok {
                format!("eigenvalues in [{min:.3e}, {max:.3e}]")
            } else {
                format!("not positive definite: eigenvalues in [{min:.3e}, {max:.3e}]")
            },
        );
    }

    if let WeightRule::Custom(z) = &spec.weight_rule {
        report.push(
            "custom Z symmetric",
            linalg::is_symmetric(z, SYM_TOL),
            String::new(),
        );
    }

    if spec.has_intercept {
        let mean_ok = p >= 1 && (spec.mu_s[0] - 1.0).abs() <= 1e-12;
        report.push(
            "intercept mean",
            mean_ok,
            if mean_ok { String::new() } else { "intercept mean must be 1".into() },
        );
        let rest_ok = spec.mu_s.iter().skip(1).all(|&v| v.abs() <= 1e-12);
        report.push(
            "non-intercept signals centred",
            rest_ok,
            if rest_ok { String::new() } else { "mu_s must vanish beyond the intercept".into() },
        );
        let zero_rowcol = (0..p).all(|j| {
            spec.sigma_s[(0, j)].abs() <= 1e-12 && spec.sigma_s[(j, 0)].abs() <= 1e-12
        });
        report.push(
            "intercept variance zero",
            zero_rowcol,
            if zero_rowcol {
                String::new()
            } else {
                "sigma_s row/column 1 must be zero for the constant signal".into()
            },
        );
    } else {
        let centred = spec.mu_s.iter().all(|&v| v.abs() <= 1e-12);
        report.push(
            "signals centred",
            centred,
            if centred { String::new() } else { "mu_s must be zero without an intercept".into() },
        );
    }

    report
}

/// Compute `G`, `F`, `Gamma`, symmetrizing each product.
pub fn derive_matrices(spec: &ModelSpec) -> Result<DerivedMatrices, ModelError> {
    let z = spec.weight_matrix()?;
    let sigma_eps_inv =
        linalg::spd_inverse(&spec.sigma_eps).ok_or(ModelError::SingularResidualCovariance)?;
    let bt_z = spec.beta.transpose() * &z;
    let g = linalg::symmetrize(&(&bt_z * &spec.beta));
    let f = linalg::symmetrize(&(&bt_z * &spec.sigma_eps * &z * &spec.beta));
    let gamma =
        linalg::symmetrize(&(spec.beta.transpose() * sigma_eps_inv * &spec.beta));
    Ok(DerivedMatrices { g, f, gamma })
}

// --- JSON wire format -------------------------------------------------------
//
// Matrices travel as row-major arrays with explicit "m" and "p" fields.

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum WeightRuleWire {
    Precision,
    DiagInverse,
    Identity,
    Custom(Vec<f64>),
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelSpecWire {
    m: usize,
    p: usize,
    beta: Vec<f64>,
    mu_s: Vec<f64>,
    sigma_s: Vec<f64>,
    sigma_eps: Vec<f64>,
    weight_rule: WeightRuleWire,
    has_intercept: bool,
}

impl From<&ModelSpec> for ModelSpecWire {
    fn from(spec: &ModelSpec) -> Self {
        ModelSpecWire {
            m: spec.n_assets(),
            p: spec.n_signals(),
            beta: linalg::to_row_major(&spec.beta),
            mu_s: spec.mu_s.iter().cloned().collect(),
            sigma_s: linalg::to_row_major(&spec.sigma_s),
            sigma_eps: linalg::to_row_major(&spec.sigma_eps),
            weight_rule: match &spec.weight_rule {
                WeightRule::Precision => WeightRuleWire::Precision,
                WeightRule::DiagInverse => WeightRuleWire::DiagInverse,
                WeightRule::Identity => WeightRuleWire::Identity,
                WeightRule::Custom(z) => WeightRuleWire::Custom(linalg::to_row_major(z)),
            },
            has_intercept: spec.has_intercept,
        }
    }
}

impl TryFrom<ModelSpecWire> for ModelSpec {
    type Error = ModelError;

    fn try_from(w: ModelSpecWire) -> Result<Self, ModelError> {
        let expect = |name: &str, got: usize, want: usize| -> Result<(), ModelError> {
            if got == want {
                Ok(())
            } else {
                Err(ModelError::DimensionMismatch(format!(
                    "{name} has {got} entries, expected {want}"
                )))
            }
        };
        expect("beta", w.beta.len(), w.m * w.p)?;
        expect("mu_s", w.mu_s.len(), w.p)?;
        expect("sigma_s", w.sigma_s.len(), w.p * w.p)?;
        expect("sigma_eps", w.sigma_eps.len(), w.m * w.m)?;
        let weight_rule = match w.weight_rule {
            WeightRuleWire::Precision => WeightRule::Precision,
            WeightRuleWire::DiagInverse => WeightRule::DiagInverse,
            WeightRuleWire::Identity => WeightRule::Identity,
            WeightRuleWire::Custom(z) => {
                expect("custom Z", z.len(), w.m * w.m)?;
                WeightRule::Custom(DMatrix::from_row_slice(w.m, w.m, &z))
            }
        };
        ModelSpec::new(
            DMatrix::from_row_slice(w.m, w.p, &w.beta),
            DVector::from_vec(w.mu_s),
            DMatrix::from_row_slice(w.p, w.p, &w.sigma_s),
            DMatrix::from_row_slice(w.m, w.m, &w.sigma_eps),
            weight_rule,
            w.has_intercept,
        )
    }
}
