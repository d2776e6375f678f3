//! Random model sampler for robustness studies: LKJ correlation matrices,
//! chi-square residual variances, Laplace-distributed coefficients, and a
//! closed-form rescaling of beta to hit a target true Sharpe ratio.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Beta, ChiSquared, Distribution, StandardNormal};

use super::rng::{stream_rng, stream_tag};
use super::SimulationError;
use crate::analytic::AnalyticError;
use crate::linalg;
use crate::model::{derive_matrices, ModelSpec, WeightRule};

/// Default LKJ concentration: mild shrinkage toward the identity.
pub const DEFAULT_LKJ_ETA: f64 = 2.0;

/// Degrees of freedom for the chi-square residual-variance draw; the draw is
/// scaled by 1/dof so variances have mean one.
const CHI2_DOF: f64 = 4.0;

/// Standard Laplace draw via inverse CDF.
fn laplace(rng: &mut impl Rng) -> f64 {
    let u: f64 = rng.random::<f64>() - 0.5;
    -u.signum() * (1.0 - 2.0 * u.abs()).ln()
}

/// Sample a correlation matrix from the LKJ distribution with concentration
/// `eta`, using the onion construction.
pub fn lkj_correlation(
    d: usize,
    eta: f64,
    rng: &mut impl Rng,
) -> Result<DMatrix<f64>, SimulationError> {
    if eta <= 0.0 {
        return Err(SimulationError::InvalidConfig(format!(
            "LKJ concentration must be positive, got {eta}"
        )));
    }
    if d == 0 {
        return Err(SimulationError::InvalidConfig("dimension must be positive".into()));
    }
    let mut p = DMatrix::identity(d, d);
    if d == 1 {
        return Ok(p);
    }
    let beta_err =
        |e: rand_distr::BetaError| SimulationError::InvalidConfig(format!("beta draw: {e}"));
    let mut shape = eta + (d as f64 - 2.0) / 2.0;
    let r12 = 2.0 * Beta::new(shape, shape).map_err(beta_err)?.sample(rng) - 1.0;
    p[(0, 1)] = r12;
    p[(1, 0)] = r12;
    for k in 2..d {
        shape -= 0.5;
        let y = Beta::new(k as f64 / 2.0, shape).map_err(beta_err)?.sample(rng);
        // Uniform direction on the unit sphere in R^k.
        let mut u = DVector::from_fn(k, |_, _| StandardNormal.sample(rng));
        u /= u.norm();
        let w = u * y.sqrt();
        let leading = p.view((0, 0), (k, k)).into_owned();
        let chol = linalg::psd_factor(&leading).ok_or_else(|| {
            SimulationError::InvalidConfig("onion step produced a non-PSD leading block".into())
        })?;
        let z = chol * w;
        for i in 0..k {
            p[(i, k)] = z[i];
            p[(k, i)] = z[i];
        }
    }
    Ok(linalg::symmetrize(&p))
}

/// Supremum of the true Sharpe ratio over rescalings `c * beta` of a base
/// model, together with the squared scale achieving a given target.
fn scale_for_target(
    spec: &ModelSpec,
    target: f64,
) -> Result<f64, SimulationError> {
    let d = derive_matrices(spec)?;
    let gs = &d.g * &spec.sigma_s;
    let n = gs.trace();
    let n2 = (&gs * &gs).trace();
    let m_term = (&d.f * &spec.sigma_s).trace();
    let supremum = n / (2.0 * n2).sqrt();
    if target >= supremum {
        return Err(SimulationError::Analytic(AnalyticError::TargetUnreachable {
            supremum,
        }));
    }
    // SR(c)^2 = c^2 N^2 / (2 c^2 N2 + M)  =>  c^2 = SR^2 M / (N^2 - 2 SR^2 N2).
    let c2 = target * target * m_term / (n * n - 2.0 * target * target * n2);
    Ok(c2.sqrt())
}

/// Draw a random model: unit signal standard deviations with an LKJ
/// correlation, chi-square residual variances composed with an LKJ
/// correlation, Laplace-distributed beta entries rescaled so the true Sharpe
/// ratio equals `target_sr` (per step) when provided. Markowitz weights,
/// centred signals, no intercept.
pub fn sample_random_model(
    m: usize,
    p: usize,
    target_sr: Option<f64>,
    rng_seed: u64,
) -> Result<ModelSpec, SimulationError> {
    sample_random_model_with_eta(m, p, target_sr, rng_seed, DEFAULT_LKJ_ETA)
}

/// [`sample_random_model`] with an explicit LKJ concentration parameter.
pub fn sample_random_model_with_eta(
    m: usize,
    p: usize,
    target_sr: Option<f64>,
    rng_seed: u64,
    eta: f64,
) -> Result<ModelSpec, SimulationError> {
    if m == 0 || p == 0 {
        return Err(SimulationError::InvalidConfig("m and p must be positive".into()));
    }
    if let Some(t) = target_sr {
        if t < 0.0 {
            return Err(SimulationError::InvalidConfig(format!(
                "target Sharpe ratio must be non-negative, got {t}"
            )));
        }
    }
    let mut rng = stream_rng(rng_seed, 0, stream_tag::MODEL);

    let sigma_s = lkj_correlation(p, eta, &mut rng)?;
    let corr_eps = lkj_correlation(m, eta, &mut rng)?;
    let chi2 = ChiSquared::new(CHI2_DOF)
        .map_err(|e| SimulationError::InvalidConfig(format!("chi-square draw: {e}")))?;
    let stds = DVector::from_fn(m, |_, _| (chi2.sample(&mut rng) / CHI2_DOF).sqrt());
    let mut sigma_eps = corr_eps;
    for i in 0..m {
        for j in 0..m {
            sigma_eps[(i, j)] *= stds[i] * stds[j];
        }
    }

    if target_sr == Some(0.0) {
        return Ok(ModelSpec::new(
            DMatrix::zeros(m, p),
            DVector::zeros(p),
            sigma_s,
            sigma_eps,
            WeightRule::Precision,
            false,
        )?);
    }

    let beta = DMatrix::from_fn(m, p, |_, _| laplace(&mut rng));
    let mut spec = ModelSpec::new(
        beta,
        DVector::zeros(p),
        sigma_s,
        sigma_eps,
        WeightRule::Precision,
        false,
    )?;
    if let Some(target) = target_sr {
        let scale = scale_for_target(&spec, target)?;
        spec.beta *= scale;
    }
    Ok(spec)
}
