//! Signal and return path generators: Gaussian iid, AR(1), and AR(1) driven
//! by Student-t shocks, plus Gaussian or Student-t residuals. Correlation is
//! induced by multiplying independent draws with a PSD factor of the target
//! covariance; t draws are rescaled to unit variance first so the stated
//! covariances stay the true ones.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};

use super::rng::{stream_rng, stream_tag};
use super::{SimulationConfig, SimulationError, SignalKind, NoiseKind};
use crate::linalg;
use crate::model::ModelSpec;

/// Stationary covariance of `x_t = phi x_{t-1} + u_t`, `u ~ (0, sigma_u)`:
/// the fixed point of `X = phi X phi^T + sigma_u`, computed by doubling.
pub fn stationary_covariance(
    phi: &DMatrix<f64>,
    sigma_u: &DMatrix<f64>,
) -> Result<DMatrix<f64>, SimulationError> {
    let radius = linalg::spectral_radius(phi);
    if radius >= 1.0 {
        return Err(SimulationError::UnstablePhi(radius));
    }
    let mut x = sigma_u.clone();
    let mut a = phi.clone();
    for _ in 0..64 {
        x = &x + &a * &x * a.transpose();
        a = &a * &a;
        if a.amax() < 1e-300 {
            break;
        }
    }
    Ok(linalg::symmetrize(&x))
}

/// Per-dimension unit-variance draws: standard normal, or Student-t scaled
/// by sqrt((nu-2)/nu).
enum ShockDraw {
    Gaussian,
    StudentT { dists: Vec<StudentT<f64>>, scales: Vec<f64> },
}

impl ShockDraw {
    fn gaussian() -> Self {
        ShockDraw::Gaussian
    }

    fn student_t(dof: &DVector<f64>) -> Result<Self, SimulationError> {
        let mut dists = Vec::with_capacity(dof.len());
        let mut scales = Vec::with_capacity(dof.len());
        for &nu in dof.iter() {
            if nu <= 2.0 {
                return Err(SimulationError::InvalidDof(nu));
            }
            dists.push(StudentT::new(nu).map_err(|e| {
                SimulationError::InvalidConfig(format!("t distribution: {e}"))
            })?);
            scales.push(((nu - 2.0) / nu).sqrt());
        }
        Ok(ShockDraw::StudentT { dists, scales })
    }

    fn fill(&self, out: &mut DVector<f64>, rng: &mut impl Rng) {
        match self {
            ShockDraw::Gaussian => {
                for v in out.iter_mut() {
                    *v = StandardNormal.sample(rng);
                }
            }
            ShockDraw::StudentT { dists, scales } => {
                for (i, v) in out.iter_mut().enumerate() {
                    *v = dists[i].sample(rng) * scales[i];
                }
            }
        }
    }
}

/// Simulate a `p x t` signal matrix for one path.
///
/// Gaussian iid: columns are iid `N(mu_s, sigma_s)`. AR(1) kinds: `sigma_s`
/// is read as the shock covariance of the dynamic (non-intercept) block; the
/// recursion starts from the exact stationary distribution, runs `burn_in`
/// warm-up steps, and the intercept row (when present) is held at 1.
pub fn simulate_signals(
    mu_s: &DVector<f64>,
    sigma_s: &DMatrix<f64>,
    has_intercept: bool,
    t: usize,
    config: &SimulationConfig,
    path_index: u64,
) -> Result<DMatrix<f64>, SimulationError> {
    let p = mu_s.len();
    if sigma_s.shape() != (p, p) {
        return Err(SimulationError::Dimension(format!(
            "sigma_s is {:?}, expected {p}x{p}",
            sigma_s.shape()
        )));
    }
    let mut rng = stream_rng(config.seed, path_index, stream_tag::SIGNALS);
    match &config.signal_kind {
        SignalKind::GaussianIid => {
            let factor = linalg::psd_factor(sigma_s)
                .ok_or_else(|| SimulationError::InvalidConfig("sigma_s is not PSD".into()))?;
            let mut out = DMatrix::zeros(p, t);
            let mut z = DVector::zeros(p);
            for col in 0..t {
                ShockDraw::Gaussian.fill(&mut z, &mut rng);
                let x = mu_s + &factor * &z;
                out.set_column(col, &x);
            }
            Ok(out)
        }
        SignalKind::Ar1 { phi } => {
            simulate_ar1(mu_s, sigma_s, has_intercept, t, phi, ShockDraw::gaussian(), config, &mut rng)
        }
        SignalKind::Ar1StudentT { phi, dof } => {
            let draw = ShockDraw::student_t(dof)?;
            simulate_ar1(mu_s, sigma_s, has_intercept, t, phi, draw, config, &mut rng)
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn simulate_ar1(
    mu_s: &DVector<f64>,
    sigma_u: &DMatrix<f64>,
    has_intercept: bool,
    t: usize,
    phi: &DMatrix<f64>,
    draw: ShockDraw,
    config: &SimulationConfig,
    rng: &mut impl Rng,
) -> Result<DMatrix<f64>, SimulationError> {
    let p = mu_s.len();
    let offset = usize::from(has_intercept);
    let pd = p - offset;
    if phi.shape() != (pd, pd) {
        return Err(SimulationError::Dimension(format!(
            "phi is {:?}, expected {pd}x{pd} for the dynamic signal block",
            phi.shape()
        )));
    }
    let sigma_dyn = sigma_u.view((offset, offset), (pd, pd)).into_owned();
    let shock_factor = linalg::psd_factor(&sigma_dyn)
        .ok_or_else(|| SimulationError::InvalidConfig("shock covariance is not PSD".into()))?;
    let stationary = stationary_covariance(phi, &sigma_dyn)?;
    let stat_factor = linalg::psd_factor(&stationary)
        .ok_or_else(|| SimulationError::InvalidConfig("stationary covariance is not PSD".into()))?;

    let mut z = DVector::zeros(pd);
    ShockDraw::Gaussian.fill(&mut z, rng);
    let mut state = &stat_factor * &z;
    let mut shock = DVector::zeros(pd);
    for _ in 0..config.burn_in {
        draw.fill(&mut z, rng);
        shock = &shock_factor * &z;
        state = phi * &state + &shock;
    }
    let mut out = DMatrix::zeros(p, t);
    for col in 0..t {
        for row in 0..pd {
            out[(offset + row, col)] = state[row];
        }
        if has_intercept {
            out[(0, col)] = 1.0;
        }
        draw.fill(&mut z, rng);
        shock.copy_from(&(&shock_factor * &z));
        state = phi * &state + &shock;
    }
    Ok(out)
}

/// Simulate the `m x t` return matrix `r_{t+1} = beta s_t + eps_{t+1}`;
/// column `t` of the output pairs with signal column `t`.
pub fn simulate_returns(
    spec: &ModelSpec,
    signals: &DMatrix<f64>,
    config: &SimulationConfig,
    path_index: u64,
) -> Result<DMatrix<f64>, SimulationError> {
    let (m, p) = (spec.n_assets(), spec.n_signals());
    if signals.nrows() != p {
        return Err(SimulationError::Dimension(format!(
            "signals have {} rows, expected p={p}",
            signals.nrows()
        )));
    }
    let t = signals.ncols();
    let draw = match &config.noise_kind {
        NoiseKind::Gaussian => ShockDraw::gaussian(),
        NoiseKind::StudentT { dof } => {
            if dof.len() != m {
                return Err(SimulationError::Dimension(format!(
                    "noise dof has {} entries, expected m={m}",
                    dof.len()
                )));
            }
            ShockDraw::student_t(dof)?
        }
    };
    let factor = linalg::psd_factor(&spec.sigma_eps)
        .ok_or_else(|| SimulationError::InvalidConfig("sigma_eps is not PSD".into()))?;
    let mut rng = stream_rng(config.seed, path_index, stream_tag::NOISE);
    let mut out = &spec.beta * signals;
    let mut z = DVector::zeros(m);
    for col in 0..t {
        draw.fill(&mut z, &mut rng);
        let eps = &factor * &z;
        for row in 0..m {
            out[(row, col)] += eps[row];
        }
    }
    Ok(out)
}
