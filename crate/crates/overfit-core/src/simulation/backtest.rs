//! PnL backtesting of a fitted portfolio over simulated or historical data.

use nalgebra::DMatrix;
use serde::Serialize;

use super::SimulationError;

/// Sample mean (1/T), unbiased variance (1/(T-1)) and the sample Sharpe
/// ratio of one PnL series. `sharpe` is `None` when the variance vanishes.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SampleStats {
    pub mean: f64,
    pub variance: f64,
    pub sharpe: Option<f64>,
    pub n: usize,
}

/// Statistics of a raw PnL series.
pub fn sample_stats(pnl: &[f64]) -> Result<SampleStats, SimulationError> {
    let n = pnl.len();
    if n < 2 {
        return Err(SimulationError::InvalidConfig(format!(
            "need at least 2 PnL observations for a variance, got {n}"
        )));
    }
    let mean = pnl.iter().sum::<f64>() / n as f64;
    let variance = pnl.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n as f64 - 1.0);
    let sharpe = if variance > 0.0 { Some(mean / variance.sqrt()) } else { None };
    Ok(SampleStats { mean, variance, sharpe, n })
}

/// Run the portfolio `w_t = Z beta_hat s_t` against aligned returns:
/// `PnL_t = w_t^T r_{t+1}` where column `t` of `returns` holds `r_{t+1}`.
pub fn run_backtest(
    beta_hat: &DMatrix<f64>,
    z: &DMatrix<f64>,
    signals: &DMatrix<f64>,
    returns: &DMatrix<f64>,
) -> Result<(Vec<f64>, SampleStats), SimulationError> {
    let (m, p) = beta_hat.shape();
    if signals.nrows() != p || returns.nrows() != m || z.shape() != (m, m) {
        return Err(SimulationError::Dimension(format!(
            "beta_hat {}x{}, Z {:?}, signals {} rows, returns {} rows",
            m,
            p,
            z.shape(),
            signals.nrows(),
            returns.nrows()
        )));
    }
    if signals.ncols() != returns.ncols() {
        return Err(SimulationError::Dimension(format!(
            "signals span {} steps, returns span {}",
            signals.ncols(),
            returns.ncols()
        )));
    }
    let weights = z * beta_hat * signals;
    let t = signals.ncols();
    let mut pnl = Vec::with_capacity(t);
    for col in 0..t {
        pnl.push(weights.column(col).dot(&returns.column(col)));
    }
    let stats = sample_stats(&pnl)?;
    Ok((pnl, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn constant_pnl_has_undefined_sharpe() {
        // beta_hat = beta = 1, s = 1, Z = 1, zero noise: PnL is constant 1.
        let ones = DMatrix::from_element(1, 4, 1.0);
        let (pnl, stats) = run_backtest(
            &DMatrix::identity(1, 1),
            &DMatrix::identity(1, 1),
            &ones,
            &ones,
        )
        .unwrap();
        assert!(pnl.iter().all(|&v| v == 1.0));
        assert_eq!(stats.variance, 0.0);
        assert!(stats.sharpe.is_none());
    }

    #[test]
    fn alternating_pnl_has_zero_mean_and_sharpe() {
        let stats = sample_stats(&[1.0, -1.0, 1.0, -1.0]).unwrap();
        assert_eq!(stats.mean, 0.0);
        assert_relative_eq!(stats.sharpe.unwrap(), 0.0);
    }

    #[test]
    fn matches_naive_loop_oracle() {
        // Independent elementwise reimplementation on a small seeded case.
        let beta_hat = DMatrix::from_row_slice(2, 2, &[0.3, -0.1, 0.05, 0.7]);
        let z = DMatrix::from_row_slice(2, 2, &[1.0, 0.25, 0.25, 2.0]);
        let signals = DMatrix::from_row_slice(2, 3, &[0.5, -1.0, 2.0, 1.5, 0.0, -0.5]);
        let returns = DMatrix::from_row_slice(2, 3, &[0.1, 0.2, -0.3, 0.0, -0.1, 0.4]);
        let (pnl, _) = run_backtest(&beta_hat, &z, &signals, &returns).unwrap();
        for t in 0..3 {
            let mut expected = 0.0;
            for i in 0..2 {
                let mut w_i = 0.0;
                for k in 0..2 {
                    let mut pred_k = 0.0;
                    for j in 0..2 {
                        pred_k += beta_hat[(k, j)] * signals[(j, t)];
                    }
                    w_i += z[(i, k)] * pred_k;
                }
                expected += w_i * returns[(i, t)];
            }
            assert_relative_eq!(pnl[t], expected, max_relative = 1e-12);
        }
    }

    #[test]
    fn too_short_series_errors() {
        assert!(sample_stats(&[1.0]).is_err());
    }
}
