use serde::{Deserialize, Serialize};

use super::{NtkError, Result};

/// Residuals at or below this level are treated as converged and excluded
/// from rate fits.
pub const CONVERGENCE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    /// `√M · max_t r_{t+1}/r_t²`; `None` with fewer than 3 strictly
    /// decreasing pre-floor residuals.
    pub quadratic_c: Option<f64>,
    /// Raw `r_{t+1}/r_t²` over the strictly decreasing pre-floor prefix.
    pub quadratic_ratios: Vec<f64>,
    /// `exp` of the least-squares slope of `ln r_t` against `t`.
    pub linear_rate: f64,
    /// Coefficient of determination of that line.
    pub r_squared: f64,
    /// Number of pre-floor points used by the linear fit.
    pub points_used: usize,
}

impl RateFit {
    pub fn max_ratio(&self) -> Option<f64> {
        self.quadratic_ratios.iter().copied().reduce(f64::max)
    }

    /// `max/min` of the quadratic ratios.
    pub fn ratio_spread(&self) -> Option<f64> {
        let min = self.quadratic_ratios.iter().copied().reduce(f64::min)?;
        Some(self.max_ratio()? / min)
    }
}

pub fn fit_rates(trajectory: &[f64], width: usize) -> Result<RateFit> {
    fit_rates_with_floor(trajectory, width, CONVERGENCE_FLOOR)
}

/// [`fit_rates`] with an explicit convergence floor.
pub fn fit_rates_with_floor(trajectory: &[f64], width: usize, floor: f64) -> Result<RateFit> {
    if trajectory.len() < 3 {
        return Err(NtkError::InsufficientData(format!(
            "need at least 3 residuals, got {}",
            trajectory.len()
        )));
    }
    if trajectory.iter().any(|r| !r.is_finite() || *r < 0.0) {
        return Err(NtkError::InsufficientData("residuals must be finite and ≥ 0".into()));
    }
    let pre: Vec<f64> = trajectory.iter().copied().take_while(|&r| r > floor).collect();
    if pre.len() < 2 {
        return Err(NtkError::InsufficientData(format!(
            "only {} residual(s) above the floor {floor:e}",
            pre.len()
        )));
    }

    let mut decreasing = 1;
    while decreasing < pre.len() && pre[decreasing] < pre[decreasing - 1] {
        decreasing += 1;
    }
    let quadratic_ratios: Vec<f64> = if decreasing >= 3 {
        pre[..decreasing].windows(2).map(|w| w[1] / (w[0] * w[0])).collect()
    } else {
        Vec::new()
    };
    let quadratic_c = quadratic_ratios
        .iter()
        .copied()
        .reduce(f64::max)
        .map(|r| (width as f64).sqrt() * r);

    let n = pre.len() as f64;
    let logs: Vec<f64> = pre.iter().map(|r| r.ln()).collect();
    let t_mean = (n - 1.0) / 2.0;
    let l_mean = logs.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (t, l) in logs.iter().enumerate() {
        let dt = t as f64 - t_mean;
        sxx += dt * dt;
        sxy += dt * (l - l_mean);
    }
    let slope = sxy / sxx;
    let intercept = l_mean - slope * t_mean;
    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    for (t, l) in logs.iter().enumerate() {
        let fit = intercept + slope * t as f64;
        ss_res += (l - fit).powi(2);
        ss_tot += (l - l_mean).powi(2);
    }
    let r_squared = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };

    Ok(RateFit {
        quadratic_c,
        quadratic_ratios,
        linear_rate: slope.exp(),
        r_squared,
        points_used: pre.len(),
    })
}
