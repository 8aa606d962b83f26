use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::{self, golden_section_max};

/// Below this magnitude the shape is treated as exactly zero (exponential tail).
pub const GAMMA_ZERO_TOL: f64 = 1e-9;

/// Admissible shape range for maximum likelihood.
pub const MLE_GAMMA_RANGE: (f64, f64) = (-0.9, 2.0);

pub const MIN_EXCEEDANCES: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpdParams {
    #[serde(rename = "u")]
    pub threshold: f64,
    pub sigma: f64,
    pub gamma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GpdMethod {
    Mle,
    Moments,
}

impl GpdParams {
    pub fn new(threshold: f64, sigma: f64, gamma: f64) -> Result<Self> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::invalid(format!("GPD scale must be positive, got {sigma}")));
        }
        Ok(Self {
            threshold,
            sigma,
            gamma,
        })
    }

    /// Upper end of the support (`+inf` unless the shape is negative).
    pub fn upper_endpoint(&self) -> f64 {
        if self.gamma < -GAMMA_ZERO_TOL {
            self.threshold - self.sigma / self.gamma
        } else {
            f64::INFINITY
        }
    }

    pub fn cdf(&self, x: f64) -> Result<f64> {
        if !(self.sigma > 0.0) {
            return Err(Error::invalid("GPD scale must be positive"));
        }
        if x < self.threshold || x > self.upper_endpoint() {
            return Err(Error::invalid(format!(
                "{x} outside GPD support [{}, {}]",
                self.threshold,
                self.upper_endpoint()
            )));
        }
        Ok(self.cdf_clamped(x))
    }

    /// CDF extended by 0 below the threshold and 1 above the upper endpoint.
    pub fn cdf_clamped(&self, x: f64) -> f64 {
        let y = (x - self.threshold) / self.sigma;
        if y <= 0.0 {
            return 0.0;
        }
        if self.gamma.abs() < GAMMA_ZERO_TOL {
            return -(-y).exp_m1();
        }
        let base = 1.0 + self.gamma * y;
        if base <= 0.0 {
            return 1.0;
        }
        -((-1.0 / self.gamma) * base.ln()).exp_m1()
    }

    pub fn survival(&self, x: f64) -> f64 {
        let y = (x - self.threshold) / self.sigma;
        if y <= 0.0 {
            return 1.0;
        }
        if self.gamma.abs() < GAMMA_ZERO_TOL {
            return (-y).exp();
        }
        let base = 1.0 + self.gamma * y;
        if base <= 0.0 {
            return 0.0;
        }
        ((-1.0 / self.gamma) * base.ln()).exp()
    }

    pub fn quantile(&self, q: f64) -> Result<f64> {
        if !(0.0..1.0).contains(&q) {
            return Err(Error::invalid(format!("GPD quantile level {q} outside [0, 1)")));
        }
        Ok(self.quantile_unchecked(q))
    }

    pub(crate) fn quantile_unchecked(&self, q: f64) -> f64 {
        // -ln(1 - q), accurate for q near 0
        let e = -(-q).ln_1p();
        if self.gamma.abs() < GAMMA_ZERO_TOL {
            self.threshold + self.sigma * e
        } else {
            self.threshold + self.sigma * (self.gamma * e).exp_m1() / self.gamma
        }
    }

    /// Log-likelihood of exceedances `y = x - u > 0`.
    pub fn log_likelihood(&self, excesses: &[f64]) -> f64 {
        gpd_loglik(excesses, self.sigma, self.gamma)
    }
}

fn gpd_loglik(excesses: &[f64], sigma: f64, gamma: f64) -> f64 {
    if !(sigma > 0.0) {
        return f64::NEG_INFINITY;
    }
    let n = excesses.len() as f64;
    if gamma.abs() < GAMMA_ZERO_TOL {
        return -n * sigma.ln() - excesses.iter().sum::<f64>() / sigma;
    }
    let mut s = 0.0;
    for &y in excesses {
        let b = 1.0 + gamma * y / sigma;
        if b <= 0.0 {
            return f64::NEG_INFINITY;
        }
        s += b.ln();
    }
    -n * sigma.ln() - (1.0 + 1.0 / gamma) * s
}

pub fn excesses_over(sample: &[f64], u: f64) -> Vec<f64> {
    sample.iter().filter(|&&x| x > u).map(|x| x - u).collect()
}

/// Fits a GPD to the exceedances of `sample` over `u`.
pub fn fit_gpd(sample: &[f64], u: f64, method: GpdMethod) -> Result<GpdParams> {
    let y = excesses_over(sample, u);
    if y.len() < MIN_EXCEEDANCES {
        return Err(Error::insufficient(format!(
            "{} exceedances above {u}, need at least {MIN_EXCEEDANCES}",
            y.len()
        )));
    }
    let (sigma, gamma) = match method {
        GpdMethod::Mle => fit_excesses_mle(&y)?,
        GpdMethod::Moments => fit_excesses_moments(&y)?,
    };
    GpdParams::new(u, sigma, gamma)
}

/// Moment matching: `gamma = (1 - m^2/s^2) / 2`, `sigma = m (m^2/s^2 + 1) / 2`.
pub fn fit_excesses_moments(y: &[f64]) -> Result<(f64, f64)> {
    let m = stats::mean(y);
    let v = stats::variance(y, 1);
    if !(v > 0.0) {
        return Err(Error::Optimization("exceedances have zero variance".into()));
    }
    let r = m * m / v;
    Ok((0.5 * m * (r + 1.0), 0.5 * (1.0 - r)))
}

/// Profile likelihood over `theta = gamma / sigma`.
///
/// For fixed `theta` the likelihood is maximised in closed form by
/// `gamma(theta) = mean(ln(1 + theta*y))` and `sigma = gamma / theta`, so only
/// a one-dimensional search is needed.
pub fn fit_excesses_mle(y: &[f64]) -> Result<(f64, f64)> {
    let n = y.len() as f64;
    let ymax = y.iter().copied().fold(0.0, f64::max);
    let ymean = stats::mean(y);
    if !(ymax > 0.0) {
        return Err(Error::Optimization("exceedances are all zero".into()));
    }

    let gamma_of = |theta: f64| -> f64 {
        if theta.abs() * ymax < 1e-12 {
            // first-order expansion around theta = 0
            theta * ymean
        } else {
            y.iter().map(|v| (theta * v).ln_1p()).sum::<f64>() / n
        }
    };
    let (glo, ghi) = MLE_GAMMA_RANGE;
    let profile = |theta: f64| -> f64 {
        if theta * ymax <= -1.0 {
            return f64::NEG_INFINITY;
        }
        let g = gamma_of(theta);
        if !(glo..=ghi).contains(&g) {
            return f64::NEG_INFINITY;
        }
        if theta.abs() * ymax < 1e-12 {
            return -n * ymean.ln() - n;
        }
        let sigma = g / theta;
        if !(sigma > 0.0) {
            return f64::NEG_INFINITY;
        }
        -n * sigma.ln() - n * (g + 1.0)
    };

    // theta is searched on a signed log grid in units of 1/ymax
    let lo = -1.0 / ymax * (1.0 - 1e-9);
    let mut grid: Vec<f64> = Vec::new();
    for k in 0..=60 {
        let frac = 10f64.powf(-6.0 + 6.0 * k as f64 / 60.0);
        grid.push(lo * frac);
    }
    grid.push(0.0);
    for k in 0..=80 {
        grid.push(10f64.powf(-6.0 + 9.0 * k as f64 / 80.0) / ymax);
    }
    grid.sort_by(f64::total_cmp);

    let vals: Vec<f64> = grid.iter().map(|&t| profile(t)).collect();
    let (best_i, best_v) = vals
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
    if !best_v.is_finite() {
        return Err(Error::Optimization(
            "GPD likelihood is not finite on the admissible shape range".into(),
        ));
    }
    let a = grid[best_i.saturating_sub(1)];
    let b = grid[(best_i + 1).min(grid.len() - 1)];
    let (theta, v) = golden_section_max(profile, a, b, 1e-12 / ymax);
    let theta = if v >= best_v { theta } else { grid[best_i] };

    let gamma = gamma_of(theta);
    let sigma = if theta.abs() * ymax < 1e-12 {
        ymean
    } else {
        gamma / theta
    };
    if !(sigma > 0.0) || !sigma.is_finite() || !gamma.is_finite() {
        return Err(Error::Optimization("GPD fit produced invalid parameters".into()));
    }
    Ok((sigma, gamma))
}

/// Hill estimate from the top `k` order statistics:
/// mean of `ln(X_(n-i+1) / X_(n-k))` for `i = 1..=k`.
pub fn hill_estimator(sample: &[f64], k: usize) -> Result<f64> {
    let mut s = sample.to_vec();
    s.sort_by(|a, b| b.total_cmp(a));
    hill_from_descending(&s, k)
}

pub(crate) fn hill_from_descending(desc: &[f64], k: usize) -> Result<f64> {
    let n = desc.len();
    if k < 2 || k >= n {
        return Err(Error::invalid(format!("Hill needs 2 <= k < n, got k={k}, n={n}")));
    }
    let xk = desc[k];
    if !(xk > 0.0) {
        return Err(Error::invalid(
            "Hill estimator window contains nonpositive order statistics",
        ));
    }
    let lk = xk.ln();
    Ok(desc[..k].iter().map(|x| x.ln() - lk).sum::<f64>() / k as f64)
}
