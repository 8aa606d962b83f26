//! Per-time-step autoregressive whitening across cycles.
//!
//! For each time step `t` the detrended value of cycle `M` is regressed on the
//! values of the `p` previous (Δ-spaced) cycles at the same `t`. Lags are
//! positions in the subsampled list, so lag 1 is Δ cycles back.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::FunctionalDataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArModel {
    pub order: usize,
    pub delta: usize,
    pub beta0: Vec<f64>,
    /// `beta[t][i]` multiplies the lag-`(i + 1)` series at time step `t`.
    pub beta: Vec<Vec<f64>>,
    /// Position (in the subsampled list) of the first cycle with a residual.
    pub residual_index_offset: usize,
}

impl ArModel {
    pub fn t_len(&self) -> usize {
        self.beta0.len()
    }

    /// One-step prediction from `lags[i]` = series `i + 1` steps back.
    pub fn predict(&self, lags: &[Vec<f64>]) -> Vec<f64> {
        (0..self.t_len())
            .map(|t| {
                self.beta0[t]
                    + self.beta[t]
                        .iter()
                        .zip(lags)
                        .map(|(b, l)| b * l[t])
                        .sum::<f64>()
            })
            .collect()
    }
}

/// Residuals aligned with the cycles that have all `p` lags available.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualSet {
    pub residuals: FunctionalDataset,
}

pub fn fit_ar(ds: &FunctionalDataset, p: usize) -> Result<(ArModel, ResidualSet)> {
    if p < 1 {
        return Err(Error::invalid("AR order must be at least 1"));
    }
    let n = ds.len();
    if n <= p + 1 {
        return Err(Error::insufficient(format!(
            "AR({p}) needs more than {} cycles, got {n}",
            p + 1
        )));
    }
    let t_len = ds.t_len();
    let rows = ds.rows();

    let fits: Vec<(f64, Vec<f64>)> = (0..t_len)
        .into_par_iter()
        .map(|t| fit_one_step(&rows, t, p))
        .collect::<Result<_>>()?;

    let (beta0, beta): (Vec<f64>, Vec<Vec<f64>>) = fits.into_iter().unzip();
    let model = ArModel {
        order: p,
        delta: ds.delta(),
        beta0,
        beta,
        residual_index_offset: p,
    };

    let residual_rows: Vec<Vec<f64>> = (p..n)
        .map(|m| {
            let lags: Vec<Vec<f64>> = (1..=p).map(|i| rows[m - i].clone()).collect();
            let pred = model.predict(&lags);
            rows[m].iter().zip(pred).map(|(x, f)| x - f).collect()
        })
        .collect();
    let residuals = ds.subset(p..n, ds.delta()).with_values(residual_rows);
    Ok((model, ResidualSet { residuals }))
}

fn fit_one_step(rows: &[Vec<f64>], t: usize, p: usize) -> Result<(f64, Vec<f64>)> {
    let n = rows.len();
    let m = n - p;
    let k = p + 1;
    let design = DMatrix::from_fn(m, k, |r, c| {
        if c == 0 {
            1.0
        } else {
            rows[r + p - c][t]
        }
    });
    let y = DVector::from_fn(m, |r, _| rows[r + p][t]);

    for c in 1..k {
        let col: Vec<f64> = design.column(c).iter().copied().collect();
        let mean = col.iter().sum::<f64>() / m as f64;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / m as f64;
        if var <= 1e-14 * (1.0 + mean * mean) {
            return Err(Error::Singular(format!(
                "lag {c} regressor at t{} is constant",
                t + 1
            )));
        }
    }

    let svd = design.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if smin <= smax * 1e-12 {
        return Err(Error::Singular(format!("AR design at t{} is rank deficient", t + 1)));
    }
    let coef = svd
        .solve(&y, 0.0)
        .map_err(|e| Error::Singular(format!("AR solve at t{}: {e}", t + 1)))?;
    Ok((coef[0], coef.iter().skip(1).copied().collect()))
}

/// Rebuilds a detrended series from an innovation and its `p` lagged series.
pub fn invert_ar(model: &ArModel, eps: &[f64], init: &[Vec<f64>]) -> Result<Vec<f64>> {
    let t_len = model.t_len();
    if init.len() != model.order {
        return Err(Error::DimensionMismatch {
            expected: model.order,
            got: init.len(),
        });
    }
    if eps.len() != t_len {
        return Err(Error::DimensionMismatch {
            expected: t_len,
            got: eps.len(),
        });
    }
    if let Some(bad) = init.iter().find(|s| s.len() != t_len) {
        return Err(Error::DimensionMismatch {
            expected: t_len,
            got: bad.len(),
        });
    }
    Ok(model
        .predict(init)
        .into_iter()
        .zip(eps)
        .map(|(f, e)| f + e)
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Correlogram {
    pub acf: Vec<f64>,
    pub pacf: Vec<f64>,
}

/// Sample ACF (lags `0..=max_lag`) and PACF by Durbin–Levinson.
pub fn acf_pacf(series: &[f64], max_lag: usize) -> Result<Correlogram> {
    let n = series.len();
    if n <= max_lag + 1 {
        return Err(Error::insufficient(format!(
            "series of length {n} too short for {max_lag} lags"
        )));
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let c0: f64 = series.iter().map(|x| (x - mean).powi(2)).sum();
    if c0 <= 0.0 {
        return Err(Error::invalid("series has zero variance"));
    }
    let acf: Vec<f64> = (0..=max_lag)
        .map(|h| {
            (0..n - h)
                .map(|i| (series[i] - mean) * (series[i + h] - mean))
                .sum::<f64>()
                / c0
        })
        .collect();

    let mut pacf = vec![1.0; max_lag + 1];
    let mut phi_prev: Vec<f64> = Vec::new();
    let mut v = 1.0;
    for h in 1..=max_lag {
        let num = acf[h]
            - phi_prev
                .iter()
                .enumerate()
                .map(|(j, ph)| ph * acf[h - 1 - j])
                .sum::<f64>();
        let phi_hh = num / v;
        let mut phi = Vec::with_capacity(h);
        for j in 0..h - 1 {
            phi.push(phi_prev[j] - phi_hh * phi_prev[h - 2 - j]);
        }
        phi.push(phi_hh);
        v *= 1.0 - phi_hh * phi_hh;
        pacf[h] = phi_hh;
        phi_prev = phi;
    }
    Ok(Correlogram { acf, pacf })
}
