use serde::{Deserialize, Serialize};

use super::gpd::{fit_excesses_mle, fit_excesses_moments, fit_gpd, hill_from_descending, GpdMethod};
use crate::error::{Error, Result};
use crate::stats::{self, quantile_sorted};

/// Candidate thresholds between two sample quantiles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdGrid {
    pub lower_quantile: f64,
    pub upper_quantile: f64,
    pub points: usize,
}

impl Default for ThresholdGrid {
    fn default() -> Self {
        Self {
            lower_quantile: 0.5,
            upper_quantile: 0.98,
            points: 40,
        }
    }
}

/// How exceedance counts are grouped for the dispersion index.
#[derive(Debug, Clone, PartialEq)]
pub enum Blocking<'a> {
    /// One block label (typically the year) per observation, in sample order.
    Labels(&'a [i64]),
    /// `k` consecutive blocks of (nearly) equal size.
    Equal(usize),
}

impl Default for Blocking<'_> {
    fn default() -> Self {
        Blocking::Equal(10)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRow {
    pub threshold: f64,
    pub n_exceed: usize,
    /// Stability-transformed scale `sigma_w - gamma_w * w`; NaN when unfit.
    pub sigma_prime: f64,
    pub gamma_prime: f64,
    pub mrl: f64,
    pub dispersion: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdDiagnostics {
    pub rows: Vec<ThresholdRow>,
}

impl ThresholdDiagnostics {
    pub fn thresholds(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.threshold).collect()
    }

    pub fn to_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["threshold", "sigma_prime", "gamma_prime", "mrl", "dispersion"])?;
        for r in &self.rows {
            wr.write_record([
                r.threshold.to_string(),
                r.sigma_prime.to_string(),
                r.gamma_prime.to_string(),
                r.mrl.to_string(),
                r.dispersion.to_string(),
            ])?;
        }
        wr.flush().map_err(|e| Error::Serialization(e.to_string()))?;
        Ok(())
    }
}

/// Refits the GPD above each candidate threshold and reports the stability
/// parameters, mean residual life and dispersion index of exceedance counts.
///
/// `sample` must be in time order when the dispersion index is of interest.
pub fn threshold_diagnostics(
    sample: &[f64],
    grid: &ThresholdGrid,
    blocking: &Blocking<'_>,
) -> Result<ThresholdDiagnostics> {
    if grid.points < 2 || !(grid.lower_quantile < grid.upper_quantile) {
        return Err(Error::invalid("threshold grid must be increasing with >= 2 points"));
    }
    let s = stats::sorted(sample);
    let lo = quantile_sorted(&s, grid.lower_quantile);
    let hi = quantile_sorted(&s, grid.upper_quantile);
    if !(hi > lo) {
        return Err(Error::invalid("threshold grid collapses to a single value"));
    }
    if !s.iter().any(|&x| x > hi) {
        return Err(Error::insufficient("no exceedances at the top of the threshold grid"));
    }
    if let Blocking::Labels(l) = blocking {
        if l.len() != sample.len() {
            return Err(Error::DimensionMismatch {
                expected: sample.len(),
                got: l.len(),
            });
        }
    }

    let rows = (0..grid.points)
        .map(|i| {
            let w = lo + (hi - lo) * i as f64 / (grid.points - 1) as f64;
            let excess: Vec<f64> = s.iter().filter(|&&x| x > w).map(|x| x - w).collect();
            let (sigma_prime, gamma_prime) = match fit_gpd(&s, w, GpdMethod::Mle) {
                Ok(p) => (p.sigma - p.gamma * w, p.gamma),
                Err(_) => (f64::NAN, f64::NAN),
            };
            ThresholdRow {
                threshold: w,
                n_exceed: excess.len(),
                sigma_prime,
                gamma_prime,
                mrl: stats::mean(&excess),
                dispersion: dispersion_index(sample, w, blocking),
            }
        })
        .collect();
    Ok(ThresholdDiagnostics { rows })
}

/// Variance-to-mean ratio of per-block exceedance counts.
pub fn dispersion_index(sample: &[f64], w: f64, blocking: &Blocking<'_>) -> f64 {
    let counts: Vec<f64> = match blocking {
        Blocking::Labels(labels) => {
            let mut map = std::collections::BTreeMap::<i64, f64>::new();
            for (x, l) in sample.iter().zip(labels.iter()) {
                *map.entry(*l).or_default() += if *x > w { 1.0 } else { 0.0 };
            }
            map.into_values().collect()
        }
        Blocking::Equal(k) => {
            let k = (*k).max(1).min(sample.len().max(1));
            let n = sample.len();
            (0..k)
                .map(|b| {
                    let (a, e) = (b * n / k, (b + 1) * n / k);
                    sample[a..e].iter().filter(|&&x| x > w).count() as f64
                })
                .collect()
        }
    };
    let m = stats::mean(&counts);
    if !(m > 0.0) || counts.len() < 2 {
        return f64::NAN;
    }
    stats::variance(&counts, 1) / m
}

/// One row of a shape-versus-number-of-exceedances table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShapeEstimates {
    pub k: usize,
    pub hill: f64,
    pub mle: f64,
    pub moments: f64,
}

/// Hill, MLE and moments shape estimates using the top `k` order statistics,
/// for each `k` in `ks`. Nonpositive values are dropped first (the Hill
/// estimator is only defined on the positive part).
pub fn shape_vs_k(sample: &[f64], ks: &[usize]) -> Vec<ShapeEstimates> {
    let mut desc: Vec<f64> = sample.iter().copied().filter(|x| *x > 0.0).collect();
    desc.sort_by(|a, b| b.total_cmp(a));
    ks.iter()
        .filter(|&&k| k >= 2 && k < desc.len())
        .map(|&k| {
            let hill = hill_from_descending(&desc, k).unwrap_or(f64::NAN);
            let u = desc[k];
            let excess: Vec<f64> = desc[..k].iter().map(|x| x - u).collect();
            let mle = if k >= 10 {
                fit_excesses_mle(&excess).map(|p| p.1).unwrap_or(f64::NAN)
            } else {
                f64::NAN
            };
            let moments = fit_excesses_moments(&excess).map(|p| p.1).unwrap_or(f64::NAN);
            ShapeEstimates { k, hill, mle, moments }
        })
        .collect()
}

/// Hill estimates for every `k` in `k_min..=k_max`.
pub fn hill_curve(sample: &[f64], k_min: usize, k_max: usize) -> Vec<(usize, f64)> {
    let mut desc: Vec<f64> = sample.iter().copied().filter(|x| *x > 0.0).collect();
    desc.sort_by(|a, b| b.total_cmp(a));
    let k_max = k_max.min(desc.len().saturating_sub(1));
    // running sum of logs keeps this linear in k_max
    let logs: Vec<f64> = desc.iter().map(|x| x.ln()).collect();
    let mut out = Vec::new();
    let mut cum = 0.0;
    for k in 1..=k_max {
        cum += logs[k - 1];
        if k >= k_min.max(2) {
            out.push((k, cum / k as f64 - logs[k]));
        }
    }
    out
}

/// A run of consecutive `k` over which an estimate is stable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityWindow {
    pub k_start: usize,
    pub k_end: usize,
    pub mean: f64,
    pub relative_spread: f64,
}

/// Every run of `min_len` consecutive `k` whose relative spread
/// `(max - min) / |mean|` is below `max_rel_spread`, in increasing `k`.
pub fn stable_windows(curve: &[(usize, f64)], min_len: usize, max_rel_spread: f64) -> Vec<StabilityWindow> {
    if min_len == 0 || curve.len() < min_len {
        return Vec::new();
    }
    let mut out = Vec::new();
    for start in 0..=curve.len() - min_len {
        let w = &curve[start..start + min_len];
        // windows must be consecutive in k
        if w[min_len - 1].0 - w[0].0 != min_len - 1 {
            continue;
        }
        let vals: Vec<f64> = w.iter().map(|p| p.1).collect();
        if vals.iter().any(|v| !v.is_finite()) {
            continue;
        }
        let m = stats::mean(&vals);
        let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let spread = (hi - lo) / m.abs();
        if spread < max_rel_spread {
            out.push(StabilityWindow {
                k_start: w[0].0,
                k_end: w[min_len - 1].0,
                mean: m,
                relative_spread: spread,
            });
        }
    }
    out
}

/// The tightest of [`stable_windows`].
pub fn stability_window(
    curve: &[(usize, f64)],
    min_len: usize,
    max_rel_spread: f64,
) -> Option<StabilityWindow> {
    stable_windows(curve, min_len, max_rel_spread)
        .into_iter()
        .min_by(|a, b| a.relative_spread.total_cmp(&b.relative_spread))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn hill_curve_matches_direct_estimator() {
        let s: Vec<f64> = (1..=300).map(|i| 1.0 / (i as f64 / 301.0)).collect();
        let curve = hill_curve(&s, 2, 100);
        for &(k, h) in curve.iter().step_by(17) {
            let direct = super::super::gpd::hill_estimator(&s, k).unwrap();
            assert_abs_diff_eq!(h, direct, epsilon = 1e-12);
        }
    }

    #[test]
    fn stability_window_on_flat_and_drifting_curves() {
        let flat: Vec<(usize, f64)> = (10..400).map(|k| (k, 1.0 + 0.001 * (k % 3) as f64)).collect();
        let w = stability_window(&flat, 100, 0.1).unwrap();
        assert_abs_diff_eq!(w.mean, 1.001, epsilon = 0.002);
        let drift: Vec<(usize, f64)> = (10..400).map(|k| (k, k as f64)).collect();
        assert!(stability_window(&drift, 100, 0.1).is_none());
    }

    #[test]
    fn dispersion_of_regular_counts_is_zero() {
        let sample: Vec<f64> = (0..100).map(|i| if i % 10 == 0 { 5.0 } else { 0.0 }).collect();
        assert_abs_diff_eq!(dispersion_index(&sample, 1.0, &Blocking::Equal(10)), 0.0);
    }

    #[test]
    fn grid_requires_exceedances() {
        let s = vec![1.0; 100];
        assert!(threshold_diagnostics(&s, &ThresholdGrid::default(), &Blocking::default()).is_err());
    }
}
