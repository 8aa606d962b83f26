use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::bands::check_rows;
use crate::error::{Error, Result};
use crate::stats::{self, pseudo_observations, quantile_sorted, substream};

fn check_level(q: f64) -> Result<()> {
    if q > 0.0 && q < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("exceedance level {q} outside (0, 1)")))
    }
}

/// Per-lag extremogram averaged over all valid starting steps; `None` when
/// some time step of `rows` has no exceedance.
fn extremogram_of(rows: &[&Vec<f64>], q: f64, max_lag: usize) -> Option<Vec<f64>> {
    let t_len = rows[0].len();
    let thresholds: Vec<f64> = (0..t_len)
        .map(|t| quantile_sorted(&stats::sorted(&rows.iter().map(|r| r[t]).collect::<Vec<_>>()), q))
        .collect();
    let exceed: Vec<Vec<bool>> = rows
        .iter()
        .map(|r| r.iter().zip(&thresholds).map(|(x, u)| x > u).collect())
        .collect();
    let counts: Vec<usize> = (0..t_len).map(|t| exceed.iter().filter(|e| e[t]).count()).collect();
    if counts.contains(&0) {
        return None;
    }
    Some(
        (0..=max_lag)
            .map(|h| {
                let vals: Vec<f64> = (0..t_len - h)
                    .map(|s| exceed.iter().filter(|e| e[s] && e[s + h]).count() as f64 / counts[s] as f64)
                    .collect();
                stats::mean(&vals)
            })
            .collect(),
    )
}

/// Extremogram `pi(h)` of a set of series at exceedance level `q`.
pub fn extremogram(series: &[Vec<f64>], q: f64, max_lag: usize) -> Result<Vec<f64>> {
    let t_len = check_rows(series, "extremogram")?;
    check_level(q)?;
    let max_lag = max_lag.min(t_len - 1);
    let refs: Vec<&Vec<f64>> = series.iter().collect();
    extremogram_of(&refs, q, max_lag).ok_or_else(|| Error::insufficient("a time step has no exceedances"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtremogramComparison {
    pub q: f64,
    pub lags: Vec<usize>,
    pub observed: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub simulated: Vec<f64>,
    pub inside: Vec<bool>,
}

impl ExtremogramComparison {
    pub fn all_inside(&self) -> bool {
        self.inside.iter().all(|&b| b)
    }

    pub fn to_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["lag", "observed", "lower", "upper", "simulated", "inside"])?;
        for i in 0..self.lags.len() {
            wr.write_record([
                self.lags[i].to_string(),
                self.observed[i].to_string(),
                self.lower[i].to_string(),
                self.upper[i].to_string(),
                self.simulated[i].to_string(),
                self.inside[i].to_string(),
            ])?;
        }
        wr.flush().map_err(|e| Error::Serialization(e.to_string()))?;
        Ok(())
    }
}

/// Observed extremogram with a bootstrap band from resampling whole series,
/// and the simulated extremogram checked against the band.
pub fn extremogram_compare(
    observed: &[Vec<f64>],
    simulated: &[Vec<f64>],
    q: f64,
    max_lag: usize,
    bootstrap: usize,
    confidence: f64,
    seed: u64,
) -> Result<ExtremogramComparison> {
    let t_len = check_rows(observed, "observed")?;
    let max_lag = max_lag.min(t_len - 1);
    let obs = extremogram(observed, q, max_lag)?;
    let sim = extremogram(simulated, q, max_lag)?;
    if bootstrap < 100 {
        return Err(Error::invalid("at least 100 bootstrap resamples are required"));
    }
    let n = observed.len();
    let reps: Vec<Vec<f64>> = (0..bootstrap)
        .into_par_iter()
        .filter_map(|b| {
            let mut rng = substream(seed, b as u64);
            let sample: Vec<&Vec<f64>> = (0..n).map(|_| &observed[rng.random_range(0..n)]).collect();
            extremogram_of(&sample, q, max_lag)
        })
        .collect();
    if reps.len() < bootstrap / 2 {
        return Err(Error::insufficient("too few bootstrap resamples with exceedances at every step"));
    }
    let alpha = 1.0 - confidence;
    let mut lower = Vec::with_capacity(max_lag + 1);
    let mut upper = Vec::with_capacity(max_lag + 1);
    for h in 0..=max_lag {
        let v = stats::sorted(&reps.iter().map(|r| r[h]).collect::<Vec<_>>());
        lower.push(quantile_sorted(&v, alpha / 2.0));
        upper.push(quantile_sorted(&v, 1.0 - alpha / 2.0));
    }
    // a small tolerance keeps the exact lag-0 value of 1 inside a degenerate band
    let inside = (0..=max_lag)
        .map(|h| sim[h] >= lower[h] - 1e-12 && sim[h] <= upper[h] + 1e-12)
        .collect();
    Ok(ExtremogramComparison {
        q,
        lags: (0..=max_lag).collect(),
        observed: obs,
        lower,
        upper,
        simulated: sim,
        inside,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChiCurve {
    pub grid: Vec<f64>,
    /// `chi(u) = 2 - ln C(u, u) / ln u`; `None` where undefined.
    pub chi: Vec<Option<f64>>,
    pub lower: Vec<Option<f64>>,
    pub upper: Vec<Option<f64>>,
    /// `chibar(u) = 2 ln P(U > u) / ln P(U > u, V > u) - 1`; `None` without joint exceedances.
    pub chibar: Vec<Option<f64>>,
}

impl ChiCurve {
    /// `chibar` at the largest grid level.
    pub fn chibar_top(&self) -> Option<f64> {
        self.chibar.last().copied().flatten()
    }

    pub fn to_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let f = |v: Option<f64>| v.map_or_else(String::new, |x| x.to_string());
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["u", "chi", "lower", "upper", "chibar"])?;
        for i in 0..self.grid.len() {
            wr.write_record([
                self.grid[i].to_string(),
                f(self.chi[i]),
                f(self.lower[i]),
                f(self.upper[i]),
                f(self.chibar[i]),
            ])?;
        }
        wr.flush().map_err(|e| Error::Serialization(e.to_string()))?;
        Ok(())
    }
}

fn chi_point(u: &[f64], v: &[f64], level: f64) -> (Option<f64>, Option<f64>) {
    let n = u.len() as f64;
    let both_below = u.iter().zip(v).filter(|(a, b)| **a <= level && **b <= level).count() as f64 / n;
    let joint_above = u.iter().zip(v).filter(|(a, b)| **a > level && **b > level).count() as f64 / n;
    let chi = (both_below > 0.0).then(|| 2.0 - both_below.ln() / level.ln());
    let chibar = (joint_above > 0.0 && joint_above < 1.0).then(|| 2.0 * (1.0 - level).ln() / joint_above.ln() - 1.0);
    (chi, chibar)
}

/// Chi and chi-bar curves of a pair after rank transformation, with a
/// percentile bootstrap band for chi (widened to contain the estimate).
pub fn chi_measures(
    x: &[f64],
    y: &[f64],
    grid: &[f64],
    bootstrap: usize,
    confidence: f64,
    seed: u64,
) -> Result<ChiCurve> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(Error::insufficient("chi needs at least two pairs"));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("chi grid must be increasing"));
    }
    for &u in grid {
        check_level(u)?;
    }
    let u = pseudo_observations(x);
    let v = pseudo_observations(y);
    let (chi, chibar): (Vec<_>, Vec<_>) = grid.iter().map(|&l| chi_point(&u, &v, l)).unzip();

    let n = x.len();
    let reps: Vec<Vec<Option<f64>>> = (0..bootstrap)
        .into_par_iter()
        .map(|b| {
            let mut rng = substream(seed, b as u64);
            let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            let bu = pseudo_observations(&idx.iter().map(|&i| x[i]).collect::<Vec<_>>());
            let bv = pseudo_observations(&idx.iter().map(|&i| y[i]).collect::<Vec<_>>());
            grid.iter().map(|&l| chi_point(&bu, &bv, l).0).collect()
        })
        .collect();
    let alpha = 1.0 - confidence;
    let mut lower = Vec::with_capacity(grid.len());
    let mut upper = Vec::with_capacity(grid.len());
    for (g, est) in chi.iter().enumerate() {
        let vals: Vec<f64> = reps.iter().filter_map(|r| r[g]).collect();
        match (est, vals.is_empty()) {
            (Some(e), false) => {
                let s = stats::sorted(&vals);
                lower.push(Some(quantile_sorted(&s, alpha / 2.0).min(*e)));
                upper.push(Some(quantile_sorted(&s, 1.0 - alpha / 2.0).max(*e)));
            }
            _ => {
                lower.push(None);
                upper.push(None);
            }
        }
    }
    Ok(ChiCurve {
        grid: grid.to_vec(),
        chi,
        lower,
        upper,
        chibar,
    })
}
