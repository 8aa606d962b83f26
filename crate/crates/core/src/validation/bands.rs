use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::angular::fit_pca;
use crate::error::{Error, Result};
use crate::polar::cost;
use crate::stats::{self, ks_two_sample, quantile_sorted, substream, KsResult};

pub const DEFAULT_LEVELS: [f64; 5] = [0.05, 0.25, 0.5, 0.75, 0.95];
pub const DEFAULT_BOOTSTRAP: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandCell {
    /// 1-based time step.
    pub t: usize,
    pub level: f64,
    pub observed: f64,
    pub lower: f64,
    pub upper: f64,
    pub simulated: f64,
    pub inside: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PercentileBands {
    pub confidence: f64,
    pub bootstrap: usize,
    pub cells: Vec<BandCell>,
}

impl PercentileBands {
    pub fn inside_fraction(&self) -> f64 {
        self.cells.iter().filter(|c| c.inside).count() as f64 / self.cells.len().max(1) as f64
    }

    pub fn to_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        for c in &self.cells {
            wr.serialize(c)?;
        }
        wr.flush().map_err(|e| Error::Serialization(e.to_string()))?;
        Ok(())
    }
}

pub(crate) fn check_rows(rows: &[Vec<f64>], what: &str) -> Result<usize> {
    let t = rows.first().map(|r| r.len()).unwrap_or(0);
    if rows.is_empty() || t == 0 {
        return Err(Error::insufficient(format!("{what} sample is empty")));
    }
    if let Some(bad) = rows.iter().find(|r| r.len() != t) {
        return Err(Error::DimensionMismatch {
            expected: t,
            got: bad.len(),
        });
    }
    Ok(t)
}

fn column_quantiles(rows: &[&Vec<f64>], t_len: usize, levels: &[f64]) -> Vec<Vec<f64>> {
    (0..t_len)
        .map(|t| {
            let col = stats::sorted(&rows.iter().map(|r| r[t]).collect::<Vec<_>>());
            levels.iter().map(|&q| quantile_sorted(&col, q)).collect()
        })
        .collect()
}

/// Per-time-step percentiles of the observed and simulated samples, with a
/// bootstrap band obtained by resampling whole observed series.
pub fn percentile_bands(
    observed: &[Vec<f64>],
    simulated: &[Vec<f64>],
    levels: &[f64],
    bootstrap: usize,
    confidence: f64,
    seed: u64,
) -> Result<PercentileBands> {
    let t_len = check_rows(observed, "observed")?;
    let t_sim = check_rows(simulated, "simulated")?;
    if t_sim != t_len {
        return Err(Error::DimensionMismatch {
            expected: t_len,
            got: t_sim,
        });
    }
    if let Some(q) = levels.iter().find(|q| !(**q > 0.0 && **q < 1.0)) {
        return Err(Error::invalid(format!("percentile level {q} outside (0, 1)")));
    }
    if bootstrap < 100 {
        return Err(Error::invalid("at least 100 bootstrap resamples are required"));
    }
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::invalid("confidence must lie in (0, 1)"));
    }
    let obs_refs: Vec<&Vec<f64>> = observed.iter().collect();
    let sim_refs: Vec<&Vec<f64>> = simulated.iter().collect();
    let obs_q = column_quantiles(&obs_refs, t_len, levels);
    let sim_q = column_quantiles(&sim_refs, t_len, levels);

    let n = observed.len();
    let boot: Vec<Vec<Vec<f64>>> = (0..bootstrap)
        .into_par_iter()
        .map(|b| {
            let mut rng = substream(seed, b as u64);
            let sample: Vec<&Vec<f64>> = (0..n).map(|_| &observed[rng.random_range(0..n)]).collect();
            column_quantiles(&sample, t_len, levels)
        })
        .collect();

    let alpha = 1.0 - confidence;
    let mut cells = Vec::with_capacity(t_len * levels.len());
    for t in 0..t_len {
        for (l, &level) in levels.iter().enumerate() {
            let reps = stats::sorted(&boot.iter().map(|b| b[t][l]).collect::<Vec<_>>());
            let lower = quantile_sorted(&reps, alpha / 2.0);
            let upper = quantile_sorted(&reps, 1.0 - alpha / 2.0);
            let simulated = sim_q[t][l];
            cells.push(BandCell {
                t: t + 1,
                level,
                observed: obs_q[t][l],
                lower,
                upper,
                simulated,
                inside: simulated >= lower && simulated <= upper,
            });
        }
    }
    Ok(PercentileBands {
        confidence,
        bootstrap,
        cells,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaKs {
    /// Share of the observations' variance per retained dimension.
    pub explained: Vec<f64>,
    pub tests: Vec<KsResult>,
}

/// Compares observed and simulated series on the principal axes of the
/// observed angles `x / ℓ(x)`, after standardising every time step with the
/// observations' mean and standard deviation.
pub fn pca_two_sample(observed: &[Vec<f64>], simulated: &[Vec<f64>], dims: usize) -> Result<PcaKs> {
    let t_len = check_rows(observed, "observed")?;
    let t_sim = check_rows(simulated, "simulated")?;
    if t_sim != t_len {
        return Err(Error::DimensionMismatch {
            expected: t_len,
            got: t_sim,
        });
    }
    let angle = |r: &Vec<f64>| -> Result<Vec<f64>> {
        let c = cost(r);
        if !(c > 0.0) {
            return Err(Error::invalid("series with zero cost has no angle"));
        }
        Ok(r.iter().map(|x| x / c).collect())
    };
    let obs: Vec<Vec<f64>> = observed.iter().map(angle).collect::<Result<_>>()?;
    let sim: Vec<Vec<f64>> = simulated.iter().map(angle).collect::<Result<_>>()?;
    let mut mean = vec![0.0; t_len];
    let mut sd = vec![0.0; t_len];
    for t in 0..t_len {
        let col: Vec<f64> = obs.iter().map(|r| r[t]).collect();
        mean[t] = stats::mean(&col);
        sd[t] = stats::std_dev(&col, 1);
        if !(sd[t] > 0.0) {
            return Err(Error::invalid(format!("observed angles have zero variance at t{}", t + 1)));
        }
    }
    let standardise = |r: &Vec<f64>| -> Vec<f64> { r.iter().enumerate().map(|(t, x)| (x - mean[t]) / sd[t]).collect() };
    let obs: Vec<Vec<f64>> = obs.iter().map(standardise).collect();
    let sim: Vec<Vec<f64>> = sim.iter().map(standardise).collect();

    let pca = fit_pca(&obs)?;
    let dims = dims.clamp(1, t_len);
    let total: f64 = pca.eigenvalues.iter().sum();
    let mut tests = Vec::with_capacity(dims);
    let mut explained = Vec::with_capacity(dims);
    for j in 0..dims {
        if !(pca.eigenvalues[j] > 1e-14 * total.max(1e-300)) {
            return Err(Error::invalid(format!("principal dimension {} is degenerate", j + 1)));
        }
        let a: Vec<f64> = obs.iter().map(|r| pca.project(r)[j]).collect();
        let b: Vec<f64> = sim.iter().map(|r| pca.project(r)[j]).collect();
        tests.push(ks_two_sample(&a, &b)?);
        explained.push(pca.eigenvalues[j] / total);
    }
    Ok(PcaKs { explained, tests })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::StandardNormal;

    fn sample(n: usize, seed: u64, shift: f64) -> Vec<Vec<f64>> {
        let mut rng = substream(seed, 0);
        (0..n)
            .map(|_| {
                let a: f64 = rng.sample(StandardNormal);
                (0..6).map(|t| 1.0 + shift + a * (t as f64 * 0.3).cos() + 0.2 * rng.sample::<f64, _>(StandardNormal)).collect()
            })
            .collect()
    }

    #[test]
    fn resampled_observations_fall_inside() {
        let obs = sample(300, 1, 0.0);
        let mut rng = substream(2, 0);
        let sim: Vec<Vec<f64>> = (0..2000).map(|_| obs[rng.random_range(0..300)].clone()).collect();
        let b = percentile_bands(&obs, &sim, &DEFAULT_LEVELS, 200, 0.95, 3).unwrap();
        assert!(b.inside_fraction() >= 0.95);
        for c in &b.cells {
            assert!(c.lower <= c.observed && c.observed <= c.upper);
        }
    }

    #[test]
    fn shifted_simulations_fall_outside() {
        let obs = sample(300, 1, 0.0);
        let sim = sample(2000, 5, 3.0);
        let b = percentile_bands(&obs, &sim, &[0.5], 200, 0.95, 3).unwrap();
        assert_eq!(b.inside_fraction(), 0.0);
    }

    #[test]
    fn wider_confidence_gives_wider_bands() {
        let obs = sample(200, 1, 0.0);
        let a = percentile_bands(&obs, &obs, &[0.5], 300, 0.8, 9).unwrap();
        let b = percentile_bands(&obs, &obs, &[0.5], 300, 0.95, 9).unwrap();
        for (x, y) in a.cells.iter().zip(&b.cells) {
            assert!(y.upper - y.lower >= x.upper - x.lower);
        }
    }

    #[test]
    fn argument_checks() {
        let obs = sample(50, 1, 0.0);
        assert!(percentile_bands(&obs, &obs, &[1.0], 200, 0.95, 0).is_err());
        assert!(percentile_bands(&obs, &obs, &[0.5], 50, 0.95, 0).is_err());
        assert!(percentile_bands(&obs, &[], &[0.5], 200, 0.95, 0).is_err());
    }

    #[test]
    fn identical_samples_have_zero_ks() {
        let obs = sample(100, 1, 0.0);
        let r = pca_two_sample(&obs, &obs, 2).unwrap();
        assert!(r.tests.iter().all(|k| k.statistic == 0.0));
    }
}
