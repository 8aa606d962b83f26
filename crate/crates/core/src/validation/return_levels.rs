use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::{self, quantile_sorted, substream};

/// Return period of the level of quantile order `p` when `npy` events occur
/// per year on average.
pub fn return_period(p: f64, npy: f64) -> f64 {
    1.0 / (npy * (1.0 - p))
}

/// Quantile order whose level is exceeded once every `period` years.
pub fn order_for_period(period: f64, npy: f64) -> f64 {
    1.0 - 1.0 / (npy * period)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReturnLevelRow {
    pub period: f64,
    pub p: f64,
    /// Level combining simulated extremes with the non-extreme observations.
    pub level: f64,
    /// Purely empirical level from the observations.
    pub empirical: f64,
    pub lower: f64,
    pub upper: f64,
    pub inside: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnLevels {
    /// 1-based time step.
    pub t: usize,
    pub threshold: f64,
    pub npy: f64,
    /// How the extreme part of the conditional probability is estimated.
    pub decomposition: String,
    pub n_exceedances: usize,
    pub p_extreme_given_exceedance: f64,
    pub rows: Vec<ReturnLevelRow>,
}

impl ReturnLevels {
    pub fn all_inside(&self) -> bool {
        self.rows.iter().all(|r| r.inside)
    }

    pub fn to_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["t", "period", "p", "level", "empirical", "lower", "upper", "inside"])?;
        for r in &self.rows {
            wr.write_record([
                self.t.to_string(),
                r.period.to_string(),
                r.p.to_string(),
                r.level.to_string(),
                r.empirical.to_string(),
                r.lower.to_string(),
                r.upper.to_string(),
                r.inside.to_string(),
            ])?;
        }
        wr.flush().map_err(|e| Error::Serialization(e.to_string()))?;
        Ok(())
    }
}

/// Observed values at one time step together with the extreme flag of
/// their cycle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObservedPoint {
    pub value: f64,
    pub extreme: bool,
}

/// Exceedance threshold of a time step: the `1 - p_u` quantile of all
/// observed values.
pub fn return_level_threshold(observed: &[ObservedPoint], p_u: f64) -> f64 {
    stats::quantile(&observed.iter().map(|o| o.value).collect::<Vec<_>>(), 1.0 - p_u)
}

/// Conditional distribution `P(X <= x | X > u)` as a right-continuous step
/// function, mixing extremes (from `sim_sorted`) and non-extremes (from
/// `non_extreme_sorted`).
struct ConditionalCdf<'a> {
    p_c: f64,
    sim_sorted: &'a [f64],
    non_extreme_sorted: &'a [f64],
    n_b: usize,
}

impl ConditionalCdf<'_> {
    fn at(&self, x: f64) -> f64 {
        let frac = |s: &[f64]| s.partition_point(|v| *v <= x);
        let sim = if self.sim_sorted.is_empty() {
            0.0
        } else {
            frac(self.sim_sorted) as f64 / self.sim_sorted.len() as f64
        };
        self.p_c * sim + frac(self.non_extreme_sorted) as f64 / self.n_b as f64
    }

    /// Smallest candidate value whose probability reaches `p`.
    fn level(&self, candidates: &[f64], p: f64) -> f64 {
        let i = candidates.partition_point(|&x| self.at(x) < p - 1e-12);
        candidates[i.min(candidates.len() - 1)]
    }
}

/// Empirical level of order `p` among sorted exceedances (smallest value
/// whose empirical CDF reaches `p`).
fn empirical_level(sorted_b: &[f64], p: f64) -> f64 {
    let n = sorted_b.len();
    let k = ((p - 1e-12) * n as f64).ceil().max(1.0) as usize;
    sorted_b[k.min(n) - 1]
}

/// Return levels at one time step. Above the threshold `u`, the share of
/// observations whose cycle is extreme is taken from the observations and
/// the distribution within the extremes from the simulations; the rest is
/// empirical. The band is a bootstrap of the purely empirical level.
#[allow(clippy::too_many_arguments)]
pub fn return_levels(
    t: usize,
    observed: &[ObservedPoint],
    simulated: &[f64],
    threshold: f64,
    npy: f64,
    periods: &[f64],
    bootstrap: usize,
    confidence: f64,
    seed: u64,
) -> Result<ReturnLevels> {
    if !(npy > 0.0) {
        return Err(Error::invalid("events per year must be positive"));
    }
    if let Some(p) = periods.iter().find(|p| !(**p * npy > 1.0)) {
        return Err(Error::invalid(format!("return period {p} is shorter than the mean spacing of events")));
    }
    let b: Vec<ObservedPoint> = observed.iter().copied().filter(|o| o.value > threshold).collect();
    if b.is_empty() {
        return Err(Error::insufficient(format!("no observation exceeds the threshold at t{t}")));
    }
    let n_b = b.len();
    let n_c = b.iter().filter(|o| o.extreme).count();
    let p_c = n_c as f64 / n_b as f64;
    let sim_sorted = stats::sorted(&simulated.iter().copied().filter(|v| *v > threshold).collect::<Vec<_>>());
    if n_c > 0 && sim_sorted.is_empty() {
        return Err(Error::insufficient(format!("no simulated value exceeds the threshold at t{t}")));
    }
    let non_extreme_sorted = stats::sorted(&b.iter().filter(|o| !o.extreme).map(|o| o.value).collect::<Vec<_>>());
    let cdf = ConditionalCdf {
        p_c,
        sim_sorted: &sim_sorted,
        non_extreme_sorted: &non_extreme_sorted,
        n_b,
    };
    let mut candidates: Vec<f64> = sim_sorted.iter().chain(&non_extreme_sorted).copied().collect();
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();

    let b_values = stats::sorted(&b.iter().map(|o| o.value).collect::<Vec<_>>());
    let boot: Vec<Vec<f64>> = (0..bootstrap)
        .into_par_iter()
        .map(|r| {
            let mut rng = substream(seed, r as u64);
            let s = stats::sorted(&(0..n_b).map(|_| b_values[rng.random_range(0..n_b)]).collect::<Vec<_>>());
            periods.iter().map(|&per| empirical_level(&s, order_for_period(per, npy))).collect()
        })
        .collect();

    let alpha = 1.0 - confidence;
    let rows = periods
        .iter()
        .enumerate()
        .map(|(i, &period)| {
            let p = order_for_period(period, npy);
            let level = cdf.level(&candidates, p);
            let empirical = empirical_level(&b_values, p);
            let (lower, upper) = if boot.is_empty() {
                (empirical, empirical)
            } else {
                let reps = stats::sorted(&boot.iter().map(|r| r[i]).collect::<Vec<_>>());
                (quantile_sorted(&reps, alpha / 2.0), quantile_sorted(&reps, 1.0 - alpha / 2.0))
            };
            ReturnLevelRow {
                period,
                p,
                level,
                empirical,
                lower,
                upper,
                inside: level >= lower && level <= upper,
            }
        })
        .collect();
    Ok(ReturnLevels {
        t,
        threshold,
        npy,
        decomposition: "product".into(),
        n_exceedances: n_b,
        p_extreme_given_exceedance: p_c,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand_distr::{Distribution, Exp};

    #[test]
    fn period_arithmetic() {
        assert_abs_diff_eq!(return_period(0.95, 7.0), 1.0 / 0.35, epsilon = 1e-12);
        assert_abs_diff_eq!(order_for_period(return_period(0.9, 3.0), 3.0), 0.9, epsilon = 1e-12);
    }

    fn observed(n: usize, seed: u64) -> Vec<ObservedPoint> {
        let mut rng = substream(seed, 0);
        let e = Exp::new(1.0).unwrap();
        (0..n)
            .map(|_| {
                let value = e.sample(&mut rng);
                ObservedPoint { value, extreme: value > 3.0 }
            })
            .collect()
    }

    #[test]
    fn observations_as_simulations_match_empirical() {
        let obs = observed(3000, 1);
        let sim: Vec<f64> = obs.iter().filter(|o| o.extreme).map(|o| o.value).collect();
        let periods = [1.0, 2.0, 5.0, 10.0, 20.0];
        let r = return_levels(19, &obs, &sim, 1.0, 100.0, &periods, 300, 0.95, 2).unwrap();
        for row in &r.rows {
            assert_abs_diff_eq!(row.level, row.empirical, epsilon = 1e-12);
            assert!(row.inside);
        }
        assert_eq!(r.decomposition, "product");
    }

    #[test]
    fn levels_increase_with_period() {
        let obs = observed(3000, 3);
        let mut rng = substream(4, 0);
        let sim: Vec<f64> = (0..2000).map(|_| 3.0 + Exp::new(0.7).unwrap().sample(&mut rng)).collect();
        let periods: Vec<f64> = (1..40).map(|k| k as f64).collect();
        let r = return_levels(1, &obs, &sim, 1.0, 100.0, &periods, 100, 0.95, 2).unwrap();
        for w in r.rows.windows(2) {
            assert!(w[1].level >= w[0].level);
        }
    }

    #[test]
    fn empty_exceedance_set_is_an_error() {
        let obs = observed(100, 1);
        assert!(return_levels(1, &obs, &[], 1e9, 10.0, &[5.0], 100, 0.95, 0).is_err());
        assert!(return_levels(1, &obs, &[], 1.0, 0.0, &[5.0], 100, 0.95, 0).is_err());
    }
}
