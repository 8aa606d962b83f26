use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::polar::cost;
use crate::stats;

pub const DEFAULT_BINS: usize = 30;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostComparison {
    /// `bins + 1` common bin edges.
    pub edges: Vec<f64>,
    pub observed_density: Vec<f64>,
    pub simulated_density: Vec<f64>,
    pub observed_mean: f64,
    pub simulated_mean: f64,
    pub observed_max: f64,
    pub simulated_max: f64,
    pub simulated_exceeds_observed_max: bool,
}

impl CostComparison {
    pub fn to_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["lower", "upper", "observed_density", "simulated_density"])?;
        for i in 0..self.observed_density.len() {
            wr.write_record([
                self.edges[i].to_string(),
                self.edges[i + 1].to_string(),
                self.observed_density[i].to_string(),
                self.simulated_density[i].to_string(),
            ])?;
        }
        wr.flush().map_err(|e| Error::Serialization(e.to_string()))?;
        Ok(())
    }
}

fn density(values: &[f64], edges: &[f64]) -> Vec<f64> {
    let bins = edges.len() - 1;
    let (lo, hi) = (edges[0], edges[bins]);
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &v in values {
        let i = if width > 0.0 { (((v - lo) / width) as usize).min(bins - 1) } else { 0 };
        counts[i] += 1;
    }
    let scale = if width > 0.0 { values.len() as f64 * width } else { values.len() as f64 };
    counts.into_iter().map(|c| c as f64 / scale).collect()
}

/// Histograms of the costs of both samples on common bins, plus the maxima.
pub fn cost_distribution_compare(observed: &[Vec<f64>], simulated: &[Vec<f64>], bins: usize) -> Result<CostComparison> {
    if observed.is_empty() || simulated.is_empty() {
        return Err(Error::insufficient("cost comparison needs two nonempty samples"));
    }
    let bins = bins.max(1);
    let a: Vec<f64> = observed.iter().map(|s| cost(s)).collect();
    let b: Vec<f64> = simulated.iter().map(|s| cost(s)).collect();
    let lo = a.iter().chain(&b).copied().fold(f64::INFINITY, f64::min);
    let hi = a.iter().chain(&b).copied().fold(f64::NEG_INFINITY, f64::max);
    let edges: Vec<f64> = (0..=bins).map(|i| lo + (hi - lo) * i as f64 / bins as f64).collect();
    let observed_max = a.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let simulated_max = b.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(CostComparison {
        observed_density: density(&a, &edges),
        simulated_density: density(&b, &edges),
        edges,
        observed_mean: stats::mean(&a),
        simulated_mean: stats::mean(&b),
        observed_max,
        simulated_max,
        simulated_exceeds_observed_max: simulated_max > observed_max,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn identical_samples_give_identical_histograms() {
        let s: Vec<Vec<f64>> = (1..50).map(|i| vec![i as f64, 1.0]).collect();
        let c = cost_distribution_compare(&s, &s, 10).unwrap();
        assert_eq!(c.observed_density, c.simulated_density);
        assert!(!c.simulated_exceeds_observed_max);
        let w = c.edges[1] - c.edges[0];
        assert_abs_diff_eq!(c.observed_density.iter().sum::<f64>() * w, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn larger_simulated_maximum_is_flagged() {
        let a = vec![vec![1.0, 0.0], vec![2.0, 0.0]];
        let b = vec![vec![1.5, 0.0], vec![3.0, 0.0]];
        assert!(cost_distribution_compare(&a, &b, 5).unwrap().simulated_exceeds_observed_max);
        assert!(cost_distribution_compare(&a, &[], 5).is_err());
    }
}
