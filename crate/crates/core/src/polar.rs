//! Cost functional, extreme-set extraction and the radius/angle decomposition.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::FunctionalDataset;
use crate::error::{Error, Result};
use crate::stats::{self, quantile_sorted};

pub const MIN_EXTREMES: usize = 20;

/// Discrete L2 norm of a series (no time-step weighting).
pub fn cost(series: &[f64]) -> f64 {
    stats::euclidean_norm(series)
}

/// How the radius threshold is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "lowercase")]
pub enum ThresholdSpec {
    /// Quantile level of the observed costs.
    Quantile(f64),
    Absolute(f64),
}

impl Default for ThresholdSpec {
    fn default() -> Self {
        ThresholdSpec::Quantile(0.95)
    }
}

impl ThresholdSpec {
    pub fn resolve(&self, costs: &[f64]) -> Result<f64> {
        match *self {
            ThresholdSpec::Absolute(u) => Ok(u),
            ThresholdSpec::Quantile(q) => {
                if !(0.0..1.0).contains(&q) {
                    return Err(Error::invalid(format!("cost quantile {q} outside [0, 1)")));
                }
                Ok(quantile_sorted(&stats::sorted(costs), q))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolarPoint {
    pub source_id: i64,
    pub radius: f64,
    pub angle: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolarRepresentation {
    pub u_ell: f64,
    pub extremes: Vec<PolarPoint>,
}

impl PolarRepresentation {
    pub fn len(&self) -> usize {
        self.extremes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.extremes.is_empty()
    }

    pub fn angles(&self) -> Vec<Vec<f64>> {
        self.extremes.iter().map(|p| p.angle.clone()).collect()
    }

    pub fn radii(&self) -> Vec<f64> {
        self.extremes.iter().map(|p| p.radius).collect()
    }

    pub fn source_ids(&self) -> Vec<i64> {
        self.extremes.iter().map(|p| p.source_id).collect()
    }
}

/// Polar decomposition of every series whose cost exceeds `u_ell`.
pub fn extract_extremes(z: &FunctionalDataset, u_ell: f64) -> Result<PolarRepresentation> {
    let extremes: Vec<PolarPoint> = z
        .series()
        .iter()
        .filter_map(|s| {
            let r = cost(&s.values);
            (r > u_ell).then(|| PolarPoint {
                source_id: s.cycle_index,
                radius: r,
                angle: s.values.iter().map(|v| v / r).collect(),
            })
        })
        .collect();
    if extremes.len() < MIN_EXTREMES {
        return Err(Error::insufficient(format!(
            "{} series exceed u_ell = {u_ell}, need at least {MIN_EXTREMES}",
            extremes.len()
        )));
    }
    Ok(PolarRepresentation { u_ell, extremes })
}

/// Mean absolute projections of the top-`k` angles on `sin(2*pi*j*t/T)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceScan {
    pub k_grid: Vec<usize>,
    pub j_max: usize,
    /// `mean_abs_projection[ik][j - 1]`.
    pub mean_abs_projection: Vec<Vec<f64>>,
}

impl ConvergenceScan {
    pub fn to_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["k", "j", "mean_abs_projection"])?;
        for (k, row) in self.k_grid.iter().zip(&self.mean_abs_projection) {
            for (j, m) in row.iter().enumerate() {
                wr.write_record([k.to_string(), (j + 1).to_string(), m.to_string()])?;
            }
        }
        wr.flush().map_err(|e| Error::Serialization(e.to_string()))?;
        Ok(())
    }
}

pub fn angular_convergence_scan(
    z: &FunctionalDataset,
    j_max: usize,
    k_grid: &[usize],
) -> Result<ConvergenceScan> {
    if j_max < 1 {
        return Err(Error::invalid("j_max must be at least 1"));
    }
    let n = z.len();
    if let Some(&k) = k_grid.iter().find(|&&k| k == 0 || k > n) {
        return Err(Error::invalid(format!("k = {k} outside [1, {n}]")));
    }
    let t_len = z.t_len();
    let basis: Vec<Vec<f64>> = (1..=j_max)
        .map(|j| {
            (1..=t_len)
                .map(|t| (2.0 * std::f64::consts::PI * j as f64 * t as f64 / t_len as f64).sin())
                .collect()
        })
        .collect();

    let mut by_cost: Vec<(f64, &[f64])> = z
        .series()
        .iter()
        .map(|s| (cost(&s.values), s.values.as_slice()))
        .collect();
    by_cost.sort_by(|a, b| b.0.total_cmp(&a.0));

    // |<theta, h_j>| for each series in descending cost order
    let proj: Vec<Vec<f64>> = by_cost
        .par_iter()
        .map(|(r, v)| {
            basis
                .iter()
                .map(|h| if *r > 0.0 { (stats::dot(v, h) / r).abs() } else { 0.0 })
                .collect()
        })
        .collect();

    let mut prefix = vec![vec![0.0; j_max]; n + 1];
    for i in 0..n {
        for j in 0..j_max {
            prefix[i + 1][j] = prefix[i][j] + proj[i][j];
        }
    }
    let mean_abs_projection = k_grid
        .iter()
        .map(|&k| (0..j_max).map(|j| prefix[k][j] / k as f64).collect())
        .collect();
    Ok(ConvergenceScan {
        k_grid: k_grid.to_vec(),
        j_max,
        mean_abs_projection,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn cost_examples() {
        assert_eq!(cost(&[0.0; 5]), 0.0);
        let mut e1 = vec![0.0; 37];
        e1[0] = 1.0;
        assert_eq!(cost(&e1), 1.0);
        assert_abs_diff_eq!(cost(&[2.0; 37]), 2.0 * 37f64.sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(cost(&[2.0; 37]), 12.166, epsilon = 1e-3);
    }

    #[test]
    fn quantile_threshold_keeps_top_five_percent() {
        let rows: Vec<Vec<f64>> = (1..=5180).map(|i| vec![i as f64, 0.5 * i as f64]).collect();
        let ds = FunctionalDataset::from_rows(rows).unwrap();
        let costs: Vec<f64> = ds.series().iter().map(|s| cost(&s.values)).collect();
        let u = ThresholdSpec::Quantile(0.95).resolve(&costs).unwrap();
        let polar = extract_extremes(&ds, u).unwrap();
        assert_eq!(polar.len(), 259);
        for p in &polar.extremes {
            assert_abs_diff_eq!(cost(&p.angle), 1.0, epsilon = 1e-10);
            assert!(p.radius > u);
        }
    }

    #[test]
    fn zero_threshold_on_positive_data_selects_all() {
        let rows: Vec<Vec<f64>> = (1..=30).map(|i| vec![i as f64; 4]).collect();
        let ds = FunctionalDataset::from_rows(rows).unwrap();
        assert_eq!(extract_extremes(&ds, 0.0).unwrap().len(), 30);
        assert!(extract_extremes(&ds, 1e9).is_err());
    }

    #[test]
    fn scan_on_identical_series_is_flat() {
        let ds = FunctionalDataset::from_rows(vec![vec![1.0, 2.0, 3.0, 0.5]; 40]).unwrap();
        let scan = angular_convergence_scan(&ds, 3, &[20, 30, 40]).unwrap();
        for j in 0..3 {
            assert_abs_diff_eq!(scan.mean_abs_projection[0][j], scan.mean_abs_projection[2][j], epsilon = 1e-12);
        }
        assert!(angular_convergence_scan(&ds, 3, &[41]).is_err());
    }
}
