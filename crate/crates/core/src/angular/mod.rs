//! Generative model of the angle: principal components, empirical score
//! margins and a D-vine on the uniformised scores.

mod copula;
mod pca;
mod vine;

pub use copula::{
    fit_family, frank_tau, select_pair, t_nu_grid, Family, PairCopula, PairFit, PairSelection, Rotation,
    SelectionOptions,
};
pub use pca::{fit_pca, select_j, AngularPca, DEFAULT_DROP_THRESHOLD, DEFAULT_MAX_J};
pub use vine::{fit_vine, sample_vine, VineEdge, VineModel, MIN_VINE_OBS};

pub(crate) use vine::open_uniform;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::{self, PlottingEcdf};

/// Interpolated empirical CDFs of the retained PCA scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreMarginals {
    /// Sorted score sample per dimension.
    pub sorted: Vec<Vec<f64>>,
}

impl ScoreMarginals {
    /// Builds the margins from an `n x J` score matrix.
    pub fn fit(scores: &[Vec<f64>]) -> Result<Self> {
        let j = scores.first().map_or(0, |r| r.len());
        if scores.is_empty() || j == 0 {
            return Err(Error::insufficient("no scores to build margins from"));
        }
        let sorted = (0..j)
            .map(|k| stats::sorted(&scores.iter().map(|r| r[k]).collect::<Vec<_>>()))
            .collect();
        Ok(Self { sorted })
    }

    pub fn dim(&self) -> usize {
        self.sorted.len()
    }

    pub fn cdf(&self, i: usize, x: f64) -> f64 {
        PlottingEcdf::new(&self.sorted[i]).cdf(x)
    }

    pub fn quantile(&self, i: usize, q: f64) -> f64 {
        PlottingEcdf::new(&self.sorted[i]).quantile(q)
    }

    pub fn to_uniform(&self, row: &[f64]) -> Vec<f64> {
        row.iter().enumerate().map(|(i, &x)| self.cdf(i, x)).collect()
    }
}

/// How many principal components to keep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum JSelection {
    Fixed { j: usize },
    RelativeDrop { threshold: f64, max_j: usize },
}

impl Default for JSelection {
    fn default() -> Self {
        JSelection::RelativeDrop {
            threshold: DEFAULT_DROP_THRESHOLD,
            max_j: DEFAULT_MAX_J,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct AngularOptions {
    pub j: JSelection,
    pub selection: SelectionOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngularModel {
    pub pca: AngularPca,
    pub j: usize,
    pub marginals: ScoreMarginals,
    /// Absent when `j == 1`.
    pub vine: Option<VineModel>,
}

pub fn fit_angular_model(angles: &[Vec<f64>], opts: &AngularOptions) -> Result<AngularModel> {
    let pca = fit_pca(angles)?;
    let j = match opts.j {
        JSelection::Fixed { j } => {
            if j == 0 || j > pca.dim() {
                return Err(Error::invalid(format!("J = {j} outside [1, {}]", pca.dim())));
            }
            j
        }
        JSelection::RelativeDrop { threshold, max_j } => select_j(&pca, threshold, max_j),
    };
    let scores = pca.truncated_scores(j);
    let marginals = ScoreMarginals::fit(&scores)?;
    let vine = if j >= 2 {
        let u: Vec<Vec<f64>> = scores.iter().map(|r| marginals.to_uniform(r)).collect();
        Some(fit_vine(&u, &opts.selection)?)
    } else {
        None
    };
    Ok(AngularModel {
        pca,
        j,
        marginals,
        vine,
    })
}

/// Maps a row of uniforms to a unit-cost angle through the score quantiles
/// and the truncated principal-component expansion.
pub fn reconstruct_theta(pca: &AngularPca, marginals: &ScoreMarginals, uniform_row: &[f64]) -> Result<Vec<f64>> {
    if uniform_row.len() != marginals.dim() {
        return Err(Error::DimensionMismatch {
            expected: marginals.dim(),
            got: uniform_row.len(),
        });
    }
    let scores: Vec<f64> = uniform_row
        .iter()
        .enumerate()
        .map(|(i, &u)| marginals.quantile(i, u))
        .collect();
    let theta = pca.reconstruct(&scores);
    let c = crate::polar::cost(&theta);
    if !(c > 1e-300) {
        return Err(Error::Singular("reconstructed angle is identically zero".into()));
    }
    Ok(theta.into_iter().map(|x| x / c).collect())
}

impl AngularModel {
    pub fn sample_uniforms<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match &self.vine {
            Some(v) => v.sample_row(rng),
            None => (0..self.j).map(|_| open_uniform(rng)).collect(),
        }
    }

    pub fn sample_angle<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<f64>> {
        let u = self.sample_uniforms(rng);
        reconstruct_theta(&self.pca, &self.marginals, &u)
    }

    /// Share of variance explained by the retained components.
    pub fn explained_ratio(&self) -> f64 {
        self.pca.explained_ratio(self.j)
    }
}

/// Copula density on an `m x m` midpoint grid, as `(u, v, density)` rows.
pub fn density_grid(copula: &PairCopula, m: usize) -> Vec<(f64, f64, f64)> {
    let step = 1.0 / m as f64;
    let mut out = Vec::with_capacity(m * m);
    for a in 0..m {
        for b in 0..m {
            let (u, v) = ((a as f64 + 0.5) * step, (b as f64 + 0.5) * step);
            out.push((u, v, copula.pdf(u, v)));
        }
    }
    out
}
