//! The complete fitted model set and the forward transform chain from raw
//! cycle series to Fréchet-scale residuals.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::angular::{fit_angular_model, AngularModel, AngularOptions};
use crate::dataset::{detrend, filter_season, fit_trend, subsample, FunctionalDataset, TrendModel, WINTER_MONTHS};
use crate::error::{Error, Result, StageExt};
use crate::margins::{fit_marginal_mixture, MarginalMixtureModel, DEFAULT_P_U};
use crate::polar::{cost, extract_extremes, PolarRepresentation, ThresholdSpec};
use crate::whitening::{fit_ar, ArModel};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    /// Months kept by the seasonal filter; `None` (an empty list when
    /// serialised) keeps every cycle.
    #[serde(with = "season_serde")]
    pub season: Option<BTreeSet<u32>>,
    pub delta: usize,
    pub ar_order: usize,
    pub p_u: f64,
    pub threshold: ThresholdSpec,
    pub angular: AngularOptions,
    /// Fit and remove a linear trend in the cycle index.
    pub detrend: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            season: Some(WINTER_MONTHS.into_iter().collect()),
            delta: 3,
            ar_order: 1,
            p_u: DEFAULT_P_U,
            threshold: ThresholdSpec::default(),
            angular: AngularOptions::default(),
            detrend: true,
        }
    }
}

mod season_serde {
    use std::collections::BTreeSet;

    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<BTreeSet<u32>>, s: S) -> Result<S::Ok, S::Error> {
        v.clone().unwrap_or_default().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<BTreeSet<u32>>, D::Error> {
        let set = BTreeSet::<u32>::deserialize(d)?;
        Ok((!set.is_empty()).then_some(set))
    }
}

/// Predecessor information attached to one observed extreme.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    /// Cycle index of the extreme itself.
    pub cycle_index: i64,
    /// Cycle index of the lag-1 predecessor.
    pub prev_cycle: i64,
    /// Cost of the lag-1 detrended predecessor.
    pub ell_prev: f64,
    /// Cost of the extreme's residual.
    pub ell_eps: f64,
    /// Detrended predecessors, lag 1 first.
    pub lags: Vec<Vec<f64>>,
}

/// A detrended series (with its own lags) usable as the initial series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Predecessor {
    pub prev_cycle: i64,
    /// Lag 1 first.
    pub lags: Vec<Vec<f64>>,
}

/// Every model needed to simulate, serialised as one bundle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub schema_version: u32,
    pub options: FitOptions,
    pub t_len: usize,
    pub trend: TrendModel,
    pub ar: ArModel,
    pub margins: Vec<MarginalMixtureModel>,
    pub u_ell: f64,
    /// Pareto index of the observed radii above `u_ell` (Hill estimate).
    pub radius_hill_alpha: f64,
    pub extreme_ids: Vec<i64>,
    pub angular: AngularModel,
    /// Sorted by `ell_eps`.
    pub history: Vec<HistoryEntry>,
    /// Every observed series that can start an AR inversion.
    pub predecessors: Vec<Predecessor>,
}

/// Intermediate datasets of the forward chain.
#[derive(Debug, Clone, PartialEq)]
pub struct Transformed {
    /// Seasonal selection of the raw input.
    pub filtered: FunctionalDataset,
    /// Detrended and subsampled series.
    pub detrended: FunctionalDataset,
    /// AR residuals, aligned with `detrended` from position `ar.order` on.
    pub residuals: FunctionalDataset,
    /// Residuals on the unit-Fréchet scale.
    pub frechet: FunctionalDataset,
    /// Positions in `residuals` whose Fréchet cost exceeds `u_ell`.
    pub extreme_positions: Vec<usize>,
}

impl Transformed {
    /// Detrended values of the extreme cycles.
    pub fn extreme_detrended(&self, ar_order: usize) -> Vec<Vec<f64>> {
        self.extreme_positions
            .iter()
            .map(|&m| self.detrended.series()[m + ar_order].values.clone())
            .collect()
    }

    pub fn is_extreme(&self) -> Vec<bool> {
        let mut flags = vec![false; self.residuals.len()];
        for &m in &self.extreme_positions {
            flags[m] = true;
        }
        flags
    }
}

fn prefilter(raw: &FunctionalDataset, opts: &FitOptions) -> Result<FunctionalDataset> {
    match &opts.season {
        Some(months) => filter_season(raw, months),
        None => Ok(raw.clone()),
    }
}

fn frechet_of(residuals: &FunctionalDataset, margins: &[MarginalMixtureModel]) -> FunctionalDataset {
    let values = residuals
        .series()
        .par_iter()
        .map(|s| s.values.iter().zip(margins).map(|(x, m)| m.to_frechet(*x)).collect())
        .collect();
    residuals.with_values(values)
}

fn extreme_positions(frechet: &FunctionalDataset, u_ell: f64) -> Vec<usize> {
    frechet
        .series()
        .iter()
        .enumerate()
        .filter(|(_, s)| cost(&s.values) > u_ell)
        .map(|(i, _)| i)
        .collect()
}

fn build_history(detrended: &FunctionalDataset, residuals: &FunctionalDataset, p: usize, positions: &[usize]) -> Vec<HistoryEntry> {
    let rows = detrended.series();
    let mut history: Vec<HistoryEntry> = positions
        .iter()
        .map(|&m| {
            let at = m + p;
            let lags: Vec<Vec<f64>> = (1..=p).map(|i| rows[at - i].values.clone()).collect();
            HistoryEntry {
                cycle_index: rows[at].cycle_index,
                prev_cycle: rows[at - 1].cycle_index,
                ell_prev: cost(&lags[0]),
                ell_eps: cost(&residuals.series()[m].values),
                lags,
            }
        })
        .collect();
    history.sort_by(|a, b| a.ell_eps.total_cmp(&b.ell_eps).then(a.cycle_index.cmp(&b.cycle_index)));
    history
}

/// `1 / mean(ln(r / u))` over radii above `u`.
pub fn radius_hill_alpha(radii: &[f64], u: f64) -> f64 {
    let logs: Vec<f64> = radii.iter().filter(|r| **r > u).map(|r| (r / u).ln()).collect();
    1.0 / crate::stats::mean(&logs)
}

fn build_predecessors(detrended: &FunctionalDataset, p: usize) -> Vec<Predecessor> {
    let rows = detrended.series();
    (p.saturating_sub(1)..rows.len())
        .map(|m| Predecessor {
            prev_cycle: rows[m].cycle_index,
            lags: (0..p).map(|i| rows[m - i].values.clone()).collect(),
        })
        .collect()
}

/// Runs the full forward chain and fits every model.
pub fn fit_model(raw: &FunctionalDataset, opts: &FitOptions) -> Result<(FittedModel, Transformed, PolarRepresentation)> {
    let filtered = prefilter(raw, opts).stage("dataset")?;
    let trend = if opts.detrend {
        fit_trend(&filtered).stage("dataset")?
    } else {
        TrendModel::zero(filtered.t_len())
    };
    let detrended = subsample(&detrend(&filtered, &trend).stage("dataset")?, opts.delta).stage("dataset")?;

    let (ar, res) = fit_ar(&detrended, opts.ar_order).stage("whitening")?;
    let residuals = res.residuals;

    let margins: Vec<MarginalMixtureModel> = (0..residuals.t_len())
        .into_par_iter()
        .map(|t| {
            fit_marginal_mixture(&residuals.column(t), opts.p_u).map_err(|e| e.at_step(t + 1))
        })
        .collect::<Result<_>>()
        .stage("margins")?;
    let frechet = frechet_of(&residuals, &margins);

    let costs: Vec<f64> = frechet.series().iter().map(|s| cost(&s.values)).collect();
    let u_ell = opts.threshold.resolve(&costs).stage("polar")?;
    let polar = extract_extremes(&frechet, u_ell).stage("polar")?;
    let positions = extreme_positions(&frechet, u_ell);

    let angular = fit_angular_model(&polar.angles(), &opts.angular).stage("angular_model")?;
    let history = build_history(&detrended, &residuals, opts.ar_order, &positions);

    let model = FittedModel {
        schema_version: SCHEMA_VERSION,
        options: opts.clone(),
        t_len: raw.t_len(),
        trend,
        ar,
        margins,
        u_ell,
        radius_hill_alpha: radius_hill_alpha(&polar.radii(), u_ell),
        extreme_ids: polar.source_ids(),
        angular,
        history,
        predecessors: build_predecessors(&detrended, opts.ar_order),
    };
    let transformed = Transformed {
        filtered,
        detrended,
        residuals,
        frechet,
        extreme_positions: positions,
    };
    Ok((model, transformed, polar))
}

impl FittedModel {
    /// Applies the stored trend, AR and margin models to new raw data.
    pub fn transform(&self, raw: &FunctionalDataset) -> Result<Transformed> {
        if raw.t_len() != self.t_len {
            return Err(Error::DimensionMismatch {
                expected: self.t_len,
                got: raw.t_len(),
            })
            .stage("dataset");
        }
        let filtered = prefilter(raw, &self.options).stage("dataset")?;
        let detrended = subsample(&detrend(&filtered, &self.trend).stage("dataset")?, self.options.delta).stage("dataset")?;
        let p = self.ar.order;
        if detrended.len() <= p {
            return Err(Error::insufficient("not enough cycles for the AR lags")).stage("whitening");
        }
        let rows = detrended.rows();
        let values: Vec<Vec<f64>> = (p..rows.len())
            .map(|m| {
                let lags: Vec<Vec<f64>> = (1..=p).map(|i| rows[m - i].clone()).collect();
                rows[m].iter().zip(self.ar.predict(&lags)).map(|(x, f)| x - f).collect()
            })
            .collect();
        let residuals = detrended.subset(p..rows.len(), detrended.delta()).with_values(values);
        let frechet = frechet_of(&residuals, &self.margins);
        let extreme_positions = extreme_positions(&frechet, self.u_ell);
        Ok(Transformed {
            filtered,
            detrended,
            residuals,
            frechet,
            extreme_positions,
        })
    }

    /// Cycle spacing between a predecessor and its successor.
    pub fn cycle_step(&self) -> i64 {
        self.ar.delta as i64
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let version = value.get("schema_version").and_then(|v| v.as_u64());
        if version != Some(SCHEMA_VERSION as u64) {
            return Err(Error::invalid(format!(
                "model bundle schema version {version:?} does not match {SCHEMA_VERSION}"
            )));
        }
        Ok(serde_json::from_value(value)?)
    }
}
