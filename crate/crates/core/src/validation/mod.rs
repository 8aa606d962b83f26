//! Comparisons between simulated batches and the observed extremes.

mod bands;
mod classify;
mod costs;
mod dependence;
mod return_levels;

pub use bands::{pca_two_sample, percentile_bands, BandCell, PcaKs, PercentileBands, DEFAULT_BOOTSTRAP, DEFAULT_LEVELS};
pub use classify::{
    classification_test, extract_features, ClassificationResult, Classifier, Features, LogisticModel, RandomForest,
    DEFAULT_TREES, RIDGE, TRAIN_FRACTION,
};
pub use costs::{cost_distribution_compare, CostComparison, DEFAULT_BINS};
pub use dependence::{chi_measures, extremogram, extremogram_compare, ChiCurve, ExtremogramComparison};
pub use return_levels::{order_for_period, return_level_threshold, return_levels, return_period, ObservedPoint, ReturnLevelRow, ReturnLevels};

use serde::{Deserialize, Serialize};

use crate::dataset::FunctionalDataset;
use crate::error::{Error, Result, StageExt};
use crate::model::FittedModel;

/// Minimum share of band cells that must contain the simulated percentile.
pub const BAND_PASS_FRACTION: f64 = 0.9;

/// Mean length of a tidal cycle in years.
const CYCLE_YEARS: f64 = 745.0 / (60.0 * 24.0 * 365.25);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ValidationOptions {
    pub seed: u64,
    pub bootstrap: usize,
    pub confidence: f64,
    pub bands: bool,
    pub levels: Vec<f64>,
    pub pca_ks: bool,
    pub pca_dims: usize,
    pub extremogram: bool,
    pub extremogram_q: f64,
    /// Largest lag; `None` uses every lag within a cycle.
    pub max_lag: Option<usize>,
    pub chi: bool,
    /// 1-based time step of the lagged residual pair; `None` uses the middle step.
    pub chi_t: Option<usize>,
    pub chi_grid: Vec<f64>,
    pub return_levels: bool,
    /// 1-based time steps.
    pub return_level_steps: Vec<usize>,
    pub periods: Vec<f64>,
    /// Years covered by the observations; `None` derives it from the data.
    pub years: Option<f64>,
    pub classification: bool,
    pub classifiers: Vec<Classifier>,
    pub features: Vec<Features>,
    pub reps: usize,
    pub n_trees: usize,
    pub cost_compare: bool,
    pub bins: usize,
}

impl Default for ValidationOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            bootstrap: DEFAULT_BOOTSTRAP,
            confidence: 0.95,
            bands: true,
            levels: DEFAULT_LEVELS.to_vec(),
            pca_ks: true,
            pca_dims: 2,
            extremogram: true,
            extremogram_q: 0.9,
            max_lag: None,
            chi: true,
            chi_t: None,
            chi_grid: (0..10).map(|i| 0.5 + 0.05 * i as f64).chain([0.96, 0.97, 0.98]).collect(),
            return_levels: true,
            return_level_steps: vec![13, 19, 25, 31],
            periods: vec![1.0, 2.0, 5.0, 10.0, 20.0, 50.0],
            years: None,
            classification: true,
            classifiers: vec![Classifier::Logistic, Classifier::RandomForest],
            features: vec![Features::Raw, Features::Cost, Features::Angle],
            reps: 100,
            n_trees: DEFAULT_TREES,
            cost_compare: true,
            bins: DEFAULT_BINS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub passed: bool,
    pub hard_checks: Vec<HardCheck>,
    pub n_observed: usize,
    pub n_simulated: usize,
    pub options: ValidationOptions,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bands: Option<PercentileBands>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pca_ks: Option<PcaKs>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub extremogram: Option<ExtremogramComparison>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub chi: Option<ChiCurve>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub return_levels: Option<Vec<ReturnLevels>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub classification: Option<Vec<ClassificationResult>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cost_compare: Option<CostComparison>,
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

impl ValidationReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// One tidy CSV per enabled check, as `(file name, contents)`.
    pub fn csv_artifacts(&self) -> Result<Vec<(String, Vec<u8>)>> {
        let mut out = Vec::new();
        if let Some(b) = &self.bands {
            out.push(("bands.csv".into(), csv_bytes(|w| b.to_csv(w))?));
        }
        if let Some(p) = &self.pca_ks {
            out.push((
                "pca_ks.csv".into(),
                csv_bytes(|w| {
                    let mut wr = csv::Writer::from_writer(w);
                    wr.write_record(["dimension", "explained", "statistic", "p_value"])?;
                    for (j, (e, k)) in p.explained.iter().zip(&p.tests).enumerate() {
                        wr.write_record([(j + 1).to_string(), e.to_string(), k.statistic.to_string(), k.p_value.to_string()])?;
                    }
                    wr.flush().map_err(|e| Error::Serialization(e.to_string()))?;
                    Ok(())
                })?,
            ));
        }
        if let Some(e) = &self.extremogram {
            out.push(("extremogram.csv".into(), csv_bytes(|w| e.to_csv(w))?));
        }
        if let Some(c) = &self.chi {
            out.push(("chi.csv".into(), csv_bytes(|w| c.to_csv(w))?));
        }
        if let Some(levels) = &self.return_levels {
            let mut buf = Vec::new();
            for (i, r) in levels.iter().enumerate() {
                let mut part = Vec::new();
                r.to_csv(&mut part)?;
                let skip = if i == 0 { 0 } else { part.iter().position(|&b| b == b'\n').map_or(part.len(), |p| p + 1) };
                buf.extend_from_slice(&part[skip..]);
            }
            out.push(("return_levels.csv".into(), buf));
        }
        if let Some(cls) = &self.classification {
            out.push((
                "classification.csv".into(),
                csv_bytes(|w| {
                    let mut wr = csv::Writer::from_writer(w);
                    wr.write_record(["features", "classifier", "reps", "mean_accuracy", "lower", "upper"])?;
                    for c in cls {
                        wr.write_record([
                            serde_json::to_value(c.features)?.as_str().unwrap_or_default().to_string(),
                            serde_json::to_value(c.classifier)?.as_str().unwrap_or_default().to_string(),
                            c.reps.to_string(),
                            c.mean_accuracy.to_string(),
                            c.lower.to_string(),
                            c.upper.to_string(),
                        ])?;
                    }
                    wr.flush().map_err(|e| Error::Serialization(e.to_string()))?;
                    Ok(())
                })?,
            ));
        }
        if let Some(c) = &self.cost_compare {
            out.push(("cost_histogram.csv".into(), csv_bytes(|w| c.to_csv(w))?));
        }
        Ok(out)
    }
}

/// Years spanned by a dataset, from its timestamps when every cycle has one
/// and from the cycle indices otherwise.
pub fn observation_years(ds: &FunctionalDataset) -> f64 {
    let dates: Option<Vec<_>> = ds.series().iter().map(|s| s.date()).collect();
    match dates {
        Some(d) if !d.is_empty() => {
            let first = d.iter().min().copied().unwrap_or_default();
            let last = d.iter().max().copied().unwrap_or_default();
            ((last - first).num_days() as f64 + 1.0) / 365.25
        }
        _ => {
            let idx = ds.cycle_indices();
            let span = idx.iter().max().zip(idx.iter().min()).map_or(0, |(a, b)| a - b);
            (span + 1) as f64 * CYCLE_YEARS
        }
    }
}

/// Pairs `(x[M], x[M + step])` of a column over cycles exactly `step` apart.
fn lagged_pairs(ds: &FunctionalDataset, t: usize, step: i64) -> (Vec<f64>, Vec<f64>) {
    let rows = ds.series();
    rows.windows(2)
        .filter(|w| w[1].cycle_index - w[0].cycle_index == step)
        .map(|w| (w[0].values[t], w[1].values[t]))
        .unzip()
}

/// Runs every enabled check on the observed extremes of `raw` (under the
/// stored models) against a batch of detrended simulated series.
pub fn run_validation(
    model: &FittedModel,
    raw: &FunctionalDataset,
    simulated: &[Vec<f64>],
    opts: &ValidationOptions,
) -> Result<ValidationReport> {
    if simulated.is_empty() {
        return Err(Error::insufficient("simulated batch is empty")).stage("validation");
    }
    if let Some(bad) = simulated.iter().find(|s| s.len() != model.t_len) {
        return Err(Error::DimensionMismatch {
            expected: model.t_len,
            got: bad.len(),
        })
        .stage("validation");
    }
    let tr = model.transform(raw)?;
    let observed = tr.extreme_detrended(model.ar.order);
    if observed.is_empty() {
        return Err(Error::insufficient("no observed extremes under the fitted threshold")).stage("validation");
    }
    let t_len = model.t_len;
    let seed = opts.seed;
    let mut hard = Vec::new();

    let bands = if opts.bands {
        let b = percentile_bands(&observed, simulated, &opts.levels, opts.bootstrap, opts.confidence, seed)
            .stage("validation")?;
        let frac = b.inside_fraction();
        hard.push(HardCheck {
            name: "bands".into(),
            passed: frac >= BAND_PASS_FRACTION,
            detail: format!("{:.3} of cells inside (need {BAND_PASS_FRACTION})", frac),
        });
        Some(b)
    } else {
        None
    };

    let pca_ks = opts
        .pca_ks
        .then(|| pca_two_sample(&observed, simulated, opts.pca_dims))
        .transpose()
        .stage("validation")?;

    let extremogram = if opts.extremogram {
        let max_lag = opts.max_lag.unwrap_or(t_len - 1);
        let e = extremogram_compare(&observed, simulated, opts.extremogram_q, max_lag, opts.bootstrap, opts.confidence, seed ^ 0x45)
            .stage("validation")?;
        let outside = e.inside.iter().filter(|b| !**b).count();
        hard.push(HardCheck {
            name: "extremogram".into(),
            passed: e.all_inside(),
            detail: format!("{outside} lags outside the band"),
        });
        Some(e)
    } else {
        None
    };

    let chi = if opts.chi {
        let t = opts.chi_t.unwrap_or(t_len.div_ceil(2));
        if t == 0 || t > t_len {
            return Err(Error::invalid(format!("chi time step {t} outside 1..={t_len}"))).stage("validation");
        }
        let (x, y) = lagged_pairs(&tr.residuals, t - 1, model.cycle_step());
        Some(chi_measures(&x, &y, &opts.chi_grid, opts.bootstrap, opts.confidence, seed ^ 0x43).stage("validation")?)
    } else {
        None
    };

    let return_levels = if opts.return_levels {
        let years = opts.years.unwrap_or_else(|| observation_years(&tr.filtered));
        if !(years > 0.0) {
            return Err(Error::invalid("observation period must be positive")).stage("validation");
        }
        let flags = tr.is_extreme();
        let rows = &tr.detrended.series()[model.ar.order..];
        let mut out = Vec::new();
        for &t in opts.return_level_steps.iter().filter(|&&t| t >= 1 && t <= t_len) {
            let points: Vec<ObservedPoint> = rows
                .iter()
                .zip(&flags)
                .map(|(s, &extreme)| ObservedPoint {
                    value: s.values[t - 1],
                    extreme,
                })
                .collect();
            let threshold = return_level_threshold(&points, model.options.p_u);
            let n_b = points.iter().filter(|p| p.value > threshold).count();
            let npy = n_b as f64 / years;
            let sim_t: Vec<f64> = simulated.iter().map(|s| s[t - 1]).collect();
            out.push(
                return_levels(t, &points, &sim_t, threshold, npy, &opts.periods, opts.bootstrap, opts.confidence, seed ^ t as u64)
                    .stage("validation")?,
            );
        }
        Some(out)
    } else {
        None
    };

    let classification = if opts.classification {
        let mut out = Vec::new();
        for &features in &opts.features {
            for &classifier in &opts.classifiers {
                let r = classification_test(&observed, simulated, features, classifier, opts.reps, opts.n_trees, seed ^ 0xC1)
                    .stage("validation")?;
                if features == Features::Raw {
                    hard.push(HardCheck {
                        name: format!("classification_raw_{}", serde_json::to_value(classifier)?.as_str().unwrap_or_default()),
                        passed: r.contains_half(),
                        detail: format!("accuracy range [{:.3}, {:.3}]", r.lower, r.upper),
                    });
                }
                out.push(r);
            }
        }
        Some(out)
    } else {
        None
    };

    let cost_compare = opts
        .cost_compare
        .then(|| cost_distribution_compare(&observed, simulated, opts.bins))
        .transpose()
        .stage("validation")?;

    Ok(ValidationReport {
        passed: hard.iter().all(|h| h.passed),
        hard_checks: hard,
        n_observed: observed.len(),
        n_simulated: simulated.len(),
        options: opts.clone(),
        bands,
        pca_ks,
        extremogram,
        chi,
        return_levels,
        classification,
        cost_compare,
    })
}
