//! Backward pipeline: Pareto radius and model angle, rejection to the positive
//! orthant, inverse margins, AR inversion from a sampled initial series and
//! optional re-trending.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::angular::{open_uniform, AngularModel};
use crate::error::{Error, Result, StageExt};
use crate::margins::MarginalMixtureModel;
use crate::model::{FittedModel, HistoryEntry, Predecessor};
use crate::polar::cost;
use crate::stats::substream;
use crate::whitening::invert_ar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMode {
    /// Initial series drawn among predecessors of extremes with similar `ℓ(ε)`.
    #[default]
    Conditional,
    Unconditional,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulationConfig {
    pub n_sim: usize,
    pub radius_tail_index: f64,
    /// Use the fitted Hill index of the radii instead of `radius_tail_index`.
    pub hill_radius: bool,
    pub sampling_mode: SamplingMode,
    pub k_nn: usize,
    pub seed: u64,
    pub max_rejections_per_draw: usize,
    /// Also report re-trended series.
    pub retrend: bool,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            n_sim: 2000,
            radius_tail_index: 1.0,
            hill_radius: false,
            sampling_mode: SamplingMode::Conditional,
            k_nn: 20,
            seed: 0,
            max_rejections_per_draw: 10_000,
            retrend: false,
        }
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_sim < 1 {
            return Err(Error::invalid("n_sim must be at least 1"));
        }
        if self.k_nn < 1 {
            return Err(Error::invalid("k_nn must be at least 1"));
        }
        if !(self.radius_tail_index > 0.0) {
            return Err(Error::invalid("radius tail index must be positive"));
        }
        Ok(())
    }
}

/// `u_ell * u^(-1/alpha)`, the Pareto quantile at upper-tail probability `u`.
pub fn radius_from_uniform(u: f64, u_ell: f64, alpha: f64) -> f64 {
    u_ell * u.powf(-1.0 / alpha)
}

pub fn sample_radius<R: Rng + ?Sized>(n: usize, u_ell: f64, alpha: f64, rng: &mut R) -> Result<Vec<f64>> {
    if !(alpha > 0.0) {
        return Err(Error::invalid("radius tail index must be positive"));
    }
    Ok((0..n)
        .map(|_| radius_from_uniform(open_uniform(rng), u_ell, alpha))
        .collect())
}

/// One accepted Fréchet-scale draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrechetDraw {
    pub radius: f64,
    pub z: Vec<f64>,
    pub rejections: usize,
}

/// Draws radius and angle until every coordinate is positive, renewing both on
/// each rejection.
pub fn simulate_frechet_series<R: Rng + ?Sized>(
    u_ell: f64,
    angular: &AngularModel,
    alpha: f64,
    max_rejections: usize,
    rng: &mut R,
) -> Result<FrechetDraw> {
    let mut rejections = 0;
    loop {
        let radius = radius_from_uniform(open_uniform(rng), u_ell, alpha);
        // a degenerate reconstructed angle counts as a rejection
        if let Ok(theta) = angular.sample_angle(rng) {
            if theta.iter().all(|&x| x > 0.0) {
                let z = theta.iter().map(|x| radius * x).collect();
                return Ok(FrechetDraw { radius, z, rejections });
            }
        }
        rejections += 1;
        if rejections > max_rejections {
            return Err(Error::RejectionLimit { limit: max_rejections });
        }
    }
}

/// Coordinate-wise inverse Fréchet transform.
pub fn inverse_margins(z: &[f64], margins: &[MarginalMixtureModel]) -> Result<Vec<f64>> {
    if z.len() != margins.len() {
        return Err(Error::DimensionMismatch {
            expected: margins.len(),
            got: z.len(),
        });
    }
    z.iter()
        .zip(margins)
        .enumerate()
        .map(|(t, (&zt, m))| m.from_frechet(zt).map_err(|e| e.at_step(t + 1)))
        .collect()
}

/// The series an AR inversion starts from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitialSeries<'a> {
    pub prev_cycle: i64,
    /// Lag 1 first.
    pub lags: &'a [Vec<f64>],
}

/// Picks the initial series.
///
/// In conditional mode the draw is among predecessors of extremes (`history`,
/// sorted by `ell_eps`): the window is the `k_nn` entries centred on the rank
/// of `ell_eps_sim`, shifted inwards at the ends of the history. In
/// unconditional mode it is uniform over every observed predecessor (`pool`).
pub fn sample_initial<'h, R: Rng + ?Sized>(
    mode: SamplingMode,
    ell_eps_sim: f64,
    history: &'h [HistoryEntry],
    pool: &'h [Predecessor],
    k_nn: usize,
    rng: &mut R,
) -> Result<InitialSeries<'h>> {
    match mode {
        SamplingMode::Conditional => {
            if history.is_empty() {
                return Err(Error::insufficient("empty conditioning history"));
            }
            let (start, len) = conditional_window(history, ell_eps_sim, k_nn);
            let h = &history[start + rng.random_range(0..len)];
            Ok(InitialSeries {
                prev_cycle: h.prev_cycle,
                lags: &h.lags,
            })
        }
        SamplingMode::Unconditional => {
            if pool.is_empty() {
                return Err(Error::insufficient("empty predecessor pool"));
            }
            let p = &pool[rng.random_range(0..pool.len())];
            Ok(InitialSeries {
                prev_cycle: p.prev_cycle,
                lags: &p.lags,
            })
        }
    }
}

fn conditional_window(history: &[HistoryEntry], target: f64, k_nn: usize) -> (usize, usize) {
    let n = history.len();
    let k = k_nn.clamp(1, n);
    let rank = history.partition_point(|h| h.ell_eps < target);
    let start = rank.saturating_sub(k / 2).min(n - k);
    (start, k)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatedDraw {
    pub draw_id: usize,
    pub radius: f64,
    pub rejections: usize,
    pub initial_cycle: i64,
    pub frechet: Vec<f64>,
    pub eps: Vec<f64>,
    /// Detrended series.
    pub series: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub retrended: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationBatch {
    pub config: SimulationConfig,
    pub draws: Vec<SimulatedDraw>,
}

impl SimulationBatch {
    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    pub fn total_rejections(&self) -> usize {
        self.draws.iter().map(|d| d.rejections).sum()
    }

    /// Accepted draws over proposals.
    pub fn acceptance_rate(&self) -> f64 {
        let n = self.draws.len() as f64;
        n / (n + self.total_rejections() as f64)
    }

    pub fn series(&self) -> Vec<Vec<f64>> {
        self.draws.iter().map(|d| d.series.clone()).collect()
    }

    /// One row per draw: `draw_id, radius, initial_cycle, t1..tT`.
    pub fn to_csv<W: std::io::Write>(&self, w: W, retrended: bool) -> Result<()> {
        let t_len = self.draws.first().map_or(0, |d| d.series.len());
        let mut wr = csv::Writer::from_writer(w);
        let mut header = vec!["draw_id".to_string(), "radius".into(), "initial_cycle".into()];
        header.extend((1..=t_len).map(|t| format!("t{t}")));
        wr.write_record(&header)?;
        for d in &self.draws {
            let values = if retrended {
                d.retrended
                    .as_ref()
                    .ok_or_else(|| Error::invalid("batch was simulated without re-trending"))?
            } else {
                &d.series
            };
            let mut rec = vec![d.draw_id.to_string(), d.radius.to_string(), d.initial_cycle.to_string()];
            rec.extend(values.iter().map(|v| v.to_string()));
            wr.write_record(&rec)?;
        }
        wr.flush().map_err(|e| Error::Serialization(e.to_string()))?;
        Ok(())
    }
}

/// Reads the detrended series back from a batch CSV.
pub fn read_batch_series<R: std::io::Read>(r: R) -> Result<Vec<Vec<f64>>> {
    let mut rd = csv::Reader::from_reader(r);
    let headers = rd.headers()?.clone();
    let first_t = headers
        .iter()
        .position(|h| h == "t1")
        .ok_or_else(|| Error::invalid("batch CSV has no t1 column"))?;
    let mut out = Vec::new();
    for (i, rec) in rd.records().enumerate() {
        let rec = rec?;
        let row: std::result::Result<Vec<f64>, _> = rec.iter().skip(first_t).map(|v| v.trim().parse::<f64>()).collect();
        out.push(row.map_err(|e| Error::Row {
            row: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

fn simulate_one(model: &FittedModel, config: &SimulationConfig, draw_id: usize) -> Result<SimulatedDraw> {
    let mut rng = substream(config.seed, draw_id as u64);
    let fr = simulate_frechet_series(
        model.u_ell,
        &model.angular,
        if config.hill_radius { model.radius_hill_alpha } else { config.radius_tail_index },
        config.max_rejections_per_draw,
        &mut rng,
    )
    .stage("simulate_angle")?;
    let eps = inverse_margins(&fr.z, &model.margins).stage("inverse_margins")?;
    let init = sample_initial(config.sampling_mode, cost(&eps), &model.history, &model.predecessors, config.k_nn, &mut rng)
        .stage("sample_initial")?;
    let series = invert_ar(&model.ar, &eps, init.lags).stage("invert_ar")?;
    let retrended = config
        .retrend
        .then(|| model.trend.retrend_values(&series, init.prev_cycle + model.cycle_step()));
    Ok(SimulatedDraw {
        draw_id,
        radius: fr.radius,
        rejections: fr.rejections,
        initial_cycle: init.prev_cycle,
        frechet: fr.z,
        eps,
        series,
        retrended,
    })
}

/// Simulates `config.n_sim` series. Draw `i` uses its own random stream
/// derived from `(seed, i)`, so the result does not depend on thread count.
pub fn simulate_batch(model: &FittedModel, config: &SimulationConfig) -> Result<SimulationBatch> {
    config.validate()?;
    if config.hill_radius && !(model.radius_hill_alpha.is_finite() && model.radius_hill_alpha > 0.0) {
        return Err(Error::invalid("fitted radius index is not a positive number")).stage("simulate_angle");
    }
    let draws = (0..config.n_sim)
        .into_par_iter()
        .map(|i| simulate_one(model, config, i))
        .collect::<Result<Vec<_>>>()?;
    Ok(SimulationBatch {
        config: config.clone(),
        draws,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::angular::{AngularPca, ScoreMarginals};
    use crate::stats::spearman;
    use approx::assert_abs_diff_eq;

    fn entry(ell_eps: f64, ell_prev: f64) -> HistoryEntry {
        HistoryEntry {
            cycle_index: (ell_eps * 1000.0) as i64,
            prev_cycle: 0,
            ell_prev,
            ell_eps,
            lags: vec![vec![ell_prev]],
        }
    }

    fn point_angular(theta: Vec<f64>) -> AngularModel {
        let d = theta.len();
        let mut eig = vec![vec![0.0; d]; d];
        for (i, e) in eig.iter_mut().enumerate() {
            e[i] = 1.0;
        }
        AngularModel {
            pca: AngularPca {
                mean: theta,
                eigenvectors: eig,
                eigenvalues: vec![0.0; d],
                scores: vec![],
            },
            j: 1,
            marginals: ScoreMarginals::fit(&[vec![0.0]]).unwrap(),
            vine: None,
        }
    }

    #[test]
    fn radius_arithmetic() {
        assert_abs_diff_eq!(radius_from_uniform(0.25, 3.0, 1.0), 12.0);
        let mut rng = substream(9, 0);
        let n = 100_000;
        let r = sample_radius(n, 2.0, 1.0, &mut rng).unwrap();
        assert!(r.iter().all(|&x| x > 2.0));
        let p = r.iter().filter(|&&x| x > 4.0).count() as f64 / n as f64;
        let sd = (0.25f64 / n as f64).sqrt();
        assert!((p - 0.5).abs() < 3.0 * sd, "{p}");
        assert!(sample_radius(1, 1.0, 0.0, &mut rng).is_err());
    }

    #[test]
    fn positive_angle_is_always_accepted() {
        let a = point_angular(vec![0.6, 0.8]);
        let mut rng = substream(1, 0);
        for _ in 0..100 {
            let d = simulate_frechet_series(2.0, &a, 1.0, 10, &mut rng).unwrap();
            assert_eq!(d.rejections, 0);
            assert!(cost(&d.z) > 2.0);
        }
    }

    #[test]
    fn negative_angle_hits_the_rejection_limit() {
        let a = point_angular(vec![0.6, -0.8]);
        let mut rng = substream(1, 0);
        let err = simulate_frechet_series(1e6, &a, 1.0, 50, &mut rng).unwrap_err();
        assert!(matches!(err, Error::RejectionLimit { limit: 50 }));
    }

    #[test]
    fn single_entry_history() {
        let h = vec![entry(1.0, 5.0)];
        let pool = vec![Predecessor {
            prev_cycle: 3,
            lags: vec![vec![7.0]],
        }];
        let mut rng = substream(2, 0);
        let c = sample_initial(SamplingMode::Conditional, 99.0, &h, &pool, 20, &mut rng).unwrap();
        assert_eq!((c.prev_cycle, c.lags), (h[0].prev_cycle, h[0].lags.as_slice()));
        let u = sample_initial(SamplingMode::Unconditional, 99.0, &h, &pool, 20, &mut rng).unwrap();
        assert_eq!((u.prev_cycle, u.lags), (3, pool[0].lags.as_slice()));
        assert!(sample_initial(SamplingMode::Conditional, 1.0, &[], &pool, 20, &mut rng).is_err());
        assert!(sample_initial(SamplingMode::Unconditional, 1.0, &h, &[], 20, &mut rng).is_err());
    }

    #[test]
    fn window_above_range_is_the_top_entries() {
        let h: Vec<HistoryEntry> = (0..100).map(|i| entry(i as f64, 0.0)).collect();
        assert_eq!(conditional_window(&h, 1e9, 20), (80, 20));
        assert_eq!(conditional_window(&h, -1.0, 20), (0, 20));
        assert_eq!(conditional_window(&h, 50.0, 20), (40, 20));
    }

    #[test]
    fn conditional_sampling_keeps_association() {
        // history with strong monotone association between the two costs
        let h: Vec<HistoryEntry> = (0..300).map(|i| entry(i as f64, 2.0 * i as f64 + (i % 7) as f64)).collect();
        let mut rng = substream(3, 0);
        let targets: Vec<f64> = (0..2000).map(|_| rng.random_range(0.0..300.0)).collect();
        let drawn: Vec<f64> = targets
            .iter()
            .map(|&t| sample_initial(SamplingMode::Conditional, t, &h, &[], 20, &mut rng).unwrap().lags[0][0])
            .collect();
        let hist_eps: Vec<f64> = h.iter().map(|e| e.ell_eps).collect();
        let hist_prev: Vec<f64> = h.iter().map(|e| e.ell_prev).collect();
        let oracle = spearman(&hist_eps, &hist_prev);
        assert!((spearman(&targets, &drawn) - oracle).abs() < 0.1);
    }
}
