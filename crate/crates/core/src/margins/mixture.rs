use serde::{Deserialize, Serialize};

use super::gpd::{fit_gpd, GpdMethod, GpdParams};
use crate::error::{Error, Result};
use crate::stats::{sorted, PlottingEcdf};

/// Semi-parametric marginal law: interpolated empirical CDF below the
/// threshold `u`, GPD tail above it, spliced so that `F(u) = 1 - p_u`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalMixtureModel {
    /// Ascending sample the empirical part is built from.
    pub sample: Vec<f64>,
    pub p_u: f64,
    pub u: f64,
    pub sigma: f64,
    pub gamma: f64,
}

pub const DEFAULT_P_U: f64 = 0.1;

pub fn fit_marginal_mixture(sample: &[f64], p_u: f64) -> Result<MarginalMixtureModel> {
    if !(p_u > 0.0 && p_u < 0.5) {
        return Err(Error::invalid(format!("p_u must lie in (0, 0.5), got {p_u}")));
    }
    if sample.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("sample contains non-finite values"));
    }
    if sample.is_empty() {
        return Err(Error::insufficient("empty sample"));
    }
    let sample = sorted(sample);
    // threshold on the same interpolated plotting-position scale as the CDF,
    // so the two branches join exactly at 1 - p_u
    let u = PlottingEcdf::new(&sample).quantile(1.0 - p_u);
    let gpd = fit_gpd(&sample, u, GpdMethod::Mle)?;
    Ok(MarginalMixtureModel {
        sample,
        p_u,
        u,
        sigma: gpd.sigma,
        gamma: gpd.gamma,
    })
}

impl MarginalMixtureModel {
    pub fn gpd(&self) -> GpdParams {
        GpdParams {
            threshold: self.u,
            sigma: self.sigma,
            gamma: self.gamma,
        }
    }

    pub fn n(&self) -> usize {
        self.sample.len()
    }

    fn floor(&self) -> f64 {
        0.5 / self.n() as f64
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x < self.u {
            let n = self.n() as f64;
            PlottingEcdf::new(&self.sample)
                .cdf(x)
                .clamp(0.5 / n, 1.0 - 0.5 / n)
        } else {
            let f = (1.0 - self.p_u) + self.p_u * self.gpd().cdf_clamped(x);
            // keep away from exactly 1 so the Frechet transform stays finite
            f.min(1.0 - f64::EPSILON)
        }
    }

    pub fn quantile(&self, q: f64) -> Result<f64> {
        if !(q > 0.0 && q < 1.0) {
            return Err(Error::invalid(format!("quantile level {q} outside (0, 1)")));
        }
        let splice = 1.0 - self.p_u;
        if q >= splice {
            let tail_q = ((q - splice) / self.p_u).min(1.0 - f64::EPSILON);
            Ok(self.gpd().quantile_unchecked(tail_q))
        } else {
            Ok(PlottingEcdf::new(&self.sample).quantile(q.max(self.floor())))
        }
    }

    /// Unit-Frechet transform `-1 / ln F(x)`.
    pub fn to_frechet(&self, x: f64) -> f64 {
        -1.0 / self.cdf(x).ln()
    }

    pub fn from_frechet(&self, z: f64) -> Result<f64> {
        if !(z > 0.0) {
            return Err(Error::invalid(format!("Frechet value must be positive, got {z}")));
        }
        self.quantile((-1.0 / z).exp())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn normal_model(n: usize, seed: u64) -> MarginalMixtureModel {
        let mut rng = crate::stats::substream(seed, 0);
        let s: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        fit_marginal_mixture(&s, DEFAULT_P_U).unwrap()
    }

    #[test]
    fn splice_is_exact() {
        let m = normal_model(2000, 1);
        assert_abs_diff_eq!(m.cdf(m.u), 0.9, epsilon = 1e-15);
        assert_abs_diff_eq!(m.quantile(0.9).unwrap(), m.u, epsilon = 1e-12);
        let below = m.cdf(m.u - 1e-9);
        assert!((below - 0.9).abs() <= 1.0 / m.n() as f64);
    }

    #[test]
    fn median_is_half() {
        let m = normal_model(2001, 2);
        let med = m.sample[1000];
        assert!((m.cdf(med) - 0.5).abs() <= 1.0 / 2001.0);
    }

    #[test]
    fn tail_quantile_closed_form() {
        let m = normal_model(3000, 3);
        let q = 0.999;
        let expected = if m.gamma.abs() < 1e-9 {
            m.u + m.sigma * (m.p_u / (1.0 - q)).ln()
        } else {
            m.u + m.sigma / m.gamma * ((m.p_u / (1.0 - q)).powf(m.gamma) - 1.0)
        };
        assert_abs_diff_eq!(m.quantile(q).unwrap(), expected, epsilon = 1e-9);
    }

    #[test]
    fn frechet_anchor_values() {
        let m = normal_model(1000, 4);
        // the CDF equals 0.5 at the interpolated median
        let x = m.quantile(0.5).unwrap();
        assert_abs_diff_eq!(m.to_frechet(x), -1.0 / 0.5f64.ln(), epsilon = 1e-9);
        let x = m.quantile((-1f64).exp()).unwrap();
        assert_abs_diff_eq!(m.to_frechet(x), 1.0, epsilon = 1e-9);
        assert!(m.from_frechet(0.0).is_err());
    }

    #[test]
    fn parameter_checks() {
        assert!(fit_marginal_mixture(&[1.0, 2.0], 0.6).is_err());
        assert!(fit_marginal_mixture(&[1.0, f64::NAN], 0.1).is_err());
        // 100 points leave 10 exceedances, too few for the tail fit
        let s: Vec<f64> = (0..100).map(f64::from).collect();
        assert!(fit_marginal_mixture(&s, 0.1).is_err());
    }
}
