//! Bivariate parametric copulas: densities, h-functions and their inverses,
//! dependence summaries, and per-family maximum likelihood.
//!
//! Conventions: `h_given_v(u, v) = dC/dv = P(U <= u | V = v)` and
//! `h_given_u(u, v) = dC/du = P(V <= v | U = u)`. All base families are
//! exchangeable; rotated variants are built from the base functions.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::stats::{
    self, grid_refine_max, kendall_tau, normal_cdf, normal_quantile, student_t_cdf, student_t_quantile,
    TQuantileTable,
};

const EDGE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Independence,
    Gaussian,
    StudentT,
    Clayton,
    Gumbel,
    Frank,
}

impl Family {
    pub const ALL: [Family; 6] = [
        Family::Independence,
        Family::Gaussian,
        Family::StudentT,
        Family::Clayton,
        Family::Gumbel,
        Family::Frank,
    ];

    pub fn n_params(self) -> usize {
        match self {
            Family::Independence => 0,
            Family::StudentT => 2,
            _ => 1,
        }
    }

    fn rotatable(self) -> bool {
        matches!(self, Family::Clayton | Family::Gumbel)
    }
}

/// Counter-clockwise rotation of an exchangeable base copula.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum Rotation {
    #[default]
    #[serde(rename = "0")]
    R0,
    #[serde(rename = "90")]
    R90,
    #[serde(rename = "180")]
    R180,
    #[serde(rename = "270")]
    R270,
}

impl Rotation {
    pub fn degrees(self) -> u32 {
        match self {
            Rotation::R0 => 0,
            Rotation::R90 => 90,
            Rotation::R180 => 180,
            Rotation::R270 => 270,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairCopula {
    pub family: Family,
    #[serde(default)]
    pub rotation: Rotation,
    pub par: f64,
    #[serde(default)]
    pub par2: f64,
}

fn clamp01(x: f64) -> f64 {
    x.clamp(EDGE, 1.0 - EDGE)
}

impl PairCopula {
    pub fn independence() -> Self {
        Self {
            family: Family::Independence,
            rotation: Rotation::R0,
            par: 0.0,
            par2: 0.0,
        }
    }

    pub fn gaussian(rho: f64) -> Self {
        Self {
            family: Family::Gaussian,
            rotation: Rotation::R0,
            par: rho,
            par2: 0.0,
        }
    }

    pub fn student_t(rho: f64, nu: f64) -> Self {
        Self {
            family: Family::StudentT,
            rotation: Rotation::R0,
            par: rho,
            par2: nu,
        }
    }

    pub fn clayton(theta: f64, rotation: Rotation) -> Self {
        Self {
            family: Family::Clayton,
            rotation,
            par: theta,
            par2: 0.0,
        }
    }

    pub fn gumbel(theta: f64, rotation: Rotation) -> Self {
        Self {
            family: Family::Gumbel,
            rotation,
            par: theta,
            par2: 0.0,
        }
    }

    pub fn frank(theta: f64) -> Self {
        Self {
            family: Family::Frank,
            rotation: Rotation::R0,
            par: theta,
            par2: 0.0,
        }
    }

    /// Checks the parameters against the family's admissible range.
    pub fn validate(&self) -> Result<()> {
        let ok = match self.family {
            Family::Independence => true,
            Family::Gaussian => self.par.abs() < 1.0,
            Family::StudentT => self.par.abs() < 1.0 && self.par2 > 1.0,
            Family::Clayton => self.par > 0.0,
            Family::Gumbel => self.par >= 1.0,
            Family::Frank => self.par != 0.0 && self.par.is_finite(),
        };
        let rot_ok = self.family.rotatable() || self.rotation == Rotation::R0;
        if ok && rot_ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("inadmissible copula parameters {self:?}")))
        }
    }

    pub fn ln_pdf(&self, u: f64, v: f64) -> f64 {
        let (u, v) = (clamp01(u), clamp01(v));
        let (a, b) = match self.rotation {
            Rotation::R0 => (u, v),
            Rotation::R90 => (1.0 - u, v),
            Rotation::R180 => (1.0 - u, 1.0 - v),
            Rotation::R270 => (u, 1.0 - v),
        };
        base_ln_pdf(self.family, self.par, self.par2, a, b)
    }

    pub fn pdf(&self, u: f64, v: f64) -> f64 {
        self.ln_pdf(u, v).exp()
    }

    /// `P(U <= u | V = v)`.
    pub fn h_given_v(&self, u: f64, v: f64) -> f64 {
        let (u, v) = (clamp01(u), clamp01(v));
        let h = |a, b| base_h(self.family, self.par, self.par2, a, b);
        match self.rotation {
            Rotation::R0 => h(u, v),
            Rotation::R90 => 1.0 - h(1.0 - u, v),
            Rotation::R180 => 1.0 - h(1.0 - u, 1.0 - v),
            Rotation::R270 => h(u, 1.0 - v),
        }
    }

    /// `P(V <= v | U = u)`.
    pub fn h_given_u(&self, u: f64, v: f64) -> f64 {
        let (u, v) = (clamp01(u), clamp01(v));
        let h = |a, b| base_h(self.family, self.par, self.par2, a, b);
        match self.rotation {
            Rotation::R0 => h(v, u),
            Rotation::R90 => h(v, 1.0 - u),
            Rotation::R180 => 1.0 - h(1.0 - v, 1.0 - u),
            Rotation::R270 => 1.0 - h(1.0 - v, u),
        }
    }

    /// Solves `h_given_v(u, v) = w` for `u`.
    pub fn h_inv_given_v(&self, w: f64, v: f64) -> f64 {
        let (w, v) = (clamp01(w), clamp01(v));
        let hi = |a, b| base_h_inv(self.family, self.par, self.par2, a, b);
        match self.rotation {
            Rotation::R0 => hi(w, v),
            Rotation::R90 => 1.0 - hi(1.0 - w, v),
            Rotation::R180 => 1.0 - hi(1.0 - w, 1.0 - v),
            Rotation::R270 => hi(w, 1.0 - v),
        }
    }

    /// Solves `h_given_u(u, v) = w` for `v`.
    pub fn h_inv_given_u(&self, w: f64, u: f64) -> f64 {
        let (w, u) = (clamp01(w), clamp01(u));
        let hi = |a, b| base_h_inv(self.family, self.par, self.par2, a, b);
        match self.rotation {
            Rotation::R0 => hi(w, u),
            Rotation::R90 => hi(w, 1.0 - u),
            Rotation::R180 => 1.0 - hi(1.0 - w, 1.0 - u),
            Rotation::R270 => 1.0 - hi(1.0 - w, u),
        }
    }

    pub fn kendall_tau(&self) -> f64 {
        let base = match self.family {
            Family::Independence => 0.0,
            Family::Gaussian | Family::StudentT => 2.0 / std::f64::consts::PI * self.par.asin(),
            Family::Clayton => self.par / (self.par + 2.0),
            Family::Gumbel => 1.0 - 1.0 / self.par,
            Family::Frank => frank_tau(self.par),
        };
        match self.rotation {
            Rotation::R90 | Rotation::R270 => -base,
            _ => base,
        }
    }

    /// Upper and lower tail dependence coefficients.
    pub fn tail_dependence(&self) -> (f64, f64) {
        let (upper, lower) = match self.family {
            Family::StudentT => {
                let (rho, nu) = (self.par, self.par2);
                let arg = -((nu + 1.0) * (1.0 - rho) / (1.0 + rho)).sqrt();
                let l = 2.0 * student_t_cdf(arg, nu + 1.0);
                (l, l)
            }
            Family::Clayton => (0.0, 2f64.powf(-1.0 / self.par)),
            Family::Gumbel => (2.0 - 2f64.powf(1.0 / self.par), 0.0),
            _ => (0.0, 0.0),
        };
        match self.rotation {
            Rotation::R0 => (upper, lower),
            Rotation::R180 => (lower, upper),
            Rotation::R90 | Rotation::R270 => (0.0, 0.0),
        }
    }

    pub fn log_likelihood(&self, u: &[f64], v: &[f64]) -> f64 {
        u.iter().zip(v).map(|(&a, &b)| self.ln_pdf(a, b)).sum()
    }

    pub fn name(&self) -> String {
        match (self.family.rotatable(), self.rotation) {
            (true, r) if r != Rotation::R0 => format!("{:?}{}", self.family, r.degrees()).to_lowercase(),
            _ => serde_json::to_value(self.family)
                .ok()
                .and_then(|v| v.as_str().map(str::to_string))
                .unwrap_or_default(),
        }
    }
}

fn base_ln_pdf(family: Family, par: f64, par2: f64, u: f64, v: f64) -> f64 {
    match family {
        Family::Independence => 0.0,
        Family::Gaussian => gaussian_ln_pdf_xy(par, normal_quantile(u), normal_quantile(v)),
        Family::StudentT => {
            let (x, y) = (student_t_quantile(u, par2), student_t_quantile(v, par2));
            t_ln_pdf_xy(par, par2, t_ln_const(par2), x, y)
        }
        Family::Clayton => clayton_ln_pdf(par, u, v),
        Family::Gumbel => gumbel_ln_pdf(par, u, v),
        Family::Frank => frank_ln_pdf(par, u, v),
    }
}

fn gaussian_ln_pdf_xy(rho: f64, x: f64, y: f64) -> f64 {
    let r2 = 1.0 - rho * rho;
    -0.5 * r2.ln() - (rho * rho * (x * x + y * y) - 2.0 * rho * x * y) / (2.0 * r2)
}

fn t_ln_const(nu: f64) -> f64 {
    ln_gamma((nu + 2.0) / 2.0) + ln_gamma(nu / 2.0) - 2.0 * ln_gamma((nu + 1.0) / 2.0)
}

fn t_ln_pdf_xy(rho: f64, nu: f64, ln_const: f64, x: f64, y: f64) -> f64 {
    let r2 = 1.0 - rho * rho;
    let q = (x * x + y * y - 2.0 * rho * x * y) / (nu * r2);
    ln_const - 0.5 * r2.ln() - (nu + 2.0) / 2.0 * q.ln_1p()
        + (nu + 1.0) / 2.0 * ((x * x / nu).ln_1p() + (y * y / nu).ln_1p())
}

/// `ln(u^-theta + v^-theta - 1)` without overflow.
fn clayton_ln_s(theta: f64, u: f64, v: f64) -> f64 {
    let a = -theta * u.ln();
    let b = -theta * v.ln();
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp() - (-m).exp()).ln()
}

fn clayton_ln_pdf(theta: f64, u: f64, v: f64) -> f64 {
    let s = clayton_ln_s(theta, u, v);
    theta.ln_1p() + (-1.0 - theta) * (u.ln() + v.ln()) + (-2.0 - 1.0 / theta) * s
}

fn gumbel_parts(theta: f64, u: f64, v: f64) -> (f64, f64, f64, f64) {
    let x = -u.ln();
    let y = -v.ln();
    let (lx, ly) = (x.ln(), y.ln());
    let (a, b) = (theta * lx, theta * ly);
    let m = a.max(b);
    let ln_s = m + ((a - m).exp() + (b - m).exp()).ln();
    let big_a = (ln_s / theta).exp();
    (lx, ly, ln_s, big_a)
}

fn gumbel_ln_pdf(theta: f64, u: f64, v: f64) -> f64 {
    let (lx, ly, ln_s, a) = gumbel_parts(theta, u, v);
    -a - u.ln() - v.ln() + (theta - 1.0) * (lx + ly) + (2.0 / theta - 2.0) * ln_s
        + ((theta - 1.0) / a).ln_1p()
}

fn frank_ln_pdf(theta: f64, u: f64, v: f64) -> f64 {
    if theta.abs() < 1e-8 {
        return 0.0;
    }
    let a = (-theta).exp_m1();
    let bu = (-theta * u).exp_m1();
    let bv = (-theta * v).exp_m1();
    let den = a + bu * bv;
    (-theta * a).ln() - theta * (u + v) - 2.0 * den.abs().ln()
}

fn base_h(family: Family, par: f64, par2: f64, u: f64, v: f64) -> f64 {
    let h = match family {
        Family::Independence => u,
        Family::Gaussian => {
            let (x, y) = (normal_quantile(u), normal_quantile(v));
            normal_cdf((x - par * y) / (1.0 - par * par).sqrt())
        }
        Family::StudentT => {
            let (rho, nu) = (par, par2);
            let (x, y) = (student_t_quantile(u, nu), student_t_quantile(v, nu));
            let scale = ((nu + y * y) * (1.0 - rho * rho) / (nu + 1.0)).sqrt();
            student_t_cdf((x - rho * y) / scale, nu + 1.0)
        }
        Family::Clayton => {
            let s = clayton_ln_s(par, u, v);
            ((-par - 1.0) * v.ln() + (-1.0 - 1.0 / par) * s).exp()
        }
        Family::Gumbel => {
            let (_, ly, ln_s, a) = gumbel_parts(par, u, v);
            (-a - v.ln() + (par - 1.0) * ly + (1.0 / par - 1.0) * ln_s).exp()
        }
        Family::Frank => {
            if par.abs() < 1e-8 {
                u
            } else {
                let a = (-par).exp_m1();
                let bu = (-par * u).exp_m1();
                let bv = (-par * v).exp_m1();
                bu * (-par * v).exp() / (a + bu * bv)
            }
        }
    };
    h.clamp(0.0, 1.0)
}

fn base_h_inv(family: Family, par: f64, par2: f64, w: f64, v: f64) -> f64 {
    let u = match family {
        Family::Independence => w,
        Family::Gaussian => {
            let y = normal_quantile(v);
            normal_cdf(normal_quantile(w) * (1.0 - par * par).sqrt() + par * y)
        }
        Family::StudentT => {
            let (rho, nu) = (par, par2);
            let y = student_t_quantile(v, nu);
            let scale = ((nu + y * y) * (1.0 - rho * rho) / (nu + 1.0)).sqrt();
            student_t_cdf(student_t_quantile(w, nu + 1.0) * scale + rho * y, nu)
        }
        Family::Clayton => {
            let theta = par;
            // (w v^(theta+1))^(-theta/(1+theta)) + 1 - v^-theta, raised to -1/theta
            let lw = w.ln() + (theta + 1.0) * v.ln();
            let a = -theta / (1.0 + theta) * lw;
            let b = -theta * v.ln();
            // ln(e^a + 1 - e^b), with a >= b
            let inner = a + (1.0 + (-a).exp() - (b - a).exp()).ln();
            (-inner / theta).exp()
        }
        Family::Gumbel => bisect_h_inv(|u| base_h(family, par, par2, u, v), w),
        Family::Frank => {
            if par.abs() < 1e-8 {
                w
            } else {
                let a = (-par).exp_m1();
                let bv = (-par * v).exp_m1();
                let bu = w * a / ((-par * v).exp() - w * bv);
                -(bu.ln_1p()) / par
            }
        }
    };
    clamp01(u)
}

/// Inverts an increasing map `(0,1) -> (0,1)` by bisection on the logit scale.
fn bisect_h_inv<F: Fn(f64) -> f64>(h: F, w: f64) -> f64 {
    let (mut lo, mut hi) = (-30.0f64, 30.0f64);
    let expit = |z: f64| 1.0 / (1.0 + (-z).exp());
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if h(expit(mid)) < w {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    expit(0.5 * (lo + hi))
}

/// Kendall's tau of the Frank copula, `1 - 4/theta (1 - D1(theta))`.
pub fn frank_tau(theta: f64) -> f64 {
    if theta.abs() < 1e-8 {
        return 0.0;
    }
    1.0 - 4.0 / theta * (1.0 - debye1(theta))
}

/// First Debye function `D1(x) = (1/x) * int_0^x t / (e^t - 1) dt`, by Simpson's rule.
fn debye1(x: f64) -> f64 {
    let n = 400;
    let h = x / n as f64;
    let f = |t: f64| if t.abs() < 1e-12 { 1.0 } else { t / t.exp_m1() };
    let mut s = f(0.0) + f(x);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(i as f64 * h);
    }
    s * h / 3.0 / x
}

/// Result of a single-family maximum-likelihood fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairFit {
    pub copula: PairCopula,
    pub log_likelihood: f64,
    pub aic: f64,
}

impl PairFit {
    fn new(copula: PairCopula, ll: f64) -> Self {
        Self {
            copula,
            log_likelihood: ll,
            aic: 2.0 * copula.family.n_params() as f64 - 2.0 * ll,
        }
    }
}

/// Degrees-of-freedom grid for the Student-t profile likelihood.
pub fn t_nu_grid() -> Vec<f64> {
    (0..=56).map(|i| 2.0 + 0.5 * i as f64).collect()
}

const RHO_MAX: f64 = 0.99;

fn fit_gaussian(u: &[f64], v: &[f64], tau: f64) -> PairFit {
    // the Gaussian log-likelihood depends on the data only through two sums
    let (mut ss, mut sxy) = (0.0, 0.0);
    for (&a, &b) in u.iter().zip(v) {
        let (x, y) = (normal_quantile(clamp01(a)), normal_quantile(clamp01(b)));
        ss += x * x + y * y;
        sxy += x * y;
    }
    let n = u.len() as f64;
    let ll = |rho: f64| -> f64 {
        let r2 = 1.0 - rho * rho;
        -0.5 * n * r2.ln() - (rho * rho * ss - 2.0 * rho * sxy) / (2.0 * r2)
    };
    let rho0 = (std::f64::consts::FRAC_PI_2 * tau).sin().clamp(-RHO_MAX, RHO_MAX);
    let (rho, v) = refine_around(ll, rho0, -RHO_MAX, RHO_MAX, 0.3);
    PairFit::new(PairCopula::gaussian(rho), v)
}

/// Grid-then-golden search on `[center - half, center + half]` clipped to bounds.
fn refine_around<F: FnMut(f64) -> f64>(f: F, center: f64, lo: f64, hi: f64, half: f64) -> (f64, f64) {
    let a = (center - half).max(lo);
    let b = (center + half).min(hi);
    grid_refine_max(f, a, b, 13, 1e-7)
}

fn fit_student_t(u: &[f64], v: &[f64], tau: f64) -> PairFit {
    let n = u.len() as f64;
    let rho0 = (std::f64::consts::FRAC_PI_2 * tau).sin().clamp(-RHO_MAX, RHO_MAX);
    let zs: Vec<(f64, f64, f64, f64)> = u
        .iter()
        .zip(v)
        .map(|(&a, &b)| (clamp01(a), clamp01(b)))
        .map(|(a, b)| (a, b, normal_quantile(a), normal_quantile(b)))
        .collect();
    let profile = |nu: f64| -> (f64, f64) {
        let tab = TQuantileTable::new(nu);
        let q = |p: f64, z: f64| tab.quantile_from_z(z).unwrap_or_else(|| student_t_quantile(p, nu));
        let mut base = n * t_ln_const(nu);
        // (x^2 + y^2, x * y) per point; the marginal terms do not involve rho
        let pairs: Vec<(f64, f64)> = zs
            .iter()
            .map(|&(a, b, za, zb)| {
                let x = q(a, za);
                let y = q(b, zb);
                base += (nu + 1.0) / 2.0 * ((x * x / nu).ln_1p() + (y * y / nu).ln_1p());
                (x * x + y * y, x * y)
            })
            .collect();
        let ll = |rho: f64| -> f64 {
            let r2 = 1.0 - rho * rho;
            let s: f64 = pairs.iter().map(|&(ss, xy)| ((ss - 2.0 * rho * xy) / (nu * r2)).ln_1p()).sum();
            base - 0.5 * n * r2.ln() - (nu + 2.0) / 2.0 * s
        };
        refine_around(ll, rho0, -RHO_MAX, RHO_MAX, 0.2)
    };
    let best_of = |grid: Vec<f64>| -> (f64, f64, f64) {
        grid.into_par_iter()
            .map(|nu| {
                let (rho, ll) = profile(nu);
                (nu, rho, ll)
            })
            .collect::<Vec<_>>()
            .into_iter()
            .fold((2.0, rho0, f64::NEG_INFINITY), |acc, c| if c.2 > acc.2 { c } else { acc })
    };
    let (nu0, _, _) = best_of(t_nu_grid());
    let fine: Vec<f64> = (-4..=4)
        .map(|i| nu0 + 0.1 * i as f64)
        .filter(|nu| (2.0..=30.0).contains(nu))
        .collect();
    let (nu, rho, ll) = best_of(fine);
    PairFit::new(PairCopula::student_t(rho, nu), ll)
}

fn rotate_data(u: &[f64], v: &[f64], rot: Rotation) -> (Vec<f64>, Vec<f64>) {
    let tr = |a: f64, b: f64| match rot {
        Rotation::R0 => (a, b),
        Rotation::R90 => (1.0 - a, b),
        Rotation::R180 => (1.0 - a, 1.0 - b),
        Rotation::R270 => (a, 1.0 - b),
    };
    u.iter().zip(v).map(|(&a, &b)| tr(clamp01(a), clamp01(b))).unzip()
}

fn fit_archimedean(family: Family, rot: Rotation, u: &[f64], v: &[f64]) -> PairFit {
    let (a, b) = rotate_data(u, v, rot);
    let ll = |par: f64| -> f64 {
        a.iter()
            .zip(&b)
            .map(|(&x, &y)| match family {
                Family::Clayton => clayton_ln_pdf(par, x, y),
                Family::Gumbel => gumbel_ln_pdf(par, x, y),
                _ => unreachable!("only Clayton and Gumbel are rotated"),
            })
            .sum()
    };
    // search on a log scale of the distance to the independence boundary
    let (par, v) = match family {
        Family::Clayton => {
            let (lt, v) = grid_refine_max(|l: f64| ll(l.exp()), (1e-4f64).ln(), 28f64.ln(), 40, 1e-8);
            (lt.exp(), v)
        }
        _ => {
            let (lt, v) = grid_refine_max(|l: f64| ll(1.0 + l.exp()), (1e-4f64).ln(), 16f64.ln(), 40, 1e-8);
            (1.0 + lt.exp(), v)
        }
    };
    let copula = PairCopula {
        family,
        rotation: rot,
        par,
        par2: 0.0,
    };
    PairFit::new(copula, v)
}

fn fit_frank(u: &[f64], v: &[f64]) -> PairFit {
    let pts: Vec<(f64, f64)> = u.iter().zip(v).map(|(&a, &b)| (clamp01(a), clamp01(b))).collect();
    let ll = |theta: f64| -> f64 { pts.iter().map(|&(a, b)| frank_ln_pdf(theta, a, b)).sum() };
    let (theta, val) = grid_refine_max(ll, -35.0, 35.0, 71, 1e-7);
    let theta = if theta.abs() < 1e-6 { 1e-6 } else { theta };
    PairFit::new(PairCopula::frank(theta), val)
}

/// Family-selection options for one pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionOptions {
    pub families: Vec<Family>,
    /// When set, a Kendall-tau independence test at this level runs first and
    /// an edge that does not reject is modelled as independent.
    pub independence_test_level: Option<f64>,
}

impl Default for SelectionOptions {
    fn default() -> Self {
        Self {
            families: Family::ALL.to_vec(),
            independence_test_level: None,
        }
    }
}

/// Fits one family. Rotations of Clayton and Gumbel follow the sign of the
/// empirical Kendall's tau.
pub fn fit_family(family: Family, u: &[f64], v: &[f64]) -> Result<PairFit> {
    let tau = kendall_tau(u, v);
    let fits = fit_family_with_tau(family, u, v, tau);
    fits.into_iter()
        .filter(|f| f.log_likelihood.is_finite())
        .min_by(|a, b| a.aic.total_cmp(&b.aic))
        .ok_or_else(|| Error::Optimization(format!("{family:?} fit failed")))
}

fn fit_family_with_tau(family: Family, u: &[f64], v: &[f64], tau: f64) -> Vec<PairFit> {
    match family {
        Family::Independence => vec![PairFit::new(PairCopula::independence(), 0.0)],
        Family::Gaussian => vec![fit_gaussian(u, v, tau)],
        Family::StudentT => vec![fit_student_t(u, v, tau)],
        Family::Frank => vec![fit_frank(u, v)],
        Family::Clayton | Family::Gumbel => {
            let rots = if tau >= 0.0 {
                [Rotation::R0, Rotation::R180]
            } else {
                [Rotation::R90, Rotation::R270]
            };
            rots.iter().map(|&r| fit_archimedean(family, r, u, v)).collect()
        }
    }
}

/// Outcome of AIC family selection for one pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSelection {
    pub best: PairFit,
    pub empirical_tau: f64,
    /// Set when every parametric fit failed and independence was used instead.
    pub fallback: bool,
}

/// Fits every candidate family and keeps the one with the smallest AIC.
pub fn select_pair(u: &[f64], v: &[f64], opts: &SelectionOptions) -> Result<PairSelection> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch {
            expected: u.len(),
            got: v.len(),
        });
    }
    if u.iter().chain(v).any(|x| !(*x > 0.0 && *x < 1.0)) {
        return Err(Error::invalid("copula data must lie strictly inside (0, 1)"));
    }
    let tau = kendall_tau(u, v);
    if let Some(level) = opts.independence_test_level {
        if stats::kendall_independence_pvalue(tau, u.len()) > level {
            return Ok(PairSelection {
                best: PairFit::new(PairCopula::independence(), 0.0),
                empirical_tau: tau,
                fallback: false,
            });
        }
    }
    let mut candidates: Vec<PairFit> = opts
        .families
        .iter()
        .flat_map(|&f| fit_family_with_tau(f, u, v, tau))
        .filter(|f| f.log_likelihood.is_finite() && f.copula.validate().is_ok())
        .collect();
    let has_parametric = candidates.iter().any(|f| f.copula.family != Family::Independence);
    let fallback = !has_parametric && opts.families.iter().any(|&f| f != Family::Independence);
    if candidates.is_empty() {
        candidates.push(PairFit::new(PairCopula::independence(), 0.0));
    }
    // ties resolve towards fewer parameters, then family order
    candidates.sort_by(|a, b| {
        a.aic
            .total_cmp(&b.aic)
            .then(a.copula.family.n_params().cmp(&b.copula.family.n_params()))
            .then(a.copula.family.cmp(&b.copula.family))
    });
    Ok(PairSelection {
        best: candidates[0],
        empirical_tau: tau,
        fallback,
    })
}
