//! Small numerical and statistical helpers shared across the pipeline.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::error::{Error, Result};

pub fn mean(x: &[f64]) -> f64 {
    if x.is_empty() {
        return f64::NAN;
    }
    x.iter().sum::<f64>() / x.len() as f64
}

/// Variance with denominator `n - ddof`.
pub fn variance(x: &[f64], ddof: usize) -> f64 {
    let n = x.len();
    if n <= ddof {
        return f64::NAN;
    }
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - ddof) as f64
}

pub fn std_dev(x: &[f64], ddof: usize) -> f64 {
    variance(x, ddof).sqrt()
}

pub fn euclidean_norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn sorted(x: &[f64]) -> Vec<f64> {
    let mut v = x.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Linear-interpolation quantile of an ascending sample (R type 7).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 0 {
        return f64::NAN;
    }
    if n == 1 {
        return sorted[0];
    }
    let q = q.clamp(0.0, 1.0);
    let h = (n - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn quantile(x: &[f64], q: f64) -> f64 {
    quantile_sorted(&sorted(x), q)
}

/// Empirical CDF on the `(i - 0.5) / n` plotting positions with linear
/// interpolation between order statistics.
///
/// The CDF is flat at `1/(2n)` below the sample minimum and at `1 - 1/(2n)`
/// above the maximum, so it never returns 0 or 1.
#[derive(Debug, Clone)]
pub struct PlottingEcdf<'a> {
    sorted: &'a [f64],
}

impl<'a> PlottingEcdf<'a> {
    pub fn new(sorted: &'a [f64]) -> Self {
        debug_assert!(!sorted.is_empty());
        Self { sorted }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let s = self.sorted;
        let n = s.len();
        let nf = n as f64;
        if x <= s[0] {
            return 0.5 / nf;
        }
        if x >= s[n - 1] {
            return 1.0 - 0.5 / nf;
        }
        // index of first element > x
        let hi = s.partition_point(|v| *v <= x);
        let lo = hi - 1;
        let (a, b) = (s[lo], s[hi]);
        let pa = (lo as f64 + 0.5) / nf;
        if b > a {
            pa + (x - a) / (b - a) / nf
        } else {
            pa
        }
    }

    pub fn quantile(&self, q: f64) -> f64 {
        let s = self.sorted;
        let n = s.len();
        let pos = q * n as f64 - 0.5;
        if pos <= 0.0 {
            return s[0];
        }
        if pos >= (n - 1) as f64 {
            return s[n - 1];
        }
        let lo = pos.floor() as usize;
        let frac = pos - lo as f64;
        s[lo] + frac * (s[lo + 1] - s[lo])
    }
}

pub fn normal_cdf(x: f64) -> f64 {
    standard_normal().cdf(x)
}

pub fn normal_quantile(p: f64) -> f64 {
    standard_normal().inverse_cdf(p)
}

fn standard_normal() -> Normal {
    Normal::standard()
}

pub fn student_t_cdf(x: f64, nu: f64) -> f64 {
    StudentsT::new(0.0, 1.0, nu)
        .expect("degrees of freedom must be positive")
        .cdf(x)
}

/// Student-t quantile. Starts from the statrs inverse and polishes with
/// Newton steps on the CDF, which keeps the round trip tight in the tails.
pub fn student_t_quantile(p: f64, nu: f64) -> f64 {
    let dist = StudentsT::new(0.0, 1.0, nu).expect("degrees of freedom must be positive");
    let mut x = dist.inverse_cdf(p);
    if !x.is_finite() {
        return x;
    }
    for _ in 0..3 {
        let f = dist.cdf(x) - p;
        let d = student_t_pdf(x, nu);
        if d <= 0.0 || !d.is_finite() {
            break;
        }
        let step = f / d;
        x -= step;
        if step.abs() < 1e-14 * (1.0 + x.abs()) {
            break;
        }
    }
    x
}

/// Student-t quantile tabulated against the standard normal score, for
/// repeated evaluation at one `nu`.
///
/// Cubic Hermite interpolation of `asinh(x)` with exact slopes on a grid of
/// step 0.01 in `z = Phi^-1(p)`; relative error is below 1e-7 on `|z| <= 6.5` and the
/// exact quantile is used outside.
#[derive(Debug, Clone)]
pub struct TQuantileTable {
    nu: f64,
    x: Vec<f64>,
    dx: Vec<f64>,
}

const TQT_Z: f64 = 6.5;
const TQT_H: f64 = 0.01;

impl TQuantileTable {
    pub fn new(nu: f64) -> Self {
        let half = (TQT_Z / TQT_H).round() as usize;
        let m = 2 * half + 1;
        let (mut x, mut dx) = (vec![0.0; m], vec![0.0; m]);
        // the quantile is odd in z, so only the upper half is computed
        for i in half..m {
            let z = -TQT_Z + TQT_H * i as f64;
            let xi = if i == half { 0.0 } else { student_t_quantile(normal_cdf(z), nu) };
            let phi = (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
            // tabulate asinh(x), which grows only quadratically in the tails
            let d = phi / student_t_pdf(xi, nu) / (1.0 + xi * xi).sqrt();
            let yi = xi.asinh();
            x[i] = yi;
            dx[i] = d;
            x[m - 1 - i] = -yi;
            dx[m - 1 - i] = d;
        }
        Self { nu, x, dx }
    }

    pub fn quantile(&self, p: f64) -> f64 {
        self.quantile_from_z(normal_quantile(p))
            .unwrap_or_else(|| student_t_quantile(p, self.nu))
    }

    /// Quantile at `p = Phi(z)`; `None` outside the tabulated range.
    pub fn quantile_from_z(&self, z: f64) -> Option<f64> {
        let pos = (z + TQT_Z) / TQT_H;
        if !(pos >= 0.0 && pos < (self.x.len() - 1) as f64) {
            return None;
        }
        let i = pos.floor() as usize;
        let s = pos - i as f64;
        let (s2, s3) = (s * s, s * s * s);
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        let y = h00 * self.x[i] + h10 * TQT_H * self.dx[i] + h01 * self.x[i + 1] + h11 * TQT_H * self.dx[i + 1];
        Some(y.sinh())
    }
}

pub fn student_t_pdf(x: f64, nu: f64) -> f64 {
    student_t_ln_pdf(x, nu).exp()
}

pub fn student_t_ln_pdf(x: f64, nu: f64) -> f64 {
    use statrs::function::gamma::ln_gamma;
    ln_gamma((nu + 1.0) / 2.0)
        - ln_gamma(nu / 2.0)
        - 0.5 * (nu * std::f64::consts::PI).ln()
        - (nu + 1.0) / 2.0 * (1.0 + x * x / nu).ln()
}

/// Average ranks (1-based), ties share the mean rank.
pub fn ranks(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut r = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            r[idx[k]] = avg;
        }
        i = j + 1;
    }
    r
}

/// Rank transform to `(0, 1)` with denominator `n + 1`.
pub fn pseudo_observations(x: &[f64]) -> Vec<f64> {
    let n = x.len() as f64;
    ranks(x).into_iter().map(|r| r / (n + 1.0)).collect()
}

pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let mx = mean(x);
    let my = mean(y);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / (sxx * syy).sqrt()
}

pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    pearson(&ranks(x), &ranks(y))
}

/// Kendall's tau-b in O(n log n) (Knight's merge-sort algorithm).
pub fn kendall_tau(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len();
    if n < 2 {
        return f64::NAN;
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]).then(y[a].total_cmp(&y[b])));

    let n0 = (n * (n - 1) / 2) as f64;
    // ties in x, and joint ties
    let mut n1 = 0.0;
    let mut n3 = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        n1 += t * (t - 1.0) / 2.0;
        let mut k = i;
        while k <= j {
            let mut l = k;
            while l < j && y[idx[l + 1]] == y[idx[k]] {
                l += 1;
            }
            let u = (l - k + 1) as f64;
            n3 += u * (u - 1.0) / 2.0;
            k = l + 1;
        }
        i = j + 1;
    }

    let mut ys: Vec<f64> = idx.iter().map(|&k| y[k]).collect();
    let mut buf = vec![0.0; n];
    let swaps = merge_count(&mut ys, &mut buf) as f64;

    let mut n2 = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && ys[j + 1] == ys[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        n2 += t * (t - 1.0) / 2.0;
        i = j + 1;
    }

    let concordant_minus_discordant = n0 - n1 - n2 + n3 - 2.0 * swaps;
    let denom = ((n0 - n1) * (n0 - n2)).sqrt();
    if denom == 0.0 {
        return 0.0;
    }
    concordant_minus_discordant / denom
}

fn merge_count(v: &mut [f64], buf: &mut [f64]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = {
        let (l, r) = v.split_at_mut(mid);
        let (bl, br) = buf.split_at_mut(mid);
        merge_count(l, bl) + merge_count(r, br)
    };
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if v[j] < v[i] {
            buf[k] = v[j];
            swaps += (mid - i) as u64;
            j += 1;
        } else {
            buf[k] = v[i];
            i += 1;
        }
        k += 1;
    }
    while i < mid {
        buf[k] = v[i];
        i += 1;
        k += 1;
    }
    while j < n {
        buf[k] = v[j];
        j += 1;
        k += 1;
    }
    v.copy_from_slice(&buf[..n]);
    swaps
}

/// Two-sided p-value of the asymptotic test of zero Kendall's tau.
pub fn kendall_independence_pvalue(tau: f64, n: usize) -> f64 {
    let nf = n as f64;
    let z = 3.0 * tau * (nf * (nf - 1.0)).sqrt() / (2.0 * (2.0 * nf + 5.0)).sqrt();
    2.0 * (1.0 - normal_cdf(z.abs()))
}

/// Survival function of the Kolmogorov distribution.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for j in 1..=200 {
        let jf = j as f64;
        let term = 2.0 * (-1f64).powi(j - 1) * (-2.0 * jf * jf * lambda * lambda).exp();
        sum += term;
        if term.abs() < 1e-16 {
            break;
        }
    }
    sum.clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// Two-sample Kolmogorov–Smirnov test with the asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::insufficient("KS test needs two nonempty samples"));
    }
    let sa = sorted(a);
    let sb = sorted(b);
    let (n, m) = (sa.len(), sb.len());
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < n && j < m {
        let x = sa[i].min(sb[j]);
        while i < n && sa[i] <= x {
            i += 1;
        }
        while j < m && sb[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let ne = (n * m) as f64 / (n + m) as f64;
    let sq = ne.sqrt();
    let p = kolmogorov_sf((sq + 0.12 + 0.11 / sq) * d);
    Ok(KsResult {
        statistic: d,
        p_value: p,
    })
}

/// One-sample KS distance to the uniform distribution on (0, 1).
pub fn ks_uniform_statistic(u: &[f64]) -> f64 {
    let s = sorted(u);
    let n = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, &v)| {
            let lo = v - i as f64 / n;
            let hi = (i as f64 + 1.0) / n - v;
            lo.max(hi)
        })
        .fold(0.0, f64::max)
}

/// Golden-section search for the maximum of a unimodal function on `[lo, hi]`.
pub fn golden_section_max<F: FnMut(f64) -> f64>(
    mut f: F,
    mut lo: f64,
    mut hi: f64,
    tol: f64,
) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut c = hi - INV_PHI * (hi - lo);
    let mut d = lo + INV_PHI * (hi - lo);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..200 {
        if (hi - lo).abs() <= tol {
            break;
        }
        if fc >= fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - INV_PHI * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + INV_PHI * (hi - lo);
            fd = f(d);
        }
    }
    if fc >= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Grid scan followed by golden-section refinement around the best grid cell.
/// Robust to mild multimodality and to `-inf` regions.
pub fn grid_refine_max<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, n_grid: usize, tol: f64) -> (f64, f64) {
    let n_grid = n_grid.max(3);
    let step = (hi - lo) / (n_grid - 1) as f64;
    let mut best_i = 0;
    let mut best = f64::NEG_INFINITY;
    for i in 0..n_grid {
        let x = lo + step * i as f64;
        let v = f(x);
        if v > best {
            best = v;
            best_i = i;
        }
    }
    if !best.is_finite() {
        return (lo + step * best_i as f64, best);
    }
    let a = lo + step * best_i.saturating_sub(1) as f64;
    let b = (lo + step * (best_i + 1) as f64).min(hi);
    let (x, v) = golden_section_max(&mut f, a, b, tol);
    if v >= best {
        (x, v)
    } else {
        (lo + step * best_i as f64, best)
    }
}

/// Deterministic per-task random stream derived from a base seed.
pub fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
