//! D-vine over dimensions `1..J` in natural order.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::copula::{select_pair, PairCopula, SelectionOptions};
use crate::error::{Error, Result};

pub const MIN_VINE_OBS: usize = 50;

/// One pair-copula of the vine. Dimension labels are 1-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VineEdge {
    pub tree: usize,
    pub pair: (usize, usize),
    pub conditioning: Vec<usize>,
    #[serde(flatten)]
    pub copula: PairCopula,
    pub tau: f64,
    pub lambda_upper: f64,
    pub lambda_lower: f64,
    pub empirical_tau: f64,
    pub log_likelihood: f64,
    pub aic: f64,
    /// Every parametric fit failed on this edge and independence was used.
    #[serde(default)]
    pub fallback: bool,
}

impl VineEdge {
    fn new(tree: usize, i: usize, copula: PairCopula) -> Self {
        let (lambda_upper, lambda_lower) = copula.tail_dependence();
        Self {
            tree,
            pair: (i + 1, i + tree + 1),
            conditioning: (i + 2..=i + tree).collect(),
            copula,
            tau: copula.kendall_tau(),
            lambda_upper,
            lambda_lower,
            empirical_tau: f64::NAN,
            log_likelihood: 0.0,
            aic: 0.0,
            fallback: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VineModel {
    pub dim: usize,
    /// Edges ordered by tree, then by first index.
    pub edges: Vec<VineEdge>,
}

/// An edge and its two conditional pseudo-observation columns.
type EdgeFit = (VineEdge, Vec<f64>, Vec<f64>);

fn edge_index(dim: usize, tree: usize, i: usize) -> usize {
    (1..tree).map(|m| dim - m).sum::<usize>() + i
}

/// Square scratch table indexed by two dimension labels.
struct Table {
    dim: usize,
    cells: Vec<f64>,
}

impl Table {
    fn new(dim: usize) -> Self {
        Self {
            dim,
            cells: vec![f64::NAN; dim * dim],
        }
    }
    fn get(&self, i: usize, j: usize) -> f64 {
        self.cells[i * self.dim + j]
    }
    fn set(&mut self, i: usize, j: usize, v: f64) {
        self.cells[i * self.dim + j] = v;
    }
}

impl VineModel {
    /// A vine with the given copulas, listed tree by tree.
    pub fn from_copulas(dim: usize, copulas: &[PairCopula]) -> Result<Self> {
        if dim < 2 || copulas.len() != dim * (dim - 1) / 2 {
            return Err(Error::DimensionMismatch {
                expected: dim * dim.saturating_sub(1) / 2,
                got: copulas.len(),
            });
        }
        let mut edges = Vec::with_capacity(copulas.len());
        for tree in 1..dim {
            for i in 0..dim - tree {
                let c = copulas[edge_index(dim, tree, i)];
                c.validate()?;
                edges.push(VineEdge::new(tree, i, c));
            }
        }
        Ok(Self { dim, edges })
    }

    pub fn independence(dim: usize) -> Self {
        let n = dim * dim.saturating_sub(1) / 2;
        Self::from_copulas(dim, &vec![PairCopula::independence(); n]).unwrap_or(Self { dim, edges: vec![] })
    }

    pub fn edge(&self, tree: usize, i: usize) -> &VineEdge {
        &self.edges[edge_index(self.dim, tree, i)]
    }

    fn copula(&self, tree: usize, i: usize) -> &PairCopula {
        &self.edge(tree, i).copula
    }

    pub fn has_fallback(&self) -> bool {
        self.edges.iter().any(|e| e.fallback)
    }

    /// Log-density of one row of uniforms.
    pub fn ln_pdf(&self, u: &[f64]) -> f64 {
        let d = self.dim;
        let (mut b, mut fw) = (Table::new(d), Table::new(d));
        for (i, &x) in u.iter().enumerate() {
            b.set(i, i, x);
            fw.set(i, i, x);
        }
        let mut ll = 0.0;
        for k in 1..d {
            for i in 0..d - k {
                let c = self.copula(k, i);
                let a = b.get(i, i + k - 1);
                let bb = fw.get(i + k, i + 1);
                ll += c.ln_pdf(a, bb);
                b.set(i, i + k, c.h_given_v(a, bb));
                fw.set(i + k, i, c.h_given_u(a, bb));
            }
        }
        ll
    }

    pub fn log_likelihood(&self, rows: &[Vec<f64>]) -> f64 {
        rows.iter().map(|r| self.ln_pdf(r)).sum()
    }

    /// Rosenblatt transform: `w_j = F(u_j | u_1..u_{j-1})`.
    pub fn rosenblatt(&self, u: &[f64]) -> Vec<f64> {
        let d = self.dim;
        let (mut b, mut fw) = (Table::new(d), Table::new(d));
        for (i, &x) in u.iter().enumerate() {
            b.set(i, i, x);
            fw.set(i, i, x);
        }
        for k in 1..d {
            for i in 0..d - k {
                let c = self.copula(k, i);
                let a = b.get(i, i + k - 1);
                let bb = fw.get(i + k, i + 1);
                b.set(i, i + k, c.h_given_v(a, bb));
                fw.set(i + k, i, c.h_given_u(a, bb));
            }
        }
        (0..d).map(|j| fw.get(j, 0)).collect()
    }

    /// Inverse Rosenblatt transform of independent uniforms `w`.
    pub fn inverse_rosenblatt(&self, w: &[f64]) -> Vec<f64> {
        let d = self.dim;
        let (mut b, mut fw) = (Table::new(d), Table::new(d));
        let mut u = vec![0.0; d];
        u[0] = w[0];
        b.set(0, 0, w[0]);
        fw.set(0, 0, w[0]);
        for j in 1..d {
            fw.set(j, 0, w[j]);
            for k in (1..=j).rev() {
                let i = j - k;
                let c = self.copula(k, i);
                let a = b.get(i, j - 1);
                let v = c.h_inv_given_u(fw.get(j, i), a);
                fw.set(j, i + 1, v);
            }
            u[j] = fw.get(j, j);
            b.set(j, j, u[j]);
            for i in (0..j).rev() {
                let k = j - i;
                let c = self.copula(k, i);
                let a = b.get(i, j - 1);
                b.set(i, j, c.h_given_v(a, fw.get(j, i + 1)));
            }
        }
        u
    }

    pub fn sample_row<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let w: Vec<f64> = (0..self.dim).map(|_| open_uniform(rng)).collect();
        self.inverse_rosenblatt(&w)
    }
}

/// Uniform draw on the open interval (0, 1).
pub(crate) fn open_uniform<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let x: f64 = rng.random();
        if x > 0.0 {
            return x;
        }
    }
}

pub fn sample_vine<R: Rng + ?Sized>(model: &VineModel, n: usize, rng: &mut R) -> Vec<Vec<f64>> {
    (0..n).map(|_| model.sample_row(rng)).collect()
}

/// Fits a D-vine to an `n x J` matrix of uniform scores, tree by tree.
pub fn fit_vine(u: &[Vec<f64>], opts: &SelectionOptions) -> Result<VineModel> {
    let n = u.len();
    let d = u.first().map_or(0, |r| r.len());
    if d < 2 {
        return Err(Error::invalid("a vine needs at least two dimensions"));
    }
    if n < MIN_VINE_OBS {
        return Err(Error::insufficient(format!(
            "vine fitting needs at least {MIN_VINE_OBS} rows, got {n}"
        )));
    }
    if let Some(bad) = u.iter().find(|r| r.len() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: bad.len(),
        });
    }
    if u.iter().flatten().any(|x| !(*x > 0.0 && *x < 1.0)) {
        return Err(Error::invalid("vine scores must lie strictly inside (0, 1)"));
    }

    // b[i][j] = F(u_i | u_{i+1..j}), fw[j][i] = F(u_j | u_{i..j-1})
    let mut b: Vec<Vec<Option<Vec<f64>>>> = vec![vec![None; d]; d];
    let mut fw: Vec<Vec<Option<Vec<f64>>>> = vec![vec![None; d]; d];
    for j in 0..d {
        let col: Vec<f64> = u.iter().map(|r| r[j]).collect();
        b[j][j] = Some(col.clone());
        fw[j][j] = Some(col);
    }

    let mut edges = Vec::with_capacity(d * (d - 1) / 2);
    for k in 1..d {
        let fitted: Vec<Result<EdgeFit>> = (0..d - k)
            .into_par_iter()
            .map(|i| {
                let a = b[i][i + k - 1].as_ref().expect("computed in previous tree");
                let bb = fw[i + k][i + 1].as_ref().expect("computed in previous tree");
                let sel = select_pair(a, bb, opts)?;
                let c = sel.best.copula;
                let mut edge = VineEdge::new(k, i, c);
                edge.empirical_tau = sel.empirical_tau;
                edge.log_likelihood = sel.best.log_likelihood;
                edge.aic = sel.best.aic;
                edge.fallback = sel.fallback;
                let hv = a.iter().zip(bb).map(|(&x, &y)| c.h_given_v(x, y)).collect();
                let hu = a.iter().zip(bb).map(|(&x, &y)| c.h_given_u(x, y)).collect();
                Ok((edge, hv, hu))
            })
            .collect();
        for (i, r) in fitted.into_iter().enumerate() {
            let (edge, hv, hu) = r?;
            b[i][i + k] = Some(hv);
            fw[i + k][i] = Some(hu);
            edges.push(edge);
        }
    }
    Ok(VineModel { dim: d, edges })
}

#[cfg(test)]
mod tests {
    use super::super::copula::{Family, Rotation};
    use super::*;
    use crate::stats::{kendall_tau, ks_uniform_statistic, substream};
    use approx::assert_abs_diff_eq;

    fn three_dim() -> VineModel {
        VineModel::from_copulas(
            3,
            &[
                PairCopula::student_t(-0.2, 2.0),
                PairCopula::gumbel(1.5, Rotation::R180),
                PairCopula::clayton(1.0, Rotation::R90),
            ],
        )
        .unwrap()
    }

    #[test]
    fn rosenblatt_round_trip() {
        let v = three_dim();
        for w in [[0.1, 0.5, 0.9], [0.99, 0.02, 0.4], [0.5, 0.5, 0.5]] {
            let u = v.inverse_rosenblatt(&w);
            let back = v.rosenblatt(&u);
            for (a, b) in w.iter().zip(&back) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-7);
            }
        }
    }

    #[test]
    fn edge_labels_follow_the_d_vine() {
        let v = three_dim();
        assert_eq!(v.edges[0].pair, (1, 2));
        assert_eq!(v.edges[1].pair, (2, 3));
        assert_eq!(v.edges[2].pair, (1, 3));
        assert_eq!(v.edges[2].conditioning, vec![2]);
        let json = serde_json::to_value(&v.edges[0]).unwrap();
        for key in ["tree", "pair", "conditioning", "family", "par", "par2", "tau", "lambda_upper", "lambda_lower"] {
            assert!(json.get(key).is_some(), "{key}");
        }
    }

    #[test]
    fn independence_sample_is_uniform() {
        let v = VineModel::independence(3);
        let mut rng = substream(1, 0);
        let n = 3000;
        let s = sample_vine(&v, n, &mut rng);
        for j in 0..3 {
            let col: Vec<f64> = s.iter().map(|r| r[j]).collect();
            assert!(ks_uniform_statistic(&col) < 1.63 / (n as f64).sqrt());
        }
    }

    #[test]
    fn t_edge_sample_has_analytic_tau() {
        let v = VineModel::from_copulas(
            3,
            &[
                PairCopula::student_t(0.5, 4.0),
                PairCopula::independence(),
                PairCopula::independence(),
            ],
        )
        .unwrap();
        let mut rng = substream(2, 0);
        let s = sample_vine(&v, 4000, &mut rng);
        let a: Vec<f64> = s.iter().map(|r| r[0]).collect();
        let b: Vec<f64> = s.iter().map(|r| r[1]).collect();
        let tau = kendall_tau(&a, &b);
        assert!((tau - 1.0 / 3.0).abs() < 0.03, "tau = {tau}");
    }

    #[test]
    fn refit_recovers_structure() {
        let truth = three_dim();
        let mut rng = substream(3, 0);
        let s = sample_vine(&truth, 3000, &mut rng);
        let fit = fit_vine(&s, &SelectionOptions::default()).unwrap();
        assert_eq!(fit.edges.len(), 3);
        for (f, t) in fit.edges.iter().zip(&truth.edges) {
            assert!((f.tau - t.tau).abs() < 0.06, "{:?} vs {:?}", f.copula, t.copula);
        }
        assert_eq!(fit.edges[0].copula.family, Family::StudentT);
        assert!(fit.log_likelihood(&s) > 0.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        let rows = vec![vec![0.5, 0.5]; 10];
        assert!(fit_vine(&rows, &SelectionOptions::default()).is_err());
        let mut rows = vec![vec![0.5, 0.5]; 60];
        rows[3][1] = 1.0;
        assert!(fit_vine(&rows, &SelectionOptions::default()).is_err());
        assert!(fit_vine(&vec![vec![0.5]; 60], &SelectionOptions::default()).is_err());
    }
}
