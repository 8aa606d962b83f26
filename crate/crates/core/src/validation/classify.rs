use nalgebra::{DMatrix, DVector};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::polar::cost;
use crate::stats::{self, quantile_sorted, substream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Features {
    /// The series itself.
    Raw,
    /// The cost of the series.
    Cost,
    /// The series divided by its cost.
    Angle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classifier {
    Logistic,
    RandomForest,
}

pub const RIDGE: f64 = 1e-6;
pub const DEFAULT_TREES: usize = 500;
pub const TRAIN_FRACTION: f64 = 0.7;

pub fn extract_features(series: &[f64], features: Features) -> Result<Vec<f64>> {
    match features {
        Features::Raw => Ok(series.to_vec()),
        Features::Cost => Ok(vec![cost(series)]),
        Features::Angle => {
            let c = cost(series);
            if !(c > 0.0) {
                return Err(Error::invalid("series with zero cost has no angle"));
            }
            Ok(series.iter().map(|x| x / c).collect())
        }
    }
}

/// Standardisation fitted on a training set; constant columns are centred only.
struct Scaler {
    mean: Vec<f64>,
    sd: Vec<f64>,
}

impl Scaler {
    fn fit(x: &[Vec<f64>]) -> Self {
        let d = x[0].len();
        let mut mean = vec![0.0; d];
        let mut sd = vec![1.0; d];
        for j in 0..d {
            let col: Vec<f64> = x.iter().map(|r| r[j]).collect();
            mean[j] = stats::mean(&col);
            let s = stats::std_dev(&col, 0);
            if s > 0.0 {
                sd[j] = s;
            }
        }
        Self { mean, sd }
    }

    fn apply(&self, row: &[f64]) -> Vec<f64> {
        row.iter().zip(&self.mean).zip(&self.sd).map(|((x, m), s)| (x - m) / s).collect()
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Logistic regression with intercept fitted by ridge-stabilised IRLS on
/// standardised features.
pub struct LogisticModel {
    scaler: Scaler,
    /// Intercept first.
    pub coef: Vec<f64>,
}

impl LogisticModel {
    pub fn fit(x: &[Vec<f64>], y: &[bool]) -> Result<Self> {
        if x.is_empty() || x.len() != y.len() {
            return Err(Error::invalid("logistic regression needs matching nonempty inputs"));
        }
        let scaler = Scaler::fit(x);
        let n = x.len();
        let d = x[0].len() + 1;
        let design = DMatrix::from_fn(n, d, |i, j| if j == 0 { 1.0 } else { (x[i][j - 1] - scaler.mean[j - 1]) / scaler.sd[j - 1] });
        let target = DVector::from_fn(n, |i, _| y[i] as u8 as f64);
        let mut beta = DVector::zeros(d);
        for _ in 0..100 {
            let eta = &design * &beta;
            let p = eta.map(sigmoid);
            let w = p.map(|v| (v * (1.0 - v)).max(1e-10));
            let mut h = design.transpose() * DMatrix::from_diagonal(&w) * &design;
            for k in 0..d {
                h[(k, k)] += RIDGE;
            }
            let grad = design.transpose() * (&target - &p) - RIDGE * &beta;
            let step = h
                .cholesky()
                .ok_or_else(|| Error::Singular("logistic Hessian is not positive definite".into()))?
                .solve(&grad);
            beta += &step;
            if step.amax() < 1e-8 {
                break;
            }
        }
        if beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::Optimization("logistic regression diverged".into()));
        }
        Ok(Self {
            scaler,
            coef: beta.iter().copied().collect(),
        })
    }

    pub fn probability(&self, row: &[f64]) -> f64 {
        let z = self.scaler.apply(row);
        sigmoid(self.coef[0] + stats::dot(&self.coef[1..], &z))
    }
}

#[derive(Debug, Clone, Copy)]
enum Node {
    Leaf(f64),
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

/// Classification tree grown to purity with Gini splits over a random
/// subset of features at each node.
pub struct Tree {
    nodes: Vec<Node>,
}

fn gini(pos: usize, n: usize) -> f64 {
    let p = pos as f64 / n as f64;
    2.0 * p * (1.0 - p)
}

impl Tree {
    fn grow<R: Rng + ?Sized>(x: &[Vec<f64>], y: &[bool], idx: Vec<usize>, m_try: usize, rng: &mut R) -> Self {
        let mut tree = Tree { nodes: Vec::new() };
        tree.build(x, y, idx, m_try, rng);
        tree
    }

    fn build<R: Rng + ?Sized>(&mut self, x: &[Vec<f64>], y: &[bool], mut idx: Vec<usize>, m_try: usize, rng: &mut R) -> usize {
        let id = self.nodes.len();
        let n = idx.len();
        let pos = idx.iter().filter(|&&i| y[i]).count();
        self.nodes.push(Node::Leaf(pos as f64 / n as f64));
        if pos == 0 || pos == n {
            return id;
        }
        let d = x[0].len();
        let mut order: Vec<usize> = (0..d).collect();
        order.shuffle(rng);
        let mut best: Option<(f64, usize, f64)> = None;
        for (tried, &f) in order.iter().enumerate() {
            if tried >= m_try && best.is_some() {
                break;
            }
            idx.sort_by(|&a, &b| x[a][f].total_cmp(&x[b][f]));
            let mut left_pos = 0;
            for k in 1..n {
                left_pos += y[idx[k - 1]] as usize;
                let (lo, hi) = (x[idx[k - 1]][f], x[idx[k]][f]);
                if lo == hi {
                    continue;
                }
                let impurity = k as f64 * gini(left_pos, k) + (n - k) as f64 * gini(pos - left_pos, n - k);
                if best.is_none_or(|b| impurity < b.0) {
                    let mid = 0.5 * (lo + hi);
                    best = Some((impurity, f, if mid < hi { mid } else { lo }));
                }
            }
        }
        let Some((_, feature, threshold)) = best else {
            return id;
        };
        let (l, r): (Vec<usize>, Vec<usize>) = idx.into_iter().partition(|&i| x[i][feature] <= threshold);
        let left = self.build(x, y, l, m_try, rng);
        let right = self.build(x, y, r, m_try, rng);
        self.nodes[id] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        id
    }

    pub fn probability(&self, row: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf(p) => return p,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if row[feature] <= threshold { left } else { right },
            }
        }
    }
}

/// Bagged trees with `sqrt(d)` candidate features per split.
pub struct RandomForest {
    trees: Vec<Tree>,
}

impl RandomForest {
    pub fn fit<R: Rng + ?Sized>(x: &[Vec<f64>], y: &[bool], n_trees: usize, rng: &mut R) -> Result<Self> {
        if x.is_empty() || x.len() != y.len() || n_trees == 0 {
            return Err(Error::invalid("random forest needs matching nonempty inputs and at least one tree"));
        }
        let n = x.len();
        let m_try = ((x[0].len() as f64).sqrt().floor() as usize).max(1);
        let trees = (0..n_trees)
            .map(|_| {
                let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
                Tree::grow(x, y, idx, m_try, rng)
            })
            .collect();
        Ok(Self { trees })
    }

    pub fn probability(&self, row: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.probability(row)).sum::<f64>() / self.trees.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationResult {
    pub features: Features,
    pub classifier: Classifier,
    pub reps: usize,
    pub mean_accuracy: f64,
    /// 5% quantile of the accuracies.
    pub lower: f64,
    /// 95% quantile of the accuracies.
    pub upper: f64,
    pub accuracies: Vec<f64>,
}

impl ClassificationResult {
    pub fn contains_half(&self) -> bool {
        self.lower <= 0.5 && 0.5 <= self.upper
    }

    pub fn above_half(&self) -> bool {
        self.lower > 0.5
    }
}

/// Indices of a stratified split: the first `round(0.7 n)` of each shuffled class
/// go to training.
fn stratified_split<R: Rng + ?Sized>(y: &[bool], rng: &mut R) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut train = Vec::new();
    let mut test = Vec::new();
    for class in [false, true] {
        let mut members: Vec<usize> = (0..y.len()).filter(|&i| y[i] == class).collect();
        members.shuffle(rng);
        let k = (TRAIN_FRACTION * members.len() as f64).round() as usize;
        if k == 0 || k == members.len() {
            return Err(Error::insufficient("a class is missing from the training or test split"));
        }
        train.extend_from_slice(&members[..k]);
        test.extend_from_slice(&members[k..]);
    }
    Ok((train, test))
}

fn one_rep(
    obs: &[Vec<f64>],
    pool: &[Vec<f64>],
    classifier: Classifier,
    n_trees: usize,
    seed: u64,
    rep: usize,
) -> Result<f64> {
    let mut rng = substream(seed, rep as u64);
    let chosen: Vec<&Vec<f64>> = pool.choose_multiple(&mut rng, obs.len()).collect();
    let x: Vec<Vec<f64>> = obs.iter().chain(chosen).cloned().collect();
    let y: Vec<bool> = (0..x.len()).map(|i| i >= obs.len()).collect();
    let (train, test) = stratified_split(&y, &mut rng)?;
    let xt: Vec<Vec<f64>> = train.iter().map(|&i| x[i].clone()).collect();
    let yt: Vec<bool> = train.iter().map(|&i| y[i]).collect();
    let predict: Predictor = match classifier {
        Classifier::Logistic => {
            let m = LogisticModel::fit(&xt, &yt)?;
            Box::new(move |r| m.probability(r))
        }
        Classifier::RandomForest => {
            let m = RandomForest::fit(&xt, &yt, n_trees, &mut rng)?;
            Box::new(move |r| m.probability(r))
        }
    };
    let correct = test.iter().filter(|&&i| (predict(&x[i]) > 0.5) == y[i]).count();
    Ok(correct as f64 / test.len() as f64)
}

type Predictor = Box<dyn Fn(&[f64]) -> f64>;

/// Classifier two-sample test: each repetition draws as many simulations as
/// there are observations, trains on a stratified 70% split and scores the
/// remaining 30%. Reports the 5-95% range of the accuracies.
#[allow(clippy::too_many_arguments)]
pub fn classification_test(
    observed: &[Vec<f64>],
    simulated: &[Vec<f64>],
    features: Features,
    classifier: Classifier,
    reps: usize,
    n_trees: usize,
    seed: u64,
) -> Result<ClassificationResult> {
    if observed.is_empty() {
        return Err(Error::insufficient("no observed series to classify"));
    }
    if simulated.len() < observed.len() {
        return Err(Error::insufficient(format!(
            "simulated pool of {} is smaller than the {} observations",
            simulated.len(),
            observed.len()
        )));
    }
    if reps == 0 {
        return Err(Error::invalid("at least one repetition is required"));
    }
    let obs: Vec<Vec<f64>> = observed.iter().map(|s| extract_features(s, features)).collect::<Result<_>>()?;
    let pool: Vec<Vec<f64>> = simulated.iter().map(|s| extract_features(s, features)).collect::<Result<_>>()?;
    let accuracies: Vec<f64> = (0..reps)
        .into_par_iter()
        .map(|r| one_rep(&obs, &pool, classifier, n_trees, seed, r))
        .collect::<Result<_>>()?;
    let s = stats::sorted(&accuracies);
    Ok(ClassificationResult {
        features,
        classifier,
        reps,
        mean_accuracy: stats::mean(&accuracies),
        lower: quantile_sorted(&s, 0.05),
        upper: quantile_sorted(&s, 0.95),
        accuracies,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::StandardNormal;

    fn gaussian_rows(n: usize, d: usize, shift: f64, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = substream(seed, 0);
        (0..n)
            .map(|_| (0..d).map(|_| shift + rng.sample::<f64, _>(StandardNormal)).collect())
            .collect()
    }

    #[test]
    fn logistic_recovers_coefficients() {
        let mut rng = substream(1, 1);
        let x = gaussian_rows(4000, 2, 0.0, 2);
        let y: Vec<bool> = x
            .iter()
            .map(|r| rng.random::<f64>() < sigmoid(0.5 + 1.5 * r[0] - 1.0 * r[1]))
            .collect();
        let m = LogisticModel::fit(&x, &y).unwrap();
        let sd: Vec<f64> = (0..2).map(|j| stats::std_dev(&x.iter().map(|r| r[j]).collect::<Vec<_>>(), 0)).collect();
        assert!((m.coef[1] / sd[0] - 1.5).abs() < 0.15, "{:?}", m.coef);
        assert!((m.coef[2] / sd[1] + 1.0).abs() < 0.15, "{:?}", m.coef);
    }

    #[test]
    fn logistic_survives_separable_data() {
        let mut x = gaussian_rows(50, 3, 0.0, 1);
        x.extend(gaussian_rows(50, 3, 10.0, 2));
        let y: Vec<bool> = (0..100).map(|i| i >= 50).collect();
        let m = LogisticModel::fit(&x, &y).unwrap();
        assert!(x.iter().zip(&y).all(|(r, &c)| (m.probability(r) > 0.5) == c));
    }

    #[test]
    fn tree_fits_training_data_exactly() {
        let x = gaussian_rows(200, 4, 0.0, 3);
        let y: Vec<bool> = x.iter().map(|r| r[0] * r[1] > 0.0).collect();
        let mut rng = substream(0, 0);
        let t = Tree::grow(&x, &y, (0..200).collect(), 2, &mut rng);
        assert!(x.iter().zip(&y).all(|(r, &c)| (t.probability(r) > 0.5) == c));
    }

    #[test]
    fn forest_learns_interaction() {
        let x = gaussian_rows(600, 2, 0.0, 3);
        let y: Vec<bool> = x.iter().map(|r| r[0] * r[1] > 0.0).collect();
        let mut rng = substream(0, 0);
        let f = RandomForest::fit(&x[..400], &y[..400], 100, &mut rng).unwrap();
        let acc = (400..600).filter(|&i| (f.probability(&x[i]) > 0.5) == y[i]).count() as f64 / 200.0;
        assert!(acc > 0.85, "{acc}");
    }

    #[test]
    fn same_distribution_covers_half() {
        let all = gaussian_rows(400, 5, 0.0, 7);
        let (a, b) = all.split_at(100);
        for c in [Classifier::Logistic, Classifier::RandomForest] {
            let r = classification_test(a, b, Features::Raw, c, 50, 50, 3).unwrap();
            assert!(r.contains_half(), "{c:?} {} {}", r.lower, r.upper);
        }
    }

    #[test]
    fn shifted_samples_are_separated() {
        let a = gaussian_rows(100, 5, 0.0, 1);
        let b = gaussian_rows(300, 5, 5.0, 2);
        for c in [Classifier::Logistic, Classifier::RandomForest] {
            let r = classification_test(&a, &b, Features::Raw, c, 30, 50, 3).unwrap();
            assert!(r.lower > 0.95, "{c:?} {}", r.lower);
        }
    }

    #[test]
    fn small_pool_is_rejected() {
        let a = gaussian_rows(10, 2, 0.0, 1);
        assert!(classification_test(&a, &a[..5], Features::Raw, Classifier::Logistic, 5, 10, 0).is_err());
        assert!(classification_test(&a[..1], &a, Features::Raw, Classifier::Logistic, 5, 10, 0).is_err());
    }
}
