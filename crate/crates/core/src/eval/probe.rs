//! Random train/validation/test splits and the logistic-regression probe.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::Labels;
use crate::matrix::{norm, Matrix};

/// Penalty strengths tried on the validation split.
pub const L2_GRID: [f64; 4] = [1e-4, 1e-3, 1e-2, 1e-1];
pub const MAX_ITERATIONS: usize = 1000;
pub const GRAD_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Uniform (unstratified) split of the labeled nodes. Train and validation
/// sizes are `round(ratio·m)`; the test split takes the rest.
pub fn random_splits(labels: &Labels, ratios: (f64, f64, f64), seed: u64) -> Result<Split> {
    let (a, b, c) = ratios;
    if a < 0.0 || b < 0.0 || c < 0.0 || (a + b + c - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("split ratios {ratios:?} must be nonnegative and sum to 1")));
    }
    let mut nodes = labels.labeled_nodes();
    let m = nodes.len();
    let n_train = (a * m as f64).round() as usize;
    let n_val = (b * m as f64).round() as usize;
    if n_train == 0 || n_val == 0 || n_train + n_val >= m {
        return Err(Error::Validation(format!(
            "{m} labeled nodes are too few for non-empty {a}/{b}/{c} splits"
        )));
    }
    nodes.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let test = nodes.split_off(n_train + n_val);
    let val = nodes.split_off(n_train);
    Ok(Split { train: nodes, val, test })
}

/// Multinomial logistic regression on row-normalized embeddings.
#[derive(Clone, Debug, PartialEq)]
pub struct LogisticRegression {
    pub weights: Matrix,
    pub bias: Matrix,
    pub iterations: usize,
}

fn unit_rows(h: &Matrix, idx: &[usize]) -> Matrix {
    let mut x = h.select_rows(idx);
    for r in 0..x.rows() {
        let s = norm(x.row(r));
        if s > 0.0 {
            for v in x.row_mut(r) {
                *v /= s;
            }
        }
    }
    x
}

impl LogisticRegression {
    /// Minimizes mean cross-entropy plus `(l2/2)·‖W‖²` (bias unpenalized)
    /// by full-batch gradient descent with step `1/L`, where `L` bounds the
    /// gradient's Lipschitz constant.
    pub fn fit(x: &Matrix, y: &[usize], n_classes: usize, l2: f64) -> Self {
        let (m, d) = x.shape();
        let mut w = Matrix::zeros(d, n_classes);
        let mut b = Matrix::zeros(1, n_classes);
        // The softmax Hessian is bounded by I/2, and λmax(X̃ᵀX̃/m) by the mean
        // squared row norm of X with a bias column appended.
        let mean_sq = (0..m).map(|r| 1.0 + norm(x.row(r)).powi(2)).sum::<f64>() / m as f64;
        let step = 1.0 / (0.5 * mean_sq + l2);
        let mut iterations = 0;
        while iterations < MAX_ITERATIONS {
            let mut g = x.matmul(&w).expect("shapes agree");
            for r in 0..m {
                let row = g.row_mut(r);
                for (v, &bv) in row.iter_mut().zip(b.data()) {
                    *v += bv;
                }
                softmax(row);
                row[y[r]] -= 1.0;
                for v in row.iter_mut() {
                    *v /= m as f64;
                }
            }
            let mut gw = x.matmul_tn(&g).expect("shapes agree");
            gw.axpy(l2, &w);
            let gb = g.column_sums();
            let gnorm = (gw.data().iter().chain(gb.data()).map(|v| v * v).sum::<f64>()).sqrt();
            if gnorm < GRAD_TOLERANCE {
                break;
            }
            w.axpy(-step, &gw);
            b.axpy(-step, &gb);
            iterations += 1;
        }
        LogisticRegression {
            weights: w,
            bias: b,
            iterations,
        }
    }

    /// Arg-max class per row; ties go to the lower class.
    pub fn predict(&self, x: &Matrix) -> Vec<usize> {
        let logits = x.matmul(&self.weights).expect("shapes agree");
        (0..logits.rows())
            .map(|r| {
                let mut best = (0, f64::NEG_INFINITY);
                for (c, (&v, &bv)) in logits.row(r).iter().zip(self.bias.data()).enumerate() {
                    if v + bv > best.1 {
                        best = (c, v + bv);
                    }
                }
                best.0
            })
            .collect()
    }
}

fn softmax(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        s += *v;
    }
    for v in row.iter_mut() {
        *v /= s;
    }
}

fn class_indices(labels: &Labels, idx: &[usize]) -> Result<Vec<usize>> {
    idx.iter()
        .map(|&i| {
            labels
                .get(i)
                .ok_or_else(|| Error::Validation(format!("node {i} in a split has no label")))
        })
        .collect()
}

fn accuracy(pred: &[usize], truth: &[usize]) -> f64 {
    let hits = pred.iter().zip(truth).filter(|(a, b)| a == b).count();
    hits as f64 / truth.len() as f64
}

struct Prepared {
    x_train: Matrix,
    y_train: Vec<usize>,
    x_val: Matrix,
    y_val: Vec<usize>,
    x_test: Matrix,
    y_test: Vec<usize>,
}

fn prepare(h: &Matrix, labels: &Labels, split: &Split) -> Result<Prepared> {
    if h.rows() != labels.len() {
        return Err(Error::Validation(format!(
            "{} embedding rows for {} labels",
            h.rows(),
            labels.len()
        )));
    }
    if split.train.is_empty() || split.test.is_empty() {
        return Err(Error::Validation("train and test splits must be non-empty".into()));
    }
    let y_train = class_indices(labels, &split.train)?;
    let y_val = class_indices(labels, &split.val)?;
    let y_test = class_indices(labels, &split.test)?;
    let mut in_train = vec![false; labels.n_classes()];
    for &c in &y_train {
        in_train[c] = true;
    }
    if let Some(&c) = y_val.iter().chain(&y_test).find(|&&c| !in_train[c]) {
        return Err(Error::Validation(format!("class {c} is absent from the train split")));
    }
    Ok(Prepared {
        x_train: unit_rows(h, &split.train),
        y_train,
        x_val: unit_rows(h, &split.val),
        y_val,
        x_test: unit_rows(h, &split.test),
        y_test,
    })
}

/// Test accuracy of a probe fit on the train split with a fixed `l2`.
pub fn linear_probe(h: &Matrix, labels: &Labels, split: &Split, l2: f64) -> Result<f64> {
    let p = prepare(h, labels, split)?;
    let model = LogisticRegression::fit(&p.x_train, &p.y_train, labels.n_classes(), l2);
    Ok(accuracy(&model.predict(&p.x_test), &p.y_test))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProbeResult {
    pub accuracy: f64,
    pub val_accuracy: f64,
    pub l2: f64,
}

/// Picks `l2` from [`L2_GRID`] by validation accuracy (first best wins) and
/// reports that model's test accuracy.
pub fn probe_with_selection(h: &Matrix, labels: &Labels, split: &Split) -> Result<ProbeResult> {
    let p = prepare(h, labels, split)?;
    if p.y_val.is_empty() {
        return Err(Error::Validation("validation split is empty".into()));
    }
    let mut best: Option<(f64, f64, LogisticRegression)> = None;
    for l2 in L2_GRID {
        let model = LogisticRegression::fit(&p.x_train, &p.y_train, labels.n_classes(), l2);
        let val = accuracy(&model.predict(&p.x_val), &p.y_val);
        if best.as_ref().is_none_or(|b| val > b.0) {
            best = Some((val, l2, model));
        }
    }
    let (val_accuracy, l2, model) = best.expect("grid is non-empty");
    Ok(ProbeResult {
        accuracy: accuracy(&model.predict(&p.x_test), &p.y_test),
        val_accuracy,
        l2,
    })
}
