//! Define-by-run reverse-mode automatic differentiation over dense matrices.
//!
//! A [`Tape`] records every operation applied to its [`Var`] handles. Leaves
//! are created with [`Tape::param`] (tracked) or [`Tape::constant`]
//! (untracked); everything downstream of a tracked leaf is tracked as well.
//! [`Tape::backward`] walks the record in reverse and returns a
//! [`Gradients`] map for every tracked node.
//!
//! The tape is rebuilt on each forward pass. Variables from different tapes
//! must not be mixed; doing so panics.
//!
//! ```
//! use blnn::autodiff::Tape;
//! use blnn::matrix::Matrix;
//!
//! let mut tape = Tape::new();
//! let x = tape.param(Matrix::from_rows(&[[1.0, -2.0]]).unwrap());
//! let y = tape.scale(x, 2.0);
//! let s = tape.sum(y);
//! let grads = tape.backward(s).unwrap();
//! assert_eq!(grads.get(x).unwrap().data(), &[2.0, 2.0]);
//! ```

use std::rc::Rc;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};
use crate::matrix::{dot, norm, CsrMatrix, Matrix};

/// Norm clamp used by cosine similarity and row normalization.
pub const NORM_EPS: f64 = 1e-12;

static NEXT_TAPE_ID: AtomicU64 = AtomicU64::new(0);

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var {
    tape: u64,
    id: usize,
}

/// Batch statistics observed by a training-mode batch normalization.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    /// Biased (population) variance.
    pub var: Vec<f64>,
    pub n: usize,
}

#[derive(Clone, Copy, Debug)]
pub enum BatchNormMode<'a> {
    /// Normalize with the statistics of the current batch.
    Train { var_floor: f64 },
    /// Normalize with externally supplied running statistics.
    Eval {
        mean: &'a [f64],
        var: &'a [f64],
        var_floor: f64,
    },
}

enum Op {
    Leaf,
    MatMul(usize, usize),
    Spmm(Rc<CsrMatrix>, usize),
    AddBias(usize, usize),
    Add(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    PRelu {
        x: usize,
        slope: usize,
    },
    RowL2Normalize {
        x: usize,
        eps: f64,
    },
    RowCosine {
        a: usize,
        b: usize,
        pairs: Vec<(usize, usize)>,
        eps: f64,
    },
    Sum(usize),
    WeightedSum(usize, Vec<f64>),
    SegmentSoftmax {
        x: usize,
        offsets: Vec<usize>,
        inv_temp: f64,
    },
    BatchNorm {
        x: usize,
        gamma: usize,
        beta: usize,
        xhat: Matrix,
        inv_std: Vec<f64>,
        columns: Vec<BnColumn>,
    },
}

/// How the input gradient of one batch-norm column depends on the batch.
#[derive(Clone, Copy)]
enum BnColumn {
    /// Train mode: mean and variance both depend on the batch.
    ThroughStats,
    /// Train mode with a clamped variance: only the mean does.
    CenteredOnly,
    /// Eval mode: statistics are constants.
    Fixed,
}

struct Node {
    value: Matrix,
    requires_grad: bool,
    op: Op,
}

/// The computation record.
pub struct Tape {
    id: u64,
    nodes: Vec<Node>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Matrix, requires_grad: bool, op: Op) -> Var {
        self.nodes.push(Node {
            value,
            requires_grad,
            op,
        });
        Var {
            tape: self.id,
            id: self.nodes.len() - 1,
        }
    }

    fn idx(&self, v: Var) -> usize {
        assert_eq!(
            v.tape, self.id,
            "variable from a different tape used on this tape"
        );
        v.id
    }

    fn rg(&self, i: usize) -> bool {
        self.nodes[i].requires_grad
    }

    /// A tracked leaf.
    pub fn param(&mut self, value: Matrix) -> Var {
        self.push(value, true, Op::Leaf)
    }

    /// An untracked leaf.
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, false, Op::Leaf)
    }

    /// Same values as `v`, cut off from gradient flow.
    pub fn detach(&mut self, v: Var) -> Var {
        let value = self.value(v).clone();
        self.constant(value)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[self.idx(v)].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.rg(self.idx(v))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib) = (self.idx(a), self.idx(b));
        let value = self.nodes[ia].value.matmul(&self.nodes[ib].value)?;
        let rg = self.rg(ia) || self.rg(ib);
        Ok(self.push(value, rg, Op::MatMul(ia, ib)))
    }

    /// Sparse-times-dense product. The sparse operand is a constant.
    pub fn spmm(&mut self, s: &Rc<CsrMatrix>, x: Var) -> Result<Var> {
        let ix = self.idx(x);
        let value = s.spmm(&self.nodes[ix].value)?;
        let rg = self.rg(ix);
        Ok(self.push(value, rg, Op::Spmm(Rc::clone(s), ix)))
    }

    /// Adds a `1 × cols` row vector to every row.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (ix, ib) = (self.idx(x), self.idx(bias));
        let (xv, bv) = (&self.nodes[ix].value, &self.nodes[ib].value);
        if bv.rows() != 1 || bv.cols() != xv.cols() {
            return Err(Error::Dimension {
                op: "add_bias",
                left: xv.shape(),
                right: bv.shape(),
            });
        }
        let mut value = xv.clone();
        for r in 0..value.rows() {
            for (o, &b) in value.row_mut(r).iter_mut().zip(bv.data()) {
                *o += b;
            }
        }
        let rg = self.rg(ix) || self.rg(ib);
        Ok(self.push(value, rg, Op::AddBias(ix, ib)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib) = (self.idx(a), self.idx(b));
        let (av, bv) = (&self.nodes[ia].value, &self.nodes[ib].value);
        if av.shape() != bv.shape() {
            return Err(Error::Dimension {
                op: "add",
                left: av.shape(),
                right: bv.shape(),
            });
        }
        let mut value = av.clone();
        value.add_assign(bv);
        let rg = self.rg(ia) || self.rg(ib);
        Ok(self.push(value, rg, Op::Add(ia, ib)))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib) = (self.idx(a), self.idx(b));
        let (av, bv) = (&self.nodes[ia].value, &self.nodes[ib].value);
        if av.shape() != bv.shape() {
            return Err(Error::Dimension {
                op: "mul",
                left: av.shape(),
                right: bv.shape(),
            });
        }
        let data = av.data().iter().zip(bv.data()).map(|(x, y)| x * y).collect();
        let value = Matrix::from_vec(av.rows(), av.cols(), data)?;
        let rg = self.rg(ia) || self.rg(ib);
        Ok(self.push(value, rg, Op::Mul(ia, ib)))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let ix = self.idx(x);
        let value = self.nodes[ix].value.scaled(c);
        let rg = self.rg(ix);
        self.push(value, rg, Op::Scale(ix, c))
    }

    /// Parametric ReLU with a learnable `1 × 1` slope for negative inputs.
    pub fn prelu(&mut self, x: Var, slope: Var) -> Result<Var> {
        let (ix, is) = (self.idx(x), self.idx(slope));
        let sv = &self.nodes[is].value;
        if sv.shape() != (1, 1) {
            return Err(Error::Dimension {
                op: "prelu",
                left: self.nodes[ix].value.shape(),
                right: sv.shape(),
            });
        }
        let a = sv.item();
        let value = self.nodes[ix].value.map(|v| if v > 0.0 { v } else { a * v });
        let rg = self.rg(ix) || self.rg(is);
        Ok(self.push(value, rg, Op::PRelu { x: ix, slope: is }))
    }

    /// Divides every row by `max(‖row‖, eps)`.
    pub fn row_l2_normalize(&mut self, x: Var, eps: f64) -> Result<Var> {
        if eps <= 0.0 {
            return Err(Error::Usage("row_l2_normalize needs eps > 0".into()));
        }
        let ix = self.idx(x);
        let mut value = self.nodes[ix].value.clone();
        for r in 0..value.rows() {
            let row = value.row_mut(r);
            let n = norm(row).max(eps);
            row.iter_mut().for_each(|v| *v /= n);
        }
        let rg = self.rg(ix);
        Ok(self.push(value, rg, Op::RowL2Normalize { x: ix, eps }))
    }

    /// Cosine similarity of row `i` of `a` with row `j` of `b` for every
    /// `(i, j)` in `pairs`, as a `pairs.len() × 1` column.
    pub fn row_cosine(&mut self, a: Var, b: Var, pairs: Vec<(usize, usize)>) -> Result<Var> {
        let (ia, ib) = (self.idx(a), self.idx(b));
        let (av, bv) = (&self.nodes[ia].value, &self.nodes[ib].value);
        if av.cols() != bv.cols() {
            return Err(Error::Dimension {
                op: "row_cosine",
                left: av.shape(),
                right: bv.shape(),
            });
        }
        if let Some(&(i, j)) = pairs.iter().find(|&&(i, j)| i >= av.rows() || j >= bv.rows()) {
            return Err(Error::Validation(format!(
                "row_cosine pair ({i}, {j}) out of range for {} and {} rows",
                av.rows(),
                bv.rows()
            )));
        }
        let na: Vec<f64> = av.iter_rows().map(|r| norm(r).max(NORM_EPS)).collect();
        let nb: Vec<f64> = bv.iter_rows().map(|r| norm(r).max(NORM_EPS)).collect();
        let data = pairs
            .iter()
            .map(|&(i, j)| dot(av.row(i), bv.row(j)) / (na[i] * nb[j]))
            .collect::<Vec<_>>();
        let value = Matrix::from_vec(data.len(), 1, data)?;
        let rg = self.rg(ia) || self.rg(ib);
        Ok(self.push(
            value,
            rg,
            Op::RowCosine {
                a: ia,
                b: ib,
                pairs,
                eps: NORM_EPS,
            },
        ))
    }

    /// Sum of all entries, as a `1 × 1` value.
    pub fn sum(&mut self, x: Var) -> Var {
        let ix = self.idx(x);
        let value = Matrix::scalar(self.nodes[ix].value.sum());
        let rg = self.rg(ix);
        self.push(value, rg, Op::Sum(ix))
    }

    /// `Σ_k weights[k] · x_k` over the flattened entries of `x`, with
    /// constant weights.
    pub fn weighted_sum(&mut self, x: Var, weights: Vec<f64>) -> Result<Var> {
        let ix = self.idx(x);
        let xv = &self.nodes[ix].value;
        if xv.data().len() != weights.len() {
            return Err(Error::Dimension {
                op: "weighted_sum",
                left: xv.shape(),
                right: (weights.len(), 1),
            });
        }
        let value = Matrix::scalar(dot(xv.data(), &weights));
        let rg = self.rg(ix);
        Ok(self.push(value, rg, Op::WeightedSum(ix, weights)))
    }

    /// Softmax of `x · inv_temp` within each segment
    /// `offsets[s]..offsets[s + 1]` of a column vector.
    pub fn segment_softmax(&mut self, x: Var, offsets: Vec<usize>, inv_temp: f64) -> Result<Var> {
        let ix = self.idx(x);
        let xv = &self.nodes[ix].value;
        if xv.cols() != 1 || offsets.last().copied().unwrap_or(0) != xv.rows() {
            return Err(Error::Dimension {
                op: "segment_softmax",
                left: xv.shape(),
                right: (offsets.last().copied().unwrap_or(0), 1),
            });
        }
        let mut data = xv.data().to_vec();
        for w in offsets.windows(2) {
            softmax_in_place(&mut data[w[0]..w[1]], inv_temp);
        }
        let value = Matrix::from_vec(data.len(), 1, data)?;
        let rg = self.rg(ix);
        Ok(self.push(
            value,
            rg,
            Op::SegmentSoftmax {
                x: ix,
                offsets,
                inv_temp,
            },
        ))
    }

    /// Per-column batch normalization followed by the affine map
    /// `gamma ∘ x̂ + beta`. The standard deviation is
    /// `sqrt(max(var, var_floor))`. Train mode also returns the batch
    /// statistics so the caller can update running estimates.
    pub fn batch_norm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        mode: BatchNormMode<'_>,
    ) -> Result<(Var, Option<BatchStats>)> {
        let (ix, ig, ib) = (self.idx(x), self.idx(gamma), self.idx(beta));
        let xv = &self.nodes[ix].value;
        let (n, d) = xv.shape();
        for p in [ig, ib] {
            let pv = &self.nodes[p].value;
            if pv.shape() != (1, d) {
                return Err(Error::Dimension {
                    op: "batch_norm",
                    left: xv.shape(),
                    right: pv.shape(),
                });
            }
        }
        let (mean, var, floor, train) = match mode {
            BatchNormMode::Train { var_floor } => {
                if n == 0 {
                    return Err(Error::Validation("batch_norm on an empty batch".into()));
                }
                let mut mean = xv.column_sums().into_vec();
                mean.iter_mut().for_each(|m| *m /= n as f64);
                let mut var = vec![0.0; d];
                for row in xv.iter_rows() {
                    for c in 0..d {
                        let t = row[c] - mean[c];
                        var[c] += t * t;
                    }
                }
                var.iter_mut().for_each(|v| *v /= n as f64);
                (mean, var, var_floor, true)
            }
            BatchNormMode::Eval {
                mean,
                var,
                var_floor,
            } => {
                if mean.len() != d || var.len() != d {
                    return Err(Error::Dimension {
                        op: "batch_norm",
                        left: xv.shape(),
                        right: (1, mean.len().max(var.len())),
                    });
                }
                (mean.to_vec(), var.to_vec(), var_floor, false)
            }
        };
        let inv_std: Vec<f64> = var.iter().map(|&v| 1.0 / v.max(floor).sqrt()).collect();
        let columns: Vec<BnColumn> = var
            .iter()
            .map(|&v| match (train, v > floor) {
                (true, true) => BnColumn::ThroughStats,
                (true, false) => BnColumn::CenteredOnly,
                (false, _) => BnColumn::Fixed,
            })
            .collect();
        let mut xhat = xv.clone();
        for r in 0..n {
            for (c, h) in xhat.row_mut(r).iter_mut().enumerate() {
                *h = (*h - mean[c]) * inv_std[c];
            }
        }
        let (gv, bv) = (self.nodes[ig].value.data(), self.nodes[ib].value.data());
        let mut value = xhat.clone();
        for r in 0..n {
            for (c, y) in value.row_mut(r).iter_mut().enumerate() {
                *y = gv[c] * *y + bv[c];
            }
        }
        let rg = self.rg(ix) || self.rg(ig) || self.rg(ib);
        let out = self.push(
            value,
            rg,
            Op::BatchNorm {
                x: ix,
                gamma: ig,
                beta: ib,
                xhat,
                inv_std,
                columns,
            },
        );
        let stats = train.then_some(BatchStats { mean, var, n });
        Ok((out, stats))
    }

    /// Reverse sweep from a `1 × 1` output.
    pub fn backward(&self, output: Var) -> Result<Gradients> {
        let root = self.idx(output);
        let shape = self.nodes[root].value.shape();
        if shape != (1, 1) {
            return Err(Error::Usage(format!(
                "backward needs a 1x1 output, got {shape:?}"
            )));
        }
        let mut grads: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        if !self.rg(root) {
            return Ok(Gradients {
                tape: self.id,
                grads,
            });
        }
        grads[root] = Some(Matrix::scalar(1.0));

        for i in (0..=root).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads)?;
            grads[i] = Some(g);
        }
        Ok(Gradients {
            tape: self.id,
            grads,
        })
    }

    fn propagate(&self, i: usize, g: &Matrix, grads: &mut [Option<Matrix>]) -> Result<()> {
        let node = &self.nodes[i];
        let val = |k: usize| &self.nodes[k].value;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if self.rg(*a) {
                    accumulate(grads, *a, g.matmul_nt(val(*b))?);
                }
                if self.rg(*b) {
                    accumulate(grads, *b, val(*a).matmul_tn(g)?);
                }
            }
            Op::Spmm(s, x) => {
                accumulate(grads, *x, s.spmm_t(g)?);
            }
            Op::AddBias(x, b) => {
                if self.rg(*x) {
                    accumulate(grads, *x, g.clone());
                }
                if self.rg(*b) {
                    accumulate(grads, *b, g.column_sums());
                }
            }
            Op::Add(a, b) => {
                for k in [*a, *b] {
                    if self.rg(k) {
                        accumulate(grads, k, g.clone());
                    }
                }
            }
            Op::Mul(a, b) => {
                for (k, other) in [(*a, *b), (*b, *a)] {
                    if self.rg(k) {
                        let o = val(other);
                        let data = g.data().iter().zip(o.data()).map(|(x, y)| x * y).collect();
                        accumulate(grads, k, Matrix::from_vec(g.rows(), g.cols(), data)?);
                    }
                }
            }
            Op::Scale(x, c) => accumulate(grads, *x, g.scaled(*c)),
            Op::PRelu { x, slope } => {
                let xv = val(*x);
                let a = val(*slope).item();
                if self.rg(*x) {
                    let data = xv
                        .data()
                        .iter()
                        .zip(g.data())
                        .map(|(&v, &gv)| if v > 0.0 { gv } else { a * gv })
                        .collect();
                    accumulate(grads, *x, Matrix::from_vec(g.rows(), g.cols(), data)?);
                }
                if self.rg(*slope) {
                    let ds: f64 = xv
                        .data()
                        .iter()
                        .zip(g.data())
                        .filter(|(&v, _)| v <= 0.0)
                        .map(|(&v, &gv)| v * gv)
                        .sum();
                    accumulate(grads, *slope, Matrix::scalar(ds));
                }
            }
            Op::RowL2Normalize { x, eps } => {
                let xv = val(*x);
                let y = &node.value;
                let mut gx = Matrix::zeros(xv.rows(), xv.cols());
                for r in 0..xv.rows() {
                    let n = norm(xv.row(r));
                    let (gr, yr) = (g.row(r), y.row(r));
                    let out = gx.row_mut(r);
                    if n > *eps {
                        let yg = dot(yr, gr);
                        for c in 0..out.len() {
                            out[c] = (gr[c] - yr[c] * yg) / n;
                        }
                    } else {
                        for c in 0..out.len() {
                            out[c] = gr[c] / eps;
                        }
                    }
                }
                accumulate(grads, *x, gx);
            }
            Op::RowCosine { a, b, pairs, eps } => {
                let (av, bv) = (val(*a), val(*b));
                let raw_a: Vec<f64> = av.iter_rows().map(norm).collect();
                let raw_b: Vec<f64> = bv.iter_rows().map(norm).collect();
                let mut ga = self.rg(*a).then(|| Matrix::zeros(av.rows(), av.cols()));
                let mut gb = self.rg(*b).then(|| Matrix::zeros(bv.rows(), bv.cols()));
                for (p, &(i, j)) in pairs.iter().enumerate() {
                    let gp = g.data()[p];
                    if gp == 0.0 {
                        continue;
                    }
                    let c = node.value.data()[p];
                    let (na, nb) = (raw_a[i].max(*eps), raw_b[j].max(*eps));
                    let (ar, br) = (av.row(i), bv.row(j));
                    let inv = 1.0 / (na * nb);
                    if let Some(ga) = ga.as_mut() {
                        // The norm of a only enters the gradient when unclamped.
                        let self_term = if raw_a[i] > *eps { c / (raw_a[i] * raw_a[i]) } else { 0.0 };
                        let out = ga.row_mut(i);
                        for k in 0..out.len() {
                            out[k] += gp * (br[k] * inv - self_term * ar[k]);
                        }
                    }
                    if let Some(gb) = gb.as_mut() {
                        let self_term = if raw_b[j] > *eps { c / (raw_b[j] * raw_b[j]) } else { 0.0 };
                        let out = gb.row_mut(j);
                        for k in 0..out.len() {
                            out[k] += gp * (ar[k] * inv - self_term * br[k]);
                        }
                    }
                }
                if let Some(ga) = ga {
                    accumulate(grads, *a, ga);
                }
                if let Some(gb) = gb {
                    accumulate(grads, *b, gb);
                }
            }
            Op::Sum(x) => {
                let (r, c) = val(*x).shape();
                accumulate(grads, *x, Matrix::filled(r, c, g.item()));
            }
            Op::WeightedSum(x, w) => {
                let (r, c) = val(*x).shape();
                let gs = g.item();
                let data = w.iter().map(|&wk| gs * wk).collect();
                accumulate(grads, *x, Matrix::from_vec(r, c, data)?);
            }
            Op::SegmentSoftmax {
                x,
                offsets,
                inv_temp,
            } => {
                let y = node.value.data();
                let gd = g.data();
                let mut gx = vec![0.0; y.len()];
                for w in offsets.windows(2) {
                    let seg = w[0]..w[1];
                    let s: f64 = seg.clone().map(|k| gd[k] * y[k]).sum();
                    for k in seg {
                        gx[k] = inv_temp * y[k] * (gd[k] - s);
                    }
                }
                accumulate(grads, *x, Matrix::from_vec(y.len(), 1, gx)?);
            }
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                columns,
            } => {
                let (n, d) = xhat.shape();
                if self.rg(*gamma) {
                    let mut gg = Matrix::zeros(1, d);
                    for r in 0..n {
                        for c in 0..d {
                            gg.data_mut()[c] += g[(r, c)] * xhat[(r, c)];
                        }
                    }
                    accumulate(grads, *gamma, gg);
                }
                if self.rg(*beta) {
                    accumulate(grads, *beta, g.column_sums());
                }
                if self.rg(*x) {
                    let gamma_v = val(*gamma).data();
                    let nf = n as f64;
                    let mut mean_g = vec![0.0; d];
                    let mut mean_gx = vec![0.0; d];
                    for r in 0..n {
                        for c in 0..d {
                            mean_g[c] += g[(r, c)];
                            mean_gx[c] += g[(r, c)] * xhat[(r, c)];
                        }
                    }
                    mean_g.iter_mut().for_each(|v| *v /= nf);
                    mean_gx.iter_mut().for_each(|v| *v /= nf);
                    let mut gx = Matrix::zeros(n, d);
                    for r in 0..n {
                        for c in 0..d {
                            let k = gamma_v[c] * inv_std[c];
                            let gi = g[(r, c)];
                            gx[(r, c)] = match columns[c] {
                                BnColumn::ThroughStats => {
                                    k * (gi - mean_g[c] - xhat[(r, c)] * mean_gx[c])
                                }
                                BnColumn::CenteredOnly => k * (gi - mean_g[c]),
                                BnColumn::Fixed => k * gi,
                            };
                        }
                    }
                    accumulate(grads, *x, gx);
                }
            }
        }
        Ok(())
    }

}

fn accumulate(grads: &mut [Option<Matrix>], k: usize, g: Matrix) {
    match &mut grads[k] {
        Some(acc) => acc.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

/// Numerically stable softmax of `xs · inv_temp`, in place.
pub fn softmax_in_place(xs: &mut [f64], inv_temp: f64) {
    let max = xs.iter().map(|&x| x * inv_temp).fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for x in xs.iter_mut() {
        *x = (*x * inv_temp - max).exp();
        total += *x;
    }
    xs.iter_mut().for_each(|x| *x /= total);
}

/// Result of [`Tape::backward`].
pub struct Gradients {
    tape: u64,
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    /// Gradient of the output with respect to `v`, or `None` when `v` is
    /// untracked or does not influence the output.
    pub fn get(&self, v: Var) -> Option<&Matrix> {
        assert_eq!(v.tape, self.tape, "variable from a different tape");
        self.grads[v.id].as_ref()
    }

    /// Like [`get`](Self::get), with absent gradients materialized as zeros
    /// shaped like `like`.
    pub fn get_or_zeros(&self, v: Var, like: &Matrix) -> Matrix {
        self.get(v)
            .cloned()
            .unwrap_or_else(|| Matrix::zeros(like.rows(), like.cols()))
    }
}
