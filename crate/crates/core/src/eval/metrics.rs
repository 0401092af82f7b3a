//! Clustering agreement, similarity-search and compactness metrics.
//!
//! Labels and cluster assignments are plain class indices; callers restrict
//! to labeled nodes first.

use std::collections::BTreeMap;

use crate::autodiff::NORM_EPS;
use crate::error::{Error, Result};
use crate::graph::{Labels, NeighborList};
use crate::matrix::{dot, norm, Matrix};
use crate::objective::SupportScores;

fn check_lengths(a: &[usize], b: &[usize]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Validation(format!(
            "{} labels but {} assignments",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(Error::Validation("no labeled nodes to score".into()));
    }
    Ok(())
}

struct Contingency {
    n: f64,
    joint: BTreeMap<(usize, usize), usize>,
    rows: BTreeMap<usize, usize>,
    cols: BTreeMap<usize, usize>,
}

impl Contingency {
    fn new(labels: &[usize], clusters: &[usize]) -> Self {
        let mut c = Contingency {
            n: labels.len() as f64,
            joint: BTreeMap::new(),
            rows: BTreeMap::new(),
            cols: BTreeMap::new(),
        };
        for (&y, &k) in labels.iter().zip(clusters) {
            *c.joint.entry((y, k)).or_default() += 1;
            *c.rows.entry(y).or_default() += 1;
            *c.cols.entry(k).or_default() += 1;
        }
        c
    }

    fn entropy(&self, counts: &BTreeMap<usize, usize>) -> f64 {
        -counts
            .values()
            .map(|&c| {
                let p = c as f64 / self.n;
                p * p.ln()
            })
            .sum::<f64>()
    }

    fn mutual_information(&self) -> f64 {
        self.joint
            .iter()
            .map(|(&(y, k), &c)| {
                let c = c as f64;
                let (a, b) = (self.rows[&y] as f64, self.cols[&k] as f64);
                c / self.n * (self.n * c / (a * b)).ln()
            })
            .sum()
    }

    /// H(Y | clusters).
    fn conditional_entropy(&self) -> f64 {
        -self
            .joint
            .iter()
            .map(|(&(_, k), &c)| {
                let c = c as f64;
                c / self.n * (c / self.cols[&k] as f64).ln()
            })
            .sum::<f64>()
    }
}

/// `2·I(Y; Ŷ)/(H(Y) + H(Ŷ))` with natural logs; 1 when both entropies
/// vanish.
pub fn nmi(labels: &[usize], clusters: &[usize]) -> Result<f64> {
    check_lengths(labels, clusters)?;
    let c = Contingency::new(labels, clusters);
    let denom = c.entropy(&c.rows) + c.entropy(&c.cols);
    if denom == 0.0 {
        return Ok(1.0);
    }
    Ok((2.0 * c.mutual_information() / denom).clamp(0.0, 1.0))
}

/// `1 − H(Y|Ŷ)/H(Y)`. Undefined, hence an error, for constant labels.
pub fn homogeneity(labels: &[usize], clusters: &[usize]) -> Result<f64> {
    check_lengths(labels, clusters)?;
    let c = Contingency::new(labels, clusters);
    let h = c.entropy(&c.rows);
    if h == 0.0 {
        return Err(Error::Validation("homogeneity is undefined for a single class".into()));
    }
    Ok((1.0 - c.conditional_entropy() / h).clamp(0.0, 1.0))
}

fn unit_rows(h: &Matrix) -> Matrix {
    let mut out = h.clone();
    for r in 0..out.rows() {
        let s = 1.0 / norm(out.row(r)).max(NORM_EPS);
        for v in out.row_mut(r) {
            *v *= s;
        }
    }
    out
}

/// Similarities are snapped to this grid before ranking so that cosines
/// equal up to rounding count as ties. Adding `0.0` afterwards folds `-0.0`
/// into `+0.0`, which `total_cmp` would otherwise order.
const TIE_GRID: f64 = (1u64 << 40) as f64;

/// Mean over nodes of the same-label fraction among the `k` most
/// cosine-similar other nodes. Ties go to the lower node index.
pub fn s_at_k(h: &Matrix, labels: &[usize], k: usize) -> Result<f64> {
    let n = h.rows();
    if labels.len() != n {
        return Err(Error::Validation(format!("{} labels for {n} embeddings", labels.len())));
    }
    if k == 0 || k >= n {
        return Err(Error::Validation(format!("S@k needs 0 < k < n, got k = {k}, n = {n}")));
    }
    let u = unit_rows(h);
    let mut cand: Vec<(f64, usize)> = Vec::with_capacity(n - 1);
    let mut hits = 0usize;
    for i in 0..n {
        cand.clear();
        cand.extend(
            (0..n)
                .filter(|&j| j != i)
                .map(|j| ((dot(u.row(i), u.row(j)) * TIE_GRID).round() + 0.0, j)),
        );
        let order = |a: &(f64, usize), b: &(f64, usize)| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1));
        if k < cand.len() {
            cand.select_nth_unstable_by(k - 1, order);
        }
        hits += cand[..k].iter().filter(|&&(_, j)| labels[j] == labels[i]).count();
    }
    Ok(hits as f64 / (n * k) as f64)
}

/// Macro-average over classes of the mean cosine similarity among ordered
/// pairs of distinct same-class nodes.
///
/// With `by_class_size` each class sum is divided by the class size instead
/// of the number of pairs, which scales a class's contribution by `|l| − 1`.
pub fn compactness(h: &Matrix, labels: &[usize], by_class_size: bool) -> Result<f64> {
    if labels.len() != h.rows() {
        return Err(Error::Validation(format!(
            "{} labels for {} embeddings",
            labels.len(),
            h.rows()
        )));
    }
    let mut members: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &y) in labels.iter().enumerate() {
        members.entry(y).or_default().push(i);
    }
    if members.is_empty() {
        return Err(Error::Validation("no labeled nodes to score".into()));
    }
    let u = unit_rows(h);
    let mut total = 0.0;
    for (&class, m) in &members {
        if m.len() < 2 {
            return Err(Error::Validation(format!(
                "class {class} has a single member; compactness needs pairs"
            )));
        }
        let mut s = 0.0;
        for (a, &i) in m.iter().enumerate() {
            for &j in &m[a + 1..] {
                s += 2.0 * dot(u.row(i), u.row(j));
            }
        }
        let size = m.len() as f64;
        total += if by_class_size { s / size } else { s / (size * (size - 1.0)) };
    }
    Ok(total / members.len() as f64)
}

/// How node-neighbor pairs are ordered before binning.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProfileKey {
    Weight,
    Cosine,
}

/// Intra-class fraction of pairs in `n_bins` equal-size bins, ordered from
/// the highest key to the lowest. Pairs with an unlabeled endpoint are
/// skipped; equal keys keep their input order.
pub fn homophily_profile(keys: &[f64], pairs: &[(usize, usize)], labels: &Labels, n_bins: usize) -> Result<Vec<f64>> {
    if keys.len() != pairs.len() {
        return Err(Error::Validation(format!("{} keys for {} pairs", keys.len(), pairs.len())));
    }
    let mut scored: Vec<(f64, bool)> = keys
        .iter()
        .zip(pairs)
        .filter_map(|(&w, &(i, j))| Some((w, labels.get(i)? == labels.get(j)?)))
        .collect();
    let m = scored.len();
    if n_bins == 0 || m < n_bins {
        return Err(Error::Validation(format!("cannot split {m} labeled pairs into {n_bins} bins")));
    }
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));
    Ok((0..n_bins)
        .map(|b| {
            let bin = &scored[b * m / n_bins..(b + 1) * m / n_bins];
            bin.iter().filter(|p| p.1).count() as f64 / bin.len() as f64
        })
        .collect())
}

/// [`homophily_profile`] keyed by supportiveness weights, or by the given
/// pair cosines when `key` is [`ProfileKey::Cosine`].
pub fn weight_homophily_profile(
    scores: &SupportScores,
    cosines: &[f64],
    nbrs: &NeighborList,
    labels: &Labels,
    key: ProfileKey,
    n_bins: usize,
) -> Result<Vec<f64>> {
    if scores.offsets() != nbrs.offsets() {
        return Err(Error::Validation("scores do not match the neighbor list".into()));
    }
    let keys = match key {
        ProfileKey::Weight => scores.weights(),
        ProfileKey::Cosine => cosines,
    };
    homophily_profile(keys, &nbrs.pairs(), labels, n_bins)
}
