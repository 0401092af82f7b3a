//! Bootstrap losses over node-itself and node-neighbor pairs.
//!
//! The node term is `−(1/n)·Σ_i cos(z¹_i, h²_i)`. The neighbor term is
//! `−(1/n)·Σ_i Σ_{j∈N_i} w_j·cos(z¹_i, h²_j)`, where the weights come from
//! the supportiveness attention (softmax over `N_i` of `cos(h¹_i, h²_j)/τ`)
//! or from one of the ablation weightings. Targets `h²` are always detached.

use std::fmt;
use std::str::FromStr;

use crate::autodiff::{softmax_in_place, Tape, Var, NORM_EPS};
use crate::error::{Error, Result};
use crate::graph::{Labels, NeighborList};
use crate::matrix::{cosine, Matrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Variant {
    /// Node-itself alignment only.
    Bgrl,
    /// Node-itself plus attention-weighted neighbors.
    Blnn,
    /// Node-itself plus uniformly weighted neighbors.
    BgrlNoisy,
    /// Node-itself plus uniformly weighted same-class neighbors (needs labels).
    BgrlClean,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Bgrl, Variant::BgrlNoisy, Variant::Blnn, Variant::BgrlClean];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Bgrl => "bgrl",
            Variant::Blnn => "blnn",
            Variant::BgrlNoisy => "bgrl_noisy",
            Variant::BgrlClean => "bgrl_clean",
        }
    }

    pub fn uses_neighbors(self) -> bool {
        self != Variant::Bgrl
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown variant {s:?} (expected bgrl, blnn, bgrl_noisy or bgrl_clean)")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossConfig {
    pub variant: Variant,
    pub tau: f64,
    /// Average the loss over both view orderings.
    pub symmetric: bool,
    pub neighbor_term_weight: f64,
    /// Let gradients flow through the attention weights (blnn only).
    pub grad_through_scores: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            variant: Variant::Blnn,
            tau: 1.0,
            symmetric: true,
            neighbor_term_weight: 1.0,
            grad_through_scores: false,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return Err(Error::Config(format!("tau must be positive, got {}", self.tau)));
        }
        if !(self.neighbor_term_weight >= 0.0) {
            return Err(Error::Config(format!(
                "neighbor_term_weight must be nonnegative, got {}",
                self.neighbor_term_weight
            )));
        }
        Ok(())
    }
}

/// Per-pair neighbor weights laid out like a [`NeighborList`]: the weights
/// of anchor `i` occupy `offsets[i]..offsets[i + 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SupportScores {
    offsets: Vec<usize>,
    weights: Vec<f64>,
}

impl SupportScores {
    pub fn new(nbrs: &NeighborList, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != nbrs.n_pairs() {
            return Err(Error::Validation(format!(
                "{} weights for {} node-neighbor pairs",
                weights.len(),
                nbrs.n_pairs()
            )));
        }
        Ok(SupportScores {
            offsets: nbrs.offsets().to_vec(),
            weights,
        })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn anchor(&self, i: usize) -> &[f64] {
        &self.weights[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn n_anchors(&self) -> usize {
        self.offsets.len() - 1
    }

    fn check(&self, nbrs: &NeighborList) -> Result<()> {
        if self.offsets != nbrs.offsets() {
            return Err(Error::Validation("scores do not match the neighbor list".into()));
        }
        Ok(())
    }
}

/// `cos(a_i, b_j)` for every node-neighbor pair, in neighbor-list order.
pub fn pair_cosines(a: &Matrix, b: &Matrix, nbrs: &NeighborList) -> Vec<f64> {
    (0..nbrs.len())
        .flat_map(|i| nbrs.neighbors(i).iter().map(move |&j| cosine(a.row(i), b.row(j), NORM_EPS)))
        .collect()
}

/// Attention weights `w_j = softmax_{j∈N_i}(cos(h¹_i, h²_j)/τ)`. Anchors
/// without neighbors get an empty segment.
pub fn supportiveness(h1: &Matrix, h2: &Matrix, nbrs: &NeighborList, tau: f64) -> Result<SupportScores> {
    if h1.rows() != nbrs.len() || h2.rows() != nbrs.len() || h1.cols() != h2.cols() {
        return Err(Error::Dimension {
            op: "supportiveness",
            left: h1.shape(),
            right: h2.shape(),
        });
    }
    if !(tau > 0.0) {
        return Err(Error::Config(format!("tau must be positive, got {tau}")));
    }
    let mut weights = pair_cosines(h1, h2, nbrs);
    for w in nbrs.offsets().windows(2) {
        softmax_in_place(&mut weights[w[0]..w[1]], 1.0 / tau);
    }
    SupportScores::new(nbrs, weights)
}

/// `1/|N_i|` for every neighbor.
pub fn uniform_scores(nbrs: &NeighborList) -> SupportScores {
    let weights = (0..nbrs.len())
        .flat_map(|i| {
            let d = nbrs.neighbors(i).len();
            std::iter::repeat_n(1.0 / d as f64, d)
        })
        .collect();
    SupportScores::new(nbrs, weights).expect("one weight per pair")
}

/// Uniform weights over same-class neighbors, zero on the others. Anchors
/// with no labeled same-class neighbor get all-zero weights.
pub fn clean_scores(nbrs: &NeighborList, labels: &Labels) -> Result<SupportScores> {
    if labels.len() != nbrs.len() {
        return Err(Error::Validation(format!(
            "{} labels for {} nodes",
            labels.len(),
            nbrs.len()
        )));
    }
    let mut weights = Vec::with_capacity(nbrs.n_pairs());
    for i in 0..nbrs.len() {
        let same: Vec<bool> = nbrs
            .neighbors(i)
            .iter()
            .map(|&j| labels.get(i).is_some() && labels.get(i) == labels.get(j))
            .collect();
        let k = same.iter().filter(|&&s| s).count();
        weights.extend(same.iter().map(|&s| if s { 1.0 / k as f64 } else { 0.0 }));
    }
    SupportScores::new(nbrs, weights)
}

/// The two loss terms and their weighted total.
#[derive(Clone, Copy, Debug)]
pub struct LossTerms {
    pub total: Var,
    pub node: Var,
    /// Unweighted neighbor term; `None` for the plain node-itself loss.
    pub neighbor: Option<Var>,
}

/// `−(1/n)·Σ_i cos(z_i, h_i)`.
pub fn bgrl_loss(tape: &mut Tape, z: Var, h_target: Var) -> Result<Var> {
    let (zs, hs) = (tape.value(z).shape(), tape.value(h_target).shape());
    if zs.0 != hs.0 {
        return Err(Error::Dimension {
            op: "bgrl_loss",
            left: zs,
            right: hs,
        });
    }
    let n = zs.0;
    let c = tape.row_cosine(z, h_target, (0..n).map(|i| (i, i)).collect())?;
    let s = tape.sum(c);
    Ok(tape.scale(s, -1.0 / n as f64))
}

/// `−(1/n)·Σ_i Σ_{j∈N_i} w_j·cos(z_i, h_j)` with constant weights.
pub fn neighbor_term(
    tape: &mut Tape,
    z: Var,
    h_target: Var,
    nbrs: &NeighborList,
    scores: &SupportScores,
) -> Result<Var> {
    scores.check(nbrs)?;
    let n = tape.value(z).rows();
    if n != nbrs.len() || tape.value(h_target).rows() != n {
        return Err(Error::Dimension {
            op: "neighbor_term",
            left: tape.value(z).shape(),
            right: tape.value(h_target).shape(),
        });
    }
    let c = tape.row_cosine(z, h_target, nbrs.pairs())?;
    let s = tape.weighted_sum(c, scores.weights().to_vec())?;
    Ok(tape.scale(s, -1.0 / n as f64))
}

/// Neighbor term with attention weights computed on the tape, so gradients
/// also flow through `h_online`.
pub fn attentive_neighbor_term(
    tape: &mut Tape,
    z: Var,
    h_online: Var,
    h_target: Var,
    nbrs: &NeighborList,
    tau: f64,
) -> Result<Var> {
    let n = tape.value(z).rows();
    let pairs = nbrs.pairs();
    let e = tape.row_cosine(h_online, h_target, pairs.clone())?;
    let w = tape.segment_softmax(e, nbrs.offsets().to_vec(), 1.0 / tau)?;
    let c = tape.row_cosine(z, h_target, pairs)?;
    let wc = tape.mul(w, c)?;
    let s = tape.sum(wc);
    Ok(tape.scale(s, -1.0 / n as f64))
}

fn combine(tape: &mut Tape, node: Var, neighbor: Var, weight: f64) -> Result<LossTerms> {
    let weighted = tape.scale(neighbor, weight);
    let total = tape.add(node, weighted)?;
    Ok(LossTerms {
        total,
        node,
        neighbor: Some(neighbor),
    })
}

/// Node term plus `neighbor_term_weight` times the weighted neighbor term.
pub fn blnn_loss(
    tape: &mut Tape,
    z: Var,
    h_target: Var,
    nbrs: &NeighborList,
    scores: &SupportScores,
    neighbor_term_weight: f64,
) -> Result<LossTerms> {
    let node = bgrl_loss(tape, z, h_target)?;
    let nb = neighbor_term(tape, z, h_target, nbrs, scores)?;
    combine(tape, node, nb, neighbor_term_weight)
}

/// One prediction direction: the online prediction and representation of
/// one view against the target representation of the other.
#[derive(Clone, Copy, Debug)]
pub struct Direction {
    pub prediction: Var,
    pub online: Var,
    pub target: Var,
}

/// The neighbor weights a variant uses for one direction, or `None` for
/// plain bgrl. Attention weights are computed from the current values of
/// the online and target representations.
pub fn variant_scores(
    tape: &Tape,
    cfg: &LossConfig,
    dir: &Direction,
    nbrs: &NeighborList,
    labels: Option<&Labels>,
) -> Result<Option<SupportScores>> {
    Ok(match cfg.variant {
        Variant::Bgrl => None,
        Variant::Blnn => Some(supportiveness(tape.value(dir.online), tape.value(dir.target), nbrs, cfg.tau)?),
        Variant::BgrlNoisy => Some(uniform_scores(nbrs)),
        Variant::BgrlClean => {
            let labels = labels.ok_or_else(|| Error::Config("bgrl_clean requires node labels".into()))?;
            Some(clean_scores(nbrs, labels)?)
        }
    })
}

/// Loss of one direction under the configured variant.
///
/// `fixed_scores` replaces the variant's own weighting (used to hold the
/// attention weights constant, e.g. for gradient checks). With
/// `grad_through_scores` and no fixed scores, blnn weights are computed on
/// the tape.
pub fn variant_loss(
    tape: &mut Tape,
    cfg: &LossConfig,
    dir: &Direction,
    nbrs: &NeighborList,
    labels: Option<&Labels>,
    fixed_scores: Option<&SupportScores>,
) -> Result<(LossTerms, Option<SupportScores>)> {
    cfg.validate()?;
    if cfg.variant == Variant::BgrlClean && labels.is_none() {
        return Err(Error::Config("bgrl_clean requires node labels".into()));
    }
    if cfg.variant == Variant::Bgrl {
        let node = bgrl_loss(tape, dir.prediction, dir.target)?;
        return Ok((
            LossTerms {
                total: node,
                node,
                neighbor: None,
            },
            None,
        ));
    }
    if cfg.variant == Variant::Blnn && cfg.grad_through_scores && fixed_scores.is_none() {
        let scores = variant_scores(tape, cfg, dir, nbrs, labels)?;
        let node = bgrl_loss(tape, dir.prediction, dir.target)?;
        let nb = attentive_neighbor_term(tape, dir.prediction, dir.online, dir.target, nbrs, cfg.tau)?;
        return Ok((combine(tape, node, nb, cfg.neighbor_term_weight)?, scores));
    }
    let scores = match fixed_scores {
        Some(s) => s.clone(),
        None => variant_scores(tape, cfg, dir, nbrs, labels)?.expect("neighbor variants have scores"),
    };
    let terms = blnn_loss(tape, dir.prediction, dir.target, nbrs, &scores, cfg.neighbor_term_weight)?;
    Ok((terms, Some(scores)))
}

/// Termwise average of the two view orderings.
pub fn symmetrize(tape: &mut Tape, a: LossTerms, b: LossTerms) -> Result<LossTerms> {
    let mut avg = |x: Var, y: Var| -> Result<Var> {
        let s = tape.add(x, y)?;
        Ok(tape.scale(s, 0.5))
    };
    let total = avg(a.total, b.total)?;
    let node = avg(a.node, b.node)?;
    let neighbor = match (a.neighbor, b.neighbor) {
        (Some(x), Some(y)) => Some(avg(x, y)?),
        _ => None,
    };
    Ok(LossTerms { total, node, neighbor })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{neighbor_list, SparseGraph};

    fn nbrs_of(n: usize, edges: &[(usize, usize)]) -> NeighborList {
        neighbor_list(&SparseGraph::from_edges(n, edges, Matrix::zeros(n, 1)).unwrap())
    }

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.as_str().parse::<Variant>().unwrap(), v);
        }
        assert!("byol".parse::<Variant>().is_err());
    }

    #[test]
    fn supportiveness_examples() {
        // Single neighbor.
        let nb = nbrs_of(2, &[(0, 1)]);
        let h = Matrix::from_rows(&[[1.0, 0.0], [0.3, 0.9]]).unwrap();
        let s = supportiveness(&h, &h, &nb, 0.5).unwrap();
        assert_eq!(s.anchor(0), &[1.0]);

        // Two neighbors with equal similarity.
        let nb = nbrs_of(3, &[(0, 1), (0, 2)]);
        let h = Matrix::from_rows(&[[1.0, 0.0], [1.0, 1.0], [1.0, -1.0]]).unwrap();
        for tau in [0.1, 1.0, 7.0] {
            let s = supportiveness(&h, &h, &nb, tau).unwrap();
            assert!((s.anchor(0)[0] - 0.5).abs() < 1e-15);
            assert!((s.anchor(0)[1] - 0.5).abs() < 1e-15);
        }

        // e = [1, 0], τ = 1 → [e/(e+1), 1/(e+1)].
        let h1 = Matrix::from_rows(&[[1.0, 0.0], [0.0, 0.0], [0.0, 0.0]]).unwrap();
        let h2 = Matrix::from_rows(&[[0.0, 0.0], [2.0, 0.0], [0.0, 3.0]]).unwrap();
        let s = supportiveness(&h1, &h2, &nb, 1.0).unwrap();
        assert!((s.anchor(0)[0] - 0.73106).abs() < 1e-4);
        assert!((s.anchor(0)[1] - 0.26894).abs() < 1e-4);
    }

    #[test]
    fn isolated_anchor_has_no_scores() {
        let nb = nbrs_of(3, &[(0, 1)]);
        let h = Matrix::filled(3, 2, 1.0);
        let s = supportiveness(&h, &h, &nb, 1.0).unwrap();
        assert!(s.anchor(2).is_empty());
    }

    #[test]
    fn uniform_and_clean_weights() {
        let nb = nbrs_of(3, &[(0, 1), (0, 2)]);
        assert_eq!(uniform_scores(&nb).anchor(0), &[0.5, 0.5]);
        let labels = Labels::from_classes(&[1, 1, 0]);
        let c = clean_scores(&nb, &labels).unwrap();
        assert_eq!(c.anchor(0), &[1.0, 0.0]);
        // Node 2's only neighbor is of another class.
        assert_eq!(c.anchor(2), &[0.0]);
    }

    fn loss_value(f: impl FnOnce(&mut Tape) -> Result<Var>) -> f64 {
        let mut t = Tape::new();
        let v = f(&mut t).unwrap();
        t.value(v).item()
    }

    #[test]
    fn bgrl_loss_examples() {
        let z = Matrix::from_rows(&[[1.0, 2.0], [0.0, 3.0]]).unwrap();
        let v = loss_value(|t| {
            let a = t.constant(z.clone());
            let b = t.constant(z.clone());
            bgrl_loss(t, a, b)
        });
        assert!((v + 1.0).abs() < 1e-15);

        let v = loss_value(|t| {
            let a = t.constant(Matrix::from_rows(&[[1.0, 0.0], [0.0, 2.0]]).unwrap());
            let b = t.constant(Matrix::from_rows(&[[0.0, 5.0], [3.0, 0.0]]).unwrap());
            bgrl_loss(t, a, b)
        });
        assert_eq!(v, 0.0);

        let v = loss_value(|t| {
            let a = t.constant(Matrix::from_rows(&[[1.0, 0.0], [0.0, 2.0]]).unwrap());
            let b = t.constant(Matrix::from_rows(&[[1.0, 0.0], [3.0, 0.0]]).unwrap());
            bgrl_loss(t, a, b)
        });
        assert_eq!(v, -0.5);

        let mut t = Tape::new();
        let a = t.constant(Matrix::zeros(2, 2));
        let b = t.constant(Matrix::zeros(3, 2));
        assert!(bgrl_loss(&mut t, a, b).is_err());
    }

    #[test]
    fn neighbor_term_single_aligned_support() {
        // Anchor 0's only neighbor has the same direction as its prediction.
        let nb = nbrs_of(2, &[(0, 1)]);
        let z = Matrix::from_rows(&[[1.0, 1.0], [1.0, -1.0]]).unwrap();
        let h = Matrix::from_rows(&[[1.0, -1.0], [2.0, 2.0]]).unwrap();
        let scores = uniform_scores(&nb);
        let v = loss_value(|t| {
            let a = t.constant(z.clone());
            let b = t.constant(h.clone());
            neighbor_term(t, a, b, &nb, &scores)
        });
        // Pair (0,1): cos 1. Pair (1,0): cos 1.
        assert!((v + 1.0).abs() < 1e-15);
    }

    #[test]
    fn mismatched_scores_are_rejected() {
        let nb = nbrs_of(3, &[(0, 1)]);
        let other = nbrs_of(3, &[(0, 2), (1, 2)]);
        let scores = uniform_scores(&other);
        let mut t = Tape::new();
        let z = t.constant(Matrix::filled(3, 2, 1.0));
        assert!(neighbor_term(&mut t, z, z, &nb, &scores).is_err());
    }

    #[test]
    fn clean_variant_requires_labels() {
        let nb = nbrs_of(2, &[(0, 1)]);
        let mut t = Tape::new();
        let z = t.constant(Matrix::filled(2, 2, 1.0));
        let cfg = LossConfig {
            variant: Variant::BgrlClean,
            ..LossConfig::default()
        };
        let dir = Direction {
            prediction: z,
            online: z,
            target: z,
        };
        assert!(matches!(
            variant_loss(&mut t, &cfg, &dir, &nb, None, None),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn config_validation() {
        let mut cfg = LossConfig::default();
        cfg.validate().unwrap();
        cfg.tau = 0.0;
        assert!(cfg.validate().is_err());
        cfg.tau = 1.0;
        cfg.neighbor_term_weight = -1.0;
        assert!(cfg.validate().is_err());
    }
}
