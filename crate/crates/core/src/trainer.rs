//! Full-graph training: per epoch, sample two views, encode them with the
//! online and target encoders, predict, take the variant loss, step AdamW on
//! the online side and move the target toward it.

use std::fmt::Write as _;
use std::path::Path;
use std::rc::Rc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::augment::{sample_views, AugmentConfig};
use crate::autodiff::{BatchStats, Tape, Var};
use crate::bootstrap::ema_update;
use crate::config::TrainConfig;
use crate::encoder::{embed, embed_layers, gcn_forward, predictor_forward, EncoderState, LayerVars, NormMode, OnlineVars};
use crate::error::{Error, Result};
use crate::graph::{neighbor_list, normalize_adjacency, Labels, NeighborList, SparseGraph};
use crate::matrix::{CsrMatrix, Matrix};
use crate::objective::{pair_cosines, supportiveness, symmetrize, variant_loss, Direction, LossConfig, LossTerms, SupportScores, Variant};
use crate::optim::AdamW;

/// Two augmented views, ready for the encoder.
#[derive(Clone, Debug)]
pub struct Views {
    pub adj: [Rc<CsrMatrix>; 2],
    pub features: [Matrix; 2],
}

impl Views {
    pub fn new(v1: &SparseGraph, v2: &SparseGraph) -> Self {
        Views {
            adj: [Rc::new(normalize_adjacency(v1)), Rc::new(normalize_adjacency(v2))],
            features: [v1.features().clone(), v2.features().clone()],
        }
    }

    pub fn sample<R: Rng + ?Sized>(g: &SparseGraph, cfg: &AugmentConfig, rng: &mut R) -> Self {
        let (a, b) = sample_views(g, cfg, rng);
        Views::new(&a, &b)
    }
}

/// Everything the loss needs besides parameters and views.
#[derive(Clone, Copy, Debug)]
pub struct LossInputs<'a> {
    /// Neighbors in the original, un-augmented graph.
    pub nbrs: &'a NeighborList,
    pub labels: Option<&'a Labels>,
    pub cfg: &'a LossConfig,
    pub batch_norm: bool,
}

#[derive(Clone, Debug)]
pub struct ForwardPass {
    pub terms: LossTerms,
    /// Batch statistics of the online encoder, one entry per encoded view.
    pub online_stats: Vec<Vec<BatchStats>>,
    /// Neighbor weights used by each direction (empty for bgrl).
    pub scores: Vec<SupportScores>,
}

/// Builds the loss on `tape`. View 1 predicts view 2; with a symmetric loss
/// view 2 also predicts view 1 and the two are averaged.
///
/// `fixed_scores`, one per direction, replaces the variant's own weights.
/// The pass is side-effect free: batch statistics are returned rather than
/// folded into running estimates.
pub fn forward_loss(
    tape: &mut Tape,
    online: &OnlineVars,
    target: &[LayerVars],
    views: &Views,
    inputs: &LossInputs<'_>,
    fixed_scores: Option<&[SupportScores]>,
) -> Result<ForwardPass> {
    let mode = || if inputs.batch_norm { NormMode::Train } else { NormMode::Off };
    let dirs: &[(usize, usize)] = if inputs.cfg.symmetric { &[(0, 1), (1, 0)] } else { &[(0, 1)] };
    if let Some(f) = fixed_scores {
        if f.len() != dirs.len() {
            return Err(Error::Validation(format!(
                "{} fixed score sets for {} loss directions",
                f.len(),
                dirs.len()
            )));
        }
    }

    let mut online_h: [Option<Var>; 2] = [None, None];
    let mut target_h: [Option<Var>; 2] = [None, None];
    let mut online_stats = Vec::new();
    for &(a, b) in dirs {
        let x = tape.constant(views.features[a].clone());
        let (h, stats) = gcn_forward(tape, &online.layers, &views.adj[a], x, mode())?;
        online_h[a] = Some(h);
        online_stats.push(stats);

        let x = tape.constant(views.features[b].clone());
        let (h, _) = gcn_forward(tape, target, &views.adj[b], x, mode())?;
        target_h[b] = Some(tape.detach(h));
    }

    let mut per_dir = Vec::with_capacity(dirs.len());
    let mut scores = Vec::new();
    for (k, &(a, b)) in dirs.iter().enumerate() {
        let h_online = online_h[a].expect("encoded above");
        let prediction = predictor_forward(tape, &online.predictor, h_online)?;
        let dir = Direction {
            prediction,
            online: h_online,
            target: target_h[b].expect("encoded above"),
        };
        let fixed = fixed_scores.map(|f| &f[k]);
        let (terms, s) = variant_loss(tape, inputs.cfg, &dir, inputs.nbrs, inputs.labels, fixed)?;
        per_dir.push(terms);
        scores.extend(s);
    }
    let terms = match per_dir[..] {
        [one] => one,
        [x, y] => symmetrize(tape, x, y)?,
        _ => unreachable!("one or two directions"),
    };
    Ok(ForwardPass {
        terms,
        online_stats,
        scores,
    })
}

/// One training-log line. `metrics` is empty except at snapshot epochs.
#[derive(Clone, Debug, PartialEq)]
pub struct LogRow {
    pub epoch: usize,
    pub loss: f64,
    pub node_term: f64,
    pub neighbor_term: f64,
    pub lr: f64,
    pub ema_decay: f64,
    pub metrics: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainingLog {
    pub metric_names: Vec<String>,
    pub rows: Vec<LogRow>,
}

impl TrainingLog {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,loss,loss_node_term,loss_neighbor_term,lr,ema_decay");
        for m in &self.metric_names {
            s.push(',');
            s.push_str(m);
        }
        s.push('\n');
        for r in &self.rows {
            let _ = write!(
                s,
                "{},{},{},{},{},{}",
                r.epoch, r.loss, r.node_term, r.neighbor_term, r.lr, r.ema_decay
            );
            for k in 0..self.metric_names.len() {
                s.push(',');
                if let Some(v) = r.metrics.get(k) {
                    let _ = write!(s, "{v}");
                }
            }
            s.push('\n');
        }
        s
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    /// Rows that carry a metric snapshot.
    pub fn snapshots(&self) -> impl Iterator<Item = &LogRow> {
        self.rows.iter().filter(|r| !r.metrics.is_empty())
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub state: EncoderState,
    pub log: TrainingLog,
}

/// Named metric values reported by a snapshot hook.
pub type Snapshot = Vec<(String, f64)>;

pub fn train(g: &SparseGraph, labels: Option<&Labels>, cfg: &TrainConfig) -> Result<TrainOutcome> {
    train_with(g, labels, cfg, |_, _| Ok(Vec::new()))
}

/// Trains and calls `snapshot` with the current state after every
/// `eval_every`-th epoch and after the last one. Metrics it returns are
/// appended to that epoch's log row.
pub fn train_with<F>(g: &SparseGraph, labels: Option<&Labels>, cfg: &TrainConfig, mut snapshot: F) -> Result<TrainOutcome>
where
    F: FnMut(usize, &EncoderState) -> Result<Snapshot>,
{
    cfg.validate()?;
    if cfg.loss.variant == Variant::BgrlClean && labels.is_none() {
        return Err(Error::Config("bgrl_clean requires node labels".into()));
    }
    if let Some(l) = labels {
        if l.len() != g.n_nodes() {
            return Err(Error::Validation(format!(
                "{} labels for {} nodes",
                l.len(),
                g.n_nodes()
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut state = EncoderState::new(cfg.arch.clone(), g.n_features(), &mut rng)?;
    let nbrs = neighbor_list(g);
    let schedule = cfg.ema_schedule()?;
    let decays: Vec<bool> = state.trainable().iter().map(|(_, k)| k.decays()).collect();
    let mut opt = AdamW::new(state.trainable().iter().map(|(m, _)| m.shape()), cfg.weight_decay);
    let inputs = LossInputs {
        nbrs: &nbrs,
        labels,
        cfg: &cfg.loss,
        batch_norm: cfg.arch.batch_norm,
    };
    let mut log = TrainingLog::default();

    for epoch in 0..cfg.epochs {
        let views = Views::sample(g, &cfg.augment, &mut rng);
        let mut tape = Tape::new();
        let online = state.register_online(&mut tape);
        let target = state.register_target(&mut tape);
        let pass = forward_loss(&mut tape, &online, &target, &views, &inputs, None)?;

        let loss = tape.value(pass.terms.total).item();
        let node_term = tape.value(pass.terms.node).item();
        let neighbor_term = pass.terms.neighbor.map_or(0.0, |v| tape.value(v).item());
        if !loss.is_finite() {
            return Err(Error::NonFinite {
                epoch,
                node_term,
                neighbor_term,
            });
        }

        let grads = tape.backward(pass.terms.total)?;
        let grads: Vec<Matrix> = online
            .flat()
            .into_iter()
            .map(|v| grads.get_or_zeros(v, tape.value(v)))
            .collect();
        let lr = cfg.lr_at(epoch);
        opt.step(&mut state.trainable_mut(), &grads, &decays, lr)?;
        for stats in &pass.online_stats {
            for (layer, s) in state.online.iter_mut().zip(stats) {
                layer.update_running(s, cfg.arch.bn_momentum);
            }
        }
        let ema_decay = schedule.decay_at(epoch);
        ema_update(&mut state.target, &state.online, ema_decay)?;

        let mut row = LogRow {
            epoch,
            loss,
            node_term,
            neighbor_term,
            lr,
            ema_decay,
            metrics: Vec::new(),
        };
        let done = epoch + 1;
        if cfg.eval_every > 0 && (done % cfg.eval_every == 0 || done == cfg.epochs) {
            let snap = snapshot(epoch, &state)?;
            if !snap.is_empty() {
                let names: Vec<String> = snap.iter().map(|(n, _)| n.clone()).collect();
                if log.metric_names.is_empty() {
                    log.metric_names = names;
                } else if log.metric_names != names {
                    return Err(Error::Validation("snapshot metrics changed between epochs".into()));
                }
                row.metrics = snap.into_iter().map(|(_, v)| v).collect();
            }
        }
        log::debug!("epoch {epoch}: loss {loss:.6} lr {lr:.3e} decay {ema_decay:.6}");
        log.rows.push(row);
    }
    Ok(TrainOutcome { state, log })
}

/// Online-encoder embeddings of the un-augmented graph.
pub fn embed_graph(state: &EncoderState, g: &SparseGraph) -> Result<Matrix> {
    embed(state, &Rc::new(normalize_adjacency(g)), g.features())
}

/// Supportiveness weights and pair cosines of a trained model on the
/// un-augmented graph: online representations attend over target
/// representations of the neighbors.
pub fn support_scores(state: &EncoderState, g: &SparseGraph, tau: f64) -> Result<(SupportScores, Vec<f64>)> {
    let adj = Rc::new(normalize_adjacency(g));
    let h1 = embed(state, &adj, g.features())?;
    let h2 = embed_layers(&state.target, state.arch.batch_norm, &adj, g.features())?;
    let nbrs = neighbor_list(g);
    let scores = supportiveness(&h1, &h2, &nbrs, tau)?;
    Ok((scores, pair_cosines(&h1, &h2, &nbrs)))
}
