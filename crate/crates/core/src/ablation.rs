//! Train one variant, evaluate it at every snapshot and keep the best one.

use std::fmt::Write as _;

use crate::config::TrainConfig;
use crate::error::{Error, Result};
use crate::eval::{evaluate, mean_std, summarize, EvalOptions};
use crate::graph::{Labels, SparseGraph};
use crate::objective::Variant;
use crate::trainer::{embed_graph, train_with, TrainOutcome};

#[derive(Clone, Debug, PartialEq)]
pub struct AblationRow {
    pub variant: Variant,
    pub seed: u64,
    /// Epoch of the snapshot with the best mean probe accuracy.
    pub best_epoch: usize,
    pub accuracy: f64,
    pub accuracy_std: f64,
    pub nmi: f64,
    pub homogeneity: f64,
    pub s_at_k: Vec<(usize, f64)>,
    pub compactness: f64,
    /// Loss terms of the last epoch.
    pub loss: f64,
    pub loss_neighbor_term: f64,
}

/// Trains `variant` with `base` (seed replaced by `seed`), evaluates every
/// snapshot over the split protocol of `opts` and reports the snapshot with
/// the highest mean accuracy (earliest on ties).
pub fn run_variant(
    g: &SparseGraph,
    labels: &Labels,
    base: &TrainConfig,
    variant: Variant,
    seed: u64,
    opts: &EvalOptions,
) -> Result<(AblationRow, TrainOutcome)> {
    let mut cfg = base.clone();
    cfg.loss.variant = variant;
    cfg.seed = seed;
    if cfg.eval_every == 0 {
        cfg.eval_every = cfg.epochs;
    }
    let mut best: Option<AblationRow> = None;
    let outcome = train_with(g, Some(labels), &cfg, |epoch, state| {
        let h = embed_graph(state, g)?;
        let reports = evaluate(&h, labels, opts)?;
        let summary = summarize(&reports);
        let mean = |name: &str| summary.iter().find(|m| m.0 == name).map_or(f64::NAN, |m| m.1);
        let accs: Vec<f64> = reports.iter().map(|r| r.accuracy).collect();
        let (accuracy, accuracy_std) = mean_std(&accs);
        if best.as_ref().is_none_or(|b| accuracy > b.accuracy) {
            best = Some(AblationRow {
                variant,
                seed,
                best_epoch: epoch,
                accuracy,
                accuracy_std,
                nmi: mean("nmi"),
                homogeneity: mean("homogeneity"),
                s_at_k: opts.ks.iter().map(|&k| (k, mean(&format!("s_at_{k}")))).collect(),
                compactness: mean("compactness"),
                loss: f64::NAN,
                loss_neighbor_term: f64::NAN,
            });
        }
        Ok(summary.into_iter().map(|(n, m, _)| (n, m)).collect())
    })?;
    let mut row = best.ok_or_else(|| Error::Validation("training produced no snapshot".into()))?;
    let last = outcome.log.rows.last().expect("at least one epoch");
    row.loss = last.loss;
    row.loss_neighbor_term = last.neighbor_term;
    Ok((row, outcome))
}

/// One line per row; S@k columns follow the first row's `k` values.
pub fn rows_to_csv(rows: &[AblationRow]) -> String {
    let ks: Vec<usize> = rows.first().map_or_else(Vec::new, |r| r.s_at_k.iter().map(|p| p.0).collect());
    let mut s = String::from("variant,seed,best_epoch,accuracy,accuracy_std,nmi,homogeneity");
    for k in &ks {
        let _ = write!(s, ",s_at_{k}");
    }
    s.push_str(",compactness,loss,loss_neighbor_term\n");
    for r in rows {
        let _ = write!(
            s,
            "{},{},{},{},{},{},{}",
            r.variant, r.seed, r.best_epoch, r.accuracy, r.accuracy_std, r.nmi, r.homogeneity
        );
        for (_, v) in &r.s_at_k {
            let _ = write!(s, ",{v}");
        }
        let _ = writeln!(s, ",{},{},{}", r.compactness, r.loss, r.loss_neighbor_term);
    }
    s
}
