//! Downstream evaluation of frozen embeddings: linear-probe accuracy,
//! k-means agreement, similarity search and intra-class compactness.

pub mod kmeans;
pub mod metrics;
pub mod probe;

use std::fmt::Write as _;
use std::path::Path;

pub use kmeans::{kmeans, kmeans_best, Clustering};
pub use metrics::{compactness, homogeneity, homophily_profile, nmi, s_at_k, weight_homophily_profile, ProfileKey};
pub use probe::{linear_probe, probe_with_selection, random_splits, ProbeResult, Split};

use crate::error::{Error, Result};
use crate::graph::Labels;
use crate::matrix::Matrix;

pub const SPLIT_RATIOS: (f64, f64, f64) = (0.1, 0.1, 0.8);

#[derive(Clone, Debug, PartialEq)]
pub struct EvalOptions {
    pub ks: Vec<usize>,
    pub n_splits: usize,
    /// Seed of the first split; split `s` uses `first_seed + s`.
    pub first_seed: u64,
    pub compactness_by_class_size: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            ks: vec![5, 10],
            n_splits: 20,
            first_seed: 0,
            compactness_by_class_size: false,
        }
    }
}

/// Metrics of one embedding matrix under one split seed. The probe and
/// k-means depend on the seed; S@k and compactness do not.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub split_seed: u64,
    pub accuracy: f64,
    pub l2: f64,
    pub nmi: f64,
    pub homogeneity: f64,
    pub s_at_k: Vec<(usize, f64)>,
    pub compactness: f64,
}

impl EvalReport {
    /// `(name, value)` for every metric, in report order.
    pub fn metrics(&self) -> Vec<(String, f64)> {
        let mut out = vec![
            ("accuracy".to_string(), self.accuracy),
            ("nmi".to_string(), self.nmi),
            ("homogeneity".to_string(), self.homogeneity),
        ];
        out.extend(self.s_at_k.iter().map(|&(k, v)| (format!("s_at_{k}"), v)));
        out.push(("compactness".to_string(), self.compactness));
        out
    }
}

/// Runs the full protocol over `n_splits` seeds, scoring labeled nodes only.
pub fn evaluate(h: &Matrix, labels: &Labels, opts: &EvalOptions) -> Result<Vec<EvalReport>> {
    if h.rows() != labels.len() {
        return Err(Error::Validation(format!(
            "{} embedding rows for {} nodes",
            h.rows(),
            labels.len()
        )));
    }
    if opts.n_splits == 0 {
        return Err(Error::Config("at least one split is required".into()));
    }
    let nodes = labels.labeled_nodes();
    let y: Vec<usize> = nodes.iter().map(|&i| labels.get(i).expect("labeled")).collect();
    let hl = h.select_rows(&nodes);
    let n_classes = {
        let mut seen = y.clone();
        seen.sort_unstable();
        seen.dedup();
        seen.len()
    };
    let s_at: Vec<(usize, f64)> = opts
        .ks
        .iter()
        .map(|&k| Ok((k, s_at_k(&hl, &y, k)?)))
        .collect::<Result<_>>()?;
    let comp = compactness(&hl, &y, opts.compactness_by_class_size)?;

    (0..opts.n_splits as u64)
        .map(|s| {
            let seed = opts.first_seed + s;
            let split = random_splits(labels, SPLIT_RATIOS, seed)?;
            let probe = probe_with_selection(h, labels, &split)?;
            let clusters = kmeans(&hl, n_classes, seed)?;
            Ok(EvalReport {
                split_seed: seed,
                accuracy: probe.accuracy,
                l2: probe.l2,
                nmi: nmi(&y, &clusters)?,
                homogeneity: homogeneity(&y, &clusters)?,
                s_at_k: s_at.clone(),
                compactness: comp,
            })
        })
        .collect()
}

/// Mean and sample standard deviation of each metric across reports.
pub fn summarize(reports: &[EvalReport]) -> Vec<(String, f64, f64)> {
    let Some(first) = reports.first() else {
        return Vec::new();
    };
    let per: Vec<Vec<(String, f64)>> = reports.iter().map(EvalReport::metrics).collect();
    (0..first.metrics().len())
        .map(|m| {
            let vals: Vec<f64> = per.iter().map(|r| r[m].1).collect();
            let (mean, std) = mean_std(&vals);
            (per[0][m].0.clone(), mean, std)
        })
        .collect()
}

pub fn mean_std(vals: &[f64]) -> (f64, f64) {
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    if vals.len() < 2 {
        return (mean, 0.0);
    }
    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// One `metric,split_seed,value` row per metric and split.
pub fn report_csv(reports: &[EvalReport]) -> String {
    let mut s = String::from("metric,split_seed,value\n");
    if let Some(first) = reports.first() {
        for m in 0..first.metrics().len() {
            for r in reports {
                let (name, v) = &r.metrics()[m];
                let _ = writeln!(s, "{name},{},{v}", r.split_seed);
            }
        }
    }
    s
}

/// Writes embeddings as CSV, one node per line, in shortest round-trip form.
pub fn write_embeddings(path: impl AsRef<Path>, h: &Matrix) -> Result<()> {
    let path = path.as_ref();
    let mut s = String::new();
    for row in h.iter_rows() {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        s.push_str(&line.join(","));
        s.push('\n');
    }
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

pub fn read_embeddings(path: impl AsRef<Path>) -> Result<Matrix> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let before = data.len();
        for tok in line.split(',') {
            let v: f64 = tok
                .trim()
                .parse()
                .map_err(|_| Error::parse(path, lineno + 1, format!("bad float {:?}", tok.trim())))?;
            data.push(v);
        }
        let width = data.len() - before;
        if *cols.get_or_insert(width) != width {
            return Err(Error::Validation(format!(
                "{}:{}: expected {} columns, found {width}",
                path.display(),
                lineno + 1,
                cols.unwrap_or(0)
            )));
        }
        rows += 1;
    }
    Matrix::from_vec(rows, cols.unwrap_or(0), data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_hot(classes: &[usize], k: usize) -> Matrix {
        let mut h = Matrix::zeros(classes.len(), k);
        for (i, &c) in classes.iter().enumerate() {
            h.row_mut(i)[c] = 1.0;
        }
        h
    }

    #[test]
    fn perfect_embeddings_score_perfectly() {
        let classes: Vec<usize> = (0..300).map(|i| i % 3).collect();
        let labels = Labels::from_classes(&classes);
        let opts = EvalOptions {
            n_splits: 3,
            ..EvalOptions::default()
        };
        let reports = evaluate(&one_hot(&classes, 3), &labels, &opts).unwrap();
        assert_eq!(reports.len(), 3);
        for r in &reports {
            assert_eq!(r.accuracy, 1.0);
            assert!((r.nmi - 1.0).abs() < 1e-12);
            assert!((r.homogeneity - 1.0).abs() < 1e-12);
            assert_eq!(r.s_at_k, vec![(5, 1.0), (10, 1.0)]);
            assert!((r.compactness - 1.0).abs() < 1e-12);
        }
        let summary = summarize(&reports);
        assert_eq!(summary[0], ("accuracy".to_string(), 1.0, 0.0));
        let csv = report_csv(&reports);
        assert_eq!(csv.lines().count(), 1 + 3 * 6);
        assert!(csv.contains("s_at_10,2,1\n"));
    }

    #[test]
    fn row_count_mismatch_is_rejected() {
        let labels = Labels::from_classes(&[0, 1, 0, 1]);
        assert!(evaluate(&Matrix::zeros(3, 2), &labels, &EvalOptions::default()).is_err());
    }

    #[test]
    fn embeddings_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb.csv");
        let h = Matrix::from_rows(&[[0.1 + 0.2, -1e-300, 5.0], [f64::MIN_POSITIVE, 1.0 / 3.0, -0.0]]).unwrap();
        write_embeddings(&path, &h).unwrap();
        assert_eq!(read_embeddings(&path).unwrap(), h);
        std::fs::write(&path, "1,2\n3\n").unwrap();
        assert!(read_embeddings(&path).is_err());
    }

    #[test]
    fn mean_std_sample_convention() {
        assert_eq!(mean_std(&[1.0, 3.0]), (2.0, 2f64.sqrt()));
        assert_eq!(mean_std(&[4.0]), (4.0, 0.0));
    }
}
