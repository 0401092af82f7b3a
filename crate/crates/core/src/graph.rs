//! Undirected attributed graphs, labels, and the on-disk directory format.
//!
//! A graph directory holds:
//!
//! - `meta.json`: `{"n_nodes": .., "n_features": .., "n_classes": ..}`
//! - `edges.tsv`: one edge per line, two whitespace-separated 0-based indices
//! - `features.csv`: `n_nodes` lines of `n_features` comma-separated floats
//! - `labels.txt` (optional): `n_nodes` lines, one integer each, `-1` unknown
//!
//! Edges are symmetrized and deduplicated on load and self-loops dropped.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{CsrMatrix, Matrix};

/// Symmetric adjacency in CSR form plus a dense feature matrix.
///
/// Rows are sorted, contain no duplicates and no self-loops, and `j` is in
/// row `i` exactly when `i` is in row `j`.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseGraph {
    n_nodes: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    features: Matrix,
}

impl SparseGraph {
    /// Builds a graph from undirected edges given in either orientation.
    pub fn from_edges(n_nodes: usize, edges: &[(usize, usize)], features: Matrix) -> Result<Self> {
        if features.rows() != n_nodes {
            return Err(Error::Validation(format!(
                "feature matrix has {} rows for {n_nodes} nodes",
                features.rows()
            )));
        }
        let mut rows: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n_nodes];
        for &(i, j) in edges {
            if i >= n_nodes || j >= n_nodes {
                return Err(Error::Validation(format!(
                    "edge ({i}, {j}) references a node outside 0..{n_nodes}"
                )));
            }
            if i != j {
                rows[i].insert(j);
                rows[j].insert(i);
            }
        }
        let mut row_ptr = Vec::with_capacity(n_nodes + 1);
        let mut col_idx = Vec::new();
        row_ptr.push(0);
        for row in rows {
            col_idx.extend(row);
            row_ptr.push(col_idx.len());
        }
        Ok(SparseGraph {
            n_nodes,
            row_ptr,
            col_idx,
            features,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    /// Directed edge slots: every undirected edge counts twice.
    pub fn n_edges(&self) -> usize {
        self.col_idx.len()
    }

    pub fn n_undirected_edges(&self) -> usize {
        self.col_idx.len() / 2
    }

    pub fn n_features(&self) -> usize {
        self.features.cols()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.col_idx[self.row_ptr[i]..self.row_ptr[i + 1]]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.row_ptr[i + 1] - self.row_ptr[i]
    }

    /// Undirected edges as `(i, j)` with `i < j`, in row order.
    pub fn undirected_edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n_nodes).flat_map(move |i| {
            self.neighbors(i)
                .iter()
                .filter(move |&&j| j > i)
                .map(move |&j| (i, j))
        })
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.neighbors(i).binary_search(&j).is_ok()
    }

    /// Same topology with replaced features.
    pub fn with_features(&self, features: Matrix) -> Result<Self> {
        if features.rows() != self.n_nodes {
            return Err(Error::Validation(format!(
                "feature matrix has {} rows for {} nodes",
                features.rows(),
                self.n_nodes
            )));
        }
        Ok(SparseGraph {
            features,
            ..self.clone()
        })
    }

    /// Keeps the undirected edges for which `keep(i, j)` holds (`i < j`).
    pub fn filter_edges(&self, mut keep: impl FnMut(usize, usize) -> bool) -> Self {
        let kept: Vec<(usize, usize)> = self.undirected_edges().filter(|&(i, j)| keep(i, j)).collect();
        Self::from_edges(self.n_nodes, &kept, self.features.clone())
            .expect("subgraph of a valid graph is valid")
    }
}

/// Node class labels; `-1` marks an unknown label.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Labels {
    values: Vec<i64>,
    n_classes: usize,
}

impl Labels {
    pub const UNKNOWN: i64 = -1;

    pub fn new(values: Vec<i64>, n_classes: usize) -> Result<Self> {
        if let Some((i, &v)) = values
            .iter()
            .enumerate()
            .find(|(_, &v)| v != Self::UNKNOWN && (v < 0 || v as usize >= n_classes))
        {
            return Err(Error::Validation(format!(
                "label {v} of node {i} outside 0..{n_classes}"
            )));
        }
        Ok(Labels { values, n_classes })
    }

    /// Fully labeled; the class count is one past the largest label.
    pub fn from_classes(classes: &[usize]) -> Self {
        let n_classes = classes.iter().max().map_or(0, |&m| m + 1);
        Labels {
            values: classes.iter().map(|&c| c as i64).collect(),
            n_classes,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn values(&self) -> &[i64] {
        &self.values
    }

    pub fn get(&self, i: usize) -> Option<usize> {
        let v = self.values[i];
        (v != Self::UNKNOWN).then_some(v as usize)
    }

    pub fn is_fully_labeled(&self) -> bool {
        self.values.iter().all(|&v| v != Self::UNKNOWN)
    }

    /// Indices of nodes with a known label.
    pub fn labeled_nodes(&self) -> Vec<usize> {
        (0..self.values.len()).filter(|&i| self.get(i).is_some()).collect()
    }
}

/// The neighbor sets `N_i` of the original graph, in CSR layout.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NeighborList {
    offsets: Vec<usize>,
    indices: Vec<usize>,
}

impl NeighborList {
    pub fn len(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.indices[self.offsets[i]..self.offsets[i + 1]]
    }

    /// Segment boundaries of the flattened pair list.
    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn n_pairs(&self) -> usize {
        self.indices.len()
    }

    /// All `(anchor, neighbor)` pairs, grouped by anchor.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        (0..self.len())
            .flat_map(|i| self.neighbors(i).iter().map(move |&j| (i, j)))
            .collect()
    }
}

pub fn neighbor_list(g: &SparseGraph) -> NeighborList {
    NeighborList {
        offsets: g.row_ptr.clone(),
        indices: g.col_idx.clone(),
    }
}

/// `D̃^{-1/2} (A + I) D̃^{-1/2}` with `D̃` the degree matrix of `A + I`.
pub fn normalize_adjacency(g: &SparseGraph) -> CsrMatrix {
    let mut row_ptr = Vec::with_capacity(g.n_nodes + 1);
    let mut col_idx = Vec::with_capacity(g.n_edges() + g.n_nodes);
    let mut values = Vec::with_capacity(g.n_edges() + g.n_nodes);
    row_ptr.push(0);
    for i in 0..g.n_nodes {
        let nbrs = g.neighbors(i);
        let split = nbrs.partition_point(|&j| j < i);
        let row = nbrs[..split]
            .iter()
            .copied()
            .chain(std::iter::once(i))
            .chain(nbrs[split..].iter().copied());
        for j in row {
            col_idx.push(j);
            let dd = ((g.degree(i) + 1) * (g.degree(j) + 1)) as f64;
            values.push(1.0 / dd.sqrt());
        }
        row_ptr.push(col_idx.len());
    }
    CsrMatrix::new(g.n_nodes, g.n_nodes, row_ptr, col_idx, values)
        .expect("normalized adjacency is well formed")
}

/// Fraction of edges joining two nodes of the same class.
///
/// Edges with an unlabeled endpoint are not counted. Directed and
/// undirected counting give the same ratio.
pub fn edge_homophily(g: &SparseGraph, labels: &Labels) -> Result<f64> {
    if labels.len() != g.n_nodes {
        return Err(Error::Validation(format!(
            "{} labels for {} nodes",
            labels.len(),
            g.n_nodes
        )));
    }
    let (mut intra, mut total) = (0usize, 0usize);
    for (i, j) in g.undirected_edges() {
        if let (Some(a), Some(b)) = (labels.get(i), labels.get(j)) {
            total += 1;
            intra += usize::from(a == b);
        }
    }
    if total == 0 {
        return Err(Error::UndefinedHomophily);
    }
    Ok(intra as f64 / total as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Meta {
    pub n_nodes: usize,
    pub n_features: usize,
    pub n_classes: usize,
}

/// A graph with optional labels, as stored in a graph directory.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub graph: SparseGraph,
    pub labels: Option<Labels>,
}

pub fn load_graph(dir: impl AsRef<Path>) -> Result<Dataset> {
    let dir = dir.as_ref();
    let meta_path = dir.join("meta.json");
    let meta_text = read(&meta_path)?;
    let meta: Meta = serde_json::from_str(&meta_text)
        .map_err(|e| Error::parse(&meta_path, e.line(), e.to_string()))?;

    let edges_path = dir.join("edges.tsv");
    let mut edges = Vec::new();
    for (lineno, line) in read(&edges_path)?.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        let mut next = || -> Result<usize> {
            let tok = parts
                .next()
                .ok_or_else(|| Error::parse(&edges_path, lineno + 1, "expected two node indices"))?;
            tok.parse()
                .map_err(|_| Error::parse(&edges_path, lineno + 1, format!("bad node index {tok:?}")))
        };
        let (i, j) = (next()?, next()?);
        if parts.next().is_some() {
            return Err(Error::parse(&edges_path, lineno + 1, "expected exactly two node indices"));
        }
        if i >= meta.n_nodes || j >= meta.n_nodes {
            return Err(Error::Validation(format!(
                "{}:{}: edge ({i}, {j}) outside 0..{}",
                edges_path.display(),
                lineno + 1,
                meta.n_nodes
            )));
        }
        edges.push((i, j));
    }

    let feat_path = dir.join("features.csv");
    let feat_text = read(&feat_path)?;
    let mut data = Vec::with_capacity(meta.n_nodes * meta.n_features);
    let mut n_rows = 0;
    for (lineno, line) in feat_text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        let before = data.len();
        if !line.trim().is_empty() {
            for tok in line.split(',') {
                let v: f64 = tok.trim().parse().map_err(|_| {
                    Error::parse(&feat_path, lineno + 1, format!("bad float {:?}", tok.trim()))
                })?;
                data.push(v);
            }
        }
        if data.len() - before != meta.n_features {
            return Err(Error::Validation(format!(
                "{}:{}: expected {} features, found {}",
                feat_path.display(),
                lineno + 1,
                meta.n_features,
                data.len() - before
            )));
        }
        n_rows += 1;
    }
    if n_rows != meta.n_nodes {
        return Err(Error::Validation(format!(
            "{}: {n_rows} feature rows for {} nodes",
            feat_path.display(),
            meta.n_nodes
        )));
    }
    let features = Matrix::from_vec(meta.n_nodes, meta.n_features, data)?;
    let graph = SparseGraph::from_edges(meta.n_nodes, &edges, features)?;

    let label_path = dir.join("labels.txt");
    let labels = if label_path.exists() {
        let mut values = Vec::with_capacity(meta.n_nodes);
        for (lineno, line) in read(&label_path)?.lines().enumerate() {
            let tok = line.trim();
            let v: i64 = tok
                .parse()
                .map_err(|_| Error::parse(&label_path, lineno + 1, format!("bad label {tok:?}")))?;
            values.push(v);
        }
        if values.len() != meta.n_nodes {
            return Err(Error::Validation(format!(
                "{}: {} labels for {} nodes",
                label_path.display(),
                values.len(),
                meta.n_nodes
            )));
        }
        Some(Labels::new(values, meta.n_classes)?)
    } else {
        None
    };
    Ok(Dataset { graph, labels })
}

/// Writes a graph directory readable by [`load_graph`]. Floats are written in
/// shortest round-trip form, so reloading is exact.
pub fn save_graph(dir: impl AsRef<Path>, graph: &SparseGraph, labels: Option<&Labels>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let meta = Meta {
        n_nodes: graph.n_nodes(),
        n_features: graph.n_features(),
        n_classes: labels.map_or(0, Labels::n_classes),
    };
    let meta_json = serde_json::to_string_pretty(&meta).expect("meta serializes");
    write(&dir.join("meta.json"), format!("{meta_json}\n"))?;

    let mut edges = String::new();
    for (i, j) in graph.undirected_edges() {
        edges.push_str(&format!("{i}\t{j}\n"));
    }
    write(&dir.join("edges.tsv"), edges)?;

    let mut feats = String::new();
    for row in 0..graph.n_nodes() {
        let line: Vec<String> = graph.features().row(row).iter().map(|v| v.to_string()).collect();
        feats.push_str(&line.join(","));
        feats.push('\n');
    }
    write(&dir.join("features.csv"), feats)?;

    if let Some(labels) = labels {
        let mut out = String::new();
        for v in labels.values() {
            out.push_str(&format!("{v}\n"));
        }
        write(&dir.join("labels.txt"), out)?;
    }
    Ok(())
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, contents: String) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}
