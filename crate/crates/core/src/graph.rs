//! Graph storage, K-hop extraction and the node-injection primitive.
//!
//! A [`Graph`] shares its clean part behind an `Arc`; injection only
//! appends feature rows and adjacency entries, so the clean block stays
//! bit-identical however many nodes are injected.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fs;
use std::path::Path;
use std::sync::Arc;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::scalar::Scalar;
use crate::sparse::CsrMatrix;

/// Entry of the self-loop-augmented symmetric normalisation between nodes
/// of degrees `du` and `dv`.
pub fn gcn_coef<T: Scalar>(du: usize, dv: usize) -> T {
    T::one() / T::of(((du + 1) * (dv + 1)) as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureSpace {
    Discrete,
    Continuous,
}

#[derive(Debug)]
struct BaseGraph<T> {
    adj: Vec<Vec<usize>>,
    features: Array2<T>,
    labels: Vec<usize>,
    num_classes: usize,
    feature_space: FeatureSpace,
    /// Nodes `0..original` are benign; anything at or above was injected.
    original: usize,
}

#[derive(Debug, Clone)]
pub struct Graph<T> {
    base: Arc<BaseGraph<T>>,
    injected_rows: Vec<Vec<T>>,
    extra_adj: BTreeMap<usize, Vec<usize>>,
}

impl<T: Scalar> Graph<T> {
    /// Builds a clean graph. Edges are undirected; duplicates and
    /// reversed duplicates are dropped, self-loops are rejected.
    pub fn new(
        features: Array2<T>,
        edges: &[(usize, usize)],
        labels: Vec<usize>,
        num_classes: usize,
        feature_space: FeatureSpace,
    ) -> Result<Self> {
        let n = features.nrows();
        ensure!(
            labels.len() == n,
            Validation,
            "{} labels for {} feature rows",
            labels.len(),
            n
        );
        if let Some(&bad) = labels.iter().find(|&&y| y >= num_classes) {
            return Err(Error::Validation(format!(
                "label {bad} outside [0, {num_classes})"
            )));
        }
        if feature_space == FeatureSpace::Discrete {
            ensure!(
                features.iter().all(|&x| x == T::zero() || x == T::one()),
                Validation,
                "discrete feature space requires entries in {{0,1}}"
            );
        }
        ensure!(
            features.iter().all(|x| x.is_finite()),
            Validation,
            "features contain non-finite values"
        );
        let mut sets = vec![BTreeSet::new(); n];
        for &(u, v) in edges {
            ensure!(u != v, Validation, "self-loop on node {u}");
            ensure!(
                u < n && v < n,
                Validation,
                "edge ({u},{v}) references a node outside [0,{n})"
            );
            sets[u].insert(v);
            sets[v].insert(u);
        }
        let adj = sets.into_iter().map(|s| s.into_iter().collect()).collect();
        Ok(Self {
            base: Arc::new(BaseGraph {
                adj,
                features,
                labels,
                num_classes,
                feature_space,
                original: n,
            }),
            injected_rows: Vec::new(),
            extra_adj: BTreeMap::new(),
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.base.adj.len() + self.injected_rows.len()
    }

    /// Count of benign (non-injected) nodes.
    pub fn num_original(&self) -> usize {
        self.base.original
    }

    pub fn is_injected(&self, v: usize) -> bool {
        v >= self.base.original
    }

    pub fn dim(&self) -> usize {
        self.base.features.ncols()
    }

    pub fn num_classes(&self) -> usize {
        self.base.num_classes
    }

    pub fn feature_space(&self) -> FeatureSpace {
        self.base.feature_space
    }

    /// Labels of the benign nodes.
    pub fn labels(&self) -> &[usize] {
        &self.base.labels
    }

    pub fn check_node(&self, v: usize) -> Result<()> {
        if v < self.num_nodes() {
            Ok(())
        } else {
            Err(Error::Index {
                index: v,
                len: self.num_nodes(),
            })
        }
    }

    pub fn feature_row(&self, v: usize) -> &[T] {
        let nb = self.base.adj.len();
        if v < nb {
            self.base
                .features
                .row(v)
                .to_slice()
                .expect("features are stored in standard layout")
        } else {
            &self.injected_rows[v - nb]
        }
    }

    /// The clean feature block (benign rows only, plus any rows flattened
    /// into the base by [`Graph::filter_edges`]).
    pub fn base_features(&self) -> &Array2<T> {
        &self.base.features
    }

    pub fn features_dense(&self) -> Array2<T> {
        let mut out = Array2::zeros((self.num_nodes(), self.dim()));
        for v in 0..self.num_nodes() {
            for (o, &x) in out.row_mut(v).iter_mut().zip(self.feature_row(v)) {
                *o = x;
            }
        }
        out
    }

    pub fn neighbors(&self, v: usize) -> impl Iterator<Item = usize> + '_ {
        let base: &[usize] = self.base.adj.get(v).map(Vec::as_slice).unwrap_or(&[]);
        let extra: &[usize] = self.extra_adj.get(&v).map(Vec::as_slice).unwrap_or(&[]);
        base.iter().chain(extra.iter()).copied()
    }

    pub fn degree(&self, v: usize) -> usize {
        self.base.adj.get(v).map_or(0, Vec::len) + self.extra_adj.get(&v).map_or(0, Vec::len)
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.neighbors(u).any(|w| w == v)
    }

    /// Undirected edges as `(min, max)` pairs in ascending order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out: Vec<_> = (0..self.num_nodes())
            .flat_map(|u| self.neighbors(u).filter(move |&v| u < v).map(move |v| (u, v)))
            .collect();
        out.sort_unstable();
        out
    }

    pub fn num_edges(&self) -> usize {
        (0..self.num_nodes()).map(|v| self.degree(v)).sum::<usize>() / 2
    }

    /// Appends one node with features `x` and a single edge to `endpoint`.
    pub fn inject_node(&self, x: &[T], endpoint: usize) -> Result<Graph<T>> {
        ensure!(
            x.len() == self.dim(),
            Validation,
            "injected feature has length {}, expected {}",
            x.len(),
            self.dim()
        );
        self.check_node(endpoint)?;
        match self.feature_space() {
            FeatureSpace::Discrete => ensure!(
                x.iter().all(|&v| v == T::zero() || v == T::one()),
                Validation,
                "discrete graph only accepts {{0,1}} injected features"
            ),
            FeatureSpace::Continuous => ensure!(
                x.iter().all(|v| v.is_finite()),
                Validation,
                "injected feature is not finite"
            ),
        }
        let new_id = self.num_nodes();
        let mut g = self.clone();
        g.injected_rows.push(x.to_vec());
        g.extra_adj.entry(new_id).or_default().push(endpoint);
        g.extra_adj.entry(endpoint).or_default().push(new_id);
        Ok(g)
    }

    /// Ids of injected nodes, ascending.
    pub fn injected_ids(&self) -> std::ops::Range<usize> {
        self.base.original..self.num_nodes()
    }

    pub fn degree_stats(&self, nodes: &[usize]) -> Result<Vec<usize>> {
        nodes
            .iter()
            .map(|&v| self.check_node(v).map(|_| self.degree(v)))
            .collect()
    }

    /// `D̃^(-1/2) (A + I) D̃^(-1/2)` as a sparse matrix; isolated nodes get a
    /// unit diagonal.
    pub fn normalize_adjacency(&self) -> CsrMatrix<T> {
        let n = self.num_nodes();
        let deg: Vec<usize> = (0..n).map(|v| self.degree(v)).collect();
        let rows = (0..n)
            .map(|u| {
                let mut row: Vec<(usize, T)> = self
                    .neighbors(u)
                    .chain(std::iter::once(u))
                    .map(|v| (v, gcn_coef(deg[u], deg[v])))
                    .collect();
                row.sort_unstable_by_key(|e| e.0);
                row
            })
            .collect();
        CsrMatrix::from_rows(n, rows).expect("indices are in range")
    }

    /// BFS ball of radius `k` around `center`: `(node, distance)` pairs,
    /// center first, then by distance with ties in ascending id order.
    pub fn ball(&self, center: usize, k: usize) -> Result<Vec<(usize, usize)>> {
        self.check_node(center)?;
        let mut dist = BTreeMap::new();
        dist.insert(center, 0usize);
        let mut order = vec![(center, 0)];
        let mut frontier = VecDeque::from([center]);
        while let Some(u) = frontier.pop_front() {
            let du = dist[&u];
            if du == k {
                continue;
            }
            let mut next: Vec<usize> = self.neighbors(u).filter(|v| !dist.contains_key(v)).collect();
            next.sort_unstable();
            next.dedup();
            for v in next {
                dist.insert(v, du + 1);
                order.push((v, du + 1));
                frontier.push_back(v);
            }
        }
        order.sort_by_key(|&(v, d)| (d, v));
        Ok(order)
    }

    /// Induced subgraph on the K-hop ball of `center`.
    pub fn k_hop_subgraph(&self, center: usize, k: usize) -> Result<SubgraphView<T>> {
        ensure!(k >= 1, Validation, "hop count must be >= 1");
        let ball = self.ball(center, k)?;
        let node_ids: Vec<usize> = ball.iter().map(|&(v, _)| v).collect();
        Ok(SubgraphView::induced(self, node_ids, 0))
    }

    /// Copy of the graph keeping only edges for which `keep(u, v)` holds.
    /// Injected nodes keep their ids and stay marked as injected.
    pub fn filter_edges(&self, mut keep: impl FnMut(usize, usize) -> bool) -> Graph<T> {
        let n = self.num_nodes();
        let features = self.features_dense();
        let mut adj = vec![Vec::new(); n];
        for (u, v) in self.edges() {
            if keep(u, v) {
                adj[u].push(v);
                adj[v].push(u);
            }
        }
        for row in &mut adj {
            row.sort_unstable();
        }
        Graph {
            base: Arc::new(BaseGraph {
                adj,
                features,
                labels: self.base.labels.clone(),
                num_classes: self.base.num_classes,
                feature_space: self.base.feature_space,
                original: self.base.original,
            }),
            injected_rows: Vec::new(),
            extra_adj: BTreeMap::new(),
        }
    }
}

/// Index sets over benign nodes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataSplit {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
    pub targets: Vec<usize>,
}

impl DataSplit {
    pub fn validate(&self, num_original: usize) -> Result<()> {
        let mut seen = BTreeMap::new();
        for (name, set) in [("train", &self.train), ("val", &self.val), ("test", &self.test)] {
            for &v in set {
                ensure!(
                    v < num_original,
                    Validation,
                    "{name} index {v} outside [0,{num_original})"
                );
                if let Some(prev) = seen.insert(v, name) {
                    return Err(Error::Validation(format!(
                        "node {v} appears in both {prev} and {name}"
                    )));
                }
            }
        }
        let test: BTreeSet<_> = self.test.iter().collect();
        for v in &self.targets {
            ensure!(test.contains(v), Validation, "target {v} is not in the test set");
        }
        Ok(())
    }
}

/// Induced subgraph with local indexing. Features are kept sparse.
#[derive(Debug, Clone)]
pub struct SubgraphView<T> {
    pub node_ids: Vec<usize>,
    pub adj: Vec<Vec<usize>>,
    pub features: CsrMatrix<T>,
    pub center: usize,
    pub injected: Vec<bool>,
}

impl<T: Scalar> SubgraphView<T> {
    pub fn induced(g: &Graph<T>, node_ids: Vec<usize>, center: usize) -> Self {
        let local: BTreeMap<usize, usize> =
            node_ids.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        let adj = node_ids
            .iter()
            .map(|&v| {
                let mut row: Vec<usize> =
                    g.neighbors(v).filter_map(|u| local.get(&u).copied()).collect();
                row.sort_unstable();
                row
            })
            .collect();
        let rows = node_ids
            .iter()
            .map(|&v| {
                g.feature_row(v)
                    .iter()
                    .enumerate()
                    .filter(|(_, &x)| x != T::zero())
                    .map(|(j, &x)| (j, x))
                    .collect()
            })
            .collect();
        let features = CsrMatrix::from_rows(g.dim(), rows).expect("row lengths match dim");
        let injected = node_ids.iter().map(|&v| g.is_injected(v)).collect();
        Self {
            node_ids,
            adj,
            features,
            center,
            injected,
        }
    }

    pub fn len(&self) -> usize {
        self.node_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.node_ids.is_empty()
    }

    pub fn center_id(&self) -> usize {
        self.node_ids[self.center]
    }

    /// Local index of a global node id.
    pub fn local_index(&self, v: usize) -> Option<usize> {
        self.node_ids.iter().position(|&u| u == v)
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Plain 0/1 adjacency of the subgraph.
    pub fn adjacency(&self) -> CsrMatrix<T> {
        let rows = self
            .adj
            .iter()
            .map(|r| r.iter().map(|&j| (j, T::one())).collect())
            .collect();
        CsrMatrix::from_rows(self.len(), rows).expect("local indices are in range")
    }

    /// Symmetric normalization with self-loops, degrees taken inside the
    /// subgraph.
    pub fn normalized_adjacency(&self) -> CsrMatrix<T> {
        let deg: Vec<usize> = self.adj.iter().map(Vec::len).collect();
        let rows = self
            .adj
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let mut row: Vec<(usize, T)> = r
                    .iter()
                    .copied()
                    .chain(std::iter::once(i))
                    .map(|j| (j, gcn_coef(deg[i], deg[j])))
                    .collect();
                row.sort_unstable_by_key(|e| e.0);
                row
            })
            .collect();
        CsrMatrix::from_rows(self.len(), rows).expect("local indices are in range")
    }

    /// Relabels local indices: new position `i` holds old node `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut inverse = vec![0; perm.len()];
        for (new, &old) in perm.iter().enumerate() {
            inverse[old] = new;
        }
        let dense = self.features.to_dense();
        let mut feats = Array2::zeros(dense.dim());
        for (new, &old) in perm.iter().enumerate() {
            feats.row_mut(new).assign(&dense.row(old));
        }
        Self {
            node_ids: perm.iter().map(|&o| self.node_ids[o]).collect(),
            adj: perm
                .iter()
                .map(|&o| {
                    let mut r: Vec<usize> = self.adj[o].iter().map(|&j| inverse[j]).collect();
                    r.sort_unstable();
                    r
                })
                .collect(),
            features: CsrMatrix::from_dense(feats.view()),
            center: inverse[self.center],
            injected: perm.iter().map(|&o| self.injected[o]).collect(),
        }
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

pub fn parse_edges(path: &Path) -> Result<Vec<(usize, usize)>> {
    let text = read(path)?;
    let mut out = Vec::new();
    for (ln, line) in content_lines(&text) {
        let mut parts = line.split('\t');
        let (Some(a), Some(b), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(parse_err(path, ln, "expected `src<TAB>dst`"));
        };
        let u: usize = a
            .trim()
            .parse()
            .map_err(|_| parse_err(path, ln, format!("bad node id `{a}`")))?;
        let v: usize = b
            .trim()
            .parse()
            .map_err(|_| parse_err(path, ln, format!("bad node id `{b}`")))?;
        if u == v {
            return Err(parse_err(path, ln, format!("self-loop on node {u}")));
        }
        out.push((u, v));
    }
    Ok(out)
}

pub fn parse_features<T: Scalar>(path: &Path) -> Result<Array2<T>> {
    let text = read(path)?;
    let mut rows: Vec<Vec<T>> = Vec::new();
    for (ln, line) in content_lines(&text) {
        let row = line
            .split_whitespace()
            .map(|tok| {
                tok.parse::<f64>()
                    .map(T::of)
                    .map_err(|_| parse_err(path, ln, format!("bad float `{tok}`")))
            })
            .collect::<Result<Vec<T>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(parse_err(
                    path,
                    ln,
                    format!("row has {} columns, expected {}", row.len(), first.len()),
                ));
            }
        }
        rows.push(row);
    }
    let d = rows.first().map_or(0, Vec::len);
    let flat: Vec<T> = rows.iter().flatten().copied().collect();
    Array2::from_shape_vec((rows.len(), d), flat).map_err(|e| Error::Shape(e.to_string()))
}

pub fn parse_labels(path: &Path) -> Result<Vec<usize>> {
    let text = read(path)?;
    let mut out = Vec::new();
    for (ln, line) in content_lines(&text) {
        let y: i64 = line
            .parse()
            .map_err(|_| parse_err(path, ln, format!("bad label `{line}`")))?;
        if y < 0 {
            return Err(Error::Validation(format!(
                "{}:{ln}: label {y} out of range",
                path.display()
            )));
        }
        out.push(y as usize);
    }
    Ok(out)
}

pub fn parse_split(path: &Path) -> Result<DataSplit> {
    Ok(serde_json::from_str(&read(path)?)?)
}

/// Reads the four text files that describe a dataset. Feature space is
/// discrete when every entry is 0 or 1.
pub fn load_graph<T: Scalar>(
    edge_file: &Path,
    feature_file: &Path,
    label_file: &Path,
    split_file: &Path,
) -> Result<(Graph<T>, DataSplit)> {
    let edges = parse_edges(edge_file)?;
    let features = parse_features::<T>(feature_file)?;
    let labels = parse_labels(label_file)?;
    let split = parse_split(split_file)?;
    ensure!(
        features.nrows() == labels.len(),
        Validation,
        "{} feature rows but {} labels",
        features.nrows(),
        labels.len()
    );
    let num_classes = labels.iter().max().map_or(0, |m| m + 1);
    let space = if features.iter().all(|&x| x == T::zero() || x == T::one()) {
        FeatureSpace::Discrete
    } else {
        FeatureSpace::Continuous
    };
    let g = Graph::new(features, &edges, labels, num_classes, space)?;
    split.validate(g.num_nodes())?;
    Ok((g, split))
}

/// Writes a graph and split in the same four-file format [`load_graph`] reads.
pub fn save_graph<T: Scalar>(g: &Graph<T>, split: &DataSplit, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let write = |name: &str, body: String| {
        let p = dir.join(name);
        fs::write(&p, body).map_err(|e| Error::io(p, e))
    };
    let mut edges = String::from("# src\tdst\n");
    for (u, v) in g.edges() {
        edges.push_str(&format!("{u}\t{v}\n"));
    }
    write("edges.tsv", edges)?;
    let mut feats = String::new();
    for v in 0..g.num_original() {
        let row: Vec<String> = g.feature_row(v).iter().map(|x| format!("{x}")).collect();
        feats.push_str(&row.join(" "));
        feats.push('\n');
    }
    write("features.txt", feats)?;
    let labels: String = g.labels().iter().map(|y| format!("{y}\n")).collect();
    write("labels.txt", labels)?;
    write("split.json", serde_json::to_string(split)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn path_graph(n: usize) -> Graph<f64> {
        let edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        Graph::new(
            Array2::zeros((n, 2)),
            &edges,
            vec![0; n],
            1,
            FeatureSpace::Discrete,
        )
        .unwrap()
    }

    #[test]
    fn dedups_edges() {
        let g = Graph::<f64>::new(
            Array2::zeros((4, 1)),
            &[(0, 1), (1, 2), (2, 3), (1, 0)],
            vec![0; 4],
            1,
            FeatureSpace::Discrete,
        )
        .unwrap();
        assert_eq!(g.num_edges(), 3);
    }

    #[test]
    fn rejects_bad_graphs() {
        let loops = Graph::<f64>::new(Array2::zeros((2, 1)), &[(1, 1)], vec![0; 2], 1, FeatureSpace::Discrete);
        assert!(matches!(loops, Err(Error::Validation(_))));
        let short = Graph::<f64>::new(Array2::zeros((3, 1)), &[], vec![0; 4], 1, FeatureSpace::Discrete);
        assert!(matches!(short, Err(Error::Validation(_))));
        let nonbin = Graph::new(array![[0.5_f64]], &[], vec![0], 1, FeatureSpace::Discrete);
        assert!(nonbin.is_err());
    }

    #[test]
    fn normalized_adjacency_examples() {
        let two = Graph::<f64>::new(Array2::zeros((2, 1)), &[(0, 1)], vec![0; 2], 1, FeatureSpace::Discrete).unwrap();
        assert_eq!(two.normalize_adjacency().to_dense(), array![[0.5, 0.5], [0.5, 0.5]]);

        let empty = Graph::<f64>::new(Array2::zeros((3, 1)), &[], vec![0; 3], 1, FeatureSpace::Discrete).unwrap();
        assert_eq!(empty.normalize_adjacency().to_dense(), Array2::<f64>::eye(3));

        let k3 = Graph::<f64>::new(Array2::zeros((3, 1)), &[(0, 1), (1, 2), (0, 2)], vec![0; 3], 1, FeatureSpace::Discrete).unwrap();
        for &x in k3.normalize_adjacency().to_dense().iter() {
            assert!((x - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn k_hop_examples() {
        let p = path_graph(4);
        let sub = p.k_hop_subgraph(0, 2).unwrap();
        assert_eq!(sub.node_ids, vec![0, 1, 2]);
        assert_eq!(sub.edge_count(), 2);
        assert_eq!(sub.center, 0);

        let iso = Graph::<f64>::new(Array2::zeros((2, 1)), &[], vec![0; 2], 1, FeatureSpace::Discrete).unwrap();
        assert_eq!(iso.k_hop_subgraph(1, 3).unwrap().node_ids, vec![1]);

        let k3 = Graph::<f64>::new(Array2::zeros((3, 1)), &[(0, 1), (1, 2), (0, 2)], vec![0; 3], 1, FeatureSpace::Discrete).unwrap();
        assert_eq!(k3.k_hop_subgraph(2, 1).unwrap().len(), 3);

        assert!(matches!(p.k_hop_subgraph(9, 1), Err(Error::Index { .. })));
    }

    #[test]
    fn injection_examples() {
        let g = Graph::new(array![[1.0_f64, 0.0], [0.0, 1.0]], &[(0, 1)], vec![0, 1], 2, FeatureSpace::Discrete).unwrap();
        let g1 = g.inject_node(&[1.0, 1.0], 1).unwrap();
        assert_eq!((g1.num_nodes(), g1.num_edges()), (3, 2));
        assert!(g1.has_edge(0, 1) && g1.has_edge(2, 1));
        assert_eq!(g1.feature_row(0), g.feature_row(0));

        // chain onto the previously injected node
        let g2 = g1.inject_node(&[0.0, 1.0], 2).unwrap();
        assert!(g2.has_edge(3, 2));
        assert!(g2.is_injected(2) && g2.is_injected(3) && !g2.is_injected(1));
        assert_eq!(g2.edges()[..1], g.edges()[..]);

        assert!(g.inject_node(&[0.3, 1.0], 0).is_err());
        assert!(g.inject_node(&[1.0], 0).is_err());
    }

    #[test]
    fn degree_examples() {
        let p = path_graph(3);
        assert_eq!(p.degree_stats(&[0, 1, 2]).unwrap(), vec![1, 2, 1]);
        let q = p.inject_node(&[0.0, 0.0], 1).unwrap();
        assert_eq!(q.degree_stats(&[0, 1, 2, 3]).unwrap(), vec![1, 3, 1, 1]);
        assert!(p.degree_stats(&[]).unwrap().is_empty());
    }

    #[test]
    fn split_validation() {
        let ok = DataSplit { train: vec![0], val: vec![1], test: vec![2, 3], targets: vec![3] };
        ok.validate(4).unwrap();
        let overlap = DataSplit { train: vec![0], val: vec![0], test: vec![2], targets: vec![] };
        assert!(overlap.validate(4).is_err());
        let stray = DataSplit { train: vec![0], val: vec![1], test: vec![2], targets: vec![3] };
        assert!(stray.validate(4).is_err());
    }
}
