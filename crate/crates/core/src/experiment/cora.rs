//! Converter from the `cora.content` / `cora.cites` layout to the
//! four-file dataset format.
//!
//! `cora.content` lines are `<paper id> <binary attributes...> <class name>`,
//! `cora.cites` lines are `<cited id> <citing id>`. Class names are indexed in
//! sorted order; self-citations, duplicates and citations of unknown papers
//! are dropped.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::graph::{save_graph, DataSplit, FeatureSpace, Graph};

/// Sizes of the seeded split; targets are the test nodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoraSplit {
    pub train_per_class: usize,
    pub val: usize,
    pub test: usize,
}

impl Default for CoraSplit {
    fn default() -> Self {
        Self {
            train_per_class: 20,
            val: 500,
            test: 1000,
        }
    }
}

fn bad(file: &str, line: usize, msg: String) -> Error {
    Error::Parse {
        path: file.into(),
        line,
        msg,
    }
}

pub fn parse_cora(content: &str, cites: &str) -> Result<Graph<f64>> {
    let mut ids = HashMap::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut names = Vec::new();
    for (i, line) in content.lines().enumerate() {
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.is_empty() {
            continue;
        }
        if f.len() < 3 {
            return Err(bad("cora.content", i + 1, "expected id, attributes and class".into()));
        }
        let attrs = f[1..f.len() - 1]
            .iter()
            .map(|s| s.parse::<f64>().map_err(|e| bad("cora.content", i + 1, e.to_string())))
            .collect::<Result<Vec<_>>>()?;
        if !rows.is_empty() && attrs.len() != rows[0].len() {
            return Err(bad("cora.content", i + 1, format!("{} attributes, earlier rows have {}", attrs.len(), rows[0].len())));
        }
        if ids.insert(f[0].to_string(), rows.len()).is_some() {
            return Err(bad("cora.content", i + 1, format!("duplicate paper {}", f[0])));
        }
        rows.push(attrs);
        names.push(f[f.len() - 1].to_string());
    }
    ensure!(!rows.is_empty(), Validation, "no papers in content file");
    let classes: BTreeMap<&str, usize> = names
        .iter()
        .map(String::as_str)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .enumerate()
        .map(|(i, n)| (n, i))
        .collect();
    let labels: Vec<usize> = names.iter().map(|n| classes[n.as_str()]).collect();

    let mut edges = BTreeSet::new();
    let mut dropped = 0;
    for (i, line) in cites.lines().enumerate() {
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.is_empty() {
            continue;
        }
        if f.len() != 2 {
            return Err(bad("cora.cites", i + 1, "expected two ids".into()));
        }
        match (ids.get(f[0]), ids.get(f[1])) {
            (Some(&u), Some(&v)) if u != v => {
                edges.insert((u.min(v), u.max(v)));
            }
            _ => dropped += 1,
        }
    }
    if dropped > 0 {
        log::warn!("dropped {dropped} citation lines (self-loops or unknown papers)");
    }
    let d = rows[0].len();
    let x = Array2::from_shape_vec((rows.len(), d), rows.concat()).map_err(|e| Error::Shape(e.to_string()))?;
    let edges: Vec<(usize, usize)> = edges.into_iter().collect();
    Graph::new(x, &edges, labels, classes.len(), FeatureSpace::Discrete)
}

pub fn make_split(labels: &[usize], classes: usize, sizes: CoraSplit, seed: u64) -> Result<DataSplit> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..labels.len()).collect();
    order.shuffle(&mut rng);
    let mut taken = vec![0; classes];
    let (mut train, mut rest) = (Vec::new(), Vec::new());
    for v in order {
        if taken[labels[v]] < sizes.train_per_class {
            taken[labels[v]] += 1;
            train.push(v);
        } else {
            rest.push(v);
        }
    }
    ensure!(
        rest.len() >= sizes.val + sizes.test,
        Validation,
        "{} nodes left after training picks, split needs {}",
        rest.len(),
        sizes.val + sizes.test
    );
    let val = rest[..sizes.val].to_vec();
    let test = rest[sizes.val..sizes.val + sizes.test].to_vec();
    train.sort_unstable();
    Ok(DataSplit {
        train,
        val,
        targets: test.clone(),
        test,
    })
}

/// Reads `cora.content` and `cora.cites` from `src` and writes the
/// converted dataset into `dst`.
pub fn convert_cora(src: &Path, dst: &Path, sizes: CoraSplit, seed: u64) -> Result<(Graph<f64>, DataSplit)> {
    let read = |name: &str| {
        let p = src.join(name);
        std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))
    };
    let g = parse_cora(&read("cora.content")?, &read("cora.cites")?)?;
    let split = make_split(g.labels(), g.num_classes(), sizes, seed)?;
    save_graph(&g, &split, dst)?;
    Ok((g, split))
}
