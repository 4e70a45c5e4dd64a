//! The attacked model: a two-layer GCN trained on the clean graph.
//!
//! Once trained the model is frozen and only answers queries
//! ([`VictimModel::predict_proba`] and the losses derived from it). Its
//! parameters are not reachable from outside the crate.

use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::graph::{gcn_coef, DataSplit, Graph};
use crate::nn::{Adam, GcnStack, NodeInput, ParamBlock, Tape};
use crate::scalar::{argmax, Scalar};
use crate::sparse::CsrMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VictimConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub dropout: f64,
}

impl Default for VictimConfig {
    fn default() -> Self {
        Self {
            hidden: 128,
            epochs: 200,
            lr: 0.01,
            weight_decay: 5e-4,
            dropout: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VictimMeta {
    pub config: VictimConfig,
    pub seed: u64,
    pub train_accuracy: f64,
    pub val_accuracy: f64,
    pub loss_history: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub warning: Option<String>,
}

#[derive(Debug, Clone)]
pub struct VictimModel<T> {
    params: ParamBlock<T>,
    gcn: GcnStack,
    pub meta: VictimMeta,
}

fn gcn_layout<T: Scalar>(dim: usize, hidden: usize, classes: usize, seed: u64) -> (ParamBlock<T>, GcnStack) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut block = ParamBlock::new(seed);
    let gcn = GcnStack::new(&mut block, "gcn", &[dim, hidden, classes], true, &mut rng);
    (block, gcn)
}

/// Sparse feature matrix of a graph, optionally with inverted dropout
/// applied to the stored entries.
fn feature_csr<T: Scalar>(g: &Graph<T>, dropout: Option<(f64, &mut ChaCha8Rng)>) -> CsrMatrix<T> {
    let mut m = CsrMatrix::from_dense(g.features_dense().view());
    if let Some((p, rng)) = dropout {
        if p > 0.0 {
            let keep = T::of(1.0 / (1.0 - p));
            m = m.map_values(|_, _, v| if rng.random::<f64>() < p { T::zero() } else { v * keep });
        }
    }
    m
}

pub fn train_victim<T: Scalar>(g: &Graph<T>, split: &DataSplit, cfg: &VictimConfig, seed: u64) -> Result<VictimModel<T>> {
    ensure!(
        g.injected_ids().is_empty(),
        Validation,
        "the victim must be trained on the clean graph"
    );
    ensure!(!split.train.is_empty(), Validation, "empty training set");
    ensure!(
        (0.0..1.0).contains(&cfg.dropout),
        Validation,
        "dropout {} outside [0,1)",
        cfg.dropout
    );
    split.validate(g.num_original())?;
    let c = g.num_classes();
    let (mut params, gcn) = gcn_layout::<T>(g.dim(), cfg.hidden, c, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_d0d0);
    let mut opt = Adam::new(T::of(cfg.lr), &params).with_weight_decay(T::of(cfg.weight_decay), vec![gcn.layers[0].w]);
    let a_hat = Arc::new(g.normalize_adjacency());
    let mut onehot = Array2::zeros((split.train.len(), c));
    for (i, &v) in split.train.iter().enumerate() {
        onehot[[i, g.labels()[v]]] = T::one();
    }
    let mut loss_history = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        let mut tape = Tape::new();
        let p = params.bind(&mut tape);
        let x = NodeInput::constant(feature_csr(g, Some((cfg.dropout, &mut rng))));
        // layer 1
        let l1 = &gcn.layers[0];
        let xw = x.project(&mut tape, p.var(l1.w));
        let h = tape.spmm(a_hat.clone(), xw);
        let h = l1.add_bias(&mut tape, &p, h);
        let mut h = tape.relu(h);
        if cfg.dropout > 0.0 {
            let keep = T::of(1.0 / (1.0 - cfg.dropout));
            let mask = Array2::from_shape_simple_fn(tape.shape(h), || {
                if rng.random::<f64>() < cfg.dropout {
                    T::zero()
                } else {
                    keep
                }
            });
            let m = tape.leaf(mask);
            h = tape.mul(h, m);
        }
        // layer 2
        let l2 = &gcn.layers[1];
        let hw = tape.matmul(h, p.var(l2.w));
        let z = tape.spmm(a_hat.clone(), hw);
        let z = l2.add_bias(&mut tape, &p, z);
        let logp = tape.log_softmax_rows(z);
        let picked = tape.rows(logp, &split.train);
        let y = tape.leaf(onehot.clone());
        let ll = tape.mul(picked, y);
        let ll = tape.sum(ll);
        let loss = tape.scale(ll, -T::one() / T::of(split.train.len() as f64));
        let lv = tape.scalar_value(loss);
        if !lv.is_finite() {
            return Err(Error::NonFinite(format!("victim training loss {lv}")));
        }
        loss_history.push(lv.as_f64());
        tape.backward(loss);
        opt.step(&mut params, &p.grads(&tape));
    }
    let mut model = VictimModel {
        params,
        gcn,
        meta: VictimMeta {
            config: cfg.clone(),
            seed,
            train_accuracy: 0.0,
            val_accuracy: 0.0,
            loss_history,
            warning: None,
        },
    };
    model.meta.train_accuracy = model.accuracy(g, &split.train)?;
    model.meta.val_accuracy = if split.val.is_empty() { 0.0 } else { model.accuracy(g, &split.val)? };
    let chance = 1.0 / c as f64 + 0.1;
    if model.meta.val_accuracy < chance {
        let msg = format!(
            "victim validation accuracy {:.3} below 1/C + 0.1 = {:.3}",
            model.meta.val_accuracy, chance
        );
        log::warn!("{msg}");
        model.meta.warning = Some(msg);
    }
    Ok(model)
}

impl<T: Scalar> VictimModel<T> {
    pub(crate) fn from_parts(params: ParamBlock<T>, meta: VictimMeta, dim: usize, classes: usize) -> Result<Self> {
        let (layout, gcn) = gcn_layout::<T>(dim, meta.config.hidden, classes, meta.seed);
        ensure!(
            layout.names() == params.names()
                && layout.tensors().iter().zip(params.tensors()).all(|(a, b)| a.dim() == b.dim()),
            Validation,
            "checkpoint parameters do not match a {dim}->{}->{classes} GCN",
            meta.config.hidden
        );
        Ok(Self { params, gcn, meta })
    }

    /// Freshly initialised parameters with the layout `from_parts` expects.
    pub(crate) fn layout(meta: &VictimMeta, dim: usize, classes: usize) -> ParamBlock<T> {
        gcn_layout::<T>(dim, meta.config.hidden, classes, meta.seed).0
    }

    pub(crate) fn params(&self) -> &ParamBlock<T> {
        &self.params
    }

    pub fn num_classes(&self) -> usize {
        self.params.get(self.gcn.layers[1].w).ncols()
    }

    pub fn input_dim(&self) -> usize {
        self.params.get(self.gcn.layers[0].w).nrows()
    }

    /// Class probabilities for `nodes` on graph `g`.
    ///
    /// Only the two-hop neighbourhood of the queried nodes is evaluated;
    /// normalisation uses degrees from the full graph, so the result equals
    /// the full-graph forward pass.
    pub fn predict_proba(&self, g: &Graph<T>, nodes: &[usize]) -> Result<Array2<T>> {
        ensure!(
            g.dim() == self.input_dim(),
            Shape,
            "graph has {} features, victim expects {}",
            g.dim(),
            self.input_dim()
        );
        for &v in nodes {
            g.check_node(v)?;
        }
        let (w1, b1) = (self.params.get(self.gcn.layers[0].w), self.gcn.layers[0].b.map(|b| self.params.get(b)));
        let (w2, b2) = (self.params.get(self.gcn.layers[1].w), self.gcn.layers[1].b.map(|b| self.params.get(b)));
        let closed = |v: usize| g.neighbors(v).chain(std::iter::once(v));
        let ring1: BTreeSet<usize> = nodes.iter().flat_map(|&v| closed(v)).collect();
        let ring2: BTreeSet<usize> = ring1.iter().flat_map(|&v| closed(v)).collect();
        

        let hidden = w1.ncols();
        let mut xw: HashMap<usize, Vec<T>> = HashMap::with_capacity(ring2.len());
        for &v in &ring2 {
            let mut acc = vec![T::zero(); hidden];
            for (j, &x) in g.feature_row(v).iter().enumerate() {
                if x != T::zero() {
                    for (a, &w) in acc.iter_mut().zip(w1.row(j)) {
                        *a += x * w;
                    }
                }
            }
            xw.insert(v, acc);
        }
        let classes = w2.ncols();
        let mut hw: HashMap<usize, Vec<T>> = HashMap::with_capacity(ring1.len());
        for &u in &ring1 {
            let mut h = match b1 {
                Some(b) => b.row(0).to_vec(),
                None => vec![T::zero(); hidden],
            };
            let mut nb: Vec<usize> = closed(u).collect();
            nb.sort_unstable();
            for w in nb {
                let c: T = gcn_coef(g.degree(u), g.degree(w));
                for (a, &x) in h.iter_mut().zip(&xw[&w]) {
                    *a += c * x;
                }
            }
            let mut out = vec![T::zero(); classes];
            for (k, &hk) in h.iter().enumerate() {
                let hk = hk.max(T::zero());
                if hk != T::zero() {
                    for (o, &w) in out.iter_mut().zip(w2.row(k)) {
                        *o += hk * w;
                    }
                }
            }
            hw.insert(u, out);
        }
        let mut probs = Array2::zeros((nodes.len(), classes));
        for (r, &v) in nodes.iter().enumerate() {
            let mut z = match b2 {
                Some(b) => b.row(0).to_vec(),
                None => vec![T::zero(); classes],
            };
            let mut nb: Vec<usize> = closed(v).collect();
            nb.sort_unstable();
            for u in nb {
                let c: T = gcn_coef(g.degree(v), g.degree(u));
                for (a, &x) in z.iter_mut().zip(&hw[&u]) {
                    *a += c * x;
                }
            }
            for (o, p) in probs.row_mut(r).iter_mut().zip(crate::scalar::softmax(&z)) {
                *o = p;
            }
        }
        Ok(probs)
    }

    /// Argmax class per node, ties to the lowest class id.
    pub fn predict(&self, g: &Graph<T>, nodes: &[usize]) -> Result<Vec<usize>> {
        let p = self.predict_proba(g, nodes)?;
        Ok(p.rows().into_iter().map(|r| argmax(&r.to_vec())).collect())
    }

    /// Cross-entropy `-ln p(label | node)` observed through the query surface.
    pub fn cross_entropy(&self, g: &Graph<T>, node: usize, label: usize) -> Result<T> {
        let p = self.predict_proba(g, &[node])?;
        ensure!(label < p.ncols(), Validation, "label {label} outside [0,{})", p.ncols());
        Ok(-(p[[0, label]].max(T::min_positive_value())).ln())
    }

    pub fn accuracy(&self, g: &Graph<T>, nodes: &[usize]) -> Result<f64> {
        ensure!(!nodes.is_empty(), Validation, "accuracy over an empty node set");
        let pred = self.predict(g, nodes)?;
        let hits = pred.iter().zip(nodes).filter(|(p, &v)| **p == g.labels()[v]).count();
        Ok(hits as f64 / nodes.len() as f64)
    }

    /// Full-graph dense forward pass, used to cross-check [`Self::predict_proba`].
    pub fn predict_proba_full(&self, g: &Graph<T>) -> Result<Array2<T>> {
        let mut tape = Tape::new();
        let p = self.params.bind(&mut tape);
        let a_hat = Arc::new(g.normalize_adjacency());
        let x = NodeInput::constant(feature_csr(g, None));
        let z = self.gcn.forward(&mut tape, &p, &a_hat, &x);
        let logp = tape.log_softmax_rows(z);
        Ok(tape.value(logp).mapv(T::exp))
    }
}

/// Fraction of `targets` whose predicted class differs from `labels[target]`.
pub fn misclassification_rate<T: Scalar>(m: &VictimModel<T>, g: &Graph<T>, targets: &[usize], labels: &[usize]) -> Result<f64> {
    ensure!(!targets.is_empty(), Validation, "empty target set");
    let pred = m.predict(g, targets)?;
    let wrong = pred
        .iter()
        .zip(targets)
        .filter(|(p, &t)| labels.get(t).is_none_or(|y| *p != y))
        .count();
    Ok(wrong as f64 / targets.len() as f64)
}
