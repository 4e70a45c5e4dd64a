//! GIN discriminator with a realness head and an auxiliary head that
//! recovers the generator's latent code from the graph embedding.

use std::sync::Arc;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::graph::{Graph, SubgraphView};
use crate::nn::{Activation, Bound, GinLayer, Linear, Mlp, NodeInput, ParamBlock, Tape, Var};
use crate::scalar::{log_sum_exp, Scalar};
use crate::sparse::CsrMatrix;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiscriminatorConfig {
    pub hidden: usize,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        Self { hidden: 64 }
    }
}

/// A graph fragment ready for the discriminator. When `var_row` is set,
/// that row of `features` is zero and its content is supplied separately.
#[derive(Debug, Clone)]
pub struct GraphSample<T> {
    pub adj: Arc<CsrMatrix<T>>,
    pub features: Arc<CsrMatrix<T>>,
    pub var_row: Option<usize>,
}

impl<T: Scalar> GraphSample<T> {
    pub fn from_view(view: &SubgraphView<T>, var_row: Option<usize>) -> Self {
        let features = match var_row {
            Some(r) => view.features.map_values(|i, _, v| if i == r { T::zero() } else { v }),
            None => view.features.clone(),
        };
        Self {
            adj: Arc::new(view.adjacency()),
            features: Arc::new(features),
            var_row,
        }
    }

    pub fn len(&self) -> usize {
        self.adj.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Ego-graph of `target` after injections: the `hops` ball plus every
/// node listed in `injected`, induced. The target stays at local index 0.
pub fn injected_ego_view<T: Scalar>(g: &Graph<T>, target: usize, hops: usize, injected: &[usize]) -> Result<SubgraphView<T>> {
    let mut ids: Vec<usize> = g.ball(target, hops)?.into_iter().map(|(v, _)| v).collect();
    for &v in injected {
        g.check_node(v)?;
        if !ids.contains(&v) {
            ids.push(v);
        }
    }
    Ok(SubgraphView::induced(g, ids, 0))
}

#[derive(Debug, Clone, Copy)]
pub struct DiscOut {
    pub embedding: Var,
    pub score: Var,
    pub q_logits: Var,
    pub q_mu: Var,
    pub q_logvar: Var,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscValues<T> {
    pub embedding: Vec<T>,
    pub score: T,
    pub q_logits: Vec<T>,
    pub q_mu: Vec<T>,
    pub q_logvar: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Discriminator<T> {
    pub params: ParamBlock<T>,
    pub cfg: DiscriminatorConfig,
    gin: Vec<GinLayer>,
    real_head: Linear,
    q_head: Mlp,
    c_lat: usize,
    cont: usize,
}

impl<T: Scalar> Discriminator<T> {
    pub fn new(cfg: DiscriminatorConfig, dim: usize, c_lat: usize, cont: usize, seed: u64) -> Result<Self> {
        ensure!(cfg.hidden >= 1 && dim >= 1 && c_lat >= 1, Validation, "discriminator sizes must be positive");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamBlock::new(seed);
        let h = cfg.hidden;
        let gin = vec![
            GinLayer::new(&mut params, "gin0", dim, h, h, &mut rng),
            GinLayer::new(&mut params, "gin1", h, h, h, &mut rng),
        ];
        let real_head = Linear::new(&mut params, "real", h, 1, true, &mut rng);
        let q_head = Mlp::new(&mut params, "q", &[h, h, c_lat + 2 * cont], Activation::Relu, &mut rng);
        Ok(Self {
            params,
            cfg,
            gin,
            real_head,
            q_head,
            c_lat,
            cont,
        })
    }

    pub fn latent_classes(&self) -> usize {
        self.c_lat
    }

    pub fn cont_latent(&self) -> usize {
        self.cont
    }

    /// Two GIN layers then mean pooling, as `1 × hidden`.
    pub fn embed_var(&self, tape: &mut Tape<T>, p: &Bound, sample: &GraphSample<T>, x_row: Option<Var>) -> Result<Var> {
        ensure!(!sample.is_empty(), Validation, "empty graph fragment");
        let overrides = match (sample.var_row, x_row) {
            (Some(r), Some(x)) => vec![(r, x)],
            (None, None) => Vec::new(),
            _ => return Err(crate::Error::Validation("variable row and its value must be given together".into())),
        };
        let x = NodeInput::Sparse {
            constant: sample.features.clone(),
            overrides,
        };
        let h = self.gin[0].forward(tape, p, &sample.adj, &x);
        let h = tape.relu(h);
        let h = self.gin[1].forward(tape, p, &sample.adj, &NodeInput::Dense(h));
        Ok(tape.mean_rows(h))
    }

    pub fn forward(&self, tape: &mut Tape<T>, p: &Bound, sample: &GraphSample<T>, x_row: Option<Var>) -> Result<DiscOut> {
        let embedding = self.embed_var(tape, p, sample, x_row)?;
        let score = self.real_head.forward(tape, p, embedding);
        let q = self.q_head.forward(tape, p, embedding);
        let (c, m) = (self.c_lat, self.cont);
        Ok(DiscOut {
            embedding,
            score,
            q_logits: tape.col_range(q, 0, c),
            q_mu: tape.col_range(q, c, c + m),
            q_logvar: tape.col_range(q, c + m, c + 2 * m),
        })
    }

    pub fn evaluate(&self, view: &SubgraphView<T>) -> Result<DiscValues<T>> {
        let mut tape = Tape::new();
        let p = self.params.bind(&mut tape);
        let out = self.forward(&mut tape, &p, &GraphSample::from_view(view, None), None)?;
        let vals = |v: Var| tape.value(v).iter().copied().collect::<Vec<T>>();
        Ok(DiscValues {
            embedding: vals(out.embedding),
            score: tape.scalar_value(out.score),
            q_logits: vals(out.q_logits),
            q_mu: vals(out.q_mu),
            q_logvar: vals(out.q_logvar),
        })
    }

    pub fn embed_graph(&self, view: &SubgraphView<T>) -> Result<Vec<T>> {
        Ok(self.evaluate(view)?.embedding)
    }
}

/// Least-squares GAN losses `(L_D, L_G)`.
pub fn adversarial_losses<T: Scalar>(real: &[T], fake: &[T]) -> Result<(T, T)> {
    ensure!(!real.is_empty() && !fake.is_empty(), Validation, "adversarial losses need real and fake scores");
    let half = T::of(0.5);
    let mean = |xs: &[T], f: &dyn Fn(T) -> T| xs.iter().map(|&x| f(x)).sum::<T>() / T::of(xs.len() as f64);
    let d = half * mean(real, &|x| (x - T::one()).powi(2)) + half * mean(fake, &|x| x * x);
    let g = half * mean(fake, &|x| (x - T::one()).powi(2));
    Ok((d, g))
}

fn mean_sq_dev<T: Scalar>(tape: &mut Tape<T>, scores: &[Var], target: T) -> Var {
    let col = tape.vcat(scores);
    let shifted = tape.add_const(col, -target);
    let sq = tape.square(shifted);
    tape.mean(sq)
}

pub fn adversarial_loss_d_var<T: Scalar>(tape: &mut Tape<T>, real: &[Var], fake: &[Var]) -> Var {
    let r = mean_sq_dev(tape, real, T::one());
    let f = mean_sq_dev(tape, fake, T::zero());
    let s = tape.add(r, f);
    tape.scale(s, T::of(0.5))
}

pub fn adversarial_loss_g_var<T: Scalar>(tape: &mut Tape<T>, fake: &[Var]) -> Var {
    let f = mean_sq_dev(tape, fake, T::one());
    tape.scale(f, T::of(0.5))
}

/// Cross-entropy of the true latent class under the Q logits.
pub fn info_discrete<T: Scalar>(q_logits: &[T], class: usize) -> Result<T> {
    if class >= q_logits.len() {
        return Err(crate::Error::Index {
            index: class,
            len: q_logits.len(),
        });
    }
    Ok(log_sum_exp(q_logits) - q_logits[class])
}

/// Gaussian negative log-likelihood, constant included.
pub fn info_continuous<T: Scalar>(mu: &[T], logvar: &[T], c: &[T]) -> Result<T> {
    ensure!(mu.len() == c.len() && logvar.len() == c.len(), Shape, "continuous code length mismatch");
    Ok(mu
        .iter()
        .zip(logvar)
        .zip(c)
        .map(|((&m, &lv), &x)| T::of(HALF_LN_2PI) + T::of(0.5) * lv + T::of(0.5) * (x - m).powi(2) * (-lv).exp())
        .sum())
}

pub fn info_loss<T: Scalar>(q: &DiscValues<T>, class: usize, c_cont: &[T]) -> Result<T> {
    Ok(info_discrete(&q.q_logits, class)? + info_continuous(&q.q_mu, &q.q_logvar, c_cont)?)
}

pub fn info_loss_var<T: Scalar>(tape: &mut Tape<T>, out: &DiscOut, class: usize, c_cont: &[T]) -> Var {
    let ls = tape.log_softmax_rows(out.q_logits);
    let pick = tape.cols(ls, &[class]);
    let ce = tape.scale(pick, -T::one());
    let neg_mu = tape.scale(out.q_mu, -T::one());
    let c = Array2::from_shape_vec((1, c_cont.len()), c_cont.to_vec()).expect("1 x m");
    let diff = tape.offset(neg_mu, &c);
    let sq = tape.square(diff);
    let neg_lv = tape.scale(out.q_logvar, -T::one());
    let prec = tape.exp(neg_lv);
    let quad = tape.mul(sq, prec);
    let terms = tape.add(quad, out.q_logvar);
    let s = tape.sum(terms);
    let s = tape.scale(s, T::of(0.5));
    let nll = tape.add_const(s, T::of(HALF_LN_2PI * c_cont.len() as f64));
    tape.add(ce, nll)
}

pub fn discriminator_total_loss<T: Scalar>(adv: T, info: T) -> T {
    adv + info
}
