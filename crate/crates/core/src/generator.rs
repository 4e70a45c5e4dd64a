//! The actor: reads out a state from the target's neighbourhood, draws a
//! structured latent code, emits one injected feature row and scores every
//! candidate endpoint.
//!
//! Every stochastic choice is recorded in an [`ActionRecord`]. Replaying a
//! record rebuilds the same computation with the discrete choices and the
//! straight-through offsets held fixed, so the replayed graph is a smooth
//! function of the parameters.

use std::sync::Arc;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::graph::{FeatureSpace, Graph, SubgraphView};
use crate::nn::{gumbel_top_k, sample_gumbel, Activation, Bound, GcnStack, Mlp, NodeInput, ParamBlock, Tape, Var};
use crate::scalar::{argmax, softmax, Scalar};
use crate::sparse::CsrMatrix;

const SIGMA_FLOOR: f64 = 1e-3;
const NORM_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub hidden: usize,
    /// Number of graph convolution layers and the radius of the state ball.
    pub hops: usize,
    pub z_dim: usize,
    pub cont_latent: usize,
    /// Bonus added to the score of candidates adjacent to the target.
    pub alpha: f64,
    /// Gumbel-softmax temperature of the relaxed samples.
    pub tau: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            hidden: 64,
            hops: 2,
            z_dim: 16,
            cont_latent: 15,
            alpha: 1.0,
            tau: 0.5,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.hidden >= 1 && self.hops >= 1, Validation, "generator needs hidden >= 1 and hops >= 1");
        ensure!(self.tau > 0.0 && self.tau.is_finite(), Validation, "tau must be positive");
        ensure!(self.alpha.is_finite(), Validation, "alpha must be finite");
        Ok(())
    }
}

/// Values of a drawn latent code. `c_disc` is one-hot.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentCode<T> {
    pub c_disc: Vec<T>,
    pub c_cont: Vec<T>,
    pub p_disc: Vec<T>,
    pub mu: Vec<T>,
    pub sigma: Vec<T>,
    pub class: usize,
    pub log_prob: T,
}

/// Everything needed to replay one action exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionRecord<T> {
    pub latent_class: usize,
    pub latent_gumbel: Vec<T>,
    pub latent_offset: Vec<T>,
    pub latent_normal: Vec<T>,
    pub c_cont: Vec<T>,
    pub z: Vec<T>,
    pub feature_noise: Vec<T>,
    /// Selected coordinates in draw order (discrete features only).
    pub feature_order: Vec<usize>,
    pub feature_offset: Vec<T>,
    pub x_inj: Vec<T>,
    pub endpoint: usize,
    pub candidates: Vec<usize>,
}

impl<T: Scalar> ActionRecord<T> {
    pub fn c_values(&self) -> (usize, &[T]) {
        (self.latent_class, &self.c_cont)
    }
}

pub enum Draw<'a, T> {
    Sample(&'a mut ChaCha8Rng),
    /// Zero noise and argmax choices.
    Greedy,
    Replay(&'a ActionRecord<T>),
}

/// Tape handles produced by one policy evaluation.
#[derive(Debug, Clone)]
pub struct PolicyStep<T> {
    pub h: Var,
    pub h_norm: Var,
    pub c_disc: Var,
    pub c_cont: Var,
    /// Injected feature row carrying the straight-through or
    /// reparameterised gradient; its value equals the action's features.
    pub x: Var,
    pub log_prob: Var,
    pub log_prob_latent: Var,
    pub log_prob_features: Var,
    pub log_prob_endpoint: Var,
    pub edge_probs: Vec<T>,
    pub latent: LatentCode<T>,
    pub record: ActionRecord<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generator<T> {
    pub params: ParamBlock<T>,
    pub cfg: GeneratorConfig,
    state_enc: GcnStack,
    edge_enc: GcnStack,
    latent: Mlp,
    node: Mlp,
    edge: Mlp,
    dim: usize,
    c_lat: usize,
    space: FeatureSpace,
    k_ones: usize,
}

fn normal_row<T: Scalar>(n: usize, rng: &mut ChaCha8Rng) -> Vec<T> {
    (0..n).map(|_| T::of(rng.sample::<f64, _>(StandardNormal))).collect()
}

fn row<T: Scalar>(xs: &[T]) -> Array2<T> {
    Array2::from_shape_vec((1, xs.len()), xs.to_vec()).expect("1 x n")
}

fn one_hot<T: Scalar>(n: usize, k: usize) -> Vec<T> {
    (0..n).map(|i| if i == k { T::one() } else { T::zero() }).collect()
}

/// `Σ log N(x_i; μ_i, σ_i²)` for a constant `x`.
fn gaussian_log_prob<T: Scalar>(tape: &mut Tape<T>, mu: Var, sigma: Var, x: &[T]) -> Var {
    let neg_mu = tape.scale(mu, -T::one());
    let diff = tape.offset(neg_mu, &row(x));
    let inv = tape.recip(sigma);
    let r = tape.mul(diff, inv);
    let sq = tape.square(r);
    let quad = tape.sum(sq);
    let quad = tape.scale(quad, T::of(-0.5));
    let ln_s = tape.ln(sigma);
    let ln_s = tape.sum(ln_s);
    let lp = tape.sub(quad, ln_s);
    let c = T::of(-0.5 * (2.0 * std::f64::consts::PI).ln() * x.len() as f64);
    tape.add_const(lp, c)
}

/// Plackett-Luce log-probability of drawing `order` without replacement.
fn plackett_luce<T: Scalar>(tape: &mut Tape<T>, logits: Var, order: &[usize]) -> Var {
    let d = tape.shape(logits).1;
    let mut remaining: Vec<usize> = (0..d).collect();
    let mut total = tape.scalar(T::zero());
    for &i in order {
        let pick = tape.cols(logits, &[i]);
        let rest = tape.cols(logits, &remaining);
        let lse = tape.log_sum_exp_rows(rest);
        let term = tape.sub(pick, lse);
        total = tape.add(total, term);
        remaining.retain(|&j| j != i);
    }
    total
}

/// Softmax over candidate scores after adding `alpha` to neighbours.
pub fn edge_probabilities<T: Scalar>(scores: &[T], neighbor: &[bool], alpha: T) -> Result<Vec<T>> {
    ensure!(!scores.is_empty(), Validation, "empty candidate set");
    ensure!(scores.len() == neighbor.len(), Shape, "{} scores, {} flags", scores.len(), neighbor.len());
    let s: Vec<T> = scores
        .iter()
        .zip(neighbor)
        .map(|(&s, &n)| if n { s + alpha } else { s })
        .collect();
    Ok(softmax(&s))
}

/// L2 normalisation of a state vector.
pub fn normalize<T: Scalar>(h: &[T]) -> Vec<T> {
    let eps = T::of(NORM_EPS);
    let norm = (h.iter().map(|&x| x * x).sum::<T>() + eps * eps).sqrt();
    h.iter().map(|&x| x / norm).collect()
}

/// Median number of ones per clean feature row (at least one).
pub fn median_row_sum<T: Scalar>(g: &Graph<T>) -> usize {
    let mut sums: Vec<usize> = g
        .base_features()
        .rows()
        .into_iter()
        .map(|r| r.iter().filter(|&&x| x != T::zero()).count())
        .collect();
    if sums.is_empty() {
        return 1;
    }
    sums.sort_unstable();
    sums[(sums.len() - 1) / 2].clamp(1, g.dim())
}

impl<T: Scalar> Generator<T> {
    pub fn new(cfg: GeneratorConfig, dim: usize, c_lat: usize, space: FeatureSpace, k_ones: usize, seed: u64) -> Result<Self> {
        cfg.validate()?;
        ensure!(dim >= 1 && c_lat >= 1, Validation, "feature dim and latent classes must be positive");
        ensure!(
            space == FeatureSpace::Continuous || (1..=dim).contains(&k_ones),
            Validation,
            "discrete generator needs 1 <= k <= {dim}, got {k_ones}"
        );
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamBlock::new(seed);
        let h = cfg.hidden;
        let mut gcn_dims = vec![dim];
        gcn_dims.extend(std::iter::repeat_n(h, cfg.hops));
        let state_enc = GcnStack::new(&mut params, "state", &gcn_dims, true, &mut rng);
        let edge_enc = GcnStack::new(&mut params, "edge_enc", &gcn_dims, true, &mut rng);
        let m = cfg.cont_latent;
        let latent = Mlp::new(&mut params, "latent", &[3 * h, h, c_lat + 2 * m], Activation::Relu, &mut rng);
        let out = match space {
            FeatureSpace::Discrete => dim,
            FeatureSpace::Continuous => 2 * dim,
        };
        let node = Mlp::new(&mut params, "node", &[3 * h + c_lat + m + cfg.z_dim, h, out], Activation::Relu, &mut rng);
        let edge = Mlp::new(&mut params, "edge", &[2 * h + dim, h, 1], Activation::Relu, &mut rng);
        Ok(Self {
            params,
            cfg,
            state_enc,
            edge_enc,
            latent,
            node,
            edge,
            dim,
            c_lat,
            space,
            k_ones,
        })
    }

    /// Builds a generator shaped for `g`: latent classes equal the label
    /// count and `k` is the clean median row sum.
    pub fn for_graph(cfg: GeneratorConfig, g: &Graph<T>, seed: u64) -> Result<Self> {
        Self::new(cfg, g.dim(), g.num_classes(), g.feature_space(), median_row_sum(g), seed)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn latent_classes(&self) -> usize {
        self.c_lat
    }

    pub fn k_ones(&self) -> usize {
        self.k_ones
    }

    pub fn feature_space(&self) -> FeatureSpace {
        self.space
    }

    pub fn state_dim(&self) -> usize {
        3 * self.cfg.hidden
    }

    /// Sum, max and centre readouts of the state encoder, as `1 × 3h`.
    pub fn encode_state_var(&self, tape: &mut Tape<T>, p: &Bound, a_hat: &Arc<CsrMatrix<T>>, x: &NodeInput<T>, center: usize) -> Var {
        let hk = self.state_enc.forward(tape, p, a_hat, x);
        let sum = tape.sum_rows(hk);
        let max = tape.max_rows(hk);
        let c = tape.rows(hk, &[center]);
        tape.hcat(&[sum, max, c])
    }

    pub fn encode_state(&self, sub: &SubgraphView<T>) -> Vec<T> {
        let mut tape = Tape::new();
        let p = self.params.bind(&mut tape);
        let a_hat = Arc::new(sub.normalized_adjacency());
        let x = NodeInput::constant(sub.features.clone());
        let h = self.encode_state_var(&mut tape, &p, &a_hat, &x, sub.center);
        tape.value(h).iter().copied().collect()
    }

    /// One policy evaluation at state `(g, target)`.
    pub fn forward(&self, tape: &mut Tape<T>, p: &Bound, g: &Graph<T>, target: usize, mut draw: Draw<'_, T>) -> Result<PolicyStep<T>> {
        let sub = g.k_hop_subgraph(target, self.cfg.hops)?;
        ensure!(
            g.dim() == self.dim,
            Shape,
            "generator built for {} features, graph has {}",
            self.dim,
            g.dim()
        );
        let a_hat = Arc::new(sub.normalized_adjacency());
        let x_in = NodeInput::constant(sub.features.clone());
        let h = self.encode_state_var(tape, p, &a_hat, &x_in, sub.center);
        let h_norm = tape.l2_normalize(h, T::of(NORM_EPS));
        let tau = T::of(self.cfg.tau);
        let (c, m) = (self.c_lat, self.cfg.cont_latent);

        // Latent code.
        let lat = self.latent.forward(tape, p, h_norm);
        let logits = tape.col_range(lat, 0, c);
        let mu = tape.col_range(lat, c, c + m);
        let s_raw = tape.col_range(lat, c + m, c + 2 * m);
        let sp = tape.softplus(s_raw);
        let sigma = tape.add_const(sp, T::of(SIGMA_FLOOR));
        let log_p_disc = tape.log_softmax_rows(logits);
        let logit_vals: Vec<T> = tape.value(logits).iter().copied().collect();
        let (latent_gumbel, class) = match &mut draw {
            Draw::Sample(rng) => {
                let g: Vec<T> = sample_gumbel(c, *rng);
                let pert: Vec<T> = logit_vals.iter().zip(&g).map(|(&l, &n)| l + n).collect();
                let k = argmax(&pert);
                (g, k)
            }
            Draw::Greedy => (vec![T::zero(); c], argmax(&logit_vals)),
            Draw::Replay(r) => {
                ensure!(r.latent_class < c, Validation, "recorded latent class out of range");
                (r.latent_gumbel.clone(), r.latent_class)
            }
        };
        let pert = tape.offset(logits, &row(&latent_gumbel));
        let scaled = tape.scale(pert, T::one() / tau);
        let ls = tape.log_softmax_rows(scaled);
        let soft = tape.exp(ls);
        let latent_offset = match &draw {
            Draw::Replay(r) => r.latent_offset.clone(),
            _ => one_hot::<T>(c, class).iter().zip(tape.value(soft).iter()).map(|(&h, &s)| h - s).collect(),
        };
        let c_disc = tape.offset(soft, &row(&latent_offset));
        let latent_normal = match &mut draw {
            Draw::Sample(rng) => normal_row(m, rng),
            Draw::Greedy => vec![T::zero(); m],
            Draw::Replay(r) => r.latent_normal.clone(),
        };
        let eps_leaf = tape.row(&latent_normal);
        let noise = tape.mul(sigma, eps_leaf);
        let c_cont = tape.add(mu, noise);
        let c_cont_vals: Vec<T> = match &draw {
            Draw::Replay(r) => r.c_cont.clone(),
            _ => tape.value(c_cont).iter().copied().collect(),
        };
        let lp_class = tape.cols(log_p_disc, &[class]);
        let lp_cont = gaussian_log_prob(tape, mu, sigma, &c_cont_vals);
        let log_prob_latent = tape.add(lp_class, lp_cont);
        let latent = LatentCode {
            c_disc: one_hot(c, class),
            c_cont: c_cont_vals.clone(),
            p_disc: tape.value(log_p_disc).iter().map(|x| x.exp()).collect(),
            mu: tape.value(mu).iter().copied().collect(),
            sigma: tape.value(sigma).iter().copied().collect(),
            class,
            log_prob: tape.scalar_value(log_prob_latent),
        };

        // Injected features.
        let z = match &mut draw {
            Draw::Sample(rng) => normal_row(self.cfg.z_dim, rng),
            Draw::Greedy => vec![T::zero(); self.cfg.z_dim],
            Draw::Replay(r) => r.z.clone(),
        };
        let zv = tape.row(&z);
        let input = tape.hcat(&[h_norm, c_disc, c_cont, zv]);
        let out = self.node.forward(tape, p, input);
        let d = self.dim;
        let (x, x_hard, log_prob_features, feature_noise, feature_order, feature_offset) = match self.space {
            FeatureSpace::Discrete => {
                let l_vals: Vec<T> = tape.value(out).iter().copied().collect();
                let noise = match &mut draw {
                    Draw::Sample(rng) => sample_gumbel(d, *rng),
                    Draw::Greedy => vec![T::zero(); d],
                    Draw::Replay(r) => r.feature_noise.clone(),
                };
                let order = match &draw {
                    Draw::Replay(r) => r.feature_order.clone(),
                    _ => gumbel_top_k(&l_vals, &noise, self.k_ones),
                };
                let mut hard = vec![T::zero(); d];
                for &i in &order {
                    ensure!(i < d, Validation, "recorded feature index out of range");
                    hard[i] = T::one();
                }
                let pert = tape.offset(out, &row(&noise));
                let scaled = tape.scale(pert, T::one() / tau);
                let ls = tape.log_softmax_rows(scaled);
                let soft = tape.exp(ls);
                let soft = tape.scale(soft, T::of(self.k_ones as f64));
                let offset = match &draw {
                    Draw::Replay(r) => r.feature_offset.clone(),
                    _ => hard.iter().zip(tape.value(soft).iter()).map(|(&h, &s)| h - s).collect(),
                };
                let x = tape.offset(soft, &row(&offset));
                let lp = plackett_luce(tape, out, &order);
                (x, hard, lp, noise, order, offset)
            }
            FeatureSpace::Continuous => {
                let mu_x = tape.col_range(out, 0, d);
                let s_raw = tape.col_range(out, d, 2 * d);
                let sp = tape.softplus(s_raw);
                let sig = tape.add_const(sp, T::of(SIGMA_FLOOR));
                let noise = match &mut draw {
                    Draw::Sample(rng) => normal_row(d, rng),
                    Draw::Greedy => vec![T::zero(); d],
                    Draw::Replay(r) => r.feature_noise.clone(),
                };
                let e = tape.row(&noise);
                let se = tape.mul(sig, e);
                let x = tape.add(mu_x, se);
                let x_val: Vec<T> = match &draw {
                    Draw::Replay(r) => r.x_inj.clone(),
                    _ => tape.value(x).iter().copied().collect(),
                };
                let lp = gaussian_log_prob(tape, mu_x, sig, &x_val);
                (x, x_val, lp, noise, Vec::new(), Vec::new())
            }
        };

        // Endpoint.
        let e = self.edge_enc.forward(tape, p, &a_hat, &x_in);
        let hd = self.cfg.hidden;
        let first = &self.edge.layers[0];
        let w = p.var(first.w);
        let wa_idx: Vec<usize> = (0..hd).collect();
        let wb_idx: Vec<usize> = (hd..2 * hd).collect();
        let wx_idx: Vec<usize> = (2 * hd..2 * hd + d).collect();
        let wa = tape.rows(w, &wa_idx);
        let wb = tape.rows(w, &wb_idx);
        let wx = tape.rows(w, &wx_idx);
        let ea = tape.matmul(e, wa);
        let ec = tape.rows(e, &[sub.center]);
        let ecb = tape.matmul(ec, wb);
        let xl = tape.row(&x_hard);
        let xw = tape.matmul(xl, wx);
        let shared = tape.add(ecb, xw);
        let shared = first.add_bias(tape, p, shared);
        let pre = tape.add_row(ea, shared);
        let scores = self.edge.forward_from_first(tape, p, pre);
        let scores = tape.transpose(scores);
        let n = sub.len();
        let mut bonus = Array2::zeros((1, n));
        for &j in &sub.adj[sub.center] {
            bonus[[0, j]] = T::of(self.cfg.alpha);
        }
        let scores = tape.offset(scores, &bonus);
        let log_p_edge = tape.log_softmax_rows(scores);
        let s_vals: Vec<T> = tape.value(scores).iter().copied().collect();
        let local = match &mut draw {
            Draw::Sample(rng) => {
                let g: Vec<T> = sample_gumbel(n, *rng);
                let pert: Vec<T> = s_vals.iter().zip(&g).map(|(&s, &n)| s + n).collect();
                argmax(&pert)
            }
            Draw::Greedy => argmax(&s_vals),
            Draw::Replay(r) => sub
                .local_index(r.endpoint)
                .ok_or_else(|| Error::Validation(format!("recorded endpoint {} is not a candidate", r.endpoint)))?,
        };
        let log_prob_endpoint = tape.cols(log_p_edge, &[local]);
        let edge_probs = tape.value(log_p_edge).iter().map(|x| x.exp()).collect();

        let lp = tape.add(log_prob_latent, log_prob_features);
        let log_prob = tape.add(lp, log_prob_endpoint);
        let record = ActionRecord {
            latent_class: class,
            latent_gumbel,
            latent_offset,
            latent_normal,
            c_cont: c_cont_vals,
            z,
            feature_noise,
            feature_order,
            feature_offset,
            x_inj: x_hard,
            endpoint: sub.node_ids[local],
            candidates: sub.node_ids.clone(),
        };
        Ok(PolicyStep {
            h,
            h_norm,
            c_disc,
            c_cont,
            x,
            log_prob,
            log_prob_latent,
            log_prob_features,
            log_prob_endpoint,
            edge_probs,
            latent,
            record,
        })
    }

    /// Draws an action without keeping the tape. Returns the record, the
    /// normalised state used by the critic and the action log-probability.
    pub fn act(&self, g: &Graph<T>, target: usize, draw: Draw<'_, T>) -> Result<(ActionRecord<T>, Vec<T>, T)> {
        let mut tape = Tape::new();
        let p = self.params.bind(&mut tape);
        let step = self.forward(&mut tape, &p, g, target, draw)?;
        let h = tape.value(step.h_norm).iter().copied().collect();
        let lp = tape.scalar_value(step.log_prob);
        ensure!(lp.is_finite(), NonFinite, "action log-probability is {lp}");
        Ok((step.record, h, lp))
    }
}
