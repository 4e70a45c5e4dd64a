//! Local feature alignment: per-target reference sets and entropic
//! transport losses between an injected feature and that reference cloud.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::graph::Graph;
use crate::nn::{Tape, Var};
use crate::scalar::{argmax, log_sum_exp, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StealthConfig {
    pub hops: usize,
    pub samples: usize,
    pub epsilon: f64,
}

impl Default for StealthConfig {
    fn default() -> Self {
        Self {
            hops: 2,
            samples: 32,
            epsilon: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSet<T> {
    /// One reference feature per row, ordered like `sources`.
    pub features: Array2<T>,
    /// Benign source nodes, highest degree first (ties by ascending id).
    pub sources: Vec<usize>,
    pub target: usize,
    pub hops: usize,
    /// Set when the ball held no benign node and the graph-wide top
    /// degrees were used instead.
    pub fallback: bool,
}

impl<T: Scalar> ReferenceSet<T> {
    pub fn len(&self) -> usize {
        self.sources.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sources.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan<T>(pub Vec<T>);

fn top_by_degree<T: Scalar>(g: &Graph<T>, mut nodes: Vec<usize>, n: usize) -> Vec<usize> {
    nodes.sort_by(|&a, &b| g.degree(b).cmp(&g.degree(a)).then(a.cmp(&b)));
    nodes.truncate(n);
    nodes
}

pub fn build_reference_set<T: Scalar>(g: &Graph<T>, target: usize, hops: usize, n: usize) -> Result<ReferenceSet<T>> {
    ensure!(n >= 1, Validation, "reference set needs at least one sample");
    let ball: Vec<usize> = g
        .ball(target, hops)?
        .into_iter()
        .map(|(v, _)| v)
        .filter(|&v| !g.is_injected(v))
        .collect();
    let fallback = ball.is_empty();
    let sources = if fallback {
        log::warn!("no benign node within {hops} hops of {target}; using graph-wide high-degree nodes");
        top_by_degree(g, (0..g.num_original()).collect(), n)
    } else {
        top_by_degree(g, ball, n)
    };
    ensure!(!sources.is_empty(), Validation, "graph has no benign nodes");
    let mut features = Array2::zeros((sources.len(), g.dim()));
    for (mut row, &v) in features.rows_mut().into_iter().zip(&sources) {
        for (o, &x) in row.iter_mut().zip(g.feature_row(v)) {
            *o = x;
        }
    }
    Ok(ReferenceSet {
        features,
        sources,
        target,
        hops,
        fallback,
    })
}

/// Squared Euclidean distance from `x` to every reference row.
pub fn squared_costs<T: Scalar>(x: &[T], refs: &Array2<T>) -> Result<Vec<T>> {
    ensure!(
        x.len() == refs.ncols(),
        Shape,
        "feature of length {} against references of width {}",
        x.len(),
        refs.ncols()
    );
    Ok(refs
        .rows()
        .into_iter()
        .map(|r| r.iter().zip(x).map(|(&a, &b)| (b - a) * (b - a)).sum())
        .collect())
}

/// Entropic softmin of the costs and the matching Gibbs plan. `epsilon = 0`
/// gives the exact minimum with all mass on the first minimiser.
pub fn softmin<T: Scalar>(costs: &[T], epsilon: T) -> Result<(T, TransportPlan<T>)> {
    ensure!(!costs.is_empty(), Validation, "empty reference set");
    ensure!(epsilon >= T::zero(), Validation, "epsilon must be nonnegative, got {epsilon}");
    if epsilon == T::zero() {
        let neg: Vec<T> = costs.iter().map(|&c| -c).collect();
        let j = argmax(&neg);
        let plan = (0..costs.len()).map(|i| if i == j { T::one() } else { T::zero() }).collect();
        return Ok((costs[j], TransportPlan(plan)));
    }
    let scaled: Vec<T> = costs.iter().map(|&c| -c / epsilon).collect();
    let lse = log_sum_exp(&scaled);
    let plan = scaled.iter().map(|&s| (s - lse).exp()).collect();
    Ok((-epsilon * lse, TransportPlan(plan)))
}

pub fn ot_loss_single<T: Scalar>(x: &[T], refs: &ReferenceSet<T>, epsilon: T) -> Result<(T, TransportPlan<T>)> {
    ensure!(!refs.is_empty(), Validation, "empty reference set");
    softmin(&squared_costs(x, &refs.features)?, epsilon)
}

/// Differentiable version of [`ot_loss_single`] for a `1 × d` variable.
pub fn ot_loss_var<T: Scalar>(tape: &mut Tape<T>, x: Var, refs: &Array2<T>, epsilon: T) -> Result<Var> {
    ensure!(refs.nrows() > 0, Validation, "empty reference set");
    ensure!(epsilon >= T::zero(), Validation, "epsilon must be nonnegative, got {epsilon}");
    ensure!(
        tape.shape(x) == (1, refs.ncols()),
        Shape,
        "feature {:?} against references of width {}",
        tape.shape(x),
        refs.ncols()
    );
    let neg = tape.leaf(refs.mapv(|v| -v));
    let diff = tape.add_row(neg, x);
    let sq = tape.square(diff);
    let costs_col = tape.sum_cols(sq);
    let costs = tape.transpose(costs_col);
    if epsilon == T::zero() {
        let vals: Vec<T> = tape.value(costs).iter().map(|&c| -c).collect();
        return Ok(tape.cols(costs, &[argmax(&vals)]));
    }
    let scaled = tape.scale(costs, -T::one() / epsilon);
    let lse = tape.log_sum_exp_rows(scaled);
    Ok(tape.scale(lse, -epsilon))
}

pub fn ot_loss_total<T: Scalar>(per_step: &[T]) -> Result<T> {
    ensure!(!per_step.is_empty(), Validation, "no per-step transport losses");
    Ok(per_step.iter().copied().sum::<T>() / T::of(per_step.len() as f64))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SinkhornResult<T> {
    pub cost: T,
    pub plan: Array2<T>,
    pub iterations: usize,
    pub residual: T,
}

/// Log-domain Sinkhorn iterations for entropic transport between two
/// discrete measures. Convergence is measured as the L1 violation of the
/// source marginal after each target-side update.
///
/// The regularisation is annealed from the cost range down to `epsilon`,
/// halving per stage and warm-starting the potentials; intermediate stages
/// stop at `max(tol, 1e-3)`. `max_iter` bounds the total over all stages.
pub fn sinkhorn_bimarginal<T: Scalar>(
    a: &[T],
    b: &[T],
    cost: &Array2<T>,
    epsilon: T,
    max_iter: usize,
    tol: T,
) -> Result<SinkhornResult<T>> {
    ensure!(epsilon > T::zero(), Validation, "epsilon must be positive, got {epsilon}");
    ensure!(
        cost.dim() == (a.len(), b.len()),
        Shape,
        "cost {:?} for marginals of length {} and {}",
        cost.dim(),
        a.len(),
        b.len()
    );
    for w in [a, b] {
        ensure!(!w.is_empty(), Validation, "empty marginal");
        ensure!(w.iter().all(|&x| x >= T::zero()), Validation, "negative marginal weight");
        let s: T = w.iter().copied().sum();
        ensure!((s - T::one()).abs() <= T::of(1e-9), Validation, "marginal sums to {s}, expected 1");
    }
    let (n, m) = cost.dim();
    let log_a: Vec<T> = a.iter().map(|&x| x.ln()).collect();
    let log_b: Vec<T> = b.iter().map(|&x| x.ln()).collect();
    let mut f = vec![T::zero(); n];
    let mut g = vec![T::zero(); m];
    let mut buf = Vec::with_capacity(n.max(m));
    let log_plan = |f: &[T], g: &[T], i: usize, j: usize, eps: T| (f[i] + g[j] - cost[[i, j]]) / eps;
    let spread = cost.iter().fold(T::zero(), |m, &c| m.max(c)) - cost.iter().fold(T::infinity(), |m, &c| m.min(c));
    let mut stages = vec![epsilon];
    while stages[stages.len() - 1] < spread {
        let e = stages[stages.len() - 1] + stages[stages.len() - 1];
        stages.push(e);
    }
    stages.reverse();
    let loose = tol.max(T::of(1e-3));
    let mut residual = T::infinity();
    let mut it = 0;
    for (k, &eps) in stages.iter().enumerate() {
        let last = k + 1 == stages.len();
        let stage_tol = if last { tol } else { loose };
        loop {
            if it == max_iter {
                break;
            }
            it += 1;
            for i in 0..n {
                buf.clear();
                buf.extend((0..m).map(|j| (g[j] - cost[[i, j]]) / eps));
                f[i] = eps * (log_a[i] - log_sum_exp(&buf));
            }
            for j in 0..m {
                buf.clear();
                buf.extend((0..n).map(|i| (f[i] - cost[[i, j]]) / eps));
                g[j] = eps * (log_b[j] - log_sum_exp(&buf));
            }
            residual = (0..n)
                .map(|i| ((0..m).map(|j| log_plan(&f, &g, i, j, eps).exp()).sum::<T>() - a[i]).abs())
                .sum();
            if residual < stage_tol {
                break;
            }
        }
        if last && residual < tol {
            let plan = Array2::from_shape_fn((n, m), |(i, j)| log_plan(&f, &g, i, j, epsilon).exp());
            let cost = (&plan * cost).sum();
            return Ok(SinkhornResult {
                cost,
                plan,
                iterations: it,
                residual,
            });
        }
    }
    Err(Error::NotConverged {
        iters: max_iter,
        residual: residual.as_f64(),
    })
}
