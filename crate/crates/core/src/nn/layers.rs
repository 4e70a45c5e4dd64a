//! GCN, GIN and MLP blocks. Each block records the [`ParamId`]s it owns
//! inside a shared [`ParamBlock`] and runs its forward pass on a [`Tape`].

use std::sync::Arc;

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::params::{Bound, ParamBlock, ParamId};
use super::tape::{Tape, Var};
use crate::error::{ensure, Result};
use crate::scalar::Scalar;
use crate::sparse::CsrMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    fn apply<T: Scalar>(self, tape: &mut Tape<T>, x: Var) -> Var {
        match self {
            Activation::Relu => tape.relu(x),
            Activation::Identity => x,
        }
    }
}

/// Node features as seen by the first layer of a graph network: a constant
/// sparse block plus optional variable rows written over chosen positions.
/// The constant block must hold zeros in the overridden rows.
#[derive(Debug, Clone)]
pub enum NodeInput<T> {
    Dense(Var),
    Sparse {
        constant: Arc<CsrMatrix<T>>,
        overrides: Vec<(usize, Var)>,
    },
}

impl<T: Scalar> NodeInput<T> {
    pub fn constant(m: CsrMatrix<T>) -> Self {
        NodeInput::Sparse {
            constant: Arc::new(m),
            overrides: Vec::new(),
        }
    }

    pub fn rows(&self, tape: &Tape<T>) -> usize {
        match self {
            NodeInput::Dense(v) => tape.shape(*v).0,
            NodeInput::Sparse { constant, .. } => constant.rows(),
        }
    }

    pub fn cols(&self, tape: &Tape<T>) -> usize {
        match self {
            NodeInput::Dense(v) => tape.shape(*v).1,
            NodeInput::Sparse { constant, .. } => constant.cols(),
        }
    }

    /// `X · W` without densifying the constant block.
    pub fn project(&self, tape: &mut Tape<T>, w: Var) -> Var {
        match self {
            NodeInput::Dense(x) => tape.matmul(*x, w),
            NodeInput::Sparse {
                constant,
                overrides,
            } => {
                let mut out = tape.spmm(constant.clone(), w);
                for &(row, x) in overrides {
                    let xw = tape.matmul(x, w);
                    let scatter = Arc::new(
                        CsrMatrix::from_rows(
                            1,
                            (0..constant.rows())
                                .map(|r| if r == row { vec![(0, T::one())] } else { vec![] })
                                .collect(),
                        )
                        .expect("single column"),
                    );
                    let placed = tape.spmm(scatter, xw);
                    out = tape.add(out, placed);
                }
                out
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Linear {
    pub w: ParamId,
    pub b: Option<ParamId>,
}

impl Linear {
    pub fn new<T: Scalar>(
        block: &mut ParamBlock<T>,
        name: &str,
        fan_in: usize,
        fan_out: usize,
        bias: bool,
        rng: &mut impl Rng,
    ) -> Self {
        let w = block.glorot(&format!("{name}.w"), fan_in, fan_out, rng);
        let b = bias.then(|| block.zeros(&format!("{name}.b"), 1, fan_out));
        Self { w, b }
    }

    pub fn forward<T: Scalar>(&self, tape: &mut Tape<T>, p: &Bound, x: Var) -> Var {
        let y = tape.matmul(x, p.var(self.w));
        self.add_bias(tape, p, y)
    }

    pub fn add_bias<T: Scalar>(&self, tape: &mut Tape<T>, p: &Bound, y: Var) -> Var {
        match self.b {
            Some(b) => tape.add_row(y, p.var(b)),
            None => y,
        }
    }

    pub fn fan_in<T: Scalar>(&self, block: &ParamBlock<T>) -> usize {
        block.get(self.w).nrows()
    }

    pub fn fan_out<T: Scalar>(&self, block: &ParamBlock<T>) -> usize {
        block.get(self.w).ncols()
    }
}

/// Affine layers with an activation between them; the last layer is linear.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mlp {
    pub layers: Vec<Linear>,
    pub activation: Activation,
}

impl Mlp {
    pub fn new<T: Scalar>(
        block: &mut ParamBlock<T>,
        name: &str,
        dims: &[usize],
        activation: Activation,
        rng: &mut impl Rng,
    ) -> Self {
        assert!(dims.len() >= 2, "an MLP needs input and output widths");
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| Linear::new(block, &format!("{name}.{i}"), w[0], w[1], true, rng))
            .collect();
        Self { layers, activation }
    }

    pub fn forward<T: Scalar>(&self, tape: &mut Tape<T>, p: &Bound, x: Var) -> Var {
        let first = self.layers[0].forward(tape, p, x);
        self.forward_from_first(tape, p, first)
    }

    /// Continues the stack given the output of the first affine layer.
    /// Lets callers compute the first product in a cheaper factored form.
    pub fn forward_from_first<T: Scalar>(&self, tape: &mut Tape<T>, p: &Bound, first: Var) -> Var {
        let mut h = first;
        for layer in &self.layers[1..] {
            h = self.activation.apply(tape, h);
            h = layer.forward(tape, p, h);
        }
        h
    }

    pub fn in_dim<T: Scalar>(&self, block: &ParamBlock<T>) -> usize {
        self.layers[0].fan_in(block)
    }

    pub fn out_dim<T: Scalar>(&self, block: &ParamBlock<T>) -> usize {
        self.layers.last().expect("nonempty").fan_out(block)
    }
}

/// Stack of graph convolution layers `H' = ReLU(Â H W + b)`; the final
/// layer skips the ReLU.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GcnStack {
    pub layers: Vec<Linear>,
}

impl GcnStack {
    pub fn new<T: Scalar>(
        block: &mut ParamBlock<T>,
        name: &str,
        dims: &[usize],
        bias: bool,
        rng: &mut impl Rng,
    ) -> Self {
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| Linear::new(block, &format!("{name}.{i}"), w[0], w[1], bias, rng))
            .collect();
        Self { layers }
    }

    pub fn forward<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        p: &Bound,
        a_hat: &Arc<CsrMatrix<T>>,
        x: &NodeInput<T>,
    ) -> Var {
        let mut h = None;
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let xw = match h {
                None => x.project(tape, p.var(layer.w)),
                Some(prev) => tape.matmul(prev, p.var(layer.w)),
            };
            let agg = tape.spmm(a_hat.clone(), xw);
            let mut out = layer.add_bias(tape, p, agg);
            if i < last {
                out = tape.relu(out);
            }
            h = Some(out);
        }
        h.expect("at least one layer")
    }
}

/// `H' = MLP((1 + ε)·H + A·H)` with a trainable `ε` initialised to zero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GinLayer {
    pub mlp: Mlp,
    pub eps: ParamId,
}

impl GinLayer {
    pub fn new<T: Scalar>(
        block: &mut ParamBlock<T>,
        name: &str,
        in_dim: usize,
        hidden: usize,
        out_dim: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let mlp = Mlp::new(block, &format!("{name}.mlp"), &[in_dim, hidden, out_dim], Activation::Relu, rng);
        let eps = block.zeros(&format!("{name}.eps"), 1, 1);
        Self { mlp, eps }
    }

    /// The first affine map is applied before aggregation; both are linear
    /// so `((1+ε)H + AH)W = (1+ε)HW + A(HW)`.
    pub fn forward<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        p: &Bound,
        adj: &Arc<CsrMatrix<T>>,
        x: &NodeInput<T>,
    ) -> Var {
        let first = &self.mlp.layers[0];
        let hw = x.project(tape, p.var(first.w));
        let one_eps = tape.add_const(p.var(self.eps), T::one());
        let own = tape.mul_scalar(hw, one_eps);
        let nbr = tape.spmm(adj.clone(), hw);
        let z = tape.add(own, nbr);
        let z = first.add_bias(tape, p, z);
        self.mlp.forward_from_first(tape, p, z)
    }
}

/// One graph convolution `Â H W` (with ReLU unless `last`).
pub fn gcl_forward<T: Scalar>(a_hat: &CsrMatrix<T>, h: &Array2<T>, w: &Array2<T>, last: bool) -> Result<Array2<T>> {
    ensure!(
        a_hat.cols() == h.nrows() && h.ncols() == w.nrows(),
        Shape,
        "Â {}x{}, H {:?}, W {:?}",
        a_hat.rows(),
        a_hat.cols(),
        h.dim(),
        w.dim()
    );
    let out = a_hat.matmul(h.dot(w).view())?;
    Ok(if last { out } else { out.mapv(|x| x.max(T::zero())) })
}

/// Evaluates one [`GinLayer`] on dense inputs.
pub fn gin_layer_forward<T: Scalar>(
    adj: &CsrMatrix<T>,
    h: &Array2<T>,
    layer: &GinLayer,
    params: &ParamBlock<T>,
) -> Result<Array2<T>> {
    ensure!(
        adj.rows() == h.nrows() && adj.cols() == h.nrows(),
        Shape,
        "adjacency {}x{} for {} nodes",
        adj.rows(),
        adj.cols(),
        h.nrows()
    );
    ensure!(
        layer.mlp.in_dim(params) == h.ncols(),
        Shape,
        "GIN expects width {}, got {}",
        layer.mlp.in_dim(params),
        h.ncols()
    );
    let mut tape = Tape::new();
    let p = params.bind(&mut tape);
    let x = tape.leaf(h.clone());
    let out = layer.forward(&mut tape, &p, &Arc::new(adj.clone()), &NodeInput::Dense(x));
    Ok(tape.value(out).clone())
}

/// Evaluates an [`Mlp`] on a single input vector.
pub fn mlp_forward<T: Scalar>(x: &[T], mlp: &Mlp, params: &ParamBlock<T>) -> Result<Vec<T>> {
    ensure!(
        mlp.in_dim(params) == x.len(),
        Shape,
        "MLP expects width {}, got {}",
        mlp.in_dim(params),
        x.len()
    );
    let mut tape = Tape::new();
    let p = params.bind(&mut tape);
    let xv = tape.row(x);
    let out = mlp.forward(&mut tape, &p, xv);
    Ok(tape.value(out).iter().copied().collect())
}
