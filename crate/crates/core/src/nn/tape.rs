//! Reverse-mode differentiation over a fixed set of matrix operations.
//!
//! Every value is a 2-D matrix; row vectors are `1 × n`, scalars `1 × 1`.
//! Only the operations the attack networks need are provided.

use std::sync::Arc;

use ndarray::{s, Array2, Axis, Zip};

use crate::scalar::Scalar;
use crate::sparse::CsrMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    SpMM(Arc<CsrMatrix<T>>, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    MulScalar(Var, Var),
    Scale(Var, T),
    Offset(Var),
    Relu(Var),
    Exp(Var),
    Ln(Var),
    Softplus(Var),
    Square(Var),
    Sqrt(Var),
    Recip(Var),
    SumAll(Var),
    SumRows(Var),
    MaxRows(Var, Vec<usize>),
    SumCols(Var),
    Rows(Var, Vec<usize>),
    Cols(Var, Vec<usize>),
    HCat(Vec<Var>),
    VCat(Vec<Var>),
    LogSoftmaxRows(Var),
    LogSumExpRows(Var),
    Transpose(Var),
}

pub struct Tape<T> {
    values: Vec<Array2<T>>,
    ops: Vec<Op<T>>,
    grads: Vec<Option<Array2<T>>>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self {
            values: Vec::new(),
            ops: Vec::new(),
            grads: Vec::new(),
        }
    }

    fn push(&mut self, value: Array2<T>, op: Op<T>) -> Var {
        self.values.push(value);
        self.ops.push(op);
        Var(self.values.len() - 1)
    }

    /// Leaf node. Parameters and inputs are both leaves; gradients are
    /// available for any leaf after [`Tape::backward`].
    pub fn leaf(&mut self, value: Array2<T>) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn row(&mut self, xs: &[T]) -> Var {
        self.leaf(Array2::from_shape_vec((1, xs.len()), xs.to_vec()).expect("1 x n"))
    }

    pub fn scalar(&mut self, x: T) -> Var {
        self.leaf(Array2::from_elem((1, 1), x))
    }

    pub fn value(&self, v: Var) -> &Array2<T> {
        &self.values[v.0]
    }

    pub fn scalar_value(&self, v: Var) -> T {
        self.values[v.0][[0, 0]]
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.values[v.0].dim()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let val = self.values[a.0].dot(&self.values[b.0]);
        self.push(val, Op::MatMul(a, b))
    }

    /// Constant sparse matrix times a variable.
    pub fn spmm(&mut self, m: Arc<CsrMatrix<T>>, b: Var) -> Var {
        let val = m.matmul(self.values[b.0].view()).expect("spmm shape");
        self.push(val, Op::SpMM(m, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let val = &self.values[a.0] + &self.values[b.0];
        self.push(val, Op::Add(a, b))
    }

    /// `a + 1·r` where `r` is `1 × m` and broadcast down the rows of `a`.
    pub fn add_row(&mut self, a: Var, r: Var) -> Var {
        assert_eq!(self.values[r.0].nrows(), 1, "add_row expects a row vector");
        let val = &self.values[a.0] + &self.values[r.0];
        self.push(val, Op::AddRow(a, r))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let val = &self.values[a.0] - &self.values[b.0];
        self.push(val, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let val = &self.values[a.0] * &self.values[b.0];
        self.push(val, Op::Mul(a, b))
    }

    /// `a · s` for a `1 × 1` variable `s`.
    pub fn mul_scalar(&mut self, a: Var, s: Var) -> Var {
        let k = self.scalar_value(s);
        let val = self.values[a.0].mapv(|x| x * k);
        self.push(val, Op::MulScalar(a, s))
    }

    pub fn scale(&mut self, a: Var, k: T) -> Var {
        let val = self.values[a.0].mapv(|x| x * k);
        self.push(val, Op::Scale(a, k))
    }

    /// `a + c` for a constant matrix `c` of the same shape. Used for the
    /// straight-through trick: `soft + (hard - soft_detached)`.
    pub fn offset(&mut self, a: Var, c: &Array2<T>) -> Var {
        let val = &self.values[a.0] + c;
        self.push(val, Op::Offset(a))
    }

    pub fn add_const(&mut self, a: Var, k: T) -> Var {
        let c = Array2::from_elem(self.shape(a), k);
        self.offset(a, &c)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let val = self.values[a.0].mapv(|x| x.max(T::zero()));
        self.push(val, Op::Relu(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let val = self.values[a.0].mapv(T::exp);
        self.push(val, Op::Exp(a))
    }

    pub fn ln(&mut self, a: Var) -> Var {
        let val = self.values[a.0].mapv(T::ln);
        self.push(val, Op::Ln(a))
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        let val = self.values[a.0].mapv(T::softplus);
        self.push(val, Op::Softplus(a))
    }

    pub fn square(&mut self, a: Var) -> Var {
        let val = self.values[a.0].mapv(|x| x * x);
        self.push(val, Op::Square(a))
    }

    pub fn sqrt(&mut self, a: Var) -> Var {
        let val = self.values[a.0].mapv(T::sqrt);
        self.push(val, Op::Sqrt(a))
    }

    pub fn recip(&mut self, a: Var) -> Var {
        let val = self.values[a.0].mapv(T::recip);
        self.push(val, Op::Recip(a))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let val = Array2::from_elem((1, 1), self.values[a.0].sum());
        self.push(val, Op::SumAll(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.values[a.0].len();
        let s = self.sum(a);
        self.scale(s, T::one() / T::of(n as f64))
    }

    /// Column sums (sum over rows) as `1 × m`.
    pub fn sum_rows(&mut self, a: Var) -> Var {
        let val = self.values[a.0].sum_axis(Axis(0)).insert_axis(Axis(0));
        self.push(val, Op::SumRows(a))
    }

    pub fn mean_rows(&mut self, a: Var) -> Var {
        let n = self.values[a.0].nrows();
        let s = self.sum_rows(a);
        self.scale(s, T::one() / T::of(n as f64))
    }

    /// Column-wise max over rows as `1 × m`; ties resolve to the first row.
    pub fn max_rows(&mut self, a: Var) -> Var {
        let m = &self.values[a.0];
        let mut arg = vec![0usize; m.ncols()];
        let mut val = Array2::zeros((1, m.ncols()));
        for (j, col) in m.columns().into_iter().enumerate() {
            let mut best = 0;
            for (i, &x) in col.iter().enumerate() {
                if x > col[best] {
                    best = i;
                }
            }
            arg[j] = best;
            val[[0, j]] = col[best];
        }
        self.push(val, Op::MaxRows(a, arg))
    }

    /// Row sums as `n × 1`.
    pub fn sum_cols(&mut self, a: Var) -> Var {
        let val = self.values[a.0].sum_axis(Axis(1)).insert_axis(Axis(1));
        self.push(val, Op::SumCols(a))
    }

    pub fn rows(&mut self, a: Var, idx: &[usize]) -> Var {
        let val = self.values[a.0].select(Axis(0), idx);
        self.push(val, Op::Rows(a, idx.to_vec()))
    }

    pub fn cols(&mut self, a: Var, idx: &[usize]) -> Var {
        let val = self.values[a.0].select(Axis(1), idx);
        self.push(val, Op::Cols(a, idx.to_vec()))
    }

    pub fn col_range(&mut self, a: Var, start: usize, end: usize) -> Var {
        let idx: Vec<usize> = (start..end).collect();
        self.cols(a, &idx)
    }

    pub fn hcat(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|p| self.values[p.0].view()).collect();
        let val = ndarray::concatenate(Axis(1), &views).expect("hcat: row counts differ");
        self.push(val, Op::HCat(parts.to_vec()))
    }

    pub fn vcat(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|p| self.values[p.0].view()).collect();
        let val = ndarray::concatenate(Axis(0), &views).expect("vcat: column counts differ");
        self.push(val, Op::VCat(parts.to_vec()))
    }

    pub fn log_softmax_rows(&mut self, a: Var) -> Var {
        let mut val = self.values[a.0].clone();
        for mut row in val.rows_mut() {
            let lse = crate::scalar::log_sum_exp(row.as_slice().expect("contiguous row"));
            row.mapv_inplace(|x| x - lse);
        }
        self.push(val, Op::LogSoftmaxRows(a))
    }

    /// `log Σ_j exp(a_ij)` per row, as `n × 1`.
    pub fn log_sum_exp_rows(&mut self, a: Var) -> Var {
        let m = &self.values[a.0];
        let mut val = Array2::zeros((m.nrows(), 1));
        for (i, row) in m.rows().into_iter().enumerate() {
            val[[i, 0]] = crate::scalar::log_sum_exp(&row.to_vec());
        }
        self.push(val, Op::LogSumExpRows(a))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let val = self.values[a.0].t().to_owned();
        self.push(val, Op::Transpose(a))
    }

    /// Row-wise L2 normalisation `x / sqrt(‖x‖² + eps²)` of a `1 × n` row.
    pub fn l2_normalize(&mut self, a: Var, eps: T) -> Var {
        let sq = self.square(a);
        let ss = self.sum(sq);
        let ss = self.add_const(ss, eps * eps);
        let norm = self.sqrt(ss);
        let inv = self.recip(norm);
        self.mul_scalar(a, inv)
    }

    /// Accumulates `d root / d v` for every node. `root` must be `1 × 1`.
    pub fn backward(&mut self, root: Var) {
        assert_eq!(self.shape(root), (1, 1), "backward expects a scalar root");
        let n = self.values.len();
        let mut grads: Vec<Option<Array2<T>>> = vec![None; n];
        grads[root.0] = Some(Array2::from_elem((1, 1), T::one()));
        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        self.grads = grads;
    }

    /// Gradient of the last backward root w.r.t. `v`, zeros if unreached.
    pub fn grad(&self, v: Var) -> Array2<T> {
        self.grads
            .get(v.0)
            .and_then(|g| g.clone())
            .unwrap_or_else(|| Array2::zeros(self.shape(v)))
    }

    fn propagate(&self, i: usize, g: &Array2<T>, grads: &mut [Option<Array2<T>>]) {
        fn acc<T: Scalar>(slot: &mut Option<Array2<T>>, d: Array2<T>) {
            match slot {
                Some(cur) => *cur += &d,
                None => *slot = Some(d),
            }
        }
        let vals = &self.values;
        let out = &vals[i];
        match &self.ops[i] {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let ga = g.dot(&vals[b.0].t());
                let gb = vals[a.0].t().dot(g);
                acc(&mut grads[a.0], ga);
                acc(&mut grads[b.0], gb);
            }
            Op::SpMM(m, b) => {
                acc(&mut grads[b.0], m.t_matmul(g.view()).expect("spmm grad shape"));
            }
            Op::Add(a, b) => {
                acc(&mut grads[a.0], g.clone());
                acc(&mut grads[b.0], g.clone());
            }
            Op::AddRow(a, r) => {
                acc(&mut grads[a.0], g.clone());
                acc(&mut grads[r.0], g.sum_axis(Axis(0)).insert_axis(Axis(0)));
            }
            Op::Sub(a, b) => {
                acc(&mut grads[a.0], g.clone());
                acc(&mut grads[b.0], g.mapv(|x| -x));
            }
            Op::Mul(a, b) => {
                acc(&mut grads[a.0], g * &vals[b.0]);
                acc(&mut grads[b.0], g * &vals[a.0]);
            }
            Op::MulScalar(a, s) => {
                let k = vals[s.0][[0, 0]];
                acc(&mut grads[a.0], g.mapv(|x| x * k));
                let gs = Zip::from(g).and(&vals[a.0]).fold(T::zero(), |acc, &x, &y| acc + x * y);
                acc(&mut grads[s.0], Array2::from_elem((1, 1), gs));
            }
            Op::Scale(a, k) => acc(&mut grads[a.0], g.mapv(|x| x * *k)),
            Op::Offset(a) => acc(&mut grads[a.0], g.clone()),
            Op::Relu(a) => {
                let d = Zip::from(g)
                    .and(&vals[a.0])
                    .map_collect(|&gx, &x| if x > T::zero() { gx } else { T::zero() });
                acc(&mut grads[a.0], d);
            }
            Op::Exp(a) => acc(&mut grads[a.0], g * out),
            Op::Ln(a) => acc(&mut grads[a.0], g / &vals[a.0]),
            Op::Softplus(a) => {
                let d = Zip::from(g).and(&vals[a.0]).map_collect(|&gx, &x| gx * x.sigmoid());
                acc(&mut grads[a.0], d);
            }
            Op::Square(a) => {
                let two = T::of(2.0);
                let d = Zip::from(g).and(&vals[a.0]).map_collect(|&gx, &x| gx * two * x);
                acc(&mut grads[a.0], d);
            }
            Op::Sqrt(a) => {
                let half = T::of(0.5);
                let d = Zip::from(g).and(out).map_collect(|&gx, &y| gx * half / y);
                acc(&mut grads[a.0], d);
            }
            Op::Recip(a) => {
                let d = Zip::from(g).and(out).map_collect(|&gx, &y| -gx * y * y);
                acc(&mut grads[a.0], d);
            }
            Op::SumAll(a) => {
                acc(&mut grads[a.0], Array2::from_elem(vals[a.0].dim(), g[[0, 0]]));
            }
            Op::SumRows(a) => {
                let d = g.broadcast(vals[a.0].dim()).expect("broadcast").to_owned();
                acc(&mut grads[a.0], d);
            }
            Op::MaxRows(a, arg) => {
                let mut d = Array2::zeros(vals[a.0].dim());
                for (j, &r) in arg.iter().enumerate() {
                    d[[r, j]] = g[[0, j]];
                }
                acc(&mut grads[a.0], d);
            }
            Op::SumCols(a) => {
                let d = g.broadcast(vals[a.0].dim()).expect("broadcast").to_owned();
                acc(&mut grads[a.0], d);
            }
            Op::Rows(a, idx) => {
                let mut d = Array2::zeros(vals[a.0].dim());
                for (k, &r) in idx.iter().enumerate() {
                    let mut row = d.row_mut(r);
                    row += &g.row(k);
                }
                acc(&mut grads[a.0], d);
            }
            Op::Cols(a, idx) => {
                let mut d = Array2::zeros(vals[a.0].dim());
                for (k, &c) in idx.iter().enumerate() {
                    let mut col = d.column_mut(c);
                    col += &g.column(k);
                }
                acc(&mut grads[a.0], d);
            }
            Op::HCat(parts) => {
                let mut start = 0;
                for p in parts {
                    let w = vals[p.0].ncols();
                    acc(&mut grads[p.0], g.slice(s![.., start..start + w]).to_owned());
                    start += w;
                }
            }
            Op::VCat(parts) => {
                let mut start = 0;
                for p in parts {
                    let h = vals[p.0].nrows();
                    acc(&mut grads[p.0], g.slice(s![start..start + h, ..]).to_owned());
                    start += h;
                }
            }
            Op::LogSoftmaxRows(a) => {
                // d = g - softmax * rowsum(g)
                let mut d = g.clone();
                for (mut drow, orow) in d.rows_mut().into_iter().zip(out.rows()) {
                    let gs = drow.sum();
                    Zip::from(&mut drow).and(&orow).for_each(|dx, &lp| *dx = *dx - lp.exp() * gs);
                }
                acc(&mut grads[a.0], d);
            }
            Op::LogSumExpRows(a) => {
                let x = &vals[a.0];
                let mut d = Array2::zeros(x.dim());
                for (r, (mut drow, xrow)) in d.rows_mut().into_iter().zip(x.rows()).enumerate() {
                    let lse = out[[r, 0]];
                    let gr = g[[r, 0]];
                    Zip::from(&mut drow).and(&xrow).for_each(|dx, &xv| *dx = gr * (xv - lse).exp());
                }
                acc(&mut grads[a.0], d);
            }
            Op::Transpose(a) => acc(&mut grads[a.0], g.t().to_owned()),
        }
    }
}
