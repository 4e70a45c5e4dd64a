use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, Uniform};

use super::tape::{Tape, Var};
use crate::error::{ensure, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub usize);

/// Named tensors owned by one network. Shapes are fixed once added.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamBlock<T> {
    names: Vec<String>,
    tensors: Vec<Array2<T>>,
    pub seed: u64,
}

impl<T: Scalar> ParamBlock<T> {
    pub fn new(seed: u64) -> Self {
        Self {
            names: Vec::new(),
            tensors: Vec::new(),
            seed,
        }
    }

    pub fn add(&mut self, name: impl Into<String>, t: Array2<T>) -> ParamId {
        self.names.push(name.into());
        self.tensors.push(t);
        ParamId(self.tensors.len() - 1)
    }

    /// Glorot-uniform weight matrix.
    pub fn glorot(&mut self, name: &str, rows: usize, cols: usize, rng: &mut impl Rng) -> ParamId {
        let a = (6.0 / (rows + cols) as f64).sqrt();
        let u = Uniform::new(-a, a).expect("valid range");
        let t = Array2::from_shape_simple_fn((rows, cols), || T::of(u.sample(rng)));
        self.add(name, t)
    }

    pub fn zeros(&mut self, name: &str, rows: usize, cols: usize) -> ParamId {
        self.add(name, Array2::zeros((rows, cols)))
    }

    pub fn get(&self, id: ParamId) -> &Array2<T> {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Array2<T> {
        &mut self.tensors[id.0]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Array2<T>] {
        &self.tensors
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(Array2::len).sum()
    }

    pub fn flatten(&self) -> Vec<T> {
        self.tensors.iter().flat_map(|t| t.iter().copied()).collect()
    }

    pub fn set_flat(&mut self, flat: &[T]) -> Result<()> {
        ensure!(
            flat.len() == self.num_scalars(),
            Shape,
            "{} values for {} parameters",
            flat.len(),
            self.num_scalars()
        );
        let mut it = flat.iter();
        for t in &mut self.tensors {
            for x in t.iter_mut() {
                *x = *it.next().expect("length checked");
            }
        }
        Ok(())
    }

    /// Replaces tensor `i` keeping its shape.
    pub fn set(&mut self, i: usize, t: Array2<T>) -> Result<()> {
        ensure!(
            t.dim() == self.tensors[i].dim(),
            Shape,
            "parameter `{}` has shape {:?}, got {:?}",
            self.names[i],
            self.tensors[i].dim(),
            t.dim()
        );
        self.tensors[i] = t;
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.iter().all(|x| x.is_finite()))
    }

    pub fn bind(&self, tape: &mut Tape<T>) -> Bound {
        Bound(self.tensors.iter().map(|t| tape.leaf(t.clone())).collect())
    }

    pub fn zero_grads(&self) -> Vec<Array2<T>> {
        self.tensors.iter().map(|t| Array2::zeros(t.dim())).collect()
    }
}

/// Tape variables for every tensor of a [`ParamBlock`].
#[derive(Debug, Clone)]
pub struct Bound(Vec<Var>);

impl Bound {
    pub fn var(&self, id: ParamId) -> Var {
        self.0[id.0]
    }

    pub fn grads<T: Scalar>(&self, tape: &Tape<T>) -> Vec<Array2<T>> {
        self.0.iter().map(|&v| tape.grad(v)).collect()
    }
}

pub fn flatten_grads<T: Scalar>(g: &[Array2<T>]) -> Vec<T> {
    g.iter().flat_map(|t| t.iter().copied()).collect()
}

/// Adam with optional L2 weight decay on a subset of tensors.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub lr: T,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
    pub weight_decay: T,
    decay_on: Vec<ParamId>,
    m: Vec<Array2<T>>,
    v: Vec<Array2<T>>,
    t: i32,
}

impl<T: Scalar> Adam<T> {
    pub fn new(lr: T, params: &ParamBlock<T>) -> Self {
        Self {
            lr,
            beta1: T::of(0.9),
            beta2: T::of(0.999),
            eps: T::of(1e-8),
            weight_decay: T::zero(),
            decay_on: Vec::new(),
            m: params.zero_grads(),
            v: params.zero_grads(),
            t: 0,
        }
    }

    pub fn with_weight_decay(mut self, wd: T, on: Vec<ParamId>) -> Self {
        self.weight_decay = wd;
        self.decay_on = on;
        self
    }

    pub fn step(&mut self, params: &mut ParamBlock<T>, grads: &[Array2<T>]) {
        self.t += 1;
        let b1t = T::one() - self.beta1.powi(self.t);
        let b2t = T::one() - self.beta2.powi(self.t);
        for (i, g) in grads.iter().enumerate() {
            let mut g = g.clone();
            if self.decay_on.contains(&ParamId(i)) {
                g.scaled_add(self.weight_decay, params.get(ParamId(i)));
            }
            let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
            ndarray::Zip::from(&mut self.m[i])
                .and(&mut self.v[i])
                .and(params.get_mut(ParamId(i)))
                .and(&g)
                .for_each(|m, v, p, &gx| {
                    *m = b1 * *m + (T::one() - b1) * gx;
                    *v = b2 * *v + (T::one() - b2) * gx * gx;
                    let mh = *m / b1t;
                    let vh = *v / b2t;
                    *p = *p - lr * mh / (vh.sqrt() + eps);
                });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn flatten_roundtrip() {
        let mut p = ParamBlock::<f64>::new(0);
        p.add("a", array![[1.0, 2.0]]);
        p.add("b", array![[3.0], [4.0]]);
        let flat = p.flatten();
        assert_eq!(flat, vec![1.0, 2.0, 3.0, 4.0]);
        let mut q = p.clone();
        q.set_flat(&[0.0; 4]).unwrap();
        q.set_flat(&flat).unwrap();
        assert_eq!(p, q);
        assert!(q.set_flat(&[0.0; 3]).is_err());
    }

    #[test]
    fn adam_minimises_a_quadratic() {
        let mut p = ParamBlock::<f64>::new(0);
        let id = p.add("x", array![[3.0, -2.0]]);
        let mut opt = Adam::new(0.1, &p);
        for _ in 0..500 {
            let g = p.get(id).mapv(|x| 2.0 * x);
            opt.step(&mut p, &[g]);
        }
        assert!(p.get(id).iter().all(|x| x.abs() < 1e-2));
    }
}
