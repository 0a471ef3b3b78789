use crate::error::{Error, Result};
use crate::tensor::{Backward, Element, Tensor};

struct SoftmaxBackward {
    outer: usize,
    len: usize,
    inner: usize,
}

impl<T: Element> Backward<T> for SoftmaxBackward {
    fn name(&self) -> &'static str {
        "softmax"
    }

    fn backward(&self, grad: &[T], _parents: &[Tensor<T>], output: &[T]) -> Vec<Option<Vec<T>>> {
        let (len, inner) = (self.len, self.inner);
        let mut gx = vec![T::zero(); grad.len()];
        for o in 0..self.outer {
            for i in 0..inner {
                let idx = |j: usize| (o * len + j) * inner + i;
                let dot = (0..len).fold(T::zero(), |a, j| a + grad[idx(j)] * output[idx(j)]);
                for j in 0..len {
                    gx[idx(j)] = output[idx(j)] * (grad[idx(j)] - dot);
                }
            }
        }
        vec![Some(gx)]
    }
}

impl<T: Element> Tensor<T> {
    /// Softmax along `axis`, stabilized by subtracting the running maximum.
    pub fn softmax(&self, axis: usize) -> Result<Tensor<T>> {
        if axis >= self.rank() {
            return Err(Error::contract(
                "softmax",
                format!("axis {axis} out of range for rank {}", self.rank()),
            ));
        }
        let len = self.dim(axis);
        let outer: usize = self.shape()[..axis].iter().product();
        let inner: usize = self.shape()[axis + 1..].iter().product();
        let x = self.data();
        let mut out = vec![T::zero(); x.len()];
        for o in 0..outer {
            for i in 0..inner {
                let idx = |j: usize| (o * len + j) * inner + i;
                let max = (0..len).fold(T::neg_infinity(), |m, j| m.max(x[idx(j)]));
                let mut total = T::zero();
                for j in 0..len {
                    let e = (x[idx(j)] - max).exp();
                    out[idx(j)] = e;
                    total = total + e;
                }
                for j in 0..len {
                    out[idx(j)] = out[idx(j)] / total;
                }
            }
        }
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            out,
            vec![self.clone()],
            SoftmaxBackward { outer, len, inner },
        ))
    }
}
