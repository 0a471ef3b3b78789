use crate::error::{Error, Result};
use crate::tensor::{gemm, Backward, Element, Tensor};

/// How the batch axes of the two operands line up.
#[derive(Clone, Copy)]
struct Plan {
    batch: usize,
    m: usize,
    k: usize,
    p: usize,
    a_batched: bool,
    b_batched: bool,
}

impl Plan {
    fn a_off(&self, i: usize) -> usize {
        if self.a_batched {
            i * self.m * self.k
        } else {
            0
        }
    }
    fn b_off(&self, i: usize) -> usize {
        if self.b_batched {
            i * self.k * self.p
        } else {
            0
        }
    }
}

struct MatmulBackward {
    plan: Plan,
}

impl<T: Element> Backward<T> for MatmulBackward {
    fn name(&self) -> &'static str {
        "matmul"
    }

    fn backward(&self, grad: &[T], parents: &[Tensor<T>], _output: &[T]) -> Vec<Option<Vec<T>>> {
        let pl = self.plan;
        let (a, b) = (&parents[0], &parents[1]);
        let (ad, bd) = (a.data(), b.data());
        let (m, k, p) = (pl.m, pl.k, pl.p);
        let ga = a.is_tracked().then(|| {
            // dA = dC · Bᵀ
            let mut ga = vec![T::zero(); a.numel()];
            for i in 0..pl.batch {
                let gc = &grad[i * m * p..(i + 1) * m * p];
                let bm = &bd[pl.b_off(i)..pl.b_off(i) + k * p];
                let off = pl.a_off(i);
                let beta = if pl.a_batched || i == 0 { T::zero() } else { T::one() };
                gemm(m, p, k, (gc, p, 1), (bm, 1, p), beta, &mut ga[off..off + m * k]);
            }
            ga
        });
        let gb = b.is_tracked().then(|| {
            // dB = Aᵀ · dC
            let mut gb = vec![T::zero(); b.numel()];
            for i in 0..pl.batch {
                let gc = &grad[i * m * p..(i + 1) * m * p];
                let am = &ad[pl.a_off(i)..pl.a_off(i) + m * k];
                let off = pl.b_off(i);
                let beta = if pl.b_batched || i == 0 { T::zero() } else { T::one() };
                gemm(k, m, p, (am, 1, k), (gc, p, 1), beta, &mut gb[off..off + k * p]);
            }
            gb
        });
        vec![ga, gb]
    }
}

impl<T: Element> Tensor<T> {
    /// Batched matrix product `[..., M, K] · [..., K, P]`.
    ///
    /// Leading axes must match, or one operand may be a plain matrix that is
    /// reused across the batch.
    pub fn matmul(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        const OP: &str = "matmul";
        let (ra, rb) = (self.rank(), other.rank());
        if ra < 2 || rb < 2 {
            return Err(Error::RankMismatch {
                op: OP,
                expected: 2,
                got: ra.min(rb),
            });
        }
        let (m, k) = (self.dim(ra - 2), self.dim(ra - 1));
        let (k2, p) = (other.dim(rb - 2), other.dim(rb - 1));
        if k != k2 {
            return Err(Error::ShapeMismatch {
                op: OP,
                axis: rb - 2,
                expected: k,
                got: k2,
            });
        }
        let (ba, bb) = (&self.shape()[..ra - 2], &other.shape()[..rb - 2]);
        let (batch_shape, a_batched, b_batched) = if ba == bb {
            (ba.to_vec(), !ba.is_empty(), !bb.is_empty())
        } else if bb.is_empty() {
            (ba.to_vec(), true, false)
        } else if ba.is_empty() {
            (bb.to_vec(), false, true)
        } else {
            return Err(crate::tensor::shape_error(OP, ba, bb));
        };
        let batch: usize = batch_shape.iter().product();
        let plan = Plan {
            batch,
            m,
            k,
            p,
            a_batched,
            b_batched,
        };
        let (ad, bd) = (self.data(), other.data());
        let mut out = vec![T::zero(); batch * m * p];
        for i in 0..batch {
            let am = &ad[plan.a_off(i)..plan.a_off(i) + m * k];
            let bm = &bd[plan.b_off(i)..plan.b_off(i) + k * p];
            gemm(m, k, p, (am, k, 1), (bm, p, 1), T::zero(), &mut out[i * m * p..(i + 1) * m * p]);
        }
        let mut shape = batch_shape;
        shape.extend([m, p]);
        Ok(Tensor::from_op(
            shape,
            out,
            vec![self.clone(), other.clone()],
            MatmulBackward { plan },
        ))
    }
}
