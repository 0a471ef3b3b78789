use crate::error::{Error, Result};
use crate::tensor::{Backward, Element, Tensor};

struct ReshapeBackward;

impl<T: Element> Backward<T> for ReshapeBackward {
    fn name(&self) -> &'static str {
        "reshape"
    }

    fn backward(&self, grad: &[T], _parents: &[Tensor<T>], _output: &[T]) -> Vec<Option<Vec<T>>> {
        vec![Some(grad.to_vec())]
    }
}

fn transpose_last2<T: Copy>(src: &[T], batch: usize, rows: usize, cols: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(src.len());
    for b in 0..batch {
        let m = &src[b * rows * cols..(b + 1) * rows * cols];
        for c in 0..cols {
            for r in 0..rows {
                out.push(m[r * cols + c]);
            }
        }
    }
    out
}

struct TransposeBackward {
    batch: usize,
    rows: usize,
    cols: usize,
}

impl<T: Element> Backward<T> for TransposeBackward {
    fn name(&self) -> &'static str {
        "transpose"
    }

    fn backward(&self, grad: &[T], _parents: &[Tensor<T>], _output: &[T]) -> Vec<Option<Vec<T>>> {
        // grad has the transposed layout (batch, cols, rows)
        vec![Some(transpose_last2(grad, self.batch, self.cols, self.rows))]
    }
}

/// Copies `outer` runs of `len` elements between two buffers with different run strides.
fn copy_runs<T: Copy>(
    dst: &mut [T],
    dst_stride: usize,
    dst_off: usize,
    src: &[T],
    src_stride: usize,
    src_off: usize,
    outer: usize,
    len: usize,
) {
    for o in 0..outer {
        let d = o * dst_stride + dst_off;
        let s = o * src_stride + src_off;
        dst[d..d + len].copy_from_slice(&src[s..s + len]);
    }
}

struct ConcatBackward {
    outer: usize,
    inner: usize,
    extents: Vec<usize>,
}

impl<T: Element> Backward<T> for ConcatBackward {
    fn name(&self) -> &'static str {
        "concat"
    }

    fn backward(&self, grad: &[T], parents: &[Tensor<T>], _output: &[T]) -> Vec<Option<Vec<T>>> {
        let total: usize = self.extents.iter().sum();
        let mut offset = 0;
        let mut out = Vec::with_capacity(parents.len());
        for (p, &e) in parents.iter().zip(&self.extents) {
            if p.is_tracked() {
                let mut g = vec![T::zero(); p.numel()];
                copy_runs(
                    &mut g,
                    e * self.inner,
                    0,
                    grad,
                    total * self.inner,
                    offset * self.inner,
                    self.outer,
                    e * self.inner,
                );
                out.push(Some(g));
            } else {
                out.push(None);
            }
            offset += e;
        }
        out
    }
}

struct NarrowBackward {
    outer: usize,
    inner: usize,
    full: usize,
    start: usize,
    len: usize,
}

impl<T: Element> Backward<T> for NarrowBackward {
    fn name(&self) -> &'static str {
        "narrow"
    }

    fn backward(&self, grad: &[T], _parents: &[Tensor<T>], _output: &[T]) -> Vec<Option<Vec<T>>> {
        let mut g = vec![T::zero(); self.outer * self.full * self.inner];
        copy_runs(
            &mut g,
            self.full * self.inner,
            self.start * self.inner,
            grad,
            self.len * self.inner,
            0,
            self.outer,
            self.len * self.inner,
        );
        vec![Some(g)]
    }
}

impl<T: Element> Tensor<T> {
    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor<T>> {
        let n: usize = shape.iter().product();
        if n != self.numel() {
            return Err(Error::contract(
                "reshape",
                format!("cannot view {:?} as {shape:?}", self.shape()),
            ));
        }
        Ok(Tensor::from_op(
            shape.to_vec(),
            self.to_vec(),
            vec![self.clone()],
            ReshapeBackward,
        ))
    }

    /// Swaps the two trailing axes.
    pub fn transpose(&self) -> Result<Tensor<T>> {
        let r = self.rank();
        if r < 2 {
            return Err(Error::RankMismatch {
                op: "transpose",
                expected: 2,
                got: r,
            });
        }
        let (rows, cols) = (self.dim(r - 2), self.dim(r - 1));
        let batch = self.numel() / (rows * cols).max(1);
        let mut shape = self.shape().to_vec();
        shape.swap(r - 2, r - 1);
        Ok(Tensor::from_op(
            shape,
            transpose_last2(self.data(), batch, rows, cols),
            vec![self.clone()],
            TransposeBackward { batch, rows, cols },
        ))
    }

    /// Joins tensors along `axis`; all other extents must agree.
    pub fn concat(tensors: &[Tensor<T>], axis: usize) -> Result<Tensor<T>> {
        let first = tensors
            .first()
            .ok_or_else(|| Error::contract("concat", "empty input list"))?;
        if axis >= first.rank() {
            return Err(Error::contract(
                "concat",
                format!("axis {axis} out of range for rank {}", first.rank()),
            ));
        }
        if tensors.len() == 1 {
            return Ok(first.clone());
        }
        for t in &tensors[1..] {
            if t.rank() != first.rank() {
                return Err(Error::RankMismatch {
                    op: "concat",
                    expected: first.rank(),
                    got: t.rank(),
                });
            }
            for d in 0..first.rank() {
                if d != axis && t.dim(d) != first.dim(d) {
                    return Err(Error::ShapeMismatch {
                        op: "concat",
                        axis: d,
                        expected: first.dim(d),
                        got: t.dim(d),
                    });
                }
            }
        }
        let outer: usize = first.shape()[..axis].iter().product();
        let inner: usize = first.shape()[axis + 1..].iter().product();
        let extents: Vec<usize> = tensors.iter().map(|t| t.dim(axis)).collect();
        let total: usize = extents.iter().sum();
        let mut out = vec![T::zero(); outer * total * inner];
        let mut offset = 0;
        for (t, &e) in tensors.iter().zip(&extents) {
            copy_runs(
                &mut out,
                total * inner,
                offset * inner,
                t.data(),
                e * inner,
                0,
                outer,
                e * inner,
            );
            offset += e;
        }
        let mut shape = first.shape().to_vec();
        shape[axis] = total;
        Ok(Tensor::from_op(
            shape,
            out,
            tensors.to_vec(),
            ConcatBackward {
                outer,
                inner,
                extents,
            },
        ))
    }

    /// The slice `start..start + len` along `axis`.
    pub fn narrow(&self, axis: usize, start: usize, len: usize) -> Result<Tensor<T>> {
        if axis >= self.rank() {
            return Err(Error::contract(
                "narrow",
                format!("axis {axis} out of range for rank {}", self.rank()),
            ));
        }
        let full = self.dim(axis);
        if start + len > full {
            return Err(Error::contract(
                "narrow",
                format!("range {start}..{} exceeds extent {full} on axis {axis}", start + len),
            ));
        }
        let outer: usize = self.shape()[..axis].iter().product();
        let inner: usize = self.shape()[axis + 1..].iter().product();
        let mut out = vec![T::zero(); outer * len * inner];
        copy_runs(
            &mut out,
            len * inner,
            0,
            self.data(),
            full * inner,
            start * inner,
            outer,
            len * inner,
        );
        let mut shape = self.shape().to_vec();
        shape[axis] = len;
        Ok(Tensor::from_op(
            shape,
            out,
            vec![self.clone()],
            NarrowBackward {
                outer,
                inner,
                full,
                start,
                len,
            },
        ))
    }

    /// Splits into equal parts along `axis`.
    pub fn chunk(&self, parts: usize, axis: usize) -> Result<Vec<Tensor<T>>> {
        let full = self.dim(axis);
        if parts == 0 || full % parts != 0 {
            return Err(Error::contract(
                "chunk",
                format!("extent {full} on axis {axis} not divisible into {parts} parts"),
            ));
        }
        let len = full / parts;
        (0..parts).map(|i| self.narrow(axis, i * len, len)).collect()
    }
}
