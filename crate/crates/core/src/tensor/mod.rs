//! A small reverse-mode differentiable tensor.
//!
//! Tensors are reference counted and immutable after creation, except for the
//! gradient slot of leaf tensors. Every op records a [`Node`] linking the result
//! to its parents when at least one parent is tracked and recording is enabled
//! on the current thread (see [`no_grad`]).

mod element;
mod gradcheck;
mod ops;

use std::cell::Cell;
use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, Mutex};

use crate::error::{Error, Result};

pub use element::{DType, Element};
pub(crate) use element::gemm;
pub use gradcheck::grad_check;
pub use ops::Conv2dSpec;

thread_local! {
    static GRAD_ENABLED: Cell<bool> = const { Cell::new(true) };
}

/// Runs `f` with graph recording disabled on this thread.
pub fn no_grad<R>(f: impl FnOnce() -> R) -> R {
    struct Restore(bool);
    impl Drop for Restore {
        fn drop(&mut self) {
            GRAD_ENABLED.with(|g| g.set(self.0));
        }
    }
    let _restore = Restore(GRAD_ENABLED.with(|g| g.replace(false)));
    f()
}

pub fn grad_enabled() -> bool {
    GRAD_ENABLED.with(|g| g.get())
}

/// Gradient rule of a recorded op.
///
/// `backward` receives the gradient of the op's output and returns one entry per
/// parent, `None` where the parent does not need a gradient.
pub(crate) trait Backward<T: Element>: Send + Sync {
    fn name(&self) -> &'static str;
    fn backward(&self, grad: &[T], parents: &[Tensor<T>], output: &[T]) -> Vec<Option<Vec<T>>>;
}

pub(crate) struct Node<T: Element> {
    op: Box<dyn Backward<T>>,
    parents: Vec<Tensor<T>>,
}

struct Inner<T: Element> {
    shape: Vec<usize>,
    data: Vec<T>,
    requires_grad: bool,
    grad: Mutex<Option<Vec<T>>>,
    node: Option<Node<T>>,
}

#[derive(Clone)]
pub struct Tensor<T: Element = f32>(Arc<Inner<T>>);

impl<T: Element> fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut d = f.debug_struct("Tensor");
        d.field("shape", &self.0.shape)
            .field("dtype", &T::DTYPE)
            .field("requires_grad", &self.0.requires_grad);
        if let Some(node) = &self.0.node {
            d.field("op", &node.op.name());
        }
        if self.numel() <= 16 {
            d.field("data", &self.0.data);
        }
        d.finish()
    }
}

impl<T: Element> Tensor<T> {
    fn build(shape: Vec<usize>, data: Vec<T>, requires_grad: bool, node: Option<Node<T>>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Tensor(Arc::new(Inner {
            shape,
            data,
            requires_grad,
            grad: Mutex::new(None),
            node,
        }))
    }

    pub fn from_vec(shape: &[usize], data: Vec<T>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::contract(
                "from_vec",
                format!("shape {shape:?} holds {n} elements, data has {}", data.len()),
            ));
        }
        Ok(Self::build(shape.to_vec(), data, false, None))
    }

    pub fn from_f64(shape: &[usize], data: &[f64]) -> Result<Self> {
        Self::from_vec(shape, data.iter().map(|&v| T::from_f64(v).unwrap()).collect())
    }

    pub fn full(shape: &[usize], value: T) -> Self {
        let n = shape.iter().product();
        Self::build(shape.to_vec(), vec![value; n], false, None)
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, T::zero())
    }

    pub fn ones(shape: &[usize]) -> Self {
        Self::full(shape, T::one())
    }

    pub fn scalar(value: T) -> Self {
        Self::build(Vec::new(), vec![value], false, None)
    }

    /// A leaf that collects gradients.
    pub fn param(shape: &[usize], data: Vec<T>) -> Result<Self> {
        let t = Self::from_vec(shape, data)?;
        Ok(t.into_param())
    }

    /// Same data, as a fresh gradient-collecting leaf.
    pub fn into_param(self) -> Self {
        let data = self.0.data.clone();
        Self::build(self.0.shape.clone(), data, true, None)
    }

    /// Same data, detached from any graph.
    pub fn detach(&self) -> Self {
        Self::build(self.0.shape.clone(), self.0.data.clone(), false, None)
    }

    /// Result of an op; records a node when a parent is tracked.
    pub(crate) fn from_op(
        shape: Vec<usize>,
        data: Vec<T>,
        parents: Vec<Tensor<T>>,
        op: impl Backward<T> + 'static,
    ) -> Self {
        let node = if grad_enabled() && parents.iter().any(Tensor::is_tracked) {
            Some(Node {
                op: Box::new(op),
                parents,
            })
        } else {
            None
        };
        Self::build(shape, data, false, node)
    }

    pub fn shape(&self) -> &[usize] {
        &self.0.shape
    }

    pub fn rank(&self) -> usize {
        self.0.shape.len()
    }

    pub fn dim(&self, axis: usize) -> usize {
        self.0.shape[axis]
    }

    pub fn numel(&self) -> usize {
        self.0.data.len()
    }

    pub fn data(&self) -> &[T] {
        &self.0.data
    }

    pub fn to_vec(&self) -> Vec<T> {
        self.0.data.clone()
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.0.data.iter().map(|v| v.to_f64().unwrap()).collect()
    }

    pub fn dtype(&self) -> DType {
        T::DTYPE
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> T {
        assert_eq!(self.numel(), 1, "item() on tensor of shape {:?}", self.shape());
        self.0.data[0]
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    pub fn is_leaf(&self) -> bool {
        self.0.node.is_none()
    }

    /// Participates in gradient computation.
    pub fn is_tracked(&self) -> bool {
        self.0.requires_grad || self.0.node.is_some()
    }

    pub fn op_name(&self) -> Option<&'static str> {
        self.0.node.as_ref().map(|n| n.op.name())
    }

    pub fn grad(&self) -> Option<Vec<T>> {
        self.0.grad.lock().unwrap().clone()
    }

    /// Gradient, or zeros when nothing has been accumulated.
    pub fn grad_or_zeros(&self) -> Vec<T> {
        self.grad().unwrap_or_else(|| vec![T::zero(); self.numel()])
    }

    pub fn set_grad(&self, grad: Option<Vec<T>>) {
        if let Some(g) = &grad {
            assert_eq!(g.len(), self.numel());
        }
        *self.0.grad.lock().unwrap() = grad;
    }

    pub fn zero_grad(&self) {
        self.set_grad(None);
    }

    fn accumulate_grad(&self, g: &[T]) {
        let mut slot = self.0.grad.lock().unwrap();
        match slot.as_mut() {
            Some(acc) => acc.iter_mut().zip(g).for_each(|(a, &b)| *a = *a + b),
            None => *slot = Some(g.to_vec()),
        }
    }

    pub fn same_storage(&self, other: &Tensor<T>) -> bool {
        Arc::ptr_eq(&self.0, &other.0)
    }

    fn key(&self) -> usize {
        Arc::as_ptr(&self.0) as usize
    }

    /// Reverse-mode sweep from a single-element tensor.
    ///
    /// Every reachable leaf with `requires_grad` receives d(self)/d(leaf) added
    /// to its gradient slot.
    pub fn backward(&self) -> Result<()> {
        if self.numel() != 1 {
            return Err(Error::contract(
                "backward",
                format!("loss must be a scalar, got shape {:?}", self.shape()),
            ));
        }
        if !self.is_tracked() {
            return Err(Error::contract("backward", "loss has no graph linkage"));
        }

        let order = self.topo_order();
        let mut grads: HashMap<usize, Vec<T>> = HashMap::new();
        grads.insert(self.key(), vec![T::one()]);

        for t in order.iter().rev() {
            let Some(g) = grads.remove(&t.key()) else {
                continue;
            };
            if t.0.requires_grad {
                t.accumulate_grad(&g);
            }
            let Some(node) = &t.0.node else { continue };
            let parent_grads = node.op.backward(&g, &node.parents, &t.0.data);
            debug_assert_eq!(parent_grads.len(), node.parents.len(), "{}", node.op.name());
            for (p, pg) in node.parents.iter().zip(parent_grads) {
                let Some(pg) = pg else { continue };
                if !p.is_tracked() {
                    continue;
                }
                debug_assert_eq!(pg.len(), p.numel(), "{} gradient size", node.op.name());
                match grads.get_mut(&p.key()) {
                    Some(acc) => acc.iter_mut().zip(&pg).for_each(|(a, &b)| *a = *a + b),
                    None => {
                        grads.insert(p.key(), pg);
                    }
                }
            }
        }
        Ok(())
    }

    /// Tracked tensors reachable from `self`, parents before children.
    fn topo_order(&self) -> Vec<Tensor<T>> {
        let mut order = Vec::new();
        let mut visited = std::collections::HashSet::new();
        let mut stack: Vec<(Tensor<T>, bool)> = vec![(self.clone(), false)];
        while let Some((t, expanded)) = stack.pop() {
            if expanded {
                order.push(t);
                continue;
            }
            if !visited.insert(t.key()) {
                continue;
            }
            stack.push((t.clone(), true));
            if let Some(node) = &t.0.node {
                for p in node.parents.iter().rev() {
                    if p.is_tracked() && !visited.contains(&p.key()) {
                        stack.push((p.clone(), false));
                    }
                }
            }
        }
        order
    }
}

pub(crate) fn shape_error(op: &'static str, a: &[usize], b: &[usize]) -> Error {
    if a.len() != b.len() {
        return Error::RankMismatch {
            op,
            expected: a.len(),
            got: b.len(),
        };
    }
    let axis = a.iter().zip(b).position(|(x, y)| x != y).unwrap_or(0);
    Error::ShapeMismatch {
        op,
        axis,
        expected: a[axis],
        got: b[axis],
    }
}
