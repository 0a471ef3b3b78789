use crate::tensor::{Backward, Element, Tensor};

struct SumBackward {
    scale: f64,
}

impl<T: Element> Backward<T> for SumBackward {
    fn name(&self) -> &'static str {
        "sum"
    }

    fn backward(&self, grad: &[T], parents: &[Tensor<T>], _output: &[T]) -> Vec<Option<Vec<T>>> {
        let g = grad[0] * T::lit(self.scale);
        vec![Some(vec![g; parents[0].numel()])]
    }
}

impl<T: Element> Tensor<T> {
    /// Sum of all elements as a rank-0 tensor.
    pub fn sum(&self) -> Tensor<T> {
        let s = self.data().iter().fold(T::zero(), |a, &b| a + b);
        Tensor::from_op(Vec::new(), vec![s], vec![self.clone()], SumBackward { scale: 1.0 })
    }

    pub fn mean(&self) -> Tensor<T> {
        let n = self.numel().max(1);
        let s = self.data().iter().fold(T::zero(), |a, &b| a + b) / T::lit(n as f64);
        Tensor::from_op(
            Vec::new(),
            vec![s],
            vec![self.clone()],
            SumBackward {
                scale: 1.0 / n as f64,
            },
        )
    }
}
