use crate::error::Result;
use crate::par;
use crate::tensor::{shape_error, Backward, Element, Tensor};

type LocalGrad<T> = Box<dyn Fn(T, T) -> T + Send + Sync>;

/// Unary op whose derivative is a function of (input, output).
struct UnaryBackward<T> {
    name: &'static str,
    local: LocalGrad<T>,
}

impl<T: Element> Backward<T> for UnaryBackward<T> {
    fn name(&self) -> &'static str {
        self.name
    }

    fn backward(&self, grad: &[T], parents: &[Tensor<T>], output: &[T]) -> Vec<Option<Vec<T>>> {
        let x = parents[0].data();
        let g = grad
            .iter()
            .zip(x)
            .zip(output)
            .map(|((&g, &x), &y)| g * (self.local)(x, y))
            .collect();
        vec![Some(g)]
    }
}

#[derive(Clone, Copy)]
enum BinaryKind {
    Add,
    Sub,
    Mul,
}

/// `lhs ∘ rhs` where either side may be a single element broadcast over the other.
struct BinaryBackward {
    kind: BinaryKind,
}

fn reduce_to<T: Element>(g: Vec<T>, n: usize) -> Vec<T> {
    if g.len() == n {
        g
    } else {
        debug_assert_eq!(n, 1);
        vec![g.into_iter().fold(T::zero(), |a, b| a + b)]
    }
}

impl<T: Element> Backward<T> for BinaryBackward {
    fn name(&self) -> &'static str {
        match self.kind {
            BinaryKind::Add => "add",
            BinaryKind::Sub => "sub",
            BinaryKind::Mul => "mul",
        }
    }

    fn backward(&self, grad: &[T], parents: &[Tensor<T>], _output: &[T]) -> Vec<Option<Vec<T>>> {
        let (a, b) = (&parents[0], &parents[1]);
        let at = |d: &[T], i: usize| if d.len() == 1 { d[0] } else { d[i] };
        let (ga, gb): (Vec<T>, Vec<T>) = match self.kind {
            BinaryKind::Add => (grad.to_vec(), grad.to_vec()),
            BinaryKind::Sub => (grad.to_vec(), grad.iter().map(|&g| -g).collect()),
            BinaryKind::Mul => {
                let (ad, bd) = (a.data(), b.data());
                (
                    grad.iter().enumerate().map(|(i, &g)| g * at(bd, i)).collect(),
                    grad.iter().enumerate().map(|(i, &g)| g * at(ad, i)).collect(),
                )
            }
        };
        vec![
            a.is_tracked().then(|| reduce_to(ga, a.numel())),
            b.is_tracked().then(|| reduce_to(gb, b.numel())),
        ]
    }
}

/// `x * v[index along axis]`.
struct ScaleAxisBackward {
    axis_len: usize,
    inner: usize,
}

impl<T: Element> Backward<T> for ScaleAxisBackward {
    fn name(&self) -> &'static str {
        "scale_axis"
    }

    fn backward(&self, grad: &[T], parents: &[Tensor<T>], _output: &[T]) -> Vec<Option<Vec<T>>> {
        let (x, v) = (&parents[0], &parents[1]);
        let (xd, vd) = (x.data(), v.data());
        let block = self.axis_len * self.inner;
        let gx = x.is_tracked().then(|| {
            grad.iter()
                .enumerate()
                .map(|(i, &g)| g * vd[(i % block) / self.inner])
                .collect()
        });
        let gv = v.is_tracked().then(|| {
            let mut acc = vec![T::zero(); self.axis_len];
            for (i, (&g, &xv)) in grad.iter().zip(xd).enumerate() {
                let c = (i % block) / self.inner;
                acc[c] = acc[c] + g * xv;
            }
            acc
        });
        vec![gx, gv]
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

pub(crate) fn gelu_scalar<T: Element>(x: T) -> T {
    let c = T::lit(GELU_C);
    let a = T::lit(GELU_A);
    let half = T::lit(0.5);
    half * x * (T::one() + (c * (x + a * x * x * x)).tanh())
}

fn gelu_grad<T: Element>(x: T) -> T {
    let c = T::lit(GELU_C);
    let a = T::lit(GELU_A);
    let half = T::lit(0.5);
    let u = c * (x + a * x * x * x);
    let t = u.tanh();
    let du = c * (T::one() + T::lit(3.0) * a * x * x);
    half * (T::one() + t) + half * x * (T::one() - t * t) * du
}

impl<T: Element> Tensor<T> {
    fn unary(
        &self,
        name: &'static str,
        f: impl Fn(T) -> T + Send + Sync,
        local: impl Fn(T, T) -> T + Send + Sync + 'static,
    ) -> Tensor<T> {
        let mut out = vec![T::zero(); self.numel()];
        par::map_into(&mut out, self.data(), |&x| f(x));
        Tensor::from_op(
            self.shape().to_vec(),
            out,
            vec![self.clone()],
            UnaryBackward {
                name,
                local: Box::new(local),
            },
        )
    }

    fn binary(&self, other: &Tensor<T>, kind: BinaryKind) -> Result<Tensor<T>> {
        let op = match kind {
            BinaryKind::Add => "add",
            BinaryKind::Sub => "sub",
            BinaryKind::Mul => "mul",
        };
        let f = |a: T, b: T| match kind {
            BinaryKind::Add => a + b,
            BinaryKind::Sub => a - b,
            BinaryKind::Mul => a * b,
        };
        let (ad, bd) = (self.data(), other.data());
        let (shape, out): (Vec<usize>, Vec<T>) = if self.shape() == other.shape() {
            let mut out = vec![T::zero(); ad.len()];
            par::for_each_chunk(&mut out, 4096, |ci, chunk| {
                let base = ci * 4096;
                for (j, o) in chunk.iter_mut().enumerate() {
                    *o = f(ad[base + j], bd[base + j]);
                }
            });
            (self.shape().to_vec(), out)
        } else if other.numel() == 1 {
            let b = bd[0];
            (self.shape().to_vec(), ad.iter().map(|&a| f(a, b)).collect())
        } else if self.numel() == 1 {
            let a = ad[0];
            (other.shape().to_vec(), bd.iter().map(|&b| f(a, b)).collect())
        } else {
            return Err(shape_error(op, self.shape(), other.shape()));
        };
        Ok(Tensor::from_op(
            shape,
            out,
            vec![self.clone(), other.clone()],
            BinaryBackward { kind },
        ))
    }

    pub fn add(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        self.binary(other, BinaryKind::Add)
    }

    pub fn sub(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        self.binary(other, BinaryKind::Sub)
    }

    pub fn mul(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        self.binary(other, BinaryKind::Mul)
    }

    /// Multiplies by a constant.
    pub fn scale(&self, c: f64) -> Tensor<T> {
        let c = T::lit(c);
        self.unary("scale", move |x| x * c, move |_, _| c)
    }

    pub fn add_scalar(&self, c: f64) -> Tensor<T> {
        let c = T::lit(c);
        self.unary("add_scalar", move |x| x + c, |_, _| T::one())
    }

    pub fn neg(&self) -> Tensor<T> {
        self.unary("neg", |x| -x, |_, _| -T::one())
    }

    /// `max(x, 0)`; the derivative at 0 is taken as 0.
    pub fn relu(&self) -> Tensor<T> {
        self.unary(
            "relu",
            |x| if x > T::zero() { x } else { T::zero() },
            |x, _| if x > T::zero() { T::one() } else { T::zero() },
        )
    }

    /// Tanh approximation of GELU.
    pub fn gelu(&self) -> Tensor<T> {
        self.unary("gelu", gelu_scalar, |x, _| gelu_grad(x))
    }

    pub fn sigmoid(&self) -> Tensor<T> {
        self.unary(
            "sigmoid",
            |x| T::one() / (T::one() + (-x).exp()),
            |_, y| y * (T::one() - y),
        )
    }

    pub fn sqrt(&self) -> Tensor<T> {
        self.unary("sqrt", |x| x.sqrt(), |_, y| T::lit(0.5) / y)
    }

    pub fn recip(&self) -> Tensor<T> {
        self.unary("recip", |x| x.recip(), |_, y| -y * y)
    }

    pub fn square(&self) -> Tensor<T> {
        self.unary("square", |x| x * x, |x, _| T::lit(2.0) * x)
    }

    /// `sqrt(x² + eps²)`; at `x = 0` with `eps = 0` the subgradient is 0.
    pub fn charbonnier(&self, eps: f64) -> Tensor<T> {
        let e2 = T::lit(eps * eps);
        self.unary(
            "charbonnier",
            move |x| (x * x + e2).sqrt(),
            |x, y| if y > T::zero() { x / y } else { T::zero() },
        )
    }

    /// Multiplies every slice along `axis` by the matching entry of the 1-D tensor `v`.
    pub fn scale_axis(&self, v: &Tensor<T>, axis: usize) -> Result<Tensor<T>> {
        if axis >= self.rank() {
            return Err(crate::Error::contract(
                "scale_axis",
                format!("axis {axis} out of range for rank {}", self.rank()),
            ));
        }
        let axis_len = self.dim(axis);
        if v.rank() != 1 || v.numel() != axis_len {
            return Err(crate::Error::ShapeMismatch {
                op: "scale_axis",
                axis,
                expected: axis_len,
                got: v.numel(),
            });
        }
        let inner: usize = self.shape()[axis + 1..].iter().product();
        let block = axis_len * inner;
        let vd = v.data();
        let out = self
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| x * vd[(i % block) / inner])
            .collect();
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            out,
            vec![self.clone(), v.clone()],
            ScaleAxisBackward { axis_len, inner },
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::grad_check;

    fn t(shape: &[usize], v: &[f64]) -> Tensor<f64> {
        Tensor::from_vec(shape, v.to_vec()).unwrap()
    }

    #[test]
    fn relu_definition() {
        let y = t(&[3], &[-1.0, 0.0, 2.0]).relu();
        assert_eq!(y.data(), &[0.0, 0.0, 2.0]);
    }

    #[test]
    fn relu_subgradient_at_zero_is_zero() {
        let x = Tensor::<f64>::param(&[3], vec![-1.0, 0.0, 2.0]).unwrap();
        x.relu().sum().backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn add_negation_is_zero() {
        let x = t(&[2, 2], &[1.5, -2.0, 3.25, 0.0]);
        let z = x.add(&x.neg()).unwrap();
        assert!(z.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn mul_gradient_matches_other_operand() {
        let a = Tensor::<f64>::param(&[4], vec![0.3, -1.2, 2.0, 0.7]).unwrap();
        let b = t(&[4], &[1.1, 0.4, -0.9, 2.5]);
        a.mul(&b).unwrap().sum().backward().unwrap();
        assert_eq!(a.grad().unwrap(), b.to_vec());

        let err = grad_check(
            |xs| xs[0].mul(&xs[1]).unwrap().sum(),
            &[a.detach(), b.clone()],
            1e-5,
        );
        assert!(err <= 1e-6, "{err}");
    }

    #[test]
    fn binary_shape_mismatch_names_axis() {
        let err = t(&[2, 3], &[0.0; 6]).add(&t(&[2, 2], &[0.0; 4])).unwrap_err();
        match err {
            crate::Error::ShapeMismatch { axis, expected, got, .. } => {
                assert_eq!((axis, expected, got), (1, 3, 2));
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn scalar_broadcast() {
        let x = Tensor::<f64>::param(&[3], vec![1.0, 2.0, 3.0]).unwrap();
        let s = Tensor::<f64>::param(&[1], vec![2.0]).unwrap();
        let y = x.mul(&s).unwrap();
        assert_eq!(y.data(), &[2.0, 4.0, 6.0]);
        y.sum().backward().unwrap();
        assert_eq!(s.grad().unwrap(), vec![6.0]);
        assert_eq!(x.grad().unwrap(), vec![2.0; 3]);
    }

    #[test]
    fn gelu_known_values() {
        let y = t(&[3], &[0.0, 1.0, -1.0]).gelu();
        assert_eq!(y.data()[0], 0.0);
        assert!((y.data()[1] - 0.841_191_990_607_477_2).abs() < 1e-12);
        assert!((y.data()[2] + 0.158_808_009_392_522_8).abs() < 1e-12);
    }

    #[test]
    fn unary_gradients_match_finite_differences() {
        let x = t(&[6], &[0.3, -1.2, 2.0, 0.7, -0.4, 1.9]);
        for (name, f) in [
            ("gelu", (|x: &Tensor<f64>| x.gelu()) as fn(&Tensor<f64>) -> Tensor<f64>),
            ("sigmoid", |x| x.sigmoid()),
            ("square", |x| x.square()),
            ("charbonnier", |x| x.charbonnier(1e-3)),
            ("scale", |x| x.scale(-2.5)),
        ] {
            let err = grad_check(|xs| f(&xs[0]).sum(), std::slice::from_ref(&x), 1e-5);
            assert!(err <= 1e-6, "{name}: {err}");
        }
        let pos = t(&[4], &[0.3, 1.2, 2.0, 0.7]);
        for f in [|x: &Tensor<f64>| x.sqrt(), |x: &Tensor<f64>| x.recip()] {
            let err = grad_check(|xs| f(&xs[0]).sum(), std::slice::from_ref(&pos), 1e-5);
            assert!(err <= 1e-6, "{err}");
        }
    }

    #[test]
    fn scale_axis_matches_manual_and_gradients() {
        let x = t(&[2, 3, 2], &(0..12).map(|v| v as f64 * 0.5 - 2.0).collect::<Vec<_>>());
        let v = t(&[3], &[1.0, -2.0, 0.5]);
        let y = x.scale_axis(&v, 1).unwrap();
        assert_eq!(y.data()[2], x.data()[2] * -2.0);
        assert_eq!(y.data()[11], x.data()[11] * 0.5);
        let err = grad_check(
            |xs| xs[0].scale_axis(&xs[1], 1).unwrap().square().sum(),
            &[x, v],
            1e-5,
        );
        assert!(err <= 1e-6, "{err}");
    }
}
