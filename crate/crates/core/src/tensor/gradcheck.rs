use super::Tensor;

/// Largest relative discrepancy between analytic gradients and central
/// differences of a scalar function, over every element of every input.
///
/// The relative error of a pair `(a, b)` is `|a - b| / max(|a|, |b|, 1e-8)`.
pub fn grad_check<F>(f: F, inputs: &[Tensor<f64>], h: f64) -> f64
where
    F: Fn(&[Tensor<f64>]) -> Tensor<f64>,
{
    let params: Vec<Tensor<f64>> = inputs.iter().map(|t| t.detach().into_param()).collect();
    f(&params).backward().expect("grad_check: function must return a tracked scalar");
    let analytic: Vec<Vec<f64>> = params.iter().map(Tensor::grad_or_zeros).collect();

    let eval = |which: usize, idx: usize, delta: f64| -> f64 {
        let xs: Vec<Tensor<f64>> = inputs
            .iter()
            .enumerate()
            .map(|(i, t)| {
                if i == which {
                    let mut d = t.to_vec();
                    d[idx] += delta;
                    Tensor::from_vec(t.shape(), d).unwrap()
                } else {
                    t.detach()
                }
            })
            .collect();
        super::no_grad(|| f(&xs)).item()
    };

    let mut worst = 0.0f64;
    for (i, t) in inputs.iter().enumerate() {
        for j in 0..t.numel() {
            let numeric = (eval(i, j, h) - eval(i, j, -h)) / (2.0 * h);
            let a = analytic[i][j];
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            worst = worst.max(err);
        }
    }
    worst
}
