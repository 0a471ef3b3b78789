//! Multi-scale training objectives.

use crate::error::{Error, Result};
use crate::fft::fft2;
use crate::model::ModelConfig;
use crate::tensor::{shape_error, Element, Tensor};

pub const DEFAULT_CHARBONNIER_EPS: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq)]
pub struct LossConfig {
    /// Weight `α_s` of scale `s`, finest first.
    pub scale_weights: Vec<f64>,
    pub charbonnier_eps: f64,
    pub use_msl: bool,
    pub use_mfl: bool,
}

impl LossConfig {
    /// Unit weights over `scales` levels with both terms on.
    pub fn new(scales: usize) -> Self {
        LossConfig {
            scale_weights: vec![1.0; scales],
            charbonnier_eps: DEFAULT_CHARBONNIER_EPS,
            use_msl: true,
            use_mfl: true,
        }
    }

    /// Unit weights matching the model's scale count and supervision flags.
    pub fn for_model(cfg: &ModelConfig) -> Self {
        LossConfig {
            use_msl: cfg.use_msl,
            use_mfl: cfg.use_mfl,
            ..Self::new(cfg.stages)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.scale_weights.iter().any(|&a| !(a >= 0.0) || !a.is_finite()) {
            return Err(Error::Config(format!(
                "scale weights must be finite and non-negative, got {:?}",
                self.scale_weights
            )));
        }
        if !(self.charbonnier_eps >= 0.0) || !self.charbonnier_eps.is_finite() {
            return Err(Error::Config(format!(
                "charbonnier eps must be non-negative, got {}",
                self.charbonnier_eps
            )));
        }
        Ok(())
    }
}

fn check_lists<T: Element>(op: &'static str, preds: &[Tensor<T>], targets: &[Tensor<T>], cfg: &LossConfig) -> Result<()> {
    cfg.validate()?;
    if preds.len() != targets.len() || preds.len() != cfg.scale_weights.len() {
        return Err(Error::contract(
            op,
            format!(
                "{} predictions, {} targets, {} scale weights",
                preds.len(),
                targets.len(),
                cfg.scale_weights.len()
            ),
        ));
    }
    for (p, t) in preds.iter().zip(targets) {
        if p.shape() != t.shape() {
            return Err(shape_error(op, t.shape(), p.shape()));
        }
    }
    Ok(())
}

fn weighted_sum<T: Element>(
    preds: &[Tensor<T>],
    targets: &[Tensor<T>],
    weights: &[f64],
    term: impl Fn(&Tensor<T>) -> Result<Tensor<T>>,
) -> Result<Tensor<T>> {
    let mut acc: Option<Tensor<T>> = None;
    for ((p, t), &a) in preds.iter().zip(targets).zip(weights) {
        if a == 0.0 {
            continue;
        }
        let v = term(&p.sub(t)?)?.scale(a);
        acc = Some(match acc {
            Some(s) => s.add(&v)?,
            None => v,
        });
    }
    Ok(acc.unwrap_or_else(|| Tensor::scalar(T::zero())))
}

/// `Σ_s α_s · mean(√((p − t)² + ε²))`.
pub fn charbonnier_multiscale<T: Element>(
    preds: &[Tensor<T>],
    targets: &[Tensor<T>],
    cfg: &LossConfig,
) -> Result<Tensor<T>> {
    check_lists("charbonnier_multiscale", preds, targets, cfg)?;
    let eps = cfg.charbonnier_eps;
    weighted_sum(preds, targets, &cfg.scale_weights, |d| Ok(d.charbonnier(eps).mean()))
}

/// `Σ_s α_s · Σ|F(p − t)| / N_s` with the orthonormal 2D transform, where
/// `N_s` is the element count at scale `s`.
pub fn frequency_loss_multiscale<T: Element>(
    preds: &[Tensor<T>],
    targets: &[Tensor<T>],
    cfg: &LossConfig,
) -> Result<Tensor<T>> {
    check_lists("frequency_loss_multiscale", preds, targets, cfg)?;
    weighted_sum(preds, targets, &cfg.scale_weights, |d| Ok(fft2(d)?.abs().mean()))
}

/// Total objective together with the value of each term.
#[derive(Clone, Debug)]
pub struct LossParts<T: Element> {
    pub total: Tensor<T>,
    pub charbonnier: f64,
    /// Zero when the frequency term is off.
    pub frequency: f64,
}

/// Charbonnier term plus frequency term.
///
/// With `use_msl` off the Charbonnier term covers scale 0 only; with
/// `use_mfl` off the frequency term is dropped. An objective whose every
/// active weight is zero is an error.
pub fn total_loss_parts<T: Element>(
    preds: &[Tensor<T>],
    targets: &[Tensor<T>],
    cfg: &LossConfig,
) -> Result<LossParts<T>> {
    check_lists("total_loss", preds, targets, cfg)?;
    let char_weights: Vec<f64> = if cfg.use_msl {
        cfg.scale_weights.clone()
    } else {
        cfg.scale_weights
            .iter()
            .enumerate()
            .map(|(i, &a)| if i == 0 { a } else { 0.0 })
            .collect()
    };
    let char_active = char_weights.iter().any(|&a| a > 0.0);
    let freq_active = cfg.use_mfl && cfg.scale_weights.iter().any(|&a| a > 0.0);
    if !char_active && !freq_active {
        return Err(Error::Config("loss has no active term".into()));
    }
    let char_cfg = LossConfig {
        scale_weights: char_weights,
        ..cfg.clone()
    };
    let c = charbonnier_multiscale(preds, targets, &char_cfg)?;
    let charbonnier = c.item().to_f64().unwrap();
    if !freq_active {
        return Ok(LossParts {
            total: c,
            charbonnier,
            frequency: 0.0,
        });
    }
    let f = frequency_loss_multiscale(preds, targets, cfg)?;
    let frequency = f.item().to_f64().unwrap();
    Ok(LossParts {
        total: c.add(&f)?,
        charbonnier,
        frequency,
    })
}

pub fn total_loss<T: Element>(preds: &[Tensor<T>], targets: &[Tensor<T>], cfg: &LossConfig) -> Result<Tensor<T>> {
    Ok(total_loss_parts(preds, targets, cfg)?.total)
}
