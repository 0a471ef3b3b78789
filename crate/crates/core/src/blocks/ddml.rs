use crate::error::Result;
use crate::tensor::{Element, Tensor};

use super::afeb::Afeb;
use super::attention::Attention;
use super::gff::Gff;
use super::params::{Builder, LayerNorm, ParamStore};
use super::BlockToggles;

/// Adaptive spatial-frequency unit: AFEB followed by channel self-attention.
///
/// A disabled sub-block is the identity and owns no parameters.
#[derive(Clone, Debug)]
pub struct Asfu {
    pub afeb: Option<Afeb>,
    pub aseb: Option<Attention>,
}

impl Asfu {
    pub fn build<T: Element>(
        b: &mut Builder<'_, T>,
        c: usize,
        heads: usize,
        toggles: BlockToggles,
    ) -> Result<Self> {
        let afeb = if toggles.use_afeb {
            Some(Afeb::build(&mut b.sub("afeb"), c, heads, toggles)?)
        } else {
            None
        };
        let aseb = if toggles.use_aseb {
            Some(Attention::build(&mut b.sub("aseb"), c, heads)?)
        } else {
            None
        };
        Ok(Asfu { afeb, aseb })
    }

    pub fn forward<T: Element>(&self, ps: &ParamStore<T>, f: &Tensor<T>) -> Result<Tensor<T>> {
        let mut x = f.clone();
        if let Some(afeb) = &self.afeb {
            x = afeb.forward(ps, &x)?;
        }
        if let Some(aseb) = &self.aseb {
            x = aseb.forward(ps, &x)?;
        }
        Ok(x)
    }
}

/// Dual-domain modulation layer: `F' = GFF(LN(ASFU(LN(F)) + F)) + F`.
#[derive(Clone, Debug)]
pub struct Ddml {
    pub ln1: LayerNorm,
    pub asfu: Asfu,
    pub ln2: LayerNorm,
    pub gff: Gff,
}

impl Ddml {
    pub fn build<T: Element>(
        b: &mut Builder<'_, T>,
        c: usize,
        heads: usize,
        gff_ratio: f64,
        toggles: BlockToggles,
    ) -> Result<Self> {
        Ok(Ddml {
            ln1: b.layer_norm("ln1", c)?,
            asfu: Asfu::build(&mut b.sub("asfu"), c, heads, toggles)?,
            ln2: b.layer_norm("ln2", c)?,
            gff: Gff::build(&mut b.sub("gff"), c, gff_ratio)?,
        })
    }

    pub fn forward<T: Element>(&self, ps: &ParamStore<T>, f: &Tensor<T>) -> Result<Tensor<T>> {
        let a = self.asfu.forward(ps, &self.ln1.forward(ps, f)?)?.add(f)?;
        self.gff.forward(ps, &self.ln2.forward(ps, &a)?)?.add(f)
    }
}
