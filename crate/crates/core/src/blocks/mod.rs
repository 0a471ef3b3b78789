//! Parameterized network blocks.
//!
//! Each block records [`ParamId`]s at build time and reads the tensors from a
//! [`ParamStore`] on every forward call.

mod afeb;
mod attention;
mod ddml;
mod gff;
mod gffb;
mod mask;
mod params;

pub use afeb::{Afeb, AfebParts};
pub use attention::{Attention, AttentionTrace};
pub use ddml::{Asfu, Ddml};
pub use gff::Gff;
pub use gffb::Gffb;
pub use mask::{adaptive_frequency_mask, mask_radii, mask_support, MASK_TEMPERATURE};
pub use params::{init_rng, Builder, Conv, LayerNorm, ParamId, ParamStore, LN_EPS};

/// Switches for the frequency and spatial sub-blocks of every ASFU.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BlockToggles {
    pub use_aseb: bool,
    pub use_afeb: bool,
    pub use_separation: bool,
    pub use_enhancement: bool,
}

impl Default for BlockToggles {
    fn default() -> Self {
        BlockToggles {
            use_aseb: true,
            use_afeb: true,
            use_separation: true,
            use_enhancement: true,
        }
    }
}
