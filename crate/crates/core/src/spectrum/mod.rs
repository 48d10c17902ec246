//! Frequency-domain machinery: exact 2D DFTs with a centered-spectrum
//! convention, annular band partitions, binary keep-masks, and the radial
//! sampling law used by the synthetic data generator.
//!
//! Conventions (fixed across the whole pipeline):
//! - The spectrum is centered: DC sits at index `(side/2, side/2)` and the
//!   cell `(i, j)` holds frequency `(u, v) = (i - side/2, j - side/2)`.
//! - The forward transform is unnormalized; the inverse carries `1/(H*W)`,
//!   so spatial energy equals spectral energy divided by `H*W` (Parseval).
//! - Radii are Euclidean, `r = sqrt(u^2 + v^2)`.

mod bands;
mod radial;
mod transform;

pub use bands::{band_partition, make_mask, Band, BandPartition, BandSet, FrequencyMask, MaskKind};
pub use radial::{radial_pdf, RadialPdf};
pub use transform::{
    dft2, filter_image, idft2, remove_frequency_pair, spectral_energy, FrequencyCoord, Spectrum,
};
