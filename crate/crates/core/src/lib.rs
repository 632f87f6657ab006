//! Volumetric signal processing for cryo-ET subtomograms.
//!
//! * [`volume`]: dense voxel grids, resizing, mask binarization
//! * [`spectral`]: 3D DFT, radial high-pass noise extraction, noise synthesis
//! * [`filters`]: bilateral and gradient-range bilateral denoisers, 3D Sobel
//! * [`adapt`]: pseudo-labels, EMA updates, consistency loss, Dice/IoU
//! * [`io`]: MRC2014 files and dataset manifests
//! * [`cli`]: the `cryovox` command-line front end

pub mod adapt;
pub mod batch;
pub mod cli;
pub mod error;
pub mod filters;
pub mod io;
pub mod spectral;
pub mod volume;

pub use error::{Error, Result};
pub use volume::{Dims, SegmentationMask, Volume3D};
