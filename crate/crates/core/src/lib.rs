//! Numerical core for cross-channel perception learning in H&E-to-IHC
//! virtual staining.
//!
//! The crate is organised along the processing chain:
//!
//! * [`stain`]: RGB / optical density conversion and H-E-DAB colour
//!   deconvolution, including single-stain isolation.
//! * [`fod`]: grayscale optical density and the focal optical density
//!   (FOD) transform.
//! * [`perception`]: per-channel FOD statistics and the dual-channel
//!   perception loss.
//! * [`features`]: feature vectors, feature files, the deterministic toy
//!   extractor and the feature distillation loss.
//! * [`cross_channel`]: nucleus/membrane cross-channel correlation and the
//!   cross-channel consistency loss.
//! * [`metrics`]: PSNR, SSIM, PCC and Fréchet distance.
//! * [`fit`]: an affine optical-density stain-transfer model fitted by
//!   finite-difference gradient descent on the composed objective.
//!
//! All operations are pure functions over immutable inputs.

pub mod config;
pub mod cross_channel;
pub mod error;
pub mod features;
pub mod fit;
pub mod fod;
pub mod metrics;
pub mod perception;
pub mod raster;
pub mod stain;

pub use config::CcplConfig;
pub use error::{CcplError, Result};
pub use raster::{GrayImage, RgbImage, RgbImageF, RgbRaster};
pub use stain::{Stain, StainMatrix};
