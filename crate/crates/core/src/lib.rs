//! Foundations for nighttime image dehazing: float rasters with PNG I/O,
//! dark/bright channel priors and transmission estimates, a matting Laplacian,
//! procedural nighttime-haze synthesis, classical dehazers (BCCR and a DCP
//! baseline), and PSNR/SSIM metrics.

pub mod bccr;
pub mod error;
pub mod image;
pub mod manifest;
pub mod matting;
pub mod metrics;
pub mod priors;
pub mod synth;

pub use error::{CoreError, Result};
pub use image::{augment, load_image, random_overlap_crops, save_image, ImageGray, ImageRGB};
pub use manifest::{DatasetManifest, SampleRecord, Split};
pub use priors::{AtmosphericLight, PriorMaps};
