//! Image-quality and resolution metrics.

pub mod frangi;
pub mod fwhm;
pub mod region;
pub mod stats;
pub mod threshold;

pub use frangi::frangi;
pub use fwhm::{fit_fwhm, fit_fwhm_with, FwhmFit, FwhmOptions};
pub use region::{dice, ncc, rse, shell_mask, ShellMask};
pub use stats::mann_whitney_one_sided;
pub use threshold::triangle_threshold;
