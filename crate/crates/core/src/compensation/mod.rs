//! Learned SIR compensation: a bank of Wiener deconvolution kernels whose
//! outputs are blended by a softmax-weighted synthesis network.

pub mod model;
pub mod net;
pub mod oracle;
pub mod train;
pub mod wiener;

pub use model::{
    deconvolve_patch, extract_patch, forward_patch, infer_full, init_model, load_model, mae_loss, mae_with_grad, patch_backward, save_model,
    softmax_channels, synthesize, DeconvNetModel, ModelConfig, ModelGrad, PatchSpec,
};
pub use net::{SynthesisNet, SynthesisNetSpec};
pub use oracle::oracle_compensate;
pub use train::{train, EpochRecord, History, TrainConfig};
pub use wiener::{wiener_deconvolve, SirKernel, WienerFilter};
