//! Real and complex tensor arithmetic used throughout the pipeline.

mod conv;
mod fft;
mod ops;
mod resample;
mod spectral;

pub use conv::{batch_norm, conv2d, conv_out_len, BN_EPS};
pub use fft::{auto_path, fft1d_with, fft2, fft2_real, fft_flops, fft_rows, ifft2, FftPath, FftPlan};
pub use ops::{
    gaussian_mask_2d, gaussian_window_1d, gelu, layer_norm, leaky_relu, l2_normalize, linear, matmul,
    matmul_transposed, relu, sigmoid, softmax, GaussianMask, MaskKind, L2_EPS,
};
pub(crate) use ops::softmax_in_place;
pub use resample::bilinear_resize;
pub use spectral::{amp_phase, phase_of, polar_to_complex, recompose, SpectralPair};
