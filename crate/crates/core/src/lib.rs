//! Two-pass neural stylization of smoke densities.
//!
//! A velocity field is optimized so that transporting the input density
//! makes its renders match the Gram statistics of a style image; an RGB
//! field is then optimized on the transported density to match the style's
//! colors. Every stage (semi-Lagrangian transport, emission-absorption
//! rendering, the VGG-19 trunk, Gram losses) carries a hand-written adjoint.
//!
//! The crate is `no_std` (it needs `alloc`). The `std` feature only turns on
//! runtime SIMD detection in the matrix kernels.

#![no_std]

extern crate alloc;

pub mod adam;
pub mod error;
pub mod features;
pub mod fields;
pub mod gradcheck;
pub mod losses;
pub mod optimize;
pub mod render;
pub mod tensor;
pub mod transport;
pub mod vgg;

pub use error::{Error, Pass, Result};
pub use features::{
    build_mask_pyramid, extract_features, gram, guide_features, tile_style, FeatureMap,
    FeatureStack, GramMatrix, GuidanceMaskPyramid,
};
pub use fields::{downsample, white_noise, ColorField, Dims, Position, ScalarField, VectorField};
pub use losses::{
    color_objective, content_loss, shape_objective, style_loss, view_masks, Evaluation,
    LossWeights, Objective, StyleTarget,
};
pub use optimize::{
    color_pass, finish_sequence, shape_pass, stylize_color, stylize_sequence, stylize_shape,
    ColorInit, ColorResult, LossHistory, Observer, Progress, ShapeResult, StyleTargets,
    StylizationConfig, StylizedFrame,
};
pub use render::{
    render_color, render_color_vjp, render_grayscale, render_grayscale_vjp, rotate_view,
    RenderSettings, RenderedImage, ViewAngle,
};
pub use tensor::Tensor;
pub use transport::{advect, advect_color, advect_velocity, advect_vjp, align_window, TemporalWindow};
pub use vgg::{Conv2d, Layer, Preprocess, Vgg19};

/// Mixes a base seed with an index (splitmix64 finalizer), so per-frame
/// and per-layer random streams differ but stay reproducible.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
