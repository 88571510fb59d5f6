//! Canonical part dictionary, joint-anchored warps, depth-aware compositing,
//! and flat-color rendering.

pub mod dictionary;
pub mod ops;
pub mod similarity;
pub mod template;

pub use dictionary::{build_dictionary, erode_disk, gaussian_blur, LabelMap, PartDictionary, PartSpec};
pub use ops::{
    colors_tensor, compute_part_maps, hard_segmentation, render_flat, render_over_background,
    to_pixel, DeformOp, DepthComposeOp, HardSegOp, LimbDepthsOp, MaxOverPartsOp, PartMaps,
    RenderFlatOp, SegMap, DEFAULT_S_MIN,
};
pub use similarity::{limb_similarity, torso_similarity, Affine2D};
pub use template::{builtin_dictionary, builtin_template, TemplateProjection};
