//! Direction-field text detection toolkit.
//!
//! The pipeline: polygon annotations rasterize into instance masks
//! ([`geometry`]); each instance gets a unit direction field pointing away
//! from its nearest outside pixel ([`field`]); a predicted field is decoded
//! back into text instances by thresholding, parent-pointer grouping, and
//! per-instance morphology ([`inference`]); detections score against ground
//! truth by IOU matching ([`eval`]). [`loss`] holds the training-side
//! weighting and hard-negative kernels, [`synth`] generates test scenes and
//! field noise, and [`formats`] reads and writes the on-disk formats.
//! [`cli`] wires everything into the `textfield` executable.

pub mod cli;
pub mod eval;
pub mod field;
pub mod formats;
pub mod geometry;
pub mod grid;
pub mod inference;
pub mod loss;
pub mod morph;
pub mod synth;

pub use cli::{trace_boundaries, CliError, RunManifest};
pub use eval::{match_and_score, EvalError, EvalReport};
pub use field::{
    feature_transform, feature_transform_with, generate_field, generate_field_with,
    generate_scene_field, magnitude, magnitude_of, BorderPolicy, DirectionField, FeatureTransform,
    FieldError,
};
pub use formats::FormatError;
pub use geometry::{mask_iou, rasterize, GeometryError, Polygon, PolygonScene};
pub use grid::{BinaryMask, Grid, InstanceMap};
pub use inference::{
    bin_direction, build_forest, detect, filter_unbalanced, group_representatives,
    threshold_candidates, InferenceConfig, InferenceError, Preset, RepGroups, SuperpixelForest,
};
pub use synth::{generate_scene, perturb_field, Family, NoiseModel, SynthError, SynthSpec};

pub use loss::{
    compute_weights, per_pixel_loss, select_hard_negatives, total_loss, HardNegativeSelection,
    LossError, WeightMap,
};
