//! Corpus ingestion, stratified splitting, minority upsampling, and the
//! augment / resize / normalize batch stream.

mod batch;
pub(crate) mod dataset;
mod image;
mod transform;

pub use batch::{make_batches, prepare_eval, Batch, Mode, PipelineConfig};
pub use dataset::{ClassMapping, Dataset, Label, LabeledSample, DUPLICATE_MARKER, NEGATIVE, POSITIVE};
pub use image::GrayImage;
pub use transform::{
    apply_augmentation, augment, flip_horizontal, normalize, resize, rotate, AugmentParams,
    NormalizedTensor, NORM_MEAN, NORM_STD,
};
