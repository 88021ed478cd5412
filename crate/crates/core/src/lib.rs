//! Two-tier transformer stacking ensemble for binary grayscale image
//! classification.
//!
//! Tier 1 trains heterogeneous [`vit::TinyViT`] base learners under a fixed
//! protocol ([`trainer`]). Tier 2 concatenates their logits, standardizes
//! them, and fits a class-balanced logistic regression ([`meta`]).
//! [`metrics`] scores both tiers.

pub mod data;
pub mod error;
pub mod io;
pub mod kv;
pub mod meta;
pub mod metrics;
pub mod rng;
pub mod synth;
pub mod trainer;
pub mod vit;

pub use data::{Dataset, GrayImage, Label, LabeledSample, NormalizedTensor, PipelineConfig};
pub use error::{Error, ErrorKind, Result};
pub use meta::{LogRegModel, MetaFeatures, MetaModel, Standardizer};
pub use metrics::{ConfusionMatrix, MetricsReport, RocPoint};
pub use trainer::{TrainConfig, TrainHistory};
pub use vit::{LogitPair, TinyViT, ViTConfig};
