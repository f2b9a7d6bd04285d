//! Cut-and-paste augmentation for semantic segmentation of multispectral rasters.
//!
//! The pipeline has two halves. Offline, [`extraction`] splits every label
//! mask into per-class connected components and cuts each one out as an
//! image patch plus binary mask; [`bank`] persists those instances. Online,
//! [`paste`] draws instances class-uniformly and pastes them onto training
//! samples, reproducibly from a [`rng::RngState`]. [`metrics`] scores
//! segmentations with (mean) intersection over union, [`dataset`] handles
//! manifests and AOI-disjoint splits, and [`demo`] runs a small synthetic
//! experiment end to end.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases at
//! the crate root pin the common choices.

pub mod bank;
pub mod dataset;
pub mod demo;
pub mod error;
pub mod extraction;
pub mod formats;
pub mod geometry;
pub mod metrics;
pub mod model;
pub mod paste;
pub mod rng;
pub mod scalar;

pub use bank::{bank_stats, load_bank, save_bank, InstanceBank};
pub use error::{Error, Result};
pub use extraction::{connected_components, extract_instances, BBox, ComponentLabeling, Connectivity, InstanceRecord};
pub use geometry::Transform;
pub use metrics::{ConfusionMatrix, MiouPolicy};
pub use model::{BinaryMask, ClassMap, Raster, Sample, SemanticMask, IGNORE};
pub use paste::{augment_sample, AugmentConfig, Augmented, PasteEvent};
pub use rng::{derive_rng, DetRng, RngState};
pub use scalar::{Dtype, Scalar};

pub type Raster32 = Raster<f32>;
pub type Raster64 = Raster<f64>;
pub type Sample32 = Sample<f32>;
pub type Sample64 = Sample<f64>;
pub type InstanceRecord32 = InstanceRecord<f32>;
pub type InstanceRecord64 = InstanceRecord<f64>;
pub type InstanceBank32 = InstanceBank<f32>;
pub type InstanceBank64 = InstanceBank<f64>;
pub type PixelClassifier32 = demo::PixelClassifier<f32>;
pub type PixelClassifier64 = demo::PixelClassifier<f64>;
