//! Desk-scale experiment: synthetic imbalanced data, a per-pixel linear
//! classifier, and a baseline vs cut-and-paste comparison.

pub mod classifier;
pub mod experiment;
pub mod synthetic;

pub use classifier::{evaluate_classifier, evaluate_manifest, train_pixel_classifier, PixelClassifier, TrainConfig, TrainOutcome};
pub use experiment::{grid_variants, run_experiment, ExperimentConfig, ExperimentReport, Variant};
pub use synthetic::{gen_synthetic, write_synthetic, SyntheticConfig, SyntheticDataset};
