//! Region-based feature extraction for grayscale images.
//!
//! The core idea: describe each pixel position of a training set by a
//! small vector (its intensity across the training images, or just its
//! coordinates), cluster those descriptors, and treat each cluster as an
//! image region. An image is then summarized by its mean intensity per
//! region, which turns a pixel grid into a short, spatially grounded
//! feature vector.
//!
//! The crate provides the full pipeline around that idea:
//!
//! * [`dataset`]: PGM image collections, bilinear resizing, stratified
//!   train/test splits;
//! * [`pixelspace`]: column-major vectorization and the two pixel
//!   descriptor constructions;
//! * [`clustering`]: deterministic k-means with guaranteed non-empty
//!   clusters, plus the partition file format;
//! * [`projection`]: region-mean projections, variance-based feature
//!   selection, reconstruction, region-map rendering;
//! * [`baseline`]: a mean-centered principal-component projection fitted
//!   through the Gram matrix, for comparison;
//! * [`evaluation`]: repeated-split nearest-neighbor experiments with
//!   CSV output and reproducibility manifests.
//!
//! Everything downstream of a seed is deterministic, including under
//! parallel execution: reductions run in fixed orders and all
//! tie-breaks are explicit.

pub mod baseline;
pub mod clustering;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod pgm;
pub mod pixelspace;
pub mod projection;

pub use baseline::{eigen_fit, eigen_project, load_eigen_model, save_eigen_model, EigenModel};
pub use clustering::{
    kmeans, kmeans_restarts, kmeans_traced, load_partition, save_partition, wcss, KMeansConfig,
    Partition,
};
pub use dataset::{
    dataset_checksum, load_dataset, load_dataset_resized, resize_image, stratified_holdout,
    HoldoutSplit, ImageFormat, ImageMatrix, LabeledDataset,
};
pub use error::{Error, Result};
pub use evaluation::{
    classification_accuracy, fit_region_projection, load_experiment_config, nn1_classify,
    run_few_classes, run_k_sweep, run_overcluster, summarize, EvalContext, EvalResult,
    ExperimentConfig, KmeansParams, RunManifest, SummaryRow,
};
pub use pgm::{read_pgm, write_pgm};
pub use pixelspace::{
    devectorize, pixel_vectors_by_position, pixel_vectors_by_value, vectorize, PixelVectorSet,
    SampleVector,
};
pub use projection::{
    build_projection, feature_variances, load_projection, project, reconstruct, region_map_image,
    representation_error, save_projection, select_top_variance, FeatureVector, ProjectionMatrix,
    SelectionPlan,
};
