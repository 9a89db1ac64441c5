//! Estimating classifier error on unlabeled, shifted datasets from feature
//! embeddings and logits.
//!
//! The central statistic is the dispersion score: the log of the
//! size-weighted scatter of pseudo-label cluster centroids around the global
//! feature mean. Lower dispersion means less separable features and, in
//! practice, higher error. A linear fit of error on score over a set of
//! labeled shifted datasets then predicts the error of new unlabeled ones.
//!
//! Modules:
//! - [`bundle`]: on-disk feature bundles and manifests.
//! - [`score`]: pseudo-labels, class centroids, dispersion and compactness.
//! - [`baseline`]: confidence, entropy, ATC, Fréchet distance and MMD.
//! - [`cluster`]: k-means and the classifier-free dispersion variant.
//! - [`eval`]: true error, regression fits, rank correlation, benchmarks.
//! - [`synth`]: synthetic Gaussian-mixture shift suites.
//! - [`cli`]: the `fsep` command-line front end.

pub mod baseline;
pub mod bundle;
pub mod cli;
pub mod cluster;
pub mod error;
pub mod eval;
pub mod score;
pub mod synth;

pub use bundle::{
    read_bundle, validate_bundle, write_bundle, DatasetMeta, FeatureBundle, Manifest,
};
pub use error::{Error, Result};
pub use score::{LabelSource, ScoreKind, ScoreResult};
