//! Evidential uncertainty over retrieval similarity matrices.
//!
//! The crate turns query-by-video similarity scores from two branches (frame
//! and clip scale) into subjective opinions, partitions queries into precise,
//! polysemous and under-determined sets, fuses the branch opinions with
//! Dempster's rule, recalibrates labels of polysemous queries, and builds
//! soft clip-query assignments with a dustbin-augmented Sinkhorn solver.
//!
//! | Module | Contents |
//! |--------|----------|
//! | [`evidence`] | evidence mapping, Dirichlet opinions, digamma, aleatoric uncertainty |
//! | [`identification`] | adaptive thresholds, three-way partition, partition fusion |
//! | [`aggregation`] | conflict mass, Dempster combination, opinion → Dirichlet |
//! | [`transport`] | log-domain Sinkhorn, dustbin threshold, flexible transport |
//! | [`losses`] | calibration, evidential loss and gradient, retrieval losses |
//! | [`similarity`] | max-cosine scoring, branch weights, Gaussian mask |
//! | [`harness`] | synthetic instances, file formats, pipeline, reports |

pub mod aggregation;
pub mod error;
pub mod evidence;
pub mod harness;
pub mod identification;
pub mod losses;
pub mod matrix;
pub mod numeric;
pub mod similarity;
pub mod transport;

pub use error::{Error, ErrorKind, Result};
pub use matrix::{Matrix, SimilarityMatrix};
