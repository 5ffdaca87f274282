//! Bistatic crosstalk artifacts in synthetic-aperture imaging with two
//! stationary emitters: forward modelling, backprojection, artifact geometry
//! and mitigation filters.

// `!(a > b)` comparisons are kept on purpose so NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod forward;
pub mod geometry;
pub mod grid;
pub mod imaging;
pub mod io;
pub mod mitigation;
pub mod pipeline;
pub mod scene;
pub mod vec3;

pub use config::{Experiment, ExperimentConfig};
pub use error::{GeometryError, Result, XtalkError};
pub use geometry::{AcquisitionGeometry, Emitter, TrackAxis};
pub use grid::{GridSpec, ScalarField3D};
pub use vec3::Vec3;
