//! Near-field MIMO radar imaging and a multimodal depth-evaluation pipeline.
//!
//! The crate covers the full chain: FSCW signal simulation, backprojection
//! onto a voxel grid, depth extraction, unprojection and alignment of depth
//! maps and meshes, reconstruction metrics, cross-object analysis, and
//! closed-form resolution estimates.

pub mod analysis;
pub mod demo;
pub mod error;
pub mod format;
pub mod geometry;
pub mod imaging;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod resolution;
pub mod signal;

pub use error::{Error, Result};
pub use model::{
    CaptureRecord, DepthImage, DistanceTag, MaterialClass, MaterialTable, PointCloud, ProjectionKind,
    ProjectionModel, SegMask, Transform4, TriMesh, Vec3,
};
