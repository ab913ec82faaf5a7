//! Simulation engine for ultrafast power Doppler imaging with known ground truth.
//!
//! The stages, in pipeline order:
//!
//! - [`vascular`]: stochastic L-system vessel skeletons and intensity volumes
//! - [`hemo`]: flow fields, inlet densities and blood scatterer tracing
//! - [`tissue`]: perivascular scatterer clouds, in-vessel classification, motion
//! - [`rf`]: frequency-domain RF channel data synthesis
//! - [`beamform`]: memory-bounded delay-and-sum reconstruction
//! - [`post`]: SVD clutter filtering, power Doppler, rendering and metrics
//! - [`pipeline`]: JSON-configured orchestration with stage caching
//!
//! Shared types (grids, poses, seeds, the FQF1 container) live at the crate
//! root and are re-exported here.

pub mod container;
pub mod error;
pub mod geometry;
pub mod grid;
pub mod rng;

pub mod beamform;
pub mod hemo;
pub mod pipeline;
pub mod post;
pub mod rf;
pub mod tissue;
pub mod vascular;

pub use container::{read_container, write_container, Dtype, Header, Payload, Section};
pub use error::{Error, Result};
pub use geometry::{Mat3, Pose3, Vec3};
pub use grid::{GridSpec, Image2, ScalarGrid, VectorGrid, VoxelGrid};
pub use rng::RngSeed;

pub use num_complex::Complex64;
