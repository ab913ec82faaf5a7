//! Stochastic parametric L-system vessel generation.

mod grammar;
mod raster;
mod surface;
mod tree;
mod turtle;
mod validate;

pub use grammar::{rewrite, LsystemGrammar, Production};
pub use raster::{rasterize, Kernel};
pub use surface::TriangleMesh;
pub use tree::{Segment, VesselTree};
pub use turtle::{interpret, murray_split, AnomalyProbs, TurtleParams};
pub use validate::{validate_tree, BifurcationReport, ValidationReport, MURRAY_TOLERANCE};
