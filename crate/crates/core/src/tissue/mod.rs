//! Perivascular scatterer clouds, in-vessel classification and tissue motion.

mod bandlimited;
mod classify;
mod cloud;
mod lift;
mod motion;
mod optical_flow;

pub use bandlimited::{bandlimited_delta, kernel_1d, BandlimitedProjection};
pub use classify::{classify_in_vessel, ClassifyReport, KERNEL_HALF_WIDTH};
pub use cloud::{generate_cloud, CloudParams, Label, ReflectivityLaw, Region, ScattererCloud};
pub use lift::{lift_flow_to_motion, ImagePlacement};
pub use motion::{advect, Boundary, MotionModel, SampledMotion};
pub use optical_flow::{optical_flow, FlowGrid};
