//! Flow fields, inlet injection and blood scatterer tracing.

mod field;
mod inlet;
mod integrate;
mod particles;

pub(crate) use field::trilinear;
pub use field::{poiseuille_field, tree_flow_field, FlowField, Fluid, ImportReport, InletPlane, Tube};
pub use inlet::{backpropagate_inlet, filter_inlet_points, inlet_density, BackpropResult, InletDensity};
pub use integrate::{
    advance, integrate_fixed, integrate_fn, integrate_trajectory, IntegratorOptions, Stop, Trajectory,
};
pub use particles::{frame_count, simulate_particles, ParticleEnsemble, ParticleOptions};
