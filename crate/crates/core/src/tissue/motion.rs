use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{axis_rotation, Vec3};
use crate::grid::VectorGrid;
use crate::hemo::{integrate_fn, IntegratorOptions};

use super::cloud::{Region, ScattererCloud};

/// Time-ordered sequence of sampled velocity grids.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledMotion {
    pub times: Vec<f64>,
    pub grids: Vec<VectorGrid>,
}

impl SampledMotion {
    pub fn new(times: Vec<f64>, grids: Vec<VectorGrid>) -> Result<Self> {
        if times.is_empty() || times.len() != grids.len() {
            return Err(Error::invalid("sampled motion needs one time per grid"));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("sampled motion times must be strictly increasing"));
        }
        if grids.iter().any(|g| g.spec != grids[0].spec) {
            return Err(Error::DimMismatch("sampled motion grids differ in geometry".into()));
        }
        Ok(Self { times, grids })
    }

    /// Linear in time (clamped to the sampled range), trilinear in space.
    pub fn velocity(&self, t: f64, p: &Vec3) -> Vec3 {
        let spec = &self.grids[0].spec;
        let at = |i: usize| crate::hemo::trilinear(spec, &self.grids[i].data, p, Vec3::zeros());
        let n = self.times.len();
        if n == 1 || t <= self.times[0] {
            return at(0);
        }
        if t >= self.times[n - 1] {
            return at(n - 1);
        }
        let i = self.times.partition_point(|&x| x <= t) - 1;
        let s = (t - self.times[i]) / (self.times[i + 1] - self.times[i]);
        at(i) * (1.0 - s) + at(i + 1) * s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MotionModel {
    Static,
    /// Uniform translation, m/s.
    Constant {
        velocity: [f64; 3],
    },
    /// Rigid rotation at `omega` rad/s about `axis` through `center`.
    Rotation {
        center: [f64; 3],
        axis: [f64; 3],
        omega: f64,
    },
    #[serde(skip)]
    Field(SampledMotion),
    /// In-plane (x, z) velocities replicated along elevation.
    #[serde(skip)]
    FlowDerived(VectorGrid),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    /// Clamp to the region faces.
    #[default]
    Freeze,
    /// Periodic wrap-around.
    Wrap,
}

impl MotionModel {
    pub fn rotation(center: Vec3, axis: Vec3, omega: f64) -> Result<Self> {
        let n = axis.norm();
        if !(n > 0.0) {
            return Err(Error::invalid("rotation axis must be nonzero"));
        }
        Ok(MotionModel::Rotation {
            center: center.into(),
            axis: (axis / n).into(),
            omega,
        })
    }

    pub fn is_static(&self) -> bool {
        match self {
            MotionModel::Static => true,
            MotionModel::Constant { velocity } => velocity.iter().all(|&v| v == 0.0),
            MotionModel::Rotation { omega, .. } => *omega == 0.0,
            MotionModel::Field(s) => s.grids.iter().all(|g| g.data.iter().all(|v| *v == Vec3::zeros())),
            MotionModel::FlowDerived(g) => g.data.iter().all(|v| *v == Vec3::zeros()),
        }
    }

    /// Displaced position after `dt` from time `t0`, ignoring boundaries.
    pub fn displace(&self, p: &Vec3, t0: f64, dt: f64, opts: &IntegratorOptions) -> Result<Vec3> {
        match self {
            MotionModel::Static => Ok(*p),
            MotionModel::Constant { velocity } => Ok(p + Vec3::from(*velocity) * dt),
            MotionModel::Rotation { center, axis, omega } => {
                let c = Vec3::from(*center);
                let r = axis_rotation(&Vec3::from(*axis), omega * dt);
                Ok(c + r * (p - c))
            }
            MotionModel::Field(s) => integrate_fn(|t, q| s.velocity(t, q), *p, t0, dt, opts),
            MotionModel::FlowDerived(g) => integrate_fn(
                |_, q| crate::hemo::trilinear(&g.spec, &g.data, q, Vec3::zeros()),
                *p,
                t0,
                dt,
                opts,
            ),
        }
    }
}

fn apply_boundary(p: Vec3, region: &Region, mode: Boundary) -> Vec3 {
    let mut q = p;
    for a in 0..3 {
        let (lo, hi) = (region.min[a], region.max[a]);
        q[a] = match mode {
            Boundary::Freeze => q[a].clamp(lo, hi),
            Boundary::Wrap => {
                let w = hi - lo;
                if w > 0.0 {
                    lo + (q[a] - lo).rem_euclid(w)
                } else {
                    lo
                }
            }
        };
    }
    q
}

/// Move every scatterer by the model over `[t0, t0 + dt]`.
pub fn advect(
    cloud: &mut ScattererCloud,
    model: &MotionModel,
    region: &Region,
    boundary: Boundary,
    t0: f64,
    dt: f64,
) -> Result<()> {
    if !(dt > 0.0) {
        return Err(Error::invalid("advection step dt must be > 0"));
    }
    if model.is_static() {
        return Ok(());
    }
    let opts = IntegratorOptions::default();
    cloud.positions.par_iter_mut().try_for_each(|p| {
        let q = model.displace(p, t0, dt, &opts)?;
        *p = apply_boundary(q, region, boundary);
        Ok(())
    })
}
