use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;

use crate::error::{Error, Result};
use crate::geometry::{any_perpendicular, Vec3};

use super::field::{FlowField, InletPlane};
use super::integrate::{trace_back_to, IntegratorOptions, Stop};

/// Discrete injection density on the inlet disk.
#[derive(Debug, Clone, PartialEq)]
pub struct InletDensity {
    pub points: Vec<Vec3>,
    pub weights: Vec<f64>,
    /// Lattice spacing used for in-plane jitter (0 disables jitter).
    pub cell: f64,
    pub plane: InletPlane,
}

const JITTER_TRIES: usize = 64;

impl InletDensity {
    /// Density from explicit points and non-negative weights (normalized here).
    pub fn from_points(points: Vec<Vec3>, weights: Vec<f64>, cell: f64, plane: InletPlane) -> Result<Self> {
        if points.len() != weights.len() || points.is_empty() {
            return Err(Error::invalid(
                "inlet density needs matching non-empty points and weights",
            ));
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::invalid("inlet weights must be finite and non-negative"));
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::ZeroFlux);
        }
        Ok(Self {
            points,
            weights: weights.iter().map(|w| w / total).collect(),
            cell: cell.max(0.0),
            plane,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn basis(&self) -> (Vec3, Vec3) {
        let n = self.plane.unit_normal();
        let e1 = any_perpendicular(&n).normalize();
        (e1, n.cross(&e1))
    }

    /// Draw one injection point: a weighted lattice node plus uniform in-plane
    /// jitter within its cell, kept inside the disk and the vessel mask.
    pub fn sample<R: Rng + ?Sized>(&self, field: &FlowField, rng: &mut R) -> Vec3 {
        let dist = WeightedIndex::new(&self.weights).expect("weights validated on construction");
        let base = self.points[dist.sample(rng)];
        if self.cell == 0.0 {
            return base;
        }
        let (e1, e2) = self.basis();
        for _ in 0..JITTER_TRIES {
            let a = rng.random_range(-0.5..0.5) * self.cell;
            let b = rng.random_range(-0.5..0.5) * self.cell;
            let p = base + e1 * a + e2 * b;
            if self.plane.radial_distance(&p) <= self.plane.radius && field.spec().contains(&p) && field.inside(&p) {
                return p;
            }
        }
        base
    }
}

/// Square lattice of about `n_samples` nodes on the inlet disk, weighted by the
/// inward normal velocity.
pub fn inlet_density(field: &FlowField, n_samples: usize) -> Result<InletDensity> {
    if n_samples == 0 {
        return Err(Error::invalid("inlet_density needs n_samples > 0"));
    }
    let plane = field.inlet;
    let r = plane.radius;
    let n = plane.unit_normal();
    let e1 = any_perpendicular(&n).normalize();
    let e2 = n.cross(&e1);
    let spacing = r * (std::f64::consts::PI / n_samples as f64).sqrt();
    let half = (r / spacing).floor() as i64;
    let mut points = Vec::new();
    let mut weights = Vec::new();
    for j in -half..=half {
        for i in -half..=half {
            let (a, b) = (i as f64 * spacing, j as f64 * spacing);
            if a * a + b * b > r * r {
                continue;
            }
            let p = plane.center() + e1 * a + e2 * b;
            if !field.spec().contains(&p) || !field.inside(&p) {
                continue;
            }
            let flux = field.velocity_clamped(&p).dot(&n).max(0.0);
            points.push(p);
            weights.push(flux);
        }
    }
    if points.is_empty() || weights.iter().sum::<f64>() <= 0.0 {
        return Err(Error::ZeroFlux);
    }
    InletDensity::from_points(points, weights, spacing, plane)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BackpropResult {
    /// Inlet-plane crossing points, in seed order (dropped seeds omitted).
    pub points: Vec<Vec3>,
    /// Index of the seed each point came from.
    pub seed_index: Vec<usize>,
    /// Seeds whose paths left the vessel or stalled before reaching the plane.
    pub dropped: usize,
}

/// Trace seeds upstream (`dp/dt = -v`) to the inlet plane.
pub fn backpropagate_inlet(
    field: &FlowField,
    seeds: &[Vec3],
    max_time: f64,
    opts: &IntegratorOptions,
) -> Result<BackpropResult> {
    let plane = field.inlet;
    let mut out = BackpropResult {
        points: Vec::new(),
        seed_index: Vec::new(),
        dropped: 0,
    };
    for (i, s) in seeds.iter().enumerate() {
        if !field.spec().contains(s) || !field.inside(s) || plane.signed_distance(s) <= 0.0 {
            out.dropped += 1;
            continue;
        }
        match trace_back_to(field, *s, max_time, |p| plane.signed_distance(p), opts)? {
            (q, Stop::Event { .. }) => {
                out.points.push(q);
                out.seed_index.push(i);
            }
            _ => out.dropped += 1,
        }
    }
    if out.dropped > 0 {
        log::info!("{} of {} seeds did not reach the inlet plane", out.dropped, seeds.len());
    }
    Ok(out)
}

/// Keep points on the inlet plane (within `distance_tol`) and inside its radius.
pub fn filter_inlet_points(points: &[Vec3], plane: &InletPlane, distance_tol: f64) -> Vec<Vec3> {
    points
        .iter()
        .filter(|p| plane.signed_distance(p).abs() <= distance_tol && plane.radial_distance(p) <= plane.radius)
        .copied()
        .collect()
}
