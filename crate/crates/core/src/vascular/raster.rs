//! Intensity volumes from vessel skeletons.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::VesselTree;
use crate::geometry::{point_segment_distance, Vec3};
use crate::grid::{GridSpec, ScalarGrid};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Kernel {
    /// 1 inside the vessel lumen, 0 outside.
    Step,
    /// `exp(-d^2 / 2 s^2)` with `s = sigma * local radius`.
    Gaussian { sigma: f64 },
}

const GAUSS_SUPPORT: f64 = 4.0;

/// Render `tree` on `spec` with the given kernel; values are normalized to `[0, 1]`.
pub fn rasterize(tree: &VesselTree, spec: &GridSpec, kernel: Kernel) -> ScalarGrid {
    let mut grid = ScalarGrid::filled(*spec, 0.0);
    if tree.is_empty() {
        return grid;
    }
    let min_spacing = spec.spacing.iter().copied().fold(f64::INFINITY, f64::min);
    if let Some(r) = tree.min_radius() {
        if min_spacing > r {
            log::warn!(
                "grid spacing {min_spacing:e} m exceeds the smallest vessel radius {r:e} m; thin vessels will alias"
            );
        }
    }

    // per segment: endpoints, radius, reach and index-space z range
    let segs: Vec<(Vec3, Vec3, f64, f64)> = tree
        .segments
        .iter()
        .map(|s| {
            let r = s.radius();
            let reach = match kernel {
                Kernel::Step => r,
                Kernel::Gaussian { sigma } => GAUSS_SUPPORT * sigma * r,
            };
            (tree.nodes[s.parent], tree.nodes[s.child], r, reach)
        })
        .collect();

    let [nx, ny, _] = spec.dims;
    grid.data.par_chunks_mut(nx * ny).enumerate().for_each(|(k, slab)| {
        let z = spec.origin[2] + k as f64 * spec.spacing[2];
        for (a, b, r, reach) in &segs {
            let lo = a.inf(b).add_scalar(-reach);
            let hi = a.sup(b).add_scalar(*reach);
            if z < lo[2] || z > hi[2] {
                continue;
            }
            let range = |p: usize| {
                let first = ((lo[p] - spec.origin[p]) / spec.spacing[p]).ceil().max(0.0) as usize;
                let last = ((hi[p] - spec.origin[p]) / spec.spacing[p]).floor();
                if last < 0.0 {
                    return first..first;
                }
                first..((last as usize) + 1).min(spec.dims[p])
            };
            for j in range(1) {
                for i in range(0) {
                    let p = spec.position(i, j, k);
                    let (d, _) = point_segment_distance(&p, a, b);
                    let v = match kernel {
                        Kernel::Step => {
                            if d <= *r {
                                1.0
                            } else {
                                0.0
                            }
                        }
                        Kernel::Gaussian { sigma } => {
                            if d > *reach {
                                0.0
                            } else {
                                let s = sigma * r;
                                (-d * d / (2.0 * s * s)).exp()
                            }
                        }
                    };
                    let cell = &mut slab[i + nx * j];
                    if v > *cell {
                        *cell = v;
                    }
                }
            }
        }
    });

    let max = grid.max();
    if max > 0.0 {
        grid.data.iter_mut().for_each(|v| *v /= max);
    }
    grid
}
