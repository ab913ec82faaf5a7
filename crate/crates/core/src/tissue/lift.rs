use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::grid::{GridSpec, VectorGrid};

use super::motion::MotionModel;
use super::optical_flow::FlowGrid;

/// Placement of the source image in the phantom: the center of pixel (0, 0)
/// sits at `(origin[0], y, origin[1])`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImagePlacement {
    pub origin: [f64; 2],
    /// Pixel pitch (m) along columns (x) and rows (z).
    pub pitch: [f64; 2],
    /// Elevation coordinate of the image plane.
    pub y: f64,
}

/// Turn image-plane flow (px/frame) into a 3D motion model: velocity is
/// `flow * pitch / frame_interval * scale` in the x-z plane, constant across
/// elevation.
pub fn lift_flow_to_motion(
    flow: &FlowGrid,
    placement: &ImagePlacement,
    frame_interval: f64,
    scale: f64,
) -> Result<MotionModel> {
    if !(frame_interval > 0.0) || placement.pitch.iter().any(|p| !(*p > 0.0)) {
        return Err(Error::invalid("frame interval and pixel pitch must be > 0"));
    }
    if flow.vectors.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    let [nx, nz] = flow.blocks;
    let w = flow.window as f64;
    let spec = GridSpec::new(
        [nx, 1, nz],
        [w * placement.pitch[0], 1.0, w * placement.pitch[1]],
        [
            placement.origin[0] + (0.5 * w - 0.5) * placement.pitch[0],
            placement.y,
            placement.origin[1] + (0.5 * w - 0.5) * placement.pitch[1],
        ],
    )?;
    let mut grid = VectorGrid::filled(spec, Vec3::zeros());
    for bz in 0..nz {
        for bx in 0..nx {
            let [dx, dz] = flow.get(bx, bz);
            *grid.get_mut(bx, 0, bz) = Vec3::new(
                dx * placement.pitch[0] / frame_interval * scale,
                0.0,
                dz * placement.pitch[1] / frame_interval * scale,
            );
        }
    }
    if grid.data.iter().all(|v| *v == Vec3::zeros()) {
        return Ok(MotionModel::Static);
    }
    Ok(MotionModel::FlowDerived(grid))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hemo::IntegratorOptions;

    fn flow(v: [f64; 2]) -> FlowGrid {
        FlowGrid {
            blocks: [3, 2],
            window: 8,
            vectors: vec![v; 6],
            valid: vec![true; 6],
        }
    }

    fn placement() -> ImagePlacement {
        ImagePlacement {
            origin: [-1e-3, 2e-3],
            pitch: [100e-6, 100e-6],
            y: 0.0,
        }
    }

    #[test]
    fn unit_conversion() {
        let m = lift_flow_to_motion(&flow([1.0, 0.0]), &placement(), 10e-3, 1.0).unwrap();
        let MotionModel::FlowDerived(g) = &m else {
            panic!("expected flow-derived model")
        };
        assert!(g
            .data
            .iter()
            .all(|v| (v[0] - 10e-3).abs() < 1e-15 && v[1] == 0.0 && v[2] == 0.0));
        // constant across elevation
        let opts = IntegratorOptions::default();
        for y in [-5e-3, 0.0, 4e-3] {
            let p = m.displace(&Vec3::new(0.0, y, 3e-3), 0.0, 0.1, &opts).unwrap();
            assert!((p[0] - 1e-3).abs() < 1e-12 && p[1] == y);
        }
    }

    #[test]
    fn scaling_is_exact() {
        for s in [0.1, 0.2, 0.4] {
            let a = lift_flow_to_motion(&flow([0.7, -1.3]), &placement(), 10e-3, 1.0).unwrap();
            let b = lift_flow_to_motion(&flow([0.7, -1.3]), &placement(), 10e-3, s).unwrap();
            let (MotionModel::FlowDerived(ga), MotionModel::FlowDerived(gb)) = (&a, &b) else {
                panic!()
            };
            for (va, vb) in ga.data.iter().zip(&gb.data) {
                assert_eq!(*vb, Vec3::new(0.7 * 100e-6 / 10e-3 * s, 0.0, -1.3 * 100e-6 / 10e-3 * s));
                assert!((vb - va * s).norm() <= 1e-18);
            }
        }
    }

    #[test]
    fn zero_flow_is_static() {
        let m = lift_flow_to_motion(&flow([0.0, 0.0]), &placement(), 10e-3, 1.0).unwrap();
        assert_eq!(m, MotionModel::Static);
    }
}
