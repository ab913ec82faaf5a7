//! Band-limited projection of point sources onto a voxel grid.
//!
//! Along an axis with `N` nodes the kernel is the periodic sinc
//! `b(u) = sin(pi u) / (N * Theta(pi u / N))`, with `u` the offset in grid
//! units, `Theta = sin` for odd `N` and `tan` for even `N`.

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::grid::{GridSpec, ScalarGrid};

/// 1D band-limited kernel at offset `u` (grid units) on an axis of `n` nodes.
pub fn kernel_1d(u: f64, n: usize) -> f64 {
    if n <= 1 {
        return 1.0;
    }
    let r = u.round();
    if (u - r).abs() < 1e-13 {
        return if (r as i64).rem_euclid(n as i64) == 0 { 1.0 } else { 0.0 };
    }
    let nf = n as f64;
    let x = std::f64::consts::PI * u;
    let denom = if n % 2 == 0 { (x / nf).tan() } else { (x / nf).sin() };
    x.sin() / (nf * denom)
}

/// Grid geometry plus quadrature weight for source projection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandlimitedProjection {
    pub grid: GridSpec,
    /// `1 / A`, with `A` the voxel volume.
    pub weight: f64,
}

impl BandlimitedProjection {
    pub fn new(grid: GridSpec) -> Self {
        Self {
            grid,
            weight: 1.0 / grid.voxel_volume(),
        }
    }

    /// Kernel values along one axis for a source at index-space coordinate `xi`,
    /// for nodes `start..start+len`.
    pub fn axis_weights(&self, axis: usize, xi: f64, start: usize, len: usize, out: &mut Vec<f64>) {
        out.clear();
        let n = self.grid.dims[axis];
        out.extend((start..start + len).map(|i| kernel_1d(i as f64 - xi, n)));
    }
}

/// Full separable projection of a unit source at `xi` onto every grid node.
pub fn bandlimited_delta(xi: &Vec3, grid: &GridSpec) -> Result<ScalarGrid> {
    if !grid.contains(xi) {
        return Err(Error::OutOfBounds { point: (*xi).into() });
    }
    let u = grid.to_index_space(xi);
    let axes: Vec<Vec<f64>> = (0..3)
        .map(|a| {
            (0..grid.dims[a])
                .map(|i| kernel_1d(i as f64 - u[a], grid.dims[a]))
                .collect()
        })
        .collect();
    let mut out = ScalarGrid::filled(*grid, 0.0);
    for k in 0..grid.dims[2] {
        for j in 0..grid.dims[1] {
            let wjk = axes[1][j] * axes[2][k];
            let row = grid.index(0, j, k);
            for i in 0..grid.dims[0] {
                out.data[row + i] = axes[0][i] * wjk;
            }
        }
    }
    Ok(out)
}
