use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::grid::{GridSpec, ScalarGrid};

/// Reference power-Doppler volume: Gaussian splat (`sigma` in m) of every blood
/// scatterer position of every frame, normalized to peak 1. Contributions are
/// truncated at 3 sigma. Single-node axes are projected: distance along them is
/// ignored.
pub fn ground_truth_pd(frames: &[Vec<Vec3>], grid: &GridSpec, sigma: f64) -> Result<ScalarGrid> {
    if !(sigma > 0.0) {
        return Err(Error::invalid("splat sigma must be > 0"));
    }
    if frames.iter().all(|f| f.is_empty()) {
        return Err(Error::invalid("no blood scatterer positions"));
    }
    let mut out = ScalarGrid::filled(*grid, 0.0);
    let reach = 3.0 * sigma;
    let inv = 1.0 / (2.0 * sigma * sigma);
    for p in frames.iter().flatten() {
        let mut lo = [0usize; 3];
        let mut hi = [0usize; 3];
        let mut empty = false;
        for a in 0..3 {
            if grid.dims[a] == 1 {
                continue;
            }
            let s = grid.spacing[a];
            let l = ((p[a] - reach - grid.origin[a]) / s).ceil().max(0.0);
            let h = ((p[a] + reach - grid.origin[a]) / s)
                .floor()
                .min((grid.dims[a] - 1) as f64);
            if h < l {
                empty = true;
                break;
            }
            lo[a] = l as usize;
            hi[a] = h as usize;
        }
        if empty {
            continue;
        }
        for k in lo[2]..=hi[2] {
            for j in lo[1]..=hi[1] {
                for i in lo[0]..=hi[0] {
                    let d = grid.position(i, j, k) - p;
                    let d2: f64 = (0..3).filter(|&a| grid.dims[a] > 1).map(|a| d[a] * d[a]).sum();
                    *out.get_mut(i, j, k) += (-d2 * inv).exp();
                }
            }
        }
    }
    let peak = out.max();
    if peak > 0.0 {
        out.data.iter_mut().for_each(|v| *v /= peak);
    }
    Ok(out)
}
