use rayon::prelude::*;

use crate::grid::{GridSpec, ScalarGrid};

use super::bandlimited::kernel_1d;
use super::cloud::{Label, ScattererCloud};

/// Kernel half-width in nodes used for classification.
pub const KERNEL_HALF_WIDTH: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClassifyReport {
    pub blood: usize,
    pub tissue: usize,
    /// Scatterers that needed the full truncated kernel sum.
    pub evaluated: usize,
    /// Scatterers outside the mask grid (labeled tissue).
    pub outside: usize,
}

/// 3D summed-area table of a voxel predicate, for O(1) box counts.
struct BoxCounter {
    dims: [usize; 3],
    table: Vec<u32>,
}

impl BoxCounter {
    fn new(mask: &ScalarGrid, pred: impl Fn(f64) -> bool) -> Self {
        let [nx, ny, nz] = mask.spec.dims;
        let (sx, sy) = (nx + 1, (nx + 1) * (ny + 1));
        let mut table = vec![0u32; (nx + 1) * (ny + 1) * (nz + 1)];
        for k in 0..nz {
            for j in 0..ny {
                let mut row = 0u32;
                for i in 0..nx {
                    row += pred(mask.data[mask.spec.index(i, j, k)]) as u32;
                    let t = (i + 1) + (j + 1) * sx + (k + 1) * sy;
                    table[t] = row + table[t - sx] + table[t - sy] - table[t - sx - sy];
                }
            }
        }
        Self {
            dims: mask.spec.dims,
            table,
        }
    }

    /// Count of set voxels in `[lo, hi)` per axis.
    fn count(&self, lo: [usize; 3], hi: [usize; 3]) -> u32 {
        let sx = self.dims[0] + 1;
        let sy = sx * (self.dims[1] + 1);
        let at = |i: usize, j: usize, k: usize| self.table[i + j * sx + k * sy] as i64;
        let c = at(hi[0], hi[1], hi[2]) - at(lo[0], hi[1], hi[2]) - at(hi[0], lo[1], hi[2]) - at(hi[0], hi[1], lo[2])
            + at(lo[0], lo[1], hi[2])
            + at(lo[0], hi[1], lo[2])
            + at(hi[0], lo[1], lo[2])
            - at(lo[0], lo[1], lo[2]);
        c as u32
    }
}

/// Mask value at `u` (index space) interpolated with the truncated band-limited kernel.
fn projected_value(spec: &GridSpec, mask: &[f64], u: [f64; 3], lo: [usize; 3], hi: [usize; 3]) -> f64 {
    let w: Vec<Vec<f64>> = (0..3)
        .map(|a| {
            (lo[a]..hi[a])
                .map(|i| kernel_1d(i as f64 - u[a], spec.dims[a]))
                .collect()
        })
        .collect();
    let mut total = 0.0;
    for (kk, k) in (lo[2]..hi[2]).enumerate() {
        let mut plane = 0.0;
        for (jj, j) in (lo[1]..hi[1]).enumerate() {
            let row = spec.index(lo[0], j, k);
            let s: f64 = w[0]
                .iter()
                .zip(&mask[row..row + (hi[0] - lo[0])])
                .map(|(a, b)| a * b)
                .sum();
            plane += w[1][jj] * s;
        }
        total += w[2][kk] * plane;
    }
    total
}

/// Label each scatterer blood when the band-limited projection of the vessel
/// mask at its position exceeds 0.5.
pub fn classify_in_vessel(cloud: &mut ScattererCloud, mask: &ScalarGrid) -> ClassifyReport {
    let spec = mask.spec;
    // boxes with no vessel voxels are tissue and boxes full of saturated voxels
    // are blood without evaluating the kernel
    let any = BoxCounter::new(mask, |m| m != 0.0);
    let full = BoxCounter::new(mask, |m| m >= 1.0);
    let h = KERNEL_HALF_WIDTH;
    let results: Vec<(Label, u8)> = cloud
        .positions
        .par_iter()
        .map(|p| {
            if !spec.contains(p) {
                return (Label::Tissue, 2);
            }
            let u = spec.to_index_space(p);
            let mut lo = [0usize; 3];
            let mut hi = [0usize; 3];
            let mut full_window = true;
            for a in 0..3 {
                let c = u[a].round().clamp(0.0, (spec.dims[a] - 1) as f64) as usize;
                lo[a] = c.saturating_sub(h);
                hi[a] = (c + h + 1).min(spec.dims[a]);
                full_window &= hi[a] - lo[a] == (2 * h + 1).min(spec.dims[a]);
            }
            let volume = ((hi[0] - lo[0]) * (hi[1] - lo[1]) * (hi[2] - lo[2])) as u32;
            if any.count(lo, hi) == 0 {
                (Label::Tissue, 0)
            } else if full_window && full.count(lo, hi) == volume {
                (Label::Blood, 0)
            } else {
                let v = projected_value(&spec, &mask.data, u, lo, hi);
                (if v > 0.5 { Label::Blood } else { Label::Tissue }, 1)
            }
        })
        .collect();
    let mut report = ClassifyReport {
        blood: 0,
        tissue: 0,
        evaluated: 0,
        outside: 0,
    };
    for (slot, (label, how)) in cloud.label.iter_mut().zip(results) {
        *slot = label;
        match label {
            Label::Blood => report.blood += 1,
            Label::Tissue => report.tissue += 1,
        }
        match how {
            1 => report.evaluated += 1,
            2 => report.outside += 1,
            _ => {}
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec3;
    use crate::hemo::Tube;
    use crate::rng::RngSeed;
    use crate::tissue::cloud::{generate_cloud, CloudParams, Region};

    fn tube_mask(spec: GridSpec, tube: &Tube) -> ScalarGrid {
        let data = (0..spec.len())
            .map(|i| tube.contains(&spec.position_of(i)) as u8 as f64)
            .collect();
        ScalarGrid::from_data(spec, data).unwrap()
    }

    #[test]
    fn box_counts_match_brute_force() {
        let spec = GridSpec::new([7, 5, 6], [1.0; 3], [0.0; 3]).unwrap();
        let data: Vec<f64> = (0..spec.len()).map(|i| ((i * 7919) % 3 == 0) as u8 as f64).collect();
        let m = ScalarGrid::from_data(spec, data).unwrap();
        let c = BoxCounter::new(&m, |v| v > 0.5);
        let (lo, hi) = ([1, 0, 2], [6, 4, 5]);
        let mut brute = 0;
        for k in lo[2]..hi[2] {
            for j in lo[1]..hi[1] {
                for i in lo[0]..hi[0] {
                    brute += (*m.get(i, j, k) > 0.5) as u32;
                }
            }
        }
        assert_eq!(c.count(lo, hi), brute);
    }

    #[test]
    fn tube_classification_agrees_with_cylinder_oracle() {
        let lambda = 200e-6;
        // lambda/2 grid, vessel volume fraction about 2.5%
        let tube = Tube {
            start: [-4e-3, 0.0, 4e-3],
            end: [4e-3, 0.0, 4e-3],
            radius: 0.5e-3,
        };
        let region = Region::new(Vec3::new(-4e-3, -2e-3, 0.0), Vec3::new(4e-3, 2e-3, 8e-3));
        let spec = GridSpec::spanning(Vec3::from(region.min), Vec3::from(region.max), [81, 41, 81]).unwrap();
        let mask = tube_mask(spec, &tube);
        let mut cloud = generate_cloud(&region, lambda, &CloudParams::default(), RngSeed(4)).unwrap();
        let report = classify_in_vessel(&mut cloud, &mask);
        assert_eq!(report.blood + report.tissue, cloud.len());
        let mut agree = 0;
        for (p, l) in cloud.positions.iter().zip(&cloud.label) {
            let inside = tube.contains(p);
            if inside == (*l == Label::Blood) {
                agree += 1;
            } else {
                // disagreements sit within a voxel of the wall
                let r = (p.yz() - Vec3::from(tube.start).yz()).norm();
                assert!((r - tube.radius).abs() < 1.8 * spec.spacing[0], "r = {r}");
            }
        }
        let frac = agree as f64 / cloud.len() as f64;
        assert!(frac >= 0.995, "agreement {frac}");
        assert!(report.evaluated < cloud.len());
    }

    #[test]
    fn centerline_is_blood_far_is_tissue() {
        let tube = Tube {
            start: [0.0, 0.0, 0.0],
            end: [0.0, 0.0, 4e-3],
            radius: 0.5e-3,
        };
        let spec = GridSpec::spanning(Vec3::new(-2e-3, -2e-3, 0.0), Vec3::new(2e-3, 2e-3, 4e-3), [41, 41, 41]).unwrap();
        let mask = tube_mask(spec, &tube);
        let mut c = ScattererCloud::default();
        c.push(Vec3::new(1.3e-5, -0.7e-5, 2e-3), 1.0, Label::Tissue);
        c.push(Vec3::new(1.7e-3, 1.5e-3, 1e-3), 1.0, Label::Blood);
        c.push(Vec3::new(9.0, 0.0, 0.0), 1.0, Label::Blood);
        let r = classify_in_vessel(&mut c, &mask);
        assert_eq!(c.label, vec![Label::Blood, Label::Tissue, Label::Tissue]);
        assert_eq!(r.outside, 1);
    }
}
