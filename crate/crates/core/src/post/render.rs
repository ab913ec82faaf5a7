use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Image2, ScalarGrid};

/// `sum_frames |IQ|^2` per voxel.
pub fn power_doppler(frames: &[Vec<Complex64>]) -> Result<Vec<f64>> {
    let n = frames
        .first()
        .map(|f| f.len())
        .ok_or_else(|| Error::invalid("empty ensemble"))?;
    if frames.iter().any(|f| f.len() != n) {
        return Err(Error::DimMismatch("ensemble frames differ in length".into()));
    }
    let mut pd = vec![0.0; n];
    for f in frames {
        pd.iter_mut().zip(f).for_each(|(p, z)| *p += z.norm_sqr());
    }
    Ok(pd)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    /// `20 log10`
    Amplitude,
    /// `10 log10`
    Power,
}

/// Log-compress relative to the maximum, clip to `[-dr, 0]` dB and map to `[0, 1]`.
pub fn render_db(values: &[f64], dynamic_range_db: f64, scale: Scale) -> Result<Vec<f64>> {
    if !(dynamic_range_db > 0.0) {
        return Err(Error::invalid("dynamic range must be > 0"));
    }
    let peak = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if !peak.is_finite() {
        return Err(Error::NonFinite);
    }
    if peak == 0.0 {
        return Err(Error::Degenerate("all-zero volume".into()));
    }
    let factor = match scale {
        Scale::Amplitude => 20.0,
        Scale::Power => 10.0,
    };
    Ok(values
        .iter()
        .map(|v| {
            let db = factor * (v.abs() / peak).log10();
            (db.max(-dynamic_range_db) + dynamic_range_db) / dynamic_range_db
        })
        .collect())
}

/// Envelope `|IQ|` rendered on an amplitude scale.
pub fn bmode(iq: &[Complex64], dynamic_range_db: f64) -> Result<Vec<f64>> {
    let env: Vec<f64> = iq.iter().map(|z| z.norm()).collect();
    render_db(&env, dynamic_range_db, Scale::Amplitude)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    X,
    Y,
    Z,
}

/// Maximum intensity projection. The image keeps the two remaining axes in
/// order (x, y, z), the first as columns: y -> (x cols, z rows), x -> (y, z),
/// z -> (x, y).
pub fn mip(volume: &ScalarGrid, axis: Axis) -> Image2 {
    let [nx, ny, nz] = volume.spec.dims;
    let (w, h, n) = match axis {
        Axis::X => (ny, nz, nx),
        Axis::Y => (nx, nz, ny),
        Axis::Z => (nx, ny, nz),
    };
    let mut img = Image2 {
        width: w,
        height: h,
        data: vec![f64::NEG_INFINITY; w * h],
    };
    for r in 0..h {
        for c in 0..w {
            let mut m = f64::NEG_INFINITY;
            for t in 0..n {
                let (i, j, k) = match axis {
                    Axis::X => (t, c, r),
                    Axis::Y => (c, t, r),
                    Axis::Z => (c, r, t),
                };
                m = m.max(*volume.get(i, j, k));
            }
            img.set(c, r, m);
        }
    }
    img
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;
    use proptest::prelude::*;

    #[test]
    fn power_doppler_values() {
        let f = vec![vec![Complex64::new(0.6, 0.8); 3]; 100];
        assert_eq!(power_doppler(&f).unwrap(), vec![100.0; 3]);
        let z = vec![vec![Complex64::new(0.0, 0.0); 2]; 4];
        assert_eq!(power_doppler(&z).unwrap(), vec![0.0; 2]);
        let d: Vec<Vec<Complex64>> = f.iter().map(|x| x.iter().map(|z| z * 2.0).collect()).collect();
        let (a, b) = (power_doppler(&f).unwrap(), power_doppler(&d).unwrap());
        assert!(a.iter().zip(&b).all(|(x, y)| (y - 4.0 * x).abs() < 1e-9));
    }

    #[test]
    fn render_values() {
        let r = render_db(&[1.0, 0.5, 1e-4, 0.0], 60.0, Scale::Amplitude).unwrap();
        assert_eq!(r[0], 1.0);
        assert!((r[1] - (60.0 - 20.0 * 2f64.log10()) / 60.0).abs() < 1e-12);
        assert!((r[1] - 0.8997).abs() < 1e-4);
        assert_eq!(r[2], 0.0);
        assert_eq!(r[3], 0.0);
        let p = render_db(&[4.0, 2.0], 30.0, Scale::Power).unwrap();
        assert!((p[1] - (30.0 - 10.0 * 2f64.log10()) / 30.0).abs() < 1e-12);
        assert!(render_db(&[0.0, 0.0], 60.0, Scale::Power).is_err());
        assert!(render_db(&[1.0], 0.0, Scale::Power).is_err());
    }

    #[test]
    fn bmode_bright_voxel_and_uniform() {
        let mut iq = vec![Complex64::new(1e-6, 0.0); 9];
        iq[4] = Complex64::new(0.0, 3.0);
        let b = bmode(&iq, 75.0).unwrap();
        assert_eq!(b[4], 1.0);
        assert!(b.iter().enumerate().all(|(i, v)| i == 4 || *v == 0.0));
        let u = bmode(&vec![Complex64::new(0.3, 0.4); 5], 75.0).unwrap();
        assert!(u.iter().all(|v| *v == 1.0));
    }

    #[test]
    fn speckle_spans_range() {
        use rand::SeedableRng;
        use rand_distr::{Distribution, StandardNormal};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let iq: Vec<Complex64> = (0..4096)
            .map(|_| {
                let (a, b): (f64, f64) = (StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng));
                Complex64::new(a, b)
            })
            .collect();
        let b = bmode(&iq, 40.0).unwrap();
        let (lo, hi) = b.iter().fold((1.0f64, 0.0f64), |(l, h), v| (l.min(*v), h.max(*v)));
        assert!(hi - lo >= 0.5);
        assert!(b.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn mip_projections() {
        let spec = GridSpec::new([4, 3, 5], [1.0; 3], [0.0; 3]).unwrap();
        let mut g = ScalarGrid::filled(spec, 0.0);
        *g.get_mut(2, 1, 3) = 7.0;
        let y = mip(&g, Axis::Y);
        assert_eq!((y.width, y.height), (4, 5));
        assert_eq!(y.get(2, 3), 7.0);
        assert_eq!(y.data.iter().filter(|v| **v != 0.0).count(), 1);
        let x = mip(&g, Axis::X);
        assert_eq!((x.width, x.height), (3, 5));
        assert_eq!(x.get(1, 3), 7.0);
        let z = mip(&g, Axis::Z);
        assert_eq!(z.get(2, 1), 7.0);
    }

    proptest! {
        #[test]
        fn mip_max_commutes(vals in proptest::collection::vec(-5.0f64..5.0, 24)) {
            let spec = GridSpec::new([2, 3, 4], [1.0; 3], [0.0; 3]).unwrap();
            let g = ScalarGrid::from_data(spec, vals.clone()).unwrap();
            let max = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            for a in [Axis::X, Axis::Y, Axis::Z] {
                let m = mip(&g, a);
                prop_assert_eq!(m.data.iter().copied().fold(f64::NEG_INFINITY, f64::max), max);
            }
        }

        #[test]
        fn mip_of_constant_along_axis_is_slice(vals in proptest::collection::vec(0.0f64..1.0, 8)) {
            // constant along y: value depends on (x, z) only
            let spec = GridSpec::new([2, 3, 4], [1.0; 3], [0.0; 3]).unwrap();
            let data = (0..24).map(|o| { let [i, _, k] = spec.unravel(o); vals[i + 2 * k] }).collect();
            let g = ScalarGrid::from_data(spec, data).unwrap();
            let m = mip(&g, Axis::Y);
            for k in 0..4 { for i in 0..2 { prop_assert_eq!(m.get(i, k), *g.get(i, 1, k)); } }
        }

        #[test]
        fn render_is_monotone(a in 0.0f64..10.0, b in 0.0f64..10.0) {
            let r = render_db(&[a, b, 10.0], 60.0, Scale::Amplitude).unwrap();
            prop_assert_eq!(a >= b, r[0] >= r[1] || (a - b).abs() < 1e-15);
            prop_assert!(r.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }
}
