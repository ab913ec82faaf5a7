use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvdReport {
    /// Non-increasing.
    pub singular_values: Vec<f64>,
    /// Pearson correlation of the magnitudes of the left singular vectors,
    /// `n x n` row-major.
    pub correlation: Vec<f64>,
    /// Retained components, 1-based inclusive.
    pub band: [usize; 2],
}

impl SvdReport {
    pub fn modes(&self) -> usize {
        self.singular_values.len()
    }

    pub fn correlation_at(&self, i: usize, j: usize) -> f64 {
        self.correlation[i * self.modes() + j]
    }
}

/// Thin SVD of the Casorati matrix (voxels x frames) via the frame Gram matrix.
#[derive(Debug, Clone)]
pub struct CasoratiSvd {
    /// Non-increasing singular values.
    pub sigma: Vec<f64>,
    /// Right singular vectors as columns, `frames x frames`.
    pub v: DMatrix<Complex64>,
}

fn check_ensemble(frames: &[Vec<Complex64>]) -> Result<usize> {
    let n = frames.len();
    let vox = frames.first().map_or(0, |f| f.len());
    if n < 2 || vox < n {
        return Err(Error::invalid(format!("need 2 <= frames ({n}) <= voxels ({vox})")));
    }
    if frames.iter().any(|f| f.len() != vox) {
        return Err(Error::DimMismatch("ensemble frames differ in length".into()));
    }
    if frames.iter().flatten().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::NonFinite);
    }
    if frames.iter().flatten().all(|z| z.norm_sqr() == 0.0) {
        return Err(Error::Degenerate("all-zero ensemble".into()));
    }
    Ok(vox)
}

impl CasoratiSvd {
    pub fn new(frames: &[Vec<Complex64>]) -> Result<Self> {
        check_ensemble(frames)?;
        let n = frames.len();
        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|a| (a..n).map(move |b| (a, b))).collect();
        let dots: Vec<Complex64> = pairs
            .par_iter()
            .map(|&(a, b)| frames[a].iter().zip(&frames[b]).map(|(x, y)| x.conj() * y).sum())
            .collect();
        let mut gram = DMatrix::<Complex64>::zeros(n, n);
        for (&(a, b), d) in pairs.iter().zip(dots) {
            gram[(a, b)] = d;
            gram[(b, a)] = d.conj();
        }
        let eig = SymmetricEigen::new(gram);
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let sigma = order.iter().map(|&i| eig.eigenvalues[i].max(0.0).sqrt()).collect();
        let v = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
        Ok(Self { sigma, v })
    }

    /// `X V_b V_b^H` for components `lo..=hi` (1-based).
    pub fn reconstruct(&self, frames: &[Vec<Complex64>], lo: usize, hi: usize) -> Result<Vec<Vec<Complex64>>> {
        let n = frames.len();
        if n != self.sigma.len() {
            return Err(Error::DimMismatch("ensemble does not match the decomposition".into()));
        }
        if lo < 1 || lo > hi || hi > n {
            return Err(Error::invalid(format!("band [{lo}, {hi}] outside [1, {n}]")));
        }
        let vb = self.v.columns(lo - 1, hi - lo + 1);
        let proj = &vb * vb.adjoint();
        let vox = frames[0].len();
        let mut out = vec![vec![Complex64::new(0.0, 0.0); vox]; n];
        out.par_iter_mut().enumerate().for_each(|(j, col)| {
            for (i, f) in frames.iter().enumerate() {
                let w = proj[(i, j)];
                if w.norm_sqr() == 0.0 {
                    continue;
                }
                col.iter_mut().zip(f).for_each(|(o, x)| *o += x * w);
            }
        });
        Ok(out)
    }

    /// Left singular vector `k` (0-based): `X v_k / sigma_k`, zero when `sigma_k` vanishes.
    pub fn left_vector(&self, frames: &[Vec<Complex64>], k: usize) -> Vec<Complex64> {
        let vox = frames[0].len();
        let s = self.sigma[k];
        if s <= self.sigma[0] * 1e-12 {
            return vec![Complex64::new(0.0, 0.0); vox];
        }
        (0..vox)
            .into_par_iter()
            .map(|p| {
                frames
                    .iter()
                    .enumerate()
                    .map(|(i, f)| f[p] * self.v[(i, k)])
                    .sum::<Complex64>()
                    / s
            })
            .collect()
    }
}

/// Pearson correlation; 0 when either input has zero variance.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        0.0
    } else {
        sab / (saa * sbb).sqrt()
    }
}

/// SVD clutter filter keeping components `lo..=hi` (1-based, inclusive).
pub fn svd_filter(frames: &[Vec<Complex64>], lo: usize, hi: usize) -> Result<(Vec<Vec<Complex64>>, SvdReport)> {
    let svd = CasoratiSvd::new(frames)?;
    let filtered = svd.reconstruct(frames, lo, hi)?;
    let n = frames.len();
    let mags: Vec<Vec<f64>> = (0..n)
        .map(|k| svd.left_vector(frames, k).iter().map(|z| z.norm()).collect())
        .collect();
    let mut correlation = vec![0.0; n * n];
    for i in 0..n {
        correlation[i * n + i] = 1.0;
        for j in i + 1..n {
            let c = pearson(&mags[i], &mags[j]);
            correlation[i * n + j] = c;
            correlation[j * n + i] = c;
        }
    }
    Ok((
        filtered,
        SvdReport {
            singular_values: svd.sigma,
            correlation,
            band: [lo, hi],
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_ensemble(vox: usize, n: usize, seed: u64) -> Vec<Vec<Complex64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                (0..vox)
                    .map(|_| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
                    .collect()
            })
            .collect()
    }

    fn frob(frames: &[Vec<Complex64>]) -> f64 {
        frames.iter().flatten().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    #[test]
    fn singular_values_match_direct_svd() {
        let f = random_ensemble(40, 6, 1);
        let svd = CasoratiSvd::new(&f).unwrap();
        let x = DMatrix::from_fn(40, 6, |r, c| f[c][r]);
        let mut direct: Vec<f64> = x.svd(false, false).singular_values.iter().copied().collect();
        direct.sort_by(|a, b| b.total_cmp(a));
        for (a, b) in svd.sigma.iter().zip(&direct) {
            assert!((a - b).abs() <= 1e-10 * direct[0]);
        }
        assert!(svd.sigma.windows(2).all(|w| w[0] >= w[1]));
        let energy: f64 = svd.sigma.iter().map(|s| s * s).sum();
        assert!((energy - frob(&f).powi(2)).abs() <= 1e-9 * energy);
    }

    #[test]
    fn full_band_is_identity_and_bands_are_complementary() {
        let f = random_ensemble(30, 5, 2);
        let svd = CasoratiSvd::new(&f).unwrap();
        let all = svd.reconstruct(&f, 1, 5).unwrap();
        let a = svd.reconstruct(&f, 1, 2).unwrap();
        let b = svd.reconstruct(&f, 3, 5).unwrap();
        let scale = frob(&f);
        for j in 0..5 {
            for p in 0..30 {
                assert!((all[j][p] - f[j][p]).norm() <= 1e-9 * scale);
                assert!((a[j][p] + b[j][p] - f[j][p]).norm() <= 1e-9 * scale);
            }
        }
        assert!(svd.reconstruct(&f, 0, 2).is_err());
        assert!(svd.reconstruct(&f, 3, 6).is_err());
    }

    #[test]
    fn identical_frames_are_rank_one() {
        let base = random_ensemble(50, 1, 3).remove(0);
        let f = vec![base; 8];
        let (out, rep) = svd_filter(&f, 2, 8).unwrap();
        assert!(frob(&out) <= 1e-9 * frob(&f));
        assert!(rep.singular_values[1] <= 1e-6 * rep.singular_values[0]);
    }

    #[test]
    fn correlation_is_symmetric_with_unit_diagonal() {
        let f = random_ensemble(60, 5, 4);
        let (_, rep) = svd_filter(&f, 2, 5).unwrap();
        for i in 0..5 {
            assert_eq!(rep.correlation_at(i, i), 1.0);
            for j in 0..5 {
                assert_eq!(rep.correlation_at(i, j), rep.correlation_at(j, i));
                assert!(rep.correlation_at(i, j).abs() <= 1.0 + 1e-12);
            }
        }
    }

    #[test]
    fn clutter_removal_raises_vessel_fraction() {
        // strong static tissue everywhere plus a weak moving signal in a "vessel"
        let vox = 200;
        let vessel: Vec<bool> = (0..vox).map(|p| (90..95).contains(&p)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let tissue: Vec<Complex64> = (0..vox)
            .map(|_| Complex64::new(10.0 * rng.random::<f64>(), 0.0))
            .collect();
        let frames: Vec<Vec<Complex64>> = (0..16)
            .map(|t| {
                (0..vox)
                    .map(|p| {
                        let flow = if vessel[p] {
                            Complex64::from_polar(0.5, 0.9 * t as f64 + 0.3 * p as f64)
                        } else {
                            Complex64::new(0.0, 0.0)
                        };
                        tissue[p] + flow
                    })
                    .collect()
            })
            .collect();
        let frac = |f: &[Vec<Complex64>]| {
            let pd: Vec<f64> = (0..vox).map(|p| f.iter().map(|x| x[p].norm_sqr()).sum()).collect();
            let inside: f64 = pd.iter().zip(&vessel).filter(|(_, v)| **v).map(|(x, _)| x).sum();
            inside / pd.iter().sum::<f64>()
        };
        let (out, _) = svd_filter(&frames, 2, 16).unwrap();
        assert!(frac(&out) > frac(&frames));
        assert!(10.0 * (frac(&out) / frac(&frames)).log10() >= 10.0);
    }

    #[test]
    fn rejects_bad_ensembles() {
        assert!(matches!(
            svd_filter(&vec![vec![Complex64::new(0.0, 0.0); 4]; 3], 2, 3),
            Err(Error::Degenerate(_))
        ));
        assert!(svd_filter(&random_ensemble(3, 5, 6), 1, 5).is_err());
        assert!(svd_filter(&random_ensemble(10, 1, 6), 1, 1).is_err());
    }

    #[test]
    fn pearson_basics() {
        assert!((pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]) - 1.0).abs() < 1e-15);
        assert!((pearson(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]) + 1.0).abs() < 1e-15);
        assert_eq!(pearson(&[1.0, 1.0], &[0.0, 5.0]), 0.0);
    }
}
