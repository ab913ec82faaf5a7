use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::grid::Image2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mse: f64,
    /// dB; `+inf` for identical images (written as "inf").
    #[serde(serialize_with = "ser_psnr", deserialize_with = "de_psnr")]
    pub psnr: f64,
    pub ssim: f64,
}

fn ser_psnr<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_infinite() {
        s.serialize_str("inf")
    } else {
        s.serialize_f64(*v)
    }
}

fn de_psnr<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Num {
        F(f64),
        S(String),
    }
    match Num::deserialize(d)? {
        Num::F(x) => Ok(x),
        Num::S(s) if s == "inf" => Ok(f64::INFINITY),
        Num::S(s) => Err(serde::de::Error::custom(format!("bad psnr {s:?}"))),
    }
}

impl MetricsReport {
    pub fn csv(&self) -> String {
        format!("mse,psnr,ssim\n{},{},{}\n", self.mse, fmt_psnr(self.psnr), self.ssim)
    }
}

fn fmt_psnr(p: f64) -> String {
    if p.is_infinite() {
        "inf".into()
    } else {
        p.to_string()
    }
}

/// `10 log10(1 / mse)` for unit peak; `+inf` at zero error.
pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        -10.0 * mse.log10()
    }
}

pub fn mse(a: &Image2, b: &Image2) -> Result<f64> {
    same_dims(a, b)?;
    Ok(a.data.iter().zip(&b.data).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.data.len() as f64)
}

fn same_dims(a: &Image2, b: &Image2) -> Result<()> {
    if a.width != b.width || a.height != b.height {
        return Err(Error::DimMismatch(format!(
            "{}x{} vs {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    if a.data.is_empty() {
        return Err(Error::invalid("empty image"));
    }
    Ok(())
}

const WINDOW: usize = 11;
const SIGMA: f64 = 1.5;
const K1: f64 = 0.01;
const K2: f64 = 0.03;

fn gaussian_taps() -> Vec<f64> {
    let c = (WINDOW / 2) as f64;
    let w: Vec<f64> = (0..WINDOW)
        .map(|i| (-(i as f64 - c).powi(2) / (2.0 * SIGMA * SIGMA)).exp())
        .collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|x| x / s).collect()
}

/// Separable Gaussian filter with periodic boundaries.
fn blur(data: &[f64], w: usize, h: usize, taps: &[f64]) -> Vec<f64> {
    let half = (taps.len() / 2) as isize;
    let wrap = |i: isize, n: usize| i.rem_euclid(n as isize) as usize;
    let mut tmp = vec![0.0; data.len()];
    for r in 0..h {
        for c in 0..w {
            tmp[r * w + c] = taps
                .iter()
                .enumerate()
                .map(|(t, k)| k * data[r * w + wrap(c as isize + t as isize - half, w)])
                .sum();
        }
    }
    let mut out = vec![0.0; data.len()];
    for r in 0..h {
        for c in 0..w {
            out[r * w + c] = taps
                .iter()
                .enumerate()
                .map(|(t, k)| k * tmp[wrap(r as isize + t as isize - half, h) * w + c])
                .sum();
        }
    }
    out
}

/// Mean local SSIM, 11x11 Gaussian window (sigma 1.5), K1 = 0.01, K2 = 0.03, L = 1.
pub fn ssim(a: &Image2, b: &Image2) -> Result<f64> {
    same_dims(a, b)?;
    let (w, h) = (a.width, a.height);
    let taps = gaussian_taps();
    let prod =
        |f: &dyn Fn(f64, f64) -> f64| -> Vec<f64> { a.data.iter().zip(&b.data).map(|(x, y)| f(*x, *y)).collect() };
    let mu_a = blur(&a.data, w, h, &taps);
    let mu_b = blur(&b.data, w, h, &taps);
    let aa = blur(&prod(&|x, _| x * x), w, h, &taps);
    let bb = blur(&prod(&|_, y| y * y), w, h, &taps);
    let ab = blur(&prod(&|x, y| x * y), w, h, &taps);
    let (c1, c2) = (K1 * K1, K2 * K2);
    let total: f64 = (0..w * h)
        .map(|i| {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let va = aa[i] - ma * ma;
            let vb = bb[i] - mb * mb;
            let cov = ab[i] - ma * mb;
            ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2))
        })
        .sum();
    Ok(total / (w * h) as f64)
}

pub fn metrics(test: &Image2, reference: &Image2) -> Result<MetricsReport> {
    let m = mse(test, reference)?;
    Ok(MetricsReport {
        mse: m,
        psnr: psnr_from_mse(m),
        ssim: if m == 0.0 { 1.0 } else { ssim(test, reference)? },
    })
}
