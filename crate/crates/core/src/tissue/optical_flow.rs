//! Block-wise pyramidal Lucas-Kanade flow with vector-median cleanup.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::Image2;

/// Motion vectors on a block grid, in pixels per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowGrid {
    /// Blocks along (columns, rows).
    pub blocks: [usize; 2],
    pub window: usize,
    /// `(dx, dy)` per block, row-major; `dx` along columns, `dy` along rows.
    pub vectors: Vec<[f64; 2]>,
    /// Whether the block had enough texture for a direct estimate.
    pub valid: Vec<bool>,
}

impl FlowGrid {
    pub fn get(&self, bx: usize, by: usize) -> [f64; 2] {
        self.vectors[by * self.blocks[0] + bx]
    }

    /// Component-wise median of all vectors.
    pub fn median(&self) -> [f64; 2] {
        let med = |c: usize| median(self.vectors.iter().map(|v| v[c]).collect());
        [med(0), med(1)]
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn downsample(img: &Image2) -> Image2 {
    let (w, h) = (img.width / 2, img.height / 2);
    let mut out = Image2::zeros(w, h);
    for y in 0..h {
        for x in 0..w {
            let s = img.get(2 * x, 2 * y)
                + img.get(2 * x + 1, 2 * y)
                + img.get(2 * x, 2 * y + 1)
                + img.get(2 * x + 1, 2 * y + 1);
            out.set(x, y, 0.25 * s);
        }
    }
    out
}

fn gradients(img: &Image2) -> (Image2, Image2) {
    let (w, h) = (img.width, img.height);
    let mut gx = Image2::zeros(w, h);
    let mut gy = Image2::zeros(w, h);
    for y in 0..h {
        for x in 0..w {
            let (xl, xr) = (x.saturating_sub(1), (x + 1).min(w - 1));
            let (yu, yd) = (y.saturating_sub(1), (y + 1).min(h - 1));
            gx.set(x, y, (img.get(xr, y) - img.get(xl, y)) / (xr - xl).max(1) as f64);
            gy.set(x, y, (img.get(x, yd) - img.get(x, yu)) / (yd - yu).max(1) as f64);
        }
    }
    (gx, gy)
}

struct Level {
    a: Image2,
    b: Image2,
    gx: Image2,
    gy: Image2,
}

const MAX_ITERS: usize = 30;
const CONVERGED_PX: f64 = 1e-4;
const MIN_REGION: usize = 8;

/// Iterative LK on one region; returns the refined displacement, or `None`
/// if the structure tensor is singular.
fn lk_region(
    level: &Level,
    x0: usize,
    y0: usize,
    size_x: usize,
    size_y: usize,
    init: [f64; 2],
    eig_floor: f64,
) -> Option<[f64; 2]> {
    let (mut gxx, mut gxy, mut gyy) = (0.0, 0.0, 0.0);
    for y in y0..y0 + size_y {
        for x in x0..x0 + size_x {
            let (ix, iy) = (level.gx.get(x, y), level.gy.get(x, y));
            gxx += ix * ix;
            gxy += ix * iy;
            gyy += iy * iy;
        }
    }
    let tr = gxx + gyy;
    let det = gxx * gyy - gxy * gxy;
    let lmin = 0.5 * (tr - ((gxx - gyy).powi(2) + 4.0 * gxy * gxy).sqrt());
    if !(lmin > eig_floor * (size_x * size_y) as f64) || det <= 0.0 {
        return None;
    }
    let mut d = init;
    for _ in 0..MAX_ITERS {
        let (mut bx, mut by) = (0.0, 0.0);
        for y in y0..y0 + size_y {
            for x in x0..x0 + size_x {
                let it = level.b.bilinear(x as f64 + d[0], y as f64 + d[1]) - level.a.get(x, y);
                bx += level.gx.get(x, y) * it;
                by += level.gy.get(x, y) * it;
            }
        }
        let ux = -(gyy * bx - gxy * by) / det;
        let uy = -(gxx * by - gxy * bx) / det;
        d[0] += ux;
        d[1] += uy;
        if ux.abs().max(uy.abs()) < CONVERGED_PX {
            break;
        }
    }
    Some(d)
}

/// Dense block flow from `frame_a` to `frame_b`.
pub fn optical_flow(frame_a: &Image2, frame_b: &Image2, window: usize, median_radius: usize) -> Result<FlowGrid> {
    if frame_a.width != frame_b.width || frame_a.height != frame_b.height {
        return Err(Error::DimMismatch("optical flow frames differ in size".into()));
    }
    if window < 2 || window > frame_a.width || window > frame_a.height {
        return Err(Error::invalid(
            "optical flow window must fit inside the frame and be >= 2",
        ));
    }
    let blocks = [frame_a.width / window, frame_a.height / window];
    // pyramid deep enough that half a window becomes about a pixel at the top
    let mut n_levels = 1;
    while (window >> n_levels) >= 2
        && (frame_a.width >> n_levels) >= 2 * MIN_REGION
        && (frame_a.height >> n_levels) >= 2 * MIN_REGION
        && (window / 2) >> (n_levels - 1) > 1
    {
        n_levels += 1;
    }
    let mut levels = Vec::with_capacity(n_levels);
    let (mut a, mut b) = (frame_a.clone(), frame_b.clone());
    for l in 0..n_levels {
        if l > 0 {
            a = downsample(&a);
            b = downsample(&b);
        }
        let (gx, gy) = gradients(&a);
        levels.push(Level {
            a: a.clone(),
            b: b.clone(),
            gx,
            gy,
        });
    }
    let energy = frame_a.data.iter().map(|v| v * v).sum::<f64>() / frame_a.data.len() as f64;
    let eig_floor = 1e-10 * energy.max(f64::MIN_POSITIVE);

    let estimates: Vec<Option<[f64; 2]>> = (0..blocks[0] * blocks[1])
        .into_par_iter()
        .map(|bi| {
            let (bx, by) = (bi % blocks[0], bi / blocks[0]);
            let cx = (bx * window) as f64 + 0.5 * window as f64;
            let cy = (by * window) as f64 + 0.5 * window as f64;
            let mut d = [0.0, 0.0];
            let mut ok = false;
            for l in (0..n_levels).rev() {
                let lev = &levels[l];
                let scale = (1usize << l) as f64;
                let size = ((window >> l).max(MIN_REGION)).min(lev.a.width).min(lev.a.height);
                let x0 = ((cx / scale - 0.5 * size as f64).round().max(0.0) as usize).min(lev.a.width - size);
                let y0 = ((cy / scale - 0.5 * size as f64).round().max(0.0) as usize).min(lev.a.height - size);
                match lk_region(lev, x0, y0, size, size, d, eig_floor) {
                    Some(nd) => {
                        d = nd;
                        ok = l == 0;
                    }
                    None => ok = false,
                }
                if l > 0 {
                    d = [2.0 * d[0], 2.0 * d[1]];
                }
            }
            ok.then_some(d)
        })
        .collect();

    let valid: Vec<bool> = estimates.iter().map(Option::is_some).collect();
    let raw: Vec<[f64; 2]> = estimates.iter().map(|e| e.unwrap_or([0.0, 0.0])).collect();
    let filled = fill_invalid(&raw, &valid, blocks);
    let vectors = vector_median(&filled, blocks, median_radius);
    Ok(FlowGrid {
        blocks,
        window,
        vectors,
        valid,
    })
}

/// Replace invalid vectors with the component-wise median of valid neighbors,
/// widening the neighborhood until one is found (zero if none exist).
fn fill_invalid(v: &[[f64; 2]], valid: &[bool], blocks: [usize; 2]) -> Vec<[f64; 2]> {
    let (nx, ny) = (blocks[0] as i64, blocks[1] as i64);
    let max_r = nx.max(ny);
    let mut out = v.to_vec();
    for i in 0..v.len() {
        if valid[i] {
            continue;
        }
        let (x, y) = ((i as i64) % nx, (i as i64) / nx);
        out[i] = [0.0, 0.0];
        for r in 1..=max_r {
            let mut cx = Vec::new();
            let mut cy = Vec::new();
            for yy in (y - r).max(0)..=(y + r).min(ny - 1) {
                for xx in (x - r).max(0)..=(x + r).min(nx - 1) {
                    let j = (yy * nx + xx) as usize;
                    if valid[j] {
                        cx.push(v[j][0]);
                        cy.push(v[j][1]);
                    }
                }
            }
            if !cx.is_empty() {
                out[i] = [median(cx), median(cy)];
                break;
            }
        }
    }
    out
}

/// Vector median: the neighbor minimizing the summed distance to all others.
fn vector_median(v: &[[f64; 2]], blocks: [usize; 2], radius: usize) -> Vec<[f64; 2]> {
    if radius == 0 {
        return v.to_vec();
    }
    let (nx, ny) = (blocks[0] as i64, blocks[1] as i64);
    let r = radius as i64;
    (0..v.len())
        .map(|i| {
            let (x, y) = ((i as i64) % nx, (i as i64) / nx);
            let mut hood = Vec::new();
            for yy in (y - r).max(0)..=(y + r).min(ny - 1) {
                for xx in (x - r).max(0)..=(x + r).min(nx - 1) {
                    hood.push(v[(yy * nx + xx) as usize]);
                }
            }
            let cost = |a: &[f64; 2]| hood.iter().map(|b| (a[0] - b[0]).hypot(a[1] - b[1])).sum::<f64>();
            *hood
                .iter()
                .min_by(|a, b| cost(a).total_cmp(&cost(b)))
                .expect("neighborhood contains the center")
        })
        .collect()
}
