//! Frequency-domain RF channel synthesis.
//!
//! Per scatterer `s`, element `e`, sub-element `m` and frequency `f`:
//! `G = exp((i k - alpha f) r) / r * D(theta, k) * delta(y, r_e, k)`,
//! transmit `Tx = sum_e W_e exp(i w dtau_e) sum_m G`, receive `Rx_e = sum_m G`,
//! and the element spectrum accumulates `R_s * Tx * Rx_e`. The pulse spectrum
//! is applied once after summation and the time signal is obtained with a
//! single FFT.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::tissue::ScattererCloud;

use super::frame::RfFrame;
use super::transducer::{elevation_log_terms, Transducer, TxEvent};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MediumParams {
    /// m/s
    pub sound_speed: f64,
    /// dB / (cm MHz)
    pub attenuation: f64,
}

impl Default for MediumParams {
    fn default() -> Self {
        Self {
            sound_speed: 1540.0,
            attenuation: 0.5,
        }
    }
}

impl MediumParams {
    /// Amplitude attenuation in Np / (m Hz).
    pub fn alpha(&self) -> f64 {
        self.attenuation * 100.0 / (1e6 * 8.686)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Acquisition {
    /// Hz
    pub sampling_rate: f64,
    /// Time of the first sample, s.
    pub t0: f64,
    /// Record length, s.
    pub duration: f64,
    /// Pulse components below this level (dB re peak) are skipped.
    pub spectrum_floor_db: f64,
    /// Elevation factor is evaluated every `delta_stride` frequency samples and
    /// interpolated log-cubically in between (1 = exact).
    pub delta_stride: usize,
    /// Required `f_s / f_c`.
    pub min_oversampling: f64,
}

impl Default for Acquisition {
    fn default() -> Self {
        Self {
            sampling_rate: 4.0 * 7.6e6,
            t0: 0.0,
            duration: 40e-6,
            spectrum_floor_db: -40.0,
            delta_stride: 8,
            min_oversampling: 4.0,
        }
    }
}

impl Acquisition {
    pub fn n_samples(&self) -> usize {
        (self.duration * self.sampling_rate).round() as usize
    }
}

/// Frequency grid of one simulation: indices `lo..=hi` of the `n`-point DFT.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrequencyPlan {
    pub n: usize,
    pub df: f64,
    pub lo: usize,
    pub hi: usize,
    pub sigma: f64,
    pub f_c: f64,
}

impl FrequencyPlan {
    pub fn new(transducer: &Transducer, acq: &Acquisition) -> Result<Self> {
        let f_c = transducer.center_frequency;
        let f_s = acq.sampling_rate;
        if !(f_s > 0.0) || !(acq.duration > 0.0) {
            return Err(Error::invalid("sampling rate and duration must be > 0"));
        }
        if f_s < acq.min_oversampling * f_c {
            return Err(Error::FrequencyOutOfBand { f_c, f_s });
        }
        let n = acq.n_samples();
        if n < 4 {
            return Err(Error::invalid("record shorter than 4 samples"));
        }
        let df = f_s / n as f64;
        let sigma = 0.5 * transducer.fractional_bandwidth * f_c / (2.0 * std::f64::consts::LN_2).sqrt();
        let floor = 10f64.powf(acq.spectrum_floor_db / 20.0);
        let half = sigma * (-2.0 * floor.ln()).sqrt();
        let lo = (((f_c - half) / df).ceil().max(1.0)) as usize;
        let hi = ((f_c + half) / df).floor() as usize;
        if hi >= n / 2 || hi < lo {
            return Err(Error::FrequencyOutOfBand { f_c, f_s });
        }
        Ok(Self {
            n,
            df,
            lo,
            hi,
            sigma,
            f_c,
        })
    }

    pub fn len(&self) -> usize {
        self.hi - self.lo + 1
    }

    pub fn is_empty(&self) -> bool {
        self.hi < self.lo
    }

    pub fn freq(&self, j: usize) -> f64 {
        (self.lo + j) as f64 * self.df
    }

    /// Gaussian pulse magnitude, unit at `f_c`.
    pub fn pulse(&self, f: f64) -> f64 {
        (-(f - self.f_c).powi(2) / (2.0 * self.sigma * self.sigma)).exp()
    }
}

/// Element spectra, `len` frequencies by `elements`, frequency-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub elements: usize,
    pub data: Vec<Complex64>,
}

impl Spectrum {
    fn zeros(freqs: usize, elements: usize) -> Self {
        Self {
            elements,
            data: vec![Complex64::new(0.0, 0.0); freqs * elements],
        }
    }

    fn add_assign(&mut self, other: &Spectrum) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }
}

/// Sums spectra in a fixed balanced binary tree as they arrive, holding at
/// most `log2(n) + 1` partial sums.
struct PairwiseSum {
    stack: Vec<(u32, Spectrum)>,
}

impl PairwiseSum {
    fn new() -> Self {
        Self { stack: Vec::new() }
    }

    fn push(&mut self, s: Spectrum) {
        let mut item = (0u32, s);
        while let Some(top) = self.stack.last() {
            if top.0 != item.0 {
                break;
            }
            let (level, mut left) = self.stack.pop().expect("non-empty");
            left.add_assign(&item.1);
            item = (level + 1, left);
        }
        self.stack.push(item);
    }

    fn finish(mut self) -> Option<Spectrum> {
        let mut acc = self.stack.pop()?.1;
        while let Some((_, mut left)) = self.stack.pop() {
            left.add_assign(&acc);
            acc = left;
        }
        Some(acc)
    }
}

const SEGMENT: usize = 256;

/// Static per-simulation data shared by all blocks.
struct Setup<'a> {
    transducer: &'a Transducer,
    elements: Vec<Vec3>,
    sub_offsets: Vec<f64>,
    plan: FrequencyPlan,
    /// `W_e exp(i w_j dtau_e)`, frequency-major.
    tx_phase: Vec<Complex64>,
    c: f64,
    alpha: f64,
    delta_stride: usize,
}

impl Setup<'_> {
    fn n_sub(&self) -> usize {
        self.elements.len() * self.sub_offsets.len()
    }
}

/// Cubic through `(ts[i], vals[i])`, returned as its value at 0 and its
/// first three unit-step forward differences there.
fn cubic_differences(ts: [f64; 4], vals: [Complex64; 4]) -> [Complex64; 4] {
    let d1: [Complex64; 3] = std::array::from_fn(|i| (vals[i + 1] - vals[i]) / (ts[i + 1] - ts[i]));
    let d2: [Complex64; 2] = std::array::from_fn(|i| (d1[i + 1] - d1[i]) / (ts[i + 2] - ts[i]));
    let d3 = (d2[1] - d2[0]) / (ts[3] - ts[0]);
    let p = |x: f64| vals[0] + (x - ts[0]) * (d1[0] + (x - ts[1]) * (d2[0] + (x - ts[2]) * d3));
    let v = [p(0.0), p(1.0), p(2.0), p(3.0)];
    [
        v[0],
        v[1] - v[0],
        v[2] - 2.0 * v[1] + v[0],
        v[3] - 3.0 * v[2] + 3.0 * v[1] - v[0],
    ]
}

/// Spectrum of scatterers `range` of the cloud.
fn block_spectrum(setup: &Setup, cloud: &ScattererCloud, range: std::ops::Range<usize>) -> Spectrum {
    let ne = setup.elements.len();
    let v = setup.sub_offsets.len();
    let nsub = setup.n_sub();
    let nf = setup.plan.len();
    // geometry arrays for the block: per (scatterer, sub-element) range and azimuthal sine
    let count = range.len();
    let mut r_sub = vec![0.0f64; count * nsub];
    let mut sin_sub = vec![0.0f64; count * nsub];
    for (local, s) in range.clone().enumerate() {
        let p = cloud.positions[s];
        for (e, el) in setup.elements.iter().enumerate() {
            for (m, off) in setup.sub_offsets.iter().enumerate() {
                let d = p - Vec3::new(el[0] + off, el[1], el[2]);
                let r = d.norm().max(1e-12);
                r_sub[local * nsub + e * v + m] = r;
                sin_sub[local * nsub + e * v + m] = d[0] / r;
            }
        }
    }

    let mut spec = Spectrum::zeros(nf, ne);
    let b = setup.transducer.half_width();
    let two_pi_c = 2.0 * PI / setup.c;
    let df = setup.plan.df;
    spec.data
        .par_chunks_mut(SEGMENT * ne)
        .enumerate()
        .for_each(|(seg, rows)| {
            let j0 = seg * SEGMENT;
            let jn = rows.len() / ne;
            let mut z = vec![Complex64::new(0.0, 0.0); nsub];
            let mut w = vec![Complex64::new(0.0, 0.0); nsub];
            let mut zs = vec![Complex64::new(0.0, 0.0); nsub];
            let mut ws = vec![Complex64::new(0.0, 0.0); nsub];
            // 1 / (2 pi b sin(theta) / c)
            let mut inv_kappa = vec![0.0f64; nsub];
            let mut amp = vec![Complex64::new(0.0, 0.0); ne];
            // elevation factor nodes every `stride` samples, starting one stride
            // before the segment; node m sits at sample (m - 1) * stride
            let stride = setup.delta_stride.clamp(1, SEGMENT);
            let intervals = jn.div_ceil(stride);
            let n_nodes = intervals.max(2) + 3;
            let node_freq = |m: usize| setup.plan.freq(j0) + ((m as f64) - 1.0) * stride as f64 * df;
            let centered_start = node_freq(0) > 0.0;
            let first_node = if centered_start { 0 } else { 1 };
            // per element and Gaussian term
            let nt = 2 * ne;
            let mut log_nodes = vec![Complex64::new(0.0, 0.0); nt * n_nodes];
            let mut active = vec![true; nt];
            let mut delta_cur = vec![Complex64::new(0.0, 0.0); nt];
            let mut delta_s1 = vec![Complex64::new(0.0, 0.0); nt];
            let mut delta_s2 = vec![Complex64::new(0.0, 0.0); nt];
            let mut delta_s3 = vec![Complex64::new(0.0, 0.0); nt];
            for (local, s) in range.clone().enumerate() {
                let refl = cloud.reflectivity[s];
                if refl == 0.0 {
                    continue;
                }
                let p = cloud.positions[s];
                let f0 = setup.plan.freq(j0);
                for i in 0..nsub {
                    let r = r_sub[local * nsub + i];
                    z[i] = Complex64::new(-setup.alpha * f0 * r, two_pi_c * f0 * r).exp() / r;
                    w[i] = Complex64::new(-setup.alpha * df * r, two_pi_c * df * r).exp();
                    let k = two_pi_c * b * sin_sub[local * nsub + i];
                    // a tiny k reproduces the broadside limit of 1
                    let k = if k == 0.0 { 1e-150 } else { k };
                    inv_kappa[i] = 1.0 / k;
                    zs[i] = Complex64::new(0.0, k * f0).exp();
                    ws[i] = Complex64::new(0.0, k * df).exp();
                }
                for (e, el) in setup.elements.iter().enumerate() {
                    let d = p - el;
                    let r = d.norm().max(1e-12);
                    for m in first_node..n_nodes {
                        let k = two_pi_c * node_freq(m);
                        let l = elevation_log_terms(
                            d[1],
                            r,
                            k,
                            setup.transducer.element_height,
                            setup.transducer.elevation_focus,
                            &setup.transducer.elevation,
                        );
                        log_nodes[2 * e * n_nodes + m] = l[0];
                        log_nodes[(2 * e + 1) * n_nodes + m] = l[1];
                    }
                    for g in 0..2 {
                        let v = log_nodes[(2 * e + g) * n_nodes + first_node];
                        active[2 * e + g] = v.is_finite();
                    }
                }
                // log-cubic interpolation through four nodes, advanced by
                // third-order forward differences
                for jj in 0..jn {
                    if jj % stride == 0 {
                        let n = jj / stride;
                        let (m0, t0) = if n == 0 && !centered_start {
                            (1, 0.0)
                        } else {
                            (n, -(stride as f64))
                        };
                        let ts = [
                            t0,
                            t0 + stride as f64,
                            t0 + 2.0 * stride as f64,
                            t0 + 3.0 * stride as f64,
                        ];
                        for t in 0..nt {
                            if !active[t] {
                                delta_cur[t] = Complex64::new(0.0, 0.0);
                                delta_s1[t] = Complex64::new(1.0, 0.0);
                                delta_s2[t] = Complex64::new(1.0, 0.0);
                                delta_s3[t] = Complex64::new(1.0, 0.0);
                                continue;
                            }
                            let row = &log_nodes[t * n_nodes + m0..t * n_nodes + m0 + 4];
                            let d = cubic_differences(ts, [row[0], row[1], row[2], row[3]]);
                            if n == 0 {
                                delta_cur[t] = d[0].exp();
                            }
                            delta_s1[t] = d[1].exp();
                            delta_s2[t] = d[2].exp();
                            delta_s3[t] = d[3].exp();
                        }
                    }
                    let inv_f = 1.0 / setup.plan.freq(j0 + jj);
                    let phase = &setup.tx_phase[(j0 + jj) * ne..(j0 + jj + 1) * ne];
                    let mut tx = Complex64::new(0.0, 0.0);
                    let subs = z
                        .chunks_exact_mut(v)
                        .zip(w.chunks_exact(v))
                        .zip(zs.chunks_exact_mut(v).zip(ws.chunks_exact(v)));
                    let deltas = delta_cur
                        .chunks_exact_mut(2)
                        .zip(delta_s1.chunks_exact_mut(2))
                        .zip(delta_s2.chunks_exact_mut(2).zip(delta_s3.chunks_exact(2)));
                    for (((((z, w), (zs, ws)), ik), ((cur, s1), (s2, s3))), (a, ph)) in subs
                        .zip(inv_kappa.chunks_exact(v))
                        .zip(deltas)
                        .zip(amp.iter_mut().zip(phase))
                    {
                        let mut acc = Complex64::new(0.0, 0.0);
                        for m in 0..v {
                            acc += z[m] * (zs[m].im * ik[m] * inv_f);
                            z[m] *= w[m];
                            zs[m] *= ws[m];
                        }
                        *a = (cur[0] + cur[1]) * acc;
                        for t in 0..2 {
                            cur[t] *= s1[t];
                            s1[t] *= s2[t];
                            s2[t] *= s3[t];
                        }
                        tx += ph * *a;
                    }
                    let t = tx * refl;
                    for (r, a) in rows[jj * ne..(jj + 1) * ne].iter_mut().zip(&amp) {
                        *r += t * a;
                    }
                }
            }
        });
    spec
}

/// How to split the cloud into blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Chunking {
    /// Largest blocks that fit the byte budget.
    Budget(u64),
    /// Exactly this many contiguous blocks (fewer if the cloud is smaller).
    Blocks(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChunkReport {
    pub blocks: usize,
    pub block_len: usize,
    /// Estimated peak working set, bytes.
    pub estimated_bytes: u64,
}

/// Working-set estimate: (fixed bytes, bytes per scatterer in a block).
pub fn memory_estimate(transducer: &Transducer, acq: &Acquisition, n_scatterers: usize) -> Result<(u64, u64)> {
    let plan = FrequencyPlan::new(transducer, acq)?;
    let ne = transducer.element_count() as u64;
    let nsub = ne * transducer.sub_elements as u64;
    let spectrum = plan.len() as u64 * ne * 16;
    let levels = (usize::BITS - n_scatterers.max(1).leading_zeros()) as u64 + 2;
    let time = plan.n as u64 * (ne * 8 + 32);
    let segment_state = (nsub * 56 + ne * 32 * (SEGMENT as u64 + 9)) * rayon::current_num_threads() as u64;
    let fixed = spectrum * (levels + 1) + time + segment_state;
    Ok((fixed, nsub * 16))
}

fn setup<'a>(transducer: &'a Transducer, tx: &TxEvent, medium: &MediumParams, acq: &Acquisition) -> Result<Setup<'a>> {
    transducer.validate()?;
    let elements = transducer.elements();
    if tx.delays.len() != elements.len() || tx.apodization.len() != elements.len() {
        return Err(Error::DimMismatch(
            "transmit event does not match the element count".into(),
        ));
    }
    if !(medium.sound_speed > 0.0) || !(medium.attenuation >= 0.0) {
        return Err(Error::invalid("sound speed must be > 0 and attenuation >= 0"));
    }
    let plan = FrequencyPlan::new(transducer, acq)?;
    let ne = elements.len();
    let mut tx_phase = Vec::with_capacity(plan.len() * ne);
    for j in 0..plan.len() {
        let omega = 2.0 * PI * plan.freq(j);
        for e in 0..ne {
            tx_phase.push(tx.apodization[e] * Complex64::new(0.0, omega * tx.delays[e]).exp());
        }
    }
    Ok(Setup {
        transducer,
        elements,
        sub_offsets: transducer.sub_element_offsets(),
        plan,
        tx_phase,
        c: medium.sound_speed,
        alpha: medium.alpha(),
        delta_stride: acq.delta_stride.max(1),
    })
}

/// Latest echo arrival over the cloud, s.
pub fn max_two_way_time(cloud: &ScattererCloud, transducer: &Transducer, tx: &TxEvent, c: f64) -> f64 {
    let elements = transducer.elements();
    cloud
        .positions
        .iter()
        .map(|p| {
            let back = elements.iter().map(|e| (p - e).norm()).fold(0.0, f64::max);
            tx.arrival_time(p, &elements, c) + back / c
        })
        .fold(0.0, f64::max)
}

/// Sum of block spectra to a time-domain frame.
fn to_frame(setup: &Setup, spectrum: Option<Spectrum>, acq: &Acquisition, tx: &TxEvent) -> Result<RfFrame> {
    let ne = setup.elements.len();
    let n = setup.plan.n;
    let mut samples = vec![0.0f64; n * ne];
    if let Some(spec) = spectrum {
        let fft = FftPlanner::<f64>::new().plan_fft_forward(n);
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        for e in 0..ne {
            buf.iter_mut().for_each(|x| *x = Complex64::new(0.0, 0.0));
            for j in 0..setup.plan.len() {
                let f = setup.plan.freq(j);
                let shift = Complex64::new(0.0, -2.0 * PI * f * acq.t0).exp();
                buf[setup.plan.lo + j] = spec.data[j * ne + e] * setup.plan.pulse(f) * shift;
            }
            fft.process(&mut buf);
            for (t, x) in buf.iter().enumerate() {
                samples[t * ne + e] = 2.0 * x.re;
            }
        }
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite);
    }
    Ok(RfFrame {
        samples,
        n_samples: n,
        n_elements: ne,
        sampling_rate: acq.sampling_rate,
        t0: acq.t0,
        angle: tx.angle,
        frame: 0,
    })
}

fn check_window(
    cloud: &ScattererCloud,
    transducer: &Transducer,
    tx: &TxEvent,
    medium: &MediumParams,
    acq: &Acquisition,
) -> Result<()> {
    let latest = max_two_way_time(cloud, transducer, tx, medium.sound_speed);
    if latest > acq.t0 + acq.duration {
        return Err(Error::invalid(format!(
            "record ends at {:.3e} s but echoes arrive until {latest:.3e} s",
            acq.t0 + acq.duration
        )));
    }
    Ok(())
}

/// Simulate one transmit for the whole cloud in a single block.
pub fn simulate_rf(
    cloud: &ScattererCloud,
    transducer: &Transducer,
    tx: &TxEvent,
    medium: &MediumParams,
    acq: &Acquisition,
) -> Result<RfFrame> {
    simulate_rf_chunked(cloud, transducer, tx, medium, acq, Chunking::Blocks(1)).map(|(f, _)| f)
}

/// Simulate one transmit with the cloud split into contiguous blocks whose
/// spectra are summed in a fixed pairwise order before one inverse transform.
pub fn simulate_rf_chunked(
    cloud: &ScattererCloud,
    transducer: &Transducer,
    tx: &TxEvent,
    medium: &MediumParams,
    acq: &Acquisition,
    chunking: Chunking,
) -> Result<(RfFrame, ChunkReport)> {
    let setup = setup(transducer, tx, medium, acq)?;
    check_window(cloud, transducer, tx, medium, acq)?;
    let n = cloud.len();
    let (fixed, per) = memory_estimate(transducer, acq, n)?;
    let block_len = match chunking {
        Chunking::Blocks(nw) => n.div_ceil(nw.max(1)).max(1),
        Chunking::Budget(budget) => {
            if budget < fixed + per {
                return Err(Error::BudgetTooSmall {
                    budget,
                    required: fixed + per,
                });
            }
            (((budget - fixed) / per) as usize).clamp(1, n.max(1))
        }
    };
    let blocks = n.div_ceil(block_len);
    let mut sum = PairwiseSum::new();
    for b in 0..blocks {
        let range = b * block_len..((b + 1) * block_len).min(n);
        sum.push(block_spectrum(&setup, cloud, range));
    }
    let frame = to_frame(&setup, sum.finish(), acq, tx)?;
    Ok((
        frame,
        ChunkReport {
            blocks,
            block_len,
            estimated_bytes: fixed + per * block_len.min(n) as u64,
        },
    ))
}

/// Analytic signal of each channel (FFT-based Hilbert transform).
pub fn analytic_signal(frame: &RfFrame) -> Vec<Complex64> {
    let (n, ne) = (frame.n_samples, frame.n_elements);
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let mut out = vec![Complex64::new(0.0, 0.0); n * ne];
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    for e in 0..ne {
        for t in 0..n {
            buf[t] = Complex64::new(frame.samples[t * ne + e], 0.0);
        }
        fwd.process(&mut buf);
        for (k, x) in buf.iter_mut().enumerate() {
            let w = if k == 0 || (n % 2 == 0 && k == n / 2) {
                1.0
            } else if k < n.div_ceil(2) {
                2.0
            } else {
                0.0
            };
            *x *= w / n as f64;
        }
        inv.process(&mut buf);
        for t in 0..n {
            out[t * ne + e] = buf[t];
        }
    }
    out
}
