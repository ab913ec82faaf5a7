use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::rf::TxEvent;

use super::das::{DasConfig, Interpolation};
use super::iq::IqFrame;

/// Sampling layout shared by all IQ frames of one transmit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleLayout {
    pub n_samples: usize,
    pub n_elements: usize,
    pub sampling_rate: f64,
    pub t0: f64,
    pub center_frequency: f64,
}

impl SampleLayout {
    pub fn of(iq: &IqFrame) -> Self {
        Self {
            n_samples: iq.n_samples,
            n_elements: iq.n_elements,
            sampling_rate: iq.sampling_rate,
            t0: iq.t0,
            center_frequency: iq.center_frequency,
        }
    }
}

/// Sparse delay-and-sum operator for one transmit: row `p` maps the flattened
/// IQ frame to the beamformed value at point `p`.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayMatrix {
    pub row_ptr: Vec<usize>,
    pub cols: Vec<u32>,
    pub vals: Vec<Complex64>,
    pub layout: SampleLayout,
    /// Element contributions dropped because the delay fell outside the record.
    pub dropped: usize,
}

/// Elements within the receive aperture `|lateral offset| <= z / (2 F)`; the
/// nearest element is always included.
pub fn aperture(p: &Vec3, elements: &[Vec3], f_number: f64) -> Vec<usize> {
    let half = p[2].abs() / (2.0 * f_number);
    let lateral = |e: &Vec3| ((p[0] - e[0]).powi(2) + (p[1] - e[1]).powi(2)).sqrt();
    let mut out: Vec<usize> = (0..elements.len()).filter(|&i| lateral(&elements[i]) <= half).collect();
    if out.is_empty() {
        let nearest = (0..elements.len())
            .min_by(|&a, &b| lateral(&elements[a]).total_cmp(&lateral(&elements[b])))
            .expect("at least one element");
        out.push(nearest);
    }
    out
}

/// Round-trip delay: plane-wave arrival plus the return path to element `e`.
pub fn round_trip(p: &Vec3, e: &Vec3, tx: &TxEvent, elements: &[Vec3], c: f64) -> f64 {
    tx.arrival_time(p, elements, c) + (p - e).norm() / c
}

impl DelayMatrix {
    pub fn build(
        points: &[Vec3],
        elements: &[Vec3],
        tx: &TxEvent,
        layout: SampleLayout,
        cfg: &DasConfig,
    ) -> Result<Self> {
        let (c, f_number) = (cfg.sound_speed, cfg.f_number);
        if layout.n_elements != elements.len() {
            return Err(Error::DimMismatch(
                "IQ element count differs from the transducer".into(),
            ));
        }
        if layout.n_samples * layout.n_elements > u32::MAX as usize {
            return Err(Error::invalid("IQ frame too large for 32-bit column indices"));
        }
        let rows: Vec<(Vec<(u32, Complex64)>, usize)> = points
            .par_iter()
            .map(|p| {
                let mut row = Vec::new();
                let mut dropped = 0;
                let t_tx = tx.arrival_time(p, elements, c);
                for e in aperture(p, elements, f_number) {
                    let tau = t_tx + (p - elements[e]).norm() / c;
                    let s = (tau - layout.t0) * layout.sampling_rate;
                    let i = s.floor();
                    if !(i >= 0.0) || i as usize + 1 >= layout.n_samples {
                        dropped += 1;
                        continue;
                    }
                    let i = i as usize;
                    let ph = Complex64::new(0.0, 2.0 * PI * layout.center_frequency * tau).exp();
                    let taps = match cfg.interpolation {
                        Interpolation::Linear => [(i, 1.0 - (s - i as f64)), (i + 1, s - i as f64)],
                        Interpolation::Nearest => [(s.round() as usize, 1.0), (i, 0.0)],
                    };
                    for (t, w) in taps {
                        if w != 0.0 {
                            row.push(((t * layout.n_elements + e) as u32, ph * w));
                        }
                    }
                }
                (row, dropped)
            })
            .collect();
        let mut m = DelayMatrix {
            row_ptr: Vec::with_capacity(points.len() + 1),
            cols: Vec::new(),
            vals: Vec::new(),
            layout,
            dropped: 0,
        };
        m.row_ptr.push(0);
        for (row, dropped) in rows {
            m.dropped += dropped;
            for (c, v) in row {
                m.cols.push(c);
                m.vals.push(v);
            }
            m.row_ptr.push(m.cols.len());
        }
        Ok(m)
    }

    pub fn rows(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn bytes(&self) -> usize {
        self.vals.len() * 20 + self.row_ptr.len() * 8
    }

    /// `out[p] += sum_j M[p, j] iq[j]`.
    pub fn apply_add(&self, iq: &IqFrame, out: &mut [Complex64]) -> Result<()> {
        if iq.n_samples != self.layout.n_samples || iq.n_elements != self.layout.n_elements {
            return Err(Error::DimMismatch("IQ frame does not match the delay matrix".into()));
        }
        if out.len() != self.rows() {
            return Err(Error::DimMismatch("output length differs from matrix rows".into()));
        }
        out.par_iter_mut().enumerate().for_each(|(p, o)| {
            let mut acc = Complex64::new(0.0, 0.0);
            for k in self.row_ptr[p]..self.row_ptr[p + 1] {
                acc += self.vals[k] * iq.data[self.cols[k] as usize];
            }
            *o += acc;
        });
        Ok(())
    }
}
