use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::container::{read_container, write_container, Header, Payload};
use crate::error::{Error, Result};
use crate::rf::RfFrame;

/// Complex baseband channel data, time-major like [`RfFrame`].
#[derive(Debug, Clone, PartialEq)]
pub struct IqFrame {
    pub data: Vec<Complex64>,
    pub n_samples: usize,
    pub n_elements: usize,
    pub sampling_rate: f64,
    pub t0: f64,
    /// Demodulation frequency, Hz.
    pub center_frequency: f64,
    pub angle: f64,
    pub frame: usize,
}

impl IqFrame {
    pub fn at(&self, t: usize, e: usize) -> Complex64 {
        self.data[t * self.n_elements + e]
    }

    pub fn path(dir: &Path, frame: usize, tx: usize) -> PathBuf {
        dir.join(format!("iq_{frame:05}_{tx:02}.fqf"))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let header = Header::new()
            .with("kind", "iq_frame")
            .with("n_samples", self.n_samples)
            .with("n_elements", self.n_elements)
            .with("sampling_rate", self.sampling_rate)
            .with("t0", self.t0)
            .with("center_frequency", self.center_frequency)
            .with("angle", self.angle)
            .with("frame", self.frame);
        write_container(path, &header, Payload::C128(self.data.clone()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (h, payload) = read_container(path)?;
        let n_samples = h.get_usize("n_samples")?;
        let n_elements = h.get_usize("n_elements")?;
        let data = payload
            .to_c128_vec()
            .ok_or_else(|| Error::Header("IQ payload must be complex".into()))?;
        if data.len() != n_samples * n_elements {
            return Err(Error::SizeMismatch("IQ payload does not match its shape".into()));
        }
        Ok(Self {
            data,
            n_samples,
            n_elements,
            sampling_rate: h.get_f64("sampling_rate")?,
            t0: h.get_f64("t0")?,
            center_frequency: h.get_f64("center_frequency")?,
            angle: h.get_f64("angle")?,
            frame: h.get_usize("frame")?,
        })
    }
}

/// Low-pass gain at baseband frequency `f`: flat to `f_c / 2`, raised-cosine
/// roll-off to zero at `f_c`.
pub fn lowpass_gain(f: f64, f_c: f64) -> f64 {
    let a = f.abs();
    if a <= 0.5 * f_c {
        1.0
    } else if a >= f_c {
        0.0
    } else {
        0.5 * (1.0 + (PI * (a - 0.5 * f_c) / (0.5 * f_c)).cos())
    }
}

/// Demodulate by `2 exp(-i 2 pi f_c t)` and low-pass (zero-padded FFT filter).
pub fn rf_to_iq(rf: &RfFrame, center_frequency: f64) -> Result<IqFrame> {
    if !(center_frequency > 0.0) || center_frequency >= 0.5 * rf.sampling_rate {
        return Err(Error::FrequencyOutOfBand {
            f_c: center_frequency,
            f_s: rf.sampling_rate,
        });
    }
    let (n, ne) = (rf.n_samples, rf.n_elements);
    let m = 2 * n.max(1);
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(m);
    let inv = planner.plan_fft_inverse(m);
    let gain: Vec<f64> = (0..m)
        .map(|k| {
            let kk = if k <= m / 2 { k as f64 } else { k as f64 - m as f64 };
            lowpass_gain(kk * rf.sampling_rate / m as f64, center_frequency) / m as f64
        })
        .collect();
    let mix: Vec<Complex64> = (0..n)
        .map(|t| 2.0 * Complex64::new(0.0, -2.0 * PI * center_frequency * rf.time(t)).exp())
        .collect();
    let mut data = vec![Complex64::new(0.0, 0.0); n * ne];
    let mut buf = vec![Complex64::new(0.0, 0.0); m];
    for e in 0..ne {
        for (t, b) in buf.iter_mut().enumerate() {
            *b = if t < n {
                mix[t] * rf.at(t, e)
            } else {
                Complex64::new(0.0, 0.0)
            };
        }
        fwd.process(&mut buf);
        buf.iter_mut().zip(&gain).for_each(|(b, g)| *b *= g);
        inv.process(&mut buf);
        for t in 0..n {
            data[t * ne + e] = buf[t];
        }
    }
    Ok(IqFrame {
        data,
        n_samples: n,
        n_elements: ne,
        sampling_rate: rf.sampling_rate,
        t0: rf.t0,
        center_frequency,
        angle: rf.angle,
        frame: rf.frame,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone_burst(f: f64, f_s: f64, n: usize, center: f64, width: f64) -> RfFrame {
        let samples = (0..n)
            .map(|i| {
                let t = i as f64 / f_s;
                (-(t - center).powi(2) / (2.0 * width * width)).exp() * (2.0 * PI * f * t + 0.3).cos()
            })
            .collect();
        RfFrame {
            samples,
            n_samples: n,
            n_elements: 1,
            sampling_rate: f_s,
            t0: 0.0,
            angle: 0.0,
            frame: 0,
        }
    }

    #[test]
    fn gain_profile() {
        assert_eq!(lowpass_gain(0.0, 5e6), 1.0);
        assert_eq!(lowpass_gain(-2.5e6, 5e6), 1.0);
        assert!((lowpass_gain(3.75e6, 5e6) - 0.5).abs() < 1e-12);
        assert_eq!(lowpass_gain(5e6, 5e6), 0.0);
    }

    #[test]
    fn recovers_envelope_and_phase() {
        let (f_c, f_s) = (5e6, 20e6);
        let rf = tone_burst(f_c, f_s, 400, 10e-6, 1e-6);
        let iq = rf_to_iq(&rf, f_c).unwrap();
        for t in (100..300).step_by(7) {
            let time = t as f64 / f_s;
            let env = (-(time - 10e-6).powi(2) / 2e-12).exp();
            let z = iq.at(t, 0);
            assert!((z.norm() - env).abs() < 1e-3, "t={t} {} vs {env}", z.norm());
            if env > 0.1 {
                assert!((z.arg() - 0.3).abs() < 1e-2);
            }
        }
    }

    #[test]
    fn roundtrip() {
        let rf = tone_burst(5e6, 20e6, 64, 1.5e-6, 0.3e-6);
        let iq = rf_to_iq(&rf, 5e6).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = IqFrame::path(dir.path(), 0, 0);
        iq.save(&p).unwrap();
        assert_eq!(IqFrame::load(&p).unwrap(), iq);
        assert!(rf_to_iq(&rf, 12e6).is_err());
    }
}
