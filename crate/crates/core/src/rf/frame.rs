use std::path::{Path, PathBuf};

use crate::container::{read_container, write_container, Header, Payload};
use crate::error::{Error, Result};

/// Channel data of one transmit, time-major: `samples[t * n_elements + e]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RfFrame {
    pub samples: Vec<f64>,
    pub n_samples: usize,
    pub n_elements: usize,
    pub sampling_rate: f64,
    /// Time of sample 0, s.
    pub t0: f64,
    /// Transmit angle, rad.
    pub angle: f64,
    pub frame: usize,
}

impl RfFrame {
    pub fn at(&self, t: usize, e: usize) -> f64 {
        self.samples[t * self.n_elements + e]
    }

    pub fn channel(&self, e: usize) -> Vec<f64> {
        (0..self.n_samples).map(|t| self.at(t, e)).collect()
    }

    pub fn time(&self, t: usize) -> f64 {
        self.t0 + t as f64 / self.sampling_rate
    }

    pub fn add(&mut self, other: &RfFrame) -> Result<()> {
        if other.n_samples != self.n_samples || other.n_elements != self.n_elements {
            return Err(Error::DimMismatch("RF frames differ in shape".into()));
        }
        self.samples.iter_mut().zip(&other.samples).for_each(|(a, b)| *a += b);
        Ok(())
    }

    pub fn path(dir: &Path, frame: usize, tx: usize) -> PathBuf {
        dir.join(format!("rf_{frame:05}_{tx:02}.fqf"))
    }

    /// Stored as f32.
    pub fn save(&self, path: &Path) -> Result<()> {
        let header = Header::new()
            .with("kind", "rf_frame")
            .with("n_samples", self.n_samples)
            .with("n_elements", self.n_elements)
            .with("sampling_rate", self.sampling_rate)
            .with("t0", self.t0)
            .with("angle", self.angle)
            .with("frame", self.frame);
        write_container(
            path,
            &header,
            Payload::F32(self.samples.iter().map(|&x| x as f32).collect()),
        )
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (h, payload) = read_container(path)?;
        let n_samples = h.get_usize("n_samples")?;
        let n_elements = h.get_usize("n_elements")?;
        let samples = payload
            .to_f64_vec()
            .ok_or_else(|| Error::Header("RF samples must be real".into()))?;
        if samples.len() != n_samples * n_elements {
            return Err(Error::SizeMismatch(format!(
                "{} samples for a {n_samples}x{n_elements} frame",
                samples.len()
            )));
        }
        Ok(Self {
            samples,
            n_samples,
            n_elements,
            sampling_rate: h.get_f64("sampling_rate")?,
            t0: h.get_f64("t0")?,
            angle: h.get_f64("angle")?,
            frame: h.get_usize("frame")?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_f32() {
        let dir = tempfile::tempdir().unwrap();
        let f = RfFrame {
            samples: (0..12).map(|i| i as f64 * 0.1 - 0.3).collect(),
            n_samples: 4,
            n_elements: 3,
            sampling_rate: 30e6,
            t0: 1e-6,
            angle: -0.05,
            frame: 7,
        };
        let p = RfFrame::path(dir.path(), 7, 1);
        f.save(&p).unwrap();
        let g = RfFrame::load(&p).unwrap();
        assert_eq!(g.n_samples, 4);
        assert_eq!(g.angle, -0.05);
        assert_eq!(g.frame, 7);
        for (a, b) in f.samples.iter().zip(&g.samples) {
            assert_eq!(*b, *a as f32 as f64);
        }
        assert_eq!(f.at(2, 1), f.samples[7]);
    }
}
