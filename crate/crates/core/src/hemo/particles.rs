use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::container::{read_sections, take_section, write_sections, Header, Payload, Section};
use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::rng::RngSeed;

use super::field::FlowField;
use super::inlet::InletDensity;
use super::integrate::{advance, IntegratorOptions, Stop};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ParticleOptions {
    pub integrator: IntegratorOptions,
    /// Each particle is pre-advanced by a uniform random age in `[0, warmup]`
    /// seconds so the vessel is populated at frame 0. Zero keeps every
    /// particle on the inlet plane at the start.
    pub warmup: f64,
    /// Re-injections allowed within one frame interval before giving up.
    pub max_reinjections_per_frame: usize,
}

impl Default for ParticleOptions {
    fn default() -> Self {
        Self {
            integrator: IntegratorOptions::default(),
            warmup: 0.0,
            max_reinjections_per_frame: 1000,
        }
    }
}

/// Blood scatterer positions per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleEnsemble {
    /// `frames[i][j]`: particle `j` at time `i * frame_interval`.
    pub frames: Vec<Vec<Vec3>>,
    /// Carried through I/O; not used by RF synthesis.
    pub radius: Option<Vec<f64>>,
    pub frame_interval: f64,
    /// Total re-injections across all particles and frames.
    pub reinjections: usize,
}

impl ParticleEnsemble {
    pub fn count(&self) -> usize {
        self.frames.first().map_or(0, Vec::len)
    }

    pub fn frame_path(dir: &Path, index: usize) -> PathBuf {
        dir.join(format!("particles_{index:05}.fqf"))
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (i, frame) in self.frames.iter().enumerate() {
            let mut header = Header::new()
                .with("kind", "particle_frame")
                .with("frame", i)
                .with("frame_count", self.frames.len())
                .with("time", format!("{:?}", i as f64 * self.frame_interval))
                .with("frame_interval", format!("{:?}", self.frame_interval))
                .with("count", frame.len());
            let mut sections = vec![Section::new(
                "positions",
                Payload::F64(frame.iter().flat_map(|p| [p[0], p[1], p[2]]).collect()),
            )];
            if let Some(r) = &self.radius {
                header.set("has_radius", 1);
                sections.push(Section::new("radius", Payload::F64(r.clone())));
            }
            write_sections(&Self::frame_path(dir, i), &header, &sections)?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let first = Self::frame_path(dir, 0);
        let (h0, _) = read_sections(&first)?;
        let n_frames = h0.get_usize("frame_count")?;
        let frame_interval = h0.get_f64("frame_interval")?;
        let mut frames = Vec::with_capacity(n_frames);
        let mut radius = None;
        for i in 0..n_frames {
            let (h, mut sections) = read_sections(&Self::frame_path(dir, i))?;
            if h.get_usize("frame")? != i {
                return Err(Error::Header(format!("frame file {i} has a mismatched index")));
            }
            let flat = take_section(&mut sections, "positions")?
                .to_f64_vec()
                .ok_or_else(|| Error::Header("positions must be real".into()))?;
            if flat.len() != 3 * h.get_usize("count")? {
                return Err(Error::SizeMismatch("particle count".into()));
            }
            frames.push(flat.chunks_exact(3).map(|c| Vec3::new(c[0], c[1], c[2])).collect());
            if i == 0 && h.get("has_radius").is_some() {
                radius = take_section(&mut sections, "radius")?.to_f64_vec();
            }
        }
        Ok(Self {
            frames,
            radius,
            frame_interval,
            reinjections: 0,
        })
    }
}

/// Number of frames simulated for a duration at a frame rate.
pub fn frame_count(duration: f64, frame_rate: f64) -> usize {
    ((duration * frame_rate).round() as usize).max(1)
}

/// Advance for `dt`, re-injecting at the inlet whenever the particle leaves the
/// vessel and spending the remaining time from the new inlet point.
fn step_with_reinjection<R: Rng>(
    field: &FlowField,
    density: &InletDensity,
    p: Vec3,
    dt: f64,
    opts: &ParticleOptions,
    rng: &mut R,
) -> Result<(Vec3, usize)> {
    let mut p = p;
    let mut remaining = dt;
    let mut count = 0;
    loop {
        let (q, stop) = advance(field, p, remaining, &opts.integrator)?;
        match stop {
            Stop::Exited { time } => {
                count += 1;
                if count > opts.max_reinjections_per_frame {
                    return Err(Error::Flow(
                        "particles exit faster than they can be re-injected; check the inlet".into(),
                    ));
                }
                p = density.sample(field, rng);
                remaining -= time;
                if remaining <= 0.0 {
                    return Ok((p, count));
                }
            }
            _ => return Ok((q, count)),
        }
    }
}

/// Trace `n` blood particles injected from `density`, recording one snapshot
/// per frame at `i / frame_rate`.
pub fn simulate_particles(
    field: &FlowField,
    density: &InletDensity,
    n: usize,
    duration: f64,
    frame_rate: f64,
    seed: RngSeed,
    opts: &ParticleOptions,
) -> Result<ParticleEnsemble> {
    if n == 0 {
        return Err(Error::invalid("particle count must be > 0"));
    }
    if !(frame_rate > 0.0) || !(duration >= 0.0) {
        return Err(Error::invalid("frame_rate must be > 0 and duration >= 0"));
    }
    let n_frames = frame_count(duration, frame_rate);
    let dt = 1.0 / frame_rate;
    // each particle owns its own stream, so results do not depend on scheduling
    let paths: Vec<Result<(Vec<Vec3>, usize)>> = (0..n)
        .into_par_iter()
        .map(|j| {
            let mut rng = seed.derive("particle", j as u64).stream("hemo");
            let mut p = density.sample(field, &mut rng);
            let mut reinjected = 0;
            if opts.warmup > 0.0 {
                let age = rng.random_range(0.0..=opts.warmup);
                let (q, c) = step_with_reinjection(field, density, p, age, opts, &mut rng)?;
                p = q;
                reinjected += c;
            }
            let mut path = Vec::with_capacity(n_frames);
            path.push(p);
            for _ in 1..n_frames {
                let (q, c) = step_with_reinjection(field, density, p, dt, opts, &mut rng)?;
                p = q;
                reinjected += c;
                path.push(p);
            }
            Ok((path, reinjected))
        })
        .collect();
    let mut frames = vec![Vec::with_capacity(n); n_frames];
    let mut reinjections = 0;
    for r in paths {
        let (path, c) = r?;
        reinjections += c;
        for (frame, p) in frames.iter_mut().zip(path) {
            frame.push(p);
        }
    }
    Ok(ParticleEnsemble {
        frames,
        radius: None,
        frame_interval: dt,
        reinjections,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;
    use crate::hemo::field::{poiseuille_field, Tube};
    use crate::hemo::inlet::inlet_density;

    fn field() -> FlowField {
        let tube = Tube {
            start: [0.0, 0.0, 0.0],
            end: [0.0, 0.0, 10e-3],
            radius: 1e-3,
        };
        let spec = GridSpec::new([21, 21, 21], [0.125e-3, 0.125e-3, 0.5e-3], [-1.25e-3, -1.25e-3, 0.0]).unwrap();
        poiseuille_field(&tube, 0.05, &spec).unwrap()
    }

    #[test]
    fn count_is_constant_with_reinjection() {
        let f = field();
        let d = inlet_density(&f, 50).unwrap();
        let e = simulate_particles(&f, &d, 200, 0.5, 100.0, RngSeed(1), &ParticleOptions::default()).unwrap();
        assert_eq!(e.frames.len(), 50);
        assert!(e.frames.iter().all(|fr| fr.len() == 200));
        assert!(e.reinjections > 0);
        assert!(e.frames.iter().flatten().all(|p| f.spec().contains(p)));
    }

    #[test]
    fn centerline_speed_matches_vmax() {
        let f = field();
        let d = InletDensity::from_points(vec![Vec3::zeros()], vec![1.0], 0.0, f.inlet).unwrap();
        let e = simulate_particles(&f, &d, 4, 0.1, 100.0, RngSeed(2), &ParticleOptions::default()).unwrap();
        let z_end = e.frames.last().unwrap()[0][2];
        let speed = z_end / (9.0 * e.frame_interval);
        assert!((speed / 0.05 - 1.0).abs() < 0.02, "{speed}");
    }

    #[test]
    fn zero_field_frames_are_identical() {
        let mut f = field();
        let d = inlet_density(&f, 50).unwrap();
        f.velocity.data.iter_mut().for_each(|v| *v = Vec3::zeros());
        let e = simulate_particles(&f, &d, 30, 0.1, 100.0, RngSeed(3), &ParticleOptions::default()).unwrap();
        assert!(e.frames.iter().all(|fr| *fr == e.frames[0]));
    }

    #[test]
    fn seeded_runs_are_reproducible_and_round_trip() {
        let f = field();
        let d = inlet_density(&f, 50).unwrap();
        let opts = ParticleOptions {
            warmup: 0.2,
            ..Default::default()
        };
        let a = simulate_particles(&f, &d, 40, 0.05, 100.0, RngSeed(9), &opts).unwrap();
        let b = simulate_particles(&f, &d, 40, 0.05, 100.0, RngSeed(9), &opts).unwrap();
        assert_eq!(a, b);
        let dir = tempfile::tempdir().unwrap();
        a.save(dir.path()).unwrap();
        let c = ParticleEnsemble::load(dir.path()).unwrap();
        assert_eq!(a.frames, c.frames);
        assert_eq!(a.frame_interval, c.frame_interval);
    }
}
