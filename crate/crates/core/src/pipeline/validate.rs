//! Schema and cross-stage consistency checks without side effects.

use serde::Serialize;

use crate::beamform::{matrix_chunks, plan_chunks};
use crate::geometry::Vec3;
use crate::rf::{max_two_way_time, memory_estimate, plane_wave_delays, Layout, Transducer, PRESET_NAMES};
use crate::tissue::{Label, ScattererCloud};

use super::config::{RunConfig, VesselConfig};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Issue {
    pub field: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub errors: Vec<Issue>,
    pub warnings: Vec<Issue>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.errors.is_empty()
    }

    fn error(&mut self, field: &str, message: impl Into<String>) {
        self.errors.push(Issue {
            field: field.into(),
            message: message.into(),
        });
    }

    fn warn(&mut self, field: &str, message: impl Into<String>) {
        self.warnings.push(Issue {
            field: field.into(),
            message: message.into(),
        });
    }
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for i in &self.errors {
            writeln!(f, "error: {}: {}", i.field, i.message)?;
        }
        for i in &self.warnings {
            writeln!(f, "warning: {}: {}", i.field, i.message)?;
        }
        write!(f, "{} error(s), {} warning(s)", self.errors.len(), self.warnings.len())
    }
}

fn corners(min: [f64; 3], max: [f64; 3]) -> Vec<Vec3> {
    (0..8)
        .map(|m| {
            Vec3::new(
                if m & 1 == 0 { min[0] } else { max[0] },
                if m & 2 == 0 { min[1] } else { max[1] },
                if m & 4 == 0 { min[2] } else { max[2] },
            )
        })
        .collect()
}

pub fn validate(cfg: &RunConfig) -> ValidationReport {
    let mut r = ValidationReport::default();
    let transducer = match Transducer::preset(&cfg.transducer) {
        Ok(t) => Some(t),
        Err(_) => {
            r.error(
                "transducer",
                format!(
                    "unknown preset `{}` (known: {})",
                    cfg.transducer,
                    PRESET_NAMES.join(", ")
                ),
            );
            None
        }
    };
    if cfg.memory_budget_bytes == 0 {
        r.error("memory_budget_bytes", "must be > 0");
    }

    match &cfg.vessel {
        VesselConfig::Lsystem { grammar, turtle, .. } => {
            if let Err(e) = grammar.validate() {
                r.error("vessel.grammar", e.to_string());
            }
            if let Err(e) = turtle.validate() {
                r.error("vessel.turtle", e.to_string());
            }
        }
        VesselConfig::Tube { tube, .. } => {
            if !(tube.radius > 0.0) || tube.start == tube.end {
                r.error("vessel.tube", "tube needs a positive radius and distinct end points");
            }
        }
        VesselConfig::File { path, .. } => {
            if !path.is_file() {
                r.error("vessel.path", format!("{} does not exist", path.display()));
            }
        }
    }
    if !(cfg.vessel.spacing() > 0.0) {
        r.error("vessel.spacing", "must be > 0");
    }

    let flow = &cfg.flow;
    if let Some(p) = &flow.file {
        if !p.is_file() {
            r.error("flow.file", format!("{} does not exist", p.display()));
        }
    }
    if !(flow.peak_velocity > 0.0) {
        r.error("flow.peak_velocity", "must be > 0");
    }
    if !(flow.spacing > 0.0) || !(flow.margin >= 0.0) {
        r.error("flow.spacing", "spacing must be > 0 and margin >= 0");
    }

    let parts = &cfg.particles;
    if parts.count == 0 {
        r.error("particles.count", "must be > 0");
    }
    if parts.frames < 2 {
        r.error("particles.frames", "the clutter filter needs at least 2 frames");
    }
    if !(parts.frame_rate > 0.0) || !(parts.warmup >= 0.0) {
        r.error("particles.frame_rate", "frame rate must be > 0 and warmup >= 0");
    }

    let tissue = &cfg.tissue;
    let [lo, hi] = tissue.region;
    if (0..3).any(|a| !(lo[a] < hi[a])) {
        r.error("tissue.region", "min corner must be below max corner on every axis");
    }
    if let Err(e) = tissue.cloud.reflectivity.validate() {
        r.error("tissue.cloud.reflectivity", e.to_string());
    }
    if let Err(e) = tissue.blood_reflectivity.validate() {
        r.error("tissue.blood_reflectivity", e.to_string());
    }
    if !tissue.blood_contrast_db.is_finite() {
        r.error("tissue.blood_contrast_db", "must be finite");
    }

    let rf = &cfg.rf;
    let acq = &rf.acquisition;
    if rf.angles_deg.is_empty() {
        r.error("rf.angles_deg", "at least one transmit angle is required");
    }
    if rf.angles_deg.iter().any(|a| !(a.abs() < 90.0)) {
        r.error("rf.angles_deg", "angles must satisfy |angle| < 90 degrees");
    }
    if !(rf.medium.sound_speed > 0.0) || !(rf.medium.attenuation >= 0.0) {
        r.error("rf.medium", "sound speed must be > 0 and attenuation >= 0");
    }
    if !(acq.duration > 0.0) || acq.delta_stride == 0 {
        r.error("rf.acquisition", "duration must be > 0 and delta_stride >= 1");
    }

    if let Some(t) = &transducer {
        let f_c = t.center_frequency;
        if !(acq.sampling_rate > 2.0 * f_c) {
            r.error(
                "rf.acquisition.sampling_rate",
                format!(
                    "sampling below Nyquist: f_s = {:.4e} Hz <= 2 f_c = {:.4e} Hz",
                    acq.sampling_rate,
                    2.0 * f_c
                ),
            );
        } else if acq.sampling_rate < acq.min_oversampling * f_c {
            r.error(
                "rf.acquisition.sampling_rate",
                format!(
                    "f_s = {:.4e} Hz is below {} x f_c",
                    acq.sampling_rate, acq.min_oversampling
                ),
            );
        }
        let c = rf.medium.sound_speed;
        if (lo.iter().zip(&hi)).all(|(a, b)| a < b) && c > 0.0 {
            let pts = corners(lo, hi);
            let probe = ScattererCloud {
                reflectivity: vec![0.0; pts.len()],
                label: vec![Label::Tissue; pts.len()],
                positions: pts,
            };
            for &deg in &rf.angles_deg {
                if let Ok(tx) = plane_wave_delays(t, deg.to_radians(), c) {
                    let latest = max_two_way_time(&probe, t, &tx, c);
                    if latest > acq.t0 + acq.duration {
                        r.error(
                            "rf.acquisition.duration",
                            format!(
                                "echoes from the tissue region arrive until {latest:.3e} s but the record ends at {:.3e} s",
                                acq.t0 + acq.duration
                            ),
                        );
                        break;
                    }
                }
            }
        }
        if r.errors.iter().all(|i| !i.field.starts_with("rf.acquisition")) {
            if let Ok((fixed, per)) = memory_estimate(t, acq, 1) {
                if fixed + per > cfg.memory_budget_bytes {
                    r.error(
                        "memory_budget_bytes",
                        format!("RF synthesis needs at least {} bytes", fixed + per),
                    );
                }
            }
        }
    }

    let bf = &cfg.beamform;
    match bf.grid.spec() {
        Err(e) => r.error("beamform.grid", e.to_string()),
        Ok(spec) => {
            if !(bf.f_number > 0.0) {
                r.error("beamform.f_number", "must be > 0");
            }
            if bf.chunks == Some(0) {
                r.error("beamform.chunks", "must be >= 1");
            }
            let n_tx = rf.angles_deg.len().max(1);
            if let Err(e) = plan_chunks(spec.len(), n_tx, cfg.memory_budget_bytes) {
                r.error("memory_budget_bytes", format!("beamforming: {e}"));
            }
            if let Some(t) = &transducer {
                if let Err(e) = matrix_chunks(spec.len(), n_tx, t.element_count(), cfg.memory_budget_bytes) {
                    r.error("memory_budget_bytes", format!("beamforming: {e}"));
                }
                let (gmin, gmax) = (bf.grid.min, bf.grid.max);
                let half = |count: usize, pitch: f64| 0.5 * (count as f64 - 1.0) * pitch;
                let (hx, hy) = match t.layout {
                    Layout::Linear { count, pitch } => (half(count, pitch), None),
                    Layout::Matrix { nx, ny, pitch } => (half(nx, pitch), Some(half(ny, pitch))),
                };
                let outside_x = gmin[0] < -hx || gmax[0] > hx;
                let outside_y = hy.is_some_and(|h| gmin[1] < -h || gmax[1] > h);
                if gmin[2] <= 0.0 || outside_x || outside_y {
                    r.warn(
                        "beamform.grid",
                        "reconstruction grid extends outside the transducer field of view",
                    );
                }
            }
            let inside = (0..3).all(|a| bf.grid.min[a] >= lo[a] && bf.grid.max[a] <= hi[a]);
            if !inside {
                r.warn("beamform.grid", "reconstruction grid is not inside the tissue region");
            }
        }
    }

    let post = &cfg.post;
    let (blo, bhi) = post.svd_band;
    let bhi = bhi.unwrap_or(parts.frames);
    if blo == 0 || blo > bhi || bhi > parts.frames {
        r.error(
            "post.svd_band",
            format!("band must satisfy 1 <= lo <= hi <= frames ({})", parts.frames),
        );
    }
    if !(post.pd_dynamic_range_db > 0.0) || !(post.bmode_dynamic_range_db > 0.0) {
        r.error("post", "dynamic ranges must be > 0 dB");
    }
    if let Some(s) = cfg.metrics.truth_sigma {
        if !(s > 0.0) {
            r.error("metrics.truth_sigma", "must be > 0");
        }
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn demo_and_quick_have_no_errors() {
        for cfg in [RunConfig::demo("o"), RunConfig::quick("o")] {
            let r = validate(&cfg);
            assert!(r.is_ok(), "{r}");
            assert!(r.warnings.is_empty(), "{r}");
        }
    }

    #[test]
    fn sampling_at_center_frequency_is_below_nyquist() {
        let mut cfg = RunConfig::quick("o");
        cfg.rf.acquisition.sampling_rate = 7.6e6;
        let r = validate(&cfg);
        assert!(r
            .errors
            .iter()
            .any(|i| i.field == "rf.acquisition.sampling_rate" && i.message.contains("sampling below Nyquist")));
    }

    #[test]
    fn unknown_preset_names_the_field() {
        let mut cfg = RunConfig::quick("o");
        cfg.transducer = "P4-2".into();
        let r = validate(&cfg);
        assert_eq!(r.errors.len(), 1, "{r}");
        assert_eq!(r.errors[0].field, "transducer");
    }

    #[test]
    fn grid_outside_field_of_view_warns() {
        // L11-4v half aperture is 19.05 mm
        let mut cfg = RunConfig::quick("o");
        cfg.tissue.region = [[-30e-3, -1e-3, 6e-3], [30e-3, 1e-3, 10e-3]];
        cfg.rf.acquisition.duration = 80e-6;
        cfg.beamform.grid.min[0] = -25e-3;
        let r = validate(&cfg);
        assert!(r.is_ok(), "{r}");
        assert_eq!(r.warnings.len(), 1, "{r}");
        assert!(r.warnings[0].message.contains("field of view"));
        cfg.beamform.grid.min[0] = -19e-3;
        assert!(validate(&cfg).warnings.is_empty());
    }

    #[test]
    fn short_record_and_bad_band_are_errors() {
        let mut cfg = RunConfig::quick("o");
        cfg.rf.acquisition.duration = 5e-6;
        cfg.post.svd_band = (3, Some(40));
        let r = validate(&cfg);
        let fields: Vec<_> = r.errors.iter().map(|i| i.field.as_str()).collect();
        assert!(fields.contains(&"rf.acquisition.duration"), "{r}");
        assert!(fields.contains(&"post.svd_band"), "{r}");
    }

    #[test]
    fn tiny_budget_is_an_error() {
        let mut cfg = RunConfig::quick("o");
        cfg.memory_budget_bytes = 4096;
        assert!(validate(&cfg).errors.iter().any(|i| i.field == "memory_budget_bytes"));
    }
}
