//! JSON run configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::beamform::{DasConfig, Interpolation};
use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::grid::GridSpec;
use crate::hemo::{IntegratorOptions, Tube};
use crate::rf::{Acquisition, MediumParams};
use crate::tissue::{Boundary, CloudParams, MotionModel, ReflectivityLaw, Region};
use crate::vascular::{LsystemGrammar, TurtleParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Transducer preset name.
    pub transducer: String,
    /// Working-memory budget for RF synthesis and beamforming.
    pub memory_budget_bytes: u64,
    pub vessel: VesselConfig,
    pub flow: FlowConfig,
    pub particles: ParticlesConfig,
    pub tissue: TissueConfig,
    pub rf: RfConfig,
    pub beamform: BeamformConfig,
    #[serde(default)]
    pub post: PostConfig,
    #[serde(default)]
    pub metrics: MetricsConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum VesselConfig {
    /// Stochastic L-system tree.
    Lsystem {
        grammar: LsystemGrammar,
        #[serde(default)]
        turtle: TurtleParams,
        /// Voxel size of the intensity volume, m.
        spacing: f64,
    },
    /// Single straight tube.
    Tube { tube: Tube, spacing: f64 },
    /// Existing skeleton file.
    File { path: PathBuf, spacing: f64 },
}

impl VesselConfig {
    pub fn spacing(&self) -> f64 {
        match self {
            VesselConfig::Lsystem { spacing, .. }
            | VesselConfig::Tube { spacing, .. }
            | VesselConfig::File { spacing, .. } => *spacing,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowConfig {
    /// Import this field instead of deriving one from the skeleton.
    #[serde(default)]
    pub file: Option<PathBuf>,
    /// Centerline speed in the root segment, m/s.
    pub peak_velocity: f64,
    /// Grid spacing, m.
    pub spacing: f64,
    /// Padding around the skeleton bounds, m.
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParticlesConfig {
    pub count: usize,
    pub frames: usize,
    /// Compounded frame rate, Hz.
    pub frame_rate: f64,
    /// Random pre-advance so the vessels are filled at frame 0, s.
    #[serde(default)]
    pub warmup: f64,
    #[serde(default)]
    pub integrator: IntegratorOptions,
}

impl ParticlesConfig {
    pub fn duration(&self) -> f64 {
        self.frames as f64 / self.frame_rate
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TissueConfig {
    /// `[min, max]` corners, m.
    pub region: [[f64; 3]; 2],
    #[serde(default)]
    pub cloud: CloudParams,
    #[serde(default = "static_motion")]
    pub motion: MotionModel,
    #[serde(default)]
    pub boundary: Boundary,
    /// Blood reflectivity law before the contrast scaling.
    #[serde(default)]
    pub blood_reflectivity: ReflectivityLaw,
    /// Blood-to-tissue power contrast, dB.
    #[serde(default = "default_blood_contrast")]
    pub blood_contrast_db: f64,
}

fn static_motion() -> MotionModel {
    MotionModel::Static
}

fn default_blood_contrast() -> f64 {
    -20.0
}

impl TissueConfig {
    pub fn region(&self) -> Region {
        Region::new(Vec3::from(self.region[0]), Vec3::from(self.region[1]))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RfConfig {
    /// Plane-wave steering angles, degrees.
    pub angles_deg: Vec<f64>,
    #[serde(default)]
    pub acquisition: Acquisition,
    #[serde(default)]
    pub medium: MediumParams,
}

/// Reconstruction grid spanning `[min, max]` with `dims` nodes per axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub min: [f64; 3],
    pub max: [f64; 3],
    pub dims: [usize; 3],
}

impl GridConfig {
    pub fn spec(&self) -> Result<GridSpec> {
        GridSpec::spanning(Vec3::from(self.min), Vec3::from(self.max), self.dims)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BeamformConfig {
    pub grid: GridConfig,
    #[serde(default = "default_f_number")]
    pub f_number: f64,
    #[serde(default)]
    pub interpolation: Interpolation,
    /// Overrides the planned chunk count.
    #[serde(default)]
    pub chunks: Option<usize>,
}

fn default_f_number() -> f64 {
    1.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PostConfig {
    /// Kept singular components, 1-based inclusive; `None` as the upper bound
    /// keeps everything up to the frame count.
    pub svd_band: (usize, Option<usize>),
    pub pd_dynamic_range_db: f64,
    pub bmode_dynamic_range_db: f64,
}

impl Default for PostConfig {
    fn default() -> Self {
        Self {
            svd_band: (2, None),
            pd_dynamic_range_db: 40.0,
            bmode_dynamic_range_db: 50.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    /// Splat width of the ground-truth volume, m; defaults to the mean
    /// reconstruction spacing.
    pub truth_sigma: Option<f64>,
}

#[allow(clippy::derivable_impls)]
impl Default for MetricsConfig {
    fn default() -> Self {
        Self { truth_sigma: None }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| {
            let msg = e.to_string();
            let field = unknown_field(&msg).unwrap_or_else(|| "config".into());
            Error::config(field, msg)
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn das_config(&self) -> DasConfig {
        DasConfig {
            f_number: self.beamform.f_number,
            sound_speed: self.rf.medium.sound_speed,
            memory_budget: self.memory_budget_bytes,
            chunks: self.beamform.chunks,
            interpolation: self.beamform.interpolation,
        }
    }

    /// Desk-scale demo: an L-system tree under the L11-4v probe, 64^3
    /// reconstruction grid, 3 plane waves, 50 frames, about 1e5 tissue and
    /// 2000 blood scatterers.
    pub fn demo(output_dir: impl Into<PathBuf>) -> Self {
        let turtle = TurtleParams {
            step_length: 3e-3,
            root_diameter: 1.2e-3,
            origin: [0.0, 0.0, 6e-3],
            ..TurtleParams::default()
        };
        Self {
            seed: 2024,
            output_dir: output_dir.into(),
            transducer: "L11-4v".into(),
            memory_budget_bytes: 1 << 30,
            vessel: VesselConfig::Lsystem {
                grammar: LsystemGrammar::vascular(3),
                turtle,
                spacing: 1e-4,
            },
            flow: FlowConfig {
                file: None,
                peak_velocity: 0.02,
                spacing: 1e-4,
                margin: 5e-4,
            },
            particles: ParticlesConfig {
                count: 2000,
                frames: 50,
                frame_rate: 1000.0,
                warmup: 0.5,
                integrator: IntegratorOptions::default(),
            },
            tissue: TissueConfig {
                region: [[-8e-3, -2e-3, 4e-3], [8e-3, 2e-3, 20e-3]],
                cloud: CloudParams {
                    per_lambda2_density: 12.0,
                    ..CloudParams::default()
                },
                motion: MotionModel::Static,
                boundary: Boundary::Freeze,
                blood_reflectivity: ReflectivityLaw::default(),
                blood_contrast_db: default_blood_contrast(),
            },
            rf: RfConfig {
                angles_deg: vec![-5.0, 0.0, 5.0],
                acquisition: Acquisition::default(),
                medium: MediumParams::default(),
            },
            beamform: BeamformConfig {
                grid: GridConfig {
                    min: [-6e-3, -2e-3, 5e-3],
                    max: [6e-3, 2e-3, 17e-3],
                    dims: [64, 64, 64],
                },
                f_number: default_f_number(),
                interpolation: Interpolation::Linear,
                chunks: None,
            },
            post: PostConfig::default(),
            metrics: MetricsConfig::default(),
        }
    }

    /// Small tube phantom that runs end to end in seconds; used by tests.
    pub fn quick(output_dir: impl Into<PathBuf>) -> Self {
        Self {
            seed: 7,
            vessel: VesselConfig::Tube {
                tube: Tube {
                    start: [-3e-3, 0.0, 8e-3],
                    end: [3e-3, 0.0, 8e-3],
                    radius: 5e-4,
                },
                spacing: 1e-4,
            },
            flow: FlowConfig {
                file: None,
                peak_velocity: 0.03,
                spacing: 1e-4,
                margin: 3e-4,
            },
            particles: ParticlesConfig {
                count: 120,
                frames: 10,
                frame_rate: 500.0,
                warmup: 0.2,
                integrator: IntegratorOptions::default(),
            },
            tissue: TissueConfig {
                region: [[-3e-3, -1e-3, 6e-3], [3e-3, 1e-3, 10e-3]],
                cloud: CloudParams {
                    per_lambda2_density: 2.0,
                    ..CloudParams::default()
                },
                ..Self::demo("").tissue
            },
            rf: RfConfig {
                angles_deg: vec![-5.0, 0.0, 5.0],
                acquisition: Acquisition {
                    duration: 26e-6,
                    ..Acquisition::default()
                },
                medium: MediumParams::default(),
            },
            beamform: BeamformConfig {
                grid: GridConfig {
                    min: [-2.4e-3, -0.6e-3, 6.6e-3],
                    max: [2.4e-3, 0.6e-3, 9.4e-3],
                    dims: [25, 3, 15],
                },
                ..Self::demo("").beamform
            },
            ..Self::demo(output_dir)
        }
    }
}

fn unknown_field(msg: &str) -> Option<String> {
    let rest = msg.split("unknown field `").nth(1)?;
    Some(rest.split('`').next()?.to_string())
}
