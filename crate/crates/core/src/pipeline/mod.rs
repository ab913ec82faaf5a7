//! JSON-configured orchestration of all stages with content-hash caching.
//!
//! Each stage writes into `<output_dir>/<stage>/` and records a manifest in
//! `<output_dir>/manifests/<stage>.json`. A stage is skipped when its key (its
//! configuration plus the content of its inputs) matches the manifest and the
//! recorded outputs are intact.

mod config;
mod manifest;
mod stages;
mod validate;

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use config::{
    BeamformConfig, FlowConfig, GridConfig, MetricsConfig, ParticlesConfig, PostConfig, RfConfig, RunConfig,
    TissueConfig, VesselConfig,
};
pub use manifest::{describe_outputs, file_sha256, list_files, DirLock, OutputFile, StageHasher, StageManifest};
pub use validate::{validate, Issue, ValidationReport};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Vessel,
    Flow,
    Particles,
    Tissue,
    Rf,
    Beamform,
    Post,
    Metrics,
}

impl Stage {
    pub const ALL: [Stage; 8] = [
        Stage::Vessel,
        Stage::Flow,
        Stage::Particles,
        Stage::Tissue,
        Stage::Rf,
        Stage::Beamform,
        Stage::Post,
        Stage::Metrics,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Vessel => "vessel",
            Stage::Flow => "flow",
            Stage::Particles => "particles",
            Stage::Tissue => "tissue",
            Stage::Rf => "rf",
            Stage::Beamform => "beamform",
            Stage::Post => "post",
            Stage::Metrics => "metrics",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Stage::ALL.into_iter().find(|st| st.name() == s.trim()).ok_or_else(|| {
            let known: Vec<_> = Stage::ALL.iter().map(|s| s.name()).collect();
            Error::config("stages", format!("unknown stage `{s}` (known: {})", known.join(", ")))
        })
    }

    /// Comma-separated list, e.g. `beamform,post`.
    pub fn parse_list(s: &str) -> Result<Vec<Self>> {
        s.split(',')
            .filter(|p| !p.trim().is_empty())
            .map(Stage::parse)
            .collect()
    }

    /// Stages whose outputs this stage reads.
    pub fn inputs(self) -> &'static [Stage] {
        match self {
            Stage::Vessel => &[],
            Stage::Flow => &[Stage::Vessel],
            Stage::Particles => &[Stage::Flow],
            Stage::Tissue => &[Stage::Flow],
            Stage::Rf => &[Stage::Tissue, Stage::Particles],
            Stage::Beamform => &[Stage::Rf],
            Stage::Post => &[Stage::Beamform],
            Stage::Metrics => &[Stage::Post, Stage::Particles],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StageStatus {
    Ran,
    Cached,
    NotSelected,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub stages: Vec<(Stage, StageStatus)>,
    pub manifests: Vec<StageManifest>,
}

impl RunReport {
    pub fn status(&self, stage: Stage) -> Option<StageStatus> {
        self.stages.iter().find(|(s, _)| *s == stage).map(|(_, st)| *st)
    }

    pub fn ran(&self) -> Vec<Stage> {
        self.stages
            .iter()
            .filter(|(_, st)| *st == StageStatus::Ran)
            .map(|(s, _)| *s)
            .collect()
    }
}

/// Configuration values a stage reads, hashed into its key.
fn stage_key(cfg: &RunConfig, stage: Stage, out: &Path) -> Result<String> {
    let mut h = StageHasher::new(stage.name());
    match stage {
        Stage::Vessel => {
            h.value("seed", &cfg.seed)?;
            h.value("vessel", &cfg.vessel)?;
            if let VesselConfig::File { path, .. } = &cfg.vessel {
                h.bytes("vessel_file", file_sha256(path)?.as_bytes());
            }
        }
        Stage::Flow => {
            h.value("flow", &cfg.flow)?;
            h.value("vessel", &cfg.vessel)?;
            if let Some(path) = &cfg.flow.file {
                h.bytes("flow_file", file_sha256(path)?.as_bytes());
            }
        }
        Stage::Particles => {
            h.value("seed", &cfg.seed)?;
            h.value("particles", &cfg.particles)?;
        }
        Stage::Tissue => {
            h.value("seed", &cfg.seed)?;
            h.value("transducer", &cfg.transducer)?;
            h.value("tissue", &cfg.tissue)?;
            h.value("medium", &cfg.rf.medium)?;
        }
        Stage::Rf => {
            h.value("seed", &cfg.seed)?;
            h.value("transducer", &cfg.transducer)?;
            h.value("budget", &cfg.memory_budget_bytes)?;
            h.value("tissue", &cfg.tissue)?;
            h.value("rf", &cfg.rf)?;
        }
        Stage::Beamform => {
            h.value("transducer", &cfg.transducer)?;
            h.value("budget", &cfg.memory_budget_bytes)?;
            h.value("rf", &cfg.rf)?;
            h.value("beamform", &cfg.beamform)?;
            h.value("frames", &cfg.particles.frames)?;
        }
        Stage::Post => {
            h.value("post", &cfg.post)?;
            h.value("frames", &cfg.particles.frames)?;
        }
        Stage::Metrics => {
            h.value("post", &cfg.post)?;
            h.value("metrics", &cfg.metrics)?;
        }
    }
    for &up in stage.inputs() {
        let manifest = StageManifest::load(out, up.name())?;
        let Some(m) = manifest.filter(|m| m.outputs_intact(out).unwrap_or(false)) else {
            return Err(Error::invalid(format!(
                "missing upstream output of stage `{}`; run it first",
                up.name()
            )));
        };
        h.value(up.name(), &m.outputs)?;
    }
    Ok(h.finish())
}

fn execute(cfg: &RunConfig, stage: Stage, out: &Path) -> Result<()> {
    match stage {
        Stage::Vessel => stages::vessel(cfg, out),
        Stage::Flow => stages::flow(cfg, out),
        Stage::Particles => stages::particles(cfg, out),
        Stage::Tissue => stages::tissue(cfg, out),
        Stage::Rf => stages::rf(cfg, out),
        Stage::Beamform => stages::beamform(cfg, out),
        Stage::Post => stages::post(cfg, out),
        Stage::Metrics => stages::metrics_stage(cfg, out),
    }
}

fn run_stage(cfg: &RunConfig, stage: Stage, out: &Path) -> Result<(StageManifest, StageStatus)> {
    let key = stage_key(cfg, stage, out)?;
    if let Some(m) = StageManifest::load(out, stage.name())? {
        if m.hash == key && m.outputs_intact(out)? {
            log::info!("{}: cached", stage.name());
            return Ok((m, StageStatus::Cached));
        }
    }
    let dir = stages::dir(out, stage);
    if dir.exists() {
        std::fs::remove_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let start = Instant::now();
    log::info!("{}: running", stage.name());
    execute(cfg, stage, out)?;
    let manifest = StageManifest {
        stage: stage.name().into(),
        hash: key,
        outputs: describe_outputs(out, &dir)?,
        duration_s: start.elapsed().as_secs_f64(),
    };
    manifest.save(out)?;
    Ok((manifest, StageStatus::Ran))
}

/// Validate, lock the output directory and run the selected stages (all when
/// `only` is `None`) in dependency order.
pub fn run(cfg: &RunConfig, only: Option<&[Stage]>) -> Result<RunReport> {
    let report = validate(cfg);
    if let Some(first) = report.errors.first() {
        let all: Vec<_> = report
            .errors
            .iter()
            .map(|i| format!("{}: {}", i.field, i.message))
            .collect();
        return Err(Error::config(first.field.clone(), all.join("; ")));
    }
    for w in &report.warnings {
        log::warn!("{}: {}", w.field, w.message);
    }
    let out = cfg.output_dir.as_path();
    let _lock = DirLock::acquire(out)?;
    let manifests_dir = out.join("manifests");
    std::fs::create_dir_all(&manifests_dir).map_err(|e| Error::io(&manifests_dir, e))?;
    let resolved = manifests_dir.join("config.json");
    std::fs::write(&resolved, cfg.to_json()).map_err(|e| Error::io(&resolved, e))?;

    let mut result = RunReport {
        stages: Vec::new(),
        manifests: Vec::new(),
    };
    for stage in Stage::ALL {
        if only.is_some_and(|s| !s.contains(&stage)) {
            result.stages.push((stage, StageStatus::NotSelected));
            continue;
        }
        let (m, status) = run_stage(cfg, stage, out).map_err(|e| Error::Stage {
            stage: stage.name().into(),
            source: Box::new(e),
        })?;
        result.stages.push((stage, status));
        result.manifests.push(m);
    }
    Ok(result)
}

/// SHA-256 of every file under `dir` except manifests and the lock, keyed by
/// relative path; two runs are byte-identical when these maps are equal.
pub fn output_tree_hashes(dir: &Path) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for rel in list_files(dir, dir)? {
        let first = rel
            .components()
            .next()
            .map(|c| c.as_os_str().to_string_lossy().into_owned());
        if first.as_deref() == Some("manifests") || rel.as_os_str() == DirLock::FILE {
            continue;
        }
        out.push((rel.to_string_lossy().replace('\\', "/"), file_sha256(&dir.join(&rel))?));
    }
    Ok(out)
}
