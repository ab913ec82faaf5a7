//! Stage bodies. Each reads its inputs from the output directory and writes
//! into its own subdirectory.

use std::path::Path;

use num_complex::Complex64;
use serde::Serialize;

use crate::beamform::{das_to_dir, frame_path, load_frame, rf_to_iq};
use crate::container::Header;
use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::grid::{GridSpec, ScalarGrid};
use crate::hemo::{inlet_density, simulate_particles, tree_flow_field, FlowField, ParticleEnsemble, ParticleOptions};
use crate::post::{
    bmode, ground_truth_pd, metrics, mip, power_doppler, render_db, svd_filter, write_metrics, write_pgm, Axis, Scale,
};
use crate::rf::{compose_frames, plane_wave_delays, Chunking, RfFrame, Scene, Transducer, TxEvent};
use crate::rng::RngSeed;
use crate::tissue::{classify_in_vessel, generate_cloud, Label, ScattererCloud};
use crate::vascular::{interpret, rasterize, rewrite, validate_tree, Kernel, VesselTree};

use super::config::{RunConfig, VesselConfig};
use super::Stage;

/// Inlet lattice size used to build the injection density.
const INLET_SAMPLES: usize = 400;

pub(crate) fn dir(out: &Path, stage: Stage) -> std::path::PathBuf {
    out.join(stage.name())
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn seed(cfg: &RunConfig) -> RngSeed {
    RngSeed(cfg.seed)
}

fn transmits(cfg: &RunConfig, transducer: &Transducer) -> Result<Vec<TxEvent>> {
    cfg.rf
        .angles_deg
        .iter()
        .map(|a| plane_wave_delays(transducer, a.to_radians(), cfg.rf.medium.sound_speed))
        .collect()
}

/// Grid with spacing `h` covering `[lo, hi]`, origin at `lo`.
fn covering_grid(lo: Vec3, hi: Vec3, h: f64) -> Result<GridSpec> {
    let dims = [0, 1, 2].map(|a| ((hi[a] - lo[a]) / h).ceil() as usize + 1);
    GridSpec::new(dims, [h; 3], [lo[0], lo[1], lo[2]])
}

fn tree_path(out: &Path) -> std::path::PathBuf {
    dir(out, Stage::Vessel).join("tree.fqf")
}

fn field_path(out: &Path) -> std::path::PathBuf {
    dir(out, Stage::Flow).join("field.fqf")
}

fn particles_dir(out: &Path) -> std::path::PathBuf {
    dir(out, Stage::Particles)
}

fn cloud_path(out: &Path) -> std::path::PathBuf {
    dir(out, Stage::Tissue).join("cloud.fqf")
}

pub(crate) fn vessel(cfg: &RunConfig, out: &Path) -> Result<()> {
    let d = dir(out, Stage::Vessel);
    let tree = match &cfg.vessel {
        VesselConfig::Lsystem { grammar, turtle, .. } => {
            let instructions = rewrite(grammar, seed(cfg))?;
            let tree = interpret(&instructions, turtle, seed(cfg))?;
            write_json(&d.join("validation.json"), &validate_tree(&tree, turtle))?;
            tree
        }
        VesselConfig::Tube { tube, .. } => {
            let mut tree = VesselTree::new(Vec3::from(tube.start));
            tree.add_segment(0, Vec3::from(tube.end), 2.0 * tube.radius, 1.0);
            tree
        }
        VesselConfig::File { path, .. } => VesselTree::load(path)?,
    };
    tree.save(&tree_path(out), Header::new().with("kind", "vessel_tree"))?;
    let h = cfg.vessel.spacing();
    let (lo, hi) = tree.bounds();
    let spec = covering_grid(lo.add_scalar(-2.0 * h), hi.add_scalar(2.0 * h), h)?;
    let volume = rasterize(&tree, &spec, Kernel::Gaussian { sigma: 0.5 });
    volume.save(&d.join("intensity.fqf"), Header::new().with("kind", "vessel_intensity"))
}

pub(crate) fn flow(cfg: &RunConfig, out: &Path) -> Result<()> {
    let field = match &cfg.flow.file {
        Some(path) => FlowField::import(path)?.0,
        None => {
            let tree = VesselTree::load(&tree_path(out))?;
            let (lo, hi) = tree.bounds();
            let m = cfg.flow.margin;
            let spec = covering_grid(lo.add_scalar(-m), hi.add_scalar(m), cfg.flow.spacing)?;
            let exponent = match &cfg.vessel {
                VesselConfig::Lsystem { turtle, .. } => turtle.murray_exponent,
                _ => 3.0,
            };
            tree_flow_field(&tree, cfg.flow.peak_velocity, exponent, &spec)?
        }
    };
    field.save(&field_path(out))
}

pub(crate) fn particles(cfg: &RunConfig, out: &Path) -> Result<()> {
    let (field, _) = FlowField::import(&field_path(out))?;
    let density = inlet_density(&field, INLET_SAMPLES)?;
    let p = &cfg.particles;
    let opts = ParticleOptions {
        integrator: p.integrator,
        warmup: p.warmup,
        ..ParticleOptions::default()
    };
    let ens = simulate_particles(&field, &density, p.count, p.duration(), p.frame_rate, seed(cfg), &opts)?;
    ens.save(&particles_dir(out))
}

#[derive(Serialize)]
struct TissueReport {
    generated: usize,
    in_vessel: usize,
    in_vessel_fraction: f64,
    kept: usize,
}

pub(crate) fn tissue(cfg: &RunConfig, out: &Path) -> Result<()> {
    let transducer = Transducer::preset(&cfg.transducer)?;
    let (field, _) = FlowField::import(&field_path(out))?;
    let wavelength = transducer.wavelength(cfg.rf.medium.sound_speed);
    let mut cloud = generate_cloud(&cfg.tissue.region(), wavelength, &cfg.tissue.cloud, seed(cfg))?;
    let report = classify_in_vessel(&mut cloud, &field.mask);
    // scatterers inside the lumen are replaced by the traced blood particles
    let mut kept = ScattererCloud::default();
    for i in 0..cloud.len() {
        if cloud.label[i] == Label::Tissue {
            kept.push(cloud.positions[i], cloud.reflectivity[i], Label::Tissue);
        }
    }
    let d = dir(out, Stage::Tissue);
    write_json(
        &d.join("classification.json"),
        &TissueReport {
            generated: cloud.len(),
            in_vessel: report.blood,
            in_vessel_fraction: report.blood as f64 / cloud.len().max(1) as f64,
            kept: kept.len(),
        },
    )?;
    kept.save(&cloud_path(out), Header::new())
}

pub(crate) fn rf(cfg: &RunConfig, out: &Path) -> Result<()> {
    let transducer = Transducer::preset(&cfg.transducer)?;
    let txs = transmits(cfg, &transducer)?;
    let (tissue, _) = ScattererCloud::load(&cloud_path(out))?;
    let ens = ParticleEnsemble::load(&particles_dir(out))?;
    let first = ens
        .frames
        .first()
        .ok_or_else(|| Error::invalid("particle ensemble has no frames"))?;
    let mut rng = seed(cfg).stream("blood_reflectivity");
    let blood = ScattererCloud::blood(
        first,
        &cfg.tissue.blood_reflectivity,
        cfg.tissue.blood_contrast_db,
        &mut rng,
    );
    let scene = Scene {
        tissue: &tissue,
        motion: &cfg.tissue.motion,
        region: cfg.tissue.region(),
        boundary: cfg.tissue.boundary,
        blood_positions: &ens.frames,
        blood_reflectivity: &blood.reflectivity,
        frame_interval: ens.frame_interval,
    };
    let d = dir(out, Stage::Rf);
    let report = compose_frames(
        &scene,
        ens.frames.len(),
        &transducer,
        &txs,
        &cfg.rf.medium,
        &cfg.rf.acquisition,
        Chunking::Budget(cfg.memory_budget_bytes),
        |f, t, frame| frame.save(&RfFrame::path(&d, f, t)),
    )?;
    log::info!(
        "rf: {} frames, {} tissue and {} blood simulations",
        report.frames,
        report.tissue_simulations,
        report.blood_simulations
    );
    Ok(())
}

#[derive(Serialize)]
struct BeamformReport {
    frames: usize,
    chunks: usize,
    matrix_builds: usize,
    dropped: u64,
    nnz: u64,
}

pub(crate) fn beamform(cfg: &RunConfig, out: &Path) -> Result<()> {
    let transducer = Transducer::preset(&cfg.transducer)?;
    let txs = transmits(cfg, &transducer)?;
    let grid = cfg.beamform.grid.spec()?;
    let rf_dir = dir(out, Stage::Rf);
    let n_frames = cfg.particles.frames;
    let f_c = transducer.center_frequency;
    let source = |f: usize, t: usize| {
        let path = RfFrame::path(&rf_dir, f, t);
        if !path.is_file() {
            return Err(Error::invalid(format!("missing RF file {}", path.display())));
        }
        rf_to_iq(&RfFrame::load(&path)?, f_c)
    };
    let d = dir(out, Stage::Beamform);
    let report = das_to_dir(source, n_frames, &transducer, &txs, &grid, &cfg.das_config(), &d)?;
    write_json(
        &d.join("report.json"),
        &BeamformReport {
            frames: n_frames,
            chunks: report.chunks,
            matrix_builds: report.matrix_builds,
            dropped: report.dropped as u64,
            nnz: report.nnz as u64,
        },
    )
}

fn load_frames(out: &Path, n: usize) -> Result<(GridSpec, Vec<Vec<Complex64>>)> {
    let d = dir(out, Stage::Beamform);
    let mut grid = None;
    let mut frames = Vec::with_capacity(n);
    for i in 0..n {
        let (g, data) = load_frame(&frame_path(&d, i))?;
        if grid.is_some_and(|h| h != g) {
            return Err(Error::DimMismatch(format!("frame {i} has a different grid")));
        }
        grid = Some(g);
        frames.push(data);
    }
    Ok((grid.ok_or_else(|| Error::invalid("no beamformed frames"))?, frames))
}

pub(crate) fn post(cfg: &RunConfig, out: &Path) -> Result<()> {
    let (grid, frames) = load_frames(out, cfg.particles.frames)?;
    let (lo, hi) = cfg.post.svd_band;
    let hi = hi.unwrap_or(frames.len());
    let (filtered, report) = svd_filter(&frames, lo, hi)?;
    let d = dir(out, Stage::Post);
    write_json(&d.join("svd.json"), &report)?;
    let pd = ScalarGrid::from_data(grid, power_doppler(&filtered)?)?;
    pd.save(&d.join("pd.fqf"), Header::new().with("kind", "power_doppler"))?;
    let pd_db = ScalarGrid::from_data(grid, render_db(&pd.data, cfg.post.pd_dynamic_range_db, Scale::Power)?)?;
    pd_db.save(&d.join("pd_db.fqf"), Header::new().with("kind", "power_doppler_db"))?;
    write_pgm(&d.join("pd_mip.pgm"), &mip(&pd_db, Axis::Y))?;
    let b = ScalarGrid::from_data(grid, bmode(&frames[0], cfg.post.bmode_dynamic_range_db)?)?;
    write_pgm(&d.join("bmode_mip.pgm"), &mip(&b, Axis::Y))
}

/// Mean spacing over the axes with more than one node.
pub(crate) fn default_truth_sigma(grid: &GridSpec) -> f64 {
    let axes: Vec<f64> = (0..3).filter(|&a| grid.dims[a] > 1).map(|a| grid.spacing[a]).collect();
    if axes.is_empty() {
        grid.spacing[0]
    } else {
        axes.iter().sum::<f64>() / axes.len() as f64
    }
}

pub(crate) fn metrics_stage(cfg: &RunConfig, out: &Path) -> Result<()> {
    let pd_db = ScalarGrid::load(&dir(out, Stage::Post).join("pd_db.fqf"))?;
    let grid = pd_db.spec;
    let ens = ParticleEnsemble::load(&particles_dir(out))?;
    let sigma = cfg.metrics.truth_sigma.unwrap_or_else(|| default_truth_sigma(&grid));
    let truth = ground_truth_pd(&ens.frames, &grid, sigma)?;
    let truth_db = ScalarGrid::from_data(
        grid,
        render_db(&truth.data, cfg.post.pd_dynamic_range_db, Scale::Power)?,
    )?;
    let d = dir(out, Stage::Metrics);
    truth_db.save(&d.join("truth_db.fqf"), Header::new().with("kind", "ground_truth_db"))?;
    let (test, reference) = (mip(&pd_db, Axis::Y), mip(&truth_db, Axis::Y));
    write_pgm(&d.join("truth_mip.pgm"), &reference)?;
    write_metrics(&d, &metrics(&test, &reference)?)
}
