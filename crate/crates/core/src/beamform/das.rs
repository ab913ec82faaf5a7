use std::path::{Path, PathBuf};

use num_complex::{Complex, Complex64};
use serde::{Deserialize, Serialize};

use crate::container::{read_container, write_container, Header, Payload};
use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::grid::GridSpec;
use crate::rf::{Transducer, TxEvent};

use super::delay::{DelayMatrix, SampleLayout};
use super::iq::IqFrame;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DasConfig {
    pub f_number: f64,
    pub sound_speed: f64,
    /// Bytes available for delay matrices and chunk output.
    pub memory_budget: u64,
    /// Overrides the planned chunk count.
    pub chunks: Option<usize>,
    pub interpolation: Interpolation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    #[default]
    Linear,
    Nearest,
}

impl Default for DasConfig {
    fn default() -> Self {
        Self {
            f_number: 1.5,
            sound_speed: 1540.0,
            memory_budget: 512 << 20,
            chunks: None,
            interpolation: Interpolation::Linear,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChunkPlan {
    pub n_points: usize,
    pub n_tx: usize,
    pub budget: u64,
    pub chunks: usize,
    /// Contiguous ranges partitioning `0..n_points`, sizes equal within one.
    pub ranges: Vec<std::ops::Range<usize>>,
}

/// `N_chunks = ceil(16 N_points N_tx / budget)`: complex accumulators for every
/// point and transmit of a chunk fit the budget.
pub fn plan_chunks(n_points: usize, n_tx: usize, budget: u64) -> Result<ChunkPlan> {
    let row = 16 * n_tx.max(1) as u64;
    if budget <= row {
        return Err(Error::BudgetTooSmall {
            budget,
            required: row + 1,
        });
    }
    let chunks = ((n_points as u64 * row).div_ceil(budget) as usize).clamp(1, n_points.max(1));
    Ok(ChunkPlan {
        n_points,
        n_tx,
        budget,
        chunks,
        ranges: chunk_ranges(n_points, chunks),
    })
}

/// Worst-case bytes of delay matrices for one point over all transmits.
pub fn matrix_bytes_per_point(n_tx: usize, n_elements: usize) -> u64 {
    (n_tx * n_elements * 2 * 20 + 8) as u64
}

/// Chunks needed so that one chunk's delay matrices fit the budget.
pub fn matrix_chunks(n_points: usize, n_tx: usize, n_elements: usize, budget: u64) -> Result<usize> {
    let per = matrix_bytes_per_point(n_tx, n_elements);
    if budget < per {
        return Err(Error::BudgetTooSmall { budget, required: per });
    }
    Ok(((n_points as u64 * per).div_ceil(budget) as usize).clamp(1, n_points.max(1)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct DasReport {
    pub chunks: usize,
    /// Chunk count from the accumulator estimate alone.
    pub accumulator_chunks: usize,
    /// Chunk count from the delay-matrix cap alone.
    pub matrix_chunks: usize,
    /// Delay matrices built (one per chunk and transmit when cached).
    pub matrix_builds: usize,
    pub dropped: usize,
    pub nnz: usize,
}

fn chunk_ranges(n: usize, chunks: usize) -> Vec<std::ops::Range<usize>> {
    let chunks = chunks.clamp(1, n.max(1));
    (0..chunks).map(|k| k * n / chunks..(k + 1) * n / chunks).collect()
}

fn points_of(grid: &GridSpec) -> Vec<Vec3> {
    (0..grid.len()).map(|i| grid.position_of(i)).collect()
}

/// Shared reconstruction loop. `source(frame, tx)` yields IQ data;
/// `emit(chunk, range, out)` receives `out[frame][point]` for each chunk.
#[allow(clippy::too_many_arguments)]
fn reconstruct<S, E>(
    mut source: S,
    n_frames: usize,
    transducer: &Transducer,
    txs: &[TxEvent],
    grid: &GridSpec,
    cfg: &DasConfig,
    cache: bool,
    mut emit: E,
) -> Result<DasReport>
where
    S: FnMut(usize, usize) -> Result<IqFrame>,
    E: FnMut(usize, std::ops::Range<usize>, Vec<Vec<Complex64>>) -> Result<()>,
{
    if txs.is_empty() {
        return Err(Error::invalid("at least one transmit is required"));
    }
    let elements = transducer.elements();
    let points = points_of(grid);
    let accumulator_chunks = plan_chunks(points.len(), txs.len(), cfg.memory_budget)?.chunks;
    let matrix_chunks = matrix_chunks(points.len(), txs.len(), elements.len(), cfg.memory_budget)?;
    let chunks = match cfg.chunks {
        Some(n) if n > 0 => n,
        Some(_) => return Err(Error::invalid("chunk count must be >= 1")),
        None => accumulator_chunks.max(matrix_chunks),
    };
    let ranges = chunk_ranges(points.len(), chunks);
    let mut report = DasReport {
        chunks: ranges.len(),
        accumulator_chunks,
        matrix_chunks,
        ..Default::default()
    };
    let inv_tx = 1.0 / txs.len() as f64;
    for (k, range) in ranges.into_iter().enumerate() {
        let pts = &points[range.clone()];
        let mut matrices: Vec<Option<DelayMatrix>> = vec![None; txs.len()];
        let mut out = Vec::with_capacity(n_frames);
        for f in 0..n_frames {
            let mut img = vec![Complex64::new(0.0, 0.0); pts.len()];
            for (t, tx) in txs.iter().enumerate() {
                let iq = source(f, t)?;
                let layout = SampleLayout::of(&iq);
                let stale = matrices[t].as_ref().is_none_or(|m| !cache || m.layout != layout);
                if stale {
                    let m = DelayMatrix::build(pts, &elements, tx, layout, cfg)?;
                    report.matrix_builds += 1;
                    if f == 0 {
                        report.dropped += m.dropped;
                        report.nnz += m.nnz();
                    }
                    matrices[t] = Some(m);
                }
                matrices[t].as_ref().expect("built above").apply_add(&iq, &mut img)?;
            }
            img.iter_mut().for_each(|z| *z *= inv_tx);
            out.push(img);
        }
        emit(k, range, out)?;
    }
    Ok(report)
}

/// Delay-and-sum of `iq[frame][tx]` over all grid points, compounding the
/// transmits. Returns `[frame][point]` in grid order.
pub fn das_reconstruct(
    iq: &[Vec<IqFrame>],
    transducer: &Transducer,
    txs: &[TxEvent],
    grid: &GridSpec,
    cfg: &DasConfig,
) -> Result<(Vec<Vec<Complex64>>, DasReport)> {
    das_in_memory(iq, transducer, txs, grid, cfg, true)
}

/// Same as [`das_reconstruct`] but rebuilding every delay matrix per frame.
pub fn das_reconstruct_uncached(
    iq: &[Vec<IqFrame>],
    transducer: &Transducer,
    txs: &[TxEvent],
    grid: &GridSpec,
    cfg: &DasConfig,
) -> Result<(Vec<Vec<Complex64>>, DasReport)> {
    das_in_memory(iq, transducer, txs, grid, cfg, false)
}

fn das_in_memory(
    iq: &[Vec<IqFrame>],
    transducer: &Transducer,
    txs: &[TxEvent],
    grid: &GridSpec,
    cfg: &DasConfig,
    cache: bool,
) -> Result<(Vec<Vec<Complex64>>, DasReport)> {
    if iq.iter().any(|f| f.len() != txs.len()) {
        return Err(Error::DimMismatch(
            "every frame needs one IQ record per transmit".into(),
        ));
    }
    let mut images = vec![vec![Complex64::new(0.0, 0.0); grid.len()]; iq.len()];
    let report = reconstruct(
        |f, t| Ok(iq[f][t].clone()),
        iq.len(),
        transducer,
        txs,
        grid,
        cfg,
        cache,
        |_, range, out| {
            for (img, chunk) in images.iter_mut().zip(out) {
                img[range.clone()].copy_from_slice(&chunk);
            }
            Ok(())
        },
    )?;
    Ok((images, report))
}

pub fn chunk_path(dir: &Path, k: usize) -> PathBuf {
    dir.join(format!("IQ_CHUNK_{k}.fqf"))
}

pub fn frame_path(dir: &Path, i: usize) -> PathBuf {
    dir.join(format!("Frame_{i}.fqf"))
}

fn to_c64(v: &[Complex64]) -> Payload {
    Payload::C64(v.iter().map(|z| Complex::new(z.re as f32, z.im as f32)).collect())
}

/// Out-of-core reconstruction: IQ records come from `source`, each chunk is
/// written as `IQ_CHUNK_<k>.fqf` and the frames are assembled into
/// `Frame_<i>.fqf` (complex f32, grid keys in the header).
#[allow(clippy::too_many_arguments)]
pub fn das_to_dir(
    source: impl FnMut(usize, usize) -> Result<IqFrame>,
    n_frames: usize,
    transducer: &Transducer,
    txs: &[TxEvent],
    grid: &GridSpec,
    cfg: &DasConfig,
    out_dir: &Path,
) -> Result<DasReport> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let report = reconstruct(source, n_frames, transducer, txs, grid, cfg, true, |k, range, out| {
        let header = Header::new()
            .with("kind", "iq_chunk")
            .with("start", range.start)
            .with("points", range.len())
            .with("frames", n_frames);
        let flat: Vec<Complex64> = out.into_iter().flatten().collect();
        write_container(&chunk_path(out_dir, k), &header, to_c64(&flat))
    })?;
    assemble_frames(out_dir, report.chunks, n_frames, grid, cfg.memory_budget)?;
    Ok(report)
}

/// Gather chunk files into per-frame images, in frame batches that fit `budget`.
pub fn assemble_frames(dir: &Path, chunks: usize, n_frames: usize, grid: &GridSpec, budget: u64) -> Result<()> {
    let frame_bytes = 16 * grid.len() as u64;
    let batch = ((budget / frame_bytes.max(1)) as usize).clamp(1, n_frames.max(1));
    for first in (0..n_frames).step_by(batch) {
        let last = (first + batch).min(n_frames);
        let mut images = vec![vec![Complex64::new(0.0, 0.0); grid.len()]; last - first];
        for k in 0..chunks {
            let path = chunk_path(dir, k);
            if !path.exists() {
                return Err(Error::MissingChunk(path));
            }
            let (h, payload) = read_container(&path)?;
            let start = h.get_usize("start")?;
            let points = h.get_usize("points")?;
            let data = payload
                .to_c128_vec()
                .ok_or_else(|| Error::Header("chunk payload must be complex".into()))?;
            if data.len() != points * n_frames || start + points > grid.len() {
                return Err(Error::SizeMismatch(format!("chunk {k} has an unexpected shape")));
            }
            for (i, img) in images.iter_mut().enumerate() {
                let f = first + i;
                img[start..start + points].copy_from_slice(&data[f * points..(f + 1) * points]);
            }
        }
        for (i, img) in images.iter().enumerate() {
            let mut header = Header::new().with("kind", "beamformed_frame").with("frame", first + i);
            grid.write_header(&mut header);
            write_container(&frame_path(dir, first + i), &header, to_c64(img))?;
        }
    }
    Ok(())
}

/// Load a beamformed frame written by [`das_to_dir`].
pub fn load_frame(path: &Path) -> Result<(GridSpec, Vec<Complex64>)> {
    let (h, payload) = read_container(path)?;
    let grid = GridSpec::from_header(&h)?;
    let data = payload
        .to_c128_vec()
        .ok_or_else(|| Error::Header("frame payload must be complex".into()))?;
    if data.len() != grid.len() {
        return Err(Error::SizeMismatch("frame length differs from its grid".into()));
    }
    Ok((grid, data))
}
