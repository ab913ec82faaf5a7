//! Memory-bounded delay-and-sum reconstruction with cached sparse delay matrices.

mod das;
mod delay;
mod iq;

pub use das::{
    assemble_frames, chunk_path, das_reconstruct, das_reconstruct_uncached, das_to_dir, frame_path, load_frame,
    matrix_bytes_per_point, matrix_chunks, plan_chunks, ChunkPlan, DasConfig, DasReport, Interpolation,
};
pub use delay::{aperture, round_trip, DelayMatrix, SampleLayout};
pub use iq::{lowpass_gain, rf_to_iq, IqFrame};
