//! Frequency-domain RF channel data synthesis.

mod compose;
mod frame;
mod synth;
mod transducer;

pub use compose::{compose_frames, ComposeReport, Scene};
pub use frame::RfFrame;
pub use synth::{
    analytic_signal, max_two_way_time, memory_estimate, simulate_rf, simulate_rf_chunked, Acquisition, ChunkReport,
    Chunking, FrequencyPlan, MediumParams, Spectrum,
};
pub use transducer::{
    directivity, elevation_factor, elevation_log_terms, elevation_terms, plane_wave_delays, ElevationCoeffs, Layout,
    Transducer, TxEvent, PRESET_NAMES,
};
