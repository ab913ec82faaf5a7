//! SVD clutter filtering, power Doppler, rendering, projections and image metrics.

mod export;
mod metrics;
mod render;
mod svd;
mod truth;

pub use export::{read_pgm, write_metrics, write_pgm};
pub use metrics::{metrics, mse, psnr_from_mse, ssim, MetricsReport};
pub use render::{bmode, mip, power_doppler, render_db, Axis, Scale};
pub use svd::{pearson, svd_filter, CasoratiSvd, SvdReport};
pub use truth::ground_truth_pd;
