//! Full-reference image quality metrics and dataset-level reports.

mod fsim;
mod image;
mod psnr;
mod report;
mod ssim;

pub use fsim::{fsim, gradient_magnitude, phase_congruency, FSIM_MIN_SIDE};
pub use image::GrayImage;
pub use psnr::{mse, psnr};
pub use report::{evaluate_pair, evaluate_pairs, render_table, EvaluationReport, Metric, MetricReport, PairMetrics};
pub use ssim::{ssim, SSIM_WINDOW};
