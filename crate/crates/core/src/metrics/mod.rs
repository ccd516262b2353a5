//! Objective metrics (MSTFT, LRMSD, F0RMSE), the multi-scale mel loss and
//! evaluation reports.

mod kernels;
mod report;

pub use kernels::{
    f0rmse, lrmsd, mstft, mstft_components, multiscale_mel_loss, MstftComponents, F0_HOP, MEL_SCALES,
    MSTFT_WINDOWS, UNVOICED_PENALTY_HZ,
};
pub use report::{evaluate_buffers, evaluate_pairs, write_csv, Aggregate, EvalPair, MetricReport, MetricRow, Metrics};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("sample rates differ: {0} Hz vs {1} Hz")]
    SampleRateMismatch(u32, u32),
    #[error(transparent)]
    Audio(#[from] crate::audio::AudioError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}
