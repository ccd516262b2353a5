//! Shared DSP primitives: the mono [`AudioBuffer`], WAV I/O, framed
//! transforms, mel filterbanks and varispeed resampling.

mod buffer;
mod mel;
mod resample;
mod stft;
mod wav;

pub use buffer::{seconds_to_samples, AudioBuffer, FrameSpec, DEFAULT_SAMPLE_RATE};
pub use mel::{hz_to_mel, mel_to_hz, MelFilterbank};
pub use resample::resample;
pub use stft::{stft_magnitude, Spectrogram, Stft};
pub use wav::{read_wav, write_wav, write_wav_to, Encoding, WriteReport};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("unsupported WAV format: {0}")]
    UnsupportedFormat(String),
    #[error("corrupt WAV header: {0}")]
    CorruptHeader(String),
    #[error("I/O failure on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("empty input")]
    EmptyInput,
    #[error("invalid frequency range: fmin {fmin} Hz must be below fmax {fmax} Hz")]
    InvalidRange { fmin: f64, fmax: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}
