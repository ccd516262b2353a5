use ndarray::Array2;

use crate::analysis::{estimate_f0, log_rms_contour, CONTOUR_FRAME, CONTOUR_HOP, LOG_FLOOR};
use crate::audio::{AudioBuffer, MelFilterbank, Stft};

use super::MetricsError;

pub const MSTFT_WINDOWS: [usize; 2] = [2048, 512];
pub const MEL_SCALES: [(usize, usize); 7] = [
    (32, 5),
    (64, 10),
    (128, 20),
    (256, 40),
    (512, 80),
    (1024, 160),
    (2048, 320),
];
pub const F0_HOP: usize = 256;
pub const UNVOICED_PENALTY_HZ: f64 = 50.0;

fn check_rates(a: &AudioBuffer, b: &AudioBuffer) -> Result<(), MetricsError> {
    if a.sample_rate() != b.sample_rate() {
        return Err(MetricsError::SampleRateMismatch(a.sample_rate(), b.sample_rate()));
    }
    Ok(())
}

/// Zero-pad the shorter signal; empty inputs become a single zero sample so
/// every frame-based metric has at least one frame.
fn padded(a: &AudioBuffer, b: &AudioBuffer) -> (Vec<f32>, Vec<f32>) {
    let n = a.len().max(b.len()).max(1);
    let pad = |x: &AudioBuffer| {
        let mut v = x.samples().to_vec();
        v.resize(n, 0.0);
        v
    };
    (pad(a), pad(b))
}

fn mean_abs_diff(a: &Array2<f64>, b: &Array2<f64>, f: impl Fn(f64) -> f64) -> f64 {
    let total: f64 = a.iter().zip(b.iter()).map(|(x, y)| (f(*x) - f(*y)).abs()).sum();
    total / a.len().max(1) as f64
}

fn log_floor(x: f64) -> f64 {
    x.max(LOG_FLOOR).ln()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MstftComponents {
    pub magnitude: f64,
    pub log_magnitude: f64,
}

impl MstftComponents {
    pub fn total(&self) -> f64 {
        self.magnitude + self.log_magnitude
    }
}

pub fn mstft_components(a: &AudioBuffer, b: &AudioBuffer) -> Result<MstftComponents, MetricsError> {
    check_rates(a, b)?;
    let (xa, xb) = padded(a, b);
    let mut out = MstftComponents {
        magnitude: 0.0,
        log_magnitude: 0.0,
    };
    for w in MSTFT_WINDOWS {
        let stft = Stft::new(w, w / 4)?;
        let ma = stft.magnitude(&xa)?;
        let mb = stft.magnitude(&xb)?;
        out.magnitude += mean_abs_diff(&ma, &mb, |v| v);
        out.log_magnitude += mean_abs_diff(&ma, &mb, log_floor);
    }
    Ok(out)
}

/// Multi-resolution STFT distance: magnitude plus log-magnitude mean-L1 over
/// windows 2048 and 512 (hop = window / 4).
pub fn mstft(a: &AudioBuffer, b: &AudioBuffer) -> Result<f64, MetricsError> {
    Ok(mstft_components(a, b)?.total())
}

pub fn multiscale_mel_loss(a: &AudioBuffer, b: &AudioBuffer) -> Result<f64, MetricsError> {
    check_rates(a, b)?;
    let (xa, xb) = padded(a, b);
    let mut total = 0.0;
    for (w, mels) in MEL_SCALES {
        let stft = Stft::new(w, w / 4)?;
        let bank = MelFilterbank::full_band(w, mels, a.sample_rate())?;
        let ma = bank.weights().dot(&stft.magnitude(&xa)?);
        let mb = bank.weights().dot(&stft.magnitude(&xb)?);
        total += mean_abs_diff(&ma, &mb, log_floor);
    }
    Ok(total)
}

/// Mean absolute difference of log-RMS contours (frame 1024, hop 256); the
/// shorter contour is padded with the floor value.
pub fn lrmsd(a: &AudioBuffer, b: &AudioBuffer) -> Result<f64, MetricsError> {
    check_rates(a, b)?;
    let ca = log_rms_contour(a, CONTOUR_FRAME, CONTOUR_HOP).log_rms;
    let cb = log_rms_contour(b, CONTOUR_FRAME, CONTOUR_HOP).log_rms;
    let n = ca.len().max(cb.len());
    let floor = LOG_FLOOR.ln();
    let at = |c: &[f64], i: usize| c.get(i).copied().unwrap_or(floor);
    Ok((0..n).map(|i| (at(&ca, i) - at(&cb, i)).abs()).sum::<f64>() / n as f64)
}

/// F0 RMSE in Hz over frames voiced in either track. Frames voiced in only
/// one track count as a 50 Hz error.
pub fn f0rmse(a: &AudioBuffer, b: &AudioBuffer) -> Result<f64, MetricsError> {
    check_rates(a, b)?;
    let (xa, xb) = padded(a, b);
    let ta = estimate_f0(&AudioBuffer::new(xa, a.sample_rate()), F0_HOP);
    let tb = estimate_f0(&AudioBuffer::new(xb, b.sample_rate()), F0_HOP);
    let mut sum = 0.0;
    let mut count = 0usize;
    for t in 0..ta.len() {
        match (ta.voicing[t], tb.voicing[t]) {
            (true, true) => sum += (ta.f0_hz[t] - tb.f0_hz[t]).powi(2),
            (false, false) => continue,
            _ => sum += UNVOICED_PENALTY_HZ * UNVOICED_PENALTY_HZ,
        }
        count += 1;
    }
    Ok(if count == 0 { 0.0 } else { (sum / count as f64).sqrt() })
}
