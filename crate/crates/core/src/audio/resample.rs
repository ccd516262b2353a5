use std::sync::OnceLock;

use super::AudioBuffer;

/// Zero crossings of the sinc kernel on each side (64 taps at unit ratio).
const HALF_ZEROS: usize = 32;
const TABLE_RES: usize = 512;
const KAISER_BETA: f64 = 8.6;

/// Modified Bessel function of the first kind, order zero.
fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let half = x / 2.0;
    for k in 1..64 {
        term *= (half / k as f64).powi(2);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

/// Kaiser-windowed sinc sampled at `TABLE_RES` points per zero crossing.
fn kernel_table() -> &'static [f64] {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let norm = bessel_i0(KAISER_BETA);
        (0..=HALF_ZEROS * TABLE_RES + 1)
            .map(|i| {
                let u = i as f64 / TABLE_RES as f64;
                if u >= HALF_ZEROS as f64 {
                    return 0.0;
                }
                let sinc = if i == 0 {
                    1.0
                } else {
                    (std::f64::consts::PI * u).sin() / (std::f64::consts::PI * u)
                };
                let r = u / HALF_ZEROS as f64;
                sinc * bessel_i0(KAISER_BETA * (1.0 - r * r).sqrt()) / norm
            })
            .collect()
    })
}

fn kernel(table: &[f64], u: f64) -> f64 {
    let pos = u.abs() * TABLE_RES as f64;
    let i = pos as usize;
    if i >= HALF_ZEROS * TABLE_RES {
        return 0.0;
    }
    let frac = pos - i as f64;
    table[i] + (table[i + 1] - table[i]) * frac
}

/// Varispeed resampling: reads the input `ratio` times faster, so pitch rises
/// by `ratio` and the output holds `round(len / ratio)` samples at the
/// unchanged sample rate. The anti-aliasing cutoff follows `min(1, 1/ratio)`.
///
/// # Panics
/// If `ratio` is not a positive finite number.
pub fn resample(buffer: &AudioBuffer, ratio: f64) -> AudioBuffer {
    assert!(ratio.is_finite() && ratio > 0.0, "resample ratio must be positive");
    let input = buffer.samples();
    let out_len = (input.len() as f64 / ratio).round() as usize;
    let cutoff = (1.0 / ratio).min(1.0);
    let support = HALF_ZEROS as f64 / cutoff;
    let table = kernel_table();
    let last = input.len() as isize - 1;

    let samples = (0..out_len)
        .map(|j| {
            let pos = j as f64 * ratio;
            let lo = ((pos - support).ceil() as isize).max(0);
            let hi = ((pos + support).floor() as isize).min(last);
            let mut acc = 0.0;
            for i in lo..=hi {
                acc += input[i as usize] as f64 * kernel(table, cutoff * (pos - i as f64));
            }
            (acc * cutoff) as f32
        })
        .collect();
    AudioBuffer::new(samples, buffer.sample_rate())
}
