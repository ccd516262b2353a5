use std::f64::consts::PI;

use rand::Rng;

use crate::audio::AudioBuffer;
use crate::sequencer::midi_to_hz;

pub const MAX_HARMONICS: usize = 32;
/// Harmonics at or above this fraction of the sample rate are dropped.
const NYQUIST_GUARD: f64 = 0.45;

/// Per-harmonic amplitudes and phases of a steady additive tone.
#[derive(Clone, Debug, PartialEq)]
pub struct HarmonicTimbre {
    pub amplitudes: Vec<f64>,
    pub phases: Vec<f64>,
}

impl HarmonicTimbre {
    /// Amplitudes for harmonics `1..=amplitudes.len()`, zero phase.
    pub fn from_amplitudes(amplitudes: Vec<f64>) -> Self {
        assert!(amplitudes.len() <= MAX_HARMONICS);
        let phases = vec![0.0; amplitudes.len()];
        Self { amplitudes, phases }
    }

    /// A random spectral shape: a power-law tilt, odd/even balance, one
    /// resonant bump and per-harmonic jitter.
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let count = rng.gen_range(4..=MAX_HARMONICS);
        let tilt = rng.gen_range(0.3..2.0);
        let odd = rng.gen_range(0.2..1.0);
        let even = rng.gen_range(0.2..1.0);
        let bump_center = rng.gen_range(2.0..12.0);
        let bump_width = rng.gen_range(0.8..4.0);
        let bump_gain = rng.gen_range(0.0..3.0);
        let mut amplitudes: Vec<f64> = (1..=count)
            .map(|k| {
                let k = k as f64;
                let parity = if k as usize % 2 == 1 { odd } else { even };
                let bump = 1.0 + bump_gain * (-((k - bump_center) / bump_width).powi(2)).exp();
                k.powf(-tilt) * parity * bump * rng.gen_range(0.3..1.0)
            })
            .collect();
        // Keep the fundamental the strongest partial so pitch stays unambiguous.
        let strongest_overtone = amplitudes[1..].iter().cloned().fold(0.0, f64::max);
        amplitudes[0] = amplitudes[0].max(strongest_overtone * 1.25);
        let peak = amplitudes[0];
        amplitudes.iter_mut().for_each(|a| *a /= peak);
        let phases = (0..count).map(|_| rng.gen_range(0.0..2.0 * PI)).collect();
        Self { amplitudes, phases }
    }

    /// Steady tone at `f0` Hz, `len` samples long, unnormalized.
    pub fn render(&self, f0: f64, len: usize, sample_rate: u32) -> AudioBuffer {
        let sr = sample_rate as f64;
        let partials: Vec<(f64, f64, f64)> = self
            .amplitudes
            .iter()
            .zip(&self.phases)
            .enumerate()
            .map(|(i, (&a, &p))| (2.0 * PI * f0 * (i + 1) as f64 / sr, a, p))
            .filter(|&(w, _, _)| w / (2.0 * PI) < NYQUIST_GUARD)
            .collect();
        let samples = (0..len)
            .map(|n| {
                let n = n as f64;
                partials.iter().map(|&(w, a, p)| a * (w * n + p).sin()).sum::<f64>() as f32
            })
            .collect();
        AudioBuffer::new(samples, sample_rate)
    }
}

/// Sustained note as a synthesizer would play it with the gate held: a
/// short overshooting attack that settles to a steady level, with the
/// steady part peak-normalized to 0.6.
pub fn render_sustained(timbre: &HarmonicTimbre, pitch_midi: u8, seconds: f64, sample_rate: u32) -> AudioBuffer {
    let len = (seconds * sample_rate as f64).round() as usize;
    let mut tone = timbre.render(midi_to_hz(pitch_midi as f64), len, sample_rate);
    let peak = tone.peak().max(1e-9);
    let sr = sample_rate as f64;
    for (n, s) in tone.samples_mut().iter_mut().enumerate() {
        let t = n as f64 / sr;
        let shape = if t < 0.04 {
            1.5 * t / 0.04
        } else {
            1.0 + 0.5 * (-(t - 0.04) / 0.08).exp()
        };
        *s = (*s as f64 * shape * 0.6 / peak as f64) as f32;
    }
    tone
}
