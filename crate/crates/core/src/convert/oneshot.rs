//! One-shot estimation from mel spectra.
//!
//! A one-shot is pitch-shifted by resampling, which keeps each harmonic's
//! amplitude attached to its index. The estimator therefore reads the
//! mel spectrum at `k * f0` in every voiced frame and averages per index,
//! instead of reading one pitch-blurred average profile. The amplitudes
//! are then refined by re-rendering the analyzed phrase with the current
//! estimate and correcting each harmonic by the ratio of reference to
//! estimate.

use std::f64::consts::PI;

use ndarray::Array2;

use crate::analysis::{PitchTrack, PROFILE_FFT, PROFILE_MELS};
use crate::audio::{AudioBuffer, AudioError, MelFilterbank, Stft};
use crate::envelope::AdsrEnvelope;
use crate::sequencer::{midi_to_hz, render_sequence, MidiSequence};
use crate::timbrebank::{HarmonicTimbre, OneShot, MAX_HARMONICS};

pub const REFINE_ITERATIONS: usize = 3;
const NYQUIST_GUARD: f64 = 0.45;
/// Harmonics weaker than this fraction of the strongest are dropped.
const PRUNE_RATIO: f64 = 1e-3;

/// Piecewise-linear lookup of a per-band value at `hz`, using band centers
/// as knots.
pub(crate) fn profile_at(values: impl Fn(usize) -> f64, centers: &[f64], hz: f64) -> f64 {
    if hz <= centers[0] {
        return values(0);
    }
    let last = centers.len() - 1;
    if hz >= centers[last] {
        return values(last);
    }
    let i = centers.partition_point(|&c| c <= hz);
    let (c0, c1) = (centers[i - 1], centers[i]);
    let w = (hz - c0) / (c1 - c0);
    values(i - 1) * (1.0 - w) + values(i) * w
}

/// Mel spectrogram on the analysis grid used for timbre profiles.
pub(crate) struct MelAnalyzer {
    stft: Stft,
    bank: MelFilterbank,
}

impl MelAnalyzer {
    pub(crate) fn new(hop: usize, sample_rate: u32) -> Result<Self, AudioError> {
        Ok(Self {
            stft: Stft::new(PROFILE_FFT, hop)?,
            bank: MelFilterbank::full_band(PROFILE_FFT, PROFILE_MELS, sample_rate)?,
        })
    }

    pub(crate) fn mel(&self, buffer: &AudioBuffer) -> Result<Array2<f64>, AudioError> {
        Ok(self.bank.weights().dot(&self.stft.magnitude(buffer.samples())?))
    }

    /// Mean mel magnitude at `k * f0` over voiced frames, for harmonics
    /// `1..=MAX_HARMONICS` (zero where never below the guard frequency).
    pub(crate) fn harmonic_profile(&self, mel: &Array2<f64>, track: &PitchTrack) -> Vec<f64> {
        let centers = self.bank.centers_hz();
        let nyq = NYQUIST_GUARD * track.sample_rate as f64;
        let mut sums = vec![0.0; MAX_HARMONICS];
        let mut counts = vec![0usize; MAX_HARMONICS];
        for t in (0..mel.ncols().min(track.len())).filter(|&t| track.voicing[t]) {
            let col = mel.column(t);
            for k in 0..MAX_HARMONICS {
                let f = (k + 1) as f64 * track.f0_hz[t];
                if f >= nyq {
                    break;
                }
                sums[k] += profile_at(|m| col[m], centers, f);
                counts[k] += 1;
            }
        }
        sums.iter()
            .zip(&counts)
            .map(|(s, &n)| if n == 0 { 0.0 } else { s / n as f64 })
            .collect()
    }
}

/// Fixed quadratic phases keep the crest factor low and make synthesis
/// deterministic.
fn phases(count: usize) -> Vec<f64> {
    (0..count).map(|k| PI * (k * k) as f64 / count as f64).collect()
}

fn one_shot(amplitudes: &[f64], pitch_midi: u8, level: f64, sample_rate: u32) -> OneShot {
    let timbre = HarmonicTimbre {
        amplitudes: amplitudes.to_vec(),
        phases: phases(amplitudes.len()),
    };
    let audio = timbre.render(midi_to_hz(pitch_midi as f64), sample_rate as usize, sample_rate);
    let rms = audio.rms();
    let gain = if rms > 0.0 { (level / rms) as f32 } else { 0.0 };
    OneShot::new(0, pitch_midi, 1.0, audio.scaled(gain)).expect("one second of audio")
}

/// What the estimator needs to know about the analyzed phrase.
pub struct PhraseModel<'a> {
    pub track: &'a PitchTrack,
    pub content: &'a MidiSequence,
    pub envelope: &'a AdsrEnvelope,
    pub pitch_midi: u8,
    pub level: f64,
}

/// 32-harmonic additive one-shot at the phrase's median pitch whose
/// per-harmonic mel readings match the reference's, scaled to RMS `level`.
pub fn estimate_one_shot(reference: &AudioBuffer, phrase: &PhraseModel<'_>) -> Result<OneShot, AudioError> {
    let sr = reference.sample_rate();
    let analyzer = MelAnalyzer::new(phrase.track.hop, sr)?;
    let target = analyzer.harmonic_profile(&analyzer.mel(reference)?, phrase.track);
    let mut amps: Vec<f64> = target.clone();
    for _ in 0..REFINE_ITERATIONS {
        let shot = one_shot(&amps, phrase.pitch_midi, phrase.level, sr);
        let Ok(probe) = render_sequence(&shot, phrase.content, phrase.envelope) else { break };
        let got = analyzer.harmonic_profile(&analyzer.mel(&probe)?, phrase.track);
        for ((a, want), have) in amps.iter_mut().zip(&target).zip(&got) {
            if *have > 0.0 {
                *a *= (want / have).clamp(0.1, 10.0);
            }
        }
    }
    let peak = amps.iter().cloned().fold(0.0, f64::max);
    for a in &mut amps {
        if *a < PRUNE_RATIO * peak {
            *a = 0.0;
        }
    }
    Ok(one_shot(&amps, phrase.pitch_midi, phrase.level, sr))
}
