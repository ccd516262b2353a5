use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::audio::AudioBuffer;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct YinConfig {
    pub fmin_hz: f64,
    pub fmax_hz: f64,
    /// CMNDF threshold; the first dip below it is taken as the period.
    pub threshold: f64,
    /// Frames whose window RMS falls below this are unvoiced.
    pub rms_gate: f64,
    pub window: usize,
}

impl Default for YinConfig {
    fn default() -> Self {
        Self {
            fmin_hz: 40.0,
            fmax_hz: 2500.0,
            threshold: 0.2,
            rms_gate: 1e-3,
            window: 1024,
        }
    }
}

/// Per-frame f0 in Hz; unvoiced frames hold 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PitchTrack {
    pub f0_hz: Vec<f64>,
    pub voicing: Vec<bool>,
    pub hop: usize,
    pub sample_rate: u32,
}

impl PitchTrack {
    pub fn len(&self) -> usize {
        self.f0_hz.len()
    }

    pub fn is_empty(&self) -> bool {
        self.f0_hz.is_empty()
    }

    pub fn voiced_count(&self) -> usize {
        self.voicing.iter().filter(|&&v| v).count()
    }

    /// Median f0 over voiced frames in `range`.
    pub fn median_f0(&self, range: std::ops::Range<usize>) -> Option<f64> {
        let mut v: Vec<f64> = range
            .filter(|&t| t < self.len() && self.voicing[t])
            .map(|t| self.f0_hz[t])
            .collect();
        if v.is_empty() {
            return None;
        }
        v.sort_by(|a, b| a.total_cmp(b));
        let m = v.len() / 2;
        Some(if v.len() % 2 == 1 { v[m] } else { 0.5 * (v[m - 1] + v[m]) })
    }
}

pub fn estimate_f0(buffer: &AudioBuffer, hop: usize) -> PitchTrack {
    estimate_f0_with(buffer, hop, &YinConfig::default())
}

struct Yin {
    cfg: YinConfig,
    tau_min: usize,
    tau_max: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    size: usize,
    sr: f64,
}

impl Yin {
    fn new(cfg: &YinConfig, sr: u32) -> Self {
        let sr_f = sr as f64;
        let tau_min = ((sr_f / cfg.fmax_hz).floor() as usize).max(2);
        let tau_max = ((sr_f / cfg.fmin_hz).ceil() as usize).max(tau_min + 2);
        let size = (cfg.window + tau_max + 1).next_power_of_two();
        let mut planner = FftPlanner::new();
        Self {
            cfg: cfg.clone(),
            tau_min,
            tau_max,
            fwd: planner.plan_fft_forward(size),
            inv: planner.plan_fft_inverse(size),
            size,
            sr: sr_f,
        }
    }

    fn frame(&self, x: &[f32], center: usize) -> Option<f64> {
        let w = self.cfg.window;
        let seg_len = w + self.tau_max + 1;
        let start = center as isize - (w / 2) as isize;
        let seg: Vec<f64> = (0..seg_len)
            .map(|j| {
                let i = start + j as isize;
                if i >= 0 && (i as usize) < x.len() {
                    x[i as usize] as f64
                } else {
                    0.0
                }
            })
            .collect();

        let mut prefix = vec![0.0; seg_len + 1];
        for (j, v) in seg.iter().enumerate() {
            prefix[j + 1] = prefix[j] + v * v;
        }
        let e1 = prefix[w];
        if (e1 / w as f64).sqrt() < self.cfg.rms_gate {
            return None;
        }

        // r(tau) = sum_{j<W} seg[j] * seg[j + tau] via one cross-spectrum.
        let mut a: Vec<Complex<f64>> = vec![Complex::default(); self.size];
        let mut s: Vec<Complex<f64>> = vec![Complex::default(); self.size];
        for j in 0..w {
            a[j].re = seg[j];
        }
        for (j, v) in seg.iter().enumerate() {
            s[j].re = *v;
        }
        self.fwd.process(&mut a);
        self.fwd.process(&mut s);
        for (av, sv) in a.iter_mut().zip(&s) {
            *av = av.conj() * sv;
        }
        self.inv.process(&mut a);
        let norm = 1.0 / self.size as f64;

        let mut cmnd = vec![1.0; self.tau_max + 2];
        let mut running = 0.0;
        for tau in 1..=self.tau_max + 1 {
            let e2 = prefix[tau + w] - prefix[tau];
            let d = (e1 + e2 - 2.0 * a[tau].re * norm).max(0.0);
            running += d;
            cmnd[tau] = if running > 0.0 { d * tau as f64 / running } else { 1.0 };
        }

        let mut tau = (self.tau_min..=self.tau_max).find(|&t| cmnd[t] < self.cfg.threshold)?;
        while tau < self.tau_max && cmnd[tau + 1] < cmnd[tau] {
            tau += 1;
        }
        let (l, m, r) = (cmnd[tau - 1], cmnd[tau], cmnd[tau + 1]);
        let denom = l - 2.0 * m + r;
        let shift = if denom.abs() > 1e-12 {
            (0.5 * (l - r) / denom).clamp(-1.0, 1.0)
        } else {
            0.0
        };
        let f0 = self.sr / (tau as f64 + shift);
        (f0 >= self.cfg.fmin_hz && f0 <= self.cfg.fmax_hz).then_some(f0)
    }
}

/// YIN pitch tracker on the centered frame grid (`1 + n / hop` frames).
pub fn estimate_f0_with(buffer: &AudioBuffer, hop: usize, cfg: &YinConfig) -> PitchTrack {
    assert!(hop > 0, "hop must be positive");
    let yin = Yin::new(cfg, buffer.sample_rate());
    let x = buffer.samples();
    let frames = 1 + x.len() / hop;
    let est: Vec<Option<f64>> = (0..frames).into_par_iter().map(|t| yin.frame(x, t * hop)).collect();
    PitchTrack {
        f0_hz: est.iter().map(|f| f.unwrap_or(0.0)).collect(),
        voicing: est.iter().map(Option::is_some).collect(),
        hop,
        sample_rate: buffer.sample_rate(),
    }
}
