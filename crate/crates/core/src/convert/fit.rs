//! Least-squares AHDSR fit to a frame-RMS contour.
//!
//! The model frame RMS is `L * sqrt(mean(g^2))` over the frame, where `g`
//! is the gain of whichever note is sounding (each note sounds until the
//! next onset). Segmented gates are only approximate when a note is
//! released mid-decay. When a note's tail dies out before the next onset
//! its sound end is `gate + release`, which ties that gate to the release
//! being fitted. The remaining gates are refined by a grid search that
//! alternates with the envelope fit.

use argmin::core::{CostFunction, Error as ArgminError, Executor, State};
use argmin::solver::neldermead::NelderMead;
use rand::Rng;

use crate::analysis::EnvelopeContour;
use crate::envelope::{AdsrEnvelope, ATTACK_MS, DECAY_MS, HOLD_MS, RELEASE_MS, SUSTAIN_LEVEL};
use crate::seed::substream;
use crate::sequencer::NoteEvent;

pub const FIT_STARTS: usize = 8;
const ROUNDS: usize = 3;
const SUBSAMPLES: usize = 16;
const MAX_ITERS: u64 = 300;
const FIT_SEED: u64 = 0x5eed_f17;
const GATE_STEP_S: f64 = 0.002;
const MIN_GATE_S: f64 = 0.01;

/// Fitted envelope, level and note gates.
#[derive(Clone, Debug, PartialEq)]
pub struct EnvelopeFit {
    pub envelope: AdsrEnvelope,
    pub level: f64,
    /// Input notes with refined durations.
    pub notes: Vec<NoteEvent>,
    /// Residual sum of squares relative to the contour energy.
    pub relative_error: f64,
}

const BOX: [(f64, f64); 5] = [
    (*ATTACK_MS.start(), *ATTACK_MS.end()),
    (*HOLD_MS.start(), *HOLD_MS.end()),
    (*DECAY_MS.start(), *DECAY_MS.end()),
    (*SUSTAIN_LEVEL.start(), *SUSTAIN_LEVEL.end()),
    (*RELEASE_MS.start(), *RELEASE_MS.end()),
];

fn to_envelope(p: &[f64]) -> AdsrEnvelope {
    let v: Vec<f64> = p
        .iter()
        .zip(BOX)
        .map(|(x, (lo, hi))| lo + x.clamp(0.0, 1.0) * (hi - lo))
        .collect();
    AdsrEnvelope {
        envelope_id: 0,
        attack_ms: v[0],
        hold_ms: v[1],
        decay_ms: v[2],
        sustain_level: v[3],
        release_ms: v[4],
    }
}

fn to_unit(env: &AdsrEnvelope) -> Vec<f64> {
    [env.attack_ms, env.hold_ms, env.decay_ms, env.sustain_level, env.release_ms]
        .iter()
        .zip(BOX)
        .map(|(v, (lo, hi))| ((v - lo) / (hi - lo)).clamp(0.0, 1.0))
        .collect()
}

#[derive(Clone, Copy)]
struct Probe {
    note: usize,
    since_onset: f64,
}

/// Sample instants inside each analysis frame, resolved once to the note
/// sounding there.
struct Problem {
    /// Per note, the time (from onset) at which its sound ends, if it dies
    /// out before the next onset.
    tails: Vec<Option<f64>>,
    targets: Vec<f64>,
    energy: f64,
    probes: Vec<[Option<Probe>; SUBSAMPLES]>,
    /// Frames touched by each note.
    note_frames: Vec<std::ops::Range<usize>>,
}

impl Problem {
    fn new(contour: &EnvelopeContour, notes: &[NoteEvent], tails: &[Option<f64>], signal_len: usize) -> Self {
        let sr = contour.sample_rate as f64;
        let frame = contour.frame_length as f64;
        let end_s = signal_len as f64 / sr;
        let targets = contour.linear();
        let mut note_frames = vec![usize::MAX..0; notes.len()];
        let probes = (0..contour.len())
            .map(|t| {
                let center = (t * contour.hop) as f64;
                let mut row = [None; SUBSAMPLES];
                for (k, slot) in row.iter_mut().enumerate() {
                    let s = (center - frame / 2.0 + (k as f64 + 0.5) * frame / SUBSAMPLES as f64) / sr;
                    if s < 0.0 || s >= end_s {
                        continue;
                    }
                    let idx = notes.partition_point(|n| n.onset_s <= s);
                    if idx > 0 {
                        let note = idx - 1;
                        *slot = Some(Probe {
                            note,
                            since_onset: s - notes[note].onset_s,
                        });
                        let r = &mut note_frames[note];
                        *r = r.start.min(t)..r.end.max(t + 1);
                    }
                }
                row
            })
            .collect();
        let energy = targets.iter().map(|r| r * r).sum::<f64>().max(1e-300);
        Self {
            tails: tails.to_vec(),
            targets,
            energy,
            probes,
            note_frames,
        }
    }

    /// Tied gates follow the release; the rest come from `free`.
    fn gates(&self, env: &AdsrEnvelope, free: &[f64]) -> Vec<f64> {
        self.tails
            .iter()
            .zip(free)
            .map(|(tail, &g)| tail.map_or(g, |end| (end - env.release_s()).max(MIN_GATE_S)))
            .collect()
    }

    fn frame_model(&self, t: usize, env: &AdsrEnvelope, gates: &[f64]) -> f64 {
        let ms: f64 = self.probes[t]
            .iter()
            .map(|p| p.map_or(0.0, |p| env.gain(p.since_onset, gates[p.note]).powi(2)))
            .sum::<f64>()
            / SUBSAMPLES as f64;
        ms.sqrt()
    }

    /// Optimal level and relative residual for an envelope.
    fn solve(&self, env: &AdsrEnvelope, free: &[f64]) -> (f64, f64) {
        let gates = self.gates(env, free);
        let gates = gates.as_slice();
        let u: Vec<f64> = (0..self.targets.len()).map(|t| self.frame_model(t, env, gates)).collect();
        let uu: f64 = u.iter().map(|x| x * x).sum();
        if uu <= 0.0 {
            return (0.0, 1.0);
        }
        let ru: f64 = u.iter().zip(&self.targets).map(|(a, b)| a * b).sum();
        let level = (ru / uu).max(0.0);
        let rss: f64 = u
            .iter()
            .zip(&self.targets)
            .map(|(a, b)| (b - level * a).powi(2))
            .sum();
        (level, rss / self.energy)
    }

    /// Best gate for one note on a fixed grid, other gates held.
    fn refine_gate(&self, note: usize, max_gate: f64, env: &AdsrEnvelope, level: f64, free: &mut [f64]) {
        let frames = self.note_frames[note].clone();
        if frames.is_empty() || self.tails[note].is_some() {
            return;
        }
        let mut gates = self.gates(env, free);
        let mut best = (f64::INFINITY, gates[note]);
        let steps = ((max_gate - MIN_GATE_S) / GATE_STEP_S).floor().max(0.0) as usize;
        for i in 0..=steps {
            gates[note] = MIN_GATE_S + i as f64 * GATE_STEP_S;
            let rss: f64 = frames
                .clone()
                .map(|t| (self.targets[t] - level * self.frame_model(t, env, &gates)).powi(2))
                .sum();
            if rss < best.0 {
                best = (rss, gates[note]);
            }
        }
        free[note] = best.1;
    }
}

struct Cost<'a> {
    problem: &'a Problem,
    gates: &'a [f64],
}

impl CostFunction for Cost<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, p: &Self::Param) -> Result<f64, ArgminError> {
        let outside: f64 = p.iter().map(|x| (x - x.clamp(0.0, 1.0)).powi(2)).sum();
        Ok(self.problem.solve(&to_envelope(p), self.gates).1 + 10.0 * outside)
    }
}

fn simplex(start: &[f64]) -> Vec<Vec<f64>> {
    let mut vertices = vec![start.to_vec()];
    for i in 0..start.len() {
        let mut v = start.to_vec();
        v[i] = if v[i] + 0.2 <= 1.0 { v[i] + 0.2 } else { v[i] - 0.2 };
        vertices.push(v);
    }
    vertices
}

fn minimize(problem: &Problem, gates: &[f64], starts: &[Vec<f64>]) -> Vec<f64> {
    let mut best: Option<(f64, Vec<f64>)> = None;
    for start in starts {
        let solver = NelderMead::new(simplex(start))
            .with_sd_tolerance(1e-10)
            .expect("tolerance is positive");
        let result = Executor::new(Cost { problem, gates }, solver)
            .configure(|s| s.max_iters(MAX_ITERS))
            .run()
            .expect("cost function is infallible");
        let state = result.state();
        let cost = state.get_best_cost();
        if let Some(p) = state.get_best_param() {
            if best.as_ref().is_none_or(|(c, _)| cost < *c) {
                best = Some((cost, p.clone()));
            }
        }
    }
    best.expect("at least one start").1
}

/// Multi-start Nelder-Mead over the normalized parameter box, alternating
/// with per-note gate searches. Starts are the box center plus seeded
/// uniform draws, so fits are deterministic.
///
/// `tails[i]` is the time after note `i`'s onset at which its sound ends,
/// when that happens before the next onset.
pub fn fit_envelope(
    contour: &EnvelopeContour,
    notes: &[NoteEvent],
    tails: &[Option<f64>],
    signal_len: usize,
) -> EnvelopeFit {
    assert_eq!(notes.len(), tails.len());
    let problem = Problem::new(contour, notes, tails, signal_len);
    let end_s = signal_len as f64 / contour.sample_rate as f64;
    let mut gates: Vec<f64> = notes.iter().map(|n| n.duration_s).collect();
    let mut rng = substream(FIT_SEED, "envelope-fit");
    let mut starts = vec![vec![0.5; 5]];
    while starts.len() < FIT_STARTS {
        starts.push((0..5).map(|_| rng.gen_range(0.05..0.95)).collect());
    }

    let mut envelope = to_envelope(&minimize(&problem, &gates, &starts));
    for _ in 1..ROUNDS {
        let (level, _) = problem.solve(&envelope, &gates);
        for i in 0..notes.len() {
            let next = notes.get(i + 1).map_or(end_s, |n| n.onset_s);
            problem.refine_gate(i, next - notes[i].onset_s, &envelope, level, &mut gates);
        }
        // Keep the previous optimum as a start so a round never regresses.
        let mut round_starts = vec![to_unit(&envelope)];
        round_starts.extend(starts.iter().skip(1).cloned());
        envelope = to_envelope(&minimize(&problem, &gates, &round_starts));
    }
    let (level, relative_error) = problem.solve(&envelope, &gates);
    let gates = problem.gates(&envelope, &gates);
    let notes = notes
        .iter()
        .zip(&gates)
        .map(|(n, &g)| NoteEvent::new(n.pitch_midi, n.onset_s, g))
        .collect();
    EnvelopeFit {
        envelope,
        level,
        notes,
        relative_error,
    }
}
