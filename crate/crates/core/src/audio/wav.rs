use std::fs;
use std::io::{Seek, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AudioBuffer, AudioError};

/// On-disk sample encoding for written WAV files.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Encoding {
    #[default]
    Pcm16,
    Float32,
}

impl Encoding {
    /// The buffer exactly as `read_wav` would return it after a `write_wav`
    /// round trip with this encoding (clipping included).
    pub fn quantize(self, buffer: &AudioBuffer) -> AudioBuffer {
        let samples = buffer
            .samples()
            .iter()
            .map(|&s| match self {
                Encoding::Pcm16 => pcm16_code(s.clamp(-1.0, 1.0)) as f32 / 32768.0,
                Encoding::Float32 => s.clamp(-1.0, 1.0),
            })
            .collect();
        AudioBuffer::new(samples, buffer.sample_rate())
    }
}

impl std::str::FromStr for Encoding {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pcm16" => Ok(Encoding::Pcm16),
            "float32" => Ok(Encoding::Float32),
            other => Err(format!("unknown encoding `{other}` (expected pcm16 or float32)")),
        }
    }
}

impl std::fmt::Display for Encoding {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Encoding::Pcm16 => "pcm16",
            Encoding::Float32 => "float32",
        })
    }
}

/// Metadata returned by a write.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct WriteReport {
    /// Samples outside [-1, 1] that were clamped.
    pub clipped: usize,
}

fn pcm16_code(s: f32) -> i16 {
    (s as f64 * 32768.0).round().clamp(-32768.0, 32767.0) as i16
}

fn map_hound(path: &Path, err: hound::Error) -> AudioError {
    match err {
        hound::Error::IoError(source) => AudioError::Io {
            path: path.display().to_string(),
            source,
        },
        hound::Error::Unsupported => {
            AudioError::UnsupportedFormat("compressed or unknown WAV format".into())
        }
        hound::Error::FormatError(msg) => AudioError::CorruptHeader(msg.to_string()),
        other => AudioError::CorruptHeader(other.to_string()),
    }
}

/// Reads a PCM16 or IEEE float32 WAV file, downmixing multichannel input by
/// channel mean.
pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioBuffer, AudioError> {
    let path = path.as_ref();
    let mut reader = hound::WavReader::open(path).map_err(|e| map_hound(path, e))?;
    let spec = reader.spec();
    if spec.channels == 0 || spec.sample_rate == 0 {
        return Err(AudioError::CorruptHeader(format!(
            "{} channels at {} Hz",
            spec.channels, spec.sample_rate
        )));
    }
    let interleaved: Vec<f32> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => reader
            .samples::<i16>()
            .map(|s| s.map(|v| v as f32 / 32768.0))
            .collect::<Result<_, _>>()
            .map_err(|e| map_hound(path, e))?,
        (hound::SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .collect::<Result<_, _>>()
            .map_err(|e| map_hound(path, e))?,
        (fmt, bits) => {
            return Err(AudioError::UnsupportedFormat(format!(
                "{bits}-bit {fmt:?} samples"
            )))
        }
    };
    let channels = spec.channels as usize;
    let samples = if channels == 1 {
        interleaved
    } else {
        interleaved
            .chunks_exact(channels)
            .map(|frame| frame.iter().sum::<f32>() / channels as f32)
            .collect()
    };
    Ok(AudioBuffer::new(samples, spec.sample_rate))
}

/// Writes a mono WAV to any seekable sink.
pub fn write_wav_to<W: Write + Seek>(
    buffer: &AudioBuffer,
    sink: W,
    encoding: Encoding,
) -> Result<WriteReport, hound::Error> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: buffer.sample_rate(),
        bits_per_sample: match encoding {
            Encoding::Pcm16 => 16,
            Encoding::Float32 => 32,
        },
        sample_format: match encoding {
            Encoding::Pcm16 => hound::SampleFormat::Int,
            Encoding::Float32 => hound::SampleFormat::Float,
        },
    };
    let mut writer = hound::WavWriter::new(sink, spec)?;
    let mut report = WriteReport::default();
    for &s in buffer.samples() {
        // NaN is treated as out of range and written as silence.
        let clamped = if s.is_nan() { 0.0 } else { s.clamp(-1.0, 1.0) };
        if clamped != s {
            report.clipped += 1;
        }
        match encoding {
            Encoding::Pcm16 => writer.write_sample(pcm16_code(clamped))?,
            Encoding::Float32 => writer.write_sample(clamped)?,
        }
    }
    writer.finalize()?;
    Ok(report)
}

pub fn write_wav(
    buffer: &AudioBuffer,
    path: impl AsRef<Path>,
    encoding: Encoding,
) -> Result<WriteReport, AudioError> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|source| AudioError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let report = write_wav_to(buffer, std::io::BufWriter::new(file), encoding)
        .map_err(|e| map_hound(path, e))?;
    if report.clipped > 0 {
        log::warn!("{}: clipped {} samples", path.display(), report.clipped);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn silence_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.wav");
        let b = AudioBuffer::silence(44_100, 44_100);
        write_wav(&b, &path, Encoding::Pcm16).unwrap();
        let r = read_wav(&path).unwrap();
        assert_eq!(r.len(), 44_100);
        assert_eq!(r.sample_rate(), 44_100);
        assert!(r.samples().iter().all(|&s| s == 0.0));
    }

    #[test]
    fn full_scale_pcm16_reads_below_one() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("fs.wav");
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: 44_100,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut w = hound::WavWriter::create(&path, spec).unwrap();
        for _ in 0..100 {
            w.write_sample(32767i16).unwrap();
        }
        w.finalize().unwrap();
        let r = read_wav(&path).unwrap();
        for &s in r.samples() {
            assert_eq!(s, 32767.0 / 32768.0);
            assert!((s - 0.99997).abs() < 1e-5);
        }
    }

    #[test]
    fn stereo_is_downmixed_by_mean() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("st.wav");
        let spec = hound::WavSpec {
            channels: 2,
            sample_rate: 22_050,
            bits_per_sample: 32,
            sample_format: hound::SampleFormat::Float,
        };
        let mut w = hound::WavWriter::create(&path, spec).unwrap();
        for _ in 0..10 {
            w.write_sample(0.5f32).unwrap();
            w.write_sample(-0.25f32).unwrap();
        }
        w.finalize().unwrap();
        let r = read_wav(&path).unwrap();
        assert_eq!(r.len(), 10);
        assert_eq!(r.sample_rate(), 22_050);
        assert!(r.samples().iter().all(|&s| s == 0.125));
    }

    #[test]
    fn unsupported_bit_depth_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("24.wav");
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: 44_100,
            bits_per_sample: 24,
            sample_format: hound::SampleFormat::Int,
        };
        let mut w = hound::WavWriter::create(&path, spec).unwrap();
        w.write_sample(1000i32).unwrap();
        w.finalize().unwrap();
        assert!(matches!(
            read_wav(&path),
            Err(AudioError::UnsupportedFormat(_))
        ));
    }

    #[test]
    fn garbage_is_corrupt_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.wav");
        std::fs::write(&path, b"RIFX this is not a wave file at all").unwrap();
        assert!(matches!(read_wav(&path), Err(AudioError::CorruptHeader(_))));
    }

    #[test]
    fn out_of_range_samples_are_clipped_and_counted() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("clip.wav");
        let b = AudioBuffer::new(vec![1.5, -2.0, 0.25], 44_100);
        let report = write_wav(&b, &path, Encoding::Float32).unwrap();
        assert_eq!(report.clipped, 2);
        let r = read_wav(&path).unwrap();
        assert_eq!(r.samples(), &[1.0, -1.0, 0.25]);
    }

    #[test]
    fn quantize_matches_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("q.wav");
        let b = AudioBuffer::from_fn(1000, 44_100, |t| 1.2 * (t * 2000.0).sin());
        write_wav(&b, &path, Encoding::Pcm16).unwrap();
        assert_eq!(read_wav(&path).unwrap(), Encoding::Pcm16.quantize(&b));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn float32_round_trip_is_exact(samples in prop::collection::vec(-1.0f32..=1.0, 1..2000)) {
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("f.wav");
            let b = AudioBuffer::new(samples, 44_100);
            write_wav(&b, &path, Encoding::Float32).unwrap();
            prop_assert_eq!(read_wav(&path).unwrap(), b);
        }

        #[test]
        fn pcm16_round_trip_within_one_lsb(samples in prop::collection::vec(-1.0f32..=1.0, 1..2000)) {
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("p.wav");
            let b = AudioBuffer::new(samples, 44_100);
            write_wav(&b, &path, Encoding::Pcm16).unwrap();
            let r = read_wav(&path).unwrap();
            let max = b.samples().iter().zip(r.samples()).map(|(a, b)| (a - b).abs()).fold(0.0f32, f32::max);
            prop_assert!(max <= 2f32.powi(-15));
        }
    }
}
