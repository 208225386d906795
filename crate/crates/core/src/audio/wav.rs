//! PCM WAV loading with mono downmix.

use std::io;
use std::path::Path;

use hound::{SampleFormat, WavReader};

use super::{AudioClip, AudioError};

/// Load a PCM WAV file (8/16/24/32-bit integer or 32-bit float).
///
/// Multi-channel audio is averaged down to mono. Integer samples are scaled
/// by `2^(bits-1)`, so the most negative code maps to exactly `-1.0`.
pub fn load_audio(path: &Path) -> Result<AudioClip, AudioError> {
    let display = path.display().to_string();
    let reader = WavReader::open(path).map_err(|e| classify(&display, e))?;
    let spec = reader.spec();
    let declared = reader.len() as usize;
    let channels = usize::from(spec.channels);
    if channels == 0 {
        return Err(AudioError::Unsupported {
            path: display,
            reason: "zero channels".into(),
        });
    }

    let interleaved: Vec<f32> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .collect::<Result<_, _>>()
            .map_err(|e| classify(&display, e))?,
        (SampleFormat::Int, bits @ (8 | 16 | 24 | 32)) => {
            let scale = 1.0 / f64::from(1u32 << (bits - 1));
            reader
                .into_samples::<i32>()
                .map(|s| s.map(|v| (f64::from(v) * scale) as f32))
                .collect::<Result<_, _>>()
                .map_err(|e| classify(&display, e))?
        }
        (format, bits) => {
            return Err(AudioError::Unsupported {
                path: display,
                reason: format!("{format:?} samples with {bits} bits"),
            })
        }
    };

    if interleaved.len() != declared || !interleaved.len().is_multiple_of(channels) {
        return Err(AudioError::Truncated { path: display });
    }
    if interleaved.is_empty() {
        return Err(AudioError::Empty { path: display });
    }

    let samples = interleaved
        .chunks_exact(channels)
        .map(|frame| frame.iter().map(|&s| f64::from(s)).sum::<f64>() / channels as f64)
        .collect();
    AudioClip::new(samples, spec.sample_rate)
}

/// Write mono 16-bit PCM. Samples are clamped to `[-1, 1]`.
pub fn write_wav_i16(path: &Path, samples: &[f64], sample_rate: u32) -> Result<(), AudioError> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate,
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let display = path.display().to_string();
    let mut writer = hound::WavWriter::create(path, spec).map_err(|e| classify(&display, e))?;
    for &s in samples {
        let v = (s.clamp(-1.0, 1.0) * 32767.0).round() as i16;
        writer.write_sample(v).map_err(|e| classify(&display, e))?;
    }
    writer.finalize().map_err(|e| classify(&display, e))
}

fn classify(path: &str, err: hound::Error) -> AudioError {
    let path = path.to_string();
    match err {
        // hound reports short reads as a custom `Other` error.
        hound::Error::IoError(e)
            if e.kind() == io::ErrorKind::UnexpectedEof
                || e.to_string().contains("Failed to read enough bytes") =>
        {
            AudioError::Truncated { path }
        }
        hound::Error::IoError(source) => AudioError::Io { path, source },
        hound::Error::Unsupported => AudioError::Unsupported {
            path,
            reason: "codec is not PCM or IEEE float".into(),
        },
        hound::Error::FormatError(reason) => AudioError::Malformed {
            path,
            reason: reason.to_string(),
        },
        other => AudioError::Malformed {
            path,
            reason: other.to_string(),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use hound::{WavSpec, WavWriter};
    use std::io::Write;

    fn write<T: hound::Sample + Copy>(path: &Path, spec: WavSpec, samples: &[T]) {
        let mut w = WavWriter::create(path, spec).unwrap();
        for &s in samples {
            w.write_sample(s).unwrap();
        }
        w.finalize().unwrap();
    }

    fn spec(channels: u16, bits: u16, format: SampleFormat) -> WavSpec {
        WavSpec {
            channels,
            sample_rate: 44100,
            bits_per_sample: bits,
            sample_format: format,
        }
    }

    #[test]
    fn mono_16_bit_identity_read() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.wav");
        let samples: Vec<i16> = (0..44100).map(|i| (i % 200) as i16 - 100).collect();
        write(&p, spec(1, 16, SampleFormat::Int), &samples);
        let clip = load_audio(&p).unwrap();
        assert_eq!(clip.len(), 44100);
        assert_eq!(clip.sample_rate(), 44100);
        assert_eq!(clip.samples()[0], -100.0 / 32768.0);
    }

    #[test]
    fn most_negative_code_is_minus_one() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.wav");
        write(&p, spec(1, 16, SampleFormat::Int), &[i16::MIN, 0, i16::MAX]);
        let clip = load_audio(&p).unwrap();
        assert_eq!(clip.samples()[0], -32768.0 / 32768.0);
        assert_eq!(clip.samples()[0], -1.0);
        assert_eq!(clip.samples()[2], 32767.0 / 32768.0);
    }

    #[test]
    fn stereo_downmix_averages() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.wav");
        let samples: Vec<f32> = (0..200).map(|i| if i % 2 == 0 { 0.5 } else { -0.5 }).collect();
        write(&p, spec(2, 32, SampleFormat::Float), &samples);
        let clip = load_audio(&p).unwrap();
        assert_eq!(clip.len(), 100);
        assert!(clip.samples().iter().all(|&s| s == 0.0));
    }

    #[test]
    fn other_bit_depths() {
        let dir = tempfile::tempdir().unwrap();
        let p8 = dir.path().join("8.wav");
        write(&p8, spec(1, 8, SampleFormat::Int), &[-128i8, 64]);
        assert_eq!(load_audio(&p8).unwrap().samples(), &[-1.0, 0.5]);
        let p24 = dir.path().join("24.wav");
        write(&p24, spec(1, 24, SampleFormat::Int), &[-(1i32 << 23), 1 << 22]);
        assert_eq!(load_audio(&p24).unwrap().samples(), &[-1.0, 0.5]);
    }

    #[test]
    fn errors_are_distinct() {
        let dir = tempfile::tempdir().unwrap();

        let empty = dir.path().join("empty.wav");
        write::<i16>(&empty, spec(1, 16, SampleFormat::Int), &[]);
        assert!(matches!(load_audio(&empty), Err(AudioError::Empty { .. })));

        let full = dir.path().join("full.wav");
        write(&full, spec(1, 16, SampleFormat::Int), &vec![7i16; 1000]);
        let bytes = std::fs::read(&full).unwrap();
        let cut = dir.path().join("cut.wav");
        std::fs::File::create(&cut).unwrap().write_all(&bytes[..bytes.len() - 501]).unwrap();
        let r = load_audio(&cut);
        assert!(matches!(r, Err(AudioError::Truncated { .. })), "{r:?}");

        // Patch the format tag to 0x0055 (MPEG layer 3).
        let mut mp3 = bytes.clone();
        mp3[20] = 0x55;
        mp3[21] = 0x00;
        let odd = dir.path().join("mp3.wav");
        std::fs::write(&odd, &mp3).unwrap();
        assert!(matches!(load_audio(&odd), Err(AudioError::Unsupported { .. })));

        let junk = dir.path().join("junk.wav");
        std::fs::write(&junk, b"definitely not a wav file").unwrap();
        assert!(matches!(load_audio(&junk), Err(AudioError::Malformed { .. } | AudioError::Truncated { .. })));
    }
}
