use std::path::Path;

use hound::{SampleFormat, WavSpec, WavWriter};

use crate::error::{Error, Result};
use crate::spectral::{Waveform, SAMPLE_RATE};

/// Reads 16 kHz mono PCM16 or float32 audio. PCM16 is scaled by `1 / 32768`.
pub fn read_wav(path: impl AsRef<Path>) -> Result<Waveform> {
    let mut reader = hound::WavReader::open(path.as_ref())?;
    let spec = reader.spec();
    if spec.sample_rate != SAMPLE_RATE {
        return Err(Error::SampleRate {
            expected: SAMPLE_RATE,
            found: spec.sample_rate,
        });
    }
    if spec.channels != 1 {
        return Err(Error::ChannelCount(spec.channels));
    }
    let samples = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => reader
            .samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<Result<Vec<_>, _>>()?,
        (SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(|v| v as f64))
            .collect::<Result<Vec<_>, _>>()?,
        (fmt, bits) => {
            return Err(Error::Encoding(format!(
                "{bits}-bit {} (expected 16-bit PCM or 32-bit float)",
                match fmt {
                    SampleFormat::Int => "integer",
                    SampleFormat::Float => "float",
                }
            )))
        }
    };
    Waveform::new(samples, spec.sample_rate)
}

/// Writes mono float32. Samples are stored as-is, without clipping.
pub fn write_wav(path: impl AsRef<Path>, w: &Waveform) -> Result<()> {
    let spec = WavSpec {
        channels: 1,
        sample_rate: w.sample_rate,
        bits_per_sample: 32,
        sample_format: SampleFormat::Float,
    };
    let mut writer = WavWriter::create(path.as_ref(), spec)?;
    for s in &w.samples {
        writer.write_sample(*s as f32)?;
    }
    writer.finalize()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_pcm(path: &Path, rate: u32, channels: u16, bits: u16, samples: &[i32]) {
        let spec = WavSpec {
            channels,
            sample_rate: rate,
            bits_per_sample: bits,
            sample_format: SampleFormat::Int,
        };
        let mut w = WavWriter::create(path, spec).unwrap();
        for s in samples {
            match bits {
                16 => w.write_sample(*s as i16).unwrap(),
                _ => w.write_sample(*s).unwrap(),
            }
        }
        w.finalize().unwrap();
    }

    #[test]
    fn float_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.wav");
        let samples: Vec<f64> = (0..1000).map(|i| ((i as f32 * 0.37).sin() * 0.8) as f64).collect();
        let w = Waveform::new(samples, SAMPLE_RATE).unwrap();
        write_wav(&p, &w).unwrap();
        assert_eq!(read_wav(&p).unwrap(), w);
    }

    #[test]
    fn pcm16_scaling() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.wav");
        write_pcm(&p, SAMPLE_RATE, 1, 16, &[32767, -32768, 0]);
        let w = read_wav(&p).unwrap();
        assert_eq!(w.samples, vec![32767.0 / 32768.0, -1.0, 0.0]);
    }

    #[test]
    fn rejects_unsupported_formats() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("stereo.wav");
        write_pcm(&p, SAMPLE_RATE, 2, 16, &[1, 2, 3, 4]);
        assert!(matches!(read_wav(&p), Err(Error::ChannelCount(2))));

        let p = dir.path().join("rate.wav");
        write_pcm(&p, 44_100, 1, 16, &[1, 2]);
        assert!(matches!(read_wav(&p), Err(Error::SampleRate { found: 44_100, .. })));

        let p = dir.path().join("pcm24.wav");
        write_pcm(&p, SAMPLE_RATE, 1, 24, &[1, 2]);
        let err = read_wav(&p).unwrap_err();
        assert!(matches!(err, Error::Encoding(_)));
        assert!(err.to_string().contains("24-bit"));
    }
}
