use std::f64::consts::PI;
use std::path::Path;

use crate::error::{Error, Result};

pub const TARGET_SAMPLE_RATE: u32 = 16_000;

/// Mono waveform with samples in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Data("zero-length audio".into()));
        }
        if sample_rate == 0 {
            return Err(Error::Data("sample rate must be positive".into()));
        }
        Ok(AudioClip {
            samples,
            sample_rate,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// Reads a RIFF/WAV file (8/16/24/32-bit PCM or 32-bit float, any channel
/// count), averages channels, and resamples to 16 kHz.
pub fn load_audio(path: &Path) -> Result<AudioClip> {
    let audio_err = |reason: String| Error::Audio {
        path: path.to_path_buf(),
        reason,
    };
    let mut reader = hound::WavReader::open(path).map_err(|e| audio_err(e.to_string()))?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    if channels == 0 {
        return Err(audio_err("no channels".into()));
    }

    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(|v| v as f64))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| audio_err(e.to_string()))?,
        (hound::SampleFormat::Int, bits @ (8 | 16 | 24 | 32)) => {
            let scale = 1.0 / (1u64 << (bits - 1)) as f64;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| v as f64 * scale))
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| audio_err(e.to_string()))?
        }
        (fmt, bits) => return Err(audio_err(format!("unsupported codec {fmt:?} {bits}-bit"))),
    };

    if interleaved.len() < channels {
        return Err(Error::EmptyAudio(path.to_path_buf()));
    }
    let mono: Vec<f64> = interleaved
        .chunks_exact(channels)
        .map(|c| c.iter().sum::<f64>() / channels as f64)
        .collect();

    let mut samples = resample(&mono, spec.sample_rate, TARGET_SAMPLE_RATE);
    for s in &mut samples {
        *s = s.clamp(-1.0, 1.0);
    }
    if samples.is_empty() {
        return Err(Error::EmptyAudio(path.to_path_buf()));
    }
    AudioClip::new(samples, TARGET_SAMPLE_RATE)
}

const SINC_ZERO_CROSSINGS: f64 = 16.0;

/// Band-limited resampling with a Blackman-windowed sinc kernel.
/// Output length is `round(len * to / from)`.
pub fn resample(input: &[f64], from: u32, to: u32) -> Vec<f64> {
    if from == to || input.is_empty() {
        return input.to_vec();
    }
    let ratio = to as f64 / from as f64;
    let n_out = (input.len() as f64 * ratio).round() as usize;
    // Cutoff relative to the input Nyquist; below 1 when downsampling.
    let fc = ratio.min(1.0);
    let half = SINC_ZERO_CROSSINGS / fc;
    let step = from as f64 / to as f64;

    (0..n_out)
        .map(|m| {
            let t = m as f64 * step;
            let lo = (t - half).ceil().max(0.0) as usize;
            let hi = ((t + half).floor() as usize).min(input.len() - 1);
            let mut acc = 0.0;
            let mut norm = 0.0;
            for (n, &x) in input.iter().enumerate().take(hi + 1).skip(lo) {
                let d = n as f64 - t;
                let h = fc * sinc(fc * d) * blackman(d / half);
                acc += h * x;
                norm += h;
            }
            if norm.abs() > 1e-12 {
                acc / norm
            } else {
                0.0
            }
        })
        .collect()
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

fn blackman(u: f64) -> f64 {
    if u.abs() >= 1.0 {
        0.0
    } else {
        0.42 + 0.5 * (PI * u).cos() + 0.08 * (2.0 * PI * u).cos()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resample_length_and_identity() {
        let x: Vec<f64> = (0..4800).map(|i| (i as f64 * 0.01).sin()).collect();
        assert_eq!(resample(&x, 16000, 16000), x);
        assert_eq!(resample(&x, 48000, 16000).len(), 1600);
        assert_eq!(resample(&x, 44100, 16000).len(), (4800.0f64 * 16000.0 / 44100.0).round() as usize);
        assert_eq!(resample(&x, 8000, 16000).len(), 9600);
    }

    #[test]
    fn resample_preserves_in_band_tone() {
        let f = 440.0;
        let x: Vec<f64> = (0..48000)
            .map(|i| (2.0 * PI * f * i as f64 / 48000.0).sin())
            .collect();
        let y = resample(&x, 48000, 16000);
        // Interior samples match the analytic tone at the new rate.
        for (m, &v) in y.iter().enumerate().skip(200).take(15000) {
            let expect = (2.0 * PI * f * m as f64 / 16000.0).sin();
            assert!((v - expect).abs() < 1e-3, "sample {m}: {v} vs {expect}");
        }
    }

    #[test]
    fn resample_rejects_above_nyquist() {
        // 12 kHz tone at 48 kHz is above the 8 kHz output Nyquist.
        let x: Vec<f64> = (0..48000)
            .map(|i| (2.0 * PI * 12000.0 * i as f64 / 48000.0).sin())
            .collect();
        let y = resample(&x, 48000, 16000);
        let rms = (y[200..15800].iter().map(|v| v * v).sum::<f64>() / 15600.0).sqrt();
        assert!(rms < 1e-2, "alias rms {rms}");
    }
}
