use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::{DspConfig, FeatureGroup, FrameSequence, LldTrack};

/// One-sided power spectra of every frame (`fft_size / 2 + 1` bins).
#[derive(Debug, Clone)]
pub struct Spectra {
    pub power: Vec<Vec<f64>>,
    pub bin_hz: f64,
}

pub fn power_spectra(frames: &FrameSequence, config: &DspConfig) -> Spectra {
    let n = config.fft_size;
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n);
    let mut buf = vec![Complex::new(0.0, 0.0); n];
    let mut scratch = vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    let power = frames
        .frames
        .iter()
        .map(|f| {
            for (i, b) in buf.iter_mut().enumerate() {
                *b = Complex::new(f.get(i).copied().unwrap_or(0.0), 0.0);
            }
            fft.process_with_scratch(&mut buf, &mut scratch);
            buf[..n / 2 + 1].iter().map(|c| c.norm_sqr()).collect()
        })
        .collect();
    Spectra {
        power,
        bin_hz: frames.sample_rate as f64 / n as f64,
    }
}

pub(crate) fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub(crate) fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular filters equally spaced on the HTK mel scale between 0 Hz and
/// Nyquist. Returns the weights (`bands x bins`) and each band's
/// `(lower, centre, upper)` edge frequencies in Hz.
pub fn mel_filterbank(
    bands: usize,
    fft_size: usize,
    sample_rate: u32,
) -> (Vec<Vec<f64>>, Vec<(f64, f64, f64)>) {
    let nyquist = sample_rate as f64 / 2.0;
    let top = hz_to_mel(nyquist);
    let edges: Vec<f64> = (0..bands + 2)
        .map(|i| mel_to_hz(top * i as f64 / (bands + 1) as f64))
        .collect();
    let bin_hz = sample_rate as f64 / fft_size as f64;
    let n_bins = fft_size / 2 + 1;
    let mut weights = vec![vec![0.0; n_bins]; bands];
    let mut bounds = Vec::with_capacity(bands);
    for b in 0..bands {
        let (lo, mid, hi) = (edges[b], edges[b + 1], edges[b + 2]);
        bounds.push((lo, mid, hi));
        for (k, w) in weights[b].iter_mut().enumerate() {
            let f = k as f64 * bin_hz;
            *w = if f > lo && f <= mid {
                (f - lo) / (mid - lo)
            } else if f > mid && f < hi {
                (hi - f) / (hi - mid)
            } else {
                0.0
            };
        }
    }
    (weights, bounds)
}

/// Natural-log mel band energies per frame, floored.
pub(crate) fn log_mel_energies(spectra: &Spectra, config: &DspConfig) -> Vec<Vec<f64>> {
    let (fb, _) = mel_filterbank(config.mel_bands, config.fft_size, config.sample_rate);
    spectra
        .power
        .iter()
        .map(|p| {
            fb.iter()
                .map(|w| floored_ln(w.iter().zip(p).map(|(a, b)| a * b).sum(), config))
                .collect()
        })
        .collect()
}

pub(crate) fn floored_ln(x: f64, config: &DspConfig) -> f64 {
    if x > 0.0 {
        x.ln().max(config.log_energy_floor)
    } else {
        config.log_energy_floor
    }
}

/// Energy/amplitude, spectral-shape and auditory-spectrum tracks.
pub fn lld_energy_spectral(frames: &FrameSequence, config: &DspConfig) -> Vec<LldTrack> {
    let spectra = power_spectra(frames, config);
    energy_spectral_from(frames, &spectra, config)
}

pub(crate) fn energy_spectral_from(
    frames: &FrameSequence,
    spectra: &Spectra,
    config: &DspConfig,
) -> Vec<LldTrack> {
    let n = frames.num_frames();
    let mut rms = Vec::with_capacity(n);
    let mut log_energy = Vec::with_capacity(n);
    let mut zcr = Vec::with_capacity(n);
    for f in &frames.frames {
        let energy: f64 = f.iter().map(|x| x * x).sum();
        rms.push((energy / f.len() as f64).sqrt());
        log_energy.push(floored_ln(energy, config));
        let crossings = f.windows(2).filter(|w| (w[0] < 0.0) != (w[1] < 0.0)).count();
        zcr.push(crossings as f64 / (f.len() - 1) as f64);
    }

    let mut centroid = Vec::with_capacity(n);
    let mut rolloff = Vec::with_capacity(n);
    let mut flux = Vec::with_capacity(n);
    let mut prev_norm: Option<Vec<f64>> = None;
    for p in &spectra.power {
        let mag: Vec<f64> = p.iter().map(|v| v.sqrt()).collect();
        let mag_sum: f64 = mag.iter().sum();
        centroid.push(if mag_sum > 0.0 {
            mag.iter()
                .enumerate()
                .map(|(k, m)| k as f64 * spectra.bin_hz * m)
                .sum::<f64>()
                / mag_sum
        } else {
            0.0
        });

        let total: f64 = p.iter().sum();
        rolloff.push(if total > 0.0 {
            let target = config.rolloff_fraction * total;
            let mut acc = 0.0;
            let k = p
                .iter()
                .position(|v| {
                    acc += v;
                    acc >= target
                })
                .unwrap_or(p.len() - 1);
            k as f64 * spectra.bin_hz
        } else {
            0.0
        });

        // Flux between L1-normalised magnitude spectra, so it ignores gain.
        let norm: Vec<f64> = if mag_sum > 0.0 {
            mag.iter().map(|m| m / mag_sum).collect()
        } else {
            vec![0.0; mag.len()]
        };
        let f = match &prev_norm {
            Some(prev) => prev
                .iter()
                .zip(&norm)
                .map(|(a, b)| (b - a) * (b - a))
                .sum::<f64>()
                .sqrt(),
            None => 0.0,
        };
        // Below this the two spectra differ only by rounding.
        flux.push(if f < 1e-12 { 0.0 } else { f });
        prev_norm = Some(norm);
    }

    let mut tracks = vec![
        LldTrack::dense("rms", FeatureGroup::EnergyAmplitude, rms),
        LldTrack::dense("log_energy", FeatureGroup::EnergyAmplitude, log_energy),
        LldTrack::dense("zcr", FeatureGroup::EnergyAmplitude, zcr),
        LldTrack::dense("spectral_centroid", FeatureGroup::Spectral, centroid),
        LldTrack::dense("spectral_rolloff", FeatureGroup::Spectral, rolloff),
        LldTrack::dense("spectral_flux", FeatureGroup::Spectral, flux),
    ];

    let mel = log_mel_energies(spectra, config);
    for b in 0..config.mel_bands {
        tracks.push(LldTrack::dense(
            format!("audspec_b{b:02}"),
            FeatureGroup::AuditorySpectrum,
            mel.iter().map(|row| row[b]).collect(),
        ));
    }
    tracks
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::{frame_signal, AudioClip};
    use std::f64::consts::PI;

    fn track<'a>(tracks: &'a [LldTrack], name: &str) -> &'a LldTrack {
        tracks.iter().find(|t| t.name == name).unwrap()
    }

    fn mean(v: &[f64]) -> f64 {
        v.iter().sum::<f64>() / v.len() as f64
    }

    #[test]
    fn silence_hits_floor_and_has_no_crossings() {
        let cfg = DspConfig::default();
        let clip = AudioClip::new(vec![0.0; 16000], 16000).unwrap();
        let tracks = lld_energy_spectral(&frame_signal(&clip, &cfg).unwrap(), &cfg);
        assert!(track(&tracks, "log_energy").values.iter().all(|&v| v == -50.0));
        assert!(track(&tracks, "zcr").values.iter().all(|&v| v == 0.0));
        assert!(track(&tracks, "audspec_b00").values.iter().all(|&v| v == -50.0));
        assert!(tracks.iter().all(|t| t.values.iter().all(|v| v.is_finite())));
    }

    #[test]
    fn tone_centroid_and_peak_band() {
        let cfg = DspConfig::default();
        let samples = (0..16000)
            .map(|i| (2.0 * PI * 1000.0 * i as f64 / 16000.0).sin())
            .collect();
        let clip = AudioClip::new(samples, 16000).unwrap();
        let tracks = lld_energy_spectral(&frame_signal(&clip, &cfg).unwrap(), &cfg);
        let c = mean(&track(&tracks, "spectral_centroid").values);
        assert!((c - 1000.0).abs() < 40.0, "centroid {c}");

        let (_, bounds) = mel_filterbank(cfg.mel_bands, cfg.fft_size, cfg.sample_rate);
        let band_means: Vec<f64> = (0..cfg.mel_bands)
            .map(|b| mean(&track(&tracks, &format!("audspec_b{b:02}")).values))
            .collect();
        let best = (0..cfg.mel_bands)
            .max_by(|&a, &b| band_means[a].total_cmp(&band_means[b]))
            .unwrap();
        let (lo, _, hi) = bounds[best];
        assert!(lo < 1000.0 && 1000.0 < hi, "band {best} spans {lo}..{hi}");
    }

    #[test]
    fn filterbank_covers_band_edges() {
        let (fb, bounds) = mel_filterbank(26, 512, 16000);
        assert_eq!(fb.len(), 26);
        assert!((bounds[25].2 - 8000.0).abs() < 1e-9);
        assert_eq!(bounds[0].0, 0.0);
        assert!(fb.iter().all(|w| w.iter().any(|&x| x > 0.0)), "empty filter");
        assert!((mel_to_hz(hz_to_mel(1234.5)) - 1234.5).abs() < 1e-9);
    }
}
