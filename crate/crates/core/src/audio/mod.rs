//! Acoustic low-level descriptors and their static functionals.
//!
//! A clip is cut into Hamming-windowed frames, each frame yields a set of
//! low-level descriptors (LLDs), and every LLD track is summarised by a fixed
//! set of statistics. The result is a named vector whose schema depends only
//! on [`DspConfig`].
//!
//! | group               | tracks                                                 |
//! |---------------------|--------------------------------------------------------|
//! | `energy_amplitude`  | RMS, log energy, zero-crossing rate                    |
//! | `spectral`          | centroid, 85% roll-off, flux                           |
//! | `auditory_spectrum` | log mel-band energies (`mel_bands` tracks)             |
//! | `mfcc`              | c0..c(n-1) plus delta and delta-delta                  |
//! | `voicing`           | F0, voicing probability, jitter, shimmer, HNR          |
//! | `formant`           | F1..Fk frequency and bandwidth from LPC roots          |

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::CorpusManifest;
use crate::error::{Error, Result};
use crate::matrix::FeatureMatrix;

mod clip;
mod formant;
mod frame;
mod functionals;
mod mfcc;
mod spectral;
mod voicing;

pub use clip::{load_audio, resample, AudioClip, TARGET_SAMPLE_RATE};
pub use formant::{levinson_durbin, lld_formants, lpc_coefficients, polynomial_roots};
pub use frame::{frame_pitch, frame_signal, hamming, FrameSequence};
pub use functionals::{apply_functionals, Functional};
pub use mfcc::{deltas, lld_mfcc};
pub use spectral::{lld_energy_spectral, mel_filterbank, power_spectra, Spectra};
pub use voicing::lld_voicing;

/// Descriptor family; used to pick the named feature subsets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureGroup {
    EnergyAmplitude,
    Spectral,
    Mfcc,
    AuditorySpectrum,
    Voicing,
    Formant,
}

impl FeatureGroup {
    pub const ALL: [FeatureGroup; 6] = [
        FeatureGroup::EnergyAmplitude,
        FeatureGroup::Spectral,
        FeatureGroup::Mfcc,
        FeatureGroup::AuditorySpectrum,
        FeatureGroup::Voicing,
        FeatureGroup::Formant,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureGroup::EnergyAmplitude => "energy_amplitude",
            FeatureGroup::Spectral => "spectral",
            FeatureGroup::Mfcc => "mfcc",
            FeatureGroup::AuditorySpectrum => "auditory_spectrum",
            FeatureGroup::Voicing => "voicing",
            FeatureGroup::Formant => "formant",
        }
    }
}

impl fmt::Display for FeatureGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FeatureGroup {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Self::ALL
            .iter()
            .copied()
            .find(|g| g.as_str() == s)
            .ok_or_else(|| format!("unknown feature group `{s}`"))
    }
}

/// Per-frame values of one descriptor.
#[derive(Debug, Clone, PartialEq)]
pub struct LldTrack {
    pub name: String,
    pub group: FeatureGroup,
    pub values: Vec<f64>,
    /// Frames that carry a measurement. `None` means every frame does.
    /// Unvoiced frames (voicing) and missing formants are marked invalid.
    pub valid: Option<Vec<bool>>,
}

impl LldTrack {
    pub fn dense(name: impl Into<String>, group: FeatureGroup, values: Vec<f64>) -> Self {
        LldTrack {
            name: name.into(),
            group,
            values,
            valid: None,
        }
    }

    pub fn gapped(
        name: impl Into<String>,
        group: FeatureGroup,
        values: Vec<f64>,
        valid: Vec<bool>,
    ) -> Self {
        debug_assert_eq!(values.len(), valid.len());
        LldTrack {
            name: name.into(),
            group,
            values,
            valid: Some(valid),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_valid(&self, i: usize) -> bool {
        self.valid.as_ref().is_none_or(|v| v[i])
    }
}

/// Static feature vector for one clip.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub names: Vec<String>,
    pub values: Vec<f64>,
    pub groups: Vec<FeatureGroup>,
}

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|i| self.values[i])
    }

    /// Entries belonging to `group`, in schema order.
    pub fn subset(&self, group: FeatureGroup) -> FeatureVector {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| self.groups[i] == group).collect();
        FeatureVector {
            names: idx.iter().map(|&i| self.names[i].clone()).collect(),
            values: idx.iter().map(|&i| self.values[i]).collect(),
            groups: vec![group; idx.len()],
        }
    }
}

/// Analysis parameters. Defaults target 16 kHz speech.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DspConfig {
    pub sample_rate: u32,
    pub frame_ms: f64,
    pub hop_ms: f64,
    /// Longer window for the autocorrelation pitch tracker; frames are
    /// centred on the same instants as the main frames.
    pub pitch_frame_ms: f64,
    pub fft_size: usize,
    pub mel_bands: usize,
    pub mfcc_count: usize,
    pub delta_window: usize,
    pub lpc_order: usize,
    pub formant_count: usize,
    pub pre_emphasis: f64,
    pub formant_max_bandwidth_hz: f64,
    pub formant_min_hz: f64,
    pub formant_max_hz: f64,
    pub f0_min_hz: f64,
    pub f0_max_hz: f64,
    pub voicing_threshold: f64,
    /// Floor for every natural-log energy, in nats.
    pub log_energy_floor: f64,
    pub rolloff_fraction: f64,
    pub functionals: Vec<Functional>,
}

impl Default for DspConfig {
    fn default() -> Self {
        DspConfig {
            sample_rate: TARGET_SAMPLE_RATE,
            frame_ms: 25.0,
            hop_ms: 10.0,
            pitch_frame_ms: 60.0,
            fft_size: 512,
            mel_bands: 26,
            mfcc_count: 13,
            delta_window: 2,
            lpc_order: 16,
            formant_count: 4,
            pre_emphasis: 0.97,
            formant_max_bandwidth_hz: 400.0,
            formant_min_hz: 90.0,
            formant_max_hz: 5500.0,
            f0_min_hz: 60.0,
            f0_max_hz: 400.0,
            voicing_threshold: 0.45,
            log_energy_floor: -50.0,
            rolloff_fraction: 0.85,
            functionals: Functional::ALL.to_vec(),
        }
    }
}

impl DspConfig {
    pub fn frame_len(&self) -> usize {
        ms_to_samples(self.frame_ms, self.sample_rate)
    }

    pub fn hop_len(&self) -> usize {
        ms_to_samples(self.hop_ms, self.sample_rate)
    }

    pub fn pitch_frame_len(&self) -> usize {
        ms_to_samples(self.pitch_frame_ms, self.sample_rate)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.sample_rate == 0 {
            return bad("sample_rate must be positive".into());
        }
        if self.frame_len() < 2 || self.hop_len() == 0 {
            return bad("frame and hop must span at least 2 and 1 samples".into());
        }
        if self.fft_size < self.frame_len() {
            return bad(format!(
                "fft_size {} is smaller than the frame ({} samples)",
                self.fft_size,
                self.frame_len()
            ));
        }
        if self.mel_bands == 0 || self.mfcc_count == 0 || self.mfcc_count > self.mel_bands {
            return bad(format!(
                "need 1 <= mfcc_count ({}) <= mel_bands ({})",
                self.mfcc_count, self.mel_bands
            ));
        }
        if self.lpc_order < 2 * self.formant_count + 2 {
            return bad(format!(
                "lpc_order {} must be at least 2*formant_count+2 = {}",
                self.lpc_order,
                2 * self.formant_count + 2
            ));
        }
        let nyquist = self.sample_rate as f64 / 2.0;
        if !(self.f0_min_hz > 0.0 && self.f0_min_hz < self.f0_max_hz && self.f0_max_hz < nyquist) {
            return bad("f0 range must satisfy 0 < min < max < nyquist".into());
        }
        let min_lag = (self.sample_rate as f64 / self.f0_max_hz).floor() as usize;
        let max_lag = (self.sample_rate as f64 / self.f0_min_hz).ceil() as usize;
        if min_lag < 2 || max_lag + 1 > self.pitch_frame_len() / 2 {
            return bad(format!(
                "pitch frame of {} samples cannot resolve lags {min_lag}..{max_lag}",
                self.pitch_frame_len()
            ));
        }
        if !(0.0..1.0).contains(&self.pre_emphasis) {
            return bad("pre_emphasis must be in [0, 1)".into());
        }
        if !(self.rolloff_fraction > 0.0 && self.rolloff_fraction < 1.0) {
            return bad("rolloff_fraction must be in (0, 1)".into());
        }
        if self.functionals.is_empty() {
            return bad("functional set is empty".into());
        }
        Ok(())
    }
}

fn ms_to_samples(ms: f64, sr: u32) -> usize {
    (ms * sr as f64 / 1000.0).round() as usize
}

/// Full extraction: frame, compute every descriptor group, apply functionals.
/// Identical clip and config give a bit-identical vector.
pub fn extract_audio_features(clip: &AudioClip, config: &DspConfig) -> Result<FeatureVector> {
    config.validate()?;
    if clip.sample_rate != config.sample_rate {
        return Err(Error::Config(format!(
            "clip sample rate {} differs from configured {}",
            clip.sample_rate, config.sample_rate
        )));
    }
    let frames = frame_signal(clip, config)?;
    let spectra = power_spectra(&frames, config);

    let mut tracks = spectral::energy_spectral_from(&frames, &spectra, config);
    tracks.extend(mfcc::mfcc_from(&spectra, config));
    let pitch_frames = frame_pitch(clip, config, frames.num_frames());
    tracks.extend(lld_voicing(&pitch_frames, config));
    tracks.extend(lld_formants(&frames, config));
    apply_functionals(&tracks, config)
}

/// Feature names and groups produced under `config`, without audio.
pub fn feature_schema(config: &DspConfig) -> Result<(Vec<String>, Vec<FeatureGroup>)> {
    config.validate()?;
    let n = config.frame_len() + 2 * config.hop_len();
    let clip = AudioClip::new(vec![0.0; n.max(config.pitch_frame_len())], config.sample_rate)?;
    let fv = extract_audio_features(&clip, config)?;
    Ok((fv.names, fv.groups))
}

/// Extracts every clip of `manifest` in parallel. Rows follow manifest order.
pub fn extract_manifest(manifest: &CorpusManifest, config: &DspConfig) -> Result<FeatureMatrix> {
    use rayon::prelude::*;
    let (names, groups) = feature_schema(config)?;
    let rows = manifest
        .instances
        .par_iter()
        .map(|inst| {
            let clip = load_audio(&manifest.audio_path(inst))?;
            let fv = extract_audio_features(&clip, config)?;
            debug_assert_eq!(fv.names, names);
            Ok(fv.values)
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    let data = ndarray::Array2::from_shape_vec((rows.len(), names.len()), rows.concat())
        .map_err(|e| Error::Numerical(e.to_string()))?;
    Ok(FeatureMatrix {
        ids: manifest.instances.iter().map(|i| i.id.clone()).collect(),
        names,
        groups,
        data,
    })
}
