use std::f64::consts::PI;

use super::spectral::{log_mel_energies, power_spectra, Spectra};
use super::{DspConfig, FeatureGroup, FrameSequence, LldTrack};

/// MFCC tracks `mfcc0..`, then their deltas `mfcc0_d..` and delta-deltas
/// `mfcc0_dd..`.
pub fn lld_mfcc(frames: &FrameSequence, config: &DspConfig) -> Vec<LldTrack> {
    mfcc_from(&power_spectra(frames, config), config)
}

pub(crate) fn mfcc_from(spectra: &Spectra, config: &DspConfig) -> Vec<LldTrack> {
    let mel = log_mel_energies(spectra, config);
    let ceps: Vec<Vec<f64>> = mel
        .iter()
        .map(|row| dct_orthonormal(row, config.mfcc_count))
        .collect();

    let statics: Vec<Vec<f64>> = (0..config.mfcc_count)
        .map(|k| ceps.iter().map(|c| c[k]).collect())
        .collect();
    let d: Vec<Vec<f64>> = statics.iter().map(|t| deltas(t, config.delta_window)).collect();
    let dd: Vec<Vec<f64>> = d.iter().map(|t| deltas(t, config.delta_window)).collect();

    let mut out = Vec::with_capacity(3 * config.mfcc_count);
    for (k, v) in statics.into_iter().enumerate() {
        out.push(LldTrack::dense(format!("mfcc{k}"), FeatureGroup::Mfcc, v));
    }
    for (k, v) in d.into_iter().enumerate() {
        out.push(LldTrack::dense(format!("mfcc{k}_d"), FeatureGroup::Mfcc, v));
    }
    for (k, v) in dd.into_iter().enumerate() {
        out.push(LldTrack::dense(format!("mfcc{k}_dd"), FeatureGroup::Mfcc, v));
    }
    out
}

/// First `count` coefficients of the orthonormal DCT-II.
pub(crate) fn dct_orthonormal(x: &[f64], count: usize) -> Vec<f64> {
    let n = x.len() as f64;
    (0..count)
        .map(|k| {
            let scale = if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
            scale
                * x.iter()
                    .enumerate()
                    .map(|(i, v)| v * (PI * k as f64 * (2 * i + 1) as f64 / (2.0 * n)).cos())
                    .sum::<f64>()
        })
        .collect()
}

/// Regression deltas over `+-window` frames with edge replication.
pub fn deltas(track: &[f64], window: usize) -> Vec<f64> {
    let len = track.len();
    if len == 0 || window == 0 {
        return vec![0.0; len];
    }
    let denom = 2.0 * (1..=window).map(|n| (n * n) as f64).sum::<f64>();
    (0..len)
        .map(|t| {
            (1..=window)
                .map(|n| {
                    let fwd = track[(t + n).min(len - 1)];
                    let back = track[t.saturating_sub(n)];
                    n as f64 * (fwd - back)
                })
                .sum::<f64>()
                / denom
        })
        .collect()
}
