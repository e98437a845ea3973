use serde::{Deserialize, Serialize};

use super::{DspConfig, FeatureGroup, FeatureVector, LldTrack};
use crate::error::{Error, Result};

/// Statistic collapsing an LLD track into one number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Functional {
    Mean,
    Stddev,
    Skewness,
    Kurtosis,
    Min,
    Max,
    Range,
    Quartile1,
    Quartile2,
    Quartile3,
    Iqr,
    /// Least-squares slope against frame index.
    Slope,
    /// Least-squares intercept at frame 0.
    Offset,
    MeanCrossingRate,
}

impl Functional {
    pub const ALL: [Functional; 14] = [
        Functional::Mean,
        Functional::Stddev,
        Functional::Skewness,
        Functional::Kurtosis,
        Functional::Min,
        Functional::Max,
        Functional::Range,
        Functional::Quartile1,
        Functional::Quartile2,
        Functional::Quartile3,
        Functional::Iqr,
        Functional::Slope,
        Functional::Offset,
        Functional::MeanCrossingRate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Functional::Mean => "mean",
            Functional::Stddev => "stddev",
            Functional::Skewness => "skewness",
            Functional::Kurtosis => "kurtosis",
            Functional::Min => "min",
            Functional::Max => "max",
            Functional::Range => "range",
            Functional::Quartile1 => "quartile1",
            Functional::Quartile2 => "quartile2",
            Functional::Quartile3 => "quartile3",
            Functional::Iqr => "iqr",
            Functional::Slope => "slope",
            Functional::Offset => "offset",
            Functional::MeanCrossingRate => "mean_crossing_rate",
        }
    }
}

/// Summary statistics of one (possibly gapped) track.
struct Stats {
    mean: f64,
    std: f64,
    skew: f64,
    kurt: f64,
    min: f64,
    max: f64,
    q: [f64; 3],
    slope: f64,
    offset: f64,
    mcr: f64,
}

impl Stats {
    /// `points` are (frame index, value) for valid frames, in time order.
    fn new(points: &[(f64, f64)]) -> Option<Stats> {
        let n = points.len();
        if n == 0 {
            return None;
        }
        let nf = n as f64;
        let mean = points.iter().map(|p| p.1).sum::<f64>() / nf;
        let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
        for &(_, v) in points {
            let d = v - mean;
            m2 += d * d;
            m3 += d * d * d;
            m4 += d * d * d * d;
        }
        m2 /= nf;
        m3 /= nf;
        m4 /= nf;
        let std = m2.sqrt();

        let mut sorted: Vec<f64> = points.iter().map(|p| p.1).collect();
        sorted.sort_by(f64::total_cmp);
        let (min, max) = (sorted[0], sorted[n - 1]);
        // Higher moments and crossings are undefined for (numerically) flat tracks.
        let scale = min.abs().max(max.abs());
        let flat = !(std > 1e-9 * scale && std > 1e-12);
        let (skew, kurt) = if !flat {
            (m3 / (std * std * std), m4 / (m2 * m2) - 3.0)
        } else {
            (0.0, 0.0)
        };

        let q = [
            quantile(&sorted, 0.25),
            quantile(&sorted, 0.5),
            quantile(&sorted, 0.75),
        ];

        let t_mean = points.iter().map(|p| p.0).sum::<f64>() / nf;
        let (mut sxy, mut sxx) = (0.0, 0.0);
        for &(t, v) in points {
            sxy += (t - t_mean) * (v - mean);
            sxx += (t - t_mean) * (t - t_mean);
        }
        let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
        let offset = mean - slope * t_mean;

        let mcr = if n > 1 && !flat {
            let crossings = points
                .windows(2)
                .filter(|w| {
                    let (a, b) = (w[0].1 - mean, w[1].1 - mean);
                    (a < 0.0 && b > 0.0) || (a > 0.0 && b < 0.0)
                })
                .count();
            crossings as f64 / (n - 1) as f64
        } else {
            0.0
        };

        Some(Stats {
            mean,
            std,
            skew,
            kurt,
            min,
            max,
            q,
            slope,
            offset,
            mcr,
        })
    }

    fn get(&self, f: Functional) -> f64 {
        match f {
            Functional::Mean => self.mean,
            Functional::Stddev => self.std,
            Functional::Skewness => self.skew,
            Functional::Kurtosis => self.kurt,
            Functional::Min => self.min,
            Functional::Max => self.max,
            Functional::Range => self.max - self.min,
            Functional::Quartile1 => self.q[0],
            Functional::Quartile2 => self.q[1],
            Functional::Quartile3 => self.q[2],
            Functional::Iqr => self.q[2] - self.q[0],
            Functional::Slope => self.slope,
            Functional::Offset => self.offset,
            Functional::MeanCrossingRate => self.mcr,
        }
    }
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Applies the configured functionals to every track.
///
/// Names are `{track}__{functional}`. Gapped tracks are summarised over
/// valid frames only and get an extra `{track}__valid_fraction`; a track with
/// no valid frames yields zeros.
pub fn apply_functionals(tracks: &[LldTrack], config: &DspConfig) -> Result<FeatureVector> {
    if let Some(first) = tracks.first() {
        if let Some(bad) = tracks.iter().find(|t| t.len() != first.len()) {
            return Err(Error::Data(format!(
                "track {} has {} frames, expected {}",
                bad.name,
                bad.len(),
                first.len()
            )));
        }
        if let Some(bad) = tracks
            .iter()
            .find(|t| t.valid.as_ref().is_some_and(|v| v.len() != t.len()))
        {
            return Err(Error::Data(format!("track {} has a mismatched validity mask", bad.name)));
        }
    }

    let per_track = tracks.len() * config.functionals.len();
    let mut names = Vec::with_capacity(per_track);
    let mut values = Vec::with_capacity(per_track);
    let mut groups: Vec<FeatureGroup> = Vec::with_capacity(per_track);

    for track in tracks {
        let points: Vec<(f64, f64)> = track
            .values
            .iter()
            .enumerate()
            .filter(|&(i, _)| track.is_valid(i))
            .map(|(i, &v)| (i as f64, v))
            .collect();
        let stats = Stats::new(&points);
        for &f in &config.functionals {
            names.push(format!("{}__{}", track.name, f.name()));
            let v = stats.as_ref().map_or(0.0, |s| s.get(f));
            values.push(if v.is_finite() { v } else { 0.0 });
            groups.push(track.group);
        }
        if track.valid.is_some() {
            names.push(format!("{}__valid_fraction", track.name));
            values.push(if track.is_empty() {
                0.0
            } else {
                points.len() as f64 / track.len() as f64
            });
            groups.push(track.group);
        }
    }
    Ok(FeatureVector {
        names,
        values,
        groups,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fv(values: Vec<f64>) -> FeatureVector {
        apply_functionals(
            &[LldTrack::dense("x", FeatureGroup::Spectral, values)],
            &DspConfig::default(),
        )
        .unwrap()
    }

    #[test]
    fn constant_track() {
        let v = fv(vec![3.0; 10]);
        assert_eq!(v.get("x__mean"), Some(3.0));
        assert_eq!(v.get("x__stddev"), Some(0.0));
        assert_eq!(v.get("x__range"), Some(0.0));
        assert_eq!(v.get("x__slope"), Some(0.0));
        assert_eq!(v.get("x__skewness"), Some(0.0));
        assert_eq!(v.get("x__kurtosis"), Some(0.0));
        assert_eq!(v.get("x__mean_crossing_rate"), Some(0.0));
    }

    #[test]
    fn ramp_track() {
        let v = fv(vec![0.0, 1.0, 2.0, 3.0]);
        assert_eq!(v.get("x__mean"), Some(1.5));
        assert_eq!(v.get("x__min"), Some(0.0));
        assert_eq!(v.get("x__max"), Some(3.0));
        assert!((v.get("x__slope").unwrap() - 1.0).abs() < 1e-12);
        assert!(v.get("x__offset").unwrap().abs() < 1e-12);
        assert_eq!(v.get("x__quartile1"), Some(0.75));
        assert_eq!(v.get("x__quartile2"), Some(1.5));
        assert_eq!(v.get("x__iqr"), Some(1.5));
        assert!(v.get("x__skewness").unwrap().abs() < 1e-12);
        // Population excess kurtosis of {0,1,2,3}: m4/m2^2 - 3 = 2.5625/1.5625 - 3.
        assert!((v.get("x__kurtosis").unwrap() - (2.5625 / 1.5625 - 3.0)).abs() < 1e-12);
        assert!((v.get("x__mean_crossing_rate").unwrap() - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn six_tracks_give_84_values() {
        let tracks: Vec<LldTrack> = (0..6)
            .map(|i| LldTrack::dense(format!("t{i}"), FeatureGroup::Spectral, vec![i as f64; 5]))
            .collect();
        let v = apply_functionals(&tracks, &DspConfig::default()).unwrap();
        assert_eq!(v.len(), 84);
    }

    #[test]
    fn gapped_track_uses_valid_frames_and_adds_fraction() {
        let t = LldTrack::gapped(
            "f0",
            FeatureGroup::Voicing,
            vec![0.0, 100.0, 0.0, 120.0],
            vec![false, true, false, true],
        );
        let v = apply_functionals(&[t], &DspConfig::default()).unwrap();
        assert_eq!(v.len(), 15);
        assert_eq!(v.get("f0__mean"), Some(110.0));
        assert_eq!(v.get("f0__min"), Some(100.0));
        assert_eq!(v.get("f0__valid_fraction"), Some(0.5));
        // Slope uses true frame positions: (1,100) -> (3,120).
        assert!((v.get("f0__slope").unwrap() - 10.0).abs() < 1e-12);
    }

    #[test]
    fn empty_valid_set_is_zero() {
        let t = LldTrack::gapped("f1_freq", FeatureGroup::Formant, vec![0.0; 4], vec![false; 4]);
        let v = apply_functionals(&[t], &DspConfig::default()).unwrap();
        assert!(v.values.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn mismatched_lengths_rejected() {
        let a = LldTrack::dense("a", FeatureGroup::Spectral, vec![1.0; 3]);
        let b = LldTrack::dense("b", FeatureGroup::Spectral, vec![1.0; 4]);
        assert!(apply_functionals(&[a, b], &DspConfig::default()).is_err());
    }
}
