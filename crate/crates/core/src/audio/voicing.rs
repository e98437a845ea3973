use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

use super::frame::hamming;
use super::{DspConfig, FeatureGroup, FrameSequence, LldTrack};

/// Pitch and voice-quality tracks from (long) pitch frames.
///
/// Per frame, the autocorrelation is normalised by its zero lag and divided by
/// the autocorrelation of the analysis window, which removes the taper bias so
/// a periodic signal scores close to 1 at its period. The first peak within
/// the F0 search range reaching 95% of the best peak gives the period, refined
/// by parabolic interpolation. Frames whose peak falls below
/// `voicing_threshold` are unvoiced: F0 is 0 and the F0, jitter, shimmer and
/// HNR entries are marked invalid.
pub fn lld_voicing(frames: &FrameSequence, config: &DspConfig) -> Vec<LldTrack> {
    let n = frames.num_frames();
    let len = frames.frame_len;
    let sr = frames.sample_rate as f64;
    let min_lag = ((sr / config.f0_max_hz).floor() as usize).max(2);
    let max_lag = ((sr / config.f0_min_hz).ceil() as usize).min(len / 2).max(min_lag + 1);

    let ac = Autocorr::new(len);
    let window_ac = {
        let r = ac.compute(&hamming(len));
        let r0 = r[0];
        r.into_iter().map(|v| v / r0).collect::<Vec<_>>()
    };

    let mut f0 = vec![0.0; n];
    let mut prob = vec![0.0; n];
    let mut voiced = vec![false; n];
    let mut period = vec![0.0; n];
    let mut amp = vec![0.0; n];

    for (i, frame) in frames.frames.iter().enumerate() {
        let energy: f64 = frame.iter().map(|x| x * x).sum();
        amp[i] = (energy / len as f64).sqrt();
        if !(energy > 1e-20) {
            continue;
        }
        let r = ac.compute(frame);
        let rho = |lag: usize| (r[lag] / r[0]) / window_ac[lag];

        // Candidate local maxima of the corrected autocorrelation.
        let mut peaks: Vec<(usize, f64)> = Vec::new();
        for lag in min_lag..=max_lag {
            let (a, b, c) = (rho(lag - 1), rho(lag), rho(lag + 1));
            if b >= a && b > c {
                peaks.push((lag, b));
            }
        }
        let Some(best) = peaks.iter().map(|p| p.1).reduce(f64::max) else {
            continue;
        };
        let (lag, _) = peaks
            .iter()
            .copied()
            .find(|p| p.1 >= 0.95 * best)
            .expect("best peak qualifies");

        let (a, b, c) = (rho(lag - 1), rho(lag), rho(lag + 1));
        let curv = a - 2.0 * b + c;
        let (offset, height) = if curv < 0.0 {
            let d = 0.5 * (a - c) / curv;
            (d, b - 0.25 * (a - c) * d)
        } else {
            (0.0, b)
        };
        let p = height.clamp(0.0, 1.0);
        prob[i] = p;
        if p >= config.voicing_threshold {
            voiced[i] = true;
            period[i] = (lag as f64 + offset) / sr;
            f0[i] = 1.0 / period[i];
        }
    }

    let mut jitter = vec![0.0; n];
    let mut shimmer = vec![0.0; n];
    let mut pair_valid = vec![false; n];
    for i in 1..n {
        if voiced[i] && voiced[i - 1] {
            pair_valid[i] = true;
            jitter[i] = relative_change(period[i - 1], period[i]);
            shimmer[i] = relative_change(amp[i - 1], amp[i]);
        }
    }
    let hnr: Vec<f64> = prob
        .iter()
        .zip(&voiced)
        .map(|(&p, &v)| {
            if v {
                let p = p.clamp(1e-4, 1.0 - 1e-4);
                10.0 * (p / (1.0 - p)).log10()
            } else {
                0.0
            }
        })
        .collect();

    vec![
        LldTrack::gapped("f0", FeatureGroup::Voicing, f0, voiced.clone()),
        LldTrack::dense("voicing_prob", FeatureGroup::Voicing, prob),
        LldTrack::gapped("jitter", FeatureGroup::Voicing, jitter, pair_valid.clone()),
        LldTrack::gapped("shimmer", FeatureGroup::Voicing, shimmer, pair_valid),
        LldTrack::gapped("hnr", FeatureGroup::Voicing, hnr, voiced),
    ]
}

fn relative_change(a: f64, b: f64) -> f64 {
    let m = 0.5 * (a + b);
    let r = if m > 0.0 { (b - a).abs() / m } else { 0.0 };
    // Rounding-level differences count as none.
    if r < 1e-12 {
        0.0
    } else {
        r
    }
}

/// Linear (non-circular) autocorrelation through a zero-padded FFT.
struct Autocorr {
    len: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    size: usize,
}

impl Autocorr {
    fn new(len: usize) -> Self {
        let size = (2 * len).next_power_of_two();
        let mut planner = FftPlanner::new();
        Autocorr {
            len,
            fwd: planner.plan_fft_forward(size),
            inv: planner.plan_fft_inverse(size),
            size,
        }
    }

    fn compute(&self, x: &[f64]) -> Vec<f64> {
        let mut buf: Vec<Complex<f64>> = (0..self.size)
            .map(|i| Complex::new(x.get(i).copied().unwrap_or(0.0), 0.0))
            .collect();
        self.fwd.process(&mut buf);
        for c in &mut buf {
            *c = Complex::new(c.norm_sqr(), 0.0);
        }
        self.inv.process(&mut buf);
        let scale = 1.0 / self.size as f64;
        buf[..self.len].iter().map(|c| c.re * scale).collect()
    }
}
