use std::f64::consts::PI;

use nalgebra::{Complex, DMatrix};

use super::{DspConfig, FeatureGroup, FrameSequence, LldTrack};

/// Levinson-Durbin recursion on autocorrelation `r[0..=order]`.
///
/// Returns `a[0..=order]` with `a[0] = 1` for the inverse filter
/// `A(z) = 1 + a1 z^-1 + ... + ap z^-p`, and the final prediction error.
/// A non-positive error stops the recursion early; remaining taps stay 0.
pub fn levinson_durbin(r: &[f64], order: usize) -> (Vec<f64>, f64) {
    let mut a = vec![0.0; order + 1];
    a[0] = 1.0;
    let mut err = r[0];
    if err <= 0.0 {
        return (a, 0.0);
    }
    let mut tmp = vec![0.0; order + 1];
    for i in 1..=order {
        let acc: f64 = (1..i).map(|j| a[j] * r[i - j]).sum::<f64>() + r[i];
        let k = -acc / err;
        tmp[..=i].copy_from_slice(&a[..=i]);
        for j in 1..i {
            a[j] = tmp[j] + k * tmp[i - j];
        }
        a[i] = k;
        err *= 1.0 - k * k;
        if err <= 0.0 {
            break;
        }
    }
    (a, err)
}

/// LPC inverse-filter coefficients of one frame (autocorrelation method).
pub fn lpc_coefficients(frame: &[f64], order: usize) -> Option<Vec<f64>> {
    let r: Vec<f64> = (0..=order)
        .map(|lag| {
            frame
                .iter()
                .zip(frame.iter().skip(lag))
                .map(|(a, b)| a * b)
                .sum()
        })
        .collect();
    if !(r[0] > 1e-20) {
        return None;
    }
    let (a, err) = levinson_durbin(&r, order);
    (err > 0.0 && a.iter().all(|v| v.is_finite())).then_some(a)
}

/// Roots of `c[0] z^n + c[1] z^(n-1) + ... + c[n]` as eigenvalues of the
/// companion matrix.
pub fn polynomial_roots(coeffs: &[f64]) -> Vec<Complex<f64>> {
    let lead = coeffs[0];
    let n = coeffs.len() - 1;
    if n == 0 || lead == 0.0 {
        return Vec::new();
    }
    let mut m = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        m[(0, j)] = -coeffs[j + 1] / lead;
    }
    for i in 1..n {
        m[(i, i - 1)] = 1.0;
    }
    m.complex_eigenvalues().iter().copied().collect()
}

/// `F1..Fk` frequency and bandwidth tracks.
///
/// Each frame is pre-emphasised, fitted with an LPC model of `lpc_order`,
/// and the upper-half-plane roots of the inverse filter are converted to
/// (frequency, bandwidth). Roots with bandwidth under the cutoff and
/// frequency inside the search range are sorted by frequency; frames with
/// fewer candidates leave the higher formants at 0 and invalid.
pub fn lld_formants(frames: &FrameSequence, config: &DspConfig) -> Vec<LldTrack> {
    let n = frames.num_frames();
    let k = config.formant_count;
    let sr = frames.sample_rate as f64;
    let mut freq = vec![vec![0.0; n]; k];
    let mut bw = vec![vec![0.0; n]; k];
    let mut valid = vec![vec![false; n]; k];

    let mut emph = vec![0.0; frames.frame_len];
    for (t, frame) in frames.frames.iter().enumerate() {
        emph[0] = frame[0];
        for i in 1..frame.len() {
            emph[i] = frame[i] - config.pre_emphasis * frame[i - 1];
        }
        let Some(a) = lpc_coefficients(&emph, config.lpc_order) else {
            continue;
        };
        let mut cands: Vec<(f64, f64)> = polynomial_roots(&a)
            .into_iter()
            .filter(|z| z.im > 0.0)
            .map(|z| {
                let f = z.im.atan2(z.re) * sr / (2.0 * PI);
                let b = -z.norm().ln() * sr / PI;
                (f, b)
            })
            .filter(|&(f, b)| {
                b.is_finite()
                    && b < config.formant_max_bandwidth_hz
                    && f >= config.formant_min_hz
                    && f <= config.formant_max_hz
            })
            .collect();
        cands.sort_by(|x, y| x.0.total_cmp(&y.0));
        for (j, (f, b)) in cands.into_iter().take(k).enumerate() {
            freq[j][t] = f;
            bw[j][t] = b;
            valid[j][t] = true;
        }
    }

    let mut out = Vec::with_capacity(2 * k);
    for j in 0..k {
        out.push(LldTrack::gapped(
            format!("f{}_freq", j + 1),
            FeatureGroup::Formant,
            std::mem::take(&mut freq[j]),
            valid[j].clone(),
        ));
    }
    for j in 0..k {
        out.push(LldTrack::gapped(
            format!("f{}_bw", j + 1),
            FeatureGroup::Formant,
            std::mem::take(&mut bw[j]),
            std::mem::take(&mut valid[j]),
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::{frame_signal, AudioClip};

    #[test]
    fn levinson_recovers_ar2_coefficients() {
        // Exact autocorrelation of x[n] = 0.5 x[n-1] - 0.2 x[n-2] + e[n]:
        // solve Yule-Walker for r1, r2 given r0 = 1.
        let (a1, a2) = (0.5, -0.2);
        let r1 = a1 / (1.0 - a2);
        let r2 = a1 * r1 + a2;
        let (a, err) = levinson_durbin(&[1.0, r1, r2], 2);
        assert!((a[1] + a1).abs() < 1e-12);
        assert!((a[2] + a2).abs() < 1e-12);
        assert!(err > 0.0);
    }

    #[test]
    fn roots_of_known_polynomial() {
        // (z - 2)(z^2 + 1) = z^3 - 2z^2 + z - 2
        let mut roots = polynomial_roots(&[1.0, -2.0, 1.0, -2.0]);
        roots.sort_by(|a, b| a.im.total_cmp(&b.im));
        assert!((roots[0] - Complex::new(0.0, -1.0)).norm() < 1e-9);
        assert!((roots[1] - Complex::new(2.0, 0.0)).norm() < 1e-9);
        assert!((roots[2] - Complex::new(0.0, 1.0)).norm() < 1e-9);
    }

    #[test]
    fn silence_gives_zero_formants() {
        let cfg = DspConfig::default();
        let clip = AudioClip::new(vec![0.0; 8000], 16000).unwrap();
        let tracks = lld_formants(&frame_signal(&clip, &cfg).unwrap(), &cfg);
        assert_eq!(tracks.len(), 8);
        assert!(tracks.iter().all(|t| t.values.iter().all(|&v| v == 0.0)));
    }
}
