use std::f64::consts::PI;

use super::{AudioClip, DspConfig};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Window {
    Hamming,
}

/// Windowed analysis frames.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSequence {
    pub frames: Vec<Vec<f64>>,
    pub frame_len: usize,
    pub hop: usize,
    pub window: Window,
    pub sample_rate: u32,
}

impl FrameSequence {
    pub fn num_frames(&self) -> usize {
        self.frames.len()
    }
}

/// `w[n] = 0.54 - 0.46 cos(2 pi n / (N - 1))`
pub fn hamming(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    let denom = (n - 1) as f64;
    (0..n)
        .map(|i| 0.54 - 0.46 * (2.0 * PI * i as f64 / denom).cos())
        .collect()
}

/// Cuts the clip into `1 + (len - frame_len) / hop` Hamming-windowed frames.
pub fn frame_signal(clip: &AudioClip, config: &DspConfig) -> Result<FrameSequence> {
    let frame_len = config.frame_len();
    let hop = config.hop_len();
    let len = clip.samples.len();
    if len < frame_len {
        return Err(Error::ClipTooShort {
            len,
            frame: frame_len,
        });
    }
    let window = hamming(frame_len);
    let n = 1 + (len - frame_len) / hop;
    let frames = (0..n)
        .map(|i| {
            let s = &clip.samples[i * hop..i * hop + frame_len];
            s.iter().zip(&window).map(|(x, w)| x * w).collect()
        })
        .collect();
    Ok(FrameSequence {
        frames,
        frame_len,
        hop,
        window: Window::Hamming,
        sample_rate: clip.sample_rate,
    })
}

/// Long Hamming frames for pitch analysis, one per main frame and centred on
/// the same instant. Frames that would run past either end of the clip are
/// shifted inward; clips shorter than a pitch frame are zero padded.
pub fn frame_pitch(clip: &AudioClip, config: &DspConfig, num_frames: usize) -> FrameSequence {
    let len = config.pitch_frame_len();
    let hop = config.hop_len();
    let half_main = config.frame_len() / 2;
    let window = hamming(len);
    let total = clip.samples.len();

    let frames = (0..num_frames)
        .map(|i| {
            let centre = i * hop + half_main;
            let start = centre.saturating_sub(len / 2).min(total.saturating_sub(len));
            (0..len)
                .map(|j| clip.samples.get(start + j).copied().unwrap_or(0.0) * window[j])
                .collect()
        })
        .collect();
    FrameSequence {
        frames,
        frame_len: len,
        hop,
        window: Window::Hamming,
        sample_rate: clip.sample_rate,
    }
}
