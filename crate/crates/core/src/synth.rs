//! Constructed datasets with known structure, for tests and demos.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::Array2;
use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::audio::FeatureGroup;
use crate::corpus::{CorpusManifest, Instance, L1Label, Prompt};
use crate::error::{Error, Result};
use crate::eval::Dataset;
use crate::matrix::FeatureMatrix;
use crate::seed;

fn dense_matrix(ids: &[String], rows: Vec<Vec<f64>>, group: FeatureGroup) -> FeatureMatrix {
    let d = rows.first().map_or(0, Vec::len);
    FeatureMatrix {
        ids: ids.to_vec(),
        names: (0..d).map(|j| format!("x{j:03}")).collect(),
        groups: vec![group; d],
        data: Array2::from_shape_vec((rows.len(), d), rows.concat()).expect("rectangular rows"),
    }
}

/// 11 classes, `n_per_class` rows each. Class `c` is centred at `10 e_c` with
/// uniform noise in `[-1, 1]` per coordinate, so classes are linearly
/// separable whenever `dim < 50`.
pub fn separable_blobs(n_per_class: usize, dim: usize, seed: u64) -> (Dataset, FeatureMatrix) {
    assert!(dim >= L1Label::COUNT, "blobs need one axis per class");
    let mut rng = seed::rng(seed, "blobs");
    let mut ids = Vec::new();
    let mut labels = Vec::new();
    let mut rows = Vec::new();
    for l in L1Label::ALL {
        for k in 0..n_per_class {
            let mut row: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..=1.0)).collect();
            row[l.index()] += 10.0;
            ids.push(format!("{}_{k:04}", l.code()));
            labels.push(l);
            rows.push(row);
        }
    }
    let prompts = (0..ids.len())
        .map(|i| if i % 2 == 0 { Prompt::P1 } else { Prompt::P2 })
        .collect();
    let fm = dense_matrix(&ids, rows, FeatureGroup::Spectral);
    (
        Dataset {
            ids,
            labels,
            prompts,
        },
        fm,
    )
}

/// Pseudo-word of `len` letters.
fn pseudo_word(rng: &mut ChaCha8Rng, len: usize) -> String {
    const C: &[u8] = b"bdfgklmnprstvz";
    const V: &[u8] = b"aeiou";
    (0..len)
        .map(|i| {
            let set = if i % 2 == 0 { C } else { V };
            set[rng.random_range(0..set.len())] as char
        })
        .collect()
}

const FILLERS: [&str; 40] = [
    "the", "a", "i", "think", "that", "is", "it", "and", "to", "of", "in", "we", "they", "very", "so", "because",
    "people", "important", "should", "can", "have", "be", "not", "for", "with", "my", "opinion", "more", "some",
    "time", "good", "also", "but", "many", "this", "will", "do", "like", "make", "way",
];

/// Corpus where the accent signal is prompt-invariant and the topic signal is
/// prompt-specific.
#[derive(Debug, Clone)]
pub struct ConfoundCorpus {
    pub dataset: Dataset,
    pub texts: BTreeMap<String, String>,
    /// Audio-style dense features.
    pub audio: FeatureMatrix,
}

#[derive(Debug, Clone, Copy)]
pub struct ConfoundParams {
    pub n_per_class_per_prompt: usize,
    /// Probability that a document contains a given accent-marker word.
    pub marker_rate: f64,
    /// Class separation of the accent dimensions, in noise standard deviations.
    pub accent_separation: f64,
    /// Offset between prompts on the topic dimensions, in noise standard
    /// deviations. Acoustic features carry little topic information, so
    /// this is kept small; at 2.0 the audio-style drop reaches ~13 points.
    pub prompt_shift: f64,
    pub seed: u64,
}

impl Default for ConfoundParams {
    fn default() -> Self {
        ConfoundParams {
            n_per_class_per_prompt: 30,
            marker_rate: 0.15,
            accent_separation: 4.0,
            prompt_shift: 1.0,
            seed: 7,
        }
    }
}

/// Builds the prompt-confound corpus.
///
/// Text: each document mixes 40 filler words, 4 topic words drawn from a
/// vocabulary specific to its (class, prompt) and, with probability
/// `marker_rate` each, the 4 accent markers of its class. Topic words
/// identify the class perfectly within a prompt and never occur in the other
/// prompt. Audio: 11 accent dimensions with class means
/// `accent_separation * e_c`, 10 topic dimensions shifted by
/// `+-prompt_shift / 2` by prompt, and 9 pure-noise dimensions, all with unit
/// Gaussian noise.
pub fn prompt_confound(p: &ConfoundParams) -> ConfoundCorpus {
    let mut vocab_rng = seed::rng(p.seed, "confound/vocab");
    let mut topics: BTreeMap<(L1Label, Prompt), Vec<String>> = BTreeMap::new();
    let mut markers: BTreeMap<L1Label, Vec<String>> = BTreeMap::new();
    for l in L1Label::ALL {
        markers.insert(l, (0..4).map(|_| pseudo_word(&mut vocab_rng, 7)).collect());
        for pr in [Prompt::P1, Prompt::P2] {
            topics.insert((l, pr), (0..6).map(|_| pseudo_word(&mut vocab_rng, 6)).collect());
        }
    }

    let mut rng = seed::rng(p.seed, "confound/docs");
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut ids = Vec::new();
    let mut labels = Vec::new();
    let mut prompts = Vec::new();
    let mut texts = BTreeMap::new();
    let mut rows = Vec::new();
    for l in L1Label::ALL {
        for pr in [Prompt::P1, Prompt::P2] {
            for k in 0..p.n_per_class_per_prompt {
                let id = format!("{}_{}_{k:03}", l.code(), pr.code());
                let mut words: Vec<String> = (0..40)
                    .map(|_| FILLERS.choose(&mut rng).expect("fillers").to_string())
                    .collect();
                for _ in 0..4 {
                    words.push(topics[&(l, pr)].choose(&mut rng).expect("topics").clone());
                }
                for m in &markers[&l] {
                    if rng.random_bool(p.marker_rate) {
                        words.push(m.clone());
                    }
                }
                // Deterministic shuffle so cue words are not always at the end.
                for i in (1..words.len()).rev() {
                    let j = rng.random_range(0..=i);
                    words.swap(i, j);
                }
                texts.insert(id.clone(), words.join(" "));

                let shift = if pr == Prompt::P1 { 0.5 } else { -0.5 } * p.prompt_shift;
                let mut row: Vec<f64> = (0..30).map(|_| normal.sample(&mut rng)).collect();
                row[l.index()] += p.accent_separation;
                for v in &mut row[11..21] {
                    *v += shift;
                }
                rows.push(row);
                ids.push(id);
                labels.push(l);
                prompts.push(pr);
            }
        }
    }
    // Dataset rows follow id order, like a parsed manifest.
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.sort_by(|&a, &b| ids[a].cmp(&ids[b]));
    let ids: Vec<String> = order.iter().map(|&i| ids[i].clone()).collect();
    let labels = order.iter().map(|&i| labels[i]).collect();
    let prompts = order.iter().map(|&i| prompts[i]).collect();
    let rows = order.iter().map(|&i| rows[i].clone()).collect();
    let audio = dense_matrix(&ids, rows, FeatureGroup::Spectral);
    ConfoundCorpus {
        dataset: Dataset {
            ids,
            labels,
            prompts,
        },
        texts,
        audio,
    }
}

/// Voiced, vowel-like clip: an impulse train at `f0` through two resonators,
/// plus a little noise, peak-normalised to 0.5.
pub fn vowel_clip(f0: f64, f1: f64, f2: f64, seconds: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let sr = 16_000.0;
    let n = (seconds * sr) as usize;
    let period = sr / f0;
    let mut next = 0.0;
    let mut src = vec![0.0; n];
    for (i, s) in src.iter_mut().enumerate() {
        if i as f64 >= next {
            *s = 1.0;
            next += period;
        }
        *s += 0.01 * rng.random_range(-1.0..1.0);
    }
    let mut y = src;
    for (f, bw) in [(f1, 80.0), (f2, 120.0)] {
        let r = (-std::f64::consts::PI * bw / sr).exp();
        let a1 = 2.0 * r * (2.0 * std::f64::consts::PI * f / sr).cos();
        let a2 = -r * r;
        let mut out = vec![0.0; n];
        for i in 0..n {
            out[i] = y[i] + a1 * if i >= 1 { out[i - 1] } else { 0.0 } + a2 * if i >= 2 { out[i - 2] } else { 0.0 };
        }
        y = out;
    }
    let peak = y.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
    y.iter().map(|v| 0.5 * v / peak).collect()
}

/// Writes a small corpus of WAV clips, transcripts and `manifest.csv` into
/// `dir`: `n_per_class` recordings per class for each of `labels`, alternating
/// prompts. Pitch and formants shift with the class.
pub fn write_toy_corpus(dir: &Path, labels: &[L1Label], n_per_class: usize, seed: u64) -> Result<CorpusManifest> {
    std::fs::create_dir_all(dir.join("audio")).map_err(|e| Error::io(dir, e))?;
    std::fs::create_dir_all(dir.join("text")).map_err(|e| Error::io(dir, e))?;
    let mut rng = seed::rng(seed, "toy-corpus");
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: 16_000,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut instances = Vec::new();
    for &l in labels {
        let c = l.index() as f64;
        for k in 0..n_per_class {
            let id = format!("{}_{k:03}", l.code());
            let prompt = if k % 2 == 0 { Prompt::P1 } else { Prompt::P2 };
            let jitter = 1.0 + 0.02 * rng.random_range(-1.0..1.0);
            let samples = vowel_clip((100.0 + 12.0 * c) * jitter, 400.0 + 40.0 * c, 1200.0 + 90.0 * c, 0.5, &mut rng);
            let audio_rel = format!("audio/{id}.wav");
            let path = dir.join(&audio_rel);
            let mut w = hound::WavWriter::create(&path, spec).map_err(|e| Error::Audio {
                path: path.clone(),
                reason: e.to_string(),
            })?;
            for s in samples {
                w.write_sample((s * 32767.0).round() as i16).map_err(|e| Error::Audio {
                    path: path.clone(),
                    reason: e.to_string(),
                })?;
            }
            w.finalize().map_err(|e| Error::Audio {
                path: path.clone(),
                reason: e.to_string(),
            })?;

            let text_rel = format!("text/{id}.txt");
            let text = format!(
                "i think {} is important because {} {}",
                l.code().to_lowercase(),
                prompt.code().to_lowercase(),
                FILLERS[rng.random_range(0..FILLERS.len())]
            );
            std::fs::write(dir.join(&text_rel), text).map_err(|e| Error::io(dir.join(&text_rel), e))?;
            instances.push(Instance {
                id,
                audio_path: audio_rel,
                transcript_path: Some(text_rel),
                label: l,
                prompt,
            });
        }
    }
    let m = CorpusManifest::new(instances, "synthetic toy corpus", dir)?;
    m.write(&dir.join("manifest.csv"))?;
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blobs_shape_and_determinism() {
        let (d, fm) = separable_blobs(4, 12, 1);
        assert_eq!(d.len(), 44);
        assert_eq!(fm.data.dim(), (44, 12));
        assert_eq!(separable_blobs(4, 12, 1).1, fm);
    }

    #[test]
    fn confound_topics_do_not_cross_prompts() {
        let c = prompt_confound(&ConfoundParams {
            n_per_class_per_prompt: 3,
            ..Default::default()
        });
        assert_eq!(c.dataset.len(), 66);
        let words = |p: Prompt| -> std::collections::BTreeSet<String> {
            c.dataset
                .ids
                .iter()
                .zip(&c.dataset.prompts)
                .filter(|(_, &q)| q == p)
                .flat_map(|(id, _)| c.texts[id].split(' ').map(str::to_string).collect::<Vec<_>>())
                .filter(|w| w.len() == 6 && !FILLERS.contains(&w.as_str()))
                .collect()
        };
        assert!(words(Prompt::P1).is_disjoint(&words(Prompt::P2)));
    }
}
