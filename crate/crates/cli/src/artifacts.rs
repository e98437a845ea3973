//! Feature cache and atomic file output.

use std::collections::BTreeMap;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use accent_id_core::audio::extract_manifest;
use accent_id_core::config::{FeatureKind, RunConfig};
use accent_id_core::matrix::FeatureMatrix;
use accent_id_core::text::{write_sparse, TextSpace};
use accent_id_core::{CorpusManifest, Error};
use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Overrides `<output_dir>/features` as the feature cache root.
pub const CACHE_ENV: &str = "ACCENT_ID_CACHE_DIR";

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes through a temporary sibling and renames, so readers never see a
/// partial file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    fs::write(&tmp, contents).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("renaming to {}", path.display()))?;
    Ok(())
}

/// What extraction depends on besides the input files.
#[derive(Serialize)]
struct ExtractKey<'a> {
    kind: FeatureKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    dsp: Option<&'a accent_id_core::audio::DspConfig>,
    ngram: Vec<accent_id_core::text::NgramConfig>,
}

fn extract_key(cfg: &RunConfig) -> String {
    let key = ExtractKey {
        kind: cfg.features,
        dsp: (cfg.features == FeatureKind::Audio).then_some(&cfg.dsp),
        ngram: cfg.ngram_configs(),
    };
    let json = serde_json::to_string(&key).expect("extract key serializes");
    hex(&Sha256::digest(json.as_bytes()))
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct Stamp {
    pub format: String,
    pub kind: FeatureKind,
    pub extract_key: String,
    /// Fingerprint of the extraction settings, manifest and every input file.
    pub content_hash: String,
    pub rows: usize,
    pub cols: usize,
}

pub struct FeatureCache {
    pub dir: PathBuf,
    key: String,
}

impl FeatureCache {
    pub fn new(cfg: &RunConfig) -> FeatureCache {
        let key = extract_key(cfg);
        let root = match std::env::var_os(CACHE_ENV) {
            Some(d) if !d.is_empty() => PathBuf::from(d),
            _ => cfg.output_path().join("features"),
        };
        FeatureCache {
            dir: root.join(format!("{}-{}", cfg.features.as_str(), &key[..16])),
            key,
        }
    }

    pub fn stamp_path(&self) -> PathBuf {
        self.dir.join("stamp.json")
    }

    pub fn csv_path(&self) -> PathBuf {
        self.dir.join("features.csv")
    }

    pub fn groups_path(&self) -> PathBuf {
        self.dir.join("groups.json")
    }

    fn content_hash(&self, cfg: &RunConfig, manifest: &CorpusManifest) -> Result<String> {
        let mut h = Sha256::new();
        h.update(self.key.as_bytes());
        h.update(manifest.to_csv_string().as_bytes());
        let mut buf = Vec::new();
        for inst in &manifest.instances {
            let path = if cfg.features == FeatureKind::Audio {
                manifest.audio_path(inst)
            } else {
                manifest.resolve(inst.transcript_path.as_deref().unwrap_or_default())
            };
            buf.clear();
            fs::File::open(&path)
                .and_then(|mut f| f.read_to_end(&mut buf))
                .map_err(|e| Error::Io { path: path.clone(), source: e })?;
            h.update(inst.id.as_bytes());
            h.update((buf.len() as u64).to_le_bytes());
            h.update(&buf);
        }
        Ok(hex(&h.finalize()))
    }

    fn current_stamp(&self) -> Option<Stamp> {
        let text = fs::read_to_string(self.stamp_path()).ok()?;
        serde_json::from_str(&text).ok()
    }

    /// Extracts unless the stored stamp matches. Returns whether work was done.
    pub fn ensure(&self, cfg: &RunConfig, manifest: &CorpusManifest, force: bool) -> Result<bool> {
        let audio = cfg.features == FeatureKind::Audio;
        manifest.check_files(audio, !audio)?;
        let content_hash = self.content_hash(cfg, manifest)?;
        if !force {
            if let Some(s) = self.current_stamp() {
                if s.content_hash == content_hash && s.extract_key == self.key {
                    return Ok(false);
                }
            }
        }
        let (rows, cols) = if audio {
            let fm = extract_manifest(manifest, &cfg.dsp)?;
            let mut csv = Vec::new();
            fm.write_csv(&mut csv)?;
            write_atomic(&self.csv_path(), &csv)?;
            write_atomic(&self.groups_path(), fm.group_map_json().as_bytes())?;
            (fm.n_rows(), fm.n_cols())
        } else {
            let texts = manifest.load_transcripts()?;
            let ids: Vec<String> = texts.keys().cloned().collect();
            let docs: Vec<&String> = texts.values().collect();
            let space = TextSpace::fit(&docs, &cfg.ngram_configs())?;
            let m = space.transform(&docs);
            let mut buf = Vec::new();
            write_sparse(&ids, &m, &mut buf)?;
            write_atomic(&self.dir.join("matrix.tsv"), &buf)?;
            let mut ranges = BTreeMap::new();
            let mut start = 0;
            for (i, v) in space.vocabs.iter().enumerate() {
                let name = format!("{i}-{}", v.config.unit.as_str());
                let mut buf = Vec::new();
                v.write_tsv(&mut buf)?;
                write_atomic(&self.dir.join(format!("vocab-{name}.tsv")), &buf)?;
                ranges.insert(name, [start, start + v.len()]);
                start += v.len();
            }
            let json = serde_json::to_string_pretty(&ranges)?;
            write_atomic(&self.groups_path(), json.as_bytes())?;
            (ids.len(), space.dim())
        };
        let stamp = Stamp {
            format: "accent-id-features/1".into(),
            kind: cfg.features,
            extract_key: self.key.clone(),
            content_hash,
            rows,
            cols,
        };
        write_atomic(&self.stamp_path(), serde_json::to_string_pretty(&stamp)?.as_bytes())?;
        Ok(true)
    }

    pub fn load_dense(&self) -> Result<FeatureMatrix> {
        Ok(FeatureMatrix::read(&self.csv_path(), &self.groups_path())?)
    }
}
