//! Declarative run configuration.
//!
//! One TOML document describes an experiment end to end. It is validated
//! before any computation, hashed for provenance and embedded verbatim in
//! every output.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::audio::{DspConfig, FeatureGroup};
use crate::error::{Error, Result};
use crate::eval::{ClassifierConfig, PipelineConfig, SelectionConfig};
use crate::select::{RelieffParams, ScoreParams, SelectionMethod};
use crate::text::NgramConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Audio,
    WordNgram,
    CharAcross,
    CharWithin,
    /// Word n-grams and character n-grams across word boundaries.
    Combined,
}

impl FeatureKind {
    pub fn is_text(self) -> bool {
        self != FeatureKind::Audio
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureKind::Audio => "audio",
            FeatureKind::WordNgram => "word_ngram",
            FeatureKind::CharAcross => "char_across",
            FeatureKind::CharWithin => "char_within",
            FeatureKind::Combined => "combined",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NgramSection {
    pub word: NgramConfig,
    pub char_across: NgramConfig,
    pub char_within: NgramConfig,
}

impl Default for NgramSection {
    fn default() -> Self {
        NgramSection {
            word: NgramConfig::word(),
            char_across: NgramConfig::char_across(),
            char_within: NgramConfig::char_within(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BalanceSection {
    pub smote: bool,
    pub k: usize,
    /// Oversample once on the full dataset before folding.
    pub before_cv: bool,
}

impl Default for BalanceSection {
    fn default() -> Self {
        BalanceSection {
            smote: false,
            k: 5,
            before_cv: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectionSection {
    /// Set together with `n` to select inside every fold.
    pub method: Option<SelectionMethod>,
    pub n: Option<usize>,
    pub bins: usize,
    pub relieff_k: usize,
    pub relieff_m: Option<usize>,
    /// Score features once on all rows instead of per fold.
    pub once: bool,
    /// Grid for `sweep-select`.
    pub sweep_methods: Vec<SelectionMethod>,
    pub sweep_n: Vec<usize>,
}

impl Default for SelectionSection {
    fn default() -> Self {
        SelectionSection {
            method: None,
            n: None,
            bins: 10,
            relieff_k: 10,
            relieff_m: None,
            once: false,
            sweep_methods: SelectionMethod::ALL.to_vec(),
            sweep_n: Vec::new(),
        }
    }
}

impl SelectionSection {
    pub fn score_params(&self) -> ScoreParams {
        ScoreParams {
            bins: self.bins,
            relieff: RelieffParams {
                k: self.relieff_k,
                m: self.relieff_m,
                seed: 0,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolKind {
    Cv,
    CrossPrompt,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolSection {
    pub kind: ProtocolKind,
    pub folds: usize,
}

impl Default for ProtocolSection {
    fn default() -> Self {
        ProtocolSection {
            kind: ProtocolKind::Cv,
            folds: 10,
        }
    }
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Relative paths resolve against `base_dir`.
    pub manifest: PathBuf,
    pub features: FeatureKind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Audio descriptor groups to keep; empty keeps all.
    #[serde(default)]
    pub groups: Vec<FeatureGroup>,
    #[serde(default = "yes")]
    pub standardize: bool,
    #[serde(default)]
    pub dsp: DspConfig,
    #[serde(default)]
    pub ngram: NgramSection,
    #[serde(default)]
    pub balance: BalanceSection,
    #[serde(default)]
    pub selection: SelectionSection,
    pub classifier: ClassifierConfig,
    #[serde(default)]
    pub protocol: ProtocolSection,
    /// Directory of the config file; not part of the hash.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl RunConfig {
    pub fn from_toml_str(text: &str, base_dir: impl Into<PathBuf>) -> Result<RunConfig> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.base_dir = base_dir.into();
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml_str(&text, base)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("run config serializes to TOML")
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.resolve(&self.manifest)
    }

    pub fn output_path(&self) -> PathBuf {
        self.resolve(&self.output_dir)
    }

    /// Hex SHA-256 of the canonical JSON form. Field order is fixed by the
    /// struct layout, so equal configs always hash equally.
    pub fn config_hash(&self) -> String {
        let json = serde_json::to_string(self).expect("run config serializes to JSON");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// N-gram spaces for a text run, in column order.
    pub fn ngram_configs(&self) -> Vec<NgramConfig> {
        match self.features {
            FeatureKind::Audio => Vec::new(),
            FeatureKind::WordNgram => vec![self.ngram.word.clone()],
            FeatureKind::CharAcross => vec![self.ngram.char_across.clone()],
            FeatureKind::CharWithin => vec![self.ngram.char_within.clone()],
            FeatureKind::Combined => vec![self.ngram.word.clone(), self.ngram.char_across.clone()],
        }
    }

    pub fn pipeline(&self) -> PipelineConfig {
        let selection = match (self.selection.method, self.selection.n) {
            (Some(method), Some(n)) => Some(SelectionConfig {
                method,
                n,
                params: self.selection.score_params(),
            }),
            _ => None,
        };
        PipelineConfig {
            classifier: self.classifier,
            standardize: self.standardize,
            smote_k: self.balance.smote.then_some(self.balance.k),
            selection,
            folds: self.protocol.folds,
            seed: self.seed,
            smote_before_cv: self.balance.before_cv,
            select_once: self.selection.once,
        }
    }

    /// Rejects contradictory or out-of-range settings.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.features == FeatureKind::Audio {
            self.dsp.validate()?;
        } else {
            for c in self.ngram_configs() {
                c.validate()?;
            }
            if !self.groups.is_empty() {
                return bad("`groups` applies only to audio features");
            }
            if self.balance.smote {
                return bad("SMOTE needs dense features; text n-gram features are sparse");
            }
            if self.selection.method.is_some() {
                return bad("feature selection needs dense features; text n-gram features are sparse");
            }
        }
        if self.balance.before_cv && !self.balance.smote {
            return bad("balance.before_cv requires balance.smote = true");
        }
        if self.balance.smote && self.balance.k == 0 {
            return bad("balance.k must be at least 1");
        }
        match (self.selection.method, self.selection.n) {
            (Some(_), None) | (None, Some(_)) => {
                return bad("selection.method and selection.n must be set together");
            }
            (Some(_), Some(0)) => return bad("selection.n must be positive"),
            _ => {}
        }
        if self.selection.once && self.selection.method.is_none() {
            return bad("selection.once requires a selection method");
        }
        if self.selection.bins < 2 {
            return bad("selection.bins must be at least 2");
        }
        if self.selection.relieff_k == 0 {
            return bad("selection.relieff_k must be at least 1");
        }
        if self.selection.sweep_n.contains(&0) {
            return bad("selection.sweep_n entries must be positive");
        }
        if self.protocol.folds < 2 {
            return bad("protocol.folds must be at least 2");
        }
        match self.classifier {
            ClassifierConfig::Svm(p) => {
                if !(p.c > 0.0 && p.tol > 0.0 && p.max_iter > 0) {
                    return bad("svm needs c > 0, tol > 0 and max_iter > 0");
                }
            }
            ClassifierConfig::Mlr(p) => {
                if !(p.l2 >= 0.0 && p.tol > 0.0 && p.max_iter > 0) {
                    return bad("mlr needs l2 >= 0, tol > 0 and max_iter > 0");
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const AUDIO: &str = r#"
manifest = "manifest.csv"
features = "audio"
seed = 3

[balance]
smote = true

[selection]
method = "info_gain"
n = 3500

[classifier]
kind = "svm"
c = 1.0

[protocol]
kind = "cross_prompt"
"#;

    #[test]
    fn parses_defaults_and_round_trips() {
        let cfg = RunConfig::from_toml_str(AUDIO, "/data").unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.balance.k, 5);
        assert_eq!(cfg.protocol.folds, 10);
        assert_eq!(cfg.manifest_path(), PathBuf::from("/data/manifest.csv"));
        let p = cfg.pipeline();
        assert_eq!(p.smote_k, Some(5));
        assert_eq!(p.selection.unwrap().n, 3500);
        let again = RunConfig::from_toml_str(&cfg.to_toml_string(), "/elsewhere").unwrap();
        assert_eq!(again.config_hash(), cfg.config_hash());
    }

    #[test]
    fn hash_tracks_content() {
        let a = RunConfig::from_toml_str(AUDIO, "").unwrap();
        let mut b = a.clone();
        b.seed += 1;
        assert_ne!(a.config_hash(), b.config_hash());
        assert_eq!(a.config_hash().len(), 64);
    }

    #[test]
    fn smote_on_text_is_a_config_error() {
        let text = AUDIO.replace("\"audio\"", "\"char_across\"").replace("[selection]\nmethod = \"info_gain\"\nn = 3500\n", "");
        let err = RunConfig::from_toml_str(&text, "").unwrap().validate().unwrap_err();
        assert!(err.to_string().contains("SMOTE needs dense"), "{err}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = RunConfig::from_toml_str(&format!("{AUDIO}\nbogus = 1\n"), "").unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }
}
