//! Dataset manifests.
//!
//! A manifest is a CSV file with header `id,audio_path,transcript_path,label,prompt`.
//! Relative paths are resolved against the directory holding the manifest.
//! Transcripts are read on demand, so audio-only experiments can leave the
//! `transcript_path` column empty.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Native language of the speaker. Variants are declared in canonical
/// (alphabetical) order; `index()` is used for every tie-break.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum L1Label {
    CHN,
    ENS,
    HKG,
    IDN,
    JPN,
    KOR,
    PAK,
    PHL,
    SIN,
    THA,
    TWN,
}

impl L1Label {
    pub const COUNT: usize = 11;

    pub const ALL: [L1Label; 11] = [
        L1Label::CHN,
        L1Label::ENS,
        L1Label::HKG,
        L1Label::IDN,
        L1Label::JPN,
        L1Label::KOR,
        L1Label::PAK,
        L1Label::PHL,
        L1Label::SIN,
        L1Label::THA,
        L1Label::TWN,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<L1Label> {
        Self::ALL.get(i).copied()
    }

    pub fn code(self) -> &'static str {
        match self {
            L1Label::CHN => "CHN",
            L1Label::ENS => "ENS",
            L1Label::HKG => "HKG",
            L1Label::IDN => "IDN",
            L1Label::JPN => "JPN",
            L1Label::KOR => "KOR",
            L1Label::PAK => "PAK",
            L1Label::PHL => "PHL",
            L1Label::SIN => "SIN",
            L1Label::THA => "THA",
            L1Label::TWN => "TWN",
        }
    }
}

impl fmt::Display for L1Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for L1Label {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Self::ALL
            .iter()
            .copied()
            .find(|l| l.code() == s)
            .ok_or_else(|| s.to_string())
    }
}

/// Elicitation prompt the recording answers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Prompt {
    P1,
    P2,
}

impl Prompt {
    pub fn code(self) -> &'static str {
        match self {
            Prompt::P1 => "P1",
            Prompt::P2 => "P2",
        }
    }

    pub fn other(self) -> Prompt {
        match self {
            Prompt::P1 => Prompt::P2,
            Prompt::P2 => Prompt::P1,
        }
    }
}

impl fmt::Display for Prompt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Prompt {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "P1" => Ok(Prompt::P1),
            "P2" => Ok(Prompt::P2),
            other => Err(other.to_string()),
        }
    }
}

/// One recording.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub id: String,
    /// Path as written in the manifest.
    pub audio_path: String,
    /// Path as written in the manifest; `None` for audio-only corpora.
    pub transcript_path: Option<String>,
    pub label: L1Label,
    pub prompt: Prompt,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusManifest {
    /// Sorted by id.
    pub instances: Vec<Instance>,
    pub provenance: String,
    /// Directory that relative paths are resolved against.
    pub base_dir: PathBuf,
}

#[derive(Debug, Deserialize, Serialize)]
struct ManifestRow {
    id: String,
    audio_path: String,
    transcript_path: String,
    label: String,
    prompt: String,
}

pub const MANIFEST_HEADER: [&str; 5] = ["id", "audio_path", "transcript_path", "label", "prompt"];

impl CorpusManifest {
    /// Builds a manifest from instances, sorting by id and rejecting duplicates.
    pub fn new(
        mut instances: Vec<Instance>,
        provenance: impl Into<String>,
        base_dir: impl Into<PathBuf>,
    ) -> Result<Self> {
        instances.sort_by(|a, b| a.id.cmp(&b.id));
        if let Some(w) = instances.windows(2).find(|w| w[0].id == w[1].id) {
            return Err(Error::Manifest(format!("duplicate id {}", w[0].id)));
        }
        Ok(CorpusManifest {
            instances,
            provenance: provenance.into(),
            base_dir: base_dir.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn ids(&self) -> Vec<&str> {
        self.instances.iter().map(|i| i.id.as_str()).collect()
    }

    pub fn labels(&self) -> Vec<L1Label> {
        self.instances.iter().map(|i| i.label).collect()
    }

    pub fn resolve(&self, p: &str) -> PathBuf {
        let path = Path::new(p);
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    pub fn audio_path(&self, inst: &Instance) -> PathBuf {
        self.resolve(&inst.audio_path)
    }

    /// Reads the transcript of `inst`.
    pub fn load_transcript(&self, inst: &Instance) -> Result<String> {
        let p = inst.transcript_path.as_deref().ok_or_else(|| {
            Error::Data(format!("instance {} has no transcript_path", inst.id))
        })?;
        let path = self.resolve(p);
        std::fs::read_to_string(&path).map_err(|e| Error::io(path, e))
    }

    /// Every referenced file that does not exist, as `id: path` lines, plus
    /// instances lacking a transcript when `transcripts` is set. Empty when
    /// the manifest is complete.
    pub fn missing_files(&self, audio: bool, transcripts: bool) -> Vec<String> {
        let mut out = Vec::new();
        for inst in &self.instances {
            if audio {
                let p = self.audio_path(inst);
                if !p.is_file() {
                    out.push(format!("{}: audio {}", inst.id, p.display()));
                }
            }
            if transcripts {
                match &inst.transcript_path {
                    None => out.push(format!("{}: no transcript_path", inst.id)),
                    Some(t) => {
                        let p = self.resolve(t);
                        if !p.is_file() {
                            out.push(format!("{}: transcript {}", inst.id, p.display()));
                        }
                    }
                }
            }
        }
        out
    }

    /// Fails with the complete list of missing files.
    pub fn check_files(&self, audio: bool, transcripts: bool) -> Result<()> {
        let missing = self.missing_files(audio, transcripts);
        if missing.is_empty() {
            return Ok(());
        }
        Err(Error::Data(format!(
            "{} missing input file(s):\n  {}",
            missing.len(),
            missing.join("\n  ")
        )))
    }

    /// All transcripts keyed by id.
    pub fn load_transcripts(&self) -> Result<BTreeMap<String, String>> {
        self.check_files(false, true)?;
        self.instances
            .iter()
            .map(|i| Ok((i.id.clone(), self.load_transcript(i)?)))
            .collect()
    }

    /// Keeps instances for which `keep` holds, preserving order.
    pub fn filter(&self, keep: impl Fn(&Instance) -> bool) -> CorpusManifest {
        CorpusManifest {
            instances: self.instances.iter().filter(|i| keep(i)).cloned().collect(),
            provenance: self.provenance.clone(),
            base_dir: self.base_dir.clone(),
        }
    }

    /// Serializes back to the manifest CSV format.
    pub fn to_csv_string(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        for inst in &self.instances {
            w.serialize(ManifestRow {
                id: inst.id.clone(),
                audio_path: inst.audio_path.clone(),
                transcript_path: inst.transcript_path.clone().unwrap_or_default(),
                label: inst.label.code().to_string(),
                prompt: inst.prompt.code().to_string(),
            })
            .expect("in-memory csv write");
        }
        let bytes = w.into_inner().expect("in-memory csv flush");
        if self.instances.is_empty() {
            return MANIFEST_HEADER.join(",") + "\n";
        }
        String::from_utf8(bytes).expect("csv output is utf-8")
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv_string()).map_err(|e| Error::io(path, e))
    }
}

/// Parses a manifest file.
pub fn parse_manifest(path: &Path) -> Result<CorpusManifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut m = parse_manifest_str(&text, base)?;
    m.provenance = path.display().to_string();
    Ok(m)
}

/// Parses manifest CSV text; relative paths will resolve against `base_dir`.
pub fn parse_manifest_str(text: &str, base_dir: impl Into<PathBuf>) -> Result<CorpusManifest> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = rdr
        .headers()
        .map_err(|e| Error::Manifest(format!("unreadable header: {e}")))?
        .clone();
    if headers.iter().collect::<Vec<_>>() != MANIFEST_HEADER {
        return Err(Error::Manifest(format!(
            "bad header at line 1: expected `{}`",
            MANIFEST_HEADER.join(",")
        )));
    }

    let mut instances = Vec::new();
    let mut seen = HashSet::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| Error::Manifest(format!("malformed row at line {line}: {e}")))?;
        let row: ManifestRow = rec
            .deserialize(Some(&headers))
            .map_err(|e| Error::Manifest(format!("malformed row at line {line}: {e}")))?;
        if row.id.is_empty() {
            return Err(Error::Manifest(format!("empty id at line {line}")));
        }
        let label: L1Label = row
            .label
            .parse()
            .map_err(|code| Error::Manifest(format!("unknown label {code} at line {line}")))?;
        let prompt: Prompt = row
            .prompt
            .parse()
            .map_err(|code| Error::Manifest(format!("unknown prompt {code} at line {line}")))?;
        if !seen.insert(row.id.clone()) {
            return Err(Error::Manifest(format!("duplicate id {} at line {line}", row.id)));
        }
        instances.push(Instance {
            id: row.id,
            audio_path: row.audio_path,
            transcript_path: (!row.transcript_path.is_empty()).then_some(row.transcript_path),
            label,
            prompt,
        });
    }
    CorpusManifest::new(instances, "", base_dir)
}

/// Per-class instance counts; every label is present in the map.
pub fn class_distribution(m: &CorpusManifest) -> BTreeMap<L1Label, usize> {
    let mut out: BTreeMap<L1Label, usize> = L1Label::ALL.iter().map(|&l| (l, 0)).collect();
    for inst in &m.instances {
        *out.entry(inst.label).or_default() += 1;
    }
    out
}

/// Splits into (P1, P2) manifests.
pub fn split_by_prompt(m: &CorpusManifest) -> (CorpusManifest, CorpusManifest) {
    (
        m.filter(|i| i.prompt == Prompt::P1),
        m.filter(|i| i.prompt == Prompt::P2),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "id,audio_path,transcript_path,label,prompt\n";

    #[test]
    fn parses_and_sorts_by_id() {
        let text = format!(
            "{HEADER}c,c.wav,c.txt,JPN,P1\na,a.wav,,CHN,P2\nb,b.wav,b.txt,ENS,P1\n"
        );
        let m = parse_manifest_str(&text, "/data").unwrap();
        assert_eq!(m.ids(), vec!["a", "b", "c"]);
        assert_eq!(m.instances[0].transcript_path, None);
        assert_eq!(m.instances[0].prompt, Prompt::P2);
        assert_eq!(m.audio_path(&m.instances[1]), PathBuf::from("/data/b.wav"));
    }

    #[test]
    fn unknown_label_names_code_and_line() {
        let text = format!("{HEADER}a,a.wav,,CHN,P1\nb,b.wav,,XYZ,P1\n");
        let err = parse_manifest_str(&text, ".").unwrap_err().to_string();
        assert_eq!(err, "unknown label XYZ at line 3");
    }

    #[test]
    fn duplicate_id_rejected() {
        let text = format!("{HEADER}a,a.wav,,CHN,P1\na,b.wav,,CHN,P2\n");
        let err = parse_manifest_str(&text, ".").unwrap_err().to_string();
        assert!(err.contains("duplicate id a"), "{err}");
    }

    #[test]
    fn malformed_row_names_line() {
        let text = format!("{HEADER}a,a.wav,,CHN,P1\nb,b.wav\n");
        let err = parse_manifest_str(&text, ".").unwrap_err().to_string();
        assert!(err.contains("line 3"), "{err}");
    }

    #[test]
    fn bad_header_rejected() {
        let err = parse_manifest_str("id,path,label\n", ".").unwrap_err().to_string();
        assert!(err.contains("header"), "{err}");
    }

    #[test]
    fn distribution_of_small_and_empty_manifests() {
        let empty = CorpusManifest::new(vec![], "", ".").unwrap();
        let d = class_distribution(&empty);
        assert_eq!(d.len(), 11);
        assert!(d.values().all(|&c| c == 0));

        let text = format!("{HEADER}a,a.wav,,CHN,P1\nb,b.wav,,CHN,P2\nc,c.wav,,JPN,P1\n");
        let d = class_distribution(&parse_manifest_str(&text, ".").unwrap());
        assert_eq!(d[&L1Label::CHN], 2);
        assert_eq!(d[&L1Label::JPN], 1);
        assert_eq!(d.values().sum::<usize>(), 3);
    }

    #[test]
    fn split_alternating_and_degenerate() {
        let text = format!(
            "{HEADER}a,a.wav,,CHN,P1\nb,b.wav,,CHN,P2\nc,c.wav,,JPN,P1\nd,d.wav,,JPN,P2\n"
        );
        let m = parse_manifest_str(&text, ".").unwrap();
        let (p1, p2) = split_by_prompt(&m);
        assert_eq!(p1.ids(), vec!["a", "c"]);
        assert_eq!(p2.ids(), vec!["b", "d"]);

        let all_p1 = m.filter(|i| i.prompt == Prompt::P1);
        let (x, y) = split_by_prompt(&all_p1);
        assert_eq!(x, all_p1);
        assert!(y.is_empty());
    }

    #[test]
    fn label_order_is_alphabetical() {
        let mut codes: Vec<&str> = L1Label::ALL.iter().map(|l| l.code()).collect();
        let sorted = {
            let mut c = codes.clone();
            c.sort();
            c
        };
        assert_eq!(codes, sorted);
        codes.dedup();
        assert_eq!(codes.len(), L1Label::COUNT);
        for (i, l) in L1Label::ALL.iter().enumerate() {
            assert_eq!(l.index(), i);
        }
    }
}
