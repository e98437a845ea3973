use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use accent_id_core::config::{FeatureKind, ProtocolKind, RunConfig};
use accent_id_core::corpus::parse_manifest;
use accent_id_core::eval::{
    run_cross_prompt, run_cv, sweep_selection, CrossPromptReport, Dataset, EvaluationReport, FeatureSource,
};
use accent_id_core::matrix::FeatureMatrix;
use accent_id_core::select::SelectionMethod;
use accent_id_core::text::NgramConfig;
use accent_id_core::{CorpusManifest, Error};
use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use crate::artifacts::{write_atomic, FeatureCache};
use crate::{ProtocolArg, RunArgs};

pub const REPORT_FORMAT: &str = "accent-id-report/1";

fn load_config(args: &RunArgs) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(&args.config)?;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(d) = &args.output_dir {
        // Flag paths are relative to the working directory, not the config.
        cfg.output_dir = std::path::absolute(d).with_context(|| format!("resolving {}", d.display()))?;
    }
    if let Some(p) = args.protocol {
        cfg.protocol.kind = match p {
            ProtocolArg::Cv => ProtocolKind::Cv,
            ProtocolArg::CrossPrompt => ProtocolKind::CrossPrompt,
        };
    }
    if let Some(k) = args.folds {
        cfg.protocol.folds = k;
    }
    if args.smote_before_cv {
        cfg.balance.before_cv = true;
    }
    if args.select_once {
        cfg.selection.once = true;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn load_manifest(cfg: &RunConfig) -> Result<CorpusManifest> {
    let path = cfg.manifest_path();
    let m = parse_manifest(&path).with_context(|| format!("reading manifest {}", path.display()))?;
    if m.is_empty() {
        return Err(Error::Data(format!("manifest {} has no instances", path.display())).into());
    }
    Ok(m)
}

pub fn extract(args: &RunArgs, force: bool) -> Result<()> {
    let cfg = load_config(args)?;
    let manifest = load_manifest(&cfg)?;
    let cache = FeatureCache::new(&cfg);
    if cache.ensure(&cfg, &manifest, force)? {
        println!("extracted {} instances into {}", manifest.len(), cache.dir.display());
    } else {
        println!("up to date: {}", cache.dir.display());
    }
    Ok(())
}

/// Everything an experiment reads, resolved from the config.
enum Inputs {
    Dense(FeatureMatrix),
    Text(BTreeMap<String, String>, Vec<NgramConfig>),
}

impl Inputs {
    fn load(cfg: &RunConfig, manifest: &CorpusManifest) -> Result<Inputs> {
        if cfg.features == FeatureKind::Audio {
            let cache = FeatureCache::new(cfg);
            cache.ensure(cfg, manifest, false)?;
            let mut fm = cache.load_dense()?;
            if !cfg.groups.is_empty() {
                fm = fm.select_cols(&fm.group_columns(&cfg.groups));
            }
            Ok(Inputs::Dense(fm))
        } else {
            Ok(Inputs::Text(manifest.load_transcripts()?, cfg.ngram_configs()))
        }
    }

    fn source(&self) -> FeatureSource<'_> {
        match self {
            Inputs::Dense(fm) => FeatureSource::Dense(fm),
            Inputs::Text(texts, configs) => FeatureSource::Text { texts, configs },
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "protocol", content = "result", rename_all = "snake_case")]
pub enum Outcome {
    Cv(EvaluationReport),
    CrossPrompt(CrossPromptReport),
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ReportFile {
    pub format: String,
    pub config_hash: String,
    pub seed: u64,
    pub config: RunConfig,
    #[serde(flatten)]
    pub outcome: Outcome,
}

impl ReportFile {
    fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "config_hash   {}", self.config_hash);
        let _ = writeln!(s, "seed          {}", self.seed);
        let _ = writeln!(s, "features      {}", self.config.features.as_str());
        match &self.outcome {
            Outcome::Cv(r) => {
                let _ = writeln!(s, "protocol      {}-fold CV", r.config.folds);
                s.push_str(&r.to_table());
            }
            Outcome::CrossPrompt(r) => {
                let _ = writeln!(s, "protocol      cross-prompt");
                s.push_str(&r.to_table());
            }
        }
        s
    }
}

pub fn experiment(args: &RunArgs) -> Result<()> {
    let cfg = load_config(args)?;
    let manifest = load_manifest(&cfg)?;
    let inputs = Inputs::load(&cfg, &manifest)?;
    let data = Dataset::from_manifest(&manifest);
    let pipeline = cfg.pipeline();
    let outcome = match cfg.protocol.kind {
        ProtocolKind::Cv => Outcome::Cv(run_cv(&data, inputs.source(), &pipeline)?),
        ProtocolKind::CrossPrompt => Outcome::CrossPrompt(run_cross_prompt(&data, inputs.source(), &pipeline)?),
    };
    let report = ReportFile {
        format: REPORT_FORMAT.into(),
        config_hash: cfg.config_hash(),
        seed: cfg.seed,
        config: cfg.clone(),
        outcome,
    };
    let out = cfg.output_path();
    let mut json = serde_json::to_string_pretty(&report)?;
    json.push('\n');
    write_atomic(&out.join("report.json"), json.as_bytes())?;
    let table = report.to_table();
    write_atomic(&out.join("report.txt"), table.as_bytes())?;
    print!("{table}");
    Ok(())
}

pub fn sweep(args: &RunArgs, n: &[usize], methods: &[SelectionMethod]) -> Result<()> {
    let mut cfg = load_config(args)?;
    if !n.is_empty() {
        cfg.selection.sweep_n = n.to_vec();
    }
    if !methods.is_empty() {
        cfg.selection.sweep_methods = methods.to_vec();
    }
    cfg.validate()?;
    if cfg.features != FeatureKind::Audio {
        return Err(Error::Config("sweep-select needs audio features".into()).into());
    }
    if cfg.selection.sweep_n.is_empty() || cfg.selection.sweep_methods.is_empty() {
        return Err(Error::Config("sweep-select needs selection.sweep_n and sweep_methods (or --n / --methods)".into()).into());
    }
    let manifest = load_manifest(&cfg)?;
    let inputs = Inputs::load(&cfg, &manifest)?;
    let data = Dataset::from_manifest(&manifest);
    let points = sweep_selection(
        &data,
        inputs.source(),
        &cfg.pipeline(),
        &cfg.selection.sweep_methods,
        &cfg.selection.sweep_n,
        &cfg.selection.score_params(),
    )?;
    let hash = cfg.config_hash();
    let mut csv = String::from("method,n,accuracy,config_hash,seed\n");
    for p in &points {
        let _ = writeln!(csv, "{},{},{:?},{hash},{}", p.method.as_str(), p.n, p.accuracy, cfg.seed);
    }
    write_atomic(&cfg.output_path().join("sweep.csv"), csv.as_bytes())?;
    print!("{csv}");
    Ok(())
}

pub fn report(path: &Path, json: bool) -> Result<()> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let r: ReportFile = serde_json::from_str(&text)
        .map_err(|e| Error::Data(format!("{} is not a report: {e}", path.display())))?;
    if r.format != REPORT_FORMAT {
        return Err(Error::Data(format!("unsupported report format {}", r.format)).into());
    }
    if json {
        print!("{text}");
    } else {
        print!("{}", r.to_table());
    }
    Ok(())
}
