//! Stratified cross-validation, metrics and the cross-prompt protocol.
//!
//! Every fitted object (standardizer, SMOTE output, selection mask,
//! vocabulary, classifier) sees training-partition rows only. Each fit is
//! logged in a [`FitAudit`] so tests can check that claim directly.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::sync::Mutex;

use ndarray::{Array2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::balance::{smote_resample, SmoteConfig};
use crate::corpus::{CorpusManifest, L1Label, Prompt};
use crate::error::{Error, Result};
use crate::learn::{train_mlr, train_multiclass_svm, MlrParams, SmoParams, Standardizer};
use crate::matrix::{Design, FeatureMatrix};
use crate::select::{score, select_top_n, ScoreParams, SelectionMask, SelectionMethod};
use crate::seed;
use crate::text::{NgramConfig, TextSpace};

/// Fold membership as instance ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub seed: u64,
    pub stratified: bool,
    /// Ids per fold, each sorted.
    pub folds: Vec<Vec<String>>,
}

impl FoldPlan {
    /// Fold index of every id.
    pub fn assignment(&self) -> BTreeMap<&str, usize> {
        self.folds
            .iter()
            .enumerate()
            .flat_map(|(f, ids)| ids.iter().map(move |id| (id.as_str(), f)))
            .collect()
    }
}

pub fn stratified_kfold(manifest: &CorpusManifest, k: usize, seed: u64) -> Result<FoldPlan> {
    let ids: Vec<String> = manifest.instances.iter().map(|i| i.id.clone()).collect();
    stratified_kfold_labels(&ids, &manifest.labels(), k, seed)
}

/// Within each class (canonical order), ids are ordered by a seeded hash of
/// the id and dealt round-robin; each class starts at the fold after the one
/// where the previous class stopped, so fold sizes also stay within one.
pub fn stratified_kfold_labels(ids: &[String], labels: &[L1Label], k: usize, seed: u64) -> Result<FoldPlan> {
    if ids.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: ids.len(),
            actual: labels.len(),
        });
    }
    if k < 2 {
        return Err(Error::Config(format!("cross-validation needs k >= 2, got {k}")));
    }
    let mut by_class: BTreeMap<L1Label, Vec<&String>> = BTreeMap::new();
    for (id, &l) in ids.iter().zip(labels) {
        by_class.entry(l).or_default().push(id);
    }
    let small: Vec<String> = by_class
        .iter()
        .filter(|(_, m)| m.len() < k)
        .map(|(l, m)| format!("{l} ({})", m.len()))
        .collect();
    if !small.is_empty() {
        return Err(Error::Data(format!(
            "classes with fewer than {k} instances: {}",
            small.join(", ")
        )));
    }
    let mut folds = vec![Vec::new(); k];
    let mut offset = 0;
    for members in by_class.values_mut() {
        members.sort_by_key(|id| (seed::hash_str(seed, id), id.to_string()));
        for (r, id) in members.iter().enumerate() {
            folds[(offset + r) % k].push((*id).clone());
        }
        offset = (offset + members.len()) % k;
    }
    for f in &mut folds {
        f.sort();
    }
    Ok(FoldPlan {
        k,
        seed,
        stratified: true,
        folds,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub label: L1Label,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub weighted_f1: f64,
    pub per_class: Vec<ClassMetrics>,
    /// `confusion[true][predicted]` over [`L1Label::ALL`].
    pub confusion: Vec<Vec<usize>>,
}

pub fn compute_metrics(y_true: &[L1Label], y_pred: &[L1Label]) -> Result<Metrics> {
    if y_true.len() != y_pred.len() {
        return Err(Error::DimensionMismatch {
            expected: y_true.len(),
            actual: y_pred.len(),
        });
    }
    let mut confusion = vec![vec![0usize; L1Label::COUNT]; L1Label::COUNT];
    for (t, p) in y_true.iter().zip(y_pred) {
        confusion[t.index()][p.index()] += 1;
    }
    Ok(metrics_from_confusion(confusion))
}

fn metrics_from_confusion(confusion: Vec<Vec<usize>>) -> Metrics {
    let total: usize = confusion.iter().flatten().sum();
    let trace: usize = (0..L1Label::COUNT).map(|i| confusion[i][i]).sum();
    let mut per_class = Vec::new();
    let mut weighted = 0.0;
    for l in L1Label::ALL {
        let c = l.index();
        let tp = confusion[c][c] as f64;
        let support: usize = confusion[c].iter().sum();
        let predicted: usize = confusion.iter().map(|r| r[c]).sum();
        let precision = if predicted > 0 { tp / predicted as f64 } else { 0.0 };
        let recall = if support > 0 { tp / support as f64 } else { 0.0 };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        weighted += support as f64 * f1;
        if support > 0 || predicted > 0 {
            per_class.push(ClassMetrics {
                label: l,
                precision,
                recall,
                f1,
                support,
            });
        }
    }
    let ratio = |a: f64| if total > 0 { a / total as f64 } else { 0.0 };
    Metrics {
        accuracy: ratio(trace as f64),
        weighted_f1: ratio(weighted),
        per_class,
        confusion,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClassifierConfig {
    Svm(SmoParams),
    Mlr(MlrParams),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionConfig {
    pub method: SelectionMethod,
    pub n: usize,
    pub params: ScoreParams,
}

/// Per-fold pipeline: standardize, SMOTE, select, train.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub classifier: ClassifierConfig,
    pub standardize: bool,
    /// SMOTE neighbour count; `None` disables balancing.
    pub smote_k: Option<usize>,
    pub selection: Option<SelectionConfig>,
    pub folds: usize,
    pub seed: u64,
    /// Oversample the whole dataset once before folding (leaks synthetic
    /// neighbours of test rows into training; kept for comparison).
    pub smote_before_cv: bool,
    /// Score features once on all rows instead of per fold.
    pub select_once: bool,
}

impl PipelineConfig {
    pub fn new(classifier: ClassifierConfig) -> Self {
        PipelineConfig {
            classifier,
            standardize: true,
            smote_k: None,
            selection: None,
            folds: 10,
            seed: 0,
            smote_before_cv: false,
            select_once: false,
        }
    }
}

/// Features for a set of instances, addressed by id.
#[derive(Debug, Clone, Copy)]
pub enum FeatureSource<'a> {
    Dense(&'a FeatureMatrix),
    /// Transcripts by id; the vocabulary is refitted on every training split.
    Text {
        texts: &'a BTreeMap<String, String>,
        configs: &'a [NgramConfig],
    },
}

impl FeatureSource<'_> {
    fn is_sparse(&self) -> bool {
        matches!(self, FeatureSource::Text { .. })
    }
}

/// Labelled instances to evaluate on.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub ids: Vec<String>,
    pub labels: Vec<L1Label>,
    pub prompts: Vec<Prompt>,
}

impl Dataset {
    pub fn from_manifest(m: &CorpusManifest) -> Dataset {
        Dataset {
            ids: m.instances.iter().map(|i| i.id.clone()).collect(),
            labels: m.labels(),
            prompts: m.instances.iter().map(|i| i.prompt).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn subset(&self, rows: &[usize]) -> Dataset {
        Dataset {
            ids: rows.iter().map(|&r| self.ids[r].clone()).collect(),
            labels: rows.iter().map(|&r| self.labels[r]).collect(),
            prompts: rows.iter().map(|&r| self.prompts[r]).collect(),
        }
    }

    pub fn with_prompt(&self, p: Prompt) -> Dataset {
        let rows: Vec<usize> = (0..self.len()).filter(|&i| self.prompts[i] == p).collect();
        self.subset(&rows)
    }
}

/// One fitted object and the instance ids it was fitted on.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FitRecord {
    pub split: String,
    pub stage: String,
    pub ids: Vec<String>,
}

#[derive(Debug, Default)]
pub struct FitAudit {
    records: Mutex<Vec<FitRecord>>,
}

impl FitAudit {
    fn record(&self, split: &str, stage: &str, ids: &[String]) {
        let mut ids = ids.to_vec();
        ids.sort();
        self.records.lock().expect("audit lock").push(FitRecord {
            split: split.to_string(),
            stage: stage.to_string(),
            ids,
        });
    }

    pub fn records(&self) -> Vec<FitRecord> {
        let mut r = self.records.lock().expect("audit lock").clone();
        r.sort();
        r
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub accuracy: f64,
    pub weighted_f1: f64,
    pub per_class: Vec<ClassMetrics>,
    pub confusion: Vec<Vec<usize>>,
    pub per_fold_accuracy: Vec<f64>,
    pub n_evaluated: usize,
    pub config: PipelineConfig,
}

impl EvaluationReport {
    pub fn mean_fold_accuracy(&self) -> f64 {
        if self.per_fold_accuracy.is_empty() {
            return self.accuracy;
        }
        self.per_fold_accuracy.iter().sum::<f64>() / self.per_fold_accuracy.len() as f64
    }

    /// Human-readable summary with the confusion matrix.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "accuracy      {:.4}", self.accuracy);
        let _ = writeln!(s, "weighted F1   {:.4}", self.weighted_f1);
        let _ = writeln!(s, "evaluated     {}", self.n_evaluated);
        if !self.per_fold_accuracy.is_empty() {
            let folds: Vec<String> = self.per_fold_accuracy.iter().map(|a| format!("{a:.3}")).collect();
            let _ = writeln!(s, "per fold      {}", folds.join(" "));
        }
        let present: Vec<usize> = (0..L1Label::COUNT)
            .filter(|&i| self.confusion[i].iter().sum::<usize>() > 0 || self.confusion.iter().any(|r| r[i] > 0))
            .collect();
        let _ = write!(s, "\ntrue\\pred");
        for &c in &present {
            let _ = write!(s, " {:>5}", L1Label::ALL[c].code());
        }
        let _ = writeln!(s);
        for &r in &present {
            let _ = write!(s, "{:<9}", L1Label::ALL[r].code());
            for &c in &present {
                let _ = write!(s, " {:>5}", self.confusion[r][c]);
            }
            let _ = writeln!(s);
        }
        let _ = writeln!(s, "\nclass  precision  recall     f1  support");
        for m in &self.per_class {
            let _ = writeln!(
                s,
                "{:<5}  {:>9.3}  {:>6.3}  {:>5.3}  {:>7}",
                m.label.code(),
                m.precision,
                m.recall,
                m.f1,
                m.support
            );
        }
        s
    }
}

/// Training and test matrices of one split after standardization and SMOTE.
struct PreparedSplit {
    x_train: Design,
    y_train: Vec<L1Label>,
    x_test: Design,
    y_test: Vec<L1Label>,
}

fn dense_rows(fm: &FeatureMatrix, ids: &[String]) -> Result<Array2<f64>> {
    let index = fm.row_index();
    let rows = ids
        .iter()
        .map(|id| {
            index
                .get(id.as_str())
                .copied()
                .ok_or_else(|| Error::Data(format!("no features for instance {id}")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(fm.data.select(Axis(0), &rows))
}

fn texts_for<'a>(texts: &'a BTreeMap<String, String>, ids: &[String]) -> Result<Vec<&'a str>> {
    ids.iter()
        .map(|id| {
            texts
                .get(id)
                .map(String::as_str)
                .ok_or_else(|| Error::Data(format!("no transcript for instance {id}")))
        })
        .collect()
}

fn prepare_split(
    train: &Dataset,
    test: &Dataset,
    features: FeatureSource<'_>,
    cfg: &PipelineConfig,
    split: &str,
    audit: &FitAudit,
) -> Result<PreparedSplit> {
    let (x_train, x_test) = match features {
        FeatureSource::Dense(fm) => {
            let xtr = dense_rows(fm, &train.ids)?;
            let xte = dense_rows(fm, &test.ids)?;
            if cfg.standardize {
                audit.record(split, "standardizer", &train.ids);
                let s = Standardizer::fit(&xtr);
                (Design::Dense(s.transform(&xtr)), Design::Dense(s.transform(&xte)))
            } else {
                (Design::Dense(xtr), Design::Dense(xte))
            }
        }
        FeatureSource::Text { texts, configs } => {
            let tr = texts_for(texts, &train.ids)?;
            let te = texts_for(texts, &test.ids)?;
            audit.record(split, "vocabulary", &train.ids);
            let space = TextSpace::fit(&tr, configs)?;
            (Design::Sparse(space.transform(&tr)), Design::Sparse(space.transform(&te)))
        }
    };
    let mut y_train = train.labels.clone();
    let x_train = match (cfg.smote_k, x_train) {
        (Some(k), Design::Dense(x)) if !cfg.smote_before_cv => {
            audit.record(split, "smote", &train.ids);
            let smote = SmoteConfig {
                k_neighbors: k,
                ..SmoteConfig::new(seed::derive(cfg.seed, &format!("smote/{split}")))
            };
            let (xs, ys) = smote_resample(&x, &y_train, &smote)?;
            y_train = ys;
            Design::Dense(xs)
        }
        (_, x) => x,
    };
    Ok(PreparedSplit {
        x_train,
        y_train,
        x_test,
        y_test: test.labels.clone(),
    })
}

fn dense_of(x: &Design) -> Result<&Array2<f64>> {
    match x {
        Design::Dense(m) => Ok(m),
        Design::Sparse(_) => Err(Error::Config(
            "feature selection is only available for dense (audio) features".into(),
        )),
    }
}

fn fit_mask(prep: &PreparedSplit, sel: &SelectionConfig, cfg: &PipelineConfig, split: &str) -> Result<SelectionMask> {
    let mut params = sel.params;
    params.relieff.seed = seed::derive(cfg.seed, &format!("relieff/{split}"));
    let table = score(sel.method, dense_of(&prep.x_train)?, &prep.y_train, &params)?;
    Ok(select_top_n(&table, sel.n))
}

fn train_predict(prep: &PreparedSplit, mask: Option<&SelectionMask>, cfg: &PipelineConfig) -> Result<Vec<L1Label>> {
    let (xtr, xte) = match mask {
        Some(m) => (prep.x_train.select_cols(&m.indices), prep.x_test.select_cols(&m.indices)),
        None => (prep.x_train.clone(), prep.x_test.clone()),
    };
    let classes: Vec<L1Label> = prep.y_train.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    Ok(match &cfg.classifier {
        ClassifierConfig::Svm(p) => train_multiclass_svm(&xtr, &prep.y_train, &classes, p)?.predict(&xte),
        ClassifierConfig::Mlr(p) => train_mlr(&xtr, &prep.y_train, &classes, p)?.predict(&xte),
    })
}

/// Checks combinations that cannot run before any work starts.
pub fn validate_pipeline(features: FeatureSource<'_>, cfg: &PipelineConfig) -> Result<()> {
    if features.is_sparse() && cfg.smote_k.is_some() {
        return Err(Error::Config(
            "SMOTE is only applied to dense audio features; disable it for n-gram features".into(),
        ));
    }
    if features.is_sparse() && cfg.selection.is_some() {
        return Err(Error::Config(
            "feature selection is only available for dense (audio) features".into(),
        ));
    }
    if cfg.smote_before_cv && cfg.smote_k.is_none() {
        return Err(Error::Config("smote_before_cv needs SMOTE enabled".into()));
    }
    if let Some(sel) = &cfg.selection {
        if sel.n == 0 {
            return Err(Error::Config("selection size n must be at least 1".into()));
        }
    }
    if let Some(0) = cfg.smote_k {
        return Err(Error::Config("SMOTE needs k_neighbors >= 1".into()));
    }
    Ok(())
}

/// Applies the whole-dataset steps requested by the compatibility flags.
/// Returns the (possibly augmented) data, the dense matrix to use and a
/// global selection mask.
fn global_steps(
    data: &Dataset,
    features: FeatureSource<'_>,
    cfg: &PipelineConfig,
    audit: &FitAudit,
) -> Result<(Dataset, Option<FeatureMatrix>, Option<SelectionMask>)> {
    let FeatureSource::Dense(fm) = features else {
        return Ok((data.clone(), None, None));
    };
    let mut data = data.clone();
    let mut augmented = None;
    if let (true, Some(k)) = (cfg.smote_before_cv, cfg.smote_k) {
        audit.record("all", "smote", &data.ids);
        let x = dense_rows(fm, &data.ids)?;
        let smote = SmoteConfig {
            k_neighbors: k,
            ..SmoteConfig::new(seed::derive(cfg.seed, "smote"))
        };
        let (xs, ys) = smote_resample(&x, &data.labels, &smote)?;
        let mut counters: BTreeMap<L1Label, usize> = BTreeMap::new();
        for &l in ys.iter().skip(data.len()) {
            let c = counters.entry(l).or_default();
            data.ids.push(format!("~smote-{}-{:06}", l.code(), c));
            *c += 1;
            data.labels.push(l);
            // CV never reads prompts; synthetic rows have none of their own.
            data.prompts.push(Prompt::P1);
        }
        augmented = Some(FeatureMatrix {
            ids: data.ids.clone(),
            names: fm.names.clone(),
            groups: fm.groups.clone(),
            data: xs,
        });
    }
    let mut mask = None;
    if let (true, Some(sel)) = (cfg.select_once, &cfg.selection) {
        audit.record("all", "selection", &data.ids);
        let x = match &augmented {
            Some(a) => a.data.clone(),
            None => dense_rows(fm, &data.ids)?,
        };
        let x = if cfg.standardize {
            Standardizer::fit(&x).transform(&x)
        } else {
            x
        };
        let mut params = sel.params;
        params.relieff.seed = seed::derive(cfg.seed, "relieff");
        mask = Some(select_top_n(&score(sel.method, &x, &data.labels, &params)?, sel.n));
    }
    Ok((data, augmented, mask))
}

struct SplitOutcome {
    y_true: Vec<L1Label>,
    y_pred: Vec<L1Label>,
}

fn run_split(
    train: &Dataset,
    test: &Dataset,
    features: FeatureSource<'_>,
    cfg: &PipelineConfig,
    global_mask: Option<&SelectionMask>,
    split: &str,
    audit: &FitAudit,
) -> Result<SplitOutcome> {
    let prep = prepare_split(train, test, features, cfg, split, audit)?;
    let mask = match (global_mask, &cfg.selection) {
        (Some(m), _) => Some(m.clone()),
        (None, Some(sel)) => {
            audit.record(split, "selection", &train.ids);
            Some(fit_mask(&prep, sel, cfg, split)?)
        }
        (None, None) => None,
    };
    audit.record(split, "model", &train.ids);
    let y_pred = train_predict(&prep, mask.as_ref(), cfg)?;
    Ok(SplitOutcome {
        y_true: prep.y_test,
        y_pred,
    })
}

fn fold_datasets(data: &Dataset, plan: &FoldPlan) -> Vec<(Dataset, Dataset)> {
    let assign = plan.assignment();
    (0..plan.k)
        .map(|f| {
            let mut train: Vec<usize> = Vec::new();
            let mut test: Vec<usize> = Vec::new();
            for (i, id) in data.ids.iter().enumerate() {
                if assign[id.as_str()] == f {
                    test.push(i);
                } else {
                    train.push(i);
                }
            }
            // Training rows in id order, independent of storage order.
            train.sort_by(|&a, &b| data.ids[a].cmp(&data.ids[b]));
            test.sort_by(|&a, &b| data.ids[a].cmp(&data.ids[b]));
            (data.subset(&train), data.subset(&test))
        })
        .collect()
}

fn report_from(outcomes: &[SplitOutcome], cfg: &PipelineConfig, per_fold: bool) -> Result<EvaluationReport> {
    let mut y_true = Vec::new();
    let mut y_pred = Vec::new();
    let mut folds = Vec::new();
    for o in outcomes {
        let m = compute_metrics(&o.y_true, &o.y_pred)?;
        folds.push(m.accuracy);
        y_true.extend_from_slice(&o.y_true);
        y_pred.extend_from_slice(&o.y_pred);
    }
    let m = compute_metrics(&y_true, &y_pred)?;
    Ok(EvaluationReport {
        accuracy: m.accuracy,
        weighted_f1: m.weighted_f1,
        per_class: m.per_class,
        confusion: m.confusion,
        per_fold_accuracy: if per_fold { folds } else { Vec::new() },
        n_evaluated: y_true.len(),
        config: cfg.clone(),
    })
}

pub fn run_cv(data: &Dataset, features: FeatureSource<'_>, cfg: &PipelineConfig) -> Result<EvaluationReport> {
    run_cv_audited(data, features, cfg, &FitAudit::default())
}

/// Stratified k-fold CV with a pooled confusion matrix. Folds run in
/// parallel; results are reduced in fold order.
pub fn run_cv_audited(
    data: &Dataset,
    features: FeatureSource<'_>,
    cfg: &PipelineConfig,
    audit: &FitAudit,
) -> Result<EvaluationReport> {
    validate_pipeline(features, cfg)?;
    let (data, augmented, global_mask) = global_steps(data, features, cfg, audit)?;
    let features = augmented.as_ref().map_or(features, FeatureSource::Dense);
    let plan = stratified_kfold_labels(&data.ids, &data.labels, cfg.folds, seed::derive(cfg.seed, "folds"))?;
    let splits = fold_datasets(&data, &plan);
    let outcomes = splits
        .par_iter()
        .enumerate()
        .map(|(f, (train, test))| {
            run_split(train, test, features, cfg, global_mask.as_ref(), &format!("fold{f}"), audit)
        })
        .collect::<Result<Vec<_>>>()?;
    report_from(&outcomes, cfg, true)
}

/// Train on one dataset, evaluate on another.
pub fn run_train_test(
    train: &Dataset,
    test: &Dataset,
    features: FeatureSource<'_>,
    cfg: &PipelineConfig,
    audit: &FitAudit,
    split: &str,
) -> Result<EvaluationReport> {
    validate_pipeline(features, cfg)?;
    if cfg.smote_before_cv || cfg.select_once {
        log::warn!("compatibility flags only affect cross-validation; ignored for train/test");
    }
    let cfg_tt = PipelineConfig {
        smote_before_cv: false,
        select_once: false,
        ..cfg.clone()
    };
    let mut sorted = train.clone();
    let mut order: Vec<usize> = (0..sorted.len()).collect();
    order.sort_by(|&a, &b| train.ids[a].cmp(&train.ids[b]));
    sorted = sorted.subset(&order);
    let out = run_split(&sorted, test, features, &cfg_tt, None, split, audit)?;
    let mut r = report_from(std::slice::from_ref(&out), cfg, false)?;
    r.config = cfg.clone();
    Ok(r)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossPromptReport {
    pub cv_p1: EvaluationReport,
    pub train_p1_test_p2: EvaluationReport,
    pub cv_p2: EvaluationReport,
    pub train_p2_test_p1: EvaluationReport,
}

impl CrossPromptReport {
    /// Same-prompt CV accuracy minus cross-prompt accuracy, per training prompt.
    pub fn deltas(&self) -> (f64, f64) {
        (
            self.cv_p1.accuracy - self.train_p1_test_p2.accuracy,
            self.cv_p2.accuracy - self.train_p2_test_p1.accuracy,
        )
    }

    pub fn to_table(&self) -> String {
        let (d1, d2) = self.deltas();
        format!(
            "train  CV(same prompt)  cross-prompt  delta\n\
             P1     {:>15.4}  {:>12.4}  {:>+6.4}\n\
             P2     {:>15.4}  {:>12.4}  {:>+6.4}\n",
            self.cv_p1.accuracy, self.train_p1_test_p2.accuracy, d1, self.cv_p2.accuracy, self.train_p2_test_p1.accuracy, d2
        )
    }
}

pub fn run_cross_prompt(data: &Dataset, features: FeatureSource<'_>, cfg: &PipelineConfig) -> Result<CrossPromptReport> {
    run_cross_prompt_audited(data, features, cfg, &FitAudit::default())
}

/// CV within each prompt plus train-on-one, test-on-the-other. Every fitted
/// object of a cross-prompt run sees only the training prompt.
pub fn run_cross_prompt_audited(
    data: &Dataset,
    features: FeatureSource<'_>,
    cfg: &PipelineConfig,
    audit: &FitAudit,
) -> Result<CrossPromptReport> {
    let p1 = data.with_prompt(Prompt::P1);
    let p2 = data.with_prompt(Prompt::P2);
    for (p, d) in [(Prompt::P1, &p1), (Prompt::P2, &p2)] {
        if d.is_empty() {
            return Err(Error::Data(format!("no instances for prompt {p}")));
        }
    }
    Ok(CrossPromptReport {
        cv_p1: run_cv_audited(&p1, features, cfg, audit)?,
        train_p1_test_p2: run_train_test(&p1, &p2, features, cfg, audit, "P1->P2")?,
        cv_p2: run_cv_audited(&p2, features, cfg, audit)?,
        train_p2_test_p1: run_train_test(&p2, &p1, features, cfg, audit, "P2->P1")?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub method: SelectionMethod,
    pub n: usize,
    pub accuracy: f64,
}

/// Pooled CV accuracy for every (method, N). Scores are computed once per
/// fold and method, then cut at each N.
pub fn sweep_selection(
    data: &Dataset,
    features: FeatureSource<'_>,
    cfg: &PipelineConfig,
    methods: &[SelectionMethod],
    ns: &[usize],
    params: &ScoreParams,
) -> Result<Vec<SweepPoint>> {
    let base = PipelineConfig {
        selection: None,
        select_once: false,
        ..cfg.clone()
    };
    validate_pipeline(features, &base)?;
    if features.is_sparse() {
        return Err(Error::Config(
            "feature selection is only available for dense (audio) features".into(),
        ));
    }
    let audit = FitAudit::default();
    let (data, augmented, _) = global_steps(data, features, &base, &audit)?;
    let features = augmented.as_ref().map_or(features, FeatureSource::Dense);
    let plan = stratified_kfold_labels(&data.ids, &data.labels, cfg.folds, seed::derive(cfg.seed, "folds"))?;
    let splits = fold_datasets(&data, &plan);

    let global_tables = if cfg.select_once {
        let FeatureSource::Dense(fm) = features else { unreachable!() };
        let x = dense_rows(fm, &data.ids)?;
        let x = if cfg.standardize { Standardizer::fit(&x).transform(&x) } else { x };
        let mut p = *params;
        p.relieff.seed = seed::derive(cfg.seed, "relieff");
        Some(
            methods
                .iter()
                .map(|&m| score(m, &x, &data.labels, &p))
                .collect::<Result<Vec<_>>>()?,
        )
    } else {
        None
    };

    // correct[method][n] per fold, summed in fold order.
    let per_fold = splits
        .par_iter()
        .enumerate()
        .map(|(f, (train, test))| {
            let split = format!("fold{f}");
            let prep = prepare_split(train, test, features, &base, &split, &audit)?;
            let mut correct = vec![vec![0usize; ns.len()]; methods.len()];
            for (mi, &method) in methods.iter().enumerate() {
                let table = match &global_tables {
                    Some(t) => t[mi].clone(),
                    None => {
                        let mut p = *params;
                        p.relieff.seed = seed::derive(cfg.seed, &format!("relieff/{split}"));
                        score(method, dense_of(&prep.x_train)?, &prep.y_train, &p)?
                    }
                };
                for (ni, &n) in ns.iter().enumerate() {
                    let mask = select_top_n(&table, n);
                    let pred = train_predict(&prep, Some(&mask), &base)?;
                    correct[mi][ni] = pred.iter().zip(&prep.y_test).filter(|(a, b)| a == b).count();
                }
            }
            Ok((correct, prep.y_test.len()))
        })
        .collect::<Result<Vec<_>>>()?;

    let total: usize = per_fold.iter().map(|p| p.1).sum();
    let mut out = Vec::new();
    for (mi, &method) in methods.iter().enumerate() {
        for (ni, &n) in ns.iter().enumerate() {
            let c: usize = per_fold.iter().map(|p| p.0[mi][ni]).sum();
            out.push(SweepPoint {
                method,
                n,
                accuracy: c as f64 / total.max(1) as f64,
            });
        }
    }
    Ok(out)
}
