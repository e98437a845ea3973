use std::collections::{BTreeMap, BTreeSet};

use accent_id_core::eval::{
    run_cross_prompt, run_cross_prompt_audited, run_cv, run_cv_audited, stratified_kfold_labels, sweep_selection,
    ClassifierConfig, Dataset, FeatureSource, FitAudit, PipelineConfig, SelectionConfig,
};
use accent_id_core::learn::{MlrParams, SmoParams};
use accent_id_core::select::{ScoreParams, SelectionMethod};
use accent_id_core::seed;
use accent_id_core::synth::{prompt_confound, separable_blobs, ConfoundParams};
use accent_id_core::text::NgramConfig;
use accent_id_core::{L1Label, Prompt};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;

fn small_confound() -> accent_id_core::synth::ConfoundCorpus {
    prompt_confound(&ConfoundParams {
        n_per_class_per_prompt: 8,
        seed: 3,
        ..ConfoundParams::default()
    })
}

/// Drops rows so class counts differ and SMOTE has work to do.
fn imbalanced(d: &Dataset) -> Dataset {
    let mut seen: BTreeMap<(L1Label, Prompt), usize> = BTreeMap::new();
    let keep: Vec<usize> = (0..d.len())
        .filter(|&i| {
            let c = seen.entry((d.labels[i], d.prompts[i])).or_default();
            *c += 1;
            *c <= 4 + d.labels[i].index() % 3
        })
        .collect();
    d.subset(&keep)
}

fn svm() -> PipelineConfig {
    PipelineConfig {
        seed: 9,
        folds: 3,
        ..PipelineConfig::new(ClassifierConfig::Svm(SmoParams::default()))
    }
}

#[test]
fn every_fit_sees_only_training_rows() {
    let c = small_confound();
    let data = imbalanced(&c.dataset);
    let cfg = PipelineConfig {
        smote_k: Some(3),
        selection: Some(SelectionConfig {
            method: SelectionMethod::Relieff,
            n: 12,
            params: ScoreParams::default(),
        }),
        ..svm()
    };
    let audit = FitAudit::default();
    run_cv_audited(&data, FeatureSource::Dense(&c.audio), &cfg, &audit).unwrap();
    let plan = stratified_kfold_labels(&data.ids, &data.labels, cfg.folds, seed::derive(cfg.seed, "folds")).unwrap();
    let records = audit.records();
    let stages: BTreeSet<&str> = records.iter().map(|r| r.stage.as_str()).collect();
    assert_eq!(stages, BTreeSet::from(["model", "selection", "smote", "standardizer"]));
    for r in &records {
        let f: usize = r.split.trim_start_matches("fold").parse().unwrap();
        let test: BTreeSet<&String> = plan.folds[f].iter().collect();
        assert!(r.ids.iter().all(|id| !test.contains(id)), "{} {} saw test rows", r.split, r.stage);
        assert_eq!(r.ids.len(), data.len() - test.len());
    }

    let texts_audit = FitAudit::default();
    let configs = [NgramConfig::word()];
    let mlr = PipelineConfig {
        folds: 3,
        ..PipelineConfig::new(ClassifierConfig::Mlr(MlrParams::default()))
    };
    run_cross_prompt_audited(&c.dataset, FeatureSource::Text { texts: &c.texts, configs: &configs }, &mlr, &texts_audit)
        .unwrap();
    for r in texts_audit.records() {
        if let Some(train) = r.split.strip_suffix("->P2").or(r.split.strip_suffix("->P1")) {
            assert!(r.ids.iter().all(|id| id.contains(&format!("_{train}_"))), "{} {}", r.split, r.stage);
        }
    }
}

#[test]
fn smote_before_cv_is_visible_in_the_audit() {
    let c = small_confound();
    let data = imbalanced(&c.dataset);
    let cfg = PipelineConfig {
        smote_k: Some(3),
        smote_before_cv: true,
        ..svm()
    };
    let audit = FitAudit::default();
    run_cv_audited(&data, FeatureSource::Dense(&c.audio), &cfg, &audit).unwrap();
    let global: Vec<_> = audit.records().into_iter().filter(|r| r.split == "all").collect();
    assert_eq!(global.len(), 1);
    assert_eq!(global[0].stage, "smote");
}

#[test]
fn reports_are_deterministic_and_consistent() {
    let (data, fm) = separable_blobs(5, 12, 4);
    let cfg = svm();
    let a = run_cv(&data, FeatureSource::Dense(&fm), &cfg).unwrap();
    let b = run_cv(&data, FeatureSource::Dense(&fm), &cfg).unwrap();
    assert_eq!(a, b);
    let total: usize = a.confusion.iter().flatten().sum();
    let trace: usize = (0..a.confusion.len()).map(|i| a.confusion[i][i]).sum();
    assert_eq!(total, a.n_evaluated);
    assert_eq!(total, data.len());
    assert_eq!(a.accuracy, trace as f64 / total as f64);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn cv_ignores_instance_order(shuffle_seed in 0u64..1000) {
        let c = small_confound();
        let data = &c.dataset;
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(shuffle_seed));
        let shuffled = data.subset(&order);
        let a = run_cv(data, FeatureSource::Dense(&c.audio), &svm()).unwrap();
        let b = run_cv(&shuffled, FeatureSource::Dense(&c.audio), &svm()).unwrap();
        prop_assert_eq!(a.accuracy, b.accuracy);
        prop_assert_eq!(a.confusion, b.confusion);
        prop_assert_eq!(a.per_fold_accuracy, b.per_fold_accuracy);
    }
}

#[test]
fn sweep_at_full_width_matches_unselected_run() {
    let c = small_confound();
    let cfg = svm();
    let d = c.audio.n_cols();
    let plain = run_cv(&c.dataset, FeatureSource::Dense(&c.audio), &cfg).unwrap();
    let points = sweep_selection(
        &c.dataset,
        FeatureSource::Dense(&c.audio),
        &cfg,
        &SelectionMethod::ALL,
        &[5, 10, d],
        &ScoreParams::default(),
    )
    .unwrap();
    assert_eq!(points.len(), 9);
    for p in points.iter().filter(|p| p.n == d) {
        assert_eq!(p.accuracy, plain.accuracy, "{}", p.method.as_str());
    }
    // A sweep point at N equals a run with that selection configured.
    let selected = run_cv(
        &c.dataset,
        FeatureSource::Dense(&c.audio),
        &PipelineConfig {
            selection: Some(SelectionConfig {
                method: SelectionMethod::InfoGain,
                n: 10,
                params: ScoreParams::default(),
            }),
            ..cfg
        },
    )
    .unwrap();
    let p = points.iter().find(|p| p.method == SelectionMethod::InfoGain && p.n == 10).unwrap();
    assert_eq!(p.accuracy, selected.accuracy);
}

#[test]
fn no_prompt_shift_keeps_cross_prompt_near_cv() {
    let c = prompt_confound(&ConfoundParams {
        n_per_class_per_prompt: 20,
        prompt_shift: 0.0,
        seed: 12,
        ..ConfoundParams::default()
    });
    let r = run_cross_prompt(&c.dataset, FeatureSource::Dense(&c.audio), &svm()).unwrap();
    let (d1, d2) = r.deltas();
    assert!(d1.abs() < 0.1 && d2.abs() < 0.1, "{}", r.to_table());
}

#[test]
fn sparse_features_reject_smote_and_selection() {
    let c = small_confound();
    let configs = [NgramConfig::char_within()];
    let text = FeatureSource::Text { texts: &c.texts, configs: &configs };
    let smote = PipelineConfig { smote_k: Some(5), ..svm() };
    assert!(run_cv(&c.dataset, text, &smote).is_err());
    let sel = PipelineConfig {
        selection: Some(SelectionConfig {
            method: SelectionMethod::ChiSquare,
            n: 5,
            params: ScoreParams::default(),
        }),
        ..svm()
    };
    assert!(run_cv(&c.dataset, text, &sel).is_err());
}
