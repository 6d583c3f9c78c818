use super::*;
use crate::dataset::Partition;
use crate::featsel::{LassoLambda, SelectorConfig, SelectorKind};
use crate::impute::SimpleStrategy;
use crate::models::ModelFamily;
use crate::synth::{secom_like, SecomLikeParams};

fn table(seed: u64) -> Dataset {
    secom_like(&SecomLikeParams {
        n_rows: 420,
        n_positive: 28,
        n_high_missing: 3,
        n_constant: 4,
        n_blocks: 24,
        n_block_columns: 40,
        n_informative: 6,
        max_shift: 1.5,
        seed,
        ..SecomLikeParams::default()
    })
    .unwrap()
}

/// Cheap roster and small models so a full run takes well under a second.
fn fast(seed: u64) -> PipelineConfig {
    let mut cfg = PipelineConfig {
        seed,
        ..PipelineConfig::default()
    };
    cfg.select.roster = vec![
        SelectorConfig::new("f_score", SelectorKind::FScore),
        SelectorConfig::new("mutual_info_10", SelectorKind::MutualInfo { n_bins: 10 }),
        SelectorConfig::new("lasso", SelectorKind::Lasso { lambda: LassoLambda::ForCount(1.0) }),
        SelectorConfig::new("rfe_logistic", SelectorKind::Rfe { estimator: ModelFamily::Logistic }),
    ];
    cfg.select.vote_threshold = 2;
    cfg.select.keep_fraction = 0.3;
    for m in &mut cfg.models {
        let h = &mut m.hyperparameters;
        h.epochs = Some(100);
        h.n_trees = Some(15);
        h.n_rounds = Some(20);
    }
    cfg
}

#[test]
fn holdout_run_has_one_row_per_model() {
    let r = run_on(&fast(1), &table(1)).unwrap();
    assert_eq!(r.folds.len(), 1);
    assert_eq!(r.primary().models.len(), 6);
    assert_eq!(r.prune.high_missing, 3);
    assert_eq!(r.prune.constant, 4);
    assert_eq!(r.prune.columns_after, 24);
    let f = r.primary();
    assert_eq!(f.n_train + f.n_test, 420);
    assert!(f.resample.is_none());
    assert_eq!(f.trained_on.0 + f.trained_on.1, f.n_train);
    let best = f.models.iter().map(|m| m.roc.auc).fold(0.0, f64::max);
    assert!(best > 0.7, "best auc {best}");
}

#[test]
fn scenarios_share_the_test_partition() {
    let cfg = fast(2);
    let d = table(2);
    let reports = run_variants(
        &cfg,
        &d,
        &[ScenarioId::I.resample(), ScenarioId::II.resample(), ScenarioId::III.resample()],
    )
    .unwrap();
    let digests: BTreeSet<(&str, &str)> = reports
        .iter()
        .map(|r| (r.primary().split_digest.as_str(), r.primary().test_digest.as_str()))
        .collect();
    assert_eq!(digests.len(), 1);

    let two = reports[1].primary().resample.as_ref().unwrap();
    assert_eq!(two.over_ratio, Some(0.7));
    assert_eq!(two.under_ratio, None);
    let three = reports[2].primary().resample.as_ref().unwrap();
    let (neg, pos) = three.after;
    assert!((neg as f64 * 0.8 - pos as f64).abs() <= 1.0, "{neg}:{pos}");

    for (v, r) in reports.iter().enumerate() {
        let mut single = cfg.clone();
        single.resample = [ScenarioId::I, ScenarioId::II, ScenarioId::III][v].resample();
        let alone = run_on(&single, &d).unwrap();
        assert_eq!(report_text(&alone), report_text(r));
    }
}

#[test]
fn identical_inputs_give_identical_files() {
    let d = table(3);
    let cfg = PipelineConfig {
        resample: ResampleConfig::combined(0.4, 0.8),
        ..fast(3)
    };
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let mut listings = Vec::new();
    for dir in &dirs {
        let r = run_on(&cfg, &d).unwrap();
        let files = emit_report(&r, dir.path(), &ReportFormat::all()).unwrap();
        listings.push(
            files
                .iter()
                .map(|p| (p.file_name().unwrap().to_owned(), fs_bytes(p)))
                .collect::<Vec<_>>(),
        );
    }
    assert_eq!(listings[0], listings[1]);
    let names: Vec<String> = listings[0].iter().map(|(n, _)| n.to_string_lossy().into_owned()).collect();
    for expected in ["report.txt", "drops.csv", "votes.csv", "resample_plan.csv", "roc_logistic.csv", "roc_logistic.svg"] {
        assert!(names.iter().any(|n| n == expected), "{expected} missing from {names:?}");
    }
    assert_eq!(names.iter().filter(|n| n.ends_with(".csv") && n.starts_with("roc_")).count(), 6);
}

fn fs_bytes(p: &std::path::Path) -> Vec<u8> {
    std::fs::read(p).unwrap()
}

#[test]
fn thread_count_does_not_change_results() {
    let d = table(4);
    let cfg = PipelineConfig {
        resample: ResampleConfig::smote(0.7),
        ..fast(4)
    };
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| report_text(&run_on(&cfg, &d).unwrap()))
    };
    assert_eq!(run(1), run(3));
}

#[test]
fn report_table_and_formats() {
    let r = run_on(&fast(5), &table(5)).unwrap();
    let text = report_text(&r);
    let header = text
        .lines()
        .find(|l| l.starts_with("Model"))
        .unwrap();
    let cols: Vec<&str> = header.split("  ").map(str::trim).filter(|s| !s.is_empty()).collect();
    assert_eq!(cols, ["Model", "Balanced Accuracy", "Precision", "Recall", "FAR", "AUC"]);
    let dir = tempfile::tempdir().unwrap();
    assert!(emit_report(&r, &dir.path().join("none"), &BTreeSet::new()).unwrap().is_empty());
    assert!(!dir.path().join("none").exists());
    let csvs = emit_report(&r, dir.path(), &[ReportFormat::RocCsv].into_iter().collect()).unwrap();
    assert_eq!(csvs.len(), 6);
    for p in csvs {
        assert!(std::fs::read_to_string(p).unwrap().starts_with("fpr,tpr,threshold\n"));
    }
    let plan = emit_report(&r, dir.path(), &[ReportFormat::Ledger].into_iter().collect()).unwrap();
    assert_eq!(std::fs::read_to_string(&plan[2]).unwrap(), "key,value\nstrategy,none\n");
}

#[test]
fn kfold_mode_reports_every_fold_and_means() {
    let mut cfg = fast(6);
    cfg.evaluation.mode = EvalMode::Kfold;
    cfg.evaluation.k = 3;
    let r = run_on(&cfg, &table(6)).unwrap();
    assert_eq!(r.folds.len(), 3);
    assert_eq!(r.folds.iter().map(|f| f.n_test).sum::<usize>(), 420);
    let mean = r.mean.as_ref().unwrap();
    let lr = mean.iter().find(|m| m.name == "logistic").unwrap();
    let expect = r.fold_mean("logistic", |m| m.roc.auc).unwrap();
    assert!((lr.auc - expect).abs() < 1e-12);
    assert!(report_text(&r).contains("mean over 3 folds"));
}

#[test]
fn fitting_routines_refuse_the_test_partition() {
    let cfg = fast(7);
    let pruned = prune(&cfg.prune, &table(7)).unwrap();
    let plan = split_plan(&cfg, &pruned.data).unwrap();
    let fold = prepare(&cfg, &pruned.data, &plan).unwrap();
    assert_eq!(fold.test.partition, Partition::Test);
    assert!(matches!(select(&cfg, &fold.test), Err(Error::Leakage(_))));
    assert!(matches!(
        resample(&ResampleConfig::smote(0.7), &fold.test, 0),
        Err(Error::Leakage(_))
    ));
    assert!(matches!(train_models(&cfg, &fold.test), Err(Error::Leakage(_))));
    assert!(matches!(
        impute(&cfg.impute, &fold.test, &fold.train, 0),
        Err(Error::Leakage(_))
    ));
}

/// Perturbing only test rows leaves every training-side artifact unchanged.
#[test]
fn test_rows_never_influence_fitted_state() {
    let cfg = fast(8);
    let pruned = prune(&cfg.prune, &table(8)).unwrap().data;
    let plan = split_plan(&cfg, &pruned).unwrap();
    let mut perturbed = pruned.clone();
    for &r in &plan.test_row_indices {
        for c in 0..perturbed.n_cols() {
            let v = perturbed.features.raw(r, c);
            perturbed.features.set(r, c, if (r + c) % 7 == 0 { None } else { Some(v * 3.0 + 1.0) });
        }
    }
    let a = prepare(&cfg, &pruned, &plan).unwrap();
    let b = prepare(&cfg, &perturbed, &plan).unwrap();
    assert_eq!(a.train.features, b.train.features);
    assert_ne!(a.test_digest, b.test_digest);
    assert_eq!(select(&cfg, &a.train).unwrap().0, select(&cfg, &b.train).unwrap().0);
}

#[test]
fn errors_carry_the_stage_name() {
    let mut cfg = fast(9);
    cfg.data = DataConfig::in_dir("/nonexistent/secom");
    match run_scenario(&cfg) {
        Err(Error::Stage { stage: "load", .. }) => {}
        other => panic!("{other:?}"),
    }
    let mut cfg = fast(9);
    cfg.select.roster = vec![SelectorConfig::new(
        "lasso",
        SelectorKind::Lasso { lambda: LassoLambda::Fixed(1e6) },
    )];
    cfg.select.vote_threshold = 1;
    match run_on(&cfg, &table(9)) {
        Err(Error::Stage { stage: "select", source }) => {
            assert!(matches!(*source, Error::NoFeaturesRemain(_)))
        }
        other => panic!("{other:?}"),
    }
    let mut cfg = fast(9);
    cfg.select.vote_threshold = 99;
    assert!(matches!(run_on(&cfg, &table(9)), Err(Error::Config(_))));
}

#[test]
fn imputation_overrides_and_methods() {
    let base = fast(10);
    let pruned = prune(&base.prune, &table(10)).unwrap().data;
    let plan = split_plan(&base, &pruned).unwrap();
    let (train, test) = plan.apply(&pruned);
    let target = train.column_ids()[0];
    let mut cfg = base.impute.clone();
    cfg.overrides.insert(target.to_string(), SimpleStrategy::Median);
    cfg.overrides.insert("100000".into(), SimpleStrategy::Mean);
    let (tr, te, s) = impute(&cfg, &train, &test, 0).unwrap();
    assert_eq!(s.overrides_applied, vec![target]);
    assert_eq!(s.overrides_ignored, vec![100000]);
    assert_eq!(tr.features.missing_count() + te.features.missing_count(), 0);
    let median = crate::dataset::stats_of(target, &train.features.column(0)).median.unwrap();
    for r in (0..train.n_rows()).filter(|&r| train.features.is_missing(r, 0)) {
        assert_eq!(tr.features.raw(r, 0), median);
    }
    for method in [ImputeMethod::Simple, ImputeMethod::Mice] {
        let cfg = ImputeConfig {
            method,
            mice_iterations: 2,
            ..ImputeConfig::default()
        };
        let (tr, te, s) = impute(&cfg, &train, &test, 0).unwrap();
        assert_eq!(tr.features.missing_count() + te.features.missing_count(), 0);
        assert_eq!(s.train_filled, train.features.missing_count());
    }
}
