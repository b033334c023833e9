mod common;

use elastic_shape::data::{generate_labeled_trajectories, AlignmentStage, LabeledSpec, Nuisance, RawSequence};
use elastic_shape::eval::*;
use elastic_shape::pipeline::{AlignmentCache, FittedPipeline, PipelineConfig, ARCHIVE_VERSION};
use elastic_shape::rvae::TrainingConfig;
use elastic_shape::{Error, RegistrationConfig};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn emb<T>(code: Vec<f64>, target: T) -> LabeledEmbedding<T> {
    LabeledEmbedding {
        code,
        subject_id: "s".into(),
        target,
    }
}

#[test]
fn knn_exact_match_returns_its_target() {
    let train = vec![emb(vec![0.0, 0.0], 1.0), emb(vec![1.0, 0.0], 7.0), emb(vec![0.0, 3.0], -2.0)];
    assert_eq!(knn_regress(&train, &[1.0, 0.0], 3).unwrap(), 7.0);
}

#[test]
fn knn_equidistant_neighbors_average() {
    let train = vec![emb(vec![-1.0], 0.0), emb(vec![1.0], 10.0), emb(vec![5.0], 100.0)];
    assert_eq!(knn_regress(&train, &[0.0], 2).unwrap(), 5.0);
}

#[test]
fn knn_hand_weighted_oracle() {
    let train = vec![emb(vec![1.0, 0.0], 0.0), emb(vec![0.0, 2.0], 6.0), emb(vec![-2.0, 0.0], 6.0), emb(vec![9.0, 9.0], 50.0)];
    assert!((knn_regress(&train, &[0.0, 0.0], 3).unwrap() - 3.0).abs() < 1e-12);
}

#[test]
fn knn_rejects_empty_training_set() {
    assert!(matches!(knn_regress(&[], &[0.0], 5), Err(Error::EmptyTrainingSet)));
    assert!(matches!(knn_classify(&[], &[0.0], 5), Err(Error::EmptyTrainingSet)));
}

#[test]
fn knn_classify_weights_and_ties() {
    let same = vec![emb(vec![1.0], 2usize), emb(vec![2.0], 2), emb(vec![3.0], 2)];
    assert_eq!(knn_classify(&same, &[0.0], 3).unwrap(), 2);
    // Weight sums 1.5 (class 0) and 1.4 (class 1).
    let close = vec![emb(vec![1.0 / 1.5], 0usize), emb(vec![-1.0 / 1.4], 1)];
    assert_eq!(knn_classify(&close, &[0.0], 2).unwrap(), 0);
    let close = vec![emb(vec![1.0 / 1.4], 0usize), emb(vec![-1.0 / 1.5], 1)];
    assert_eq!(knn_classify(&close, &[0.0], 2).unwrap(), 1);
    let tie = vec![emb(vec![1.0], 1usize), emb(vec![-1.0], 0)];
    assert_eq!(knn_classify(&tie, &[0.0], 2).unwrap(), 0);
}

proptest! {
    #[test]
    fn knn_k1_is_nearest_neighbor(
        codes in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 3), 1..20),
        q in prop::collection::vec(-5.0f64..5.0, 3),
    ) {
        let train: Vec<_> = codes.iter().enumerate().map(|(i, c)| emb(c.clone(), i as f64)).collect();
        let d = |c: &Vec<f64>| c.iter().zip(&q).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        let best = (0..codes.len()).min_by(|&a, &b| d(&codes[a]).total_cmp(&d(&codes[b]))).unwrap();
        prop_assert_eq!(knn_regress(&train, &q, 1).unwrap(), best as f64);
    }

    #[test]
    fn metric_ranges(
        pairs in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 3..40),
        labels in prop::collection::vec((0usize..4, 0usize..4), 1..60),
    ) {
        let (t, p): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        if let Ok(m) = regression_metrics(&t, &p) {
            prop_assert!(m.rmse >= 0.0);
            prop_assert!((-1.0..=1.0).contains(&m.pearson));
            prop_assert!(m.r2 <= 1.0);
        }
        let (t, p): (Vec<usize>, Vec<usize>) = labels.into_iter().unzip();
        let r = classification_metrics(&t, &p, 4).unwrap();
        prop_assert!((0.0..=1.0).contains(&r.macro_avg.f1));
        prop_assert!((0.0..=1.0).contains(&r.accuracy));
    }
}

#[test]
fn regression_oracles() {
    let m = regression_metrics(&[0.0, 1.0, 2.0], &[0.0, 1.0, 2.0]).unwrap();
    assert_eq!((m.rmse, m.r2, m.pearson), (0.0, 1.0, 1.0));
    let m = regression_metrics(&[1.0, 2.0, 6.0], &[3.0, 3.0, 3.0]).unwrap();
    assert_eq!(m.r2, 0.0);
    let m = regression_metrics(&[0.0, 1.0, 2.0], &[0.0, 1.0, 4.0]).unwrap();
    assert!((m.rmse - (4.0f64 / 3.0).sqrt()).abs() < 1e-12);
    assert!((m.r2 + 1.0).abs() < 1e-12);
    // cov = 4, Σ(y-ȳ)² = 2, Σ(ŷ-ŷ̄)² = 78/9.
    assert!((m.pearson - 12.0 / 156f64.sqrt()).abs() < 1e-12);
    assert!(matches!(regression_metrics(&[2.0, 2.0], &[1.0, 3.0]), Err(Error::UndefinedMetric(_))));
}

#[test]
fn classification_confusion_oracle() {
    let confusion = [[2, 1, 0], [0, 2, 0], [1, 0, 1]];
    let (mut t, mut p) = (Vec::new(), Vec::new());
    for (i, row) in confusion.iter().enumerate() {
        for (j, &n) in row.iter().enumerate() {
            for _ in 0..n {
                t.push(i);
                p.push(j);
            }
        }
    }
    let r = classification_metrics(&t, &p, 3).unwrap();
    let close = |a: f64, b: f64| assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    let expect = [(2.0 / 3.0, 2.0 / 3.0, 2.0 / 3.0, 3), (2.0 / 3.0, 1.0, 0.8, 2), (1.0, 0.5, 2.0 / 3.0, 2)];
    for (s, e) in r.per_class.iter().zip(expect) {
        close(s.precision, e.0);
        close(s.recall, e.1);
        close(s.f1, e.2);
        assert_eq!(s.support, e.3);
    }
    close(r.accuracy, 5.0 / 7.0);
    close(r.macro_avg.precision, 7.0 / 9.0);
    close(r.macro_avg.recall, 13.0 / 18.0);
    close(r.macro_avg.f1, 32.0 / 45.0);
    close(r.weighted_avg.precision, 16.0 / 21.0);
    close(r.weighted_avg.recall, 5.0 / 7.0);
    close(r.weighted_avg.f1, 74.0 / 105.0);
    assert_eq!(r.confusion, vec![vec![2, 1, 0], vec![0, 2, 0], vec![1, 0, 1]]);
}

#[test]
fn classification_edge_cases() {
    let r = classification_metrics(&[0, 1, 2, 1], &[0, 1, 2, 1], 3).unwrap();
    assert_eq!((r.macro_avg.f1, r.macro_avg.precision, r.macro_avg.recall, r.accuracy), (1.0, 1.0, 1.0, 1.0));
    let r = classification_metrics(&[0, 1, 1], &[0, 0, 0], 2).unwrap();
    assert_eq!(r.per_class[1].precision, 0.0);
    assert_eq!(r.per_class[1].f1, 0.0);
}

#[test]
fn random_predictor_macro_f1_is_one_over_c() {
    let c = 4;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let scores: Vec<f64> = (0..200)
        .map(|_| {
            let t: Vec<usize> = (0..400).map(|i| i % c).collect();
            let p: Vec<usize> = (0..400).map(|_| rng.random_range(0..c)).collect();
            classification_metrics(&t, &p, c).unwrap().macro_avg.f1
        })
        .collect();
    let mean = scores.iter().sum::<f64>() / 200.0;
    let sd = (scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / 199.0).sqrt();
    assert!((mean - 1.0 / c as f64).abs() < 3.0 * sd, "{mean} ± {sd}");
}

fn mean_metric(s: &[f64]) -> elastic_shape::Result<f64> {
    Ok(s.iter().sum::<f64>() / s.len() as f64)
}

#[test]
fn bootstrap_identical_subjects_give_zero_width() {
    let groups = vec![vec![2.5, 2.5], vec![2.5], vec![2.5, 2.5, 2.5]];
    let ci = bootstrap_ci(&groups, mean_metric, 200, 3).unwrap();
    assert_eq!((ci.point, ci.lo95, ci.hi95), (2.5, 2.5, 2.5));
}

#[test]
fn bootstrap_is_deterministic_and_point_is_the_pool() {
    let groups: Vec<Vec<f64>> = (0..8).map(|i| vec![i as f64, (i * i) as f64]).collect();
    let a = bootstrap_ci(&groups, mean_metric, 500, 42).unwrap();
    let b = bootstrap_ci(&groups, mean_metric, 500, 42).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.point, mean_metric(&groups.concat()).unwrap());
    assert!(a.lo95 <= a.point && a.point <= a.hi95);
    assert_ne!(a, bootstrap_ci(&groups, mean_metric, 500, 43).unwrap());
}

#[test]
fn bootstrap_replay_oracle() {
    // Subject 0 contributes {1, 2}, subject 1 {10}, subject 2 {4, 4, 4}.
    let groups = vec![vec![1.0, 2.0], vec![10.0], vec![4.0, 4.0, 4.0]];
    let mut table = Vec::new();
    for r in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        rng.set_stream(r);
        let mut pool = Vec::new();
        for _ in 0..3 {
            pool.extend(&groups[rng.random_range(0..3usize)]);
        }
        table.push(pool.iter().sum::<f64>() / pool.len() as f64);
    }
    table.sort_by(f64::total_cmp);
    // Ranks 0.225 and 8.775 of the sorted table.
    let lo = table[0] + 0.225 * (table[1] - table[0]);
    let hi = table[8] + 0.775 * (table[9] - table[8]);
    let ci = bootstrap_ci(&groups, mean_metric, 10, 7).unwrap();
    assert!((ci.lo95 - lo).abs() < 1e-12 && (ci.hi95 - hi).abs() < 1e-12);
    assert_eq!(ci.point, 25.0 / 6.0);
}

#[test]
fn bootstrap_skips_undefined_replicates() {
    let groups = vec![vec![0.0], vec![1.0], vec![2.0]];
    // Defined only when all three subjects are drawn (probability 2/9).
    let picky = |s: &[f64]| {
        let mut v = s.to_vec();
        v.sort_by(f64::total_cmp);
        v.dedup();
        if v.len() == 3 {
            Ok(1.0)
        } else {
            Err(Error::UndefinedMetric("missing subject".into()))
        }
    };
    assert!(matches!(
        bootstrap_ci(&groups, picky, 100, 0),
        Err(Error::UnstableInterval { total: 100, .. })
    ));
    let lenient = |s: &[f64]| if s.iter().all(|&x| x == 0.0) { Err(Error::UndefinedMetric("".into())) } else { Ok(1.0) };
    let ci = bootstrap_ci(&groups, lenient, 270, 0).unwrap();
    assert!(ci.skipped > 0 && ci.skipped < 30, "{}", ci.skipped);
}

fn names(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("s{i:03}")).collect()
}

#[test]
fn l5so_plan_partitions_subjects() {
    let s = names(40);
    let plan = FoldPlan::l5so(&s).unwrap();
    assert_eq!(plan.folds.len(), 8);
    plan.validate(&s).unwrap();
    for (i, f) in plan.folds.iter().enumerate() {
        assert_eq!((f.train.len(), f.validation.len(), f.test.len()), (30, 5, 5));
        assert_eq!(f.test, s[5 * i..5 * i + 5].to_vec());
    }
    let tested: Vec<String> = plan.folds.iter().flat_map(|f| f.test.clone()).collect();
    assert_eq!(tested, s);
}

#[test]
fn stroke_plan_has_thirty_folds() {
    let s = names(155);
    let plan = FoldPlan::stroke_30(&s).unwrap();
    plan.validate(&s).unwrap();
    let sizes: Vec<usize> = plan.folds.iter().map(|f| f.test.len()).collect();
    assert_eq!(sizes.len(), 30);
    assert_eq!(sizes.iter().filter(|&&n| n == 6).count(), 5);
    assert_eq!(sizes.iter().sum::<usize>(), 155);
}

#[test]
fn invalid_plans_are_rejected() {
    let s = names(6);
    let fold = |train: &[usize], test: &[usize]| Fold {
        train: train.iter().map(|&i| s[i].clone()).collect(),
        validation: Vec::new(),
        test: test.iter().map(|&i| s[i].clone()).collect(),
    };
    let ok = FoldPlan { folds: vec![fold(&[0, 1, 2], &[3, 4, 5])] };
    ok.validate(&s).unwrap();
    let overlap = FoldPlan { folds: vec![fold(&[0, 1, 2, 3], &[3, 4, 5])] };
    assert!(overlap.validate(&s).is_err());
    let missing = FoldPlan { folds: vec![fold(&[0, 1], &[3, 4, 5])] };
    assert!(missing.validate(&s).is_err());
    let empty = FoldPlan {
        folds: vec![ok.folds[0].clone(), fold(&[0, 1, 2, 3, 4, 5], &[])],
    };
    assert!(matches!(empty.validate(&s), Err(Error::EmptyTestFold { fold: 1 })));
}

fn toy_data() -> Vec<RawSequence> {
    generate_labeled_trajectories(&LabeledSpec {
        classes: 2,
        subjects: 6,
        frames: 12,
        nuisance: Nuisance::none(),
        seed: 5,
        ..Default::default()
    })
    .unwrap()
}

fn quick(stage: AlignmentStage) -> PipelineConfig {
    PipelineConfig {
        stage,
        frames: 10,
        registration: RegistrationConfig {
            max_iterations: 3,
            ..Default::default()
        },
        training: TrainingConfig {
            latent_dim: 2,
            hidden: 8,
            decoder_hidden: 8,
            epochs: 4,
            ..Default::default()
        },
    }
}

fn two_folds(data: &[RawSequence]) -> FoldPlan {
    let s = subjects_of(data);
    FoldPlan {
        folds: vec![
            Fold { train: s[..3].to_vec(), validation: Vec::new(), test: s[3..].to_vec() },
            Fold { train: s[3..].to_vec(), validation: Vec::new(), test: s[..3].to_vec() },
        ],
    }
}

fn eval_cfg(task: Task) -> EvalConfig {
    EvalConfig {
        task,
        bootstrap_replicates: 50,
        seed: 9,
        ..Default::default()
    }
}

#[test]
fn pooled_predictions_are_the_per_fold_predictions() {
    let data = toy_data();
    let plan = two_folds(&data);
    let (res, fitted) = cross_validate(&data, &plan, &quick(AlignmentStage::Preshape), &eval_cfg(Task::Regression), &AlignmentCache::new()).unwrap();
    let mut expect = Vec::new();
    for (f, (fold, pipe)) in plan.folds.iter().zip(&fitted).enumerate() {
        let bank: Vec<LabeledEmbedding<f64>> = data
            .iter()
            .filter(|s| fold.train.contains(&s.subject_id))
            .map(|s| LabeledEmbedding { code: pipe.embed(s).unwrap(), subject_id: s.subject_id.clone(), target: s.target.unwrap() })
            .collect();
        for s in data.iter().filter(|s| fold.test.contains(&s.subject_id)) {
            expect.push((f, s.subject_id.clone(), s.target.unwrap(), knn_regress(&bank, &pipe.embed(s).unwrap(), 5).unwrap()));
        }
    }
    let got: Vec<_> = res.predictions.iter().map(|p| (p.fold, p.subject_id.clone(), p.y_true, p.y_pred)).collect();
    assert_eq!(got, expect);
    let (t, p): (Vec<f64>, Vec<f64>) = res.predictions.iter().map(|p| (p.y_true, p.y_pred)).unzip();
    assert_eq!(res.metrics["r2"].point, regression_metrics(&t, &p).unwrap().r2);
    assert!(res.predictions_csv().starts_with("subject_id,sequence_id,fold,y_true,y_pred\n"));
}

#[test]
fn single_fold_metrics_equal_fold_metrics() {
    let data = toy_data();
    let mut plan = two_folds(&data);
    plan.folds.truncate(1);
    let res = run_cross_validation(&data, &plan, &quick(AlignmentStage::Center), &eval_cfg(Task::Classification)).unwrap();
    let t: Vec<usize> = res.predictions.iter().map(|p| p.y_true as usize).collect();
    let p: Vec<usize> = res.predictions.iter().map(|p| p.y_pred as usize).collect();
    let direct = classification_metrics(&t, &p, 2).unwrap();
    assert_eq!(res.metrics["macro_f1"].point, direct.macro_avg.f1);
    assert_eq!(res.classification.unwrap(), direct);
    assert_eq!(res.classes, vec!["c0".to_string(), "c1".to_string()]);
}

#[test]
fn test_subjects_never_reach_fitted_artifacts() {
    let data = toy_data();
    let plan = two_folds(&data);
    let pipe = quick(AlignmentStage::KendallTsrvf);
    let cfg = eval_cfg(Task::Regression);
    let base = run_cross_validation(&data, &plan, &pipe, &cfg).unwrap();
    let test0 = &plan.folds[0].test;
    let mut permuted = data.clone();
    let idx: Vec<usize> = (0..data.len()).filter(|&i| test0.contains(&data[i].subject_id)).collect();
    for (a, b) in idx.iter().zip(idx.iter().rev()) {
        permuted[*a].target = data[*b].target;
    }
    let mut moved = data.clone();
    for &i in &idx {
        for v in moved[i].data.iter_mut() {
            *v = *v * 1.1 + 0.3;
        }
    }
    let res = run_cross_validation(&permuted, &plan, &pipe, &cfg).unwrap();
    assert_eq!(res.folds[0].artifact_hash, base.folds[0].artifact_hash);
    assert_ne!(res.predictions, base.predictions);
    // Fold 1 trains on those subjects, so its artifacts must move.
    let res = run_cross_validation(&moved, &plan, &pipe, &cfg).unwrap();
    assert_eq!(res.folds[0].artifact_hash, base.folds[0].artifact_hash);
    assert_ne!(res.folds[1].artifact_hash, base.folds[1].artifact_hash);
}

#[test]
fn cross_validation_is_deterministic() {
    let data = toy_data();
    let plan = two_folds(&data);
    let run = || {
        let r = run_cross_validation(&data, &plan, &quick(AlignmentStage::Kendall), &eval_cfg(Task::Classification)).unwrap();
        serde_json::to_string(&r).unwrap()
    };
    assert_eq!(run(), run());
}

#[test]
fn empty_test_fold_is_an_error() {
    let data = toy_data();
    let s = subjects_of(&data);
    let plan = FoldPlan {
        folds: vec![Fold { train: s.clone(), validation: Vec::new(), test: Vec::new() }],
    };
    let err = run_cross_validation(&data, &plan, &quick(AlignmentStage::None), &eval_cfg(Task::Regression));
    assert!(matches!(err, Err(Error::EmptyTestFold { fold: 0 })));
}

#[test]
fn archive_round_trip_and_version_check() {
    let data = toy_data();
    let (_, fitted) = cross_validate(&data, &two_folds(&data), &quick(AlignmentStage::KendallTsrvf), &eval_cfg(Task::Regression), &AlignmentCache::new()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    fitted[0].save(&path).unwrap();
    let back = FittedPipeline::load(&path).unwrap();
    assert_eq!(back.embed(&data[0]).unwrap(), fitted[0].embed(&data[0]).unwrap());
    assert_eq!(back.content_hash().unwrap(), fitted[0].content_hash().unwrap());
    let mut v: serde_json::Value = serde_json::from_slice(&std::fs::read(&path).unwrap()).unwrap();
    v["format_version"] = serde_json::json!(ARCHIVE_VERSION + 1);
    std::fs::write(&path, serde_json::to_vec(&v).unwrap()).unwrap();
    assert!(matches!(FittedPipeline::load(&path), Err(Error::ArchiveVersion { .. })));
}

#[test]
fn cached_registration_matches_a_fresh_fit() {
    use elastic_shape::pipeline::{fit_pipeline, fit_pipeline_cached};
    let data = toy_data();
    let cfg = quick(AlignmentStage::KendallTsrvf);
    let fresh = fit_pipeline(&data, &cfg).unwrap();
    let cache = AlignmentCache::new();
    let first = fit_pipeline_cached(&data, &cfg, Some(&cache)).unwrap();
    assert_eq!(cache.len(), 1);
    // A different model setting reuses the registration.
    let mut other = cfg.clone();
    other.training.kl_weight *= 10.0;
    fit_pipeline_cached(&data, &other, Some(&cache)).unwrap();
    assert_eq!(cache.len(), 1);
    let second = fit_pipeline_cached(&data, &cfg, Some(&cache)).unwrap();
    assert_eq!(fresh.content_hash().unwrap(), first.content_hash().unwrap());
    assert_eq!(first.content_hash().unwrap(), second.content_hash().unwrap());
    // Changing the registration settings or the training subjects misses.
    let mut reg = cfg.clone();
    reg.registration.max_iterations = 2;
    fit_pipeline_cached(&data, &reg, Some(&cache)).unwrap();
    fit_pipeline_cached(&data[..8], &cfg, Some(&cache)).unwrap();
    assert_eq!(cache.len(), 3);
}
