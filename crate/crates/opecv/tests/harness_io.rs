//! Harness integration: bundle resolution, benchmark output files, and
//! rerun determinism.

mod common;

use std::collections::BTreeMap;

use opecv::banditgen::{build_problem, synthetic_classification};
use opecv::estimators::{EstimatorKind, EstimatorSpec};
use opecv::harness::{
    resolve_bundle, resolve_slope_bundle, run_bench_to_dir, theory_tuned_spec, DatasetRef,
    ExperimentConfig, MethodSpec, RESULT_HEADER,
};
use opecv::rng::Seed;
use opecv::selection::{ocv_select, OcvOptions};

fn tiny_config(out: &std::path::Path, record_timing: bool) -> ExperimentConfig {
    ExperimentConfig {
        datasets: vec![DatasetRef {
            name: "tiny".into(),
            path: None,
            label_column: None,
            min_max_scale: false,
        }],
        beta0: vec![1.0],
        beta1: vec![10.0],
        runs: 2,
        k: 10,
        seed: 7,
        methods: vec![
            MethodSpec::Ocv { validator: EstimatorKind::Dr, bundle: "ips-dm-dr".into() },
            MethodSpec::Slope { bundle: "ips-dm-dr".into() },
            MethodSpec::Fixed { spec: EstimatorSpec::ips() },
            MethodSpec::Theory { kind: EstimatorKind::TruncatedIps },
        ],
        bundles: BTreeMap::new(),
        allow_biased_validator: false,
        ips_lambda_delta: 0.05,
        record_timing,
        output_dir: out.to_path_buf(),
        bootstrap_resamples: 200,
        manifest: None,
    }
}

#[test]
fn unknown_dataset_names_are_skipped_not_fatal() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = tiny_config(dir.path(), false);
    config.datasets[0].name = "no-such-dataset".into();
    let rows = run_bench_to_dir(&config, dir.path()).unwrap();
    assert!(rows.is_empty());
}

#[test]
fn bench_writes_consistent_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let config = tiny_config(dir.path(), true);
    // "tiny" is not a known stand-in name; route it through a real file.
    let dataset = synthetic_classification(60, 3, 3, Seed::new(1)).unwrap();
    let csv_path = dir.path().join("tiny.csv");
    opecv::banditgen::write_classification_csv(&dataset, &csv_path).unwrap();
    let mut config = config;
    config.datasets[0].path = Some(csv_path);

    let rows = run_bench_to_dir(&config, dir.path()).unwrap();
    // 1 dataset x 1 condition x 2 runs x 4 methods
    assert_eq!(rows.len(), 8);
    for row in &rows {
        let recomputed = (row.estimate - row.true_value) * (row.estimate - row.true_value);
        assert_eq!(row.squared_error, recomputed);
        assert!(row.regret >= 0.0);
    }

    let results = std::fs::read_to_string(dir.path().join("results.csv")).unwrap();
    let header = results.lines().next().unwrap();
    assert_eq!(header, RESULT_HEADER.join(","));
    assert_eq!(results.lines().count(), 9);

    let summary = std::fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    assert!(summary.starts_with(
        "dataset,method,runs,mse,mse_lo,mse_hi,regret,regret_lo,regret_hi"
    ));
    // 4 methods, one dataset
    assert_eq!(summary.lines().count(), 5);

    assert!(dir.path().join("plotdata/mse_by_condition.csv").exists());
    assert!(dir.path().join("plotdata/regret_by_condition.csv").exists());
}

#[test]
fn bench_reruns_byte_identical_without_timing() {
    let dir = tempfile::tempdir().unwrap();
    let dataset = synthetic_classification(60, 3, 3, Seed::new(2)).unwrap();
    let csv_path = dir.path().join("tiny.csv");
    opecv::banditgen::write_classification_csv(&dataset, &csv_path).unwrap();

    let mut config = tiny_config(dir.path(), false);
    config.datasets[0].path = Some(csv_path);

    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    run_bench_to_dir(&config, &out_a).unwrap();
    run_bench_to_dir(&config, &out_b).unwrap();
    let bytes_a = std::fs::read(out_a.join("results.csv")).unwrap();
    let bytes_b = std::fs::read(out_b.join("results.csv")).unwrap();
    assert_eq!(bytes_a, bytes_b);
}

#[test]
fn everything_bundle_covers_all_kinds_and_selects() {
    // 1000 examples split in half: a 500-sample logged dataset.
    let dataset = synthetic_classification(1000, 5, 3, Seed::new(3)).unwrap();
    let problem = build_problem(&dataset, 1.0, 10.0, Seed::new(4)).unwrap();
    assert_eq!(problem.logged.n(), 500);

    let specs = resolve_bundle("everything", &BTreeMap::new(), &problem).unwrap();
    // 3 plain + 31 truncation + 30 each for four grids + 30 harmonic + 5 clusters
    assert_eq!(specs.len(), 3 + 31 + 30 + 30 + 30 + 30 + 30 + 5);
    for kind in EstimatorKind::ALL {
        assert!(specs.iter().any(|s| s.kind == kind), "missing {kind}");
    }

    let result = ocv_select(
        &problem.logged,
        &problem.target,
        Some(&problem.logging),
        &specs,
        &EstimatorSpec::dr(),
        &OcvOptions::default(),
        Seed::new(5),
    )
    .unwrap();
    assert_eq!(result.candidates.len(), specs.len());
    assert!(result.final_estimate.is_finite());

    // the joint bundle has no defensible variance order for the interval walk
    assert!(resolve_slope_bundle("everything", &BTreeMap::new(), &problem).is_err());

    // plain bundle orders match: selection order IPS, DM, DR; walk order
    // IPS, DR, DM
    let plain = resolve_bundle("ips-dm-dr", &BTreeMap::new(), &problem).unwrap();
    assert_eq!(plain, vec![EstimatorSpec::ips(), EstimatorSpec::dm(), EstimatorSpec::dr()]);
    let walk = resolve_slope_bundle("ips-dm-dr", &BTreeMap::new(), &problem).unwrap();
    assert_eq!(walk, vec![EstimatorSpec::ips(), EstimatorSpec::dr(), EstimatorSpec::dm()]);
}

#[test]
fn theory_tuners_produce_valid_specs() {
    let dataset = synthetic_classification(300, 4, 3, Seed::new(6)).unwrap();
    let problem = build_problem(&dataset, 1.0, 10.0, Seed::new(7)).unwrap();
    let n = problem.logged.n();

    let trunc = theory_tuned_spec(EstimatorKind::TruncatedIps, &problem, 0.05).unwrap();
    assert_eq!(trunc.hyper.unwrap(), (n as f64).sqrt());

    for kind in [EstimatorKind::SwitchDr, EstimatorKind::DrOs, EstimatorKind::DrPs] {
        let spec = theory_tuned_spec(kind, &problem, 0.05).unwrap();
        assert!(spec.hyper.unwrap() > 0.0);
    }

    let ips_l = theory_tuned_spec(EstimatorKind::IpsLambda, &problem, 0.05).unwrap();
    assert!((0.0..=1.0).contains(&ips_l.hyper.unwrap()));

    assert!(theory_tuned_spec(EstimatorKind::Cab, &problem, 0.05).is_err());
    assert!(theory_tuned_spec(EstimatorKind::Ips, &problem, 0.05).is_err());
}

#[test]
fn custom_bundles_resolve_verbatim() {
    let dataset = synthetic_classification(60, 3, 3, Seed::new(8)).unwrap();
    let problem = build_problem(&dataset, 0.0, 1.0, Seed::new(9)).unwrap();
    let mut custom = BTreeMap::new();
    custom.insert(
        "mine".to_string(),
        vec![EstimatorSpec::ips(), EstimatorSpec::truncated_ips(2.0)],
    );
    let specs = resolve_bundle("mine", &custom, &problem).unwrap();
    assert_eq!(specs.len(), 2);
    assert!(resolve_bundle("missing", &custom, &problem).is_err());
}
