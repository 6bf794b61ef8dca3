use dlsample::harness::{
    emit_csv, emit_summary, run_ratio_experiment, DatasetSpec, ExperimentConfig, GeneratorKind, GeneratorSpec,
    SummaryFormat,
};
use dlsample::io::write_dataset;
use dlsample::oracle::CenterMode;
use dlsample::{MetricKind, MetricSpec};
use proptest::prelude::*;

fn config(kind: GeneratorKind, n: usize, k: usize, beta: f64, metric: MetricSpec<f64>, seed: u64, trials: usize) -> ExperimentConfig {
    ExperimentConfig {
        dataset: DatasetSpec::Generator(GeneratorSpec {
            kind,
            n,
            d: 2,
            k_true: k,
            spread: 0.7,
            seed,
        }),
        k,
        beta,
        metric,
        trials,
        base_seed: seed.wrapping_mul(31),
        oracle_mode: None,
    }
}

fn kind_strategy() -> impl Strategy<Value = GeneratorKind> {
    prop_oneof![
        Just(GeneratorKind::GaussianMixture),
        Just(GeneratorKind::UniformBox),
        Just(GeneratorKind::Collinear)
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn ratio_at_least_one_with_k_centers(
        kind in kind_strategy(),
        n in 4usize..=8,
        k in 2usize..=3,
        seed in any::<u64>(),
        kmedians in any::<bool>(),
    ) {
        let metric = if kmedians { MetricSpec::kmedians() } else { MetricSpec::kmeans() };
        let out = run_ratio_experiment(&config(kind, n, k, 1.0, metric, seed, 50)).unwrap();
        let expected_mode = if kmedians { CenterMode::Discrete } else { CenterMode::Centroid };
        prop_assert_eq!(out.summary.config.oracle_mode, expected_mode);
        prop_assert_eq!(out.summary.conservative, kmedians);
        for r in &out.records {
            prop_assert_eq!(r.t_used, k);
            if let Some(ratio) = r.ratio {
                prop_assert!(ratio >= 1.0 - 1e-9, "trial {} ratio {}", r.trial, ratio);
            }
        }
    }
}

/// More centers on matched seeds lower the mean ratio, up to 3 SE.
#[test]
fn mean_ratio_non_increasing_in_beta() {
    for seed in 0..5 {
        let mut previous: Option<(f64, f64)> = None;
        for beta in [1.0, 1.5, 2.0, 2.5] {
            let out = run_ratio_experiment(&config(GeneratorKind::GaussianMixture, 8, 2, beta, MetricSpec::kmeans(), seed, 2000)).unwrap();
            let (mean, se) = (out.summary.mean_ratio.unwrap(), out.summary.std_err.unwrap());
            if let Some((pm, pse)) = previous {
                assert!(mean <= pm + 3.0 * (se * se + pse * pse).sqrt(), "seed {seed} beta {beta}: {mean} > {pm}");
            }
            previous = Some((mean, se));
        }
    }
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(GeneratorKind::UniformBox, 7, 3, 1.4, MetricSpec::new(MetricKind::Manhattan, 1.5).unwrap(), 99, 300);
    let mut files = Vec::new();
    for i in 0..2 {
        let out = run_ratio_experiment(&cfg).unwrap();
        let csv = dir.path().join(format!("run{i}.csv"));
        let summary = dir.path().join(format!("run{i}.json"));
        emit_csv(&out.records, &csv).unwrap();
        emit_summary(&out.summary, &summary, SummaryFormat::Json).unwrap();
        files.push((std::fs::read(csv).unwrap(), std::fs::read(summary).unwrap()));
    }
    assert_eq!(files[0], files[1]);
    assert_eq!(String::from_utf8_lossy(&files[0].0).lines().count(), 301);
}

#[test]
fn config_file_with_dataset_path() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("pts.csv");
    let ds = dlsample::harness::generate_dataset(&GeneratorSpec {
        kind: GeneratorKind::GaussianMixture,
        n: 6,
        d: 2,
        k_true: 2,
        spread: 0.2,
        seed: 5,
    })
    .unwrap();
    write_dataset(&data, &ds).unwrap();
    let cfg_path = dir.path().join("exp.cfg");
    std::fs::write(
        &cfg_path,
        format!(
            "# two clusters\ndataset = {}\nk = 2\nbeta = 1.5\nell = 2\nmetric = euclidean\ntrials = 100\nbase_seed = 7\noracle_mode = centroid\n",
            data.display()
        ),
    )
    .unwrap();
    let cfg = ExperimentConfig::from_path(&cfg_path).unwrap();
    assert_eq!(cfg.t_used(), 3);
    let out = run_ratio_experiment(&cfg).unwrap();
    assert_eq!(out.summary.n, 6);
    assert_eq!(out.records[0].seed, 7);
    assert_eq!(out.records[99].seed, 106);
    assert!(out.summary.pass);
}

#[test]
fn emit_reports_path_on_failure() {
    let err = emit_csv(&[], "/nonexistent-dir/out.csv").unwrap_err();
    assert!(err.to_string().contains("/nonexistent-dir/out.csv"), "{err}");
}
