//! Rank, keep the top third of the features, retrain smaller models and compare.
//!
//!     cargo run --release --example reduce_pipeline

use litevr::data::{make_windows, normalize, split_train_test, synthesize, NormStats, SyntheticSpec};
use litevr::explain::{rank_features, Estimator, RankConfig};
use litevr::nn::Task;
use litevr::reduce::{full_spec, run_reduction, select_top, write_comparison_csv, ModelKind, ReductionConfig, SelectionRule};
use litevr::training::{fit, TrainConfig};

fn main() -> litevr::Result<()> {
    let windows = make_windows(&synthesize(&SyntheticSpec::default())?, 10, 1)?;
    let (train, test) = split_train_test(&windows, 0.7, 0)?;
    let stats = NormStats::fit(&train)?;
    let (train, test) = (normalize(&train, &stats)?, normalize(&test, &stats)?);
    let config = TrainConfig {
        epochs: 40,
        batch_size: 64,
        lr: 0.005,
        patience: 8,
        ..TrainConfig::default()
    };

    let spec = full_spec(ModelKind::Mlp, train.n_features(), train.timesteps(), Task::Classification);
    let (net, _) = fit(&spec, &train.to_labeled(Task::Classification)?, &config)?;
    let (ranking, _) = rank_features(
        &net,
        &train.windows,
        &test.windows,
        &train.feature_names,
        Estimator::Exact,
        &RankConfig::default(),
    )?;
    let subset = select_top(&ranking, SelectionRule::Fraction(1.0 / 3.0))?;
    println!("keeping {:?}", subset.names);

    let reduction = ReductionConfig {
        train: config,
        ..ReductionConfig::default()
    };
    let report = run_reduction(&train, &test, &subset, &[ModelKind::Lstm, ModelKind::Mlp], &reduction)?;
    for line in report.summary_lines() {
        println!("{line}");
    }
    write_comparison_csv(&report, std::io::stdout().lock(), &[])
}
