//! Global feature ranking recovers the features the generator made informative.
//!
//!     cargo run --release --example rank_features

use litevr::data::{make_windows, normalize, split_train_test, synthesize, NormStats, SyntheticSpec};
use litevr::explain::{rank_features, write_ranking_csv, Aggregation, Estimator, RankConfig};
use litevr::nn::Task;
use litevr::reduce::{full_spec, ModelKind};
use litevr::training::{fit, TrainConfig};

fn main() -> litevr::Result<()> {
    let synth = SyntheticSpec::default();
    let windows = make_windows(&synthesize(&synth)?, 10, 1)?;
    let (train, test) = split_train_test(&windows, 0.7, 0)?;
    let stats = NormStats::fit(&train)?;
    let (train, test) = (normalize(&train, &stats)?, normalize(&test, &stats)?);

    let spec = full_spec(ModelKind::Mlp, train.n_features(), train.timesteps(), Task::Classification);
    let config = TrainConfig {
        epochs: 60,
        batch_size: 64,
        lr: 0.005,
        patience: 10,
        ..TrainConfig::default()
    };
    let (net, _) = fit(&spec, &train.to_labeled(Task::Classification)?, &config)?;

    let explained = test.windows.select(&(0..test.len()).step_by(5).collect::<Vec<_>>());
    for aggregation in [Aggregation::PredictedClass, Aggregation::AllOutputs] {
        let rank = RankConfig {
            aggregation,
            background_windows: 0,
        };
        let (ranking, _) = rank_features(&net, &train.windows, &explained, &train.feature_names, Estimator::Exact, &rank)?;
        println!("{aggregation:?}: top 4 {:?}", &ranking.order()[..4]);
        if aggregation == Aggregation::PredictedClass {
            write_ranking_csv(&ranking, std::io::stdout().lock(), &[format!("planted: {:?}", synth.informative_indices)])?;
        }
    }
    Ok(())
}
