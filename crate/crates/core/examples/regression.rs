//! FMS regression with a dense network.
//!
//!     cargo run --release --example regression

use litevr::data::{make_windows, normalize, split_train_test, synthesize, NormStats, SyntheticSpec};
use litevr::metrics::EvalMetrics;
use litevr::nn::Task;
use litevr::reduce::{full_spec, ModelKind};
use litevr::training::{evaluate, fit, TrainConfig};

fn main() -> litevr::Result<()> {
    let windows = make_windows(&synthesize(&SyntheticSpec::default())?, 10, 1)?;
    let (train, test) = split_train_test(&windows, 0.7, 0)?;
    let stats = NormStats::fit(&train)?;
    let (train, test) = (normalize(&train, &stats)?, normalize(&test, &stats)?);

    let spec = full_spec(ModelKind::Mlp, train.n_features(), train.timesteps(), Task::Regression);
    let config = TrainConfig {
        epochs: 100,
        batch_size: 64,
        lr: 0.003,
        patience: 15,
        ..TrainConfig::default()
    };
    let (net, history) = fit(&spec, &train.to_labeled(Task::Regression)?, &config)?;
    if let EvalMetrics::Regression(r) = evaluate(&net, &test.to_labeled(Task::Regression)?)? {
        println!(
            "stopped at epoch {}: rmse {:.3}, mae {:.3}, r2 {:.3}",
            history.stopped_epoch, r.rmse, r.mae, r.r2
        );
    }
    Ok(())
}
