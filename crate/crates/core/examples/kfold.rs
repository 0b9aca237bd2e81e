//! Ten-fold cross-validation, each fold scaled with its own training statistics.
//!
//!     cargo run --release --example kfold

use litevr::data::{make_windows, synthesize, SyntheticSpec};
use litevr::nn::Task;
use litevr::reduce::{full_spec, ModelKind};
use litevr::training::{kfold_evaluate_windows, TrainConfig};

fn main() -> litevr::Result<()> {
    let windows = make_windows(&synthesize(&SyntheticSpec::default())?, 10, 1)?;
    let spec = full_spec(ModelKind::Mlp, windows.n_features(), windows.timesteps(), Task::Classification);
    for group_by_session in [false, true] {
        let config = TrainConfig {
            epochs: 30,
            batch_size: 64,
            lr: 0.005,
            patience: 8,
            group_by_session,
            ..TrainConfig::default()
        };
        let report = kfold_evaluate_windows(&spec, &windows, Task::Classification, &config)?;
        let accs: Vec<String> = report
            .folds
            .iter()
            .map(|f| format!("{:.2}", f.metrics.headline()))
            .collect();
        println!(
            "{}: mean accuracy {:.3} [{}]",
            if group_by_session { "by session" } else { "by window " },
            report.mean.headline(),
            accs.join(" ")
        );
    }
    Ok(())
}
