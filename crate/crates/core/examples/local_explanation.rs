//! Per-class attributions for single windows, as JSON lines.
//!
//!     cargo run --release --example local_explanation

use litevr::data::{make_windows, normalize, split_train_test, synthesize, NormStats, SyntheticSpec};
use litevr::explain::{build_background, local_explanation, write_local_records, Estimator, RankConfig};
use litevr::nn::Task;
use litevr::reduce::{full_spec, ModelKind};
use litevr::training::{fit, TrainConfig};

fn main() -> litevr::Result<()> {
    let windows = make_windows(&synthesize(&SyntheticSpec::default())?, 10, 1)?;
    let (train, test) = split_train_test(&windows, 0.7, 0)?;
    let stats = NormStats::fit(&train)?;
    let (train, test) = (normalize(&train, &stats)?, normalize(&test, &stats)?);
    let spec = full_spec(ModelKind::Mlp, train.n_features(), train.timesteps(), Task::Classification);
    let config = TrainConfig {
        epochs: 40,
        batch_size: 64,
        lr: 0.005,
        patience: 8,
        ..TrainConfig::default()
    };
    let (net, _) = fit(&spec, &train.to_labeled(Task::Classification)?, &config)?;

    // average over 16 training windows instead of the mean alone
    let bg = build_background(
        &train.windows,
        &RankConfig {
            background_windows: 16,
            ..RankConfig::default()
        },
    )?;
    let estimator = Estimator::Sampled {
        n_permutations: 200,
        seed: 1,
    };
    let explanations = [0, 7]
        .iter()
        .map(|&i| local_explanation(&net, test.windows.window(i), &bg, estimator, i))
        .collect::<litevr::Result<Vec<_>>>()?;
    for e in &explanations {
        let a = &e.attributions[e.predicted];
        println!(
            "window {}: predicted {}, truth {}, sum(phi) {:.4} = f {:.4} - base {:.4}",
            e.sample_id,
            e.predicted,
            test.labels[e.sample_id].name(),
            a.phi.iter().sum::<f64>(),
            a.value,
            a.base_value
        );
    }
    write_local_records(&explanations, &train.feature_names, None, std::io::stdout().lock())
}
