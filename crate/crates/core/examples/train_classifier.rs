//! Synthetic sensor stream to a trained severity classifier.
//!
//!     cargo run --release --example train_classifier

use litevr::data::{make_windows, normalize, split_train_test, synthesize, NormStats, SyntheticSpec};
use litevr::metrics::EvalMetrics;
use litevr::nn::Task;
use litevr::reduce::{reduced_spec, ModelKind};
use litevr::training::{evaluate, fit, TrainConfig};

fn main() -> litevr::Result<()> {
    let raw = synthesize(&SyntheticSpec::default())?;
    let windows = make_windows(&raw, 10, 1)?;
    let (train, test) = split_train_test(&windows, 0.7, 0)?;
    let stats = NormStats::fit(&train)?;
    let (train, test) = (normalize(&train, &stats)?, normalize(&test, &stats)?);
    println!("{} train / {} test windows of {}x{}", train.len(), test.len(), train.timesteps(), train.n_features());

    let spec = reduced_spec(ModelKind::Lstm, train.n_features(), train.timesteps(), Task::Classification);
    let config = TrainConfig {
        epochs: 40,
        batch_size: 64,
        lr: 0.005,
        patience: 8,
        ..TrainConfig::default()
    };
    let (net, history) = fit(&spec, &train.to_labeled(Task::Classification)?, &config)?;
    println!(
        "{} params, best epoch {} of {}, {:.1}s",
        net.parameter_count(),
        history.best_epoch,
        history.stopped_epoch,
        history.wall_clock_seconds
    );
    if let EvalMetrics::Classification(r) = evaluate(&net, &test.to_labeled(Task::Classification)?)? {
        println!("accuracy {:.3}, macro F1 {:.3}", r.accuracy, r.macro_f1);
        for c in &r.classes {
            println!("  {:<7} p {:.3} r {:.3} f1 {:.3} n {}", c.name, c.precision, c.recall, c.f1, c.support);
        }
        println!("confusion (rows = truth): {:?}", r.confusion.counts);
    }
    Ok(())
}
