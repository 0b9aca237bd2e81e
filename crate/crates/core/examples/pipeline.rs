//! The command line stages driven from code, against a temporary directory.
//!
//!     cargo run --release --example pipeline
//!
//! Same as `litevr synth`, `train`, `explain`, `reduce` and `report` with
//! the printed config passed as `--config`.

use litevr::cli::{cmd_explain, cmd_reduce, cmd_report, cmd_synth, cmd_train, PipelineConfig};
use litevr::reduce::ModelKind;

fn main() -> litevr::Result<()> {
    let mut config = PipelineConfig {
        timesteps: 10,
        models: vec![ModelKind::Mlp],
        ranking_model: ModelKind::Mlp,
        explain_samples: 50,
        out_dir: std::env::temp_dir().join("litevr-pipeline"),
        seed: 11,
        ..PipelineConfig::default()
    };
    config.train.epochs = 40;
    config.train.batch_size = 64;
    config.train.lr = 0.005;
    config.train.patience = 8;
    config.propagate_seed();
    println!("{}", serde_json::to_string_pretty(&config)?);

    println!("wrote {}", cmd_synth(&config)?.display());
    for line in cmd_train(&config)?.summary_lines() {
        println!("{line}");
    }
    let ranking = cmd_explain(&config, None)?;
    println!("top features: {:?}", &ranking.order()[..4]);
    for line in cmd_reduce(&config, None)?.summary_lines() {
        println!("{line}");
    }
    println!("{}", cmd_report(&config)?.join("\n"));
    Ok(())
}
