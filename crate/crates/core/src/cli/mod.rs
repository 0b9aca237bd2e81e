//! The `litevr` command line: configuration, the pipeline stages and their
//! output files.
//!
//! Every stage reads the same [`PipelineConfig`] and recomputes the same
//! seeded train/test split, so `train`, `explain` and `reduce` can run as
//! separate invocations against one output directory.

mod commands;
mod svg;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::data::{
    load_csv, make_windows, normalize, read_cache, split_indices, synthesize, CsvSchema, NormStats, SyntheticSpec,
    WindowedDataset,
};
use crate::error::{Error, Result};
use crate::explain::{Estimator, RankConfig};
use crate::nn::Task;
use crate::reduce::{ModelKind, ReducedArchitecture, SelectionRule};
use crate::seed;
use crate::training::TrainConfig;

pub use commands::{cmd_explain, cmd_reduce, cmd_report, cmd_synth, cmd_train, TrainReport, TrainedModel};
pub use svg::importance_svg;

/// Environment variable capping the worker threads.
pub const THREADS_ENV: &str = "LITEVR_THREADS";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum EvalMode {
    /// One seeded train/test split.
    #[default]
    Split,
    /// Seeded k-fold cross-validation, in addition to the split model.
    Kfold,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorKind {
    #[default]
    Exact,
    Sampled,
}

/// Everything a pipeline run depends on. Loaded from JSON, then overridden
/// by flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// `.csv` sensor table or `.lvr1` window cache; `None` synthesizes.
    pub dataset: Option<PathBuf>,
    pub schema: CsvSchema,
    pub synthetic: SyntheticSpec,
    pub timesteps: usize,
    pub stride: usize,
    pub task: Task,
    pub models: Vec<ModelKind>,
    pub eval: EvalMode,
    /// Training share of the split.
    pub split_ratio: f64,
    pub train: TrainConfig,
    pub estimator: EstimatorKind,
    pub permutations: usize,
    pub rank: RankConfig,
    /// Test windows explained for the global ranking, evenly spaced; 0 means all.
    pub explain_samples: usize,
    /// Test windows written to `local.ndrecords`.
    pub local_samples: usize,
    /// Model whose explanations produce the ranking.
    pub ranking_model: ModelKind,
    pub selection: SelectionRule,
    pub reduced_architecture: ReducedArchitecture,
    pub inference_repeats: usize,
    pub out_dir: PathBuf,
    /// Overrides the seeds of `train`, `synthetic` and the estimator.
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            dataset: None,
            schema: CsvSchema::default(),
            synthetic: SyntheticSpec::default(),
            timesteps: 60,
            stride: 1,
            task: Task::Classification,
            models: vec![ModelKind::Lstm],
            eval: EvalMode::Split,
            split_ratio: 0.7,
            train: TrainConfig::default(),
            estimator: EstimatorKind::Exact,
            permutations: 200,
            rank: RankConfig::default(),
            explain_samples: 100,
            local_samples: 5,
            ranking_model: ModelKind::Lstm,
            selection: SelectionRule::Fraction(1.0 / 3.0),
            reduced_architecture: ReducedArchitecture::Reduced,
            inference_repeats: 3,
            out_dir: PathBuf::from("out"),
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn from_json_file(path: &Path) -> Result<PipelineConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Push `seed` down into every seeded part.
    pub fn propagate_seed(&mut self) {
        self.train.seed = self.seed;
        self.synthetic.seed = self.seed;
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if let Some(p) = &self.dataset {
            if !p.exists() {
                return bad(format!("dataset {} does not exist", p.display()));
            }
        } else {
            self.synthetic.validate()?;
        }
        if self.timesteps == 0 || self.stride == 0 {
            return bad("timesteps and stride must be positive".into());
        }
        if self.models.is_empty() {
            return bad("no model kinds selected".into());
        }
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return bad(format!("split_ratio {} outside (0, 1)", self.split_ratio));
        }
        if self.permutations == 0 {
            return bad("permutations must be at least 1".into());
        }
        self.train.validate()
    }

    pub fn estimator(&self) -> Estimator {
        match self.estimator {
            EstimatorKind::Exact => Estimator::Exact,
            EstimatorKind::Sampled => Estimator::Sampled {
                n_permutations: self.permutations,
                seed: seed::derive(self.seed, &[30]),
            },
        }
    }

    /// Hash of the canonical JSON form, without `out_dir`. Embedded in every
    /// output file.
    pub fn config_hash(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Some(m) = v.as_object_mut() {
            m.remove("out_dir");
        }
        format!("{:016x}", seed::hash_bytes(v.to_string().as_bytes()))
    }

    pub(crate) fn out(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }
}

/// Windows of the configured dataset, not yet normalized.
pub fn load_windows(config: &PipelineConfig) -> Result<WindowedDataset> {
    match &config.dataset {
        None => make_windows(&synthesize(&config.synthetic)?, config.timesteps, config.stride),
        Some(p) => {
            if !p.exists() {
                return Err(Error::Config(format!("dataset {} does not exist", p.display())));
            }
            let ext = p.extension().and_then(|e| e.to_str()).unwrap_or("");
            if ext.eq_ignore_ascii_case("lvr1") {
                let w = read_cache(std::io::BufReader::new(std::fs::File::open(p)?))?;
                if w.timesteps() != config.timesteps {
                    return Err(Error::Config(format!(
                        "cache holds {}-step windows, config asks for {}",
                        w.timesteps(),
                        config.timesteps
                    )));
                }
                Ok(w)
            } else {
                make_windows(&load_csv(p, &config.schema)?, config.timesteps, config.stride)
            }
        }
    }
}

/// The seeded split, min-max scaled with training statistics.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub train: WindowedDataset,
    pub test: WindowedDataset,
    pub stats: NormStats,
    /// The raw windows before splitting.
    pub all: WindowedDataset,
}

pub fn prepare(config: &PipelineConfig) -> Result<PreparedData> {
    let all = load_windows(config)?;
    let (tr, te) = split_indices(all.len(), config.split_ratio, seed::derive(config.seed, &[20]))?;
    let train = all.select(&tr);
    let stats = NormStats::fit(&train)?;
    Ok(PreparedData {
        train: normalize(&train, &stats)?,
        test: normalize(&all.select(&te), &stats)?,
        stats,
        all,
    })
}

#[derive(Debug, Parser)]
#[command(name = "litevr", version, about = "Explanation-guided feature reduction for small sequence models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub flags: Flags,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic sensor table.
    Synth,
    /// Train the selected model kinds on all features.
    Train,
    /// Rank features of a trained model by mean |Shapley value|.
    Explain {
        /// Model file; defaults to `model_<ranking_model>.lvrm` in the output directory.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Retrain on the top-ranked features and compare.
    Reduce {
        /// Ranking file; defaults to `ranking.csv` in the output directory.
        #[arg(long)]
        ranking: Option<PathBuf>,
    },
    /// Summarize the files in the output directory.
    Report,
}

#[derive(Debug, Default, Args)]
pub struct Flags {
    /// JSON pipeline configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// lstm, gru, mlp, all, or a comma list.
    #[arg(long, global = true)]
    pub model: Option<String>,
    #[arg(long, global = true, value_enum)]
    pub eval: Option<EvalMode>,
    #[arg(long, global = true)]
    pub folds: Option<usize>,
    #[arg(long, global = true, value_enum)]
    pub estimator: Option<EstimatorKind>,
    #[arg(long, global = true)]
    pub permutations: Option<usize>,
    #[arg(long, global = true, conflicts_with = "select_fraction")]
    pub select_count: Option<usize>,
    #[arg(long, global = true)]
    pub select_fraction: Option<f64>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// `.csv` or `.lvr1` input instead of synthetic data.
    #[arg(long, global = true)]
    pub dataset: Option<PathBuf>,
    #[arg(long, global = true)]
    pub epochs: Option<usize>,
    #[arg(long, global = true)]
    pub timesteps: Option<usize>,
    #[arg(long, global = true)]
    pub task: Option<TaskArg>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum TaskArg {
    Classification,
    Regression,
}

impl Flags {
    /// Config file (or defaults) with the flags applied and the seed propagated.
    pub fn resolve(&self) -> Result<PipelineConfig> {
        let mut c = match &self.config {
            Some(p) => PipelineConfig::from_json_file(p)?,
            None => PipelineConfig::default(),
        };
        if let Some(s) = self.seed {
            c.seed = s;
        }
        if let Some(m) = &self.model {
            c.models = ModelKind::parse_list(m)?;
            if c.models.len() == 1 {
                c.ranking_model = c.models[0];
            }
        }
        if let Some(e) = self.eval {
            c.eval = e;
        }
        if let Some(k) = self.folds {
            c.train.folds = k;
        }
        if let Some(e) = self.estimator {
            c.estimator = e;
        }
        if let Some(n) = self.permutations {
            c.permutations = n;
        }
        if let Some(k) = self.select_count {
            c.selection = SelectionRule::Count(k);
        }
        if let Some(f) = self.select_fraction {
            c.selection = SelectionRule::Fraction(f);
        }
        if let Some(o) = &self.out {
            c.out_dir = o.clone();
        }
        if let Some(d) = &self.dataset {
            c.dataset = Some(d.clone());
        }
        if let Some(e) = self.epochs {
            c.train.epochs = e;
        }
        if let Some(t) = self.timesteps {
            c.timesteps = t;
        }
        if let Some(t) = self.task {
            c.task = match t {
                TaskArg::Classification => Task::Classification,
                TaskArg::Regression => Task::Regression,
            };
        }
        c.propagate_seed();
        Ok(c)
    }
}

fn init_threads() {
    if let Some(n) = std::env::var(THREADS_ENV).ok().and_then(|v| v.parse::<usize>().ok()) {
        // a second call in the same process fails harmlessly
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
}

/// Parse `args` (including the program name), run, and return the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    init_threads();
    match execute(&cli) {
        Ok(lines) => {
            for l in lines {
                println!("{l}");
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Run a parsed command; returns the lines to print.
pub fn execute(cli: &Cli) -> Result<Vec<String>> {
    let config = cli.flags.resolve()?;
    match &cli.command {
        Command::Synth => cmd_synth(&config).map(|p| vec![format!("wrote {}", p.display())]),
        Command::Train => cmd_train(&config).map(|r| r.summary_lines()),
        Command::Explain { model } => cmd_explain(&config, model.as_deref()).map(|r| {
            r.entries
                .iter()
                .take(10)
                .map(|e| format!("{:>3}. {} {:.6}", e.rank, e.name, e.importance))
                .collect()
        }),
        Command::Reduce { ranking } => cmd_reduce(&config, ranking.as_deref()).map(|r| r.summary_lines()),
        Command::Report => cmd_report(&config),
    }
}
