use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ffinit::config::{DatasetSpec, ExperimentSpec, Regime, RelaxationSpec, TrainSpec};
use ffinit::core::{synth_autoencodable, synth_blobs, train_stacked_ae, LayerSpec, Optimizer, TrainRule};
use ffinit::harness::{self, Seeds};
use ffinit::{checkpoint, idx, Error, Result};

/// Feedforward-initialized relaxation in layered recurrent networks.
#[derive(Parser)]
#[command(name = "ffinit", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the stacked auto-encoder of a config; writes model.json and
    /// training_curve.csv.
    Train(Common),
    /// Relax the config's evaluated inputs under a saved checkpoint; writes
    /// infer.csv, infer_log10.csv and summary.csv.
    Infer {
        #[command(flatten)]
        common: Common,
        /// Checkpoint written by `train`.
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Run every regime of a config and write its CSV report.
    Experiment(Common),
    /// Write small example inputs: IDX files, configs and a checkpoint.
    MakeFixtures {
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    /// TOML experiment config.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; defaults to the config's output_dir.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn load(&self) -> Result<(ExperimentSpec, PathBuf)> {
        let mut spec = ExperimentSpec::load(&self.config)?;
        if let Some(seed) = self.seed {
            spec.seed = seed;
        }
        let out = self.out.clone().unwrap_or_else(|| spec.output_dir.clone());
        fs::create_dir_all(&out).map_err(|e| Error::Io { path: out.clone(), source: e })?;
        Ok((spec, out))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ffinit: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Experiment(common) => {
            let (spec, out) = common.load()?;
            let report = harness::run_experiment(&spec)?;
            harness::emit_csv(&report, &out)
        }
        Command::Train(common) => {
            let (spec, out) = common.load()?;
            let sizes = LayerSpec::new(spec.sizes.clone())?;
            let seeds = Seeds::derive(spec.seed);
            let (data, _) = harness::load_dataset(&spec.dataset, &sizes, seeds.dataset)?;
            let (params, log) = train_stacked_ae(&data, &sizes, &spec.train.to_config(seeds.train))?;
            checkpoint::save(&params, &out.join("model.json"))?;
            harness::write_training_curve(&log, &out.join("training_curve.csv"))
        }
        Command::Infer { common, checkpoint: path } => {
            let (spec, out) = common.load()?;
            let params = checkpoint::load(&path)?;
            if params.spec().sizes() != spec.sizes.as_slice() {
                return Err(Error::Config(format!(
                    "checkpoint sizes {:?} differ from config sizes {:?}",
                    params.spec().sizes(),
                    spec.sizes
                )));
            }
            let seeds = Seeds::derive(spec.seed);
            let (data, _) = harness::load_dataset(&spec.dataset, params.spec(), seeds.dataset)?;
            if spec.n_inputs_evaluated > data.len() {
                return Err(Error::Config(format!(
                    "n_inputs_evaluated {} exceeds dataset size {}",
                    spec.n_inputs_evaluated,
                    data.len()
                )));
            }
            let cfg = spec.relaxation.to_config(seeds.relaxation);
            let regime = harness::evaluate("infer", &params, &data, spec.n_inputs_evaluated, &cfg)?;
            harness::write_trace(&regime, &out)?;
            let report = harness::ExperimentReport { regimes: vec![regime], training: None };
            harness::write_summary(&report, &out)
        }
        Command::MakeFixtures { seed, out } => make_fixtures(seed.unwrap_or(0), &out),
    }
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::Io { path: path.to_path_buf(), source: e })
}

fn make_fixtures(seed: u64, out: &Path) -> Result<()> {
    fs::create_dir_all(out).map_err(|e| Error::Io { path: out.to_path_buf(), source: e })?;

    let tiny = vec![vec![0.0, 1.0, 128.0 / 255.0, 0.0], vec![1.0, 1.0, 0.0, 0.0]];
    write(&out.join("tiny-idx3-ubyte"), idx::encode_idx_images(&tiny, 2, 2))?;

    // A stand-in for the MNIST training file: quantized blobs on a 28x28 grid.
    let blobs = synth_blobs(200, 784, 10, 0.05, seed)?;
    write(&out.join(idx::MNIST_TRAIN_IMAGES), idx::encode_idx_images(blobs.items(), 28, 28))?;

    let sizes = LayerSpec::new(vec![8, 6, 5, 4])?;
    let (_, exact) = synth_autoencodable(50, &sizes, seed)?;
    checkpoint::save(&exact, &out.join("exact-ae.json"))?;

    let quick = ExperimentSpec {
        dataset: DatasetSpec::Autoencodable { n_items: 50, use_exact_params: true },
        sizes: sizes.sizes().to_vec(),
        regimes: vec![Regime::RandomTied, Regime::TrainedAe],
        relaxation: RelaxationSpec::default(),
        train: TrainSpec::default(),
        n_inputs_evaluated: 50,
        output_dir: "quick-out".into(),
        seed,
    };
    write(&out.join("quick.toml"), quick.to_toml())?;

    let figure = ExperimentSpec {
        dataset: DatasetSpec::Blobs { n_items: 2000, dim: 784, n_clusters: 10, spread: 0.05 },
        sizes: vec![784, 500, 500, 500],
        regimes: vec![Regime::RandomTied, Regime::TrainedAe],
        relaxation: RelaxationSpec::default(),
        train: figure_train_spec(),
        n_inputs_evaluated: 2000,
        output_dir: "figure-out".into(),
        seed,
    };
    write(&out.join("figure.toml"), figure.to_toml())
}

/// Training settings of the desk-scale convergence figure.
fn figure_train_spec() -> TrainSpec {
    TrainSpec {
        rule: TrainRule::LocalBranch,
        optimizer: Optimizer::adam(),
        encoder_epochs: 5,
        encoder_learning_rate: 3e-3,
        batch_size: 8,
        epochs: 5,
        learning_rate: 2e-3,
        ..TrainSpec::default()
    }
}
