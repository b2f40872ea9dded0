//! The convergence experiment: random tied weights against trained stacked
//! auto-encoders, each relaxed from the feedforward state on the same inputs.

use std::fs;
use std::path::{Path, PathBuf};

use ffinit_core::{
    infer_from_feedforward, init_random_tied, synth_autoencodable, synth_blobs, train_stacked_ae,
    ConvergenceTrace, Dataset, LayerSpec, NetworkParams, RelaxationConfig, TrainLog,
};
use rayon::prelude::*;

use crate::config::{DatasetSpec, ExperimentSpec, Regime, MNIST_DIR_ENV};
use crate::error::{Error, Result};
use crate::idx::{load_idx_images, MNIST_TRAIN_IMAGES};

pub const TRACE_HEADER: [&str; 5] =
    ["iter", "step_mag_mean", "step_mag_min", "step_mag_max", "energy_mean"];
pub const SUMMARY_HEADER: [&str; 3] = ["regime", "metric", "value"];
pub const CURVE_HEADER: [&str; 4] = ["epoch", "pair", "reconstruction_error", "saturated_units"];

/// Name used in `summary.csv` for metrics that compare two regimes.
pub const COMPARISON: &str = "trained-ae-vs-random-tied";

/// Independent seeds for the parts of an experiment, derived from its master
/// seed with the SplitMix64 finalizer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Seeds {
    pub dataset: u64,
    pub train: u64,
    pub random_weights: u64,
    pub relaxation: u64,
}

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl Seeds {
    pub fn derive(master: u64) -> Self {
        let stream = |i: u64| mix(master ^ mix(i));
        Self {
            dataset: stream(1),
            train: stream(2),
            random_weights: stream(3),
            relaxation: stream(4),
        }
    }
}

/// Result of relaxing one input.
#[derive(Debug, Clone, PartialEq)]
pub struct InputResult {
    pub trace: ConvergenceTrace,
    /// Largest mutual prediction residual over layers at the feedforward state.
    pub initial_residual: f64,
    /// The same at the final state.
    pub final_residual: f64,
}

impl InputResult {
    pub fn initial_step(&self) -> f64 {
        self.trace.initial_step().unwrap_or(0.0)
    }
}

/// Aggregate of all traces at one sweep index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub iter: usize,
    pub step_mag_mean: f64,
    pub step_mag_min: f64,
    pub step_mag_max: f64,
    pub energy_mean: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegimeReport {
    pub name: String,
    /// Energy is tracked (and reported) only for transpose-tied networks.
    pub tied: bool,
    pub inputs: Vec<InputResult>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExperimentReport {
    pub regimes: Vec<RegimeReport>,
    pub training: Option<TrainLog>,
}

impl RegimeReport {
    /// Row `t` aggregates the inputs whose relaxation ran at least `t + 1`
    /// sweeps.
    pub fn rows(&self) -> Vec<TraceRow> {
        let len = self.inputs.iter().map(|r| r.trace.step_magnitudes.len()).max().unwrap_or(0);
        (0..len)
            .map(|t| {
                let steps: Vec<f64> = self
                    .inputs
                    .iter()
                    .filter_map(|r| r.trace.step_magnitudes.get(t).copied())
                    .collect();
                let energies: Vec<f64> = self
                    .inputs
                    .iter()
                    .filter_map(|r| r.trace.energies.as_ref().and_then(|e| e.get(t).copied()))
                    .collect();
                TraceRow {
                    iter: t,
                    step_mag_mean: mean(&steps),
                    step_mag_min: steps.iter().copied().fold(f64::INFINITY, f64::min),
                    step_mag_max: steps.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                    energy_mean: (self.tied && !energies.is_empty()).then(|| mean(&energies)),
                }
            })
            .collect()
    }

    pub fn summary(&self) -> Vec<(&'static str, f64)> {
        let initial: Vec<f64> = self.inputs.iter().map(InputResult::initial_step).collect();
        let iters: Vec<f64> = self.inputs.iter().map(|r| r.trace.iters_run as f64).collect();
        let converged = self.inputs.iter().filter(|r| r.trace.converged).count();
        let finals: Vec<f64> = self
            .inputs
            .iter()
            .map(|r| r.trace.step_magnitudes.last().copied().unwrap_or(0.0))
            .collect();
        let init_res: Vec<f64> = self.inputs.iter().map(|r| r.initial_residual).collect();
        let final_res: Vec<f64> = self.inputs.iter().map(|r| r.final_residual).collect();
        vec![
            ("n_inputs", self.inputs.len() as f64),
            ("initial_step_mean", mean(&initial)),
            ("initial_step_max", max(&initial)),
            ("iters_to_tol_mean", mean(&iters)),
            ("iters_to_tol_max", max(&iters)),
            ("converged_fraction", fraction(converged, self.inputs.len())),
            ("final_step_mean", mean(&finals)),
            ("initial_residual_mean", mean(&init_res)),
            ("final_residual_mean", mean(&final_res)),
            ("final_residual_max", max(&final_res)),
        ]
    }
}

/// Sweeps counted for comparisons; a run that never reached tolerance counts
/// as one more than it ran.
fn sweeps(r: &InputResult) -> usize {
    r.trace.iters_to_tol().unwrap_or(r.trace.iters_run + 1)
}

/// Metrics comparing the trained regime against the random one on the same
/// inputs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Comparison {
    /// Mean initial step of trained-ae over that of random-tied.
    pub initial_step_ratio: f64,
    /// Inputs where trained-ae has the smaller initial step.
    pub smaller_initial_step_fraction: f64,
    /// Inputs where trained-ae reaches tolerance in strictly fewer sweeps.
    pub fewer_sweeps_fraction: f64,
}

impl ExperimentReport {
    pub fn regime(&self, name: &str) -> Option<&RegimeReport> {
        self.regimes.iter().find(|r| r.name == name)
    }

    pub fn comparison(&self) -> Option<Comparison> {
        let ae = self.regime(Regime::TrainedAe.name())?;
        let rnd = self.regime(Regime::RandomTied.name())?;
        let n = ae.inputs.len().min(rnd.inputs.len());
        let pairs = ae.inputs.iter().zip(&rnd.inputs);
        let smaller = pairs.clone().filter(|(a, r)| a.initial_step() < r.initial_step()).count();
        let fewer = pairs.filter(|(a, r)| sweeps(a) < sweeps(r)).count();
        let mean_initial =
            |rep: &RegimeReport| mean(&rep.inputs.iter().map(InputResult::initial_step).collect::<Vec<_>>());
        Some(Comparison {
            initial_step_ratio: mean_initial(ae) / mean_initial(rnd),
            smaller_initial_step_fraction: fraction(smaller, n),
            fewer_sweeps_fraction: fraction(fewer, n),
        })
    }
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn max(xs: &[f64]) -> f64 {
    xs.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

fn fraction(count: usize, total: usize) -> f64 {
    if total == 0 {
        f64::NAN
    } else {
        count as f64 / total as f64
    }
}

/// Directory searched for MNIST when the config names none.
pub fn default_mnist_dir() -> Option<PathBuf> {
    std::env::var_os(MNIST_DIR_ENV).map(PathBuf::from)
}

/// Loads or generates the dataset. The second value is the generating
/// network for `autoencodable` data with `use_exact_params`.
pub fn load_dataset(
    spec: &DatasetSpec,
    sizes: &LayerSpec,
    seed: u64,
) -> Result<(Dataset, Option<NetworkParams>)> {
    let truncate = |data: Dataset, n: Option<usize>| match n {
        Some(n) if n < data.len() => data.head(n),
        _ => data,
    };
    match spec {
        DatasetSpec::Mnist { dir, n_items } => {
            let dir = dir.clone().or_else(default_mnist_dir).ok_or_else(|| {
                Error::MissingDataset(format!(
                    "no MNIST directory configured; set {MNIST_DIR_ENV} or dataset.dir to a \
                     directory containing {MNIST_TRAIN_IMAGES} (the tool never downloads)"
                ))
            })?;
            let path = dir.join(MNIST_TRAIN_IMAGES);
            if !path.is_file() {
                return Err(Error::MissingDataset(format!(
                    "{} not found; place the uncompressed MNIST training images there or point \
                     {MNIST_DIR_ENV} elsewhere (the tool never downloads)",
                    path.display()
                )));
            }
            Ok((truncate(load_idx_images(&path)?, *n_items), None))
        }
        DatasetSpec::Idx { path, n_items } => {
            if !path.is_file() {
                return Err(Error::MissingDataset(format!(
                    "{} not found; point dataset.path at an IDX image file",
                    path.display()
                )));
            }
            Ok((truncate(load_idx_images(path)?, *n_items), None))
        }
        DatasetSpec::Blobs { n_items, dim, n_clusters, spread } => {
            Ok((synth_blobs(*n_items, *dim, *n_clusters, *spread, seed)?, None))
        }
        DatasetSpec::Autoencodable { n_items, use_exact_params } => {
            let (data, params) = synth_autoencodable(*n_items, sizes, seed)?;
            Ok((data, use_exact_params.then_some(params)))
        }
    }
}

/// Rescales every weight pair of `params` so that `||W_k||_F` equals that of
/// `reference`. Tied networks stay tied.
pub fn match_norms(params: &mut NetworkParams, reference: &NetworkParams) {
    for k in 1..=params.depth() {
        let own = params.ff_weight(k).frobenius_norm();
        if own > 0.0 {
            params.scale_pair_weights(k, reference.ff_weight(k).frobenius_norm() / own);
        }
    }
}

/// Relaxes the first `n` items from their feedforward states. Inputs run in
/// parallel; input `i` gets relaxation seed `mix(cfg.seed ^ i)`.
pub fn evaluate(
    name: &str,
    params: &NetworkParams,
    data: &Dataset,
    n: usize,
    cfg: &RelaxationConfig,
) -> Result<RegimeReport> {
    let gains = params.gains();
    let tied = params.is_transpose_tied() && gains.bottom_up == gains.top_down;
    let base = RelaxationConfig {
        track_energy: tied,
        ..cfg.clone()
    };
    let inputs = data.items()[..n.min(data.len())]
        .par_iter()
        .enumerate()
        .map(|(i, x)| {
            let cfg = RelaxationConfig {
                seed: mix(base.seed ^ i as u64),
                ..base.clone()
            };
            let initial = params.feedforward_init(x)?;
            let initial_residual = max(&params.mutual_prediction_residual(&initial)?);
            let (state, trace) = infer_from_feedforward(params, x, &cfg)?;
            let final_residual = max(&params.mutual_prediction_residual(&state)?);
            Ok(InputResult {
                trace,
                initial_residual,
                final_residual,
            })
        })
        .collect::<std::result::Result<Vec<_>, ffinit_core::Error>>()?;
    Ok(RegimeReport {
        name: name.to_string(),
        tied,
        inputs,
    })
}

/// Trains (or takes) the regimes' networks and relaxes the evaluated inputs
/// under each. Nothing is written.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    spec.validate()?;
    let sizes = LayerSpec::new(spec.sizes.clone())?;
    let seeds = Seeds::derive(spec.seed);
    let (data, exact) = load_dataset(&spec.dataset, &sizes, seeds.dataset)?;
    if data.dim() != sizes.visible_dim() {
        return Err(Error::Config(format!(
            "dataset items have dimension {}, visible layer has {}",
            data.dim(),
            sizes.visible_dim()
        )));
    }
    if spec.n_inputs_evaluated > data.len() {
        return Err(Error::Config(format!(
            "n_inputs_evaluated {} exceeds dataset size {}",
            spec.n_inputs_evaluated,
            data.len()
        )));
    }
    let train_cfg = spec.train.to_config(seeds.train);
    let relax_cfg = spec.relaxation.to_config(seeds.relaxation);

    let mut report = ExperimentReport::default();
    let trained = if spec.regimes.contains(&Regime::TrainedAe) {
        Some(match exact {
            Some(params) => params,
            None => {
                let (params, log) = train_stacked_ae(&data, &sizes, &train_cfg)?;
                report.training = Some(log);
                params
            }
        })
    } else {
        None
    };

    for regime in &spec.regimes {
        let params = match regime {
            Regime::TrainedAe => trained.clone().expect("trained regime built above"),
            Regime::RandomTied => {
                let mut p = init_random_tied(
                    &sizes,
                    train_cfg.activation,
                    train_cfg.init_scale,
                    seeds.random_weights,
                );
                if let Some(reference) = &trained {
                    match_norms(&mut p, reference);
                }
                p
            }
        };
        report.regimes.push(evaluate(
            regime.name(),
            &params,
            &data,
            spec.n_inputs_evaluated,
            &relax_cfg,
        )?);
    }
    Ok(report)
}

fn fmt(x: f64) -> String {
    format!("{x}")
}

fn writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(file))
}

fn finish(mut w: csv::Writer<fs::File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes `<name>.csv` and `<name>_log10.csv` for one regime. The log file
/// holds `log10` of the step columns; energies are copied unchanged.
pub fn write_trace(report: &RegimeReport, dir: &Path) -> Result<()> {
    for log in [false, true] {
        let suffix = if log { "_log10" } else { "" };
        let path = dir.join(format!("{}{suffix}.csv", report.name));
        let mut w = writer(&path)?;
        w.write_record(TRACE_HEADER)?;
        let f = |x: f64| fmt(if log { x.log10() } else { x });
        for row in report.rows() {
            w.write_record([
                row.iter.to_string(),
                f(row.step_mag_mean),
                f(row.step_mag_min),
                f(row.step_mag_max),
                row.energy_mean.map(fmt).unwrap_or_default(),
            ])?;
        }
        finish(w, &path)?;
    }
    Ok(())
}

pub fn write_summary(report: &ExperimentReport, dir: &Path) -> Result<()> {
    let path = dir.join("summary.csv");
    let mut w = writer(&path)?;
    w.write_record(SUMMARY_HEADER)?;
    for regime in &report.regimes {
        for (metric, value) in regime.summary() {
            w.write_record([regime.name.as_str(), metric, &fmt(value)])?;
        }
    }
    if let Some(c) = report.comparison() {
        for (metric, value) in [
            ("initial_step_ratio", c.initial_step_ratio),
            ("smaller_initial_step_fraction", c.smaller_initial_step_fraction),
            ("fewer_sweeps_fraction", c.fewer_sweeps_fraction),
        ] {
            w.write_record([COMPARISON, metric, &fmt(value)])?;
        }
    }
    finish(w, &path)
}

pub fn write_training_curve(log: &TrainLog, path: &Path) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(CURVE_HEADER)?;
    for r in &log.records {
        w.write_record([
            r.epoch.to_string(),
            r.pair.to_string(),
            fmt(r.reconstruction_error),
            r.saturated_units.to_string(),
        ])?;
    }
    finish(w, path)
}

/// Writes every CSV of `report` into `dir`, creating it if needed.
pub fn emit_csv(report: &ExperimentReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for regime in &report.regimes {
        write_trace(regime, dir)?;
    }
    write_summary(report, dir)?;
    if let Some(log) = &report.training {
        write_training_curve(log, &dir.join("training_curve.csv"))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trace(steps: &[f64], energies: Option<&[f64]>, converged: bool) -> InputResult {
        InputResult {
            trace: ConvergenceTrace {
                step_magnitudes: steps.to_vec(),
                energies: energies.map(<[f64]>::to_vec),
                residuals: None,
                iters_run: steps.len(),
                converged,
            },
            initial_residual: 0.0,
            final_residual: 0.0,
        }
    }

    #[test]
    fn seeds_are_distinct_and_stable() {
        let s = Seeds::derive(7);
        assert_eq!(s, Seeds::derive(7));
        assert_ne!(s, Seeds::derive(8));
        let all = [s.dataset, s.train, s.random_weights, s.relaxation];
        for i in 0..4 {
            for j in 0..i {
                assert_ne!(all[i], all[j]);
            }
        }
    }

    #[test]
    fn rows_aggregate_active_traces() {
        let rep = RegimeReport {
            name: "r".into(),
            tied: true,
            inputs: vec![
                trace(&[4.0, 2.0, 1.0], Some(&[-1.0, -2.0, -3.0]), true),
                trace(&[2.0], Some(&[-5.0]), true),
            ],
        };
        let rows = rep.rows();
        assert_eq!(rows.len(), 3);
        assert_eq!((rows[0].step_mag_mean, rows[0].step_mag_min, rows[0].step_mag_max), (3.0, 2.0, 4.0));
        assert_eq!(rows[0].energy_mean, Some(-3.0));
        assert_eq!((rows[2].iter, rows[2].step_mag_mean, rows[2].energy_mean), (2, 1.0, Some(-3.0)));

        let untied = RegimeReport { tied: false, ..rep };
        assert!(untied.rows().iter().all(|r| r.energy_mean.is_none()));
    }

    #[test]
    fn comparison_counts_unconverged_runs_as_slowest() {
        let report = ExperimentReport {
            regimes: vec![
                RegimeReport {
                    name: "trained-ae".into(),
                    tied: false,
                    inputs: vec![trace(&[0.1, 0.0], None, true), trace(&[1.0; 3], None, false)],
                },
                RegimeReport {
                    name: "random-tied".into(),
                    tied: true,
                    inputs: vec![trace(&[1.0, 0.5, 0.0], None, true), trace(&[1.0; 3], None, true)],
                },
            ],
            training: None,
        };
        let c = report.comparison().unwrap();
        assert_eq!(c.fewer_sweeps_fraction, 0.5);
        assert_eq!(c.smaller_initial_step_fraction, 0.5);
        assert!((c.initial_step_ratio - 0.55).abs() < 1e-15);
    }

    #[test]
    fn empty_report_gives_header_only_files() {
        let dir = tempfile::tempdir().unwrap();
        let rep = RegimeReport { name: "random-tied".into(), tied: true, inputs: vec![] };
        write_trace(&rep, dir.path()).unwrap();
        for f in ["random-tied.csv", "random-tied_log10.csv"] {
            let text = fs::read_to_string(dir.path().join(f)).unwrap();
            assert_eq!(text, "iter,step_mag_mean,step_mag_min,step_mag_max,energy_mean\n");
        }
    }

    #[test]
    fn norm_matching_preserves_tie() {
        let spec = LayerSpec::new(vec![5, 4, 3]).unwrap();
        let reference = init_random_tied(&spec, ffinit_core::Activation::HardSigmoid, 3.0, 1);
        let mut p = init_random_tied(&spec, ffinit_core::Activation::HardSigmoid, 1.0, 2);
        match_norms(&mut p, &reference);
        assert!(p.is_transpose_tied());
        for k in 1..=2 {
            let (a, b) = (p.ff_weight(k).frobenius_norm(), reference.ff_weight(k).frobenius_norm());
            assert!((a - b).abs() <= 1e-12 * b);
        }
    }

    #[test]
    fn missing_mnist_has_remediation_hint() {
        let spec = DatasetSpec::Mnist { dir: Some("/nonexistent".into()), n_items: None };
        let sizes = LayerSpec::new(vec![784, 10]).unwrap();
        let err = load_dataset(&spec, &sizes, 0).unwrap_err();
        assert_eq!(err.exit_code(), 3);
        assert!(err.to_string().contains(MNIST_DIR_ENV));
    }
}
