//! Weight regimes: random transpose-tied weights and greedy stacked
//! auto-encoders, plus the local error-correcting rule for a dendritic branch.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::Dataset;
use crate::error::{check_len, Error, Result};
use crate::linalg::{axpy, dot, gemm, Matrix};
use crate::network::{Activation, LayerSpec, NetworkParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TrainRule {
    /// Exact gradient of the pair's reconstruction loss through decoder and
    /// encoder.
    AeGradient,
    /// Decoder trained online with [`local_branch_update`] to predict the
    /// lower layer's state. The encoder keeps its initial weights unless
    /// `encoder_epochs` of exact-gradient training run first.
    LocalBranch,
}

impl TrainRule {
    pub fn name(self) -> &'static str {
        match self {
            TrainRule::AeGradient => "ae-gradient",
            TrainRule::LocalBranch => "local-branch",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "ae-gradient" => Some(TrainRule::AeGradient),
            "local-branch" => Some(TrainRule::LocalBranch),
            _ => None,
        }
    }
}

/// Update rule applied to the exact auto-encoder gradient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Optimizer {
    /// Plain mini-batch gradient descent.
    Sgd,
    /// Adam with bias-corrected moment estimates.
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Optimizer {
    pub fn adam() -> Self {
        Optimizer::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Optimizer::Sgd => "sgd",
            Optimizer::Adam { .. } => "adam",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "sgd" => Some(Optimizer::Sgd),
            "adam" => Some(Optimizer::adam()),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub rule: TrainRule,
    /// Keep `V_k = W_k^T` throughout training.
    pub tie_decoder: bool,
    pub init_scale: f64,
    /// Initial value of every branch offset before training. The middle of
    /// the hard sigmoid's linear region keeps units out of the dead zone.
    pub init_offset: f64,
    pub seed: u64,
    pub activation: Activation,
    pub optimizer: Optimizer,
    /// Exact-gradient epochs run on each pair before its local-branch
    /// epochs. Ignored by [`TrainRule::AeGradient`].
    pub encoder_epochs: usize,
    /// Learning rate of those encoder epochs.
    pub encoder_learning_rate: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.05,
            epochs: 20,
            batch_size: 32,
            rule: TrainRule::AeGradient,
            tie_decoder: false,
            init_scale: 1.0,
            init_offset: 0.5,
            seed: 0,
            activation: Activation::HardSigmoid,
            optimizer: Optimizer::Sgd,
            encoder_epochs: 0,
            encoder_learning_rate: 1e-3,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Config(format!(
                "learning_rate must be finite and non-negative, got {}",
                self.learning_rate
            )));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch_size must be positive".into()));
        }
        if !(self.init_scale >= 0.0) || !self.init_scale.is_finite() {
            return Err(Error::Config(format!("invalid init_scale {}", self.init_scale)));
        }
        if !(self.encoder_learning_rate >= 0.0) || !self.encoder_learning_rate.is_finite() {
            return Err(Error::Config(format!(
                "invalid encoder_learning_rate {}",
                self.encoder_learning_rate
            )));
        }
        if !self.init_offset.is_finite() {
            return Err(Error::Config(format!("invalid init_offset {}", self.init_offset)));
        }
        Ok(())
    }
}

/// Reconstruction error of one layer pair after one epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    /// 0 is the error before any update.
    pub epoch: usize,
    /// Lower layer of the pair, `0..L`.
    pub pair: usize,
    pub reconstruction_error: f64,
    /// Hidden units whose encoder pre-activation stayed saturated for every
    /// item seen during the epoch (0 for the epoch-0 record).
    pub saturated_units: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainLog {
    pub records: Vec<EpochRecord>,
}

/// Random weights with feedback tied to the transpose of the feedforward
/// weights. Entries of `W_k` are uniform in `[-s/sqrt(n_{k-1}), s/sqrt(n_{k-1})]`
/// and all offsets are zero.
pub fn init_random_tied(
    spec: &LayerSpec,
    activation: Activation,
    init_scale: f64,
    seed: u64,
) -> NetworkParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = NetworkParams::zeros(spec.clone(), activation);
    for k in 1..=spec.depth() {
        let fan_in = spec.size(k - 1);
        let bound = init_scale / libm::sqrt(fan_in as f64);
        let w = Matrix::from_fn(spec.size(k), fan_in, |_, _| {
            bound * (2.0 * rng.random::<f64>() - 1.0)
        });
        *params.fb_weight_mut(k) = w.transpose();
        *params.ff_weight_mut(k) = w;
    }
    params
}

/// Starting point of [`train_stacked_ae`]: [`init_random_tied`] with every
/// offset set to `cfg.init_offset`.
pub fn training_init(spec: &LayerSpec, cfg: &TrainConfig) -> NetworkParams {
    let mut params = init_random_tied(spec, cfg.activation, cfg.init_scale, cfg.seed);
    for k in 1..=spec.depth() {
        params.ff_offset_mut(k).fill(cfg.init_offset);
        params.fb_offset_mut(k).fill(cfg.init_offset);
    }
    params
}

/// Error-correcting update of one dendritic branch of one unit.
///
/// The branch predicts `d = offset + w . rates`; the update moves `w` by
/// `lr (soma - d) rates` and the offset by `lr (soma - d)`, which is a
/// gradient step of size `lr` on `1/2 (soma - d)^2`.
pub fn local_branch_update(
    weights: &[f64],
    offset: f64,
    soma: f64,
    presyn_rates: &[f64],
    lr: f64,
) -> (Vec<f64>, f64) {
    let d = offset + dot(weights, presyn_rates);
    let err = lr * (soma - d);
    let mut w = weights.to_vec();
    axpy(err, presyn_rates, &mut w);
    (w, offset + err)
}

/// Encoder output of pair `k` (into layer `k`) for a lower-layer state.
fn encode(params: &NetworkParams, below: &[f64], k: usize) -> Result<Vec<f64>> {
    let mut h = params.bottom_up(below, k)?;
    params.activation().map_in_place(&mut h);
    Ok(h)
}

/// `rho(top_down(encode(x)))`: the reconstruction of a layer-`k-1` state by
/// pair `k`.
fn reconstruct(params: &NetworkParams, below: &[f64], k: usize) -> Result<Vec<f64>> {
    let h = encode(params, below, k)?;
    let mut r = params.top_down(&h, k - 1)?;
    params.activation().map_in_place(&mut r);
    Ok(r)
}

fn pair_error(params: &NetworkParams, codes: &[Vec<f64>], k: usize) -> Result<f64> {
    if codes.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for x in codes {
        let r = reconstruct(params, x, k)?;
        total += x.iter().zip(&r).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    }
    Ok(total / codes.len() as f64)
}

/// States of layer `k` obtained by the feedforward sweep on every item.
fn layer_codes(params: &NetworkParams, data: &Dataset, k: usize) -> Result<Vec<Vec<f64>>> {
    let mut codes: Vec<Vec<f64>> = data.items().to_vec();
    for j in 1..=k {
        codes = codes
            .iter()
            .map(|x| encode(params, x, j))
            .collect::<Result<_>>()?;
    }
    Ok(codes)
}

/// Mean squared reconstruction error of layer `k`'s feedforward states by
/// pair `(k, k+1)`, for `0 <= k < L`. Layer 0 is the raw data.
pub fn reconstruction_error(params: &NetworkParams, data: &Dataset, k: usize) -> Result<f64> {
    if k >= params.depth() {
        return Err(Error::LayerIndex {
            index: k,
            max: params.depth() - 1,
        });
    }
    check_len("dataset dimension", params.spec().visible_dim(), data.dim())?;
    let codes = layer_codes(params, data, k)?;
    pair_error(params, &codes, k + 1)
}

/// Greedy bottom-up training of a stack of auto-encoders.
///
/// Pair `k` is trained on the states of layer `k-1` produced by the already
/// trained (and frozen) lower pairs. Parameters start from
/// [`training_init`]. Epoch numbers in the log run on from the encoder epochs
/// into the local-branch epochs.
pub fn train_stacked_ae(
    data: &Dataset,
    spec: &LayerSpec,
    cfg: &TrainConfig,
) -> Result<(NetworkParams, TrainLog)> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::InvalidInput("cannot train on an empty dataset".into()));
    }
    check_len("dataset dimension", spec.visible_dim(), data.dim())?;
    if cfg.batch_size > data.len() {
        return Err(Error::Config(format!(
            "batch_size {} exceeds dataset size {}",
            cfg.batch_size,
            data.len()
        )));
    }

    let mut params = training_init(spec, cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let mut log = TrainLog::default();
    let mut codes: Vec<Vec<f64>> = data.items().to_vec();
    let mut order: Vec<usize> = (0..codes.len()).collect();

    for k in 1..=spec.depth() {
        log.records.push(EpochRecord {
            epoch: 0,
            pair: k - 1,
            reconstruction_error: pair_error(&params, &codes, k)?,
            saturated_units: 0,
        });
        let (gradient_epochs, gradient_lr) = match cfg.rule {
            TrainRule::AeGradient => (cfg.epochs, cfg.learning_rate),
            TrainRule::LocalBranch => (cfg.encoder_epochs, cfg.encoder_learning_rate),
        };
        let branch_epochs = match cfg.rule {
            TrainRule::AeGradient => 0,
            TrainRule::LocalBranch => cfg.epochs,
        };
        let mut optimizer =
            PairOptimizer::new(cfg.optimizer, gradient_lr, spec.size(k), spec.size(k - 1));
        for epoch in 1..=gradient_epochs + branch_epochs {
            order.shuffle(&mut rng);
            let mut active = vec![false; spec.size(k)];
            if epoch <= gradient_epochs {
                for batch in order.chunks(cfg.batch_size) {
                    let grad = ae_gradient(&params, &codes, batch, k, cfg.tie_decoder, &mut active)?;
                    optimizer.apply(&mut params, &grad, k, cfg.tie_decoder);
                }
            } else {
                for &i in &order {
                    local_branch_step(&mut params, &codes[i], k, cfg.learning_rate, &mut active)?;
                }
            }
            let err = pair_error(&params, &codes, k)?;
            if !err.is_finite() {
                return Err(Error::Divergence { epoch, pair: k - 1 });
            }
            log.records.push(EpochRecord {
                epoch,
                pair: k - 1,
                reconstruction_error: err,
                saturated_units: active.iter().filter(|a| !**a).count(),
            });
        }
        if k < spec.depth() {
            codes = codes
                .iter()
                .map(|x| encode(&params, x, k))
                .collect::<Result<_>>()?;
        }
    }
    let last_epoch = match cfg.rule {
        TrainRule::AeGradient => cfg.epochs,
        TrainRule::LocalBranch => cfg.encoder_epochs + cfg.epochs,
    };
    params.validate().map_err(|_| Error::Divergence {
        epoch: last_epoch,
        pair: spec.depth() - 1,
    })?;
    Ok((params, log))
}

/// Gradients of one layer pair, laid out like its parameters.
struct PairGrad {
    w: Matrix,
    v: Matrix,
    b: Vec<f64>,
    c: Vec<f64>,
}

impl PairGrad {
    fn zeros(n_hidden: usize, n_in: usize) -> Self {
        Self {
            w: Matrix::zeros(n_hidden, n_in),
            v: Matrix::zeros(n_in, n_hidden),
            b: vec![0.0; n_hidden],
            c: vec![0.0; n_in],
        }
    }
}

/// First and second moment estimates for Adam, one buffer per parameter block.
struct AdamMoments {
    first: PairGrad,
    second: PairGrad,
    steps: i32,
}

/// Optimizer state for the pair currently being trained.
struct PairOptimizer {
    kind: Optimizer,
    lr: f64,
    adam: Option<AdamMoments>,
}

impl PairOptimizer {
    fn new(kind: Optimizer, lr: f64, n_hidden: usize, n_in: usize) -> Self {
        let adam = matches!(kind, Optimizer::Adam { .. }).then(|| AdamMoments {
            first: PairGrad::zeros(n_hidden, n_in),
            second: PairGrad::zeros(n_hidden, n_in),
            steps: 0,
        });
        Self { kind, lr, adam }
    }

    /// Applies a descent step for `grad` to pair `k`.
    fn apply(&mut self, params: &mut NetworkParams, grad: &PairGrad, k: usize, tied: bool) {
        match (self.kind, self.adam.as_mut()) {
            (Optimizer::Adam { beta1, beta2, eps }, Some(m)) => {
                m.steps += 1;
                let c1 = 1.0 - libm::pow(beta1, m.steps as f64);
                let c2 = 1.0 - libm::pow(beta2, m.steps as f64);
                let (lr, inv_c2) = (self.lr / c1, 1.0 / c2);
                let step = |p: &mut [f64], g: &[f64], m1: &mut [f64], m2: &mut [f64]| {
                    for (((p, &g), a), b) in p.iter_mut().zip(g).zip(m1).zip(m2) {
                        *a = beta1 * *a + (1.0 - beta1) * g;
                        *b = beta2 * *b + (1.0 - beta2) * g * g;
                        *p -= lr * *a / (libm::sqrt(*b * inv_c2) + eps);
                    }
                };
                step(
                    params.ff_weight_mut(k).as_mut_slice(),
                    grad.w.as_slice(),
                    m.first.w.as_mut_slice(),
                    m.second.w.as_mut_slice(),
                );
                step(params.ff_offset_mut(k), &grad.b, &mut m.first.b, &mut m.second.b);
                step(params.fb_offset_mut(k), &grad.c, &mut m.first.c, &mut m.second.c);
                if !tied {
                    step(
                        params.fb_weight_mut(k).as_mut_slice(),
                        grad.v.as_slice(),
                        m.first.v.as_mut_slice(),
                        m.second.v.as_mut_slice(),
                    );
                }
            }
            _ => {
                let step = -self.lr;
                axpy(step, grad.w.as_slice(), params.ff_weight_mut(k).as_mut_slice());
                axpy(step, &grad.b, params.ff_offset_mut(k));
                axpy(step, &grad.c, params.fb_offset_mut(k));
                if !tied {
                    axpy(step, grad.v.as_slice(), params.fb_weight_mut(k).as_mut_slice());
                }
            }
        }
        if tied {
            *params.fb_weight_mut(k) = params.ff_weight(k).transpose();
        }
    }
}

/// Mean gradient over `batch` of `|x - rho(c + V rho(rho(W rho(x) + b)))|^2`.
fn ae_gradient(
    params: &NetworkParams,
    codes: &[Vec<f64>],
    batch: &[usize],
    k: usize,
    tied: bool,
    active: &mut [bool],
) -> Result<PairGrad> {
    let act = params.activation();
    let (n_hidden, n_in) = (params.ff_weight(k).rows(), params.ff_weight(k).cols());
    let n = batch.len();
    let mut grad = PairGrad::zeros(n_hidden, n_in);

    let mut targets = Matrix::zeros(n, n_in);
    for (r, &i) in batch.iter().enumerate() {
        targets.row_mut(r).copy_from_slice(&codes[i]);
    }
    let mut inputs = targets.clone();
    act.map_in_place(inputs.as_mut_slice());

    let mut pre_hidden = Matrix::zeros(n, n_hidden);
    gemm(1.0, &inputs, false, params.ff_weight(k), true, 0.0, &mut pre_hidden)?;
    for r in 0..n {
        axpy(1.0, params.ff_offset(k), pre_hidden.row_mut(r));
    }
    let mut hidden = pre_hidden.clone();
    act.map_in_place(hidden.as_mut_slice());
    let mut hidden_rates = hidden.clone();
    act.map_in_place(hidden_rates.as_mut_slice());

    let mut delta_out = Matrix::zeros(n, n_in);
    gemm(1.0, &hidden_rates, false, params.fb_weight(k), true, 0.0, &mut delta_out)?;
    for r in 0..n {
        let row = delta_out.row_mut(r);
        axpy(1.0, params.fb_offset(k), row);
        for (z, &t) in row.iter_mut().zip(targets.row(r)) {
            *z = 2.0 * (act.eval(*z) - t) * act.derivative(*z);
        }
    }
    gemm(1.0, &delta_out, true, &hidden_rates, false, 0.0, &mut grad.v)?;

    let mut delta_hidden = Matrix::zeros(n, n_hidden);
    gemm(1.0, &delta_out, false, params.fb_weight(k), false, 0.0, &mut delta_hidden)?;
    for r in 0..n {
        let rows = delta_hidden.row_mut(r).iter_mut().zip(pre_hidden.row(r)).zip(hidden.row(r));
        for ((g, &a), &s) in rows {
            *g *= act.derivative(s) * act.derivative(a);
        }
        for (flag, &a) in active.iter_mut().zip(pre_hidden.row(r)) {
            *flag |= act.derivative(a) != 0.0;
        }
        axpy(1.0, delta_out.row(r), &mut grad.c);
        axpy(1.0, delta_hidden.row(r), &mut grad.b);
    }
    gemm(1.0, &delta_hidden, true, &inputs, false, 0.0, &mut grad.w)?;

    let inv = 1.0 / n as f64;
    if tied {
        let shared = grad.v.transpose();
        axpy(1.0, shared.as_slice(), grad.w.as_mut_slice());
    }
    grad.w.scale(inv);
    grad.v.scale(inv);
    grad.b.iter_mut().chain(grad.c.iter_mut()).for_each(|g| *g *= inv);
    Ok(grad)
}

/// Online local-branch training of the top-down branch of pair `k`: every
/// unit of layer `k-1` regresses its state on the rates of layer `k`.
fn local_branch_step(
    params: &mut NetworkParams,
    x: &[f64],
    k: usize,
    lr: f64,
    active: &mut [bool],
) -> Result<()> {
    let act = params.activation();
    let pre_hidden = params.bottom_up(x, k)?;
    for (flag, &a) in active.iter_mut().zip(&pre_hidden) {
        *flag |= act.derivative(a) != 0.0;
    }
    let rates = act.map(&act.map(&pre_hidden));
    for (i, &soma) in x.iter().enumerate() {
        let offset = params.fb_offset(k)[i];
        let (row, new_offset) =
            local_branch_update(params.fb_weight(k).row(i), offset, soma, &rates, lr);
        params.fb_weight_mut(k).row_mut(i).copy_from_slice(&row);
        params.fb_offset_mut(k)[i] = new_offset;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::DataSource;

    #[test]
    fn random_tied_construction() {
        let spec = LayerSpec::new(vec![5, 4, 3]).unwrap();
        let p = init_random_tied(&spec, Activation::HardSigmoid, 1.0, 11);
        assert!(p.is_transpose_tied());
        assert!(p.ff_offset(1).iter().chain(p.fb_offset(2)).all(|&x| x == 0.0));
        let bound = 1.0 / libm::sqrt(5.0);
        assert!(p.ff_weight(1).as_slice().iter().all(|w| w.abs() <= bound));

        let z = init_random_tied(&spec, Activation::HardSigmoid, 0.0, 11);
        assert!(z.ff_weight(2).as_slice().iter().all(|&w| w == 0.0));

        assert_eq!(p, init_random_tied(&spec, Activation::HardSigmoid, 1.0, 11));
        assert_ne!(p, init_random_tied(&spec, Activation::HardSigmoid, 1.0, 12));
    }

    #[test]
    fn local_branch_perfect_prediction_is_stationary() {
        let (w, c) = local_branch_update(&[0.2, 0.4], 0.1, 0.1 + 0.2 * 0.5 + 0.4 * 0.25, &[0.5, 0.25], 0.3);
        assert_eq!(w, vec![0.2, 0.4]);
        assert_eq!(c, 0.1);
    }

    #[test]
    fn local_branch_one_step() {
        let (w, c) = local_branch_update(&[0.5], 0.0, 1.0, &[1.0], 0.1);
        assert!((w[0] - 0.55).abs() < 1e-15);
        assert!((c - 0.05).abs() < 1e-15);
    }

    #[test]
    fn zero_learning_rate_keeps_initialization() {
        let spec = LayerSpec::new(vec![3, 2]).unwrap();
        let data = Dataset::new(
            "t",
            DataSource::SyntheticBlobs,
            3,
            vec![vec![0.1, 0.5, 0.9], vec![0.3, 0.3, 0.3]],
        )
        .unwrap();
        let cfg = TrainConfig {
            learning_rate: 0.0,
            epochs: 3,
            batch_size: 2,
            seed: 5,
            ..Default::default()
        };
        let (p, _) = train_stacked_ae(&data, &spec, &cfg).unwrap();
        assert_eq!(p, training_init(&spec, &cfg));
        assert_eq!(p.ff_weight(1), init_random_tied(&spec, Activation::HardSigmoid, 1.0, 5).ff_weight(1));
    }

    #[test]
    fn training_input_errors() {
        let spec = LayerSpec::new(vec![2, 2]).unwrap();
        let empty = Dataset::new("e", DataSource::SyntheticBlobs, 2, vec![]).unwrap();
        let cfg = TrainConfig {
            batch_size: 1,
            ..Default::default()
        };
        assert!(matches!(train_stacked_ae(&empty, &spec, &cfg), Err(Error::InvalidInput(_))));

        let one = Dataset::new("o", DataSource::SyntheticBlobs, 2, vec![vec![0.2, 0.4]]).unwrap();
        let big_batch = TrainConfig {
            batch_size: 2,
            ..Default::default()
        };
        assert!(matches!(train_stacked_ae(&one, &spec, &big_batch), Err(Error::Config(_))));
    }

    #[test]
    fn huge_learning_rate_reports_divergence() {
        let spec = LayerSpec::new(vec![2, 2]).unwrap();
        let data = Dataset::new(
            "d",
            DataSource::SyntheticBlobs,
            2,
            vec![vec![0.4, 0.6], vec![0.5, 0.5]],
        )
        .unwrap();
        let cfg = TrainConfig {
            learning_rate: 1e300,
            batch_size: 1,
            epochs: 5,
            rule: TrainRule::LocalBranch,
            ..Default::default()
        };
        match train_stacked_ae(&data, &spec, &cfg) {
            Err(Error::Divergence { pair: 0, .. }) => {}
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn reconstruction_error_rejects_top_layer() {
        let spec = LayerSpec::new(vec![2, 2]).unwrap();
        let p = NetworkParams::zeros(spec, Activation::HardSigmoid);
        let data = Dataset::new("d", DataSource::SyntheticBlobs, 2, vec![vec![0.1, 0.2]]).unwrap();
        assert!(reconstruction_error(&p, &data, 1).is_err());
    }
}
