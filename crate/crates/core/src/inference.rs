//! Relaxation of the hidden layers with the visible layer clamped.
//!
//! One iteration ("sweep") updates every odd hidden layer from the current
//! even layers, then every even hidden layer from the new odd layers. Layers
//! of the same parity never neighbour each other, so updating them one after
//! another is the same as updating them simultaneously.

use alloc::format;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::energy::EnergyModel;
use crate::error::{Error, Result};
use crate::network::{NetworkParams, NetworkState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    /// Jump each layer to `rho(combined branch prediction)`.
    DirectAlternating,
    /// `h <- (1 - 1/tau) h + (1/tau) rho(combined)`.
    Leaky,
    /// Leaky update with additive Gaussian noise after `rho`.
    Langevin,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::DirectAlternating => "direct-alternating",
            Scheme::Leaky => "leaky",
            Scheme::Langevin => "langevin",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "direct-alternating" => Some(Scheme::DirectAlternating),
            "leaky" => Some(Scheme::Leaky),
            "langevin" => Some(Scheme::Langevin),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelaxationConfig {
    pub scheme: Scheme,
    /// Time constant; each update moves a fraction `1/tau` of the way.
    /// Ignored by the direct scheme.
    pub tau: f64,
    /// Standard deviation of the per-unit noise (Langevin only).
    pub noise_scale: f64,
    pub max_iters: usize,
    /// Stop once a sweep moves the hidden state by less than this (L2).
    pub tol: f64,
    pub seed: u64,
    /// Record the energy after every sweep. Requires transpose-tied params.
    pub track_energy: bool,
    /// Record the per-layer mutual-prediction residual after every sweep.
    pub track_residuals: bool,
}

impl Default for RelaxationConfig {
    fn default() -> Self {
        Self {
            scheme: Scheme::DirectAlternating,
            tau: 1.0,
            noise_scale: 0.0,
            max_iters: 100,
            tol: 1e-7,
            seed: 0,
            track_energy: false,
            track_residuals: false,
        }
    }
}

impl RelaxationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau >= 1.0) || !self.tau.is_finite() {
            return Err(Error::Config(format!("tau must be finite and >= 1, got {}", self.tau)));
        }
        if !(self.noise_scale >= 0.0) || !self.noise_scale.is_finite() {
            return Err(Error::Config(format!(
                "noise_scale must be finite and >= 0, got {}",
                self.noise_scale
            )));
        }
        match self.scheme {
            Scheme::Langevin if self.noise_scale == 0.0 => {
                return Err(Error::Config("langevin relaxation needs noise_scale > 0".into()))
            }
            Scheme::DirectAlternating | Scheme::Leaky if self.noise_scale != 0.0 => {
                return Err(Error::Config(format!(
                    "{} relaxation is deterministic; noise_scale must be 0",
                    self.scheme.name()
                )))
            }
            _ => {}
        }
        if self.max_iters == 0 {
            return Err(Error::Config("max_iters must be positive".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Config(format!("tol must be positive, got {}", self.tol)));
        }
        Ok(())
    }
}

/// Per-sweep record of a relaxation run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConvergenceTrace {
    /// L2 norm of the change of all hidden layers (concatenated) per sweep.
    pub step_magnitudes: Vec<f64>,
    pub energies: Option<Vec<f64>>,
    pub residuals: Option<Vec<Vec<f64>>>,
    pub iters_run: usize,
    pub converged: bool,
}

impl ConvergenceTrace {
    pub fn initial_step(&self) -> Option<f64> {
        self.step_magnitudes.first().copied()
    }

    /// Number of sweeps needed to get below tolerance, if it happened.
    pub fn iters_to_tol(&self) -> Option<usize> {
        self.converged.then_some(self.iters_run)
    }
}

/// The direct update target of hidden layer `k` given the current state:
/// `rho(combine(bottom_up, top_down))`, or `rho(bottom_up)` for the top layer.
pub fn direct_update_layer(
    params: &NetworkParams,
    state: &NetworkState,
    k: usize,
) -> Result<Vec<f64>> {
    params.check_state(state)?;
    let bu = params.bottom_up(state.layer(k.saturating_sub(1)), k)?;
    let mut target = if k < params.depth() {
        let td = params.top_down(&state.hidden[k], k)?;
        params.branch_combine(&bu, &td)?
    } else {
        bu
    };
    let act = params.activation();
    target.iter_mut().for_each(|v| *v = act.eval(*v));
    Ok(target)
}

/// Relaxes `state` under `cfg`. The visible layer is never touched.
pub fn relax(
    params: &NetworkParams,
    mut state: NetworkState,
    cfg: &RelaxationConfig,
) -> Result<(NetworkState, ConvergenceTrace)> {
    cfg.validate()?;
    params.check_state(&state)?;
    let energy_model = if cfg.track_energy {
        Some(EnergyModel::new(params)?)
    } else {
        None
    };

    let depth = params.depth();
    let eps = 1.0 / cfg.tau;
    let keep = 1.0 - eps;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut trace = ConvergenceTrace {
        energies: cfg.track_energy.then(Vec::new),
        residuals: cfg.track_residuals.then(Vec::new),
        ..Default::default()
    };

    let mut previous = state.hidden.clone();
    for _ in 0..cfg.max_iters {
        for parity in [1, 0] {
            for k in (1..=depth).filter(|k| k % 2 == parity) {
                let target = direct_update_layer(params, &state, k)?;
                let h = &mut state.hidden[k - 1];
                match cfg.scheme {
                    Scheme::DirectAlternating => h.copy_from_slice(&target),
                    Scheme::Leaky => {
                        for (x, t) in h.iter_mut().zip(&target) {
                            *x = keep * *x + eps * t;
                        }
                    }
                    Scheme::Langevin => {
                        for (x, t) in h.iter_mut().zip(&target) {
                            let z: f64 = StandardNormal.sample(&mut rng);
                            *x = keep * *x + eps * (t + cfg.noise_scale * z);
                        }
                    }
                }
            }
        }

        let mut sq = 0.0;
        for (new, old) in state.hidden.iter().zip(&previous) {
            for (a, b) in new.iter().zip(old) {
                sq += (a - b) * (a - b);
            }
        }
        let step = libm::sqrt(sq);
        trace.step_magnitudes.push(step);
        trace.iters_run += 1;
        if let (Some(model), Some(es)) = (&energy_model, trace.energies.as_mut()) {
            es.push(model.energy(&state)?);
        }
        if let Some(rs) = trace.residuals.as_mut() {
            rs.push(params.mutual_prediction_residual(&state)?);
        }
        if cfg.scheme != Scheme::Langevin && step < cfg.tol {
            trace.converged = true;
            break;
        }
        for (dst, src) in previous.iter_mut().zip(&state.hidden) {
            dst.copy_from_slice(src);
        }
    }
    Ok((state, trace))
}

/// Feedforward initialization followed by relaxation.
pub fn infer_from_feedforward(
    params: &NetworkParams,
    visible: &[f64],
    cfg: &RelaxationConfig,
) -> Result<(NetworkState, ConvergenceTrace)> {
    let state = params.feedforward_init(visible)?;
    relax(params, state, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{Activation, BranchGains, LayerSpec};
    use alloc::vec;

    fn chain(w: f64) -> NetworkParams {
        let mut p = NetworkParams::zeros(LayerSpec::new(vec![1, 1, 1]).unwrap(), Activation::HardSigmoid);
        for k in 1..=2 {
            p.ff_weight_mut(k).set(0, 0, w);
            p.fb_weight_mut(k).set(0, 0, w);
        }
        p
    }

    #[test]
    fn identity_chain_is_a_fixed_point() {
        let p = chain(1.0);
        let s = NetworkState {
            visible: vec![0.5],
            hidden: vec![vec![0.5], vec![0.5]],
        };
        assert_eq!(direct_update_layer(&p, &s, 1).unwrap(), vec![0.5]);
        assert_eq!(direct_update_layer(&p, &s, 2).unwrap(), vec![0.5]);

        let (out, trace) = relax(&p, s.clone(), &RelaxationConfig::default()).unwrap();
        assert_eq!(out, s);
        assert!(trace.step_magnitudes[0] <= 1e-12);
        assert!(trace.converged);
        assert_eq!(trace.iters_run, 1);
    }

    #[test]
    fn bottom_up_only_gain_reduces_to_feedforward() {
        let mut p = chain(0.8);
        p.fb_weight_mut(1).set(0, 0, -3.0);
        p.fb_offset_mut(2)[0] = 0.4;
        p.set_gains(BranchGains::new(1.0, 0.0).unwrap()).unwrap();
        let s = NetworkState {
            visible: vec![0.9],
            hidden: vec![vec![0.1], vec![0.95]],
        };
        let ff = p.bottom_up(&s.visible, 1).unwrap();
        let expect = Activation::HardSigmoid.eval(ff[0]);
        assert_eq!(direct_update_layer(&p, &s, 1).unwrap(), vec![expect]);
    }

    #[test]
    fn zero_network_stays_at_offsets() {
        let mut p = NetworkParams::zeros(LayerSpec::new(vec![2, 2, 2]).unwrap(), Activation::HardSigmoid);
        p.ff_offset_mut(1).copy_from_slice(&[0.3, 1.7]);
        p.ff_offset_mut(2).copy_from_slice(&[-0.2, 0.6]);
        let (s, trace) = infer_from_feedforward(&p, &[0.1, 0.2], &RelaxationConfig::default()).unwrap();
        // Layer 1 averages its bottom-up offset with a zero top-down branch.
        assert_eq!(s.hidden[1], vec![0.0, 0.6]);
        assert!(trace.converged && trace.iters_run <= 2);
    }

    #[test]
    fn config_validation() {
        let mut cfg = RelaxationConfig {
            scheme: Scheme::Langevin,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        cfg.noise_scale = 0.1;
        assert!(cfg.validate().is_ok());
        cfg.scheme = Scheme::Leaky;
        assert!(cfg.validate().is_err());
        cfg.noise_scale = 0.0;
        cfg.tau = 0.5;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn energy_tracking_requires_tied_weights() {
        let mut p = chain(0.5);
        p.fb_weight_mut(2).set(0, 0, 0.1);
        let cfg = RelaxationConfig {
            track_energy: true,
            ..Default::default()
        };
        let s = p.feedforward_init(&[0.4]).unwrap();
        assert!(matches!(relax(&p, s, &cfg), Err(Error::NotEnergyModel(_))));
    }

    #[test]
    fn langevin_never_reports_convergence() {
        let p = chain(1.0);
        let cfg = RelaxationConfig {
            scheme: Scheme::Langevin,
            tau: 2.0,
            noise_scale: 1e-3,
            max_iters: 7,
            ..Default::default()
        };
        let (s, trace) = infer_from_feedforward(&p, &[0.5], &cfg).unwrap();
        assert!(!trace.converged);
        assert_eq!(trace.iters_run, 7);
        assert_eq!(trace.step_magnitudes.len(), 7);
        assert_eq!(s.visible, vec![0.5]);
    }
}
