//! Layered architecture, parameters and the dendritic branch computations.
//!
//! Layer `0` is the clamped visible layer and layers `1..=L` are hidden.
//! Every hidden unit has a bottom-up branch (from layer `k-1`) and, except in
//! the top layer, a top-down branch (from layer `k+1`). Each branch produces a
//! voltage-scale affine prediction `d = offset + weights * rho(source)`; the
//! stored state of a hidden layer is a rate, i.e. already passed through `rho`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{check_len, Error, Result};
use crate::linalg::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activation {
    /// `max(0, min(1, s))`
    HardSigmoid,
    /// `1 / (1 + exp(-s))`
    LogisticSigmoid,
}

impl Activation {
    #[inline]
    pub fn eval(self, s: f64) -> f64 {
        match self {
            // Comparisons are written so that the result is never -0.0.
            Activation::HardSigmoid => {
                if s <= 0.0 {
                    0.0
                } else if s >= 1.0 {
                    1.0
                } else {
                    s
                }
            }
            Activation::LogisticSigmoid => 1.0 / (1.0 + libm::exp(-s)),
        }
    }

    /// Derivative used for gradients. For the hard sigmoid this is the
    /// sub-derivative that is 1 on the closed interval `[0, 1]` and 0 outside.
    #[inline]
    pub fn derivative(self, s: f64) -> f64 {
        match self {
            Activation::HardSigmoid => {
                if (0.0..=1.0).contains(&s) {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::LogisticSigmoid => {
                let y = self.eval(s);
                y * (1.0 - y)
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::HardSigmoid => "hard-sigmoid",
            Activation::LogisticSigmoid => "logistic-sigmoid",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "hard-sigmoid" => Some(Activation::HardSigmoid),
            "logistic-sigmoid" => Some(Activation::LogisticSigmoid),
            _ => None,
        }
    }

    pub(crate) fn map(self, x: &[f64]) -> Vec<f64> {
        x.iter().map(|&v| self.eval(v)).collect()
    }

    pub(crate) fn map_in_place(self, x: &mut [f64]) {
        x.iter_mut().for_each(|v| *v = self.eval(*v));
    }
}

/// Element-wise activation of a vector. Rejects non-finite input.
pub fn apply_activation(activation: Activation, x: &[f64]) -> Result<Vec<f64>> {
    if let Some(i) = x.iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "non-finite activation input {} at index {i}",
            x[i]
        )));
    }
    Ok(activation.map(x))
}

/// Layer sizes `[n_0, n_1, ..., n_L]`, visible first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerSpec {
    sizes: Vec<usize>,
}

impl LayerSpec {
    pub fn new(sizes: Vec<usize>) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(Error::Config(format!(
                "a network needs a visible and at least one hidden layer, got {} layer(s)",
                sizes.len()
            )));
        }
        if let Some(k) = sizes.iter().position(|&n| n == 0) {
            return Err(Error::Config(format!("layer {k} has size 0")));
        }
        Ok(Self { sizes })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    /// Number of hidden layers `L`.
    pub fn depth(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn size(&self, k: usize) -> usize {
        self.sizes[k]
    }

    pub fn visible_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn hidden_units(&self) -> usize {
        self.sizes[1..].iter().sum()
    }
}

/// Constant dendritic branch gains.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchGains {
    pub bottom_up: f64,
    pub top_down: f64,
}

impl Default for BranchGains {
    fn default() -> Self {
        Self {
            bottom_up: 1.0,
            top_down: 1.0,
        }
    }
}

impl BranchGains {
    pub fn new(bottom_up: f64, top_down: f64) -> Result<Self> {
        let gains = Self {
            bottom_up,
            top_down,
        };
        gains.validate()?;
        Ok(gains)
    }

    pub fn validate(&self) -> Result<()> {
        for g in [self.bottom_up, self.top_down] {
            if !g.is_finite() || g < 0.0 {
                return Err(Error::Config(format!(
                    "branch gains must be finite and non-negative, got {g}"
                )));
            }
        }
        if self.bottom_up == 0.0 && self.top_down == 0.0 {
            return Err(Error::Config("branch gains are both zero".into()));
        }
        Ok(())
    }
}

/// Gain-weighted average of branch predictions, `sum_b a_b d_b / sum_b a_b`.
pub fn combine_branches(gains: &[f64], predictions: &[&[f64]]) -> Result<Vec<f64>> {
    check_len("branch gain list", predictions.len(), gains.len())?;
    let total: f64 = gains.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Config("branch gains sum to zero".into()));
    }
    let n = predictions.first().map_or(0, |p| p.len());
    let mut out = vec![0.0; n];
    for (&g, p) in gains.iter().zip(predictions) {
        check_len("branch prediction", n, p.len())?;
        if g != 0.0 {
            for (o, &d) in out.iter_mut().zip(p.iter()) {
                *o += g * d;
            }
        }
    }
    out.iter_mut().for_each(|o| *o /= total);
    Ok(out)
}

/// Clamped visible vector plus one rate vector per hidden layer.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState {
    pub visible: Vec<f64>,
    pub hidden: Vec<Vec<f64>>,
}

impl NetworkState {
    pub fn zeros(spec: &LayerSpec, visible: Vec<f64>) -> Self {
        let hidden = spec.sizes()[1..].iter().map(|&n| vec![0.0; n]).collect();
        Self { visible, hidden }
    }

    /// Layer `k` with `0` meaning the visible layer.
    pub fn layer(&self, k: usize) -> &[f64] {
        if k == 0 {
            &self.visible
        } else {
            &self.hidden[k - 1]
        }
    }

    /// All hidden layers concatenated bottom to top.
    pub fn hidden_concat(&self) -> Vec<f64> {
        self.hidden.iter().flatten().copied().collect()
    }
}

/// Feedforward and feedback weights, branch offsets and gains.
///
/// Index `k - 1` of each list holds the quantities of layer pair `(k-1, k)`:
/// `W_k` is `n_k x n_{k-1}` (bottom-up into layer `k`), `V_k` is
/// `n_{k-1} x n_k` (top-down into layer `k-1`), `b_k` has length `n_k` and
/// `c_k` has length `n_{k-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    spec: LayerSpec,
    ff_weights: Vec<Matrix>,
    fb_weights: Vec<Matrix>,
    ff_offsets: Vec<Vec<f64>>,
    fb_offsets: Vec<Vec<f64>>,
    gains: BranchGains,
    activation: Activation,
}

impl NetworkParams {
    pub fn new(
        spec: LayerSpec,
        ff_weights: Vec<Matrix>,
        fb_weights: Vec<Matrix>,
        ff_offsets: Vec<Vec<f64>>,
        fb_offsets: Vec<Vec<f64>>,
        gains: BranchGains,
        activation: Activation,
    ) -> Result<Self> {
        let params = Self {
            spec,
            ff_weights,
            fb_weights,
            ff_offsets,
            fb_offsets,
            gains,
            activation,
        };
        params.validate()?;
        Ok(params)
    }

    /// All-zero weights and offsets.
    pub fn zeros(spec: LayerSpec, activation: Activation) -> Self {
        let s = spec.sizes();
        let pairs = 1..s.len();
        Self {
            ff_weights: pairs.clone().map(|k| Matrix::zeros(s[k], s[k - 1])).collect(),
            fb_weights: pairs.clone().map(|k| Matrix::zeros(s[k - 1], s[k])).collect(),
            ff_offsets: pairs.clone().map(|k| vec![0.0; s[k]]).collect(),
            fb_offsets: pairs.map(|k| vec![0.0; s[k - 1]]).collect(),
            gains: BranchGains::default(),
            activation,
            spec,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let s = self.spec.sizes();
        let depth = self.spec.depth();
        check_len("feedforward weight list", depth, self.ff_weights.len())?;
        check_len("feedback weight list", depth, self.fb_weights.len())?;
        check_len("feedforward offset list", depth, self.ff_offsets.len())?;
        check_len("feedback offset list", depth, self.fb_offsets.len())?;
        for k in 1..=depth {
            let w = &self.ff_weights[k - 1];
            let v = &self.fb_weights[k - 1];
            check_len("feedforward weight rows", s[k], w.rows())?;
            check_len("feedforward weight cols", s[k - 1], w.cols())?;
            check_len("feedback weight rows", s[k - 1], v.rows())?;
            check_len("feedback weight cols", s[k], v.cols())?;
            check_len("feedforward offset", s[k], self.ff_offsets[k - 1].len())?;
            check_len("feedback offset", s[k - 1], self.fb_offsets[k - 1].len())?;
            let finite = w.is_finite()
                && v.is_finite()
                && self.ff_offsets[k - 1].iter().all(|x| x.is_finite())
                && self.fb_offsets[k - 1].iter().all(|x| x.is_finite());
            if !finite {
                return Err(Error::InvalidInput(format!(
                    "non-finite parameter in layer pair {k}"
                )));
            }
        }
        self.gains.validate()
    }

    pub fn spec(&self) -> &LayerSpec {
        &self.spec
    }

    pub fn depth(&self) -> usize {
        self.spec.depth()
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn gains(&self) -> BranchGains {
        self.gains
    }

    pub fn set_gains(&mut self, gains: BranchGains) -> Result<()> {
        gains.validate()?;
        self.gains = gains;
        Ok(())
    }

    /// `W_k`, for `1 <= k <= L`.
    pub fn ff_weight(&self, k: usize) -> &Matrix {
        &self.ff_weights[k - 1]
    }

    pub fn ff_weight_mut(&mut self, k: usize) -> &mut Matrix {
        &mut self.ff_weights[k - 1]
    }

    /// `V_k`, for `1 <= k <= L`.
    pub fn fb_weight(&self, k: usize) -> &Matrix {
        &self.fb_weights[k - 1]
    }

    pub fn fb_weight_mut(&mut self, k: usize) -> &mut Matrix {
        &mut self.fb_weights[k - 1]
    }

    pub fn ff_offset(&self, k: usize) -> &[f64] {
        &self.ff_offsets[k - 1]
    }

    pub fn ff_offset_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.ff_offsets[k - 1]
    }

    pub fn fb_offset(&self, k: usize) -> &[f64] {
        &self.fb_offsets[k - 1]
    }

    pub fn fb_offset_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.fb_offsets[k - 1]
    }

    /// Multiplies `W_k` and `V_k` by `factor`, which keeps a tied pair tied.
    pub fn scale_pair_weights(&mut self, k: usize, factor: f64) {
        self.ff_weights[k - 1].scale(factor);
        self.fb_weights[k - 1].scale(factor);
    }

    /// True when `V_k == W_k^T` holds element-exactly for every pair.
    pub fn is_transpose_tied(&self) -> bool {
        self.ff_weights.iter().zip(&self.fb_weights).all(|(w, v)| {
            (0..w.rows()).all(|i| (0..w.cols()).all(|j| w.get(i, j) == v.get(j, i)))
        })
    }

    fn check_hidden_index(&self, k: usize) -> Result<()> {
        if k == 0 || k > self.depth() {
            Err(Error::LayerIndex {
                index: k,
                max: self.depth(),
            })
        } else {
            Ok(())
        }
    }

    pub fn check_state(&self, state: &NetworkState) -> Result<()> {
        check_len("visible layer", self.spec.visible_dim(), state.visible.len())?;
        check_len("hidden layer count", self.depth(), state.hidden.len())?;
        for (k, h) in state.hidden.iter().enumerate() {
            check_len("hidden layer", self.spec.size(k + 1), h.len())?;
        }
        Ok(())
    }

    /// Bottom-up branch prediction into layer `k`: `b_k + W_k rho(h_{k-1})`.
    /// The result is voltage-scale, not passed through `rho`.
    pub fn bottom_up(&self, h_below: &[f64], k: usize) -> Result<Vec<f64>> {
        self.check_hidden_index(k)?;
        check_len("bottom-up source layer", self.spec.size(k - 1), h_below.len())?;
        let rates = self.activation.map(h_below);
        let mut out = self.ff_weights[k - 1].mul_vec(&rates)?;
        for (o, b) in out.iter_mut().zip(&self.ff_offsets[k - 1]) {
            *o += b;
        }
        Ok(out)
    }

    /// Top-down branch prediction into layer `k`, `0 <= k < L`:
    /// `c_{k+1} + V_{k+1} rho(h_{k+1})`.
    pub fn top_down(&self, h_above: &[f64], k: usize) -> Result<Vec<f64>> {
        if k >= self.depth() {
            return Err(Error::LayerIndex {
                index: k,
                max: self.depth().saturating_sub(1),
            });
        }
        check_len("top-down source layer", self.spec.size(k + 1), h_above.len())?;
        let rates = self.activation.map(h_above);
        let mut out = self.fb_weights[k].mul_vec(&rates)?;
        for (o, c) in out.iter_mut().zip(&self.fb_offsets[k]) {
            *o += c;
        }
        Ok(out)
    }

    /// Convex combination of the two branch predictions under the gains.
    pub fn branch_combine(&self, d_bu: &[f64], d_td: &[f64]) -> Result<Vec<f64>> {
        combine_branches(&[self.gains.bottom_up, self.gains.top_down], &[d_bu, d_td])
    }

    /// One upward sweep: `h_k = rho(bottom_up(h_{k-1}))` with `h_0 = v`.
    pub fn feedforward_init(&self, visible: &[f64]) -> Result<NetworkState> {
        check_len("visible layer", self.spec.visible_dim(), visible.len())?;
        let mut hidden: Vec<Vec<f64>> = Vec::with_capacity(self.depth());
        for k in 1..=self.depth() {
            let below = if k == 1 { visible } else { &hidden[k - 2] };
            let mut h = self.bottom_up(below, k)?;
            self.activation.map_in_place(&mut h);
            hidden.push(h);
        }
        Ok(NetworkState {
            visible: visible.to_vec(),
            hidden,
        })
    }

    /// For each hidden layer, the largest disagreement between a unit's rate
    /// and the rate implied by one of its branch predictions,
    /// `max_{b,i} |rho(d_{b,i}) - h_i|`. The top layer only has its bottom-up
    /// branch. Zero exactly when every branch predicts the unit's state.
    pub fn mutual_prediction_residual(&self, state: &NetworkState) -> Result<Vec<f64>> {
        self.check_state(state)?;
        let depth = self.depth();
        let mut out = Vec::with_capacity(depth);
        for k in 1..=depth {
            let h = &state.hidden[k - 1];
            let mut worst = self.branch_residual(h, &self.bottom_up(state.layer(k - 1), k)?);
            if k < depth {
                let td = self.top_down(&state.hidden[k], k)?;
                worst = worst.max(self.branch_residual(h, &td));
            }
            out.push(worst);
        }
        Ok(out)
    }

    fn branch_residual(&self, h: &[f64], d: &[f64]) -> f64 {
        h.iter()
            .zip(d)
            .map(|(&s, &p)| (self.activation.eval(p) - s).abs())
            .fold(0.0, f64::max)
    }
}
