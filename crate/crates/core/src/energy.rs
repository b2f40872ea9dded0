//! Energy of a transpose-tied layered network.
//!
//! For a network with `V_k = W_k^T` and equal branch gains the energy is
//!
//! ```text
//! E(s) = 1/2 |v|^2 + sum_k (m_k / 2) |h_k|^2
//!        - sum_k rho(h_k)^T W_k rho(h_{k-1})
//!        - sum_k b_k^T rho(h_k) - sum_k c_k^T rho(h_{k-1})
//! ```
//!
//! where `m_k` counts the dendritic branches of layer `k` (2 for interior
//! hidden layers, 1 for the top layer). Each symmetric pair is counted once.
//! The per-layer weighting makes the direct update `rho(mean of branches)`
//! the exact minimizer of `E` over one layer given its neighbours, so an
//! odd/even sweep never increases the energy. With a single hidden layer this
//! is `1/2 |s|^2 - sum W rho rho - sum b rho` over the whole state.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::dot;
use crate::network::{NetworkParams, NetworkState};

/// Symmetric-coupling view over a [`NetworkParams`].
#[derive(Debug, Clone, Copy)]
pub struct EnergyModel<'a> {
    params: &'a NetworkParams,
}

impl<'a> EnergyModel<'a> {
    /// Fails unless every `V_k` equals `W_k^T` exactly and the two branch
    /// gains are equal.
    pub fn new(params: &'a NetworkParams) -> Result<Self> {
        if !params.is_transpose_tied() {
            return Err(Error::NotEnergyModel(
                "feedback weights are not the transpose of the feedforward weights".into(),
            ));
        }
        let g = params.gains();
        if g.bottom_up != g.top_down {
            return Err(Error::NotEnergyModel(alloc::format!(
                "unequal branch gains ({}, {}) give asymmetric couplings",
                g.bottom_up, g.top_down
            )));
        }
        Ok(Self { params })
    }

    pub fn params(&self) -> &'a NetworkParams {
        self.params
    }

    /// Quadratic weight of hidden layer `k`.
    fn branch_count(&self, k: usize) -> f64 {
        if k < self.params.depth() {
            2.0
        } else {
            1.0
        }
    }

    pub fn energy(&self, state: &NetworkState) -> Result<f64> {
        let p = self.params;
        p.check_state(state)?;
        let act = p.activation();
        let mut e = 0.5 * dot(&state.visible, &state.visible);
        let mut below_rates = act.map(&state.visible);
        for k in 1..=p.depth() {
            let h = &state.hidden[k - 1];
            let rates = act.map(h);
            e += 0.5 * self.branch_count(k) * dot(h, h);
            let wx = p.ff_weight(k).mul_vec(&below_rates)?;
            e -= dot(&rates, &wx);
            e -= dot(p.ff_offset(k), &rates);
            e -= dot(p.fb_offset(k), &below_rates);
            below_rates = rates;
        }
        Ok(e)
    }

    /// Gradient of the energy with respect to every hidden unit, one vector
    /// per hidden layer. The visible layer is clamped and gets none.
    pub fn gradient(&self, state: &NetworkState) -> Result<Vec<Vec<f64>>> {
        let p = self.params;
        p.check_state(state)?;
        let act = p.activation();
        let depth = p.depth();
        let mut grads = Vec::with_capacity(depth);
        for k in 1..=depth {
            let h = &state.hidden[k - 1];
            let mut drive = p.bottom_up(state.layer(k - 1), k)?;
            if k < depth {
                let td = p.top_down(&state.hidden[k], k)?;
                drive.iter_mut().zip(&td).for_each(|(d, t)| *d += t);
            }
            let m = self.branch_count(k);
            grads.push(
                h.iter()
                    .zip(&drive)
                    .map(|(&s, &u)| m * s - act.derivative(s) * u)
                    .collect(),
            );
        }
        Ok(grads)
    }
}
