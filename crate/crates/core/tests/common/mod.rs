#![allow(dead_code)]

use ffinit_core::{Activation, BranchGains, LayerSpec, Matrix, NetworkParams, NetworkState};
use proptest::prelude::*;

pub fn sizes(max_layers: usize, max_units: usize) -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(1..=max_units, 2..=max_layers)
}

fn values(n: usize, lo: f64, hi: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(lo..hi, n)
}

/// Arbitrary (untied) parameters for the given sizes.
pub fn params_for(sizes: Vec<usize>, activation: Activation) -> impl Strategy<Value = NetworkParams> {
    let s = sizes.clone();
    let pairs: Vec<_> = (1..s.len())
        .map(|k| {
            (
                values(s[k] * s[k - 1], -2.0, 2.0),
                values(s[k - 1] * s[k], -2.0, 2.0),
                values(s[k], -1.0, 1.0),
                values(s[k - 1], -1.0, 1.0),
            )
        })
        .collect();
    (pairs, 0.05f64..0.95).prop_map(move |(pairs, alpha)| {
        let spec = LayerSpec::new(sizes.clone()).unwrap();
        let s = &sizes;
        let (mut w, mut v, mut b, mut c) = (vec![], vec![], vec![], vec![]);
        for (i, (wd, vd, bd, cd)) in pairs.into_iter().enumerate() {
            let k = i + 1;
            w.push(Matrix::from_row_major(s[k], s[k - 1], wd).unwrap());
            v.push(Matrix::from_row_major(s[k - 1], s[k], vd).unwrap());
            b.push(bd);
            c.push(cd);
        }
        let gains = BranchGains::new(alpha, 1.0 - alpha).unwrap();
        NetworkParams::new(spec, w, v, b, c, gains, activation).unwrap()
    })
}

pub fn untied_params(max_layers: usize, max_units: usize) -> impl Strategy<Value = NetworkParams> {
    sizes(max_layers, max_units).prop_flat_map(|s| params_for(s, Activation::HardSigmoid))
}

/// Makes `V_k = W_k^T` and the gains equal, which turns `p` into an energy
/// model.
pub fn tie(mut p: NetworkParams) -> NetworkParams {
    for k in 1..=p.depth() {
        *p.fb_weight_mut(k) = p.ff_weight(k).transpose();
    }
    p.set_gains(BranchGains::default()).unwrap();
    p
}

pub fn tied_params(max_layers: usize, max_units: usize) -> impl Strategy<Value = NetworkParams> {
    untied_params(max_layers, max_units).prop_map(tie)
}

/// A network together with a state whose entries lie in `[lo, hi)`.
pub fn with_state(
    params: impl Strategy<Value = NetworkParams>,
    lo: f64,
    hi: f64,
) -> impl Strategy<Value = (NetworkParams, NetworkState)> {
    params.prop_flat_map(move |p| {
        let s = p.spec().sizes().to_vec();
        let hidden: Vec<_> = s[1..].iter().map(|&n| values(n, lo, hi)).collect();
        (Just(p), values(s[0], 0.0, 1.0), hidden)
            .prop_map(|(p, visible, hidden)| (p, NetworkState { visible, hidden }))
    })
}

pub fn visible_for(p: &NetworkParams) -> impl Strategy<Value = Vec<f64>> {
    values(p.spec().visible_dim(), 0.0, 1.0)
}
