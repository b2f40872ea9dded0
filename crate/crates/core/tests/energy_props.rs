mod common;

use common::*;
use ffinit_core::{
    direct_update_layer, relax, Activation, EnergyModel, Error, LayerSpec, Matrix, NetworkParams,
    NetworkState, RelaxationConfig,
};
use proptest::prelude::*;

/// Energy from one symmetric coupling matrix over all units, built from the
/// layer blocks: `sum_u m_u/2 s_u^2 - 1/2 r^T J r - beta^T r` with `r = rho(s)`.
fn dense_energy(p: &NetworkParams, s: &NetworkState) -> f64 {
    let sizes = p.spec().sizes();
    let start: Vec<usize> = sizes.iter().scan(0, |acc, &n| { let o = *acc; *acc += n; Some(o) }).collect();
    let n: usize = sizes.iter().sum();
    let depth = p.depth();
    let mut j = Matrix::zeros(n, n);
    let mut beta = vec![0.0; n];
    let mut mass = vec![0.0; n];
    for (l, &size) in sizes.iter().enumerate() {
        let m = if l == 0 || l == depth { 1.0 } else { 2.0 };
        for u in 0..size {
            mass[start[l] + u] = m;
        }
    }
    for k in 1..=depth {
        let w = p.ff_weight(k);
        for a in 0..sizes[k] {
            for b in 0..sizes[k - 1] {
                j.set(start[k] + a, start[k - 1] + b, w.get(a, b));
                j.set(start[k - 1] + b, start[k] + a, w.get(a, b));
            }
            beta[start[k] + a] += p.ff_offset(k)[a];
        }
        for b in 0..sizes[k - 1] {
            beta[start[k - 1] + b] += p.fb_offset(k)[b];
        }
    }
    let state: Vec<f64> = s.visible.iter().chain(s.hidden.iter().flatten()).copied().collect();
    let r: Vec<f64> = state.iter().map(|v| v.clamp(0.0, 1.0)).collect();
    let jr = j.mul_vec(&r).unwrap();
    let mut e = 0.0;
    for u in 0..n {
        e += 0.5 * mass[u] * state[u] * state[u] - 0.5 * r[u] * jr[u] - beta[u] * r[u];
    }
    e
}

/// Hidden entries at least `margin` away from the hard sigmoid's kinks.
fn kink_free(p: NetworkParams, margin: f64) -> impl Strategy<Value = (NetworkParams, NetworkState)> {
    let s = p.spec().sizes().to_vec();
    let entry = (-0.5f64..1.5).prop_filter("near a kink", move |x| x.abs() > margin && (x - 1.0).abs() > margin);
    let hidden: Vec<_> = s[1..].iter().map(|&n| prop::collection::vec(entry.clone(), n)).collect();
    (Just(p), prop::collection::vec(0.0f64..1.0, s[0]), hidden)
        .prop_map(|(p, visible, hidden)| (p, NetworkState { visible, hidden }))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn energy_matches_dense_oracle((p, s) in with_state(tied_params(4, 8), -0.5, 1.5)) {
        let e = EnergyModel::new(&p).unwrap().energy(&s).unwrap();
        let o = dense_energy(&p, &s);
        prop_assert!((e - o).abs() <= 1e-10 * (1.0 + o.abs()), "{e} vs {o}");
    }

    #[test]
    fn gradient_matches_central_differences((p, s) in tied_params(4, 8).prop_flat_map(|p| kink_free(p, 1e-3))) {
        let m = EnergyModel::new(&p).unwrap();
        let g = m.gradient(&s).unwrap();
        let h = 1e-6;
        let (mut diff, mut norm) = (0.0f64, 0.0f64);
        for k in 0..p.depth() {
            for i in 0..s.hidden[k].len() {
                let mut up = s.clone();
                up.hidden[k][i] += h;
                let mut down = s.clone();
                down.hidden[k][i] -= h;
                let fd = (m.energy(&up).unwrap() - m.energy(&down).unwrap()) / (2.0 * h);
                diff += (fd - g[k][i]).powi(2);
                norm += fd.powi(2).max(g[k][i].powi(2));
            }
        }
        prop_assert!(diff.sqrt() <= 1e-5 * norm.sqrt().max(1e-300), "{} vs {}", diff.sqrt(), norm.sqrt());
    }

    #[test]
    fn half_sweeps_never_raise_energy((p, mut s) in with_state(tied_params(5, 8), -0.5, 1.5)) {
        let m = EnergyModel::new(&p).unwrap();
        let mut e = m.energy(&s).unwrap();
        for _ in 0..10 {
            for parity in [1, 0] {
                let layers: Vec<usize> = (1..=p.depth()).filter(|k| k % 2 == parity).collect();
                let targets: Vec<Vec<f64>> = layers.iter().map(|&k| direct_update_layer(&p, &s, k).unwrap()).collect();
                for (k, t) in layers.into_iter().zip(targets) {
                    s.hidden[k - 1] = t;
                }
                let next = m.energy(&s).unwrap();
                prop_assert!(next - e <= 1e-10, "energy rose by {}", next - e);
                e = next;
            }
        }
    }

    #[test]
    fn relax_energy_trace_is_non_increasing((p, s) in with_state(tied_params(5, 8), 0.0, 1.0)) {
        let m = EnergyModel::new(&p).unwrap();
        let start = m.energy(&s).unwrap();
        let cfg = RelaxationConfig { track_energy: true, max_iters: 30, ..Default::default() };
        let (_, trace) = relax(&p, s, &cfg).unwrap();
        let es = trace.energies.unwrap();
        prop_assert_eq!(es.len(), trace.iters_run);
        let mut prev = start;
        for e in es {
            prop_assert!(e - prev <= 1e-10);
            prev = e;
        }
    }

    #[test]
    fn offsets_enter_linearly_at_saturated_states(p in tied_params(4, 6), k_pick in any::<prop::sample::Index>()) {
        // all units at 1: dE/db_i = -1
        let sizes = p.spec().sizes().to_vec();
        let s = NetworkState { visible: vec![1.0; sizes[0]], hidden: sizes[1..].iter().map(|&n| vec![1.0; n]).collect() };
        let k = 1 + k_pick.index(p.depth());
        let e0 = EnergyModel::new(&p).unwrap().energy(&s).unwrap();
        let mut q = p.clone();
        q.ff_offset_mut(k)[0] += 0.25;
        let e1 = EnergyModel::new(&q).unwrap().energy(&s).unwrap();
        prop_assert!(((e1 - e0) / 0.25 + 1.0).abs() <= 1e-9);
    }
}

#[test]
fn untied_or_unequal_gains_are_refused() {
    let spec = LayerSpec::new(vec![3, 2]).unwrap();
    let mut p = NetworkParams::zeros(spec, Activation::HardSigmoid);
    p.fb_weight_mut(1).set(0, 0, 0.5);
    assert!(matches!(EnergyModel::new(&p), Err(Error::NotEnergyModel(_))));
    let cfg = RelaxationConfig { track_energy: true, ..Default::default() };
    let s = p.feedforward_init(&[0.1, 0.2, 0.3]).unwrap();
    assert!(matches!(relax(&p, s, &cfg), Err(Error::NotEnergyModel(_))));

    let mut q = NetworkParams::zeros(LayerSpec::new(vec![3, 2]).unwrap(), Activation::HardSigmoid);
    q.set_gains(ffinit_core::BranchGains::new(2.0, 1.0).unwrap()).unwrap();
    assert!(matches!(EnergyModel::new(&q), Err(Error::NotEnergyModel(_))));
}
