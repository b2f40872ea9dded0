//! In-memory datasets and synthetic generators.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::network::{Activation, BranchGains, LayerSpec, NetworkParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DataSource {
    IdxFile,
    SyntheticBlobs,
    SyntheticAutoencodable,
}

/// `N` vectors of a common dimension with every value in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    name: String,
    source: DataSource,
    dim: usize,
    items: Vec<Vec<f64>>,
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        source: DataSource,
        dim: usize,
        items: Vec<Vec<f64>>,
    ) -> Result<Self> {
        for (n, item) in items.iter().enumerate() {
            if item.len() != dim {
                return Err(Error::Dimension {
                    context: "dataset item",
                    expected: dim,
                    actual: item.len(),
                });
            }
            if let Some(v) = item.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(Error::InvalidInput(format!(
                    "dataset item {n} has value {v} outside [0, 1]"
                )));
            }
        }
        Ok(Self {
            name: name.into(),
            source,
            dim,
            items,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn source(&self) -> DataSource {
        self.source
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn items(&self) -> &[Vec<f64>] {
        &self.items
    }

    pub fn item(&self, i: usize) -> &[f64] {
        &self.items[i]
    }

    /// The first `n` items (all of them if `n >= len`).
    pub fn head(&self, n: usize) -> Dataset {
        Dataset {
            name: self.name.clone(),
            source: self.source,
            dim: self.dim,
            items: self.items.iter().take(n).cloned().collect(),
        }
    }
}

/// Gaussian clusters around uniformly drawn centers, clipped to `[0, 1]^d`.
pub fn synth_blobs(
    n_items: usize,
    d: usize,
    n_clusters: usize,
    spread: f64,
    seed: u64,
) -> Result<Dataset> {
    if d == 0 {
        return Err(Error::Config("blob dimension must be at least 1".into()));
    }
    if n_clusters == 0 {
        return Err(Error::Config("need at least one blob cluster".into()));
    }
    if !(spread >= 0.0) || !spread.is_finite() {
        return Err(Error::Config(format!("invalid blob spread {spread}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers: Vec<Vec<f64>> = (0..n_clusters)
        .map(|_| (0..d).map(|_| rng.random::<f64>()).collect())
        .collect();
    let items = (0..n_items)
        .map(|_| {
            let c = &centers[rng.random_range(0..n_clusters)];
            c.iter()
                .map(|&m| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    (m + spread * z).clamp(0.0, 1.0)
                })
                .collect()
        })
        .collect();
    Dataset::new(
        format!("blobs-{n_clusters}x{d}"),
        DataSource::SyntheticBlobs,
        d,
        items,
    )
}

const AUTOENCODABLE_ATTEMPTS: usize = 16;

/// A dataset together with hard-sigmoid parameters that reconstruct it
/// exactly at every layer pair.
///
/// Every layer is an affine image `h_k = A_k z + e_k` of a shared latent `z`
/// whose dimension is the smallest layer size. The images are kept inside
/// `(0, 1)` so `rho` acts as the identity, and the weights
/// `W_k = A_k pinv(A_{k-1})`, `V_k = A_{k-1} pinv(A_k)` map the layers onto
/// each other exactly.
pub fn synth_autoencodable(
    n_items: usize,
    spec: &LayerSpec,
    seed: u64,
) -> Result<(Dataset, NetworkParams)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut last_failure = String::new();
    for _ in 0..AUTOENCODABLE_ATTEMPTS {
        match autoencodable_attempt(n_items, spec, &mut rng) {
            Ok(found) => return Ok(found),
            Err(e) => last_failure = format!("{e}"),
        }
    }
    Err(Error::Construction(format!(
        "no interior exact auto-encoder found for sizes {:?} after {AUTOENCODABLE_ATTEMPTS} attempts; last failure: {last_failure}",
        spec.sizes()
    )))
}

fn autoencodable_attempt(
    n_items: usize,
    spec: &LayerSpec,
    rng: &mut ChaCha8Rng,
) -> Result<(Dataset, NetworkParams)> {
    let sizes = spec.sizes();
    let latent = *sizes.iter().min().expect("non-empty spec");
    let reach = 0.4 / latent as f64;

    let maps: Vec<Matrix> = sizes
        .iter()
        .map(|&n| Matrix::from_fn(n, latent, |_, _| reach * (2.0 * rng.random::<f64>() - 1.0)))
        .collect();
    let centers: Vec<Vec<f64>> = sizes
        .iter()
        .map(|&n| (0..n).map(|_| 0.45 + 0.1 * rng.random::<f64>()).collect())
        .collect();
    let pinvs = maps
        .iter()
        .map(|a| {
            let at = a.transpose();
            at.matmul(a)?.inverse(1e-12)?.matmul(&at)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut params = NetworkParams::zeros(spec.clone(), Activation::HardSigmoid);
    for k in 1..sizes.len() {
        let w = maps[k].matmul(&pinvs[k - 1])?;
        let v = maps[k - 1].matmul(&pinvs[k])?;
        let b = sub(&centers[k], &w.mul_vec(&centers[k - 1])?);
        let c = sub(&centers[k - 1], &v.mul_vec(&centers[k])?);
        if !(w.is_finite() && v.is_finite()) || w.frobenius_norm() > 1e4 || v.frobenius_norm() > 1e4 {
            return Err(Error::Construction(format!("ill-conditioned maps at pair {k}")));
        }
        *params.ff_weight_mut(k) = w;
        *params.fb_weight_mut(k) = v;
        params.ff_offset_mut(k).copy_from_slice(&b);
        params.fb_offset_mut(k).copy_from_slice(&c);
    }
    params.set_gains(BranchGains::default())?;
    params.validate()?;

    let mut items = Vec::with_capacity(n_items);
    for _ in 0..n_items {
        let z: Vec<f64> = (0..latent).map(|_| 2.0 * rng.random::<f64>() - 1.0).collect();
        let mut v = maps[0].mul_vec(&z)?;
        v.iter_mut().zip(&centers[0]).for_each(|(x, e)| *x += e);
        let state = params.feedforward_init(&v)?;
        let interior = state
            .hidden
            .iter()
            .flatten()
            .all(|&h| h > 1e-6 && h < 1.0 - 1e-6);
        let exact = params
            .mutual_prediction_residual(&state)?
            .iter()
            .all(|&r| r <= 1e-10);
        if !interior || !exact {
            return Err(Error::Construction(
                "feedforward codes left the linear region".into(),
            ));
        }
        items.push(v);
    }
    let dim = sizes[0];
    let data = Dataset::new("autoencodable", DataSource::SyntheticAutoencodable, dim, items)?;
    Ok((data, params))
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len()];
    for ((o, x), y) in out.iter_mut().zip(a).zip(b) {
        *o = x - y;
    }
    out
}
