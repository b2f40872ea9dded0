//! Text checkpoints of network parameters.
//!
//! A checkpoint is one JSON document:
//!
//! ```json
//! {
//!   "format_version": 1,
//!   "sizes": [784, 500],
//!   "activation": "hard-sigmoid",
//!   "branch_gains": { "bottom_up": 1.0, "top_down": 1.0 },
//!   "pairs": [
//!     { "ff_weights": [[...], ...], "ff_offsets": [...],
//!       "fb_weights": [[...], ...], "fb_offsets": [...] }
//!   ]
//! }
//! ```
//!
//! Entry `k - 1` of `pairs` holds `W_k` (rows are units of layer `k`), `b_k`,
//! `V_k` (rows are units of layer `k - 1`) and `c_k`. Floats are written in
//! their shortest round-trip decimal form, so a save/load cycle is exact.

use std::fs;
use std::path::Path;

use ffinit_core::{Activation, BranchGains, LayerSpec, Matrix, NetworkParams};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Document {
    format_version: u32,
    sizes: Vec<usize>,
    activation: String,
    branch_gains: Gains,
    pairs: Vec<Pair>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Gains {
    bottom_up: f64,
    top_down: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Pair {
    ff_weights: Vec<Vec<f64>>,
    ff_offsets: Vec<f64>,
    fb_weights: Vec<Vec<f64>>,
    fb_offsets: Vec<f64>,
}

fn rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|i| m.row(i).to_vec()).collect()
}

fn matrix(rows: Vec<Vec<f64>>, n_rows: usize, n_cols: usize, what: &str) -> std::result::Result<Matrix, String> {
    if rows.len() != n_rows || rows.iter().any(|r| r.len() != n_cols) {
        return Err(format!("{what} must be {n_rows}x{n_cols}"));
    }
    Matrix::from_row_major(n_rows, n_cols, rows.concat()).map_err(|e| e.to_string())
}

pub fn to_string(params: &NetworkParams) -> String {
    let doc = Document {
        format_version: FORMAT_VERSION,
        sizes: params.spec().sizes().to_vec(),
        activation: params.activation().name().to_string(),
        branch_gains: Gains {
            bottom_up: params.gains().bottom_up,
            top_down: params.gains().top_down,
        },
        pairs: (1..=params.depth())
            .map(|k| Pair {
                ff_weights: rows(params.ff_weight(k)),
                ff_offsets: params.ff_offset(k).to_vec(),
                fb_weights: rows(params.fb_weight(k)),
                fb_offsets: params.fb_offset(k).to_vec(),
            })
            .collect(),
    };
    let mut text = serde_json::to_string(&doc).expect("checkpoint serialization");
    text.push('\n');
    text
}

/// Parses a checkpoint; `Err` carries a human-readable reason.
pub fn from_str(text: &str) -> std::result::Result<NetworkParams, String> {
    let doc: Document = serde_json::from_str(text).map_err(|e| e.to_string())?;
    if doc.format_version != FORMAT_VERSION {
        return Err(format!(
            "unsupported format_version {} (expected {FORMAT_VERSION})",
            doc.format_version
        ));
    }
    let spec = LayerSpec::new(doc.sizes).map_err(|e| e.to_string())?;
    let activation = Activation::from_name(&doc.activation)
        .ok_or_else(|| format!("unknown activation {:?}", doc.activation))?;
    let gains = BranchGains::new(doc.branch_gains.bottom_up, doc.branch_gains.top_down)
        .map_err(|e| e.to_string())?;
    if doc.pairs.len() != spec.depth() {
        return Err(format!(
            "{} layer pairs listed for {} sizes",
            doc.pairs.len(),
            spec.sizes().len()
        ));
    }
    let s = spec.sizes().to_vec();
    let (mut ff_w, mut fb_w, mut ff_b, mut fb_c) = (vec![], vec![], vec![], vec![]);
    for (i, pair) in doc.pairs.into_iter().enumerate() {
        let k = i + 1;
        ff_w.push(matrix(pair.ff_weights, s[k], s[k - 1], &format!("ff_weights of pair {k}"))?);
        fb_w.push(matrix(pair.fb_weights, s[k - 1], s[k], &format!("fb_weights of pair {k}"))?);
        ff_b.push(pair.ff_offsets);
        fb_c.push(pair.fb_offsets);
    }
    NetworkParams::new(spec, ff_w, fb_w, ff_b, fb_c, gains, activation).map_err(|e| e.to_string())
}

pub fn save(params: &NetworkParams, path: &Path) -> Result<()> {
    fs::write(path, to_string(params)).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<NetworkParams> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_str(&text).map_err(|message| Error::Format {
        path: path.to_path_buf(),
        message,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ffinit_core::init_random_tied;

    fn awkward_params() -> NetworkParams {
        let spec = LayerSpec::new(vec![3, 2, 2]).unwrap();
        let mut p = init_random_tied(&spec, Activation::LogisticSigmoid, 1.7, 3);
        p.ff_offset_mut(1).copy_from_slice(&[0.1 + 0.2, -1e-300]);
        p.fb_offset_mut(2).copy_from_slice(&[f64::MIN_POSITIVE, 1.0 / 3.0]);
        p.fb_weight_mut(1).set(2, 1, 5e-324);
        p.set_gains(BranchGains::new(0.25, 0.75).unwrap()).unwrap();
        p
    }

    #[test]
    fn round_trip_is_exact() {
        let p = awkward_params();
        let text = to_string(&p);
        let q = from_str(&text).unwrap();
        assert_eq!(p, q);
        assert_eq!(text, to_string(&q));
    }

    #[test]
    fn document_is_self_describing() {
        let v: serde_json::Value = serde_json::from_str(&to_string(&awkward_params())).unwrap();
        assert_eq!(v["format_version"], 1);
        assert_eq!(v["sizes"], serde_json::json!([3, 2, 2]));
        assert_eq!(v["activation"], "logistic-sigmoid");
        assert_eq!(v["branch_gains"]["top_down"], 0.75);
        assert_eq!(v["pairs"][0]["ff_weights"].as_array().unwrap().len(), 2);
        assert_eq!(v["pairs"][0]["fb_weights"].as_array().unwrap().len(), 3);
    }

    #[test]
    fn rejects_bad_documents() {
        let good = to_string(&awkward_params());
        assert!(from_str(&good.replace("\"format_version\":1", "\"format_version\":9")).is_err());
        assert!(from_str(&good.replace("logistic-sigmoid", "relu")).is_err());
        assert!(from_str(&good.replace("\"sizes\":[3,2,2]", "\"sizes\":[3,2,3]")).is_err());
        assert!(from_str(&good[..good.len() / 2]).is_err());
        assert!(from_str(&good.replace("\"sizes\"", "\"extra\":0,\"sizes\"")).is_err());
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = load(Path::new("/nonexistent/checkpoint.json")).unwrap_err();
        assert_eq!(err.exit_code(), 3);
    }
}
