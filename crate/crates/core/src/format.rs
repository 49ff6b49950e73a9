//! JSON network documents.
//!
//! ```text
//! {"type":"shl","n":N,"m":M,"A":[[..n..] x m],"w":[..m..]}
//! {"type":"mo","n":N,"m":M,"r":R,"A":[[..n..] x m],"W":[[..r..] x m]}
//! {"type":"deep","dims":[m0,..,m_{l+1}],"layers":[W0,..,W_l]}
//! ```
//!
//! Matrices are row-major arrays of rows. Loading validates shapes and the
//! `[-1, 1]` weight range.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{DeepNetwork, Matrix, MoNetwork, Network, ShlNetwork};

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
enum Document {
    Shl {
        n: usize,
        m: usize,
        #[serde(rename = "A")]
        a: Vec<Vec<f64>>,
        w: Vec<f64>,
    },
    Mo {
        n: usize,
        m: usize,
        r: usize,
        #[serde(rename = "A")]
        a: Vec<Vec<f64>>,
        #[serde(rename = "W")]
        w: Vec<Vec<f64>>,
    },
    Deep {
        dims: Vec<usize>,
        layers: Vec<Vec<Vec<f64>>>,
    },
}

fn shaped(rows: &[Vec<f64>], r: usize, c: usize, label: &str) -> Result<Matrix> {
    if rows.len() != r || rows.iter().any(|row| row.len() != c) {
        return Err(Error::Dimension(format!("{label} must be {r} x {c}")));
    }
    Matrix::from_rows(rows)
}

pub fn to_json(net: &Network) -> String {
    let doc = match net {
        Network::Shl(n) => Document::Shl {
            n: n.n(),
            m: n.m(),
            a: n.a().to_rows(),
            w: n.w().to_vec(),
        },
        Network::Mo(n) => Document::Mo {
            n: n.n(),
            m: n.m(),
            r: n.r(),
            a: n.a().to_rows(),
            w: n.w().to_rows(),
        },
        Network::Deep(n) => Document::Deep {
            dims: n.dims().to_vec(),
            layers: n.layers().iter().map(Matrix::to_rows).collect(),
        },
    };
    serde_json::to_string(&doc).expect("network documents always serialize")
}

pub fn from_json(text: &str) -> Result<Network> {
    let doc: Document =
        serde_json::from_str(text).map_err(|e| Error::Malformed(e.to_string()))?;
    match doc {
        Document::Shl { n, m, a, w } => {
            if w.len() != m {
                return Err(Error::Dimension(format!("w must have {m} entries")));
            }
            Ok(Network::Shl(ShlNetwork::new(shaped(&a, m, n, "A")?, w)?))
        }
        Document::Mo { n, m, r, a, w } => Ok(Network::Mo(MoNetwork::new(
            shaped(&a, m, n, "A")?,
            shaped(&w, m, r, "W")?,
        )?)),
        Document::Deep { dims, layers } => {
            if dims.len() < 3 || layers.len() + 1 != dims.len() {
                return Err(Error::Dimension(
                    "deep network needs dims (m0..m_{l+1}) with l >= 1 and one matrix per gap".into(),
                ));
            }
            let mats = layers
                .iter()
                .enumerate()
                .map(|(k, l)| shaped(l, dims[k + 1], dims[k], &format!("layers[{k}]")))
                .collect::<Result<Vec<_>>>()?;
            Ok(Network::Deep(DeepNetwork::new(mats)?))
        }
    }
}

pub fn load(path: impl AsRef<Path>) -> Result<Network> {
    from_json(&std::fs::read_to_string(path)?)
}

pub fn save(net: &Network, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, to_json(net))?;
    Ok(())
}
