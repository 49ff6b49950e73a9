//! Uniform subsets of layer indices.

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};

/// Partial Fisher–Yates: `k` distinct uniform indices from `0..n`, ascending.
pub fn sample_indices<R: Rng + ?Sized>(rng: &mut R, n: usize, k: usize) -> Vec<usize> {
    let k = k.min(n);
    let mut pool: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = rng.gen_range(i..n);
        pool.swap(i, j);
    }
    pool.truncate(k);
    pool.sort_unstable();
    pool
}

/// Sampled node indices per layer.
///
/// `layers[k]` holds ascending indices into layer `k` of a network whose
/// layer sizes are `dims[k]`. A request larger than a layer reads the whole
/// layer and is flagged in `clamped`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SamplePlan {
    dims: Vec<usize>,
    layers: Vec<Vec<usize>>,
    clamped: Vec<bool>,
}

impl SamplePlan {
    /// Draws `sizes[k]` nodes from each layer `k` in order.
    pub fn draw<R: Rng + ?Sized>(dims: &[usize], sizes: &[u64], rng: &mut R) -> Self {
        assert_eq!(dims.len(), sizes.len(), "one size per layer");
        let mut layers = Vec::with_capacity(dims.len());
        let mut clamped = Vec::with_capacity(dims.len());
        for (&d, &s) in dims.iter().zip(sizes) {
            let take = usize::try_from(s).unwrap_or(usize::MAX);
            clamped.push(take > d);
            layers.push(sample_indices(rng, d, take));
        }
        SamplePlan {
            dims: dims.to_vec(),
            layers,
            clamped,
        }
    }

    /// Every node of every layer.
    pub fn full(dims: &[usize]) -> Self {
        SamplePlan {
            dims: dims.to_vec(),
            layers: dims.iter().map(|&d| (0..d).collect()).collect(),
            clamped: vec![false; dims.len()],
        }
    }

    /// A plan with explicit index sets.
    pub fn from_layers(dims: &[usize], layers: Vec<Vec<usize>>) -> Result<Self> {
        if dims.len() != layers.len() {
            return Err(Error::Dimension("one index list per layer".into()));
        }
        let mut sorted = Vec::with_capacity(layers.len());
        for (k, (&d, mut idx)) in dims.iter().zip(layers).enumerate() {
            idx.sort_unstable();
            if idx.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::Params(format!("duplicate index in layer {k}")));
            }
            if let Some(&bad) = idx.iter().find(|&&i| i >= d) {
                return Err(Error::IndexOutOfRange { index: bad, bound: d });
            }
            if idx.is_empty() {
                return Err(Error::Params(format!("layer {k} sample is empty")));
            }
            sorted.push(idx);
        }
        Ok(SamplePlan {
            dims: dims.to_vec(),
            layers: sorted,
            clamped: vec![false; dims.len()],
        })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn layer(&self, k: usize) -> &[usize] {
        &self.layers[k]
    }

    pub fn layers(&self) -> &[Vec<usize>] {
        &self.layers
    }

    /// Sizes actually used, after clamping.
    pub fn sizes(&self) -> Vec<usize> {
        self.layers.iter().map(Vec::len).collect()
    }

    pub fn clamped(&self) -> &[bool] {
        &self.clamped
    }

    pub fn any_clamped(&self) -> bool {
        self.clamped.iter().any(|&c| c)
    }

    /// `prod(dims) / prod(sizes)`, computed in floating point.
    pub fn scale_factor(&self) -> f64 {
        let num = self.dims.iter().fold(1.0, |acc, &d| acc * d as f64);
        let den = self.layers.iter().fold(1.0, |acc, l| acc * l.len() as f64);
        num / den
    }
}

/// Draws the two-layer plan of the single-hidden-layer testers.
pub fn draw_plan_shl<R: Rng + ?Sized>(n: usize, m: usize, s: u64, t: u64, rng: &mut R) -> SamplePlan {
    SamplePlan::draw(&[n, m], &[s, t], rng)
}
