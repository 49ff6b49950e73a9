//! Ground truth by enumerating every input of a small network.

use num_bigint::BigInt;
use num_rational::BigRational;
use rayon::prelude::*;
use serde::Serialize;

use crate::bits::BitVector;
use crate::error::{Error, Result};
use crate::network::{Network, ShlNetwork, WeightCoord};

/// Largest input length the exhaustive checks accept.
pub const MAX_INPUTS: usize = 24;

/// The function a network is checked against.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Target {
    Zero,
    Or,
    /// `b` on every nonzero input, all zeros at `0`.
    NearConstant(BitVector),
}

impl Target {
    fn expected(&self, x: &BitVector, outputs: usize) -> BitVector {
        match self {
            Target::Zero => BitVector::zeros(outputs),
            Target::Or if x.is_zero() => BitVector::zeros(outputs),
            Target::Or => BitVector::ones(outputs),
            Target::NearConstant(b) if x.is_zero() => BitVector::zeros(b.len()),
            Target::NearConstant(b) => b.clone(),
        }
    }
}

fn check_size(net: &Network, target: &Target) -> Result<()> {
    let n = net.inputs();
    if n > MAX_INPUTS {
        return Err(Error::Params(format!("n = {n} exceeds the enumeration limit {MAX_INPUTS}")));
    }
    if let Target::NearConstant(b) = target {
        if b.len() != net.outputs() {
            return Err(Error::Dimension(format!(
                "target has {} bits, network has {} outputs",
                b.len(),
                net.outputs()
            )));
        }
    }
    Ok(())
}

fn mismatch(net: &Network, target: &Target, code: u64) -> bool {
    let x = BitVector::from_index(net.inputs(), code);
    let bits = net.eval_bits(&x).expect("input length matches the network");
    bits != target.expected(&x, net.outputs())
}

const BLOCK: u64 = 1 << 12;

/// Number of inputs on which the network's output differs from `target`.
pub fn mismatch_count(net: &Network, target: &Target) -> Result<u64> {
    check_size(net, target)?;
    let total = 1u64 << net.inputs();
    Ok((0..total.div_ceil(BLOCK))
        .into_par_iter()
        .map(|b| {
            (b * BLOCK..((b + 1) * BLOCK).min(total))
                .filter(|&c| mismatch(net, target, c))
                .count() as u64
        })
        .sum())
}

/// The smallest input (by index, bit 0 least significant) where the network
/// and `target` disagree.
pub fn counterexample(net: &Network, target: &Target) -> Result<Option<BitVector>> {
    check_size(net, target)?;
    let total = 1u64 << net.inputs();
    let first = (0..total.div_ceil(BLOCK))
        .into_par_iter()
        .find_map_first(|b| (b * BLOCK..((b + 1) * BLOCK).min(total)).find(|&c| mismatch(net, target, c)));
    Ok(first.map(|c| BitVector::from_index(net.inputs(), c)))
}

pub fn computes_exactly(net: &Network, target: &Target) -> Result<bool> {
    Ok(counterexample(net, target)?.is_none())
}

/// Fraction of inputs where the network and `target` disagree, over `2^n`.
pub fn delta_distance(net: &Network, target: &Target) -> Result<BigRational> {
    let wrong = mismatch_count(net, target)?;
    Ok(BigRational::new(BigInt::from(wrong), BigInt::from(1u64) << net.inputs()))
}

/// Outcome of [`far_certificate_tiny`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Certificate {
    /// These edits bring the network within `delta` of the target.
    CloseWithEdit(Vec<(WeightCoord, f64)>),
    /// No edit over the grid works. Not a proof of farness: real weights
    /// are not restricted to the grid.
    Exhausted,
}

/// Largest `n*m` accepted by [`far_certificate_tiny`].
pub const MAX_TINY_WEIGHTS: usize = 12;

/// Tries every way to change at most `floor(eps*n*m)` first-layer and
/// `floor(eps*m)` second-layer weights to values in `grid`, and returns the
/// first that leaves the network at distance at most `delta` from `target`.
pub fn far_certificate_tiny(
    net: &ShlNetwork,
    target: &Target,
    epsilon: f64,
    delta: f64,
    grid: &[f64],
) -> Result<Certificate> {
    let (n, m) = (net.n(), net.m());
    if n * m > MAX_TINY_WEIGHTS {
        return Err(Error::Params(format!("n*m = {} exceeds {MAX_TINY_WEIGHTS}", n * m)));
    }
    for &g in grid {
        crate::network::check_weight(g, || "grid".into())?;
    }
    let close = |candidate: &ShlNetwork| -> Result<bool> {
        let d = delta_distance(&Network::Shl(candidate.clone()), target)?;
        use num_traits::ToPrimitive;
        Ok(d.to_f64().unwrap_or(f64::INFINITY) <= delta)
    };
    if close(net)? {
        return Ok(Certificate::CloseWithEdit(Vec::new()));
    }
    let first: Vec<WeightCoord> = (0..m)
        .flat_map(|j| (0..n).map(move |i| WeightCoord::new(0, j, i)))
        .collect();
    let second: Vec<WeightCoord> = (0..m).map(|j| WeightCoord::new(1, j, 0)).collect();
    let max_first = (epsilon * (n * m) as f64).floor() as usize;
    let max_second = (epsilon * m as f64).floor() as usize;

    let first_sets = subsets_up_to(first.len(), max_first);
    let second_sets = subsets_up_to(second.len(), max_second);
    for fs in &first_sets {
        for ss in &second_sets {
            let coords: Vec<WeightCoord> = fs
                .iter()
                .map(|&i| first[i])
                .chain(ss.iter().map(|&i| second[i]))
                .collect();
            if coords.is_empty() {
                continue;
            }
            let mut choice = vec![0usize; coords.len()];
            loop {
                let (mut a, mut w) = (net.a().clone(), net.w().to_vec());
                for (c, &g) in coords.iter().zip(&choice) {
                    let v = grid[g];
                    if c.layer == 0 {
                        a.set(c.row as usize, c.col as usize, v);
                    } else {
                        w[c.row as usize] = v;
                    }
                }
                let candidate = ShlNetwork::new(a, w)?;
                if close(&candidate)? {
                    let edits = coords.iter().zip(&choice).map(|(&c, &g)| (c, grid[g])).collect();
                    return Ok(Certificate::CloseWithEdit(edits));
                }
                let mut d = 0;
                while d < choice.len() && choice[d] + 1 == grid.len() {
                    choice[d] = 0;
                    d += 1;
                }
                if d == choice.len() || grid.is_empty() {
                    break;
                }
                choice[d] += 1;
            }
        }
    }
    Ok(Certificate::Exhausted)
}

/// All subsets of `0..len` with at most `max` elements, smallest first.
fn subsets_up_to(len: usize, max: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for size in 1..=max.min(len) {
        let mut idx: Vec<usize> = (0..size).collect();
        loop {
            out.push(idx.clone());
            let mut i = size;
            while i > 0 && idx[i - 1] == len - size + i - 1 {
                i -= 1;
            }
            if i == 0 {
                break;
            }
            idx[i - 1] += 1;
            for j in i..size {
                idx[j] = idx[j - 1] + 1;
            }
        }
    }
    out
}
