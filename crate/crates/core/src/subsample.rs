//! Sample sizes, scaled sub-network values and the plain exhaustive search.

use crate::bits::BitVector;
use crate::config::TesterConfig;
use crate::error::{Error, Result};
use crate::network::{DeepNetwork, ShlNetwork};
use crate::query::WeightOracle;
use crate::sampling::SamplePlan;
use crate::search::{Cmp, SampledNetwork};

/// `(s, t)` for the two-sided single-hidden-layer testers:
/// `s = ceil(scale * 2^20 / eps^2 * ln(1/(eps*lambda)))`,
/// `t = ceil(scale * 2^30 / eps^4 * ln(1/(eps*lambda)))`.
pub fn default_sizes_shl(cfg: &TesterConfig) -> Result<(u64, u64)> {
    cfg.validate()?;
    let eps = cfg.epsilon;
    let ln = (1.0 / (eps * cfg.lambda)).ln();
    let s = cfg.scaled(2f64.powi(20) / (eps * eps) * ln);
    let t = cfg.scaled(2f64.powi(30) / eps.powi(4) * ln);
    Ok((s, t))
}

/// `(nm/st) * w^T relu(T A S x)`, reading weights through `oracle`.
pub fn scaled_value_shl(
    oracle: &mut WeightOracle<'_, ShlNetwork>,
    plan: &SamplePlan,
    x: &BitVector,
) -> Result<f64> {
    let net = oracle.network();
    SampledNetwork::from_shl(oracle, net, plan)?.value(x)
}

/// `prod(m_i/s_i) * h_{l+1}(x)` for a single-output deep network.
pub fn scaled_value_deep(
    oracle: &mut WeightOracle<'_, DeepNetwork>,
    plan: &SamplePlan,
    x: &BitVector,
) -> Result<f64> {
    let net = oracle.network();
    SampledNetwork::from_deep(oracle, net, plan)?.value(x)
}

/// Scans every input that is zero outside `free` and returns the first one
/// whose value passes `cmp` against `threshold`.
///
/// Candidates are visited in counting order with `free[0]` as the most
/// significant bit. `free` must hold distinct indices below `n`.
pub fn find_witness(
    evaluator: impl Fn(&BitVector) -> f64,
    n: usize,
    free: &[usize],
    threshold: f64,
    cmp: Cmp,
    enum_cap: u32,
) -> Result<Option<BitVector>> {
    if free.len() > enum_cap as usize || free.len() >= 64 {
        return Err(Error::EnumerationTooLarge {
            size_log2: free.len() as f64,
            cap: enum_cap,
        });
    }
    if let Some(&bad) = free.iter().find(|&&i| i >= n) {
        return Err(Error::IndexOutOfRange { index: bad, bound: n });
    }
    let f = free.len();
    for code in 0u64..(1u64 << f) {
        let mut x = BitVector::zeros(n);
        for (pos, &i) in free.iter().enumerate() {
            if code >> (f - 1 - pos) & 1 == 1 {
                x.set(i, true);
            }
        }
        if cmp.holds(evaluator(&x), threshold) {
            return Ok(Some(x));
        }
    }
    Ok(None)
}
