//! Benchmark networks, reductions, completion and repair procedures, and
//! exact identities about parity-coupled sign variables.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_integer::binomial;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::Serialize;

use crate::bits::BitVector;
use crate::distfree::KSetDistribution;
use crate::error::{Error, Result};
use crate::network::{Matrix, ShlNetwork, WeightCoord};

/// Two blocks: inputs `I1` feed hidden `H1` (output weight `+1`), inputs
/// `I2` feed hidden `H2` (output weight `-1`). `|I1| = |H1| = 10 sqrt(eps) n`,
/// `|I2| = |H2| = 20 sqrt(eps) n`, `m = n`.
pub fn vanilla_hardness_network(n: usize, epsilon: f64) -> Result<ShlNetwork> {
    if !(epsilon > 0.0 && epsilon < 1e-3) {
        return Err(Error::Params(format!("epsilon {epsilon} must be in (0, 1/1000)")));
    }
    let root = epsilon.sqrt() * n as f64;
    let unit = root.round();
    if unit < 1.0 || (root - unit).abs() > 1e-9 * root.max(1.0) {
        return Err(Error::Params(format!("sqrt(eps) * n = {root} is not a positive integer")));
    }
    let (b1, b2) = vanilla_blocks(n, epsilon);
    let a = Matrix::from_fn(n, n, |j, i| {
        let first = j < b1 && i < b1;
        let second = (b1..b1 + b2).contains(&j) && (b1..b1 + b2).contains(&i);
        if first || second {
            1.0
        } else {
            0.0
        }
    });
    let w = (0..n)
        .map(|j| {
            if j < b1 {
                1.0
            } else if j < b1 + b2 {
                -1.0
            } else {
                0.0
            }
        })
        .collect();
    ShlNetwork::new(a, w)
}

/// `(|I1|, |I2|)` of [`vanilla_hardness_network`].
pub fn vanilla_blocks(n: usize, epsilon: f64) -> (usize, usize) {
    let unit = (epsilon.sqrt() * n as f64).round() as usize;
    (10 * unit, 20 * unit)
}

/// `Xi_k = (-1)^{k/2-1} 2^{-(k-1)} C(k-2, k/2-1)` for even `k >= 2`.
pub fn xi(k: usize) -> Result<BigRational> {
    if k < 2 || k % 2 == 1 {
        return Err(Error::Params(format!("k = {k} must be even and at least 2")));
    }
    let c = binomial(BigInt::from(k - 2), BigInt::from(k / 2 - 1));
    let v = BigRational::new(c, BigInt::one() << (k - 1));
    Ok(if (k / 2 - 1) % 2 == 1 { -v } else { v })
}

/// `gamma = Xi_k / (8k)`.
pub fn gamma(k: usize) -> Result<BigRational> {
    Ok(xi(k)? / BigInt::from(8 * k))
}

fn to_f64(q: &BigRational) -> f64 {
    use num_traits::ToPrimitive;
    q.to_f64().unwrap_or(f64::NAN)
}

fn check_k(k: usize, max: usize) -> Result<()> {
    if k < 2 || k % 2 == 1 || k > max {
        return Err(Error::Params(format!("k = {k} must be even, in [2, {max}]")));
    }
    Ok(())
}

/// `E[relu(X_1 + .. + X_k)] - E[relu(U_1 + .. + U_k)]`, where the `U_i` are
/// uniform signs, `X_1..X_{k-1}` are uniform signs and `X_k = +1` iff an odd
/// number of `X_1..X_{k-1}` are `+1`.
pub fn parity_gap(k: usize) -> Result<BigRational> {
    check_k(k, 24)?;
    let big = |v: usize| BigInt::from(v);
    // c of the first k-1 are +1, in C(k-1, c) ways
    let mut coupled = BigInt::zero();
    for c in 0..k {
        let last = if c % 2 == 1 { 1 } else { -1 };
        let sum = 2 * c as i64 - (k as i64 - 1) + last;
        coupled += binomial(big(k - 1), big(c)) * BigInt::from(sum.max(0));
    }
    let mut free = BigInt::zero();
    for c in 0..=k {
        let sum = 2 * c as i64 - k as i64;
        free += binomial(big(k), big(c)) * BigInt::from(sum.max(0));
    }
    Ok(BigRational::new(coupled, BigInt::one() << (k - 1)) - BigRational::new(free, BigInt::one() << k))
}

/// `E[relu(Y_1 + .. + Y_l)] - E[relu(X_1 + .. + X_l)]` for independent signs
/// with `P(Y_i = 1) = 1/2 + gamma` and `P(X_i = 1) = 1/2`.
pub fn expectation_gap(ell: usize, gamma: &BigRational) -> Result<BigRational> {
    let half = BigRational::new(BigInt::one(), BigInt::from(2));
    if ell == 0 || gamma.is_negative() || *gamma >= half {
        return Err(Error::Params("need l >= 1 and gamma in [0, 1/2)".into()));
    }
    let mean_relu = |p: &BigRational| {
        // dist[c] = P(c of the first i variables are +1)
        let q = BigRational::one() - p;
        let mut dist = vec![BigRational::one()];
        for _ in 0..ell {
            let mut next = vec![BigRational::zero(); dist.len() + 1];
            for (c, pr) in dist.iter().enumerate() {
                next[c] += pr * &q;
                next[c + 1] += pr * p;
            }
            dist = next;
        }
        dist.iter().enumerate().fold(BigRational::zero(), |acc, (c, pr)| {
            let sum = 2 * c as i64 - ell as i64;
            acc + pr * BigRational::from_integer(BigInt::from(sum.max(0)))
        })
    };
    Ok(mean_relu(&(&half + gamma)) - mean_relu(&half))
}

/// Outcomes of the parity-coupled `X_1..X_k` over all `2^{k-1}` seeds, as
/// bit patterns (bit `i` set iff `X_{i+1} = +1`).
fn coupled_outcomes(k: usize) -> Vec<u64> {
    (0u64..1 << (k - 1))
        .map(|seed| {
            let odd = seed.count_ones() % 2 == 1;
            seed | (u64::from(odd) << (k - 1))
        })
        .collect()
}

/// Whether every `k-1` of the parity-coupled variables are jointly uniform.
pub fn check_k_minus_1_wise(k: usize) -> Result<bool> {
    check_k(k, 16)?;
    let outcomes = coupled_outcomes(k);
    for drop in 0..k {
        let mut counts = vec![0u32; 1 << (k - 1)];
        for &o in &outcomes {
            let low = o & ((1 << drop) - 1);
            let high = (o >> (drop + 1)) << drop;
            counts[(low | high) as usize] += 1;
        }
        if counts.iter().any(|&c| c != 1) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Whether all `k` parity-coupled variables are jointly uniform (they never are).
pub fn full_tuple_uniform(k: usize) -> Result<bool> {
    check_k(k, 16)?;
    let outcomes = coupled_outcomes(k);
    let mut counts = vec![0u32; 1 << k];
    for &o in &outcomes {
        counts[o as usize] += 1;
    }
    Ok(counts.iter().all(|&c| c == counts[0]))
}

/// Which of the two hardness distributions a network is drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, serde::Deserialize)]
pub enum World {
    N1,
    N2,
}

/// Parameters of a hardness construction, written next to the network.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstructionMeta {
    pub kind: String,
    pub n: usize,
    pub k: usize,
    pub gamma: String,
    pub gamma_f64: f64,
    pub partition: Vec<Vec<usize>>,
}

impl ConstructionMeta {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("metadata always serializes")
    }
}

pub(crate) fn check_hardness_params(n: usize, k: usize) -> Result<()> {
    if k < 2 || k % 2 == 1 || k.is_multiple_of(4) {
        return Err(Error::Params(format!("k = {k} must be even and not divisible by 4")));
    }
    if n == 0 || !n.is_multiple_of(k) || !n.is_multiple_of(2) {
        return Err(Error::Params(format!("n = {n} must be a positive multiple of k = {k} and of 2")));
    }
    Ok(())
}

/// Uniformly random partition of `0..n` into `n/k` sets of size `k`.
/// Members keep their drawn order.
pub fn random_partition<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> KSetDistribution {
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    KSetDistribution::new(n, k, perm.chunks(k).map(<[usize]>::to_vec).collect())
        .expect("chunks of a permutation form a partition")
}

/// `N1`: hidden nodes `0..n/2` (set P, output `+1`) get uniform `±1` edges;
/// hidden nodes `n/2..n` (set N, output `-1`) get `+1` with probability
/// `1/2 + gamma`.
pub fn sample_n1<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> Result<(ShlNetwork, KSetDistribution)> {
    sample_world(World::N1, n, k, rng)
}

/// `N2`: like `N1`, but inside each k-set the last member's edge into a P
/// node is `+1` iff an odd number of the other members' edges are `+1`.
pub fn sample_n2<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> Result<(ShlNetwork, KSetDistribution)> {
    sample_world(World::N2, n, k, rng)
}

pub fn sample_world<R: Rng + ?Sized>(
    world: World,
    n: usize,
    k: usize,
    rng: &mut R,
) -> Result<(ShlNetwork, KSetDistribution)> {
    check_hardness_params(n, k)?;
    let p_plus = 0.5 + to_f64(&gamma(k)?);
    let dist = random_partition(n, k, rng);
    let half = n / 2;
    let mut a = Matrix::zeros(n, n);
    for j in 0..half {
        let row = a.row_mut(j);
        for v in row.iter_mut() {
            *v = if rng.gen::<bool>() { 1.0 } else { -1.0 };
        }
        if world == World::N2 {
            for set in dist.sets() {
                let (last, others) = set.split_last().expect("sets are non-empty");
                let plus = others.iter().filter(|&&i| row[i] > 0.0).count();
                row[*last] = if plus % 2 == 1 { 1.0 } else { -1.0 };
            }
        }
    }
    for j in half..n {
        for v in a.row_mut(j).iter_mut() {
            *v = if rng.gen_bool(p_plus) { 1.0 } else { -1.0 };
        }
    }
    let w = (0..n).map(|j| if j < half { 1.0 } else { -1.0 }).collect();
    Ok((ShlNetwork::new(a, w)?, dist))
}

pub fn hardness_meta(world: World, dist: &KSetDistribution) -> Result<ConstructionMeta> {
    let g = gamma(dist.k())?;
    Ok(ConstructionMeta {
        kind: format!("{world:?}").to_lowercase(),
        n: dist.n(),
        k: dist.k(),
        gamma: g.to_string(),
        gamma_f64: to_f64(&g),
        partition: dist.sets().to_vec(),
    })
}

/// Network with an input whose output is 1 iff `items` splits into two
/// halves of equal sum.
///
/// Inputs `0..N` select a subset, input `N` is the switch. With
/// `W = sum(items)` and `D` the least power of two `>= W`, hidden node 0
/// gets `r_i/D` and `-W/(2D)`, node 1 the negations, node 2 the switch
/// alone; output weights are `-1, -1, 1/(2D)`. All weights are dyadic, so
/// evaluation is exact.
pub fn partition_reduction(items: &[u64]) -> Result<ShlNetwork> {
    if items.is_empty() || items.contains(&0) {
        return Err(Error::Params("items must be a non-empty list of positive integers".into()));
    }
    let total: u64 = items.iter().sum();
    if total >= 1 << 50 {
        return Err(Error::Params("item sum too large for exact evaluation".into()));
    }
    let d = total.next_power_of_two() as f64;
    let big_n = items.len();
    let mut a = Matrix::zeros(3, big_n + 1);
    for (i, &r) in items.iter().enumerate() {
        a.set(0, i, r as f64 / d);
        a.set(1, i, -(r as f64) / d);
    }
    a.set(0, big_n, -(total as f64) / (2.0 * d));
    a.set(1, big_n, total as f64 / (2.0 * d));
    a.set(2, big_n, 1.0);
    ShlNetwork::new(a, vec![-1.0, -1.0, 1.0 / (2.0 * d)])
}

/// Whether `items` has a subset summing to half the total.
pub fn has_equal_partition(items: &[u64]) -> bool {
    let total: u64 = items.iter().sum();
    if total % 2 == 1 {
        return false;
    }
    let half = (total / 2) as usize;
    let mut reach = vec![false; half + 1];
    reach[0] = true;
    for &r in items {
        let r = r as usize;
        for s in (r..=half).rev() {
            reach[s] |= reach[s - r];
        }
    }
    reach[half]
}

/// The function a completed network is meant to compute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Completion {
    Zero,
    Or,
}

/// Fills every weight not in `fixed` so that the network computes the
/// 0-function. Needs `|fixed| <= m/4`.
pub fn complete_to_zero(n: usize, m: usize, fixed: &BTreeMap<WeightCoord, f64>) -> Result<ShlNetwork> {
    complete(n, m, fixed, Completion::Zero)
}

/// Fills every weight not in `fixed` so that the network computes `OR`.
/// Needs `|fixed| <= m/4`.
pub fn complete_to_or(n: usize, m: usize, fixed: &BTreeMap<WeightCoord, f64>) -> Result<ShlNetwork> {
    complete(n, m, fixed, Completion::Or)
}

fn complete(n: usize, m: usize, fixed: &BTreeMap<WeightCoord, f64>, target: Completion) -> Result<ShlNetwork> {
    if n == 0 || m == 0 {
        return Err(Error::Dimension("network needs n, m >= 1".into()));
    }
    if 4 * fixed.len() > m {
        return Err(Error::Params(format!("{} fixed entries exceed m/4 = {}", fixed.len(), m as f64 / 4.0)));
    }
    for (c, &v) in fixed {
        let ok = match c.layer {
            0 => (c.row as usize) < m && (c.col as usize) < n,
            1 => (c.row as usize) < m && c.col == 0,
            _ => false,
        };
        if !ok {
            return Err(Error::Params(format!("coordinate {c:?} is outside an {m} x {n} network")));
        }
        crate::network::check_weight(v, || format!("{c:?}"))?;
    }
    let (w_free, active) = match target {
        Completion::Zero => (-1.0, 1.0),
        Completion::Or => (1.0, -1.0),
    };
    let w: Vec<f64> = (0..m)
        .map(|j| *fixed.get(&WeightCoord::new(1, j, 0)).unwrap_or(&w_free))
        .collect();
    let a = Matrix::from_fn(m, n, |j, i| match fixed.get(&WeightCoord::new(0, j, i)) {
        Some(&v) => v,
        // rows with a positive output weight are switched off for the zero
        // target and switched on for OR
        None if w[j] > 0.0 => -active,
        None => active,
    });
    ShlNetwork::new(a, w)
}

/// Outcome of [`repair_to_closest`].
#[derive(Debug, Clone, PartialEq)]
pub struct Repair {
    pub network: ShlNetwork,
    pub target: Completion,
    /// Estimate of `E[w^T relu(Ax)]` over uniform `x`.
    pub expectation: f64,
    pub exact: bool,
    pub first_layer_edits: usize,
    pub second_layer_edits: usize,
    /// `eps >= 1/m`.
    pub in_range: bool,
}

/// Mean of `w^T relu(Ax)` over uniform inputs: exact for `n <= 20`, else
/// over `10^5` samples.
pub fn mean_value<R: Rng + ?Sized>(net: &ShlNetwork, rng: &mut R) -> Result<(f64, bool)> {
    let n = net.n();
    if n <= 20 {
        let mut sum = 0.0;
        for code in 0u64..1 << n {
            sum += net.eval(&BitVector::from_index(n, code))?.0;
        }
        Ok((sum / (1u64 << n) as f64, true))
    } else {
        let samples = 100_000;
        let words = n.div_ceil(64);
        let mut sum = 0.0;
        for _ in 0..samples {
            let x = BitVector::from_words(n, (0..words).map(|_| rng.gen()).collect());
            sum += net.eval(&x)?.0;
        }
        Ok((sum / samples as f64, false))
    }
}

/// Edits at most `eps*n*m` first-layer and `eps*m` second-layer weights so
/// the network moves toward `OR` (positive mean value) or the 0-function.
///
/// OR side: output weights `<= 0` become `1`. If there are at most `eps*m`
/// of them all flip and one random hidden row becomes all ones; otherwise
/// `floor(eps*m)` random ones flip and their rows become all ones. The
/// zero side mirrors this with `-1`.
pub fn repair_to_closest<R: Rng + ?Sized>(net: &ShlNetwork, epsilon: f64, rng: &mut R) -> Result<Repair> {
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(Error::Params(format!("epsilon {epsilon} not in (0, 1]")));
    }
    let (n, m) = (net.n(), net.m());
    let (expectation, exact) = mean_value(net, rng)?;
    let target = if expectation > 0.0 {
        Completion::Or
    } else {
        Completion::Zero
    };
    let sign = if target == Completion::Or { 1.0 } else { -1.0 };
    let mut a = net.a().clone();
    let mut w = net.w().to_vec();
    let wrong: Vec<usize> = (0..m)
        .filter(|&j| if sign > 0.0 { w[j] <= 0.0 } else { w[j] > 0.0 })
        .collect();
    let budget = (epsilon * m as f64).floor() as usize;
    if wrong.len() as f64 <= epsilon * m as f64 {
        for &j in &wrong {
            w[j] = sign;
        }
        if target == Completion::Or {
            let j = rng.gen_range(0..m);
            a.row_mut(j).fill(1.0);
        }
    } else {
        let picked: Vec<usize> = wrong.choose_multiple(rng, budget).copied().collect();
        for j in picked {
            w[j] = sign;
            a.row_mut(j).fill(1.0);
        }
    }
    let first_layer_edits = a
        .values()
        .iter()
        .zip(net.a().values())
        .filter(|(x, y)| x != y)
        .count();
    let second_layer_edits = w.iter().zip(net.w()).filter(|(x, y)| x != y).count();
    debug_assert!(first_layer_edits as f64 <= (epsilon * (n * m) as f64).ceil());
    Ok(Repair {
        network: ShlNetwork::new(a, w)?,
        target,
        expectation,
        exact,
        first_layer_edits,
        second_layer_edits,
        in_range: epsilon * m as f64 >= 1.0,
    })
}
