//! Testers for networks with several hidden layers, and the multi-output
//! near-constant tester.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bits::BitVector;
use crate::config::TesterConfig;
use crate::error::{Error, Result};
use crate::network::{DeepNetwork, MoNetwork, Network, WeightCoord};
use crate::query::WeightOracle;
use crate::sampling::SamplePlan;
use crate::search::{Cmp, Condition, SampledNetwork};
use crate::testers_shl::{two_sided, ShlParams};
use crate::verdict::{Decision, Verdict};

/// Unscaled per-layer sample sizes `s*_0..s*_l`.
///
/// The least solution of
/// `s_k >= 512 (l+1)^2 (2/eps)^{2l} ln(2 prod_{i>k} s_i / (lambda (l+1)))` for `0 <= k <= l` and
/// `s_k >= 512 l^2 (2/eps)^{2l} ln(2^{s_0+1} l prod_{i>k} s_i / lambda)` for `1 <= k <= l`,
/// found by iterating from `s = 1` until nothing moves.
pub fn deep_sizes_raw(ell: usize, epsilon: f64, lambda: f64) -> Result<Vec<f64>> {
    if ell == 0 {
        return Err(Error::Params("at least one hidden layer is required".into()));
    }
    let l = ell as f64;
    let growth = (2.0 / epsilon).powi(2 * ell as i32);
    let c1 = 512.0 * (l + 1.0).powi(2) * growth;
    let c2 = 512.0 * l * l * growth;
    let mut s = vec![1.0f64; ell + 1];
    for _ in 0..10_000 {
        let mut next = vec![1.0f64; ell + 1];
        for k in 0..=ell {
            let ln_tail: f64 = s[k + 1..].iter().map(|v| v.ln()).sum();
            let mut need = c1 * (2f64.ln() + ln_tail - (lambda * (l + 1.0)).ln());
            if k >= 1 {
                let ln2 = (s[0] + 1.0) * 2f64.ln() + l.ln() + ln_tail - lambda.ln();
                need = need.max(c2 * ln2);
            }
            next[k] = need.max(1.0).max(s[k]);
        }
        let settled = next
            .iter()
            .zip(&s)
            .all(|(a, b)| (a - b).abs() <= 1e-12 * a.abs());
        s = next;
        if settled {
            return Ok(s);
        }
    }
    Err(Error::Params("sample size iteration did not settle".into()))
}

/// `ceil(scale * s*_k)` per layer.
pub fn deep_sizes(ell: usize, cfg: &TesterConfig) -> Result<Vec<u64>> {
    cfg.validate()?;
    Ok(deep_sizes_raw(ell, cfg.epsilon, cfg.lambda)?
        .into_iter()
        .map(|v| cfg.scaled(v))
        .collect())
}

fn layer_product(net: &DeepNetwork) -> f64 {
    net.dims()[..=net.depth()].iter().fold(1.0, |acc, &d| acc * d as f64)
}

/// `(1/16) (eps/2)^l prod_{i<=l} m_i`.
pub fn zero_bias_mhl(net: &DeepNetwork, epsilon: f64) -> f64 {
    (epsilon / 2.0).powi(net.depth() as i32) * layer_product(net) / 16.0
}

/// `(1/4) (eps/2)^l prod_{i<=l} m_i`.
pub fn or_bias_mhl(net: &DeepNetwork, epsilon: f64) -> f64 {
    (epsilon / 2.0).powi(net.depth() as i32) * layer_product(net) / 4.0
}

/// Sample sizes and bias of a deep run.
#[derive(Debug, Clone, PartialEq)]
pub struct DeepParams {
    pub sizes: Vec<u64>,
    pub bias: f64,
}

pub fn all_zero_tester_mhl(net: &DeepNetwork, cfg: &TesterConfig) -> Result<Verdict> {
    let params = DeepParams {
        sizes: deep_sizes(net.depth(), cfg)?,
        bias: zero_bias_mhl(net, cfg.epsilon),
    };
    all_zero_tester_mhl_with(net, cfg, &params)
}

pub fn or_tester_mhl(net: &DeepNetwork, cfg: &TesterConfig) -> Result<Verdict> {
    let params = DeepParams {
        sizes: deep_sizes(net.depth(), cfg)?,
        bias: or_bias_mhl(net, cfg.epsilon),
    };
    or_tester_mhl_with(net, cfg, &params)
}

pub fn all_zero_tester_mhl_with(net: &DeepNetwork, cfg: &TesterConfig, params: &DeepParams) -> Result<Verdict> {
    let cond = Condition {
        cmp: Cmp::Greater,
        threshold: params.bias,
        nonzero: false,
    };
    Ok(deep_run(net, cfg, &params.sizes, cond)?.0)
}

pub fn or_tester_mhl_with(net: &DeepNetwork, cfg: &TesterConfig, params: &DeepParams) -> Result<Verdict> {
    let cond = Condition {
        cmp: Cmp::Less,
        threshold: -params.bias,
        nonzero: false,
    };
    Ok(deep_run(net, cfg, &params.sizes, cond)?.0)
}

fn deep_run(
    net: &DeepNetwork,
    cfg: &TesterConfig,
    sizes: &[u64],
    cond: Condition,
) -> Result<(Verdict, Vec<WeightCoord>)> {
    cfg.validate()?;
    let ell = net.depth();
    if sizes.len() != ell + 1 {
        return Err(Error::Params(format!("need {} sample sizes, got {}", ell + 1, sizes.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let plan = SamplePlan::draw(&net.dims()[..=ell], sizes, &mut rng);
    let mut oracle = WeightOracle::new(net);
    let sampled = SampledNetwork::from_deep(&mut oracle, net, &plan)?;
    let witness = sampled.find_witness(cond, cfg.enum_cap)?;
    let mut verdict = Verdict::from_witness(witness, oracle.count(), plan.sizes());
    verdict.clamped = plan.any_clamped();
    verdict.scaled = cfg.constant_scale != 1.0;
    verdict.seed = cfg.seed;
    Ok((verdict, oracle.queried().copied().collect()))
}

/// Outputs sampled by the near-constant tester: `ceil(8/eps)`.
pub fn output_samples(epsilon: f64) -> usize {
    (8.0 / epsilon).ceil() as usize
}

const REPEATS: usize = 3;

/// Result of [`near_constant_tester`], with the outputs it looked at.
#[derive(Debug, Clone, PartialEq)]
pub struct NearConstantRun {
    pub verdict: Verdict,
    pub outputs: Vec<usize>,
    pub coords: BTreeSet<WeightCoord>,
}

/// Tests whether a multi-output network computes the near-constant function
/// `b` (`b` on every nonzero input).
///
/// Samples `ceil(8/eps)` outputs with replacement. Each sampled output is
/// tested on its own with the 0-tester (`b_j = 0`) or the OR-tester
/// (`b_j = 1`) at the derived distance `eps'`, three times, and the majority
/// decides. Any rejecting output rejects.
pub fn near_constant_tester(net: &Network, b: &BitVector, cfg: &TesterConfig) -> Result<Verdict> {
    Ok(near_constant_run(net, b, cfg)?.verdict)
}

pub fn near_constant_run(net: &Network, b: &BitVector, cfg: &TesterConfig) -> Result<NearConstantRun> {
    cfg.validate()?;
    let r = net.outputs();
    if b.len() != r {
        return Err(Error::Dimension(format!("target has {} bits, network has {r} outputs", b.len())));
    }
    let eps = cfg.epsilon;
    let derived = match net {
        Network::Mo(_) | Network::Shl(_) => eps * eps / 1025.0,
        Network::Deep(d) => {
            let l = d.depth() as f64;
            (eps / (2.0 - eps)).powi(d.depth() as i32) / (17.0 * (l + 1.0))
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let outputs: Vec<usize> = (0..output_samples(eps)).map(|_| rng.gen_range(0..r)).collect();
    let mut coords = BTreeSet::new();
    let mut sizes = Vec::new();
    let mut clamped = false;
    let mut failing = None;
    'outer: for &j in &outputs {
        let mut rejects = 0;
        let mut witness = None;
        for _ in 0..REPEATS {
            let sub = TesterConfig {
                epsilon: derived,
                seed: rng.gen(),
                ..cfg.clone()
            };
            let (v, read) = run_output(net, j, b.get(j), &sub)?;
            coords.extend(read);
            clamped |= v.clamped;
            sizes = v.sizes.clone();
            if v.rejected() {
                rejects += 1;
                witness = witness.or(v.witness);
            }
        }
        if 2 * rejects > REPEATS {
            failing = witness;
            break 'outer;
        }
    }
    let verdict = Verdict {
        decision: if failing.is_some() {
            Decision::Reject
        } else {
            Decision::Accept
        },
        queries: coords.len(),
        witness: failing,
        sizes,
        clamped,
        scaled: cfg.constant_scale != 1.0,
        seed: cfg.seed,
    };
    Ok(NearConstantRun {
        verdict,
        outputs,
        coords,
    })
}

/// Runs the single-output tester on output `j`, with coordinates mapped back
/// to the full network.
fn run_output(net: &Network, j: usize, one: bool, cfg: &TesterConfig) -> Result<(Verdict, Vec<WeightCoord>)> {
    match net {
        Network::Shl(s) => shl_output(s, one, cfg),
        Network::Mo(mo) => {
            let sub = mo.restrict_output(j)?;
            let (v, read) = shl_output(&sub, one, cfg)?;
            Ok((v, read.into_iter().map(|c| lift_mo(c, j)).collect()))
        }
        Network::Deep(d) => {
            let sub = d.restrict_output(j)?;
            let ell = d.depth();
            let params = DeepParams {
                sizes: deep_sizes(ell, cfg)?,
                bias: if one {
                    or_bias_mhl(&sub, cfg.epsilon)
                } else {
                    zero_bias_mhl(&sub, cfg.epsilon)
                },
            };
            let cond = if one {
                Condition { cmp: Cmp::Less, threshold: -params.bias, nonzero: false }
            } else {
                Condition { cmp: Cmp::Greater, threshold: params.bias, nonzero: false }
            };
            let (v, read) = deep_run(&sub, cfg, &params.sizes, cond)?;
            let lifted = read
                .into_iter()
                .map(|mut c| {
                    if c.layer as usize == ell {
                        c.row = j as u32;
                    }
                    c
                })
                .collect();
            Ok((v, lifted))
        }
    }
}

fn shl_output(net: &crate::network::ShlNetwork, one: bool, cfg: &TesterConfig) -> Result<(Verdict, Vec<WeightCoord>)> {
    let params = ShlParams::standard(net, cfg)?;
    let cond = if one {
        Condition { cmp: Cmp::Less, threshold: -params.bias, nonzero: false }
    } else {
        Condition { cmp: Cmp::Greater, threshold: params.bias, nonzero: false }
    };
    two_sided(net, cfg, params, cond)
}

fn lift_mo(c: WeightCoord, j: usize) -> WeightCoord {
    if c.layer == 1 {
        WeightCoord { layer: 1, row: c.row, col: j as u32 }
    } else {
        c
    }
}

/// Multi-output network whose output `j` is the all-zero (`b_j = 0`, negative
/// output weights) or OR (`b_j = 1`, positive output weights) gadget on top
/// of an all-ones first layer.
pub fn near_constant_network(n: usize, m: usize, b: &BitVector) -> Result<MoNetwork> {
    use crate::network::Matrix;
    let a = Matrix::filled(m, n, 1.0);
    let w = Matrix::from_fn(m, b.len(), |_, c| if b.get(c) { 1.0 } else { -1.0 });
    MoNetwork::new(a, w)
}
