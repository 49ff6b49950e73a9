//! Testers for networks with one hidden layer and one output.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bits::BitVector;
use crate::config::TesterConfig;
use crate::error::Result;
use crate::network::{ShlNetwork, TernaryEvaluator, WeightCoord};
use crate::query::WeightOracle;
use crate::sampling::{draw_plan_shl, sample_indices};
use crate::search::{Cmp, Condition, SampledNetwork};
use crate::subsample::default_sizes_shl;
use crate::verdict::{Decision, Verdict};

/// Sample sizes and bias of a two-sided run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShlParams {
    pub s: u64,
    pub t: u64,
    pub bias: f64,
}

impl ShlParams {
    /// Sizes from [`default_sizes_shl`], bias `eps*n*m/16`.
    pub fn standard(net: &ShlNetwork, cfg: &TesterConfig) -> Result<Self> {
        let (s, t) = default_sizes_shl(cfg)?;
        Ok(ShlParams {
            s,
            t,
            bias: cfg.epsilon * net.n() as f64 * net.m() as f64 / 16.0,
        })
    }
}

/// Rejects if some input on the sampled nodes pushes the scaled value above
/// `eps*n*m/16`.
pub fn all_zero_tester(net: &ShlNetwork, cfg: &TesterConfig) -> Result<Verdict> {
    let params = ShlParams::standard(net, cfg)?;
    all_zero_tester_with(net, cfg, params)
}

/// Rejects if some input on the sampled nodes pushes the scaled value below
/// `-eps*n*m/16`.
pub fn or_tester(net: &ShlNetwork, cfg: &TesterConfig) -> Result<Verdict> {
    let params = ShlParams::standard(net, cfg)?;
    or_tester_with(net, cfg, params)
}

pub fn all_zero_tester_with(net: &ShlNetwork, cfg: &TesterConfig, params: ShlParams) -> Result<Verdict> {
    let cond = Condition {
        cmp: Cmp::Greater,
        threshold: params.bias,
        nonzero: false,
    };
    Ok(two_sided(net, cfg, params, cond)?.0)
}

pub fn or_tester_with(net: &ShlNetwork, cfg: &TesterConfig, params: ShlParams) -> Result<Verdict> {
    let cond = Condition {
        cmp: Cmp::Less,
        threshold: -params.bias,
        nonzero: false,
    };
    Ok(two_sided(net, cfg, params, cond)?.0)
}

pub(crate) fn two_sided(
    net: &ShlNetwork,
    cfg: &TesterConfig,
    params: ShlParams,
    cond: Condition,
) -> Result<(Verdict, Vec<WeightCoord>)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let plan = draw_plan_shl(net.n(), net.m(), params.s, params.t, &mut rng);
    let mut oracle = WeightOracle::new(net);
    let sampled = SampledNetwork::from_shl(&mut oracle, net, &plan)?;
    let witness = sampled.find_witness(cond, cfg.enum_cap)?;
    let mut verdict = Verdict::from_witness(witness, oracle.count(), plan.sizes());
    verdict.clamped = plan.any_clamped();
    verdict.scaled = cfg.constant_scale != 1.0;
    verdict.seed = cfg.seed;
    Ok((verdict, oracle.queried().copied().collect()))
}

/// Input sample size of the one-sided testers:
/// `ceil(scale * 128 * ln(2m/lambda) / eps^2)`.
pub fn one_sided_size(m: usize, cfg: &TesterConfig) -> Result<u64> {
    cfg.validate()?;
    Ok(cfg.scaled(128.0 * (2.0 * m as f64 / cfg.lambda).ln() / (cfg.epsilon * cfg.epsilon)))
}

/// Never rejects a network computing the 0-function. A rejection carries an
/// input on which the network outputs 1.
pub fn one_sided_zero_tester(net: &ShlNetwork, cfg: &TesterConfig) -> Result<Verdict> {
    one_sided(
        net,
        cfg,
        Condition {
            cmp: Cmp::Greater,
            threshold: 0.0,
            nonzero: false,
        },
    )
}

/// Never rejects a network computing `OR`. A rejection carries a nonzero
/// input on which the network outputs 0.
pub fn one_sided_or_tester(net: &ShlNetwork, cfg: &TesterConfig) -> Result<Verdict> {
    one_sided(
        net,
        cfg,
        Condition {
            cmp: Cmp::AtMost,
            threshold: 0.0,
            nonzero: true,
        },
    )
}

fn one_sided(net: &ShlNetwork, cfg: &TesterConfig, cond: Condition) -> Result<Verdict> {
    let s = one_sided_size(net.m(), cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let take = usize::try_from(s).unwrap_or(usize::MAX);
    let inputs = sample_indices(&mut rng, net.n(), take);
    let mut oracle = WeightOracle::new(net);
    let sampled = SampledNetwork::from_shl_inputs(&mut oracle, net, &inputs)?;
    let witness = sampled.find_witness(cond, cfg.enum_cap)?;
    let mut verdict = Verdict::from_witness(witness, oracle.count(), vec![inputs.len(), net.m()]);
    verdict.clamped = take > net.n();
    verdict.scaled = cfg.constant_scale != 1.0;
    verdict.seed = cfg.seed;
    Ok(verdict)
}

/// Evaluates the network on `num_samples` uniform inputs and rejects on the
/// first one that outputs 1. `queries` counts evaluations.
pub fn vanilla_tester<R: Rng + ?Sized>(net: &ShlNetwork, num_samples: usize, rng: &mut R) -> Result<Verdict> {
    let n = net.n();
    let fast = TernaryEvaluator::new(net);
    let mut words = vec![0u64; n.div_ceil(64)];
    for done in 1..=num_samples.max(1) {
        for w in words.iter_mut() {
            *w = rng.gen();
        }
        let x = BitVector::from_words(n, words.clone());
        let bit = match &fast {
            Some(ev) => ev.bit(&x),
            None => net.eval(&x)?.1,
        };
        if bit {
            return Ok(Verdict {
                decision: Decision::Reject,
                queries: done,
                witness: Some(x),
                sizes: vec![num_samples],
                clamped: false,
                scaled: false,
                seed: 0,
            });
        }
    }
    Ok(Verdict {
        decision: Decision::Accept,
        queries: num_samples.max(1),
        witness: None,
        sizes: vec![num_samples],
        clamped: false,
        scaled: false,
        seed: 0,
    })
}
