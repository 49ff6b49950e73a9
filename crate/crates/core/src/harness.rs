//! Seeded, parallel Monte Carlo experiments with CSV output.

use std::collections::BTreeMap;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bits::BitVector;
use crate::config::TesterConfig;
use crate::constructions::{self, World};
use crate::distfree::{distinguishing_game, pair_hunting_tester, random_guess_tester};
use crate::error::{Error, Result};
use crate::monotone::{monotone_property_tester, GeneratorFn};
use crate::network::{DeepNetwork, Matrix, Network, ShlNetwork, WeightCoord};
use crate::testers_deep::{all_zero_tester_mhl, near_constant_tester, or_tester_mhl};
use crate::testers_shl::{
    all_zero_tester, one_sided_or_tester, one_sided_zero_tester, or_tester, vanilla_tester,
};
use crate::verdict::Verdict;

const Z95: f64 = 1.959963984540054;

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of stream `label` in trial `trial`: SplitMix64 applied to the seed,
/// the trial index and an FNV-1a hash of the label in turn.
pub fn derive_seed(seed: u64, trial: u64, label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h = (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3);
    }
    mix(mix(mix(seed) ^ trial) ^ h)
}

/// 95% Wilson score interval for `k` successes out of `n`.
pub fn wilson(k: usize, n: usize) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let (k, n) = (k as f64, n as f64);
    let p = k / n;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = Z95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    let lo = if k == 0.0 { 0.0 } else { (centre - half).max(0.0) };
    let hi = if k == n { 1.0 } else { (centre + half).min(1.0) };
    (lo, hi)
}

/// Newcombe's hybrid interval for `p_a - p_b`, from two Wilson intervals.
pub fn newcombe(ka: usize, na: usize, kb: usize, nb: usize) -> (f64, f64) {
    let pa = if na == 0 { 0.0 } else { ka as f64 / na as f64 };
    let pb = if nb == 0 { 0.0 } else { kb as f64 / nb as f64 };
    let (la, ua) = wilson(ka, na);
    let (lb, ub) = wilson(kb, nb);
    let d = pa - pb;
    let lo = d - ((pa - la).powi(2) + (ub - pb).powi(2)).sqrt();
    let hi = d + ((ua - pa).powi(2) + (pb - lb).powi(2)).sqrt();
    (lo, hi)
}

/// Interval for `|p_a - p_b|` derived from [`newcombe`].
pub fn newcombe_abs(ka: usize, na: usize, kb: usize, nb: usize) -> (f64, f64) {
    let (lo, hi) = newcombe(ka, na, kb, nb);
    if lo >= 0.0 {
        (lo, hi)
    } else if hi <= 0.0 {
        (-hi, -lo)
    } else {
        (0.0, hi.max(-lo))
    }
}

/// Network families the harness and the CLI can build.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum GeneratorSpec {
    /// i.i.d. uniform weights in `[-1, 1]`; `nonpositive_output` restricts
    /// output weights to `[-1, 0]`.
    Random {
        n: usize,
        m: usize,
        #[serde(default)]
        nonpositive_output: bool,
    },
    AllZero { n: usize, m: usize },
    AllOnes { n: usize, m: usize },
    /// First layer all ones, output weights all `-1`.
    NegativeOnes { n: usize, m: usize },
    VanillaHard { n: usize, epsilon: f64 },
    N1 { n: usize, k: usize },
    N2 { n: usize, k: usize },
    Partition { items: Vec<u64> },
    CompleteZero {
        n: usize,
        m: usize,
        #[serde(default)]
        fixed: usize,
    },
    CompleteOr {
        n: usize,
        m: usize,
        #[serde(default)]
        fixed: usize,
    },
    /// Every weight equal to `value`.
    DeepConstant { dims: Vec<usize>, value: f64 },
    /// i.i.d. uniform weights, last layer restricted to `[-1, 0]`.
    DeepNonpositive { dims: Vec<usize> },
    /// All-ones first layer; output `j` has weights `+1` if `b_j = 1`, else `-1`.
    NearConstant { n: usize, m: usize, b: BitVector },
}

impl GeneratorSpec {
    pub fn label(&self) -> String {
        serde_json::to_value(self)
            .ok()
            .and_then(|v| v.get("kind").and_then(|k| k.as_str()).map(str::to_owned))
            .unwrap_or_default()
    }

    /// Builds one network; randomized families use `rng`.
    pub fn build<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<(Network, Option<String>)> {
        let uniform = |rng: &mut R, lo: f64, hi: f64| rng.gen_range(lo..=hi);
        Ok(match self {
            GeneratorSpec::Random { n, m, nonpositive_output } => {
                let a = Matrix::from_fn(*m, *n, |_, _| uniform(rng, -1.0, 1.0));
                let top = if *nonpositive_output { 0.0 } else { 1.0 };
                let w = (0..*m).map(|_| uniform(rng, -1.0, top)).collect();
                (ShlNetwork::new(a, w)?.into(), None)
            }
            GeneratorSpec::AllZero { n, m } => (ShlNetwork::constant(*n, *m, 0.0, 0.0)?.into(), None),
            GeneratorSpec::AllOnes { n, m } => (ShlNetwork::constant(*n, *m, 1.0, 1.0)?.into(), None),
            GeneratorSpec::NegativeOnes { n, m } => (ShlNetwork::constant(*n, *m, 1.0, -1.0)?.into(), None),
            GeneratorSpec::VanillaHard { n, epsilon } => {
                (constructions::vanilla_hardness_network(*n, *epsilon)?.into(), None)
            }
            GeneratorSpec::N1 { n, k } | GeneratorSpec::N2 { n, k } => {
                let world = if matches!(self, GeneratorSpec::N1 { .. }) { World::N1 } else { World::N2 };
                let (net, dist) = constructions::sample_world(world, *n, *k, rng)?;
                let meta = constructions::hardness_meta(world, &dist)?.to_json();
                (net.into(), Some(meta))
            }
            GeneratorSpec::Partition { items } => (constructions::partition_reduction(items)?.into(), None),
            GeneratorSpec::CompleteZero { n, m, fixed } | GeneratorSpec::CompleteOr { n, m, fixed } => {
                let set = random_fixed(*n, *m, *fixed, rng);
                let net = if matches!(self, GeneratorSpec::CompleteZero { .. }) {
                    constructions::complete_to_zero(*n, *m, &set)?
                } else {
                    constructions::complete_to_or(*n, *m, &set)?
                };
                (net.into(), None)
            }
            GeneratorSpec::DeepConstant { dims, value } => (DeepNetwork::constant(dims, *value)?.into(), None),
            GeneratorSpec::DeepNonpositive { dims } => {
                if dims.len() < 3 {
                    return Err(Error::Dimension("deep networks need at least three layer sizes".into()));
                }
                let last = dims.len() - 2;
                let layers = dims
                    .windows(2)
                    .enumerate()
                    .map(|(k, d)| {
                        let hi = if k == last { 0.0 } else { 1.0 };
                        Matrix::from_fn(d[1], d[0], |_, _| uniform(rng, -1.0, hi))
                    })
                    .collect();
                (DeepNetwork::new(layers)?.into(), None)
            }
            GeneratorSpec::NearConstant { n, m, b } => {
                (crate::testers_deep::near_constant_network(*n, *m, b)?.into(), None)
            }
        })
    }
}

/// `count` distinct random coordinates of an `m x n` network with uniform
/// values in `[-1, 1]`.
pub fn random_fixed<R: Rng + ?Sized>(n: usize, m: usize, count: usize, rng: &mut R) -> BTreeMap<WeightCoord, f64> {
    let total = n * m + m;
    let picks = crate::sampling::sample_indices(rng, total, count);
    picks
        .into_iter()
        .map(|p| {
            let coord = if p < n * m {
                WeightCoord::new(0, p / n, p % n)
            } else {
                WeightCoord::new(1, p - n * m, 0)
            };
            (coord, rng.gen_range(-1.0..=1.0))
        })
        .collect()
}

/// Tester names understood by [`run_tester`].
pub const TESTERS: &[&str] = &[
    "all-zero",
    "or",
    "one-sided-zero",
    "one-sided-or",
    "vanilla",
    "all-zero-mhl",
    "or-mhl",
    "near-constant",
    "monotone-or",
    "monotone-zero",
];

/// Extra inputs some testers need.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TesterOptions {
    /// Samples for the vanilla tester.
    #[serde(default)]
    pub samples: Option<usize>,
    /// Target bits for the near-constant tester.
    #[serde(default)]
    pub target: Option<BitVector>,
}

fn as_shl<'a>(net: &'a Network, tester: &str) -> Result<&'a ShlNetwork> {
    match net {
        Network::Shl(s) => Ok(s),
        _ => Err(Error::Params(format!("{tester} needs a single-hidden-layer network"))),
    }
}

fn as_deep(net: &Network, tester: &str) -> Result<DeepNetwork> {
    match net {
        Network::Deep(d) => Ok(d.clone()),
        Network::Shl(s) => Ok(DeepNetwork::from(s)),
        Network::Mo(_) => Err(Error::Params(format!("{tester} needs a single-output network"))),
    }
}

/// Runs the named tester once.
pub fn run_tester(name: &str, net: &Network, cfg: &TesterConfig, opts: &TesterOptions) -> Result<Verdict> {
    match name {
        "all-zero" => all_zero_tester(as_shl(net, name)?, cfg),
        "or" => or_tester(as_shl(net, name)?, cfg),
        "one-sided-zero" => one_sided_zero_tester(as_shl(net, name)?, cfg),
        "one-sided-or" => one_sided_or_tester(as_shl(net, name)?, cfg),
        "vanilla" => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let mut v = vanilla_tester(as_shl(net, name)?, opts.samples.unwrap_or(1000), &mut rng)?;
            v.seed = cfg.seed;
            Ok(v)
        }
        "all-zero-mhl" => all_zero_tester_mhl(&as_deep(net, name)?, cfg),
        "or-mhl" => or_tester_mhl(&as_deep(net, name)?, cfg),
        "near-constant" => {
            let b = opts
                .target
                .clone()
                .ok_or_else(|| Error::Params("near-constant needs a target".into()))?;
            near_constant_tester(net, &b, cfg)
        }
        "monotone-or" | "monotone-zero" => {
            let shl = as_shl(net, name)?;
            let g = if name == "monotone-or" {
                GeneratorFn::or(shl.n())
            } else {
                GeneratorFn::constant_zero(shl.n())
            };
            monotone_property_tester(shl, &g, cfg)
        }
        other => Err(Error::Params(format!("unknown tester {other:?}; known: {}", TESTERS.join(", ")))),
    }
}

/// Tester parameters as given in an experiment file; the seed comes from the
/// experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigSpec {
    pub epsilon: f64,
    pub delta: f64,
    pub lambda: f64,
    pub constant_scale: f64,
    pub enum_cap: u32,
}

impl Default for ConfigSpec {
    fn default() -> Self {
        let c = TesterConfig::default();
        ConfigSpec {
            epsilon: c.epsilon,
            delta: c.delta,
            lambda: c.lambda,
            constant_scale: c.constant_scale,
            enum_cap: c.enum_cap,
        }
    }
}

impl ConfigSpec {
    pub fn with_seed(&self, seed: u64) -> TesterConfig {
        TesterConfig {
            epsilon: self.epsilon,
            delta: self.delta,
            lambda: self.lambda,
            constant_scale: self.constant_scale,
            enum_cap: self.enum_cap,
            seed,
        }
    }
}

/// Tester used in a distinguishing-game row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GameTester {
    PairHunting,
    RandomGuess,
}

/// One line of an experiment file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum RowSpec {
    Test {
        generator: GeneratorSpec,
        tester: String,
        #[serde(default)]
        config: ConfigSpec,
        #[serde(default)]
        options: TesterOptions,
        trials: usize,
    },
    Game {
        n: usize,
        k: usize,
        budget: usize,
        tester: GameTester,
        trials: usize,
    },
}

/// An experiment file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    #[serde(default)]
    pub seed: u64,
    pub rows: Vec<RowSpec>,
}

impl ExperimentSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: ExperimentSpec = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        for row in &spec.rows {
            if let RowSpec::Test { config, tester, .. } = row {
                config.with_seed(0).validate()?;
                if !TESTERS.contains(&tester.as_str()) {
                    return Err(Error::Config(format!("unknown tester {tester:?}")));
                }
            }
        }
        Ok(spec)
    }
}

/// One CSV line.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CsvRow {
    pub row: usize,
    pub kind: String,
    pub generator: String,
    pub tester: String,
    pub world: String,
    pub trials: usize,
    pub budget: String,
    pub accepts: usize,
    pub rate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub advantage: String,
    pub mean_queries: f64,
    pub sizes: String,
    pub seed: u64,
}

pub const CSV_HEADER: &str =
    "row,kind,generator,tester,world,trials,budget,accepts,rate,ci_low,ci_high,advantage,mean_queries,sizes,seed";

/// Runs every row of `spec` on a pool of `threads` workers. Trials of a row
/// run in parallel; results are combined in trial order, so the output does
/// not depend on `threads`.
pub fn run_experiment(spec: &ExperimentSpec, threads: usize) -> Result<Vec<CsvRow>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    pool.install(|| {
        let mut out = Vec::new();
        for (r, row) in spec.rows.iter().enumerate() {
            let row_seed = derive_seed(spec.seed, r as u64, "row");
            match row {
                RowSpec::Test {
                    generator,
                    tester,
                    config,
                    options,
                    trials,
                } => out.push(test_row(r, row_seed, generator, tester, config, options, *trials)?),
                RowSpec::Game {
                    n,
                    k,
                    budget,
                    tester,
                    trials,
                } => out.extend(game_rows(r, row_seed, *n, *k, *budget, *tester, *trials)?),
            }
        }
        Ok(out)
    })
}

fn test_row(
    r: usize,
    seed: u64,
    generator: &GeneratorSpec,
    tester: &str,
    config: &ConfigSpec,
    options: &TesterOptions,
    trials: usize,
) -> Result<CsvRow> {
    let verdicts: Vec<Verdict> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut gen_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, t as u64, "generator"));
            let (net, _) = generator.build(&mut gen_rng)?;
            let cfg = config.with_seed(derive_seed(seed, t as u64, "tester"));
            run_tester(tester, &net, &cfg, options)
        })
        .collect::<Result<_>>()?;
    let accepts = verdicts.iter().filter(|v| v.accepted()).count();
    let queries: usize = verdicts.iter().map(|v| v.queries).sum();
    let mut sizes: Vec<String> = Vec::new();
    for v in &verdicts {
        let s = v.sizes.iter().map(usize::to_string).collect::<Vec<_>>().join("x");
        if !sizes.contains(&s) {
            sizes.push(s);
        }
    }
    let (lo, hi) = wilson(accepts, trials);
    Ok(CsvRow {
        row: r,
        kind: "test".into(),
        generator: generator.label(),
        tester: tester.into(),
        world: String::new(),
        trials,
        budget: String::new(),
        accepts,
        rate: ratio(accepts, trials),
        ci_low: lo,
        ci_high: hi,
        advantage: String::new(),
        mean_queries: ratio_f(queries as f64, trials),
        sizes: sizes.join(";"),
        seed,
    })
}

fn ratio(k: usize, n: usize) -> f64 {
    ratio_f(k as f64, n)
}

fn ratio_f(k: f64, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        k / n as f64
    }
}

fn game_rows(
    r: usize,
    seed: u64,
    n: usize,
    k: usize,
    budget: usize,
    tester: GameTester,
    trials: usize,
) -> Result<Vec<CsvRow>> {
    let res = match tester {
        GameTester::PairHunting => distinguishing_game(pair_hunting_tester(budget), n, k, budget, trials, seed)?,
        GameTester::RandomGuess => distinguishing_game(random_guess_tester, n, k, budget, trials, seed)?,
    };
    let name = match tester {
        GameTester::PairHunting => "pair-hunting",
        GameTester::RandomGuess => "random-guess",
    };
    let base = |world: &str, accepts: usize, trials: usize, rate: f64, ci: (f64, f64), adv: String| CsvRow {
        row: r,
        kind: "game".into(),
        generator: format!("n1-vs-n2 n={n} k={k}"),
        tester: name.into(),
        world: world.into(),
        trials,
        budget: budget.to_string(),
        accepts,
        rate,
        ci_low: ci.0,
        ci_high: ci.1,
        advantage: adv,
        mean_queries: res.mean_queries,
        sizes: budget.to_string(),
        seed,
    };
    Ok(vec![
        base("N1", res.n2_guesses_in_n1, trials, res.rate_n1, res.ci_n1, String::new()),
        base("N2", res.n2_guesses_in_n2, trials, res.rate_n2, res.ci_n2, String::new()),
        base(
            "both",
            res.n2_guesses_in_n1 + res.n2_guesses_in_n2,
            2 * trials,
            res.advantage,
            res.advantage_ci,
            format!("{}", res.advantage),
        ),
    ])
}

/// Writes rows with the fixed header. In `game` rows `accepts` counts `N2`
/// guesses; the `both` row carries the advantage and its interval in
/// `rate`, `ci_low` and `ci_high`.
pub fn write_csv<W: Write>(rows: &[CsvRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn to_csv_string(rows: &[CsvRow]) -> Result<String> {
    let mut buf = Vec::new();
    write_csv(rows, &mut buf)?;
    Ok(String::from_utf8(buf).expect("csv output is utf-8"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wilson_reference_values() {
        // 8 of 10: centre (0.8 + z^2/20) / (1 + z^2/10)
        let (lo, hi) = wilson(8, 10);
        assert!((lo - 0.4901624).abs() < 1e-6, "{lo}");
        assert!((hi - 0.9433178).abs() < 1e-6, "{hi}");
        assert_eq!(wilson(0, 10).0, 0.0);
        assert_eq!(wilson(10, 10).1, 1.0);
    }

    #[test]
    fn seeds_differ_by_trial_and_label() {
        let a = derive_seed(1, 0, "tester");
        assert_eq!(a, derive_seed(1, 0, "tester"));
        assert_ne!(a, derive_seed(1, 1, "tester"));
        assert_ne!(a, derive_seed(1, 0, "generator"));
        assert_ne!(a, derive_seed(2, 0, "tester"));
    }

    #[test]
    fn newcombe_contains_difference() {
        let (lo, hi) = newcombe(60, 100, 40, 100);
        assert!(lo < 0.2 && 0.2 < hi && lo > 0.0);
        let (lo, hi) = newcombe_abs(40, 100, 60, 100);
        assert!(lo > 0.0 && hi > 0.2);
        let (lo, _) = newcombe_abs(50, 100, 50, 100);
        assert_eq!(lo, 0.0);
    }

    #[test]
    fn header_matches_row_fields() {
        let row = CsvRow {
            row: 0,
            kind: "test".into(),
            generator: "g".into(),
            tester: "t".into(),
            world: String::new(),
            trials: 1,
            budget: String::new(),
            accepts: 1,
            rate: 1.0,
            ci_low: 0.0,
            ci_high: 1.0,
            advantage: String::new(),
            mean_queries: 0.0,
            sizes: "1x1".into(),
            seed: 0,
        };
        let text = to_csv_string(&[row]).unwrap();
        assert_eq!(text.lines().next().unwrap(), CSV_HEADER);
    }

    #[test]
    fn spec_parsing() {
        let text = r#"{"seed":3,"rows":[
            {"type":"test","generator":{"kind":"all-zero","n":8,"m":8},"tester":"all-zero",
             "config":{"epsilon":0.5,"constant_scale":1e-6},"trials":4},
            {"type":"game","n":20,"k":2,"budget":3,"tester":"random-guess","trials":10}]}"#;
        let spec = ExperimentSpec::from_json(text).unwrap();
        let rows = run_experiment(&spec, 2).unwrap();
        assert_eq!(rows.len(), 4);
        assert_eq!(rows[0].accepts, 4);
        assert!(ExperimentSpec::from_json(r#"{"rows":[{"type":"test","generator":{"kind":"all-zero","n":8,"m":8},"tester":"nope","trials":1}]}"#).is_err());
        assert!(ExperimentSpec::from_json(r#"{"rows":[{"type":"test","generator":{"kind":"all-zero","n":8,"m":8},"tester":"or","config":{"constant_scale":0},"trials":1}]}"#).is_err());
    }
}
