//! Testers for monotone properties given by generator functions.
//!
//! A property is the monotone closure of a set of generators `G`: every
//! function `f` with `g <= f` pointwise for some `g` in `G`.

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bits::BitVector;
use crate::config::TesterConfig;
use crate::error::{Error, Result};
use crate::network::ShlNetwork;
use crate::query::WeightOracle;
use crate::sampling::draw_plan_shl;
use crate::search::SampledNetwork;
use crate::verdict::{Decision, Verdict};

/// Largest input length a truth table may have.
pub const MAX_TABLE_BITS: usize = 20;

type Callable = Arc<dyn Fn(&BitVector) -> bool + Send + Sync>;

/// A generator `g: {0,1}^n -> {0,1}`.
#[derive(Clone)]
pub struct GeneratorFn {
    n: usize,
    repr: Repr,
}

#[derive(Clone)]
enum Repr {
    Callable(Callable),
    Table(BitVector),
}

impl fmt::Debug for GeneratorFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.repr {
            Repr::Callable(_) => write!(f, "GeneratorFn(n={}, callable)", self.n),
            Repr::Table(t) => write!(f, "GeneratorFn(n={}, table={t})", self.n),
        }
    }
}

impl GeneratorFn {
    pub fn from_fn(n: usize, f: impl Fn(&BitVector) -> bool + Send + Sync + 'static) -> Self {
        GeneratorFn {
            n,
            repr: Repr::Callable(Arc::new(f)),
        }
    }

    /// Entry `i` of `table` is the value at the input whose bit `j` is bit
    /// `j` of `i`.
    pub fn from_table(n: usize, table: BitVector) -> Result<Self> {
        if n > MAX_TABLE_BITS {
            return Err(Error::Params(format!("truth tables are limited to n <= {MAX_TABLE_BITS}")));
        }
        if table.len() != 1 << n {
            return Err(Error::Dimension(format!(
                "truth table for n = {n} needs {} entries, got {}",
                1usize << n,
                table.len()
            )));
        }
        Ok(GeneratorFn {
            n,
            repr: Repr::Table(table),
        })
    }

    pub fn constant_zero(n: usize) -> Self {
        Self::from_fn(n, |_| false)
    }

    pub fn constant_one(n: usize) -> Self {
        Self::from_fn(n, |_| true)
    }

    pub fn or(n: usize) -> Self {
        Self::from_fn(n, |x| !x.is_zero())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn eval(&self, x: &BitVector) -> bool {
        match &self.repr {
            Repr::Callable(f) => f(x),
            Repr::Table(t) => t.get(x.to_index() as usize),
        }
    }

    pub fn to_table(&self) -> Result<BitVector> {
        if self.n > MAX_TABLE_BITS {
            return Err(Error::Params(format!("truth tables are limited to n <= {MAX_TABLE_BITS}")));
        }
        let bits: Vec<bool> = (0..1u64 << self.n)
            .map(|i| self.eval(&BitVector::from_index(self.n, i)))
            .collect();
        Ok(BitVector::from_bools(&bits))
    }

    /// Reads a one-line file of `2^n` characters in `{0,1}`.
    pub fn load_table(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let line = text.trim_end_matches(['\n', '\r']);
        if line.contains('\n') {
            return Err(Error::Malformed("truth table must be a single line".into()));
        }
        let len = line.len();
        if len == 0 || !len.is_power_of_two() {
            return Err(Error::Malformed(format!("truth table length {len} is not a power of two")));
        }
        let table: BitVector = line
            .parse()
            .map_err(|_| Error::Malformed("truth table may only contain 0 and 1".into()))?;
        Self::from_table(len.trailing_zeros() as usize, table)
    }

    pub fn save_table(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, format!("{}\n", self.to_table()?))?;
        Ok(())
    }
}

/// `(r, t, s)`: inputs sampled, hidden nodes, input nodes.
///
/// `r = ceil(scale * 2 ln(2|G|/lambda) / delta)`,
/// `t = ceil(scale * 512 ln(4r/lambda) / eps^2)`,
/// `s = ceil(scale * 512 ln(4tr/lambda) / eps^2)`.
pub fn monotone_sizes(generators: usize, cfg: &TesterConfig) -> Result<(u64, u64, u64)> {
    cfg.validate()?;
    let eps2 = cfg.epsilon * cfg.epsilon;
    let r = cfg.scaled(2.0 * (2.0 * generators as f64 / cfg.lambda).ln() / cfg.delta);
    let t = cfg.scaled(512.0 * (4.0 * r as f64 / cfg.lambda).ln() / eps2);
    let s = cfg.scaled(512.0 * (4.0 * t as f64 * r as f64 / cfg.lambda).ln() / eps2);
    Ok((r, t, s))
}

pub fn monotone_property_tester(net: &ShlNetwork, g: &GeneratorFn, cfg: &TesterConfig) -> Result<Verdict> {
    full_monotone_property_tester(net, std::slice::from_ref(g), cfg)
}

/// Rejects iff every generator `g` has a sampled `x` with `g(x) = 1` whose
/// scaled value is below `-eps*n*m/8`. Generators with `g(0) = 1` count as
/// violated outright; if all of them are, the tester rejects without
/// reading any weight.
pub fn full_monotone_property_tester(
    net: &ShlNetwork,
    generators: &[GeneratorFn],
    cfg: &TesterConfig,
) -> Result<Verdict> {
    cfg.validate()?;
    if generators.is_empty() {
        return Err(Error::Params("generator set is empty".into()));
    }
    let n = net.n();
    if let Some(g) = generators.iter().find(|g| g.n() != n) {
        return Err(Error::Dimension(format!("generator has n = {}, network has n = {n}", g.n())));
    }
    let zero = BitVector::zeros(n);
    let at_zero: Vec<bool> = generators.iter().map(|g| g.eval(&zero)).collect();
    if at_zero.iter().all(|&b| b) {
        return Ok(Verdict {
            decision: Decision::Reject,
            queries: 0,
            witness: Some(zero),
            sizes: Vec::new(),
            clamped: false,
            scaled: cfg.constant_scale != 1.0,
            seed: cfg.seed,
        });
    }

    let (r, t, s) = monotone_sizes(generators.len(), cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let plan = draw_plan_shl(n, net.m(), s, t, &mut rng);
    let r = usize::try_from(r).map_err(|_| Error::Params("input sample too large".into()))?;
    let words = n.div_ceil(64);
    let xs: Vec<BitVector> = (0..r)
        .map(|_| BitVector::from_words(n, (0..words).map(|_| rng.gen()).collect()))
        .collect();

    let mut oracle = WeightOracle::new(net);
    let sampled = SampledNetwork::from_shl(&mut oracle, net, &plan)?;
    let bias = cfg.epsilon * n as f64 * net.m() as f64 / 8.0;
    let low: Vec<bool> = xs
        .iter()
        .map(|x| sampled.value(x).map(|v| v + bias < 0.0))
        .collect::<Result<_>>()?;

    let mut witness = None;
    let mut all_violated = true;
    for (g, &g0) in generators.iter().zip(&at_zero) {
        if g0 {
            continue;
        }
        match xs.iter().zip(&low).find(|(x, &l)| l && g.eval(x)) {
            Some((x, _)) => {
                witness.get_or_insert_with(|| x.clone());
            }
            None => {
                all_violated = false;
                break;
            }
        }
    }
    let mut sizes = plan.sizes();
    sizes.push(r);
    Ok(Verdict {
        decision: if all_violated {
            Decision::Reject
        } else {
            Decision::Accept
        },
        queries: oracle.count(),
        witness: if all_violated { witness } else { None },
        sizes,
        clamped: plan.any_clamped(),
        scaled: cfg.constant_scale != 1.0,
        seed: cfg.seed,
    })
}
