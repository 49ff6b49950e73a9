//! The distribution-free query model and the `N1` vs `N2` distinguishing game.
//!
//! In this model a tester may also draw inputs from an unknown distribution
//! `D` and read their bits. The hard instance uses `D` uniform over the
//! indicator vectors of the sets of a random partition of the input nodes
//! into k-sets. Query accounting is per input node: touching any edge of
//! input node `j`, or bit `j` of any sample, reveals node `j` entirely.

use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::bits::BitVector;
use crate::constructions::{check_hardness_params, gamma, random_partition, World};
use crate::error::{Error, Result};
use crate::harness::{derive_seed, newcombe_abs, wilson};

/// Uniform distribution over the indicator vectors of a partition of
/// `0..n` into k-sets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct KSetDistribution {
    n: usize,
    k: usize,
    sets: Vec<Vec<usize>>,
    #[serde(skip)]
    owner: Vec<usize>,
}

impl KSetDistribution {
    pub fn new(n: usize, k: usize, sets: Vec<Vec<usize>>) -> Result<Self> {
        if k == 0 || !n.is_multiple_of(k) || sets.len() != n / k {
            return Err(Error::Params(format!("{} sets cannot partition {n} nodes into {k}-sets", sets.len())));
        }
        let mut owner = vec![usize::MAX; n];
        for (s, set) in sets.iter().enumerate() {
            if set.len() != k {
                return Err(Error::Params(format!("set {s} has {} members, expected {k}", set.len())));
            }
            for &i in set {
                if i >= n {
                    return Err(Error::IndexOutOfRange { index: i, bound: n });
                }
                if owner[i] != usize::MAX {
                    return Err(Error::Params(format!("node {i} is in two sets")));
                }
                owner[i] = s;
            }
        }
        Ok(KSetDistribution { n, k, sets, owner })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn sets(&self) -> &[Vec<usize>] {
        &self.sets
    }

    /// Index of the set containing node `i`.
    pub fn set_of(&self, i: usize) -> usize {
        self.owner[i]
    }

    pub fn indicator(&self, set: usize) -> BitVector {
        BitVector::from_indices(self.n, &self.sets[set])
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> BitVector {
        self.indicator(rng.gen_range(0..self.sets.len()))
    }
}

/// Lazily drawn samples `y_1, y_2, ...` from a [`KSetDistribution`].
pub struct InputSampleOracle<'a> {
    dist: &'a KSetDistribution,
    rng: ChaCha8Rng,
    samples: BTreeMap<usize, usize>,
    log: Vec<(usize, usize)>,
}

impl<'a> InputSampleOracle<'a> {
    pub fn new(dist: &'a KSetDistribution, seed: u64) -> Self {
        InputSampleOracle {
            dist,
            rng: ChaCha8Rng::seed_from_u64(seed),
            samples: BTreeMap::new(),
            log: Vec::new(),
        }
    }

    /// Bit `j` of sample `i`; sample `i` is drawn on its first use.
    pub fn query(&mut self, i: usize, j: usize) -> Result<bool> {
        if j >= self.dist.n() {
            return Err(Error::IndexOutOfRange { index: j, bound: self.dist.n() });
        }
        let sets = self.dist.sets().len();
        let rng = &mut self.rng;
        let set = *self.samples.entry(i).or_insert_with(|| rng.gen_range(0..sets));
        self.log.push((i, j));
        Ok(self.dist.set_of(j) == set)
    }

    pub fn sample(&self, i: usize) -> Option<BitVector> {
        self.samples.get(&i).map(|&s| self.dist.indicator(s))
    }

    pub fn log(&self) -> &[(usize, usize)] {
        &self.log
    }
}

/// Edge signs from one input node into the P half, given the rows already
/// revealed for other members of its k-set. `true` stands for `+1`.
///
/// In `N1` the answer is the fresh uniform bits. In `N2` the last member of
/// a set gets, per P node, `+1` iff an odd number of the other members have
/// `+1` there.
pub fn p_row_answer(world: World, prior_rows_in_set: &[Vec<bool>], fresh_bits: &[bool], k: usize) -> Vec<bool> {
    if world == World::N2 && prior_rows_in_set.len() == k - 1 {
        (0..fresh_bits.len())
            .map(|v| prior_rows_in_set.iter().filter(|row| row[v]).count() % 2 == 1)
            .collect()
    } else {
        fresh_bits.to_vec()
    }
}

/// What a tester learns about one input node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeRow {
    /// Signs of the edges into the P half, packed, bit set for `+1`.
    pub p: Vec<u64>,
    n_part: Option<Vec<u64>>,
}

/// Answers queries about a network drawn from `N1` or `N2`, sampling the
/// network only as far as the queries require.
pub struct AnswerProcess {
    world: World,
    n: usize,
    k: usize,
    p_plus: f64,
    dist: KSetDistribution,
    rng: ChaCha8Rng,
    rows: HashMap<usize, NodeRow>,
    revealed_in_set: HashMap<usize, Vec<usize>>,
    samples: Vec<usize>,
    budget: Option<usize>,
}

impl AnswerProcess {
    pub fn new(world: World, n: usize, k: usize, seed: u64) -> Result<Self> {
        check_hardness_params(n, k)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dist = random_partition(n, k, &mut rng);
        use num_traits::ToPrimitive;
        let p_plus = 0.5 + gamma(k)?.to_f64().unwrap_or(0.0);
        Ok(AnswerProcess {
            world,
            n,
            k,
            p_plus,
            dist,
            rng,
            rows: HashMap::new(),
            revealed_in_set: HashMap::new(),
            samples: Vec::new(),
            budget: None,
        })
    }

    pub fn with_budget(mut self, budget: usize) -> Self {
        self.budget = Some(budget);
        self
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn world(&self) -> World {
        self.world
    }

    /// Distinct input nodes revealed so far.
    pub fn queries(&self) -> usize {
        self.rows.len()
    }

    /// Output weight of hidden node `v`; free of charge.
    pub fn output_weight(&self, v: usize) -> f64 {
        if v < self.n / 2 {
            1.0
        } else {
            -1.0
        }
    }

    /// Reveals input node `j` and returns its row.
    pub fn query_node(&mut self, j: usize) -> Result<&NodeRow> {
        if j >= self.n {
            return Err(Error::IndexOutOfRange { index: j, bound: self.n });
        }
        if !self.rows.contains_key(&j) {
            if let Some(b) = self.budget {
                if self.rows.len() >= b {
                    return Err(Error::BudgetExceeded { budget: b });
                }
            }
            let half = self.n / 2;
            let fresh: Vec<bool> = (0..half).map(|_| self.rng.gen()).collect();
            let set = self.dist.set_of(j);
            let prior: Vec<Vec<bool>> = self
                .revealed_in_set
                .get(&set)
                .map(|members| members.iter().map(|m| unpack(&self.rows[m].p, half)).collect())
                .unwrap_or_default();
            let bits = p_row_answer(self.world, &prior, &fresh, self.k);
            self.rows.insert(j, NodeRow { p: pack(&bits), n_part: None });
            self.revealed_in_set.entry(set).or_default().push(j);
        }
        Ok(&self.rows[&j])
    }

    /// Weight of the edge from input `j` to hidden node `v`.
    pub fn edge(&mut self, j: usize, v: usize) -> Result<f64> {
        if v >= self.n {
            return Err(Error::IndexOutOfRange { index: v, bound: self.n });
        }
        self.query_node(j)?;
        let half = self.n / 2;
        let plus = if v < half {
            let p = &self.rows[&j].p;
            p[v / 64] >> (v % 64) & 1 == 1
        } else {
            if self.rows[&j].n_part.is_none() {
                let bits: Vec<bool> = (0..self.n - half).map(|_| self.rng.gen_bool(self.p_plus)).collect();
                self.rows.get_mut(&j).expect("revealed above").n_part = Some(pack(&bits));
            }
            let q = self.rows[&j].n_part.as_ref().expect("filled above");
            let u = v - half;
            q[u / 64] >> (u % 64) & 1 == 1
        };
        Ok(if plus { 1.0 } else { -1.0 })
    }

    /// Draws a new sample from the input distribution; returns its index.
    pub fn draw_sample(&mut self) -> usize {
        let s = self.rng.gen_range(0..self.dist.sets().len());
        self.samples.push(s);
        self.samples.len() - 1
    }

    /// Bit `j` of sample `i`. Counts as querying node `j`.
    pub fn sample_bit(&mut self, i: usize, j: usize) -> Result<bool> {
        let set = *self
            .samples
            .get(i)
            .ok_or(Error::IndexOutOfRange { index: i, bound: self.samples.len() })?;
        self.query_node(j)?;
        Ok(self.dist.set_of(j) == set)
    }
}

fn pack(bits: &[bool]) -> Vec<u64> {
    let mut words = vec![0u64; bits.len().div_ceil(64)];
    for (i, &b) in bits.iter().enumerate() {
        if b {
            words[i / 64] |= 1 << (i % 64);
        }
    }
    words
}

fn unpack(words: &[u64], len: usize) -> Vec<bool> {
    (0..len).map(|i| words[i / 64] >> (i % 64) & 1 == 1).collect()
}

/// Monte Carlo estimate of the chance that `q` uniformly chosen nodes
/// contain a whole k-set of a random partition, with the expected number of
/// such sets, `(n/k) q(q-1)..(q-k+1) / (n(n-1)..(n-k+1))`.
pub fn completion_probability(n: usize, k: usize, q: usize, trials: usize, seed: u64) -> Result<(f64, f64)> {
    if k == 0 || !n.is_multiple_of(k) {
        return Err(Error::Params(format!("n = {n} is not a multiple of k = {k}")));
    }
    if q > n {
        return Err(Error::Params(format!("q = {q} exceeds n = {n}")));
    }
    let expected = if q < k {
        0.0
    } else {
        (0..k).fold(n as f64 / k as f64, |acc, i| acc * (q - i) as f64 / (n - i) as f64)
    };
    let hits: usize = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, t as u64, "completion"));
            let dist = random_partition(n, k, &mut rng);
            let chosen = crate::sampling::sample_indices(&mut rng, n, q);
            let mut per_set: HashMap<usize, usize> = HashMap::new();
            let mut full = false;
            for i in chosen {
                let c = per_set.entry(dist.set_of(i)).or_insert(0);
                *c += 1;
                full |= *c == k;
            }
            usize::from(full)
        })
        .sum();
    let rate = if trials == 0 { 0.0 } else { hits as f64 / trials as f64 };
    Ok((rate, expected))
}

/// A tester's guess.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Guess {
    N1,
    N2,
}

/// Empirical outcome of the distinguishing game.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GameResult {
    pub trials: usize,
    pub budget: usize,
    /// Times the tester guessed `N2` in each world.
    pub n2_guesses_in_n1: usize,
    pub n2_guesses_in_n2: usize,
    pub rate_n1: f64,
    pub rate_n2: f64,
    pub ci_n1: (f64, f64),
    pub ci_n2: (f64, f64),
    /// `|P(N2 guess | N2) - P(N2 guess | N1)|`.
    pub advantage: f64,
    pub advantage_ci: (f64, f64),
    pub mean_queries: f64,
}

/// Runs `trials` games per world. Each game draws a fresh process with the
/// given budget; the tester gets the process and its own random stream.
/// Running out of budget is a tester error and aborts the game.
pub fn distinguishing_game<T>(tester: T, n: usize, k: usize, budget: usize, trials: usize, seed: u64) -> Result<GameResult>
where
    T: Fn(&mut AnswerProcess, &mut ChaCha8Rng) -> Result<Guess> + Sync,
{
    check_hardness_params(n, k)?;
    let play = |world: World, label: &str| -> Result<Vec<(bool, usize)>> {
        (0..trials)
            .into_par_iter()
            .map(|t| {
                let mut process = AnswerProcess::new(world, n, k, derive_seed(seed, t as u64, label))?.with_budget(budget);
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, t as u64, &format!("{label}-tester")));
                let guess = tester(&mut process, &mut rng)?;
                Ok((guess == Guess::N2, process.queries()))
            })
            .collect()
    };
    let in_n1 = play(World::N1, "game-n1")?;
    let in_n2 = play(World::N2, "game-n2")?;
    let a = in_n1.iter().filter(|r| r.0).count();
    let b = in_n2.iter().filter(|r| r.0).count();
    let queries: usize = in_n1.iter().chain(&in_n2).map(|r| r.1).sum();
    let (r1, r2) = (a as f64 / trials as f64, b as f64 / trials as f64);
    Ok(GameResult {
        trials,
        budget,
        n2_guesses_in_n1: a,
        n2_guesses_in_n2: b,
        rate_n1: r1,
        rate_n2: r2,
        ci_n1: wilson(a, trials),
        ci_n2: wilson(b, trials),
        advantage: (r2 - r1).abs(),
        advantage_ci: newcombe_abs(b, trials, a, trials),
        mean_queries: queries as f64 / (2 * trials) as f64,
    })
}

/// Guesses uniformly without querying anything.
pub fn random_guess_tester(_: &mut AnswerProcess, rng: &mut ChaCha8Rng) -> Result<Guess> {
    Ok(if rng.gen() { Guess::N2 } else { Guess::N1 })
}

/// Reveals `budget` random input nodes and guesses `N2` iff two of them
/// have identical edges into the P half. Only meaningful for `k = 2`,
/// where `N2` copies rows within a pair.
pub fn pair_hunting_tester(budget: usize) -> impl Fn(&mut AnswerProcess, &mut ChaCha8Rng) -> Result<Guess> + Sync {
    move |process, rng| {
        let nodes = crate::sampling::sample_indices(rng, process.n(), budget);
        let mut seen: HashMap<Vec<u64>, usize> = HashMap::new();
        let mut twin = false;
        for j in nodes {
            let row = process.query_node(j)?.p.clone();
            twin |= seen.insert(row, j).is_some();
        }
        Ok(if twin { Guess::N2 } else { Guess::N1 })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_oracle_is_lazy_and_stable() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let dist = random_partition(10, 2, &mut rng);
        let mut o = InputSampleOracle::new(&dist, 4);
        let a = o.query(1, 3).unwrap();
        assert_eq!(o.query(1, 3).unwrap(), a);
        assert!(o.sample(0).is_none());
        assert_eq!(o.sample(1).unwrap().count_ones(), 2);
        assert!(o.query(0, 10).is_err());
        for _ in 0..50 {
            assert_eq!(dist.sample(&mut rng).count_ones(), 2);
        }
    }

    #[test]
    fn sample_frequencies_are_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let dist = random_partition(100, 2, &mut rng);
        let trials = 10_000;
        let mut counts = vec![0usize; 50];
        for _ in 0..trials {
            let x = dist.sample(&mut rng);
            counts[dist.set_of(x.iter_ones().next().unwrap())] += 1;
        }
        let p = 1.0 / 50.0;
        let sigma = (trials as f64 * p * (1.0 - p)).sqrt();
        let outside = counts
            .iter()
            .filter(|&&c| (c as f64 - trials as f64 * p).abs() > 3.0 * sigma)
            .count();
        // at most a few of 50 cells beyond 3 sigma
        assert!(outside <= 2, "{counts:?}");
    }

    #[test]
    fn partial_sets_look_the_same_in_both_worlds() {
        // every answer to fewer than k members of a set is the fresh bits
        for prior in 0..1 {
            let rows: Vec<Vec<bool>> = vec![vec![true, false]; prior];
            for fresh in [[false, false], [true, false], [false, true], [true, true]] {
                assert_eq!(
                    p_row_answer(World::N1, &rows, &fresh, 2),
                    p_row_answer(World::N2, &rows, &fresh, 2)
                );
            }
        }
    }

    #[test]
    fn both_members_reveal_copies() {
        let mut p = AnswerProcess::new(World::N2, 20, 2, 3).unwrap();
        let set = p.dist.sets()[0].clone();
        let a = p.query_node(set[0]).unwrap().clone();
        let b = p.query_node(set[1]).unwrap().clone();
        assert_eq!(a.p, b.p);
        assert_eq!(p.queries(), 2);
        let mut q = AnswerProcess::new(World::N1, 20, 2, 3).unwrap().with_budget(0);
        assert!(matches!(q.query_node(0), Err(Error::BudgetExceeded { budget: 0 })));
    }

    #[test]
    fn budget_counts_nodes_not_edges() {
        let mut p = AnswerProcess::new(World::N1, 20, 2, 3).unwrap().with_budget(2);
        for v in 0..20 {
            p.edge(4, v).unwrap();
        }
        let s = p.draw_sample();
        p.sample_bit(s, 4).unwrap();
        p.sample_bit(s, 5).unwrap();
        assert_eq!(p.queries(), 2);
        assert!(p.edge(6, 0).is_err());
        assert_eq!(p.output_weight(0), 1.0);
        assert_eq!(p.output_weight(19), -1.0);
    }

    #[test]
    fn completion_edge_cases() {
        let (rate, _) = completion_probability(100, 2, 100, 20, 1).unwrap();
        assert_eq!(rate, 1.0);
        let (rate, expected) = completion_probability(100, 2, 1, 20, 1).unwrap();
        assert_eq!((rate, expected), (0.0, 0.0));
    }

    #[test]
    fn zero_budget_games_are_fair() {
        let never = |_: &mut AnswerProcess, _: &mut ChaCha8Rng| Ok(Guess::N1);
        let r = distinguishing_game(never, 20, 2, 0, 50, 1).unwrap();
        assert_eq!(r.advantage, 0.0);
        let r = distinguishing_game(random_guess_tester, 20, 2, 0, 2000, 1).unwrap();
        assert!(r.advantage <= 0.05, "{r:?}");
    }
}
