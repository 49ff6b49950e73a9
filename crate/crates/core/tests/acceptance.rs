//! End-to-end acceptance checks. Prints one PASS/FAIL line per check and
//! exits non-zero if any fails.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use num_bigint::BigInt;
use num_rational::BigRational;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use reluprop::constructions::{
    self, check_k_minus_1_wise, complete_to_or, complete_to_zero, expectation_gap, full_tuple_uniform,
    parity_gap, partition_reduction, repair_to_closest, vanilla_hardness_network, xi, Completion,
};
use reluprop::distfree::{completion_probability, distinguishing_game, pair_hunting_tester};
use reluprop::harness::{random_fixed, run_experiment, to_csv_string, ExperimentSpec};
use reluprop::network::TernaryEvaluator;
use reluprop::oracle::{computes_exactly, counterexample, delta_distance, Target};
use reluprop::testers_deep::{all_zero_tester_mhl, all_zero_tester_mhl_with, deep_sizes, DeepParams};
use reluprop::testers_shl::{
    all_zero_tester_with, one_sided_or_tester, one_sided_zero_tester, vanilla_tester, ShlParams,
};
use reluprop::{BitVector, DeepNetwork, Matrix, Network, ShlNetwork, TesterConfig, Verdict};

static QUERY_RUNS: AtomicUsize = AtomicUsize::new(0);
static QUERY_VIOLATIONS: Mutex<Vec<String>> = Mutex::new(Vec::new());
static WITNESS_CHECKS: AtomicUsize = AtomicUsize::new(0);
static WITNESS_VIOLATIONS: AtomicUsize = AtomicUsize::new(0);

fn violation(msg: String) {
    QUERY_VIOLATIONS.lock().unwrap().push(msg);
}

/// `(s+1)*t` with `sizes = [s, t]`.
fn account_two_sided(v: &Verdict) {
    QUERY_RUNS.fetch_add(1, Ordering::Relaxed);
    let (s, t) = (v.sizes[0], v.sizes[1]);
    if v.queries > (s + 1) * t {
        violation(format!("two-sided: {} > ({s}+1)*{t}", v.queries));
    }
}

/// `(s+1)*m` with `sizes = [s, m]`.
fn account_one_sided(v: &Verdict, m: usize) {
    QUERY_RUNS.fetch_add(1, Ordering::Relaxed);
    let s = v.sizes[0];
    if v.queries > (s + 1) * m {
        violation(format!("one-sided: {} > ({s}+1)*{m}", v.queries));
    }
}

/// `s_l + sum_k s_k s_{k+1}`.
fn account_deep(v: &Verdict) {
    QUERY_RUNS.fetch_add(1, Ordering::Relaxed);
    let s = &v.sizes;
    let bound = s[s.len() - 1] + s.windows(2).map(|p| p[0] * p[1]).sum::<usize>();
    if v.queries > bound {
        violation(format!("deep: {} > {bound} for sizes {s:?}", v.queries));
    }
}

/// A rejection of a one-sided tester must come with an input on which the
/// network really disagrees with the target.
fn check_witness(net: &ShlNetwork, v: &Verdict, target: Completion) {
    if v.accepted() {
        return;
    }
    WITNESS_CHECKS.fetch_add(1, Ordering::Relaxed);
    let ok = match &v.witness {
        None => false,
        Some(x) => {
            let (_, bit) = net.eval(x).unwrap();
            match target {
                Completion::Zero => bit,
                Completion::Or => !x.is_zero() && !bit,
            }
        }
    };
    if !ok {
        WITNESS_VIOLATIONS.fetch_add(1, Ordering::Relaxed);
    }
}

fn q(a: i64, b: i64) -> BigRational {
    BigRational::new(BigInt::from(a), BigInt::from(b))
}

fn cfg(epsilon: f64, scale: f64, seed: u64) -> TesterConfig {
    TesterConfig {
        epsilon,
        constant_scale: scale,
        ..TesterConfig::default()
    }
    .with_seed(seed)
}

fn random_shl(rng: &mut ChaCha8Rng, n: usize, m: usize, w_hi: f64) -> ShlNetwork {
    let a = Matrix::from_fn(m, n, |_, _| rng.gen_range(-1.0..=1.0));
    let w = (0..m).map(|_| rng.gen_range(-1.0..=w_hi)).collect();
    ShlNetwork::new(a, w).unwrap()
}

struct Outcome {
    pass: bool,
    detail: String,
}

fn timed(limit: Option<Duration>, f: impl FnOnce() -> Outcome) -> Outcome {
    let start = Instant::now();
    let mut out = f();
    let took = start.elapsed();
    out.detail = format!("{} [{:.2}s]", out.detail, took.as_secs_f64());
    if let Some(limit) = limit {
        if took > limit {
            out.pass = false;
            out.detail = format!("{} exceeds {:?}", out.detail, limit);
        }
    }
    out
}

fn exact_parity() -> Outcome {
    let mut bad = Vec::new();
    for k in [2, 4, 6, 8, 10, 12] {
        if parity_gap(k).unwrap() != xi(k).unwrap() {
            bad.push(k);
        }
    }
    let xi2 = xi(2).unwrap() == q(1, 2);
    Outcome {
        pass: bad.is_empty() && xi2,
        detail: format!("mismatched k: {bad:?}, xi(2) = {}", xi(2).unwrap()),
    }
}

fn exact_expectation_bounds() -> Outcome {
    let mut bad = Vec::new();
    for gamma in [q(1, 32), q(1, 64)] {
        for ell in 1..=16i64 {
            let gap = expectation_gap(ell as usize, &gamma).unwrap();
            let l = BigRational::from_integer(BigInt::from(ell));
            let lo = &gamma * &l / BigRational::from_integer(4.into());
            let hi = &gamma * &l * BigRational::from_integer(4.into());
            if gap < lo || gap > hi {
                bad.push((ell, gamma.to_string()));
            }
        }
    }
    Outcome {
        pass: bad.is_empty(),
        detail: format!("32 (l, gamma) pairs, violations {bad:?}"),
    }
}

fn exact_independence() -> Outcome {
    let mut bad = Vec::new();
    for k in (2..=12).step_by(2) {
        if !check_k_minus_1_wise(k).unwrap() || full_tuple_uniform(k).unwrap() {
            bad.push(k);
        }
    }
    Outcome {
        pass: bad.is_empty(),
        detail: format!("k = 2..12 even, failing {bad:?}"),
    }
}

fn one_sided_soundness() -> Outcome {
    let results: Vec<(bool, usize)> = (0..500u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(4_000 + i);
            let net = if i % 2 == 0 {
                random_shl(&mut rng, 32, 32, 0.0)
            } else {
                let count = rng.gen_range(0..=8);
                complete_to_zero(32, 32, &random_fixed(32, 32, count, &mut rng)).unwrap()
            };
            let v = one_sided_zero_tester(&net, &cfg(0.25, 1.0, i)).unwrap();
            account_one_sided(&v, net.m());
            check_witness(&net, &v, Completion::Zero);
            (v.accepted(), v.queries)
        })
        .collect();
    let accepted = results.iter().filter(|r| r.0).count();

    // rejections on networks that are not 0-computing, for the witness check
    let rejections: usize = (0..100u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(5_000 + i);
            let net = random_shl(&mut rng, 16, 32, 1.0);
            let c = cfg(0.25, 1e-3, i);
            let z = one_sided_zero_tester(&net, &c).unwrap();
            account_one_sided(&z, net.m());
            check_witness(&net, &z, Completion::Zero);
            let o = one_sided_or_tester(&net, &c).unwrap();
            account_one_sided(&o, net.m());
            check_witness(&net, &o, Completion::Or);
            usize::from(z.rejected()) + usize::from(o.rejected())
        })
        .sum();
    let checks = WITNESS_CHECKS.load(Ordering::Relaxed);
    let wrong = WITNESS_VIOLATIONS.load(Ordering::Relaxed);
    Outcome {
        pass: accepted == 500 && wrong == 0 && rejections > 0,
        detail: format!(
            "accepted {accepted}/500; {rejections} rejections on other networks; {wrong} of {checks} witnesses fail to contradict"
        ),
    }
}

fn brute_partition(items: &[u64]) -> bool {
    let total: u64 = items.iter().sum();
    (0u32..1 << items.len()).any(|mask| {
        let sub: u64 = (0..items.len()).filter(|i| mask >> i & 1 == 1).map(|i| items[i]).sum();
        2 * sub == total
    })
}

fn multisets(max_len: usize, max_value: u64) -> Vec<Vec<u64>> {
    let mut out = Vec::new();
    let mut stack: Vec<Vec<u64>> = (1..=max_value).map(|v| vec![v]).collect();
    while let Some(cur) = stack.pop() {
        if cur.len() < max_len {
            for v in *cur.last().unwrap()..=max_value {
                let mut next = cur.clone();
                next.push(v);
                stack.push(next);
            }
        }
        out.push(cur);
    }
    out.sort();
    out
}

fn oracle_equivalence() -> Outcome {
    let all = multisets(10, 8);
    let disagreements: Vec<Vec<u64>> = all
        .par_iter()
        .filter(|items| {
            let net = Network::Shl(partition_reduction(items).unwrap());
            let witness = counterexample(&net, &Target::Zero).unwrap().is_some();
            witness != brute_partition(items)
        })
        .cloned()
        .collect();

    let completion_failures: usize = (0..200u64)
        .into_par_iter()
        .filter(|&i| {
            let mut rng = ChaCha8Rng::seed_from_u64(7_000 + i);
            let n = rng.gen_range(1..=6);
            let m = rng.gen_range(1..=16);
            let count = rng.gen_range(0..=m / 4);
            let fixed = random_fixed(n, m, count, &mut rng);
            let zero = Network::Shl(complete_to_zero(n, m, &fixed).unwrap());
            let or = Network::Shl(complete_to_or(n, m, &fixed).unwrap());
            !computes_exactly(&zero, &Target::Zero).unwrap() || !computes_exactly(&or, &Target::Or).unwrap()
        })
        .count();
    Outcome {
        pass: disagreements.is_empty() && completion_failures == 0 && all.len() >= 500,
        detail: format!(
            "{} multisets, {} disagreements; {completion_failures}/200 completions wrong",
            all.len(),
            disagreements.len()
        ),
    }
}

fn separation() -> Outcome {
    let net = vanilla_hardness_network(1000, 1e-4).unwrap();
    let base = cfg(1e-4, 1.0, 0);
    let params = ShlParams {
        s: 500,
        t: 500,
        ..ShlParams::standard(&net, &base).unwrap()
    };
    let rejects = (0..100u64)
        .into_par_iter()
        .filter(|&i| {
            let v = all_zero_tester_with(&net, &cfg(1e-4, 1.0, 600 + i), params).unwrap();
            account_two_sided(&v);
            v.rejected()
        })
        .count();
    let accepts = (0..100u64)
        .into_par_iter()
        .filter(|&i| {
            let mut rng = ChaCha8Rng::seed_from_u64(700 + i);
            vanilla_tester(&net, 1000, &mut rng).unwrap().accepted()
        })
        .count();
    Outcome {
        pass: rejects >= 90 && accepts >= 90,
        detail: format!(
            "all-zero tester (s = t = 500, bias {}) rejects {rejects}/100; vanilla accepts {accepts}/100",
            params.bias
        ),
    }
}

fn closeness_repair() -> Outcome {
    let (n, m) = (12usize, 8usize);
    let delta = 0.5f64;
    let eps = (1.0 / m as f64).max(2.0 * ((2.0 / delta).ln() / n as f64).sqrt());
    let max_first = (eps * (n * m) as f64).ceil() as usize;
    let max_second = (eps * m as f64).ceil() as usize;
    let failures: Vec<String> = (0..100u64)
        .into_par_iter()
        .filter_map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(8_000 + i);
            let net = random_shl(&mut rng, n, m, 1.0);
            let r = repair_to_closest(&net, eps, &mut rng).unwrap();
            let target = match r.target {
                Completion::Zero => Target::Zero,
                Completion::Or => Target::Or,
            };
            let d = delta_distance(&Network::Shl(r.network.clone()), &target).unwrap();
            let ok = d <= q(1, 2) && r.first_layer_edits <= max_first && r.second_layer_edits <= max_second;
            (!ok).then(|| format!("#{i}: d={d} edits {}/{}", r.first_layer_edits, r.second_layer_edits))
        })
        .collect();
    Outcome {
        pass: failures.is_empty(),
        detail: format!(
            "eps = {eps:.4}, edit caps {max_first}/{max_second}; {} of 100 fail {:?}",
            failures.len(),
            failures.iter().take(3).collect::<Vec<_>>()
        ),
    }
}

fn n1_n2_behaviour() -> Outcome {
    // N1: uniform inputs and singletons
    let n1: Vec<(usize, usize)> = (0..20u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(9_000 + i);
            let (net, _) = constructions::sample_n1(256, 2, &mut rng).unwrap();
            let eval = TernaryEvaluator::new(&net).expect("N1 weights are +-1");
            let uniform = (0..100_000)
                .filter(|_| {
                    let x = BitVector::from_words(256, (0..4).map(|_| rng.gen()).collect());
                    eval.value(&x) > 0
                })
                .count();
            let singletons = (0..256).filter(|&u| eval.value(&BitVector::unit(256, u)) > 0).count();
            (uniform, singletons)
        })
        .collect();
    let uniform_pos: usize = n1.iter().map(|r| r.0).sum();
    let singleton_pos: usize = n1.iter().map(|r| r.1).sum();
    let n1_nets_clean = n1.iter().filter(|r| r.0 == 0 && r.1 == 0).count();

    // N2: value on every pair indicator, read straight from the weights
    let n = 4096;
    let mut worst = 1.0f64;
    let mut consistent = true;
    for i in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(9_500 + i);
        let (net, dist) = constructions::sample_n2(n, 2, &mut rng).unwrap();
        let (a, w) = (net.a(), net.w());
        let values: Vec<i64> = dist
            .sets()
            .par_iter()
            .map(|set| {
                (0..n)
                    .map(|j| {
                        let h = a.get(j, set[0]) + a.get(j, set[1]);
                        (w[j] * h.max(0.0)) as i64
                    })
                    .sum()
            })
            .collect();
        for (set, &v) in dist.sets().iter().zip(&values).take(3) {
            let (lib, _) = net.eval(&dist.indicator(dist.set_of(set[0]))).unwrap();
            consistent &= lib == v as f64;
        }
        let frac = values.iter().filter(|&&v| v > 0).count() as f64 / values.len() as f64;
        worst = worst.min(frac);
    }
    Outcome {
        pass: uniform_pos == 0 && singleton_pos == 0 && worst >= 0.7 && consistent,
        detail: format!(
            "N1: {uniform_pos} positive of 2e6 uniform inputs, {singleton_pos} positive of 5120 singletons, \
             {n1_nets_clean}/20 networks clean; N2: worst positive pair fraction {worst:.3}"
        ),
    }
}

fn distinguishing_threshold() -> Outcome {
    let n = 10_000;
    let (rate, expected) = completion_probability(n, 2, 10, 1000, 11).unwrap();
    let low_budget = ((n as f64).sqrt() / 10.0).floor() as usize;
    let high_budget = (5.0 * (n as f64).sqrt()) as usize;
    let low = distinguishing_game(pair_hunting_tester(low_budget), n, 2, low_budget, 500, 12).unwrap();
    let high = distinguishing_game(pair_hunting_tester(high_budget), n, 2, high_budget, 200, 13).unwrap();
    Outcome {
        pass: rate <= 0.15 && expected <= 0.1 && low.advantage <= 0.2 && high.advantage >= 0.5,
        detail: format!(
            "completion rate {rate:.3}, expected {expected:.4}; advantage {:.3} at budget {low_budget}, {:.3} at budget {high_budget}",
            low.advantage, high.advantage
        ),
    }
}

fn deep_testers() -> Outcome {
    let accepts = (0..50u64)
        .into_par_iter()
        .filter(|&i| {
            let mut rng = ChaCha8Rng::seed_from_u64(10_000 + i);
            let dims = [16usize, 16, 16, 1];
            let layers = (0..3)
                .map(|k| {
                    let hi = if k == 2 { 0.0 } else { 1.0 };
                    Matrix::from_fn(dims[k + 1], dims[k], |_, _| rng.gen_range(-1.0..=hi))
                })
                .collect();
            let net = DeepNetwork::new(layers).unwrap();
            let v = all_zero_tester_mhl(&net, &cfg(0.25, 1.0, i)).unwrap();
            account_deep(&v);
            v.accepted()
        })
        .count();
    let ones = DeepNetwork::constant(&[32, 32, 32, 1], 1.0).unwrap();
    let rejects = (0..50u64)
        .into_par_iter()
        .filter(|&i| {
            let v = all_zero_tester_mhl(&ones, &cfg(0.25, 1.0, 100 + i)).unwrap();
            account_deep(&v);
            v.rejected()
        })
        .count();

    // depth 1: both testers with the same sizes and bias, on the same
    // network and seed
    let pairs: Vec<(bool, bool)> = (0..200u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(11_000 + i);
            let w_hi = if i % 2 == 0 { 0.0 } else { 1.0 };
            let shl = random_shl(&mut rng, 32, 32, w_hi);
            let c = cfg(0.25, 1.0, i);
            let params = ShlParams {
                s: 12,
                t: 12,
                ..ShlParams::standard(&shl, &c).unwrap()
            };
            let a = all_zero_tester_with(&shl, &c, params).unwrap();
            account_two_sided(&a);
            let deep = DeepParams {
                sizes: vec![params.s, params.t],
                bias: params.bias,
            };
            let b = all_zero_tester_mhl_with(&DeepNetwork::from(&shl), &c, &deep).unwrap();
            account_deep(&b);
            (a.accepted(), b.accepted())
        })
        .collect();
    let rate = |f: fn(&(bool, bool)) -> bool| pairs.iter().filter(|p| f(p)).count() as f64 / pairs.len() as f64;
    let (shl_rate, deep_rate) = (rate(|p| p.0), rate(|p| p.1));
    let gap = (shl_rate - deep_rate).abs();
    Outcome {
        pass: accepts >= 45 && rejects == 50 && gap <= 0.1,
        detail: format!(
            "accepts {accepts}/50 nonpositive-output networks (sizes {:?}); rejects all-ones {rejects}/50; \
             depth-1 acceptance {shl_rate:.3} vs {deep_rate:.3}",
            deep_sizes(2, &cfg(0.25, 1.0, 0)).unwrap()
        ),
    }
}

fn determinism() -> Outcome {
    let spec = ExperimentSpec::from_json(
        r#"{"seed": 2024, "rows": [
            {"type": "test", "generator": {"kind": "random", "n": 16, "m": 16}, "tester": "all-zero", "trials": 40},
            {"type": "test", "generator": {"kind": "random", "n": 16, "m": 16, "nonpositive_output": true},
             "tester": "one-sided-zero", "trials": 40},
            {"type": "test", "generator": {"kind": "vanilla-hard", "n": 100, "epsilon": 0.0001},
             "tester": "vanilla", "options": {"samples": 200}, "trials": 20},
            {"type": "test", "generator": {"kind": "deep-constant", "dims": [8, 8, 8, 1], "value": 1.0},
             "tester": "all-zero-mhl", "trials": 10},
            {"type": "game", "n": 400, "k": 2, "budget": 40, "tester": "pair-hunting", "trials": 60}
        ]}"#,
    )
    .unwrap();
    let one = to_csv_string(&run_experiment(&spec, 1).unwrap()).unwrap();
    let eight = to_csv_string(&run_experiment(&spec, 8).unwrap()).unwrap();
    Outcome {
        pass: one == eight && !one.is_empty(),
        detail: format!("{} bytes, identical: {}", one.len(), one == eight),
    }
}

fn query_accounting() -> Outcome {
    let runs = QUERY_RUNS.load(Ordering::Relaxed);
    let bad = QUERY_VIOLATIONS.lock().unwrap().clone();
    Outcome {
        pass: runs > 0 && bad.is_empty(),
        detail: format!("{runs} tester runs checked, {} over budget {:?}", bad.len(), bad.iter().take(3).collect::<Vec<_>>()),
    }
}

fn main() {
    let secs = |s| Some(Duration::from_secs(s));
    type Check = (u32, &'static str, Option<Duration>, fn() -> Outcome);
    let checks: Vec<Check> = vec![
        (1, "parity gap equals xi", secs(1), exact_parity),
        (2, "expectation gap bounds", secs(1), exact_expectation_bounds),
        (3, "(k-1)-wise independence", secs(1), exact_independence),
        (4, "one-sided soundness", None, one_sided_soundness),
        (5, "oracle equivalence", None, oracle_equivalence),
        (6, "separation on the block network", secs(120), separation),
        (7, "closeness repair", secs(60), closeness_repair),
        (8, "N1/N2 behaviour", secs(180), n1_n2_behaviour),
        (9, "distinguishing threshold", secs(120), distinguishing_threshold),
        (11, "deep testers", None, deep_testers),
        (12, "determinism across thread counts", None, determinism),
    ];
    let mut lines = Vec::new();
    for (id, name, limit, f) in checks {
        let out = timed(limit, f);
        let line = format!("{} {id:>2} {name}: {}", if out.pass { "PASS" } else { "FAIL" }, out.detail);
        println!("{line}");
        lines.push((id, out.pass, line));
    }
    // accounting covers every tester run above
    let out = query_accounting();
    let line = format!("{} 10 query accounting: {}", if out.pass { "PASS" } else { "FAIL" }, out.detail);
    println!("{line}");
    lines.push((10, out.pass, line));

    lines.sort_by_key(|l| l.0);
    println!("\nsummary");
    for (_, _, line) in &lines {
        println!("{line}");
    }
    let failed = lines.iter().filter(|l| !l.1).count();
    if failed > 0 {
        println!("{failed} of {} acceptance checks failed", lines.len());
        std::process::exit(1);
    }
    println!("all {} acceptance checks passed", lines.len());
}

