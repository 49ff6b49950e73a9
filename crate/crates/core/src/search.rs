//! Sampled sub-networks and exact witness search over their inputs.
//!
//! A sampled sub-network keeps, for every sampled input node, its column of
//! first-layer weights restricted to the sampled hidden nodes. Inputs whose
//! columns are equal are interchangeable: the value of `x` only depends on
//! how many inputs of each such class are switched on. The search therefore
//! enumerates per-class counts rather than raw bit patterns, and picks the
//! lexicographically first bit pattern among the feasible ones.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::bits::BitVector;
use crate::error::{Error, Result};
use crate::network::{relu, DeepNetwork, Matrix, ShlNetwork, WeightSource};
use crate::query::WeightOracle;
use crate::sampling::SamplePlan;

/// Which side of the threshold counts as a witness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Cmp {
    Greater,
    Less,
    AtMost,
}

impl Cmp {
    pub fn holds(self, value: f64, threshold: f64) -> bool {
        match self {
            Cmp::Greater => value > threshold,
            Cmp::Less => value < threshold,
            Cmp::AtMost => value <= threshold,
        }
    }

    /// Holds, or misses by at most `slack`.
    fn nearly(self, value: f64, threshold: f64, slack: f64) -> bool {
        match self {
            Cmp::Greater => value > threshold - slack,
            Cmp::Less => value < threshold + slack,
            Cmp::AtMost => value <= threshold + slack,
        }
    }
}

/// The condition a witness must satisfy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Condition {
    pub cmp: Cmp,
    pub threshold: f64,
    /// Exclude the all-zero input.
    pub nonzero: bool,
}

/// The part of a network a tester has read.
#[derive(Debug, Clone)]
pub struct SampledNetwork {
    n: usize,
    positions: Vec<usize>,
    /// `first[p][j]`: weight from input `positions[p]` to the j-th sampled hidden node.
    first: Vec<Vec<f64>>,
    hidden: Vec<Matrix>,
    out: Vec<f64>,
    factor: f64,
}

impl SampledNetwork {
    /// Reads `A` on the sampled rows and columns and `w` on the sampled rows.
    pub fn from_shl(oracle: &mut WeightOracle<'_, ShlNetwork>, net: &ShlNetwork, plan: &SamplePlan) -> Result<Self> {
        if plan.dims() != [net.n(), net.m()] {
            return Err(Error::Dimension(format!(
                "plan dims {:?} do not match network ({}, {})",
                plan.dims(),
                net.n(),
                net.m()
            )));
        }
        let rows = plan.layer(1);
        let first = plan
            .layer(0)
            .iter()
            .map(|&i| rows.iter().map(|&j| oracle.get(0, j, i)).collect())
            .collect();
        let out = rows.iter().map(|&j| oracle.get(1, j, 0)).collect();
        Ok(SampledNetwork {
            n: net.n(),
            positions: plan.layer(0).to_vec(),
            first,
            hidden: Vec::new(),
            out,
            factor: plan.scale_factor(),
        })
    }

    /// Reads the weights between consecutive sampled layers and the output
    /// weights of the sampled last hidden layer. `net` must have one output.
    pub fn from_deep<S: WeightSource + ?Sized>(
        oracle: &mut WeightOracle<'_, S>,
        net: &DeepNetwork,
        plan: &SamplePlan,
    ) -> Result<Self> {
        let ell = net.depth();
        if net.outputs() != 1 {
            return Err(Error::Dimension(format!(
                "expected a single output, found {}",
                net.outputs()
            )));
        }
        if plan.dims() != &net.dims()[..=ell] {
            return Err(Error::Dimension(format!(
                "plan dims {:?} do not match network layers {:?}",
                plan.dims(),
                &net.dims()[..=ell]
            )));
        }
        let rows = plan.layer(1);
        let first = plan
            .layer(0)
            .iter()
            .map(|&i| rows.iter().map(|&j| oracle.get(0, j, i)).collect())
            .collect();
        let hidden = (1..ell)
            .map(|k| {
                let (to, from) = (plan.layer(k + 1), plan.layer(k));
                Matrix::from_fn(to.len(), from.len(), |a, b| oracle.get(k, to[a], from[b]))
            })
            .collect();
        let out = plan.layer(ell).iter().map(|&i| oracle.get(ell, 0, i)).collect();
        Ok(SampledNetwork {
            n: net.inputs(),
            positions: plan.layer(0).to_vec(),
            first,
            hidden,
            out,
            factor: plan.scale_factor(),
        })
    }

    /// Sampled input columns over every hidden node, no scaling.
    pub fn from_shl_inputs(
        oracle: &mut WeightOracle<'_, ShlNetwork>,
        net: &ShlNetwork,
        inputs: &[usize],
    ) -> Result<Self> {
        if let Some(&bad) = inputs.iter().find(|&&i| i >= net.n()) {
            return Err(Error::IndexOutOfRange { index: bad, bound: net.n() });
        }
        let m = net.m();
        let first = inputs
            .iter()
            .map(|&i| (0..m).map(|j| oracle.get(0, j, i)).collect())
            .collect();
        let out = (0..m).map(|j| oracle.get(1, j, 0)).collect();
        Ok(SampledNetwork {
            n: net.n(),
            positions: inputs.to_vec(),
            first,
            hidden: Vec::new(),
            out,
            factor: 1.0,
        })
    }

    pub fn inputs(&self) -> usize {
        self.n
    }

    pub fn positions(&self) -> &[usize] {
        &self.positions
    }

    pub fn factor(&self) -> f64 {
        self.factor
    }

    /// Scaled value of `x`. Bits outside the sampled inputs are ignored.
    pub fn value(&self, x: &BitVector) -> Result<f64> {
        if x.len() != self.n {
            return Err(Error::Dimension(format!(
                "input has length {}, network expects {}",
                x.len(),
                self.n
            )));
        }
        let mask: Vec<bool> = self.positions.iter().map(|&i| x.get(i)).collect();
        Ok(self.value_of_mask(&mask))
    }

    /// Scaled value with `mask[p]` giving the bit of input `positions[p]`.
    pub fn value_of_mask(&self, mask: &[bool]) -> f64 {
        let r1 = self.first_width();
        let mut pre = vec![0.0; r1];
        for (p, _) in mask.iter().enumerate().filter(|(_, &b)| b) {
            for (acc, &a) in pre.iter_mut().zip(&self.first[p]) {
                *acc += a;
            }
        }
        self.head(&pre, &mut Scratch::default())
    }

    fn first_width(&self) -> usize {
        match self.hidden.first() {
            Some(h) => h.cols(),
            None => self.out.len(),
        }
    }

    fn head(&self, pre: &[f64], scratch: &mut Scratch) -> f64 {
        let raw = if self.hidden.is_empty() {
            self.out
                .iter()
                .zip(pre)
                .fold(0.0, |acc, (&w, &h)| acc + w * relu(h))
        } else {
            scratch.act.clear();
            scratch.act.extend(pre.iter().map(|&v| relu(v)));
            for layer in &self.hidden {
                scratch.next.clear();
                scratch.next.extend((0..layer.rows()).map(|j| {
                    relu(
                        layer
                            .row(j)
                            .iter()
                            .zip(&scratch.act)
                            .fold(0.0, |acc, (&w, &a)| acc + w * a),
                    )
                }));
                std::mem::swap(&mut scratch.act, &mut scratch.next);
            }
            self.out
                .iter()
                .zip(&scratch.act)
                .fold(0.0, |acc, (&w, &a)| acc + w * a)
        };
        raw * self.factor
    }

    /// Whether the output can be positive, resp. negative, for some input.
    /// Decided from weight signs alone, so it is exact.
    pub fn output_signs(&self) -> (bool, bool) {
        let r1 = self.first_width();
        let mut live: Vec<bool> = (0..r1).map(|j| self.first.iter().any(|c| c[j] > 0.0)).collect();
        for layer in &self.hidden {
            live = (0..layer.rows())
                .map(|j| layer.row(j).iter().zip(&live).any(|(&w, &l)| l && w > 0.0))
                .collect();
        }
        let pos = self.out.iter().zip(&live).any(|(&w, &l)| l && w > 0.0);
        let neg = self.out.iter().zip(&live).any(|(&w, &l)| l && w < 0.0);
        (pos && self.factor > 0.0, neg && self.factor > 0.0)
    }

    /// Interval containing every scaled value the sampled inputs can produce.
    pub fn value_bounds(&self) -> (f64, f64) {
        let r1 = self.first_width();
        let mut lo = vec![0.0; r1];
        let mut hi = vec![0.0; r1];
        for col in &self.first {
            for j in 0..r1 {
                if col[j] < 0.0 {
                    lo[j] += col[j];
                } else {
                    hi[j] += col[j];
                }
            }
        }
        let (mut alo, mut ahi): (Vec<f64>, Vec<f64>) =
            (lo.iter().map(|&v| relu(v)).collect(), hi.iter().map(|&v| relu(v)).collect());
        let affine = |weights: &[f64], alo: &[f64], ahi: &[f64]| {
            let mut l = 0.0;
            let mut h = 0.0;
            for ((&w, &a), &b) in weights.iter().zip(alo).zip(ahi) {
                if w >= 0.0 {
                    l += w * a;
                    h += w * b;
                } else {
                    l += w * b;
                    h += w * a;
                }
            }
            (l, h)
        };
        for layer in &self.hidden {
            let (nl, nh): (Vec<f64>, Vec<f64>) = (0..layer.rows())
                .map(|j| {
                    let (l, h) = affine(layer.row(j), &alo, &ahi);
                    (relu(l), relu(h))
                })
                .unzip();
            alo = nl;
            ahi = nh;
        }
        let (l, h) = affine(&self.out, &alo, &ahi);
        (l * self.factor, h * self.factor)
    }

    /// Lexicographically first `x` (over the sampled inputs in ascending
    /// order, earlier inputs more significant) whose scaled value satisfies
    /// `cond`, extended by zeros to the full input length.
    ///
    /// Fails if the reduced search space exceeds `2^cap` candidates.
    pub fn find_witness(&self, cond: Condition, cap: u32) -> Result<Option<BitVector>> {
        if self.positions.is_empty() {
            return Ok(None);
        }
        let classes = self.classes();

        let (lo, hi) = self.value_bounds();
        let slack = 1e-9 * (cond.threshold.abs() + lo.abs().max(hi.abs())) + f64::MIN_POSITIVE;
        let (can_pos, can_neg) = self.output_signs();
        let hopeless = match cond.cmp {
            Cmp::Greater => hi <= cond.threshold - slack || (!can_pos && cond.threshold >= 0.0),
            Cmp::Less => lo >= cond.threshold + slack || (!can_neg && cond.threshold <= 0.0),
            Cmp::AtMost => lo > cond.threshold + slack || (!can_neg && cond.threshold < 0.0),
        };
        if hopeless {
            return Ok(None);
        }
        let size_log2: f64 = classes
            .iter()
            .map(|c| ((c.digit_max(c.members.len()) + 1) as f64).log2())
            .sum();
        if size_log2 > cap as f64 {
            return Err(Error::EnumerationTooLarge { size_log2, cap });
        }

        let f = self.positions.len();
        let mut class_of = vec![0usize; f];
        for (c, class) in classes.iter().enumerate() {
            for &p in &class.members {
                class_of[p] = c;
            }
        }
        let search = Search {
            net: self,
            classes: &classes,
            cond,
            slack,
        };

        let fixed: Vec<bool> = Vec::new();
        let Some(mut best) = search.feasible(&fixed, &class_of) else {
            return Ok(None);
        };
        let mut prefix: Vec<bool> = Vec::with_capacity(f);
        for p in 0..f {
            if best[p] {
                prefix.push(false);
                match search.feasible(&prefix, &class_of) {
                    Some(found) => best = found,
                    None => {
                        prefix.pop();
                        prefix.push(true);
                    }
                }
            } else {
                prefix.push(false);
            }
        }
        let ones: Vec<usize> = (0..f).filter(|&p| best[p]).map(|p| self.positions[p]).collect();
        Ok(Some(BitVector::from_indices(self.n, &ones)))
    }

    fn classes(&self) -> Vec<Class> {
        let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
        let mut classes: Vec<Class> = Vec::new();
        for (p, col) in self.first.iter().enumerate() {
            let key: Vec<u64> = col
                .iter()
                .map(|&v| if v == 0.0 { 0 } else { v.to_bits() })
                .collect();
            let c = *index.entry(key).or_insert_with(|| {
                classes.push(Class {
                    members: Vec::new(),
                    zero: col.iter().all(|&v| v == 0.0),
                    col: col.clone(),
                });
                classes.len() - 1
            });
            classes[c].members.push(p);
        }
        classes
    }
}

#[derive(Default)]
struct Scratch {
    act: Vec<f64>,
    next: Vec<f64>,
}

struct Class {
    members: Vec<usize>,
    col: Vec<f64>,
    zero: bool,
}

impl Class {
    /// Largest count worth enumerating when `free` members are undecided.
    /// Zero columns never change the value, so only "none" or "one" matters.
    fn digit_max(&self, free: usize) -> usize {
        if self.zero {
            free.min(1)
        } else {
            free
        }
    }
}

struct Search<'a> {
    net: &'a SampledNetwork,
    classes: &'a [Class],
    cond: Condition,
    slack: f64,
}

const REFRESH: u32 = 256;

impl Search<'_> {
    /// Some assignment extending `prefix` (bits of the first positions) that
    /// satisfies the condition exactly, or `None`.
    fn feasible(&self, prefix: &[bool], class_of: &[usize]) -> Option<Vec<bool>> {
        let nc = self.classes.len();
        let mut forced = vec![0usize; nc];
        let mut free: Vec<Vec<usize>> = vec![Vec::new(); nc];
        for (p, &b) in prefix.iter().enumerate() {
            if b {
                forced[class_of[p]] += 1;
            }
        }
        for p in prefix.len()..class_of.len() {
            free[class_of[p]].push(p);
        }
        let lo = forced.clone();
        let hi: Vec<usize> = (0..nc)
            .map(|c| {
                let class = &self.classes[c];
                if class.zero && forced[c] > 0 {
                    forced[c]
                } else {
                    forced[c] + class.digit_max(free[c].len())
                }
            })
            .collect();

        let realize = |k: &[usize]| -> Vec<bool> {
            let mut mask = vec![false; class_of.len()];
            mask[..prefix.len()].copy_from_slice(prefix);
            for c in 0..nc {
                let extra = k[c] - forced[c];
                let f = &free[c];
                for &p in &f[f.len() - extra..] {
                    mask[p] = true;
                }
            }
            mask
        };

        let r1 = self.net.first_width();
        let recompute = |k: &[usize], pre: &mut Vec<f64>| {
            pre.clear();
            pre.resize(r1, 0.0);
            for (c, &cnt) in k.iter().enumerate() {
                if cnt > 0 && !self.classes[c].zero {
                    let cnt = cnt as f64;
                    for (acc, &a) in pre.iter_mut().zip(&self.classes[c].col) {
                        *acc += cnt * a;
                    }
                }
            }
        };

        let mut k = lo.clone();
        let mut pre = Vec::with_capacity(r1);
        recompute(&k, &mut pre);
        let mut scratch = Scratch::default();
        let mut steps: u32 = 0;
        loop {
            let approx = self.net.head(&pre, &mut scratch);
            let nonzero_ok = !self.cond.nonzero || k.iter().any(|&c| c > 0);
            if nonzero_ok && self.cond.cmp.nearly(approx, self.cond.threshold, self.slack) {
                let mask = realize(&k);
                let exact = self.net.value_of_mask(&mask);
                if self.cond.cmp.holds(exact, self.cond.threshold) {
                    return Some(mask);
                }
            }
            let mut d = 0;
            loop {
                if d == nc {
                    return None;
                }
                if k[d] < hi[d] {
                    k[d] += 1;
                    if !self.classes[d].zero {
                        for (acc, &a) in pre.iter_mut().zip(&self.classes[d].col) {
                            *acc += a;
                        }
                    }
                    break;
                }
                let back = (k[d] - lo[d]) as f64;
                if back > 0.0 && !self.classes[d].zero {
                    for (acc, &a) in pre.iter_mut().zip(&self.classes[d].col) {
                        *acc -= back * a;
                    }
                }
                k[d] = lo[d];
                d += 1;
            }
            steps += 1;
            if steps.is_multiple_of(REFRESH) {
                recompute(&k, &mut pre);
            }
        }
    }
}
