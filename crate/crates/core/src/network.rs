//! Network weight containers and exact forward evaluation.
//!
//! All evaluation paths sum a node's incoming contributions over the active
//! predecessors in ascending index order. Zero inputs are skipped, which does
//! not change an IEEE sum, so the sparse and dense views of the same input
//! produce bit-identical values. The samplers in [`crate::subsample`] follow
//! the same order, which is what makes full-plan scaled values equal exact
//! values to the last bit.

use serde::{Deserialize, Serialize};

use crate::bits::BitVector;
use crate::error::{Error, Result};

#[inline]
pub fn relu(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        0.0
    }
}

/// `sign(relu(v))` with `sign(0) = 0`.
#[inline]
pub fn output_bit(v: f64) -> bool {
    v > 0.0
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Matrix { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Dimension("ragged matrix rows".into()));
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data: rows.iter().flatten().copied().collect(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|r| self.row(r).to_vec()).collect()
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    fn check_range(&self, label: &str) -> Result<()> {
        for (idx, &v) in self.data.iter().enumerate() {
            check_weight(v, || format!("{label}[{}][{}]", idx / self.cols, idx % self.cols))?;
        }
        Ok(())
    }
}

pub(crate) fn check_weight(v: f64, location: impl FnOnce() -> String) -> Result<()> {
    if !v.is_finite() {
        return Err(Error::NonFinite(location()));
    }
    if !(-1.0..=1.0).contains(&v) {
        return Err(Error::WeightOutOfRange {
            location: location(),
            value: v,
        });
    }
    Ok(())
}

fn check_input(x: &BitVector, n: usize) -> Result<()> {
    if x.len() != n {
        return Err(Error::Dimension(format!(
            "input has length {}, network expects {n}",
            x.len()
        )));
    }
    Ok(())
}

/// Address of one weight: `(layer, row, column)`.
///
/// Layer 0 maps inputs to the first hidden layer. For single-hidden-layer
/// networks the output vector `w` is layer 1 with column 0; for multi-output
/// networks `W[j][c]` is layer 1, row `j`, column `c`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct WeightCoord {
    pub layer: u32,
    pub row: u32,
    pub col: u32,
}

impl WeightCoord {
    pub fn new(layer: usize, row: usize, col: usize) -> Self {
        WeightCoord {
            layer: layer as u32,
            row: row as u32,
            col: col as u32,
        }
    }
}

/// Anything whose weights can be read by coordinate.
pub trait WeightSource {
    fn weight(&self, coord: WeightCoord) -> f64;
}

/// One hidden layer, one output: `f(x) = sign(relu(w^T relu(Ax)))`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShlNetwork {
    a: Matrix,
    w: Vec<f64>,
}

impl ShlNetwork {
    /// `a` is `m x n`, `w` has length `m`.
    pub fn new(a: Matrix, w: Vec<f64>) -> Result<Self> {
        if a.rows() != w.len() {
            return Err(Error::Dimension(format!(
                "A has {} rows but w has {} entries",
                a.rows(),
                w.len()
            )));
        }
        if a.rows() == 0 || a.cols() == 0 {
            return Err(Error::Dimension("network needs n, m >= 1".into()));
        }
        a.check_range("A")?;
        for (j, &v) in w.iter().enumerate() {
            check_weight(v, || format!("w[{j}]"))?;
        }
        Ok(ShlNetwork { a, w })
    }

    pub fn from_rows(a: &[Vec<f64>], w: &[f64]) -> Result<Self> {
        Self::new(Matrix::from_rows(a)?, w.to_vec())
    }

    /// Every first-layer weight `a`, every second-layer weight `w`.
    pub fn constant(n: usize, m: usize, a: f64, w: f64) -> Result<Self> {
        Self::new(Matrix::filled(m, n, a), vec![w; m])
    }

    pub fn n(&self) -> usize {
        self.a.cols()
    }

    pub fn m(&self) -> usize {
        self.a.rows()
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn w(&self) -> &[f64] {
        &self.w
    }

    /// Hidden pre-activations `Ax`.
    pub fn hidden(&self, x: &BitVector) -> Result<Vec<f64>> {
        check_input(x, self.n())?;
        let ones: Vec<usize> = x.iter_ones().collect();
        Ok((0..self.m())
            .map(|j| {
                let row = self.a.row(j);
                ones.iter().fold(0.0, |acc, &i| acc + row[i])
            })
            .collect())
    }

    /// `(w^T relu(Ax), bit)`.
    pub fn eval(&self, x: &BitVector) -> Result<(f64, bool)> {
        let hidden = self.hidden(x)?;
        let value = self
            .w
            .iter()
            .zip(&hidden)
            .fold(0.0, |acc, (&wj, &h)| acc + wj * relu(h));
        Ok((value, output_bit(value)))
    }

    pub fn is_ternary(&self) -> bool {
        let t = |v: &f64| *v == 0.0 || *v == 1.0 || *v == -1.0;
        self.a.values().iter().all(t) && self.w.iter().all(t)
    }
}

impl WeightSource for ShlNetwork {
    fn weight(&self, c: WeightCoord) -> f64 {
        match c.layer {
            0 => self.a.get(c.row as usize, c.col as usize),
            1 => {
                assert_eq!(c.col, 0, "second-layer column must be 0");
                self.w[c.row as usize]
            }
            l => panic!("layer {l} out of range for a single-hidden-layer network"),
        }
    }
}

/// One hidden layer, `r` outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct MoNetwork {
    a: Matrix,
    w: Matrix,
}

impl MoNetwork {
    /// `a` is `m x n`, `w` is `m x r`.
    pub fn new(a: Matrix, w: Matrix) -> Result<Self> {
        if a.rows() != w.rows() {
            return Err(Error::Dimension(format!(
                "A has {} rows but W has {}",
                a.rows(),
                w.rows()
            )));
        }
        if a.rows() == 0 || a.cols() == 0 || w.cols() == 0 {
            return Err(Error::Dimension("network needs n, m, r >= 1".into()));
        }
        a.check_range("A")?;
        w.check_range("W")?;
        Ok(MoNetwork { a, w })
    }

    pub fn n(&self) -> usize {
        self.a.cols()
    }

    pub fn m(&self) -> usize {
        self.a.rows()
    }

    pub fn r(&self) -> usize {
        self.w.cols()
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn w(&self) -> &Matrix {
        &self.w
    }

    pub fn eval(&self, x: &BitVector) -> Result<(Vec<f64>, BitVector)> {
        check_input(x, self.n())?;
        let ones: Vec<usize> = x.iter_ones().collect();
        let hidden: Vec<f64> = (0..self.m())
            .map(|j| {
                let row = self.a.row(j);
                relu(ones.iter().fold(0.0, |acc, &i| acc + row[i]))
            })
            .collect();
        let values: Vec<f64> = (0..self.r())
            .map(|c| (0..self.m()).fold(0.0, |acc, j| acc + self.w.get(j, c) * hidden[j]))
            .collect();
        let bits = BitVector::from_bools(&values.iter().map(|&v| output_bit(v)).collect::<Vec<_>>());
        Ok((values, bits))
    }

    /// The single-output network `(A, W[:, j])` (0-based `j`).
    pub fn restrict_output(&self, j: usize) -> Result<ShlNetwork> {
        if j >= self.r() {
            return Err(Error::IndexOutOfRange {
                index: j,
                bound: self.r(),
            });
        }
        ShlNetwork::new(self.a.clone(), self.w.column(j))
    }
}

impl WeightSource for MoNetwork {
    fn weight(&self, c: WeightCoord) -> f64 {
        match c.layer {
            0 => self.a.get(c.row as usize, c.col as usize),
            1 => self.w.get(c.row as usize, c.col as usize),
            l => panic!("layer {l} out of range for a multi-output network"),
        }
    }
}

/// `ℓ >= 1` hidden layers; layer `k` has shape `dims[k+1] x dims[k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DeepNetwork {
    dims: Vec<usize>,
    layers: Vec<Matrix>,
}

impl DeepNetwork {
    pub fn new(layers: Vec<Matrix>) -> Result<Self> {
        if layers.len() < 2 {
            return Err(Error::Dimension(
                "a deep network needs at least one hidden layer (two weight matrices)".into(),
            ));
        }
        let mut dims = vec![layers[0].cols()];
        for (k, layer) in layers.iter().enumerate() {
            if layer.cols() != *dims.last().unwrap() {
                return Err(Error::Dimension(format!(
                    "layer {k} has {} columns, previous layer has {} nodes",
                    layer.cols(),
                    dims.last().unwrap()
                )));
            }
            dims.push(layer.rows());
        }
        if dims.contains(&0) {
            return Err(Error::Dimension("all layer sizes must be positive".into()));
        }
        for (k, layer) in layers.iter().enumerate() {
            layer.check_range(&format!("W{k}"))?;
        }
        Ok(DeepNetwork { dims, layers })
    }

    /// Every weight equal to `value`.
    pub fn constant(dims: &[usize], value: f64) -> Result<Self> {
        Self::new(
            dims.windows(2)
                .map(|d| Matrix::filled(d[1], d[0], value))
                .collect(),
        )
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    /// Number of hidden layers `ℓ`.
    pub fn depth(&self) -> usize {
        self.layers.len() - 1
    }

    pub fn inputs(&self) -> usize {
        self.dims[0]
    }

    pub fn outputs(&self) -> usize {
        *self.dims.last().unwrap()
    }

    pub fn layers(&self) -> &[Matrix] {
        &self.layers
    }

    pub fn layer(&self, k: usize) -> &Matrix {
        &self.layers[k]
    }

    pub fn eval(&self, x: &BitVector) -> Result<(Vec<f64>, BitVector)> {
        check_input(x, self.inputs())?;
        let ones: Vec<usize> = x.iter_ones().collect();
        let first = &self.layers[0];
        let mut values: Vec<f64> = (0..first.rows())
            .map(|j| {
                let row = first.row(j);
                ones.iter().fold(0.0, |acc, &i| acc + row[i])
            })
            .collect();
        for layer in &self.layers[1..] {
            let act: Vec<f64> = values.iter().map(|&v| relu(v)).collect();
            values = (0..layer.rows())
                .map(|j| {
                    layer
                        .row(j)
                        .iter()
                        .zip(&act)
                        .fold(0.0, |acc, (&wt, &a)| acc + wt * a)
                })
                .collect();
        }
        let bits = BitVector::from_bools(&values.iter().map(|&v| output_bit(v)).collect::<Vec<_>>());
        Ok((values, bits))
    }

    /// Keeps only output `j` of the last layer.
    pub fn restrict_output(&self, j: usize) -> Result<DeepNetwork> {
        if j >= self.outputs() {
            return Err(Error::IndexOutOfRange {
                index: j,
                bound: self.outputs(),
            });
        }
        let mut layers = self.layers.clone();
        let last = layers.pop().unwrap();
        layers.push(Matrix::from_rows(&[last.row(j).to_vec()])?);
        DeepNetwork::new(layers)
    }
}

impl WeightSource for DeepNetwork {
    fn weight(&self, c: WeightCoord) -> f64 {
        self.layers[c.layer as usize].get(c.row as usize, c.col as usize)
    }
}

impl From<&ShlNetwork> for DeepNetwork {
    fn from(net: &ShlNetwork) -> Self {
        let w = Matrix::from_rows(&[net.w().to_vec()]).expect("single row");
        DeepNetwork::new(vec![net.a().clone(), w]).expect("valid shl network is a valid deep network")
    }
}

/// Any of the three network kinds, as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub enum Network {
    Shl(ShlNetwork),
    Mo(MoNetwork),
    Deep(DeepNetwork),
}

impl Network {
    pub fn kind(&self) -> &'static str {
        match self {
            Network::Shl(_) => "shl",
            Network::Mo(_) => "mo",
            Network::Deep(_) => "deep",
        }
    }

    pub fn inputs(&self) -> usize {
        match self {
            Network::Shl(n) => n.n(),
            Network::Mo(n) => n.n(),
            Network::Deep(n) => n.inputs(),
        }
    }

    pub fn outputs(&self) -> usize {
        match self {
            Network::Shl(_) => 1,
            Network::Mo(n) => n.r(),
            Network::Deep(n) => n.outputs(),
        }
    }

    /// Output bits on `x`.
    pub fn eval_bits(&self, x: &BitVector) -> Result<BitVector> {
        match self {
            Network::Shl(n) => n.eval(x).map(|(_, b)| BitVector::from_bools(&[b])),
            Network::Mo(n) => n.eval(x).map(|(_, b)| b),
            Network::Deep(n) => n.eval(x).map(|(_, b)| b),
        }
    }

    /// Weight count per layer, used for per-layer edit budgets.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        match self {
            Network::Shl(n) => vec![(n.m(), n.n()), (n.m(), 1)],
            Network::Mo(n) => vec![(n.m(), n.n()), (n.m(), n.r())],
            Network::Deep(n) => n.layers().iter().map(|l| (l.rows(), l.cols())).collect(),
        }
    }
}

impl WeightSource for Network {
    fn weight(&self, c: WeightCoord) -> f64 {
        match self {
            Network::Shl(n) => n.weight(c),
            Network::Mo(n) => n.weight(c),
            Network::Deep(n) => n.weight(c),
        }
    }
}

impl From<ShlNetwork> for Network {
    fn from(n: ShlNetwork) -> Self {
        Network::Shl(n)
    }
}

impl From<MoNetwork> for Network {
    fn from(n: MoNetwork) -> Self {
        Network::Mo(n)
    }
}

impl From<DeepNetwork> for Network {
    fn from(n: DeepNetwork) -> Self {
        Network::Deep(n)
    }
}

/// Evaluator for networks whose weights are all in `{-1, 0, 1}`.
///
/// Each hidden row is stored as two bit masks, so a pre-activation is a pair
/// of popcounts. Integer arithmetic is exact, so results match
/// [`ShlNetwork::eval`] bit for bit.
#[derive(Debug, Clone)]
pub struct TernaryEvaluator {
    n: usize,
    rows: Vec<(i64, Vec<u64>, Vec<u64>)>,
}

impl TernaryEvaluator {
    /// Returns `None` if some weight is not ternary.
    pub fn new(net: &ShlNetwork) -> Option<Self> {
        if !net.is_ternary() {
            return None;
        }
        let words = net.n().div_ceil(64);
        let rows = (0..net.m())
            .filter(|&j| net.w()[j] != 0.0)
            .map(|j| {
                let mut pos = vec![0u64; words];
                let mut neg = vec![0u64; words];
                for (i, &v) in net.a().row(j).iter().enumerate() {
                    if v == 1.0 {
                        pos[i / 64] |= 1 << (i % 64);
                    } else if v == -1.0 {
                        neg[i / 64] |= 1 << (i % 64);
                    }
                }
                (net.w()[j] as i64, pos, neg)
            })
            .collect();
        Some(TernaryEvaluator { n: net.n(), rows })
    }

    pub fn value(&self, x: &BitVector) -> i64 {
        assert_eq!(x.len(), self.n, "input length mismatch");
        let xw = x.words();
        self.rows
            .iter()
            .map(|(w, pos, neg)| {
                let mut pre = 0i64;
                for ((p, q), xv) in pos.iter().zip(neg).zip(xw) {
                    pre += (p & xv).count_ones() as i64 - (q & xv).count_ones() as i64;
                }
                w * pre.max(0)
            })
            .sum()
    }

    pub fn bit(&self, x: &BitVector) -> bool {
        self.value(x) > 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_evaluated_shl() {
        let net = ShlNetwork::from_rows(&[vec![1.0, -1.0], vec![0.5, 0.5]], &[1.0, -1.0]).unwrap();
        let (v, b) = net.eval(&BitVector::from_bools(&[true, false])).unwrap();
        assert_eq!(v, 0.5);
        assert!(b);
    }

    #[test]
    fn relu_clips_negative_hidden_value() {
        let net = ShlNetwork::from_rows(&[vec![-1.0]], &[1.0]).unwrap();
        assert_eq!(net.eval(&BitVector::ones(1)).unwrap(), (0.0, false));
    }

    #[test]
    fn zero_input_always_gives_zero() {
        let net = ShlNetwork::from_rows(&[vec![1.0, 0.3], vec![-0.2, 1.0]], &[0.7, 1.0]).unwrap();
        assert_eq!(net.eval(&BitVector::zeros(2)).unwrap(), (0.0, false));
        let deep = DeepNetwork::constant(&[3, 2, 2, 1], 1.0).unwrap();
        let (vals, bits) = deep.eval(&BitVector::zeros(3)).unwrap();
        assert_eq!(vals, vec![0.0]);
        assert!(bits.is_zero());
    }

    #[test]
    fn hand_evaluated_deep() {
        let net = DeepNetwork::new(vec![
            Matrix::from_rows(&[vec![1.0]]).unwrap(),
            Matrix::from_rows(&[vec![-1.0]]).unwrap(),
        ])
        .unwrap();
        let (v, b) = net.eval(&BitVector::ones(1)).unwrap();
        assert_eq!(v, vec![-1.0]);
        assert!(!b.get(0));

        let ones = DeepNetwork::constant(&[2, 2, 1], 1.0).unwrap();
        let (v, b) = ones.eval(&BitVector::ones(2)).unwrap();
        assert_eq!(v, vec![4.0]);
        assert!(b.get(0));
    }

    #[test]
    fn dimension_errors() {
        let net = ShlNetwork::constant(3, 2, 1.0, 1.0).unwrap();
        assert!(matches!(net.eval(&BitVector::zeros(2)), Err(Error::Dimension(_))));
        assert!(ShlNetwork::new(Matrix::zeros(2, 2), vec![0.0]).is_err());
        assert!(DeepNetwork::new(vec![Matrix::zeros(2, 3), Matrix::zeros(1, 3)]).is_err());
        assert!(DeepNetwork::new(vec![Matrix::zeros(2, 3)]).is_err());
    }

    #[test]
    fn out_of_range_weight_is_rejected() {
        let err = ShlNetwork::from_rows(&[vec![1.5]], &[1.0]).unwrap_err();
        assert!(matches!(err, Error::WeightOutOfRange { .. }));
        assert!(ShlNetwork::from_rows(&[vec![f64::NAN]], &[1.0]).is_err());
    }

    #[test]
    fn restriction_selects_column() {
        let a = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.5, -0.5]]).unwrap();
        let w = Matrix::from_rows(&[vec![0.1, 0.2, 0.3], vec![-0.1, -0.2, -0.3]]).unwrap();
        let mo = MoNetwork::new(a.clone(), w).unwrap();
        let r = mo.restrict_output(1).unwrap();
        assert_eq!(r.a(), &a);
        assert_eq!(r.w(), &[0.2, -0.2]);
        assert!(matches!(mo.restrict_output(3), Err(Error::IndexOutOfRange { .. })));
    }

    #[test]
    fn single_output_restriction_is_identity() {
        let a = Matrix::from_rows(&[vec![0.4, -0.9]]).unwrap();
        let mo = MoNetwork::new(a.clone(), Matrix::from_rows(&[vec![0.8]]).unwrap()).unwrap();
        assert_eq!(mo.restrict_output(0).unwrap(), ShlNetwork::new(a, vec![0.8]).unwrap());
    }

    #[test]
    fn ternary_evaluator_matches_float_path() {
        let net = ShlNetwork::from_rows(
            &[vec![1.0, -1.0, 0.0], vec![1.0, 1.0, 1.0], vec![-1.0, 0.0, 1.0]],
            &[1.0, -1.0, 1.0],
        )
        .unwrap();
        let te = TernaryEvaluator::new(&net).unwrap();
        for idx in 0..8 {
            let x = BitVector::from_index(3, idx);
            assert_eq!(te.value(&x) as f64, net.eval(&x).unwrap().0);
        }
        let frac = ShlNetwork::from_rows(&[vec![0.5]], &[1.0]).unwrap();
        assert!(TernaryEvaluator::new(&frac).is_none());
    }
}
