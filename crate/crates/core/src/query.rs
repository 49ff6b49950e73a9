use std::collections::HashSet;

use crate::network::{WeightCoord, WeightSource};

/// Counts the distinct weight coordinates a tester reads.
///
/// Single owner: parallel trials each build their own oracle.
pub struct WeightOracle<'a, N: WeightSource + ?Sized> {
    net: &'a N,
    queried: HashSet<WeightCoord>,
}

impl<'a, N: WeightSource + ?Sized> WeightOracle<'a, N> {
    pub fn new(net: &'a N) -> Self {
        WeightOracle {
            net,
            queried: HashSet::new(),
        }
    }

    pub fn network(&self) -> &'a N {
        self.net
    }

    pub fn query(&mut self, coord: WeightCoord) -> f64 {
        self.queried.insert(coord);
        self.net.weight(coord)
    }

    pub fn get(&mut self, layer: usize, row: usize, col: usize) -> f64 {
        self.query(WeightCoord::new(layer, row, col))
    }

    pub fn count(&self) -> usize {
        self.queried.len()
    }

    pub fn was_queried(&self, coord: WeightCoord) -> bool {
        self.queried.contains(&coord)
    }

    pub fn queried(&self) -> impl Iterator<Item = &WeightCoord> {
        self.queried.iter()
    }
}
