use serde::Serialize;

use crate::bits::BitVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Accept,
    Reject,
}

/// Outcome of one tester run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub decision: Decision,
    /// Distinct weight coordinates read, or network evaluations for the
    /// vanilla tester.
    pub queries: usize,
    pub witness: Option<BitVector>,
    /// Sample sizes per layer after clamping.
    pub sizes: Vec<usize>,
    pub clamped: bool,
    pub scaled: bool,
    pub seed: u64,
}

impl Verdict {
    pub fn accepted(&self) -> bool {
        self.decision == Decision::Accept
    }

    pub fn rejected(&self) -> bool {
        self.decision == Decision::Reject
    }

    pub(crate) fn from_witness(witness: Option<BitVector>, queries: usize, sizes: Vec<usize>) -> Self {
        Verdict {
            decision: if witness.is_some() {
                Decision::Reject
            } else {
                Decision::Accept
            },
            queries,
            witness,
            sizes,
            clamped: false,
            scaled: false,
            seed: 0,
        }
    }
}
