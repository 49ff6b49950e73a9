//! Property testers for ReLU networks that read individual weights.
//!
//! A network is a layered graph with weights in `[-1, 1]`; on input
//! `x ∈ {0,1}^n` it outputs `1` iff its final value is positive. The testers
//! sample a few nodes per layer, read the weights between them, and decide
//! whether the network computes (or is far from computing) a target such as
//! the constant-0 function or `OR`.

pub mod bits;
pub mod config;
pub mod constructions;
pub mod distfree;
pub mod error;
pub mod format;
pub mod harness;
pub mod monotone;
pub mod network;
pub mod oracle;
pub mod query;
pub mod sampling;
pub mod search;
pub mod subsample;
pub mod testers_deep;
pub mod testers_shl;
pub mod verdict;

pub use bits::BitVector;
pub use config::TesterConfig;
pub use error::{Error, Result};
pub use network::{DeepNetwork, Matrix, MoNetwork, Network, ShlNetwork, WeightCoord};
pub use query::WeightOracle;
pub use sampling::SamplePlan;
pub use verdict::{Decision, Verdict};
