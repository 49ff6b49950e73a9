use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Parameters shared by all testers.
///
/// `delta` is recorded but no tester branches on it: the sample sizes of the
/// weight-query testers depend only on `epsilon` and `lambda`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TesterConfig {
    pub epsilon: f64,
    pub delta: f64,
    pub lambda: f64,
    /// Multiplies every sample-size formula. 1.0 keeps the published constants.
    pub constant_scale: f64,
    /// Largest search space (log2 of candidates) a witness search may visit.
    pub enum_cap: u32,
    pub seed: u64,
}

impl Default for TesterConfig {
    fn default() -> Self {
        TesterConfig {
            epsilon: 0.25,
            delta: 0.5,
            lambda: 1.0 / 3.0,
            constant_scale: 1.0,
            enum_cap: 24,
            seed: 0,
        }
    }
}

impl TesterConfig {
    pub fn validate(&self) -> Result<()> {
        let open = |v: f64| v > 0.0 && v < 1.0;
        if !open(self.epsilon) {
            return Err(Error::Config(format!("epsilon {} not in (0,1)", self.epsilon)));
        }
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            return Err(Error::Config(format!("delta {} not in (0,1]", self.delta)));
        }
        if !open(self.lambda) {
            return Err(Error::Config(format!("lambda {} not in (0,1)", self.lambda)));
        }
        if !(self.constant_scale > 0.0 && self.constant_scale.is_finite()) {
            return Err(Error::Config(format!(
                "constant_scale {} must be positive",
                self.constant_scale
            )));
        }
        if self.enum_cap == 0 || self.enum_cap > 62 {
            return Err(Error::Config(format!("enum_cap {} not in [1,62]", self.enum_cap)));
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        TesterConfig {
            seed,
            ..self.clone()
        }
    }

    /// `ceil(constant_scale * raw)`, saturating, at least 1.
    pub fn scaled(&self, raw: f64) -> u64 {
        let v = (self.constant_scale * raw).ceil();
        if v < 1.0 {
            1
        } else {
            v as u64
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_scale_rejected() {
        let cfg = TesterConfig {
            constant_scale: 0.0,
            ..Default::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn parameter_ranges() {
        assert!(TesterConfig::default().validate().is_ok());
        for bad in [
            TesterConfig { epsilon: 1.0, ..Default::default() },
            TesterConfig { lambda: 0.0, ..Default::default() },
            TesterConfig { delta: 0.0, ..Default::default() },
            TesterConfig { enum_cap: 0, ..Default::default() },
        ] {
            assert!(bad.validate().is_err(), "{bad:?}");
        }
        assert!(TesterConfig { delta: 1.0, ..Default::default() }.validate().is_ok());
    }

    #[test]
    fn scaled_saturates() {
        let cfg = TesterConfig::default();
        assert_eq!(cfg.scaled(1e30), u64::MAX);
        assert_eq!(cfg.scaled(0.0), 1);
        assert_eq!(cfg.scaled(2.2), 3);
    }
}
