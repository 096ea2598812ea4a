//! Truncated normal sampling by rejection from the parent normal.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::ScenarioError;

/// Normal distribution restricted to [lower, upper].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruncatedNormalSpec {
    pub mean: f64,
    pub sd: f64,
    pub lower: f64,
    pub upper: f64,
}

impl TruncatedNormalSpec {
    pub fn new(mean: f64, sd: f64, lower: f64, upper: f64) -> Result<Self, ScenarioError> {
        if !(sd > 0.0) || !(lower < upper) {
            return Err(ScenarioError::InvalidTruncatedNormal {
                mean,
                sd,
                lower,
                upper,
            });
        }
        Ok(Self {
            mean,
            sd,
            lower,
            upper,
        })
    }

    /// Rejection sampling: draw from the parent normal until the draw
    /// lands inside the bounds. Typical configurations accept almost
    /// every draw; a hard attempt cap guards pathological ones.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> Result<f64, ScenarioError> {
        let parent = Normal::new(self.mean, self.sd).expect("validated sd");
        const MAX_ATTEMPTS: usize = 10_000;
        for _ in 0..MAX_ATTEMPTS {
            let x = parent.sample(rng);
            if x >= self.lower && x <= self.upper {
                return Ok(x);
            }
        }
        Err(ScenarioError::TruncatedNormalRejection {
            attempts: MAX_ATTEMPTS,
        })
    }
}
