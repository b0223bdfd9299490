//! Label-alignment reward, WER penalty and their weighted combination.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::{Dimension, ProsodyLabels};

/// Trade-off weights: `alpha1` on the WER penalty, `alpha2` on the label
/// reward, and one weight per label dimension in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardWeights {
    pub alpha1: f64,
    pub alpha2: f64,
    pub label_weights: [f64; 4],
}

impl Default for RewardWeights {
    fn default() -> Self {
        RewardWeights {
            alpha1: 0.3,
            alpha2: 0.7,
            label_weights: [0.25; 4],
        }
    }
}

impl RewardWeights {
    pub fn validate(&self) -> Result<()> {
        let check = |name: &str, v: f64| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(Error::config(name, format!("must be a finite non-negative number, got {v}")))
            }
        };
        check("alpha1", self.alpha1)?;
        check("alpha2", self.alpha2)?;
        for w in self.label_weights {
            check("label_weights", w)?;
        }
        Ok(())
    }
}

/// Per-sample reward decomposition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub wer_value: f64,
    pub label_value: f64,
    pub total: f64,
}

/// Componentwise equality indicator in canonical dimension order.
pub fn match_vector(predicted: &ProsodyLabels, target: &ProsodyLabels) -> [u8; 4] {
    Dimension::ALL.map(|d| u8::from(predicted.get(d) == target.get(d)))
}

/// Weighted count of matching dimensions.
pub fn label_reward(predicted: &ProsodyLabels, target: &ProsodyLabels, weights: &RewardWeights) -> f64 {
    match_vector(predicted, target)
        .iter()
        .zip(weights.label_weights)
        .map(|(&m, w)| w * f64::from(m))
        .sum()
}

pub fn composite_reward(wer_value: f64, label_value: f64, weights: &RewardWeights) -> RewardBreakdown {
    debug_assert!(wer_value >= 0.0 && label_value >= 0.0);
    RewardBreakdown {
        wer_value,
        label_value,
        total: -weights.alpha1 * wer_value + weights.alpha2 * label_value,
    }
}
