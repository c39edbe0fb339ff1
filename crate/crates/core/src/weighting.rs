//! Information-driven factor weights.
//!
//! The association weight is a logistic of a shifted (variant A) or rescaled
//! (variant B) information score. Odometry and prior weights grow as the
//! association weight falls, scaled by the pair count so the prior
//! trajectory can balance the association residuals.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

pub const DEFAULT_S_MAX: f64 = 60.0;
/// Size of the logistic's active input span `[-6, 6]`.
pub const DEFAULT_H: f64 = 12.0;
/// `lambda_a` as a fraction of the calibrated maximum score.
pub const DEFAULT_LAMBDA_A_FRACTION: f64 = 0.3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WeightConfigError {
    #[error("{name} must be positive and finite, got {value}")]
    NotPositive { name: &'static str, value: f64 },
    #[error("unknown phi variant '{0}' (expected 'a' or 'b')")]
    UnknownVariant(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PhiVariant {
    /// `phi(s) = s - lambda_a`: a smoothed step at `lambda_a`.
    #[default]
    A,
    /// `phi(s) = (h / lambda_b) s - h / 2`: spreads `[0, lambda_b]` over the active span.
    B,
}

impl FromStr for PhiVariant {
    type Err = WeightConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "a" => Ok(Self::A),
            "b" => Ok(Self::B),
            other => Err(WeightConfigError::UnknownVariant(other.to_string())),
        }
    }
}

impl fmt::Display for PhiVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::A => "a",
            Self::B => "b",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightConfig {
    pub phi_variant: PhiVariant,
    pub lambda_a: f64,
    pub lambda_b: f64,
    pub h: f64,
    pub s_max_hint: f64,
}

impl Default for WeightConfig {
    fn default() -> Self {
        Self::from_s_max(DEFAULT_S_MAX, PhiVariant::A)
    }
}

impl WeightConfig {
    /// Defaults derived from an observed maximum score: `lambda_b = s_max`,
    /// `lambda_a = 0.3 s_max`, `h = 12`.
    pub fn from_s_max(s_max: f64, phi_variant: PhiVariant) -> Self {
        Self {
            phi_variant,
            lambda_a: DEFAULT_LAMBDA_A_FRACTION * s_max,
            lambda_b: s_max,
            h: DEFAULT_H,
            s_max_hint: s_max,
        }
    }

    pub fn validate(&self) -> Result<(), WeightConfigError> {
        for (name, value) in [("lambda_a", self.lambda_a), ("lambda_b", self.lambda_b), ("h", self.h)] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(WeightConfigError::NotPositive { name, value });
            }
        }
        Ok(())
    }
}

/// Sigmoid input for score `s`.
pub fn phi(s: f64, cfg: &WeightConfig) -> f64 {
    match cfg.phi_variant {
        PhiVariant::A => s - cfg.lambda_a,
        PhiVariant::B => cfg.h / cfg.lambda_b * s - cfg.h / 2.0,
    }
}

/// Logistic function, evaluated without overflow for large `|x|`.
pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Association (and bias-error) weight in `(0, 1)`.
pub fn weight_association(s: f64, cfg: &WeightConfig) -> f64 {
    logistic(phi(s, cfg))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameWeights {
    pub w_a: f64,
    pub w_e: f64,
    pub w_o: f64,
    pub w_p: f64,
}

impl FrameWeights {
    /// Every factor at the same constant weight (unweighted baseline).
    pub fn fixed(value: f64) -> Self {
        Self {
            w_a: value,
            w_e: value,
            w_o: value,
            w_p: value,
        }
    }
}

/// Weights for a frame with score `s`, `k` associations and a GPS fix of
/// variance `sigma_xy`.
pub fn frame_weights(s: f64, k: usize, sigma_xy: f64, cfg: &WeightConfig) -> FrameWeights {
    let w_a = weight_association(s, cfg);
    let w_o = (k as f64 + 1.0) * (2.0 - w_a);
    FrameWeights {
        w_a,
        w_e: w_a,
        w_o,
        w_p: w_o / (sigma_xy + 1.0),
    }
}
