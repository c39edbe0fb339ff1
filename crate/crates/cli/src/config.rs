//! Run configuration: an optional TOML file whose keys mirror the numeric
//! flags. Flags given on the command line win over the file.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use geoloc::graph::engine::DEFAULT_HEADING_BASELINE;
use geoloc::graph::{Algorithm, OdometryConvention};
use geoloc::weighting::DEFAULT_S_MAX;
use geoloc::{EngineConfig, PhiVariant, SolverConfig, WeightConfig};

#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub preset: Option<String>,
    /// Inclusive frame ranges written as "150:350".
    pub dropout: Option<Vec<String>>,
    pub keyframe_every: Option<u64>,

    pub s_max: Option<f64>,
    pub lambda_a: Option<f64>,
    pub lambda_b: Option<f64>,
    pub h: Option<f64>,
    pub phi: Option<String>,
    pub bias_estimation: Option<bool>,
    pub fixed_weights: Option<f64>,
    pub conventional_odometry: Option<bool>,
    pub association_threshold: Option<f64>,
    pub crop_radius: Option<f64>,
    pub resample_step: Option<f64>,
    pub heading_baseline: Option<f64>,

    pub solver: Option<String>,
    pub max_iterations: Option<usize>,
    pub window_frames: Option<usize>,
    pub error_window: Option<usize>,

    pub ate_mean: Option<bool>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    /// Fields set in `over` replace those in `self`.
    pub fn overlay(self, over: FileConfig) -> FileConfig {
        macro_rules! pick {
            ($($f:ident),*) => { FileConfig { $($f: over.$f.or(self.$f)),* } };
        }
        pick!(
            seed, preset, dropout, keyframe_every, s_max, lambda_a, lambda_b, h, phi, bias_estimation, fixed_weights,
            conventional_odometry, association_threshold, crop_radius, resample_step, heading_baseline, solver,
            max_iterations, window_frames, error_window, ate_mean
        )
    }

    pub fn resample_step(&self) -> f64 {
        self.resample_step.unwrap_or(geoloc::map::DEFAULT_RESAMPLE_STEP)
    }

    pub fn solver_config(&self) -> Result<SolverConfig> {
        let mut cfg = SolverConfig::default();
        if let Some(a) = &self.solver {
            cfg.algorithm = a.parse::<Algorithm>().map_err(anyhow::Error::msg)?;
        }
        if let Some(n) = self.max_iterations {
            cfg.max_iterations = n;
        }
        if let Some(n) = self.window_frames {
            cfg.window_frames = n;
        }
        if let Some(n) = self.error_window {
            cfg.error_window_w = n;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// `s_max` from the flags/file, else the calibration file, else the
    /// library default.
    pub fn weight_config(&self, calibrated: Option<f64>) -> Result<(WeightConfig, &'static str)> {
        let (s_max, source) = match (self.s_max, calibrated) {
            (Some(s), _) => (s, "config"),
            (None, Some(s)) => (s, "calibration"),
            (None, None) => (DEFAULT_S_MAX, "default"),
        };
        if !(s_max > 0.0 && s_max.is_finite()) {
            bail!("s_max must be positive, got {s_max}");
        }
        let phi = match &self.phi {
            Some(p) => p.parse::<PhiVariant>()?,
            None => PhiVariant::A,
        };
        let mut w = WeightConfig::from_s_max(s_max, phi);
        if let Some(v) = self.lambda_a {
            w.lambda_a = v;
        }
        if let Some(v) = self.lambda_b {
            w.lambda_b = v;
        }
        if let Some(v) = self.h {
            w.h = v;
        }
        w.validate()?;
        Ok((w, source))
    }

    pub fn engine_config(&self, calibrated: Option<f64>) -> Result<EngineConfig> {
        if self.fixed_weights.is_some() && self.phi.is_some() {
            bail!("--fixed-weights replaces the information-driven weights and cannot be combined with --phi");
        }
        if let Some(c) = self.fixed_weights {
            if !(c > 0.0 && c.is_finite()) {
                bail!("fixed_weights must be positive, got {c}");
            }
        }
        let (weights, _) = self.weight_config(calibrated)?;
        let mut cfg = EngineConfig {
            weights,
            solver: self.solver_config()?,
            bias_estimation: self.bias_estimation.unwrap_or(true),
            fixed_weights: self.fixed_weights,
            convention: if self.conventional_odometry.unwrap_or(false) {
                OdometryConvention::Conventional
            } else {
                OdometryConvention::Verbatim
            },
            heading_baseline: self.heading_baseline.unwrap_or(DEFAULT_HEADING_BASELINE),
            ..EngineConfig::default()
        };
        if let Some(v) = self.association_threshold {
            cfg.association_threshold = v;
        }
        if let Some(v) = self.crop_radius {
            cfg.crop_radius = v;
        }
        for (name, v) in [("association_threshold", cfg.association_threshold), ("crop_radius", cfg.crop_radius)] {
            if !(v > 0.0 && v.is_finite()) {
                bail!("{name} must be positive, got {v}");
            }
        }
        if !(cfg.heading_baseline >= 0.0 && cfg.heading_baseline.is_finite()) {
            bail!("heading_baseline must be >= 0, got {}", cfg.heading_baseline);
        }
        Ok(cfg)
    }

    pub fn dropout_ranges(&self) -> Result<Vec<(u64, u64)>> {
        self.dropout.iter().flatten().map(|s| parse_range(s)).collect()
    }
}

pub fn parse_range(s: &str) -> Result<(u64, u64)> {
    let (a, b) = s.split_once(':').with_context(|| format!("dropout range '{s}' must look like START:END"))?;
    let a: u64 = a.trim().parse().with_context(|| format!("bad range start in '{s}'"))?;
    let b: u64 = b.trim().parse().with_context(|| format!("bad range end in '{s}'"))?;
    if a > b {
        bail!("dropout range '{s}' ends before it starts");
    }
    Ok((a, b))
}

/// Written by `simulate`, read by `localize --calibration`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Calibration {
    pub s_max_hint: f64,
    pub association_threshold: f64,
    pub preset: Option<String>,
    pub seed: Option<u64>,
}

impl Calibration {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading calibration {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing calibration {}", path.display()))
    }
}
