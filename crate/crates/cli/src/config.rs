//! Effective configuration: command-line flags override the JSON config
//! file, which overrides the built-in defaults.

use std::path::Path;

use cubesphere::error::{Error, Result};
use cubesphere::losses::LossWeights;
use cubesphere::pose_estimator::SolverConfig;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderConfig {
    pub height: usize,
    pub frames: usize,
    pub max_rotation_deg: f64,
    pub max_translation_m: f64,
}

impl Default for RenderConfig {
    fn default() -> Self {
        RenderConfig {
            height: 256,
            frames: 2,
            max_rotation_deg: 5.0,
            max_translation_m: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub heights: Vec<usize>,
    pub iters: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            heights: vec![128, 256, 512, 1024],
            iters: 5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    pub median_scaling: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub render: RenderConfig,
    pub weights: LossWeights,
    pub solver: SolverConfig,
    pub metrics: MetricsConfig,
    pub bench: BenchConfig,
}

impl Config {
    pub fn load(path: Option<&Path>) -> Result<Config> {
        let Some(path) = path else {
            return Ok(Config::default());
        };
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
    }
}

/// Replaces `slot` when a flag was given.
pub fn set<T>(slot: &mut T, flag: Option<T>) {
    if let Some(v) = flag {
        *slot = v;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_file_keeps_defaults() {
        let c: Config = serde_json::from_str(r#"{"solver": {"max_iterations": 7}}"#).unwrap();
        assert_eq!(c.solver.max_iterations, 7);
        assert_eq!(c.solver.pyramid_levels, SolverConfig::default().pyramid_levels);
        assert_eq!(c.weights, LossWeights::default());
        assert_eq!(c.bench.heights, vec![128, 256, 512, 1024]);
    }

    #[test]
    fn unknown_sections_are_rejected() {
        assert!(serde_json::from_str::<Config>(r#"{"solvr": {}}"#).is_err());
    }

    #[test]
    fn flags_override() {
        let mut c = Config::default();
        set(&mut c.render.height, Some(64));
        set(&mut c.render.frames, None);
        assert_eq!(c.render.height, 64);
        assert_eq!(c.render.frames, 2);
    }
}
