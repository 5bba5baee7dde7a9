use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{PipelineError, PipelineResult};
use crate::flow::TrajectoryConfig;
use crate::metrics::DEFAULT_SAMPLE_COUNT;
use crate::morphometry::PairMode;
use crate::stats::{AgeBrackets, Criterion, LmeSettings};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LmeConfig {
    pub criterion: Criterion,
    pub max_iterations: usize,
    pub tolerance: f64,
    /// Age bracket edges for normative z-scores.
    pub brackets: AgeBrackets,
}

impl Default for LmeConfig {
    fn default() -> Self {
        let s = LmeSettings::default();
        Self {
            criterion: s.criterion,
            max_iterations: s.max_iterations,
            tolerance: s.tolerance,
            brackets: AgeBrackets::default(),
        }
    }
}

impl LmeConfig {
    pub fn settings(&self) -> LmeSettings {
        LmeSettings {
            criterion: self.criterion,
            max_iterations: self.max_iterations,
            tolerance: self.tolerance,
        }
    }
}

/// Settings of a pipeline run; echoed into every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Points sampled per surface for distance metrics.
    pub sample_count: usize,
    pub seed: u64,
    /// Hausdorff percentiles, each in (0, 100].
    pub percentiles: Vec<f64>,
    pub trajectory: TrajectoryConfig,
    pub pair_mode: PairMode,
    pub lme: LmeConfig,
    /// Worker threads; 0 uses every core.
    pub workers: usize,
    pub out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            sample_count: DEFAULT_SAMPLE_COUNT,
            seed: 0,
            percentiles: vec![90.0, 99.0],
            trajectory: TrajectoryConfig::default(),
            pair_mode: PairMode::AllPairs,
            lme: LmeConfig::default(),
            workers: 0,
            out: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> PipelineResult<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::invalid(format!("config {}: {e}", path.display())))?;
        let cfg: Self = serde_json::from_str(&text)
            .map_err(|e| PipelineError::invalid(format!("config {}: {e}", path.display())))?;
        Ok(cfg)
    }

    pub fn validate(&self) -> PipelineResult<()> {
        let mut problems = Vec::new();
        if self.sample_count == 0 || self.sample_count > 10_000_000 {
            problems.push(format!(
                "sample_count must be in 1..=10000000, got {}",
                self.sample_count
            ));
        }
        if self.percentiles.is_empty() {
            problems.push("percentiles must not be empty".to_string());
        }
        for p in &self.percentiles {
            if !(*p > 0.0 && *p <= 100.0) {
                problems.push(format!("percentile {p} outside (0, 100]"));
            }
        }
        if let Err(e) = self.trajectory.validate() {
            problems.push(format!("trajectory: {e}"));
        }
        if self.lme.max_iterations == 0 || !(self.lme.tolerance > 0.0) {
            problems.push("lme.max_iterations and lme.tolerance must be positive".to_string());
        }
        if self.workers > 1024 {
            problems.push(format!(
                "workers must be at most 1024, got {}",
                self.workers
            ));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(PipelineError::Validation(problems))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_fill_missing_keys() {
        let cfg: RunConfig =
            serde_json::from_str(r#"{"sample_count": 500, "lme": {"max_iterations": 50}}"#)
                .unwrap();
        assert_eq!(cfg.sample_count, 500);
        assert_eq!(cfg.lme.max_iterations, 50);
        assert_eq!(cfg.lme.tolerance, 1e-8);
        assert_eq!(cfg.trajectory, TrajectoryConfig::default());
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"sampel_count": 5}"#).is_err());
        let cfg = RunConfig {
            percentiles: vec![0.0, 120.0],
            sample_count: 0,
            ..Default::default()
        };
        match cfg.validate() {
            Err(PipelineError::Validation(p)) => assert_eq!(p.len(), 3),
            other => panic!("{other:?}"),
        }
    }
}
