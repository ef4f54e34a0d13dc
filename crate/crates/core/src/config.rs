//! Run configuration: every knob that can change a numeric result.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::geometry::{Intrinsics, Vec3};
use crate::hypothesis::RotationSamplingConfig;
use crate::projection::SplatConfig;
use crate::refine::{RefineConfig, WindowedIcpComparator};
use crate::scalar::Real;
use crate::score::ScoreConfig;

/// Either a fixed cosine threshold or a target hypothesis count, from which
/// the threshold is derived per scene.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TauSetting {
    Fixed(f64),
    Count { hypotheses: usize },
}

/// Correspondence strategy used by each refinement round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComparatorKind {
    /// One rigid fit over same-pixel pairs.
    Pixel,
    /// Windowed nearest-neighbour ICP inside each round.
    WindowedIcp,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RefineThresholds {
    /// Correspondence gate as a fraction of the object diameter.
    pub gate_ratio: f64,
    pub min_correspondences: usize,
    pub use_prior_weights: bool,
    pub comparator: ComparatorKind,
    /// Nearest-neighbour search radius in pixels.
    pub window: usize,
    pub inner_iterations: usize,
    /// First inner pass gate as a multiple of the final one.
    pub initial_gate_scale: f64,
    pub tangent_targets: bool,
}

impl Default for RefineThresholds {
    fn default() -> Self {
        Self {
            gate_ratio: 0.1,
            min_correspondences: 20,
            use_prior_weights: true,
            comparator: ComparatorKind::WindowedIcp,
            window: 6,
            inner_iterations: 10,
            initial_gate_scale: 3.0,
            tangent_targets: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub n_viewpoints: usize,
    pub n_inplane: usize,
    pub tau: TauSetting,
    /// Scene up in the query camera frame; defaults to the reference
    /// object's up axis.
    pub gravity_up: Option<[f64; 3]>,
    pub iterations: usize,
    /// Splat kernel weight.
    pub delta: f64,
    /// Skip reference points facing away from the hypothesis camera.
    pub cull_backfaces: bool,
    pub score: ScoreConfig,
    pub refine: RefineThresholds,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            n_viewpoints: 42,
            n_inplane: 6,
            tau: TauSetting::Count { hypotheses: 78 },
            gravity_up: None,
            iterations: 3,
            delta: 0.002,
            cull_backfaces: true,
            score: ScoreConfig::default(),
            refine: RefineThresholds::default(),
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_viewpoints == 0 || self.n_inplane == 0 {
            return Err(invalid("viewpoint and in-plane counts must be at least 1"));
        }
        match self.tau {
            TauSetting::Fixed(t) if !(-1.0..=1.0).contains(&t) => {
                return Err(invalid("tau must lie in [-1, 1]"))
            }
            TauSetting::Count { hypotheses } if hypotheses == 0 || hypotheses > self.n_viewpoints * self.n_inplane => {
                return Err(invalid("hypothesis count must be between 1 and the rotation set size"))
            }
            _ => {}
        }
        if let Some(up) = self.gravity_up {
            let n = Vec3::from(up).norm();
            if !(n.is_finite() && n > 0.0) {
                return Err(invalid("gravity_up must be a non-zero vector"));
            }
        }
        self.splat::<f64>().validate()?;
        self.refine_config(1.0).validate()?;
        if !(self.refine.gate_ratio > 0.0) {
            return Err(invalid("gate ratio must be positive"));
        }
        if self.refine.inner_iterations == 0 || !(self.refine.initial_gate_scale >= 1.0) {
            return Err(invalid("inner iterations must be positive and the initial gate scale at least 1"));
        }
        self.score.validate()
    }

    pub fn splat<T: Real>(&self) -> SplatConfig<T> {
        SplatConfig {
            cull_backfaces: self.cull_backfaces,
            ..SplatConfig::chebyshev(T::lit(self.delta))
        }
    }

    pub fn refine_config<T: Real>(&self, diameter: T) -> RefineConfig<T> {
        RefineConfig {
            iterations: self.iterations,
            max_correspondence_dist: diameter * T::lit(self.refine.gate_ratio),
            min_correspondences: self.refine.min_correspondences,
            use_prior_weights: self.refine.use_prior_weights,
        }
    }

    pub fn icp<T: Real>(&self, intrinsics: &Intrinsics<T>) -> WindowedIcpComparator<T> {
        WindowedIcpComparator {
            intrinsics: *intrinsics,
            window: self.refine.window,
            inner_iterations: self.refine.inner_iterations,
            initial_gate_scale: T::lit(self.refine.initial_gate_scale),
            tangent_targets: self.refine.tangent_targets,
        }
    }

    /// Sampling config with a placeholder `tau`; the pipeline resolves it.
    pub fn sampling<T: Real>(&self, gravity_up: Vec3<T>, tau: T) -> RotationSamplingConfig<T> {
        RotationSamplingConfig {
            n_viewpoints: self.n_viewpoints,
            n_inplane: self.n_inplane,
            gravity_up,
            tau,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let cfg = RunConfig::default();
        cfg.validate().unwrap();
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<RunConfig>(&text).unwrap(), cfg);
    }

    #[test]
    fn partial_json_fills_defaults() {
        let cfg: RunConfig = serde_json::from_str(r#"{"tau": 0.5, "iterations": 2}"#).unwrap();
        assert_eq!(cfg.tau, TauSetting::Fixed(0.5));
        assert_eq!(cfg.iterations, 2);
        assert_eq!(cfg.n_viewpoints, 42);
        let cfg: RunConfig = serde_json::from_str(r#"{"tau": {"hypotheses": 12}}"#).unwrap();
        assert_eq!(cfg.tau, TauSetting::Count { hypotheses: 12 });
    }

    #[test]
    fn rejects_out_of_range_values() {
        for bad in [
            RunConfig { tau: TauSetting::Fixed(1.5), ..Default::default() },
            RunConfig { tau: TauSetting::Count { hypotheses: 253 }, ..Default::default() },
            RunConfig { iterations: 0, ..Default::default() },
            RunConfig { delta: -1.0, ..Default::default() },
            RunConfig { gravity_up: Some([0.0; 3]), ..Default::default() },
            RunConfig { refine: RefineThresholds { min_correspondences: 2, ..Default::default() }, ..Default::default() },
            RunConfig { refine: RefineThresholds { inner_iterations: 0, ..Default::default() }, ..Default::default() },
            RunConfig { refine: RefineThresholds { initial_gate_scale: 0.5, ..Default::default() }, ..Default::default() },
            RunConfig { refine: RefineThresholds { gate_ratio: 0.0, ..Default::default() }, ..Default::default() },
        ] {
            assert!(bad.validate().is_err(), "{bad:?}");
        }
    }
}
