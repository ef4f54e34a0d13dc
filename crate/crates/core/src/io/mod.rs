//! On-disk formats: netpbm images, scene bundles and run reports. All
//! records are plain `f64` and serialize deterministically.

pub mod bundle;
pub mod netpbm;
pub mod report;

use serde::{Deserialize, Serialize};

use crate::error::{parse_error, Error, Result};
use crate::geometry::{Intrinsics, Pose, Rotation, SymmetryAxis, SymmetryPrior, Vec3};
use crate::synth::{model_points, Shape};

pub use bundle::{load_bundle, write_bundle, Bundle};
pub use report::{Aggregate, InputHash, Report, TrialReport, TrialResult, Truth};

/// Orthonormality tolerance for rotations read from files.
pub const ROTATION_TOLERANCE: f64 = 1e-6;

/// Rigid pose as a row-major rotation and a translation in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseRecord {
    pub rotation: [f64; 9],
    pub translation: [f64; 3],
}

impl From<&Pose<f64>> for PoseRecord {
    fn from(p: &Pose<f64>) -> Self {
        Self {
            rotation: p.rotation.to_row_major(),
            translation: [p.translation.x, p.translation.y, p.translation.z],
        }
    }
}

impl PoseRecord {
    pub fn to_pose(&self) -> Result<Pose<f64>> {
        let r = Rotation::from_row_major(&self.rotation, ROTATION_TOLERANCE)?;
        Ok(Pose::new(r, Vec3::from(self.translation)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntrinsicsRecord {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl From<&Intrinsics<f64>> for IntrinsicsRecord {
    fn from(k: &Intrinsics<f64>) -> Self {
        Self { fx: k.fx, fy: k.fy, cx: k.cx, cy: k.cy, width: k.width, height: k.height }
    }
}

impl IntrinsicsRecord {
    pub fn to_intrinsics(&self) -> Result<Intrinsics<f64>> {
        Intrinsics::new(self.fx, self.fy, self.cx, self.cy, self.width, self.height)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SymmetryRecord {
    pub axis: SymmetryAxis,
    pub offset: f64,
    pub diameter: f64,
}

impl From<&SymmetryPrior<f64>> for SymmetryRecord {
    fn from(s: &SymmetryPrior<f64>) -> Self {
        Self { axis: s.axis, offset: s.offset, diameter: s.diameter }
    }
}

impl SymmetryRecord {
    pub fn to_prior(&self) -> Result<SymmetryPrior<f64>> {
        SymmetryPrior::new(self.axis, self.offset, self.diameter)
    }
}

/// Ground truth written next to a generated pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub shape: Shape,
    pub reference_pose: PoseRecord,
    pub query_pose: PoseRecord,
}

impl TruthRecord {
    /// Query truth with a model sampled from the shape.
    pub fn truth(&self) -> Result<Truth> {
        self.shape.validate()?;
        Ok(Truth {
            pose: self.query_pose.to_pose()?,
            model: model_points(&self.shape),
            symmetric: self.shape.is_symmetric(),
        })
    }
}

/// Parses JSON, turning serde's line and column into a byte offset.
pub fn parse_json<T: serde::de::DeserializeOwned>(text: &str, file: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| json_error(&e, text, file))
}

fn json_error(e: &serde_json::Error, text: &str, file: &str) -> Error {
    let offset = if e.line() == 0 {
        0
    } else {
        let line_start: usize = text.split_inclusive('\n').take(e.line() - 1).map(str::len).sum();
        (line_start + e.column().saturating_sub(1)).min(text.len())
    };
    let full = e.to_string();
    let message = match full.rfind(" at line ") {
        Some(i) => full[..i].to_string(),
        None => full,
    };
    parse_error(file, offset, message)
}

/// Deterministic pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("records serialize");
    s.push('\n');
    s
}

pub(crate) fn read_file(path: &std::path::Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| io_error(path, e))
}

pub(crate) fn write_file(path: &std::path::Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| io_error(path, e))
}

pub(crate) fn io_error(path: &std::path::Path, e: std::io::Error) -> Error {
    Error::Io { path: path.display().to_string(), message: e.to_string() }
}
