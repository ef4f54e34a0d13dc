//! Versioned run reports: per-trial results plus aggregate accuracy and timing.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{parse_json, read_file, to_json, PoseRecord};
use crate::config::RunConfig;
use crate::error::Result;
use crate::geometry::Pose;
use crate::metrics::{add, add_s, auc, ModelPoints};
use crate::pipeline::{Estimate, StageTimings};
use crate::score::ScoreBreakdown;

pub const REPORT_SCHEMA: &str = "refpose-report";
pub const REPORT_VERSION: u32 = 1;

/// Accuracy threshold and AUC range, as fractions of the object diameter.
pub const ADD_FRACTION: f64 = 0.1;

/// Ground truth for one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct Truth {
    pub pose: Pose<f64>,
    pub model: ModelPoints<f64>,
    /// Score with ADD-S instead of ADD.
    pub symmetric: bool,
}

impl Truth {
    pub fn error(&self, pose: &Pose<f64>) -> f64 {
        if self.symmetric {
            add_s(pose, &self.pose, &self.model)
        } else {
            add(pose, &self.pose, &self.model)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthMetrics {
    pub diameter: f64,
    pub symmetric: bool,
    pub add: f64,
    pub add_s: f64,
    /// The metric that counts: ADD-S for symmetric objects, ADD otherwise.
    pub error: f64,
    /// `error` of the pose selection would return after each round.
    pub error_by_iteration: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub hypotheses: usize,
    pub tau: f64,
    pub selected: usize,
    pub pose: PoseRecord,
    pub score: ScoreBreakdown,
    pub degenerate: bool,
    pub truth: Option<TruthMetrics>,
    /// Milliseconds per stage; null unless timing was requested.
    pub timings: Option<StageTimings>,
}

impl TrialResult {
    pub fn new(est: &Estimate<f64>, truth: Option<&Truth>) -> Self {
        let truth = truth.map(|t| TruthMetrics {
            diameter: t.model.diameter(),
            symmetric: t.symmetric,
            add: add(&est.pose, &t.pose, &t.model),
            add_s: add_s(&est.pose, &t.pose, &t.model),
            error: t.error(&est.pose),
            error_by_iteration: est.poses_by_iteration.iter().map(|p| t.error(p)).collect(),
        });
        Self {
            hypotheses: est.hypotheses,
            tau: est.tau,
            selected: est.selected,
            pose: (&est.pose).into(),
            score: est.score,
            degenerate: est.degenerate,
            truth,
            timings: est.timings,
        }
    }

    pub fn hit(&self) -> Option<bool> {
        self.truth.as_ref().map(|t| t.error < ADD_FRACTION * t.diameter)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialError {
    /// Pipeline stage that failed: `load`, `generate` or `estimate`.
    pub stage: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub name: String,
    /// Ground truth was available, so a failure counts as a miss.
    pub has_truth: bool,
    pub result: Option<TrialResult>,
    pub error: Option<TrialError>,
}

impl TrialReport {
    pub fn ok(name: impl Into<String>, result: TrialResult) -> Self {
        Self { name: name.into(), has_truth: result.truth.is_some(), result: Some(result), error: None }
    }

    pub fn failed(name: impl Into<String>, has_truth: bool, stage: &str, message: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            has_truth,
            result: None,
            error: Some(TrialError { stage: stage.to_string(), message: message.into() }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Percentiles {
    pub p50: f64,
    pub p90: f64,
    pub max: f64,
}

impl Percentiles {
    /// Nearest-rank percentiles; `None` for an empty sample.
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let rank = |p: f64| v[((p * v.len() as f64).ceil() as usize).clamp(1, v.len()) - 1];
        Some(Self { p50: rank(0.5), p90: rank(0.9), max: v[v.len() - 1] })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub trials: usize,
    pub succeeded: usize,
    pub failed: usize,
    /// Trials with ground truth, failures included.
    pub evaluated: usize,
    /// Percent of evaluated trials with error below 0.1·D; failures are misses.
    pub add_01: Option<f64>,
    /// Area under accuracy vs. error/D on [0, 0.1]; failures count as misses.
    pub auc: Option<f64>,
    /// Mean error over successful evaluated trials, per refinement round.
    pub mean_error_by_iteration: Option<Vec<f64>>,
    /// Mean milliseconds per stage over timed trials.
    pub mean_stage_ms: Option<StageTimings>,
    pub total_ms: Option<Percentiles>,
}

impl Aggregate {
    pub fn new(trials: &[TrialReport]) -> Self {
        let results: Vec<&TrialResult> = trials.iter().filter_map(|t| t.result.as_ref()).collect();
        let evaluated = trials.iter().filter(|t| t.has_truth).count();

        // Normalized errors; failed trials with truth never reach the threshold.
        let normalized: Vec<f64> = trials
            .iter()
            .filter(|t| t.has_truth)
            .map(|t| match t.result.as_ref().and_then(|r| r.truth.as_ref()) {
                Some(m) => m.error / m.diameter,
                None => f64::INFINITY,
            })
            .collect();
        let add_01 = (evaluated > 0)
            .then(|| 100.0 * normalized.iter().filter(|&&e| e < ADD_FRACTION).count() as f64 / evaluated as f64);
        let auc = auc(&normalized, ADD_FRACTION).ok();

        let curves: Vec<&Vec<f64>> = results.iter().filter_map(|r| r.truth.as_ref()).map(|m| &m.error_by_iteration).collect();
        let mean_error_by_iteration = match curves.first() {
            Some(first) if curves.iter().all(|c| c.len() == first.len()) => Some(
                (0..first.len())
                    .map(|k| curves.iter().map(|c| c[k]).sum::<f64>() / curves.len() as f64)
                    .collect(),
            ),
            _ => None,
        };

        let timed: Vec<StageTimings> = results.iter().filter_map(|r| r.timings).collect();
        let mean_stage_ms = (!timed.is_empty()).then(|| {
            let n = timed.len() as f64;
            StageTimings {
                init: timed.iter().map(|t| t.init).sum::<f64>() / n,
                projection: timed.iter().map(|t| t.projection).sum::<f64>() / n,
                refine: timed.iter().map(|t| t.refine).sum::<f64>() / n,
                score: timed.iter().map(|t| t.score).sum::<f64>() / n,
            }
        });
        let totals: Vec<f64> = timed.iter().map(StageTimings::total).collect();

        Self {
            trials: trials.len(),
            succeeded: results.len(),
            failed: trials.len() - results.len(),
            evaluated,
            add_01,
            auc,
            mean_error_by_iteration,
            mean_stage_ms,
            total_ms: Percentiles::of(&totals),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema: String,
    pub version: u32,
    pub config: RunConfig,
    /// SHA-256 over every input, in trial order.
    pub input_hash: String,
    pub trials: Vec<TrialReport>,
    pub aggregate: Aggregate,
}

impl Report {
    pub fn new(config: RunConfig, input_hash: String, trials: Vec<TrialReport>) -> Self {
        let aggregate = Aggregate::new(&trials);
        Self {
            schema: REPORT_SCHEMA.to_string(),
            version: REPORT_VERSION,
            config,
            input_hash,
            trials,
            aggregate,
        }
    }

    pub fn to_json(&self) -> String {
        to_json(self)
    }

    pub fn from_json(text: &str, file: &str) -> Result<Self> {
        let report: Self = parse_json(text, file)?;
        if report.schema != REPORT_SCHEMA || report.version != REPORT_VERSION {
            return Err(crate::error::parse_error(file, 0, format!("unsupported report {} v{}", report.schema, report.version)));
        }
        Ok(report)
    }
}

/// Running SHA-256 over labeled, length-prefixed inputs.
#[derive(Debug, Clone, Default)]
pub struct InputHash(Sha256);

impl InputHash {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, label: &str, bytes: &[u8]) {
        for part in [label.as_bytes(), bytes] {
            self.0.update((part.len() as u64).to_be_bytes());
            self.0.update(part);
        }
    }

    /// Hashes the bundle files that exist, in a fixed order.
    pub fn add_bundle(&mut self, dir: &std::path::Path) -> Result<()> {
        use super::bundle::{DEPTH_FILE, MASK_FILE, META_FILE, PRIOR_FILE, RGB_FILE};
        for name in [META_FILE, RGB_FILE, DEPTH_FILE, MASK_FILE, PRIOR_FILE] {
            let path = dir.join(name);
            if name == PRIOR_FILE && !path.exists() {
                continue;
            }
            self.add(name, &read_file(&path)?);
        }
        Ok(())
    }

    pub fn finish(self) -> String {
        hex::encode(self.0.finalize())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Rotation, Vec3};
    use crate::score::ScoreWeights;

    fn result(error: f64, timings: Option<StageTimings>) -> TrialResult {
        TrialResult {
            hypotheses: 78,
            tau: 0.25,
            selected: 3,
            pose: (&Pose::new(Rotation::about_axis(&Vec3::z(), 0.5), Vec3::new(0.0, 0.0, 0.6))).into(),
            score: ScoreBreakdown {
                depth_term: 0.9,
                photo_term: 0.8,
                coverage: 0.7,
                total: 0.82,
                weights: ScoreWeights::default(),
                co_valid: 1000,
                no_overlap: false,
            },
            degenerate: false,
            truth: Some(TruthMetrics {
                diameter: 0.1,
                symmetric: false,
                add: error,
                add_s: error,
                error,
                error_by_iteration: vec![2.0 * error, error],
            }),
            timings,
        }
    }

    fn timings(scale: f64) -> StageTimings {
        StageTimings { init: scale, projection: 2.0 * scale, refine: 3.0 * scale, score: 4.0 * scale }
    }

    #[test]
    fn empty_report_is_valid() {
        let r = Report::new(RunConfig::default(), InputHash::new().finish(), vec![]);
        assert_eq!(r.aggregate.trials, 0);
        assert_eq!(r.aggregate.add_01, None);
        assert_eq!(r.aggregate.auc, None);
        assert_eq!(Report::from_json(&r.to_json(), "r.json").unwrap(), r);
    }

    #[test]
    fn round_trips() {
        let r = Report::new(
            RunConfig::default(),
            "ab".into(),
            vec![
                TrialReport::ok("a", result(0.004, Some(timings(1.5)))),
                TrialReport::failed("b", true, "estimate", "gravity pruning left no pose hypotheses"),
            ],
        );
        let text = r.to_json();
        assert_eq!(Report::from_json(&text, "r.json").unwrap(), r);
        assert_eq!(text, Report::from_json(&text, "r.json").unwrap().to_json());
    }

    #[test]
    fn timing_fields_cover_every_stage() {
        let r = Report::new(RunConfig::default(), String::new(), vec![TrialReport::ok("a", result(0.004, Some(timings(1.0))))]);
        let v: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        let t = &v["trials"][0]["result"]["timings"];
        for stage in ["init", "projection", "refine", "score"] {
            assert!(t[stage].is_f64(), "{stage}");
        }
        // Untimed runs keep the field as null.
        let r = Report::new(RunConfig::default(), String::new(), vec![TrialReport::ok("a", result(0.004, None))]);
        let v: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        assert!(v["trials"][0]["result"]["timings"].is_null());
    }

    #[test]
    fn single_trial_aggregate_equals_the_trial() {
        let t = timings(2.0);
        let agg = Aggregate::new(&[TrialReport::ok("a", result(0.004, Some(t)))]);
        assert_eq!(agg.add_01, Some(100.0));
        assert!((agg.auc.unwrap() - 0.6).abs() < 1e-12);
        assert_eq!(agg.mean_error_by_iteration, Some(vec![0.008, 0.004]));
        assert_eq!(agg.mean_stage_ms, Some(t));
        assert_eq!(agg.total_ms, Some(Percentiles { p50: 20.0, p90: 20.0, max: 20.0 }));
    }

    #[test]
    fn failures_count_as_misses() {
        let agg = Aggregate::new(&[
            TrialReport::ok("a", result(0.004, None)),
            TrialReport::ok("b", result(0.02, None)),
            TrialReport::failed("c", true, "estimate", "x"),
            TrialReport::failed("d", false, "load", "y"),
        ]);
        assert_eq!((agg.trials, agg.succeeded, agg.failed, agg.evaluated), (4, 2, 2, 3));
        assert!((agg.add_01.unwrap() - 100.0 / 3.0).abs() < 1e-12);
        assert!((agg.auc.unwrap() - 0.6 / 3.0).abs() < 1e-12);
        assert_eq!(agg.mean_stage_ms, None);
    }

    #[test]
    fn percentiles_use_nearest_rank() {
        let v: Vec<f64> = (1..=10).rev().map(f64::from).collect();
        assert_eq!(Percentiles::of(&v), Some(Percentiles { p50: 5.0, p90: 9.0, max: 10.0 }));
        assert_eq!(Percentiles::of(&[]), None);
    }

    #[test]
    fn hash_depends_on_labels_and_content() {
        let h = |parts: &[(&str, &[u8])]| {
            let mut x = InputHash::new();
            parts.iter().for_each(|(l, b)| x.add(l, b));
            x.finish()
        };
        assert_eq!(h(&[("a", b"xy")]), h(&[("a", b"xy")]));
        assert_ne!(h(&[("a", b"xy")]), h(&[("ax", b"y")]));
        assert_ne!(h(&[("a", b"xy")]), h(&[("a", b"xz")]));
        assert_eq!(h(&[]).len(), 64);
    }

    #[test]
    fn wrong_schema_is_rejected() {
        let mut r = Report::new(RunConfig::default(), String::new(), vec![]);
        r.version = 99;
        assert!(Report::from_json(&r.to_json(), "r.json").is_err());
    }
}
