//! Batch front end: scene generation, single-pair estimation and manifest
//! evaluation, all producing versioned JSON reports.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use refpose::config::RunConfig;
use refpose::io::report::TrialReport;
use refpose::io::{load_bundle, parse_json, to_json, write_bundle, Bundle, InputHash, Report, TrialResult, Truth, TruthRecord};
use refpose::pipeline::{estimate, Executor, Scene};
use refpose::synth::{suite, PairSpec, RenderedView};
use refpose::Error;

pub const TRUTH_FILE: &str = "truth.json";
pub const REFERENCE_DIR: &str = "reference";
pub const QUERY_DIR: &str = "query";

/// Failures mapped to process exit codes.
#[derive(Debug)]
pub enum CliError {
    /// Bad arguments, config or input files: exit 2.
    Usage(String),
    /// Nothing to estimate from: exit 3.
    NoEstimate(String),
    /// Anything else: exit 1.
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::NoEstimate(_) => 3,
            CliError::Failed(_) => 1,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::NoEstimate(m) | CliError::Failed(m) => m,
        }
    }
}

fn usage(e: impl std::fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

pub fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))
}

/// Reads a (possibly partial) run config, or the defaults.
pub fn load_config(path: Option<&Path>) -> Result<RunConfig, CliError> {
    let cfg = match path {
        Some(p) => parse_json::<RunConfig>(&read_text(p)?, &p.display().to_string()).map_err(usage)?,
        None => RunConfig::default(),
    };
    cfg.validate().map_err(usage)?;
    Ok(cfg)
}

pub fn load_pair_spec(path: &Path) -> Result<PairSpec, CliError> {
    parse_json(&read_text(path)?, &path.display().to_string()).map_err(usage)
}

fn bundle_of(view: &RenderedView, with_pose: bool) -> Bundle {
    Bundle {
        observation: view.observation.clone(),
        pose: with_pose.then_some(view.pose),
        symmetry: view.symmetry,
        intrinsics: view.camera,
    }
}

/// Renders the pair and writes `reference/`, `query/` (without pose) and `truth.json`.
pub fn gen_scene(spec: &PairSpec, out: &Path) -> Result<(), CliError> {
    let (r, q) = spec.render().map_err(usage)?;
    if r.is_empty() || q.is_empty() {
        return Err(usage("the object is not visible in both views"));
    }
    let fail = |e: Error| CliError::Failed(e.to_string());
    write_bundle(&out.join(REFERENCE_DIR), &bundle_of(&r, true)).map_err(fail)?;
    write_bundle(&out.join(QUERY_DIR), &bundle_of(&q, false)).map_err(fail)?;
    let truth = TruthRecord { shape: spec.shape, reference_pose: (&r.pose).into(), query_pose: (&q.pose).into() };
    std::fs::write(out.join(TRUTH_FILE), to_json(&truth)).map_err(|e| CliError::Failed(format!("{}: {e}", out.display())))
}

/// Where a trial's inputs come from.
#[derive(Debug, Clone, PartialEq)]
pub enum TrialSource {
    Bundles { reference: PathBuf, query: PathBuf, truth: Option<PathBuf> },
    Synthetic(PairSpec),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialInput {
    pub name: String,
    pub source: TrialSource,
}

/// A finished trial plus the error that stopped it, if any.
pub struct TrialRun {
    pub report: TrialReport,
    pub error: Option<Error>,
}

struct Loaded {
    reference: Bundle,
    query: Bundle,
    truth: Option<Truth>,
}

fn load_trial(source: &TrialSource, hash: &mut InputHash) -> Result<Loaded, (&'static str, Error)> {
    match source {
        TrialSource::Bundles { reference, query, truth } => {
            let load = |e| ("load", e);
            hash.add_bundle(reference).map_err(load)?;
            hash.add_bundle(query).map_err(load)?;
            let truth = match truth {
                Some(p) => {
                    let text = std::fs::read_to_string(p)
                        .map_err(|e| load(Error::Io { path: p.display().to_string(), message: e.to_string() }))?;
                    hash.add(TRUTH_FILE, text.as_bytes());
                    Some(parse_json::<TruthRecord>(&text, &p.display().to_string()).and_then(|t| t.truth()).map_err(load)?)
                }
                None => None,
            };
            Ok(Loaded { reference: load_bundle(reference).map_err(load)?, query: load_bundle(query).map_err(load)?, truth })
        }
        TrialSource::Synthetic(spec) => {
            hash.add("synthetic", serde_json::to_string(spec).expect("spec serializes").as_bytes());
            let (r, q) = spec.render().map_err(|e| ("generate", e))?;
            let truth = Truth { pose: q.pose, model: r.model.clone(), symmetric: spec.shape.is_symmetric() };
            Ok(Loaded { reference: bundle_of(&r, true), query: bundle_of(&q, false), truth: Some(truth) })
        }
    }
}

pub fn run_trial(input: &TrialInput, cfg: &RunConfig, exec: &Executor, hash: &mut InputHash) -> TrialRun {
    let has_truth = !matches!(&input.source, TrialSource::Bundles { truth: None, .. });
    let failed = |stage: &str, e: Error| TrialRun {
        report: TrialReport::failed(&input.name, has_truth, stage, e.to_string()),
        error: Some(e),
    };
    let loaded = match load_trial(&input.source, hash) {
        Ok(l) => l,
        Err((stage, e)) => return failed(stage, e),
    };
    let Some(reference_pose) = loaded.reference.pose else {
        return failed("load", Error::InvalidInput("reference bundle has no pose".into()));
    };
    let scene = Scene {
        reference: &loaded.reference.observation,
        reference_pose: &reference_pose,
        query: &loaded.query.observation,
        prior: &loaded.reference.symmetry,
        intrinsics: &loaded.query.intrinsics,
    };
    match estimate(&scene, cfg, exec) {
        Ok(est) => TrialRun {
            report: TrialReport::ok(&input.name, TrialResult::new(&est, loaded.truth.as_ref())),
            error: None,
        },
        Err(e) => failed("estimate", e),
    }
}

/// Runs trials in order; failures are recorded, never fatal.
pub fn run_trials(inputs: &[TrialInput], cfg: &RunConfig, exec: &Executor) -> (Report, Vec<Option<Error>>) {
    let mut hash = InputHash::new();
    let mut trials = Vec::with_capacity(inputs.len());
    let mut errors = Vec::with_capacity(inputs.len());
    for input in inputs {
        let run = run_trial(input, cfg, exec, &mut hash);
        trials.push(run.report);
        errors.push(run.error);
    }
    (Report::new(*cfg, hash.finish(), trials), errors)
}

/// Exit status for a single estimate.
pub fn estimate_status(error: Option<&Error>) -> Result<(), CliError> {
    match error {
        None => Ok(()),
        Some(e @ (Error::EmptyHypotheses | Error::NoObservation)) => Err(CliError::NoEstimate(e.to_string())),
        Some(e @ (Error::Parse { .. } | Error::Io { .. })) => Err(usage(e)),
        Some(e) => Err(CliError::Failed(e.to_string())),
    }
}

/// Batch description. Paths are relative to the manifest file.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    #[serde(default)]
    pub trials: Vec<ManifestTrial>,
    /// Appends the seeded synthetic suite.
    #[serde(default)]
    pub suite: Option<SuiteSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestTrial {
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub reference: Option<PathBuf>,
    #[serde(default)]
    pub query: Option<PathBuf>,
    #[serde(default)]
    pub truth: Option<PathBuf>,
    #[serde(default)]
    pub synthetic: Option<PairSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuiteSpec {
    pub seed: u64,
    pub trials: usize,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        parse_json(&read_text(path)?, &path.display().to_string()).map_err(usage)
    }

    /// Resolves paths against `base`. `seed` offsets every synthetic noise
    /// seed and the suite seed.
    pub fn inputs(&self, base: &Path, seed: u64) -> Result<Vec<TrialInput>, CliError> {
        let mut out = Vec::new();
        for (i, t) in self.trials.iter().enumerate() {
            let name = t.name.clone().unwrap_or_else(|| format!("trial-{i}"));
            let source = match (&t.synthetic, &t.reference, &t.query) {
                (Some(spec), None, None) if t.truth.is_none() => {
                    TrialSource::Synthetic(PairSpec { seed: spec.seed.wrapping_add(seed), ..*spec })
                }
                (None, Some(r), Some(q)) => TrialSource::Bundles {
                    reference: base.join(r),
                    query: base.join(q),
                    truth: t.truth.as_ref().map(|p| base.join(p)),
                },
                _ => return Err(usage(format!("trial {name}: give either reference and query, or synthetic"))),
            };
            out.push(TrialInput { name, source });
        }
        if let Some(s) = self.suite {
            for (i, spec) in suite(s.seed.wrapping_add(seed), s.trials).into_iter().enumerate() {
                out.push(TrialInput { name: format!("suite-{i}"), source: TrialSource::Synthetic(spec) });
            }
        }
        Ok(out)
    }
}

/// Writes to a file, or stdout for `-`.
pub fn emit(out: &Path, text: &str) -> Result<(), CliError> {
    if out == Path::new("-") {
        use std::io::Write;
        let mut stdout = std::io::stdout().lock();
        stdout.write_all(text.as_bytes()).and_then(|_| stdout.flush()).map_err(|e| CliError::Failed(e.to_string()))
    } else {
        std::fs::write(out, text).map_err(|e| CliError::Failed(format!("{}: {e}", out.display())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn manifest(text: &str) -> Manifest {
        parse_json(text, "manifest.json").unwrap()
    }

    #[test]
    fn manifest_resolves_paths_and_offsets_seeds() {
        let m = manifest(
            r#"{
                "trials": [
                    {"name": "disk", "reference": "a/ref", "query": "a/query", "truth": "a/truth.json"},
                    {"synthetic": {
                        "shape": {"kind": "cylinder", "radius": 0.03, "height": 0.08},
                        "placement": {"kind": "viewpoint", "azimuth_deg": 10, "elevation_deg": 30, "distance": 0.6},
                        "relative": {"kind": "yaw", "degrees": 40},
                        "seed": 5
                    }}
                ],
                "suite": {"seed": 1, "trials": 2}
            }"#,
        );
        let inputs = m.inputs(Path::new("/data"), 10).unwrap();
        assert_eq!(inputs.len(), 4);
        assert_eq!(
            inputs[0].source,
            TrialSource::Bundles {
                reference: PathBuf::from("/data/a/ref"),
                query: PathBuf::from("/data/a/query"),
                truth: Some(PathBuf::from("/data/a/truth.json")),
            }
        );
        assert_eq!(inputs[1].name, "trial-1");
        let TrialSource::Synthetic(spec) = &inputs[1].source else { panic!("synthetic expected") };
        assert_eq!(spec.seed, 15);
        assert_eq!(inputs[2].source, TrialSource::Synthetic(suite(11, 2)[0]));
    }

    #[test]
    fn manifest_rejects_ambiguous_trials() {
        for text in [
            r#"{"trials": [{"reference": "r"}]}"#,
            r#"{"trials": [{"reference": "r", "query": "q", "synthetic": {"shape": {"kind": "sphere", "radius": 0.05}, "placement": {"kind": "viewpoint", "azimuth_deg": 0, "elevation_deg": 30, "distance": 0.6}, "relative": {"kind": "yaw", "degrees": 0}}}]}"#,
        ] {
            let err = manifest(text).inputs(Path::new("."), 0).unwrap_err();
            assert_eq!(err.exit_code(), 2);
        }
        assert!(parse_json::<Manifest>(r#"{"trails": []}"#, "m").is_err());
    }
}
