//! End-to-end estimation: initialize, refine and score every hypothesis in
//! parallel, then select. Results are merged in hypothesis order, so the
//! thread count never changes a number.

use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ComparatorKind, RunConfig, TauSetting};
use crate::error::{invalid, Error, Result};
use crate::geometry::{Intrinsics, Pose, SymmetryPrior, Vec3};
use crate::hypothesis::{build_rotation_set, initialize, tau_for_count};
use crate::observation::Observation;
use crate::projection::PreparedReference;
use crate::refine::{Comparator, ProcrustesComparator, RefineTimings, Refiner};
use crate::scalar::Real;
use crate::score::{score_hypothesis, select, ScoreBreakdown};

/// Per-stage wall time in milliseconds, summed over hypotheses.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub init: f64,
    pub projection: f64,
    pub refine: f64,
    pub score: f64,
}

impl StageTimings {
    pub fn total(&self) -> f64 {
        self.init + self.projection + self.refine + self.score
    }
}

/// How to run, as opposed to what to compute.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ExecOptions {
    /// Worker threads; 0 picks the machine default.
    pub threads: usize,
    pub record_timings: bool,
}

/// Owns the worker pool for repeated runs.
pub struct Executor {
    pool: Option<rayon::ThreadPool>,
    record_timings: bool,
}

impl Executor {
    pub fn new(opts: ExecOptions) -> Result<Self> {
        let pool = if opts.threads == 1 {
            None
        } else {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(opts.threads)
                    .build()
                    .map_err(|e| invalid(format!("thread pool: {e}")))?,
            )
        };
        Ok(Self {
            pool,
            record_timings: opts.record_timings,
        })
    }

    pub fn sequential() -> Self {
        Self {
            pool: None,
            record_timings: false,
        }
    }

    fn map<I: Sync, O: Send>(&self, items: &[I], f: impl Fn(&I) -> O + Sync + Send) -> Vec<O> {
        match &self.pool {
            Some(pool) => pool.install(|| items.par_iter().map(&f).collect()),
            None => items.iter().map(f).collect(),
        }
    }
}

/// One estimation problem.
#[derive(Debug, Clone, Copy)]
pub struct Scene<'a, T: Real> {
    pub reference: &'a Observation<T>,
    pub reference_pose: &'a Pose<T>,
    pub query: &'a Observation<T>,
    pub prior: &'a SymmetryPrior<T>,
    pub intrinsics: &'a Intrinsics<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Estimate<T: Real> {
    pub pose: Pose<T>,
    pub selected: usize,
    pub hypotheses: usize,
    pub tau: T,
    pub score: ScoreBreakdown,
    /// Every refinement round of the selected hypothesis was skipped.
    pub degenerate: bool,
    /// The pose that selection would return after `k` rounds, `k = 0..=K`.
    pub poses_by_iteration: Vec<Pose<T>>,
    pub timings: Option<StageTimings>,
}

struct Outcome<T: Real> {
    poses: Vec<Pose<T>>,
    scores: Vec<ScoreBreakdown>,
    degenerate: bool,
    refine: RefineTimings,
    score: Duration,
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

/// Resolves `τ` for the scene: fixed, or the largest value that keeps the
/// requested number of hypotheses.
pub fn resolve_tau<T: Real>(cfg: &RunConfig, up: &Vec3<T>) -> Result<T> {
    match cfg.tau {
        TauSetting::Fixed(t) => Ok(T::lit(t)),
        TauSetting::Count { hypotheses } => {
            let all = build_rotation_set(&cfg.sampling(*up, -T::one()))?;
            tau_for_count(&all, up, hypotheses)
                .ok_or_else(|| invalid("hypothesis count exceeds the rotation set"))
        }
    }
}

pub fn gravity_up<T: Real>(cfg: &RunConfig, reference_pose: &Pose<T>) -> Vec3<T> {
    match cfg.gravity_up {
        Some(v) => Vec3::new(T::lit(v[0]), T::lit(v[1]), T::lit(v[2])).normalize(),
        None => reference_pose.rotation.apply(&Vec3::z()),
    }
}

pub fn estimate<T: Real>(scene: &Scene<'_, T>, cfg: &RunConfig, exec: &Executor) -> Result<Estimate<T>> {
    cfg.validate()?;
    let clock = exec.record_timings;
    let start = Instant::now();

    let up = gravity_up(cfg, scene.reference_pose);
    let tau = resolve_tau(cfg, &up)?;
    let hyps = initialize(scene.query, scene.intrinsics, scene.prior, &cfg.sampling(up, tau))?;
    let reference = PreparedReference::new(scene.reference, scene.reference_pose, scene.prior)?;
    let init = start.elapsed();

    let splat = cfg.splat::<T>();
    let refine_cfg = cfg.refine_config(scene.prior.diameter);
    let outcomes = match cfg.refine.comparator {
        ComparatorKind::Pixel => run_hypotheses(
            &Refiner {
                reference: &reference,
                query: scene.query,
                intrinsics: scene.intrinsics,
                splat: &splat,
                config: &refine_cfg,
                comparator: ProcrustesComparator,
            },
            &hyps.poses,
            scene,
            cfg,
            exec,
        ),
        ComparatorKind::WindowedIcp => run_hypotheses(
            &Refiner {
                reference: &reference,
                query: scene.query,
                intrinsics: scene.intrinsics,
                splat: &splat,
                config: &refine_cfg,
                comparator: cfg.icp(scene.intrinsics),
            },
            &hyps.poses,
            scene,
            cfg,
            exec,
        ),
    };

    let mut poses_by_iteration = Vec::with_capacity(cfg.iterations + 1);
    for k in 0..=cfg.iterations {
        let totals: Vec<f64> = outcomes.iter().map(|o| o.scores[k].total).collect();
        poses_by_iteration.push(outcomes[select(&totals)?.best].poses[k]);
    }
    let totals: Vec<f64> = outcomes.iter().map(|o| o.scores[cfg.iterations].total).collect();
    let best = select(&totals).map_err(|_| Error::EmptyHypotheses)?.best;
    let chosen = &outcomes[best];

    let timings = clock.then(|| StageTimings {
        init: ms(init),
        projection: outcomes.iter().map(|o| ms(o.refine.projection)).sum(),
        refine: outcomes.iter().map(|o| ms(o.refine.compare)).sum(),
        score: outcomes.iter().map(|o| ms(o.score)).sum(),
    });

    Ok(Estimate {
        pose: chosen.poses[cfg.iterations],
        selected: best,
        hypotheses: hyps.len(),
        tau,
        score: chosen.scores[cfg.iterations],
        degenerate: chosen.degenerate,
        poses_by_iteration,
        timings,
    })
}

fn run_hypotheses<T: Real, C: Comparator<T>>(
    refiner: &Refiner<'_, T, C>,
    hyps: &[Pose<T>],
    scene: &Scene<'_, T>,
    cfg: &RunConfig,
    exec: &Executor,
) -> Vec<Outcome<T>> {
    let clock = exec.record_timings;
    exec.map(hyps, |hyp| {
        let mut refine_time = RefineTimings::default();
        let mut score_time = Duration::ZERO;
        let mut poses = Vec::with_capacity(cfg.iterations + 1);
        let mut scores = Vec::with_capacity(cfg.iterations + 1);
        let (refinement, _) = refiner.refine_visit(hyp, clock.then_some(&mut refine_time), |_, pose, proj| {
            let s = clock.then(Instant::now);
            scores.push(score_hypothesis(proj, scene.query, scene.prior, &cfg.score));
            if let Some(s) = s {
                score_time += s.elapsed();
            }
            poses.push(*pose);
        });
        Outcome {
            poses,
            scores,
            degenerate: refinement.all_degenerate(),
            refine: refine_time,
            score: score_time,
        }
    })
}
