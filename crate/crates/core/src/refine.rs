//! Iterative hypothesis refinement `P⁽ᵏ⁺¹⁾ = F(P⁽ᵏ⁾, Π(O_r, P_r, P⁽ᵏ⁾), O_q)`
//! with pluggable geometric comparators. [`compute_update`] fits one weighted
//! Procrustes alignment over pixels the projection and the query both cover;
//! [`WindowedIcpComparator`] re-pairs points by nearest neighbour inside a
//! pixel window and is the pipeline default.

use std::time::{Duration, Instant};

use nalgebra::{Matrix3, Vector3};

use crate::error::{invalid, Error, Result};
use crate::geometry::{Intrinsics, Pose, Rotation, SymmetryPrior, Vec3};
use crate::observation::Observation;
use crate::projection::{PreparedReference, ProjectionResult, SplatConfig};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefineConfig<T: Real> {
    /// Number of project/compare/update rounds, `K`.
    pub iterations: usize,
    /// Correspondence gate in meters.
    pub max_correspondence_dist: T,
    pub min_correspondences: usize,
    /// Weight correspondences by the propagated and query priors.
    pub use_prior_weights: bool,
}

impl<T: Real> RefineConfig<T> {
    /// Defaults scaled to an object of diameter `d`: `K = 3`, gate `0.1·d`, 20 pairs.
    pub fn for_diameter(d: T) -> Self {
        Self {
            iterations: 3,
            max_correspondence_dist: d * T::lit(0.1),
            min_correspondences: 20,
            use_prior_weights: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(invalid("refinement needs at least one iteration"));
        }
        if !(self.max_correspondence_dist > T::zero()) {
            return Err(invalid("correspondence gate must be positive"));
        }
        if self.min_correspondences < 3 {
            return Err(invalid("need at least 3 correspondences"));
        }
        Ok(())
    }
}

/// Rigid increment mapping projected points onto query points,
/// `q ≈ ΔR·p + Δt`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseUpdate<T: Real> {
    pub delta_rotation: Rotation<T>,
    pub delta_translation: Vec3<T>,
    pub n_correspondences: usize,
    /// Weighted RMS distance after applying the increment, meters.
    pub rms_residual: T,
    /// Set when the cross-covariance was rank deficient; the increment is then the identity.
    pub degenerate: bool,
}

impl<T: Real> PoseUpdate<T> {
    pub fn identity(n_correspondences: usize, rms_residual: T) -> Self {
        Self {
            delta_rotation: Rotation::identity(),
            delta_translation: Vec3::zeros(),
            n_correspondences,
            rms_residual,
            degenerate: true,
        }
    }

    pub fn as_pose(&self) -> Pose<T> {
        Pose::new(self.delta_rotation, self.delta_translation)
    }

    /// `R ← ΔR·R`, `t ← ΔR·t + Δt`, re-projected onto SO(3).
    pub fn apply(&self, pose: &Pose<T>) -> Pose<T> {
        self.as_pose().compose(pose).renormalized()
    }

    /// The increment in additive-translation form `(ΔR, t_new − t)`.
    pub fn translation_increment(&self, pose: &Pose<T>) -> Vec3<T> {
        self.delta_rotation.apply(&pose.translation) + self.delta_translation - pose.translation
    }
}

/// The ideal increment from `hyp` to `truth`: `(R*·Rᵀ, t* − t)`.
pub fn relative_pose_target<T: Real>(hyp: &Pose<T>, truth: &Pose<T>) -> (Rotation<T>, Vec3<T>) {
    (
        truth.rotation * hyp.rotation.inverse(),
        truth.translation - hyp.translation,
    )
}

/// Weighted rigid fit `dst ≈ R·src + t` via SVD of the centered
/// cross-covariance with reflection correction. `None` when the covariance
/// has rank below two.
pub fn weighted_procrustes<T: Real>(src: &[Vec3<T>], dst: &[Vec3<T>], weights: &[T]) -> Option<(Rotation<T>, Vec3<T>)> {
    debug_assert!(src.len() == dst.len() && src.len() == weights.len());
    let total = weights.iter().fold(T::zero(), |a, &w| a + w);
    if !(total > T::zero()) {
        return None;
    }
    let mut src_c = Vector3::zeros();
    let mut dst_c = Vector3::zeros();
    for ((s, d), &w) in src.iter().zip(dst).zip(weights) {
        src_c += s * w;
        dst_c += d * w;
    }
    src_c /= total;
    dst_c /= total;

    let mut cov = Matrix3::zeros();
    for ((s, d), &w) in src.iter().zip(dst).zip(weights) {
        cov += (s - src_c) * (d - dst_c).transpose() * w;
    }
    let svd = cov.svd(true, true);
    let mut sv = [svd.singular_values[0], svd.singular_values[1], svd.singular_values[2]];
    sv.sort_by(|a, b| b.partial_cmp(a).expect("finite singular values"));
    if !(sv[0] > T::zero()) || sv[1] <= sv[0] * T::machine_epsilon().sqrt() {
        return None;
    }
    let u = svd.u?;
    let v = svd.v_t?.transpose();
    let mut correction = Matrix3::identity();
    if (v * u.transpose()).determinant() < T::zero() {
        correction[(2, 2)] = -T::one();
    }
    let r = Rotation::orthonormalized(&(v * correction * u.transpose()));
    let t = dst_c - r.apply(&src_c);
    Some((r, t))
}

/// Pluggable comparator `F`: turns a projection and the query into a pose increment.
pub trait Comparator<T: Real>: Sync {
    fn compare(
        &self,
        proj: &ProjectionResult<T>,
        query: &Observation<T>,
        cfg: &RefineConfig<T>,
    ) -> Result<PoseUpdate<T>>;
}

/// Pixel-correspondence Procrustes comparator.
#[derive(Debug, Clone, Copy, Default)]
pub struct ProcrustesComparator;

impl<T: Real> Comparator<T> for ProcrustesComparator {
    fn compare(
        &self,
        proj: &ProjectionResult<T>,
        query: &Observation<T>,
        cfg: &RefineConfig<T>,
    ) -> Result<PoseUpdate<T>> {
        compute_update(proj, query, cfg)
    }
}

/// One comparator step: gate co-located pixels by distance, weight by the
/// priors and fit the rigid increment.
pub fn compute_update<T: Real>(
    proj: &ProjectionResult<T>,
    query: &Observation<T>,
    cfg: &RefineConfig<T>,
) -> Result<PoseUpdate<T>> {
    if proj.width() != query.width() || proj.height() != query.height() {
        return Err(invalid("projection and query sizes differ"));
    }
    let gate2 = cfg.max_correspondence_dist * cfg.max_correspondence_dist;
    let mut src = Vec::new();
    let mut dst = Vec::new();
    let mut weights = Vec::new();
    for i in 0..proj.valid.len() {
        if !(proj.valid[i] && query.valid[i]) {
            continue;
        }
        let (p, q) = (proj.xyz[i], query.xyz[i]);
        if (p - q).norm_squared() > gate2 {
            continue;
        }
        let w = if cfg.use_prior_weights {
            proj.prior[i] * query.prior_at(i)
        } else {
            T::one()
        };
        if w > T::zero() {
            src.push(p);
            dst.push(q);
            weights.push(w);
        }
    }
    if src.len() < cfg.min_correspondences {
        return Err(Error::DegenerateOverlap {
            found: src.len(),
            required: cfg.min_correspondences,
        });
    }
    let rms = |r: &Rotation<T>, t: &Vec3<T>| weighted_rms(&src, &dst, &weights, r, t);
    match weighted_procrustes(&src, &dst, &weights) {
        Some((r, t)) => Ok(PoseUpdate {
            delta_rotation: r,
            delta_translation: t,
            n_correspondences: src.len(),
            rms_residual: rms(&r, &t),
            degenerate: false,
        }),
        None => Ok(PoseUpdate::identity(src.len(), rms(&Rotation::identity(), &Vec3::zeros()))),
    }
}

/// Projective nearest-neighbour ICP run inside a single round: every
/// projected point is paired with the closest query point within a pixel
/// window around where it currently lands, the rigid fit is re-solved, and the
/// gate shrinks from `initial_gate_scale` times the configured gate down to it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowedIcpComparator<T: Real> {
    pub intrinsics: Intrinsics<T>,
    /// Search radius in pixels.
    pub window: usize,
    pub inner_iterations: usize,
    pub initial_gate_scale: T,
    /// Replace each matched query point by the foot of the source point on
    /// the query's local tangent plane, removing in-plane sampling offsets.
    pub tangent_targets: bool,
}

impl<T: Real> WindowedIcpComparator<T> {
    pub fn new(intrinsics: Intrinsics<T>) -> Self {
        Self {
            intrinsics,
            window: 4,
            inner_iterations: 10,
            initial_gate_scale: T::lit(3.0),
            tangent_targets: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.inner_iterations == 0 {
            return Err(invalid("need at least one inner iteration"));
        }
        if !(self.initial_gate_scale >= T::one()) {
            return Err(invalid("initial gate scale must be at least 1"));
        }
        Ok(())
    }

    /// Closest valid query point to `x` among the pixels around its projection.
    fn nearest(&self, query: &Observation<T>, x: &Vec3<T>, gate2: T) -> Option<(usize, Vec3<T>)> {
        let (cu, cv) = crate::projection::splat_center(x, &self.intrinsics)?;
        let r = self.window as isize;
        let (w, h) = (query.width() as isize, query.height() as isize);
        let mut best: Option<(usize, Vec3<T>)> = None;
        let mut best_d = gate2;
        for v in (cv - r).max(0)..=(cv + r).min(h - 1) {
            for u in (cu - r).max(0)..=(cu + r).min(w - 1) {
                let i = (v * w + u) as usize;
                if !query.valid[i] {
                    continue;
                }
                let d = (query.xyz[i] - x).norm_squared();
                if d <= best_d && best.is_none_or(|_| d < best_d) {
                    best_d = d;
                    best = Some((i, query.xyz[i]));
                }
            }
        }
        best
    }
}

impl<T: Real> Comparator<T> for WindowedIcpComparator<T> {
    fn compare(
        &self,
        proj: &ProjectionResult<T>,
        query: &Observation<T>,
        cfg: &RefineConfig<T>,
    ) -> Result<PoseUpdate<T>> {
        if proj.width() != query.width() || proj.height() != query.height() {
            return Err(invalid("projection and query sizes differ"));
        }
        let points = visible_points(proj, cfg.max_correspondence_dist);
        let normals = if self.tangent_targets {
            query.normals(cfg.max_correspondence_dist)
        } else {
            Vec::new()
        };

        let (mut r, mut t) = (Rotation::identity(), Vec3::zeros());
        let mut src = Vec::new();
        let mut dst = Vec::new();
        let mut weights = Vec::new();
        let steps = self.inner_iterations;
        for j in 0..steps {
            let frac = if steps > 1 { T::lit(j as f64 / (steps - 1) as f64) } else { T::one() };
            let gate = cfg.max_correspondence_dist * (self.initial_gate_scale + (T::one() - self.initial_gate_scale) * frac);
            src.clear();
            dst.clear();
            weights.clear();
            for (p, w) in &points {
                let x = r.apply(p) + t;
                let Some((qi, mut q)) = self.nearest(query, &x, gate * gate) else {
                    continue;
                };
                if let Some(Some(n)) = normals.get(qi) {
                    q = x + n * n.dot(&(q - x));
                }
                let w = if cfg.use_prior_weights { *w * query.prior_at(qi) } else { T::one() };
                if w > T::zero() {
                    src.push(*p);
                    dst.push(q);
                    weights.push(w);
                }
            }
            if src.len() < cfg.min_correspondences {
                if j == 0 {
                    return Err(Error::DegenerateOverlap {
                        found: src.len(),
                        required: cfg.min_correspondences,
                    });
                }
                break;
            }
            match weighted_procrustes(&src, &dst, &weights) {
                Some((nr, nt)) => {
                    r = nr;
                    t = nt;
                }
                None if j == 0 => return Ok(PoseUpdate::identity(src.len(), weighted_rms(&src, &dst, &weights, &r, &t))),
                None => break,
            }
        }
        Ok(PoseUpdate {
            delta_rotation: r,
            delta_translation: t,
            n_correspondences: src.len(),
            rms_residual: weighted_rms(&src, &dst, &weights, &r, &t),
            degenerate: false,
        })
    }
}

/// Each distinct winning point once, in raster order of first appearance,
/// dropping points lying more than `tolerance` behind the winner of their
/// own center pixel. Those only won stray footprint pixels past an occluding
/// silhouette.
pub fn visible_points<T: Real>(proj: &ProjectionResult<T>, tolerance: T) -> Vec<(Vec3<T>, T)> {
    let (w, h) = (proj.width() as isize, proj.height() as isize);
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::new();
    for i in 0..proj.valid.len() {
        let Some(winner) = proj.winner[i] else {
            continue;
        };
        if !seen.insert(winner) {
            continue;
        }
        let p = proj.xyz[i];
        let [u, v] = proj.uv[i];
        let (cu, cv) = (u.round().as_f64() as isize, v.round().as_f64() as isize);
        if cu >= 0 && cv >= 0 && cu < w && cv < h {
            let c = (cv * w + cu) as usize;
            if proj.valid[c] && p.z > proj.xyz[c].z + tolerance {
                continue;
            }
        }
        out.push((p, proj.prior[i]));
    }
    out
}

fn weighted_rms<T: Real>(src: &[Vec3<T>], dst: &[Vec3<T>], weights: &[T], r: &Rotation<T>, t: &Vec3<T>) -> T {
    let mut num = T::zero();
    let mut den = T::zero();
    for ((s, d), &w) in src.iter().zip(dst).zip(weights) {
        num += (r.apply(s) + t - d).norm_squared() * w;
        den += w;
    }
    if den > T::zero() {
        (num / den).sqrt()
    } else {
        T::zero()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord<T: Real> {
    pub n_correspondences: usize,
    /// Residual after the increment of this iteration, `None` when skipped.
    pub rms_residual: Option<T>,
    /// The iteration left the pose unchanged (too little overlap or rank deficiency).
    pub degenerate: bool,
    pub pose: Pose<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Refinement<T: Real> {
    pub pose: Pose<T>,
    pub history: Vec<IterationRecord<T>>,
}

impl<T: Real> Refinement<T> {
    pub fn all_degenerate(&self) -> bool {
        self.history.iter().all(|h| h.degenerate)
    }
}

/// Refines one hypothesis against the query with a given comparator.
#[derive(Debug, Clone, Copy)]
pub struct Refiner<'a, T: Real, C: Comparator<T> = ProcrustesComparator> {
    pub reference: &'a PreparedReference<T>,
    pub query: &'a Observation<T>,
    pub intrinsics: &'a Intrinsics<T>,
    pub splat: &'a SplatConfig<T>,
    pub config: &'a RefineConfig<T>,
    pub comparator: C,
}

/// Wall time spent inside a refinement, split by stage.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RefineTimings {
    pub projection: Duration,
    pub compare: Duration,
}

impl<T: Real, C: Comparator<T>> Refiner<'_, T, C> {
    pub fn refine(&self, hyp: &Pose<T>) -> Refinement<T> {
        self.refine_visit(hyp, None, |_, _, _| {}).0
    }

    /// Runs the `K` rounds, then projects the refined pose once more.
    /// `visit` sees every projection with its round index (0 for the input
    /// hypothesis, `K` for the refined pose). Timings are recorded when given.
    pub fn refine_visit<F>(
        &self,
        hyp: &Pose<T>,
        mut timings: Option<&mut RefineTimings>,
        mut visit: F,
    ) -> (Refinement<T>, ProjectionResult<T>)
    where
        F: FnMut(usize, &Pose<T>, &ProjectionResult<T>),
    {
        let project = |pose: &Pose<T>, timings: &mut Option<&mut RefineTimings>| {
            let start = timings.as_ref().map(|_| Instant::now());
            let proj = self.reference.project(pose, self.intrinsics, self.splat);
            if let (Some(t), Some(s)) = (timings.as_deref_mut(), start) {
                t.projection += s.elapsed();
            }
            proj
        };
        let mut pose = *hyp;
        let mut history = Vec::with_capacity(self.config.iterations);
        for k in 0..self.config.iterations {
            let proj = project(&pose, &mut timings);
            visit(k, &pose, &proj);
            let start = timings.as_ref().map(|_| Instant::now());
            let outcome = self.comparator.compare(&proj, self.query, self.config);
            let record = match outcome {
                Ok(update) if !update.degenerate => {
                    pose = update.apply(&pose);
                    IterationRecord {
                        n_correspondences: update.n_correspondences,
                        rms_residual: Some(update.rms_residual),
                        degenerate: false,
                        pose,
                    }
                }
                Ok(update) => IterationRecord {
                    n_correspondences: update.n_correspondences,
                    rms_residual: Some(update.rms_residual),
                    degenerate: true,
                    pose,
                },
                Err(e) => IterationRecord {
                    n_correspondences: match e {
                        Error::DegenerateOverlap { found, .. } => found,
                        _ => 0,
                    },
                    rms_residual: None,
                    degenerate: true,
                    pose,
                },
            };
            if let (Some(t), Some(s)) = (timings.as_deref_mut(), start) {
                t.compare += s.elapsed();
            }
            history.push(record);
        }
        let last = project(&pose, &mut timings);
        visit(self.config.iterations, &pose, &last);
        (Refinement { pose, history }, last)
    }
}

/// Runs `K` rounds of project → compare → update for one hypothesis.
#[allow(clippy::too_many_arguments)]
pub fn refine_hypothesis<T: Real>(
    hyp: &Pose<T>,
    ref_obs: &Observation<T>,
    ref_pose: &Pose<T>,
    query: &Observation<T>,
    prior: &SymmetryPrior<T>,
    k: &Intrinsics<T>,
    splat_cfg: &SplatConfig<T>,
    cfg: &RefineConfig<T>,
) -> Result<Refinement<T>> {
    cfg.validate()?;
    splat_cfg.validate()?;
    let reference = PreparedReference::new(ref_obs, ref_pose, prior)?;
    Ok(Refiner {
        reference: &reference,
        query,
        intrinsics: k,
        splat: splat_cfg,
        config: cfg,
        comparator: ProcrustesComparator,
    }
    .refine(hyp))
}
