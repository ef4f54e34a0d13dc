//! Initial pose hypotheses: a Fibonacci viewpoint lattice crossed with
//! in-plane rotations, pruned by a gravity prior and paired with one shared
//! translation estimated from the query mask.

use nalgebra::Matrix3;

use crate::error::{invalid, Error, Result};
use crate::geometry::{Intrinsics, Pose, Rotation, SymmetryPrior, Vec3};
use crate::observation::Observation;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationSamplingConfig<T: Real> {
    pub n_viewpoints: usize,
    pub n_inplane: usize,
    /// Scene up direction in the camera frame, unit length.
    pub gravity_up: Vec3<T>,
    /// Cosine threshold on the angle between the object's up axis and `gravity_up`.
    pub tau: T,
}

impl<T: Real> RotationSamplingConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if self.n_viewpoints == 0 || self.n_inplane == 0 {
            return Err(invalid("viewpoint and in-plane counts must be at least 1"));
        }
        if (self.gravity_up.norm() - T::one()).abs() > T::lit(1e-9) {
            return Err(invalid("gravity_up must be a unit vector"));
        }
        if !(self.tau >= -T::one() && self.tau <= T::one()) {
            return Err(invalid("tau must lie in [-1, 1]"));
        }
        Ok(())
    }
}

/// A sampled rotation tagged with the lattice cell it came from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationCandidate<T: Real> {
    pub rotation: Rotation<T>,
    pub viewpoint: usize,
    pub inplane: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisSet<T: Real> {
    pub poses: Vec<Pose<T>>,
    /// `(viewpoint index, in-plane index)` per pose.
    pub provenance: Vec<(usize, usize)>,
}

impl<T: Real> HypothesisSet<T> {
    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }
}

/// `n` directions on the unit sphere: `z_i = 1 − (2i+1)/n`, golden-angle azimuth.
pub fn fibonacci_directions<T: Real>(n: usize) -> Result<Vec<Vec3<T>>> {
    if n == 0 {
        return Err(invalid("need at least one direction"));
    }
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    Ok((0..n)
        .map(|i| {
            let z = 1.0 - (2 * i + 1) as f64 / n as f64;
            let r = (1.0 - z * z).max(0.0).sqrt();
            let phi = i as f64 * golden;
            Vec3::new(T::lit(r * phi.cos()), T::lit(r * phi.sin()), T::lit(z))
        })
        .collect())
}

/// Rotation whose third column is `d`, so it maps the object z axis onto `d`.
pub fn rotation_from_direction<T: Real>(d: &Vec3<T>) -> Result<Rotation<T>> {
    if (d.norm() - T::one()).abs() > T::lit(1e-6) {
        return Err(invalid("direction must be a unit vector"));
    }
    let y = Vec3::y();
    let helper = if d.dot(&y).abs() > T::lit(0.99) {
        Vec3::x()
    } else {
        y
    };
    let first = helper.cross(d).normalize();
    let second = d.cross(&first);
    Ok(Rotation::from_matrix_unchecked(Matrix3::from_columns(&[
        first, second, *d,
    ])))
}

/// Every `(R(d)·R_α)⁻¹` for lattice direction `d` and in-plane angle `α = 2πj/n_inplane`.
pub fn build_rotation_set<T: Real>(cfg: &RotationSamplingConfig<T>) -> Result<Vec<RotationCandidate<T>>> {
    cfg.validate()?;
    let directions = fibonacci_directions::<T>(cfg.n_viewpoints)?;
    let mut out = Vec::with_capacity(cfg.n_viewpoints * cfg.n_inplane);
    for (vi, d) in directions.iter().enumerate() {
        let r_d = rotation_from_direction(d)?;
        for ii in 0..cfg.n_inplane {
            let alpha = T::lit(2.0 * std::f64::consts::PI * ii as f64 / cfg.n_inplane as f64);
            let r_alpha = Rotation::about_axis(&Vec3::z(), alpha);
            out.push(RotationCandidate {
                rotation: (r_d * r_alpha).inverse(),
                viewpoint: vi,
                inplane: ii,
            });
        }
    }
    Ok(out)
}

/// `⟨R·z_obj, up⟩`, the cosine between the rotated object up axis and `up`.
#[inline]
pub fn up_alignment<T: Real>(rotation: &Rotation<T>, up: &Vec3<T>) -> T {
    rotation.matrix().column(2).dot(up)
}

/// Keeps candidates with `⟨R·z_obj, v_up⟩ ≥ τ`, preserving order. An empty
/// result is legal; [`initialize`] turns it into [`Error::EmptyHypotheses`].
pub fn prune_by_gravity<T: Real>(
    candidates: &[RotationCandidate<T>],
    cfg: &RotationSamplingConfig<T>,
) -> Vec<RotationCandidate<T>> {
    candidates
        .iter()
        .filter(|c| up_alignment(&c.rotation, &cfg.gravity_up) >= cfg.tau)
        .copied()
        .collect()
}

/// Largest `τ` that retains at least `count` candidates: the `count`-th
/// largest up-alignment. Exactly `count` survive unless alignments tie there.
pub fn tau_for_count<T: Real>(candidates: &[RotationCandidate<T>], up: &Vec3<T>, count: usize) -> Option<T> {
    if count == 0 || count > candidates.len() {
        return None;
    }
    let mut dots: Vec<T> = candidates.iter().map(|c| up_alignment(&c.rotation, up)).collect();
    dots.sort_by(|a, b| b.partial_cmp(a).expect("finite alignments"));
    Some(dots[count - 1])
}

/// Linear-interpolation percentile of an ascending slice, `q ∈ [0, 1]`.
pub fn percentile<T: Real>(sorted: &[T], q: T) -> T {
    debug_assert!(!sorted.is_empty());
    let pos = q * T::lit((sorted.len() - 1) as f64);
    let lo = pos.floor();
    let i = lo.as_f64() as usize;
    if i + 1 >= sorted.len() {
        return sorted[sorted.len() - 1];
    }
    let frac = pos - lo;
    sorted[i] + (sorted[i + 1] - sorted[i]) * frac
}

/// Shared translation: the median-depth surface point under the mask
/// centroid, pushed back by `max(Δd/2, D/4)` where `Δd = z₉₅ − z₅`.
pub fn init_translation<T: Real>(
    query: &Observation<T>,
    k: &Intrinsics<T>,
    prior: &SymmetryPrior<T>,
) -> Result<Vec3<T>> {
    let mut su = 0.0f64;
    let mut sv = 0.0f64;
    let mut depths = Vec::new();
    for (i, p) in query.valid_points() {
        su += (i % query.width()) as f64;
        sv += (i / query.width()) as f64;
        depths.push(p.z);
    }
    if depths.is_empty() {
        return Err(Error::NoObservation);
    }
    let n = depths.len() as f64;
    let (uc, vc) = (T::lit(su / n), T::lit(sv / n));
    depths.sort_by(|a, b| a.partial_cmp(b).expect("finite depth"));

    let z_med = percentile(&depths, T::lit(0.5));
    let spread = percentile(&depths, T::lit(0.95)) - percentile(&depths, T::lit(0.05));
    let offset = (spread * T::lit(0.5)).max(prior.diameter * T::lit(0.25));

    let surface = k.backproject_unchecked(z_med, uc, vc);
    Ok(surface + Vec3::new(T::zero(), T::zero(), offset))
}

/// Builds the initial hypothesis set `{[R_n | T]}`.
pub fn initialize<T: Real>(
    query: &Observation<T>,
    k: &Intrinsics<T>,
    prior: &SymmetryPrior<T>,
    cfg: &RotationSamplingConfig<T>,
) -> Result<HypothesisSet<T>> {
    let candidates = build_rotation_set(cfg)?;
    let kept = prune_by_gravity(&candidates, cfg);
    if kept.is_empty() {
        return Err(Error::EmptyHypotheses);
    }
    let t = init_translation(query, k, prior)?;
    Ok(HypothesisSet {
        poses: kept.iter().map(|c| Pose::new(c.rotation, t)).collect(),
        provenance: kept.iter().map(|c| (c.viewpoint, c.inplane)).collect(),
    })
}
