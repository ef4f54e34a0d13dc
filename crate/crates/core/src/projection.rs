//! Reference-conditioned projection: symmetry completion of the reference
//! point set, relative rigid transform into a hypothesis pose, and 3×3
//! z-buffer splatting with a per-pixel energy competition.

use crate::error::{invalid, Error, Result};
use crate::geometry::{Intrinsics, Pose, SymmetryPrior, Vec3};
use crate::observation::Observation;
use crate::scalar::Real;

/// Splat energy `E = z + δ·𝒦(Δu, Δv)` over the 3×3 footprint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplatConfig<T: Real> {
    /// `δ`, meters.
    pub kernel_weight: T,
    /// `𝒦` indexed `[Δv + 1][Δu + 1]`.
    pub kernel: [[T; 3]; 3],
    /// Drop points whose surface normal faces away from the hypothesis camera.
    pub cull_backfaces: bool,
}

impl<T: Real> SplatConfig<T> {
    /// Chebyshev profile `max(|Δu|, |Δv|)`.
    pub fn chebyshev(kernel_weight: T) -> Self {
        let one = T::one();
        let zero = T::zero();
        Self {
            kernel_weight,
            kernel: [[one, one, one], [one, zero, one], [one, one, one]],
            cull_backfaces: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.kernel_weight >= T::zero()) {
            return Err(invalid("splat kernel weight must be non-negative"));
        }
        if self.kernel[1][1] != T::zero() {
            return Err(invalid("kernel must vanish at the footprint center"));
        }
        for r in 0..3 {
            for c in 0..3 {
                let k = self.kernel[r][c];
                if !(k >= T::zero()) || k != self.kernel[2 - r][2 - c] {
                    return Err(invalid("kernel must be non-negative and point symmetric"));
                }
            }
        }
        Ok(())
    }

    #[inline]
    fn energy(&self, z: T, du: isize, dv: isize) -> T {
        z + self.kernel_weight * self.kernel[(dv + 1) as usize][(du + 1) as usize]
    }
}

impl<T: Real> Default for SplatConfig<T> {
    fn default() -> Self {
        Self::chebyshev(T::lit(0.002))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentedPoint<T: Real> {
    /// Reference-camera frame, meters.
    pub position: Vec3<T>,
    pub color: [u8; 3],
    pub prior_weight: T,
    pub mirrored: bool,
    /// Raster index of the source pixel in the reference observation.
    pub source: usize,
    /// Outward unit normal in the reference-camera frame, where estimable.
    pub normal: Option<Vec3<T>>,
}

/// Reference points plus, under a reflection prior, their mirrored twins.
/// Source points come first in raster order, mirrored points follow.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedReference<T: Real> {
    pub points: Vec<AugmentedPoint<T>>,
}

/// Depth step, as a fraction of the object diameter, beyond which grid
/// neighbours are not used for normal estimation.
const NORMAL_STEP: f64 = 0.05;

/// Grayscale replication used as the mirrored-side appearance.
pub fn grayscale(rgb: [u8; 3]) -> [u8; 3] {
    let sum = rgb[0] as u32 + rgb[1] as u32 + rgb[2] as u32;
    let g = ((sum + 1) / 3) as u8;
    [g, g, g]
}

/// Completes the reference with its reflection across the symmetry plane.
pub fn mirror_fuse<T: Real>(
    ref_obs: &Observation<T>,
    ref_pose: &Pose<T>,
    prior: &SymmetryPrior<T>,
) -> Result<AugmentedReference<T>> {
    let normals = ref_obs.normals(prior.diameter * T::lit(NORMAL_STEP));
    let mut points: Vec<AugmentedPoint<T>> = ref_obs
        .valid_points()
        .map(|(i, p)| AugmentedPoint {
            position: *p,
            color: ref_obs.rgb[i],
            prior_weight: ref_obs.prior_at(i),
            mirrored: false,
            source: i,
            normal: normals[i],
        })
        .collect();
    if points.is_empty() {
        return Err(Error::NoObservation);
    }
    if prior.has_plane() {
        let to_object = ref_pose.inverse();
        let origin = prior.reflect(&Vec3::zeros()).expect("plane checked above");
        let mirrored: Vec<_> = points
            .iter()
            .map(|src| {
                let obj = to_object.apply(&src.position);
                let reflected = prior.reflect(&obj).expect("plane checked above");
                let normal = src.normal.map(|n| {
                    let n_obj = to_object.rotation.apply(&n);
                    let flipped = prior.reflect(&n_obj).expect("plane checked above") - origin;
                    ref_pose.rotation.apply(&flipped)
                });
                AugmentedPoint {
                    position: ref_pose.apply(&reflected),
                    color: grayscale(src.color),
                    prior_weight: src.prior_weight,
                    mirrored: true,
                    source: src.source,
                    normal,
                }
            })
            .collect();
        points.extend(mirrored);
    }
    Ok(AugmentedReference { points })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplatPoint<T: Real> {
    pub position: Vec3<T>,
    pub color: [u8; 3],
    pub prior_weight: T,
}

/// The rigid map `p ↦ R_n·R_rᵀ·(p − t_r) + t_n` from the reference camera
/// into the camera of hypothesis `hyp`.
pub fn relative_transform<T: Real>(ref_pose: &Pose<T>, hyp: &Pose<T>) -> Pose<T> {
    hyp.compose(&ref_pose.inverse())
}

pub fn transform_to_hypothesis<T: Real>(
    aug: &AugmentedReference<T>,
    ref_pose: &Pose<T>,
    hyp: &Pose<T>,
) -> Vec<SplatPoint<T>> {
    let rel = relative_transform(ref_pose, hyp);
    aug.points
        .iter()
        .map(|p| SplatPoint {
            position: rel.apply(&p.position),
            color: p.color,
            prior_weight: p.prior_weight,
        })
        .collect()
}

/// Like [`transform_to_hypothesis`], keeping only points whose normal faces
/// the hypothesis camera. Points without a normal are kept.
pub fn transform_front_facing<T: Real>(
    aug: &AugmentedReference<T>,
    ref_pose: &Pose<T>,
    hyp: &Pose<T>,
) -> Vec<SplatPoint<T>> {
    let rel = relative_transform(ref_pose, hyp);
    aug.points
        .iter()
        .filter_map(|p| {
            let position = rel.apply(&p.position);
            if let Some(n) = p.normal {
                if rel.rotation.apply(&n).dot(&position) >= T::zero() {
                    return None;
                }
            }
            Some(SplatPoint {
                position,
                color: p.color,
                prior_weight: p.prior_weight,
            })
        })
        .collect()
}

fn transform<T: Real>(aug: &AugmentedReference<T>, ref_pose: &Pose<T>, hyp: &Pose<T>, cfg: &SplatConfig<T>) -> Vec<SplatPoint<T>> {
    if cfg.cull_backfaces {
        transform_front_facing(aug, ref_pose, hyp)
    } else {
        transform_to_hypothesis(aug, ref_pose, hyp)
    }
}

/// Image-space attributes of the per-pixel winning points.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionResult<T: Real> {
    width: usize,
    height: usize,
    pub xyz: Vec<Vec3<T>>,
    pub rgb: Vec<[u8; 3]>,
    pub prior: Vec<T>,
    pub valid: Vec<bool>,
    /// Index into the splatted point list.
    pub winner: Vec<Option<u32>>,
    /// The winner's own rounded projection falls on this pixel, rather than
    /// on a footprint neighbour.
    pub centered: Vec<bool>,
    /// Exact image coordinates of the winner.
    pub uv: Vec<[T; 2]>,
}

impl<T: Real> ProjectionResult<T> {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    pub fn depth(&self, i: usize) -> Option<T> {
        self.valid[i].then(|| self.xyz[i].z)
    }
}

/// Rounded projection center of a point, `None` when behind the camera or
/// when its footprint misses the image entirely.
#[inline]
pub fn splat_center<T: Real>(p: &Vec3<T>, k: &Intrinsics<T>) -> Option<(isize, isize)> {
    let (u, v) = k.project(p)?;
    let lim = T::lit(1e9);
    if !(u.abs() < lim && v.abs() < lim) {
        return None;
    }
    let cu = u.round().as_f64() as isize;
    let cv = v.round().as_f64() as isize;
    let (w, h) = (k.width as isize, k.height as isize);
    if cu < -1 || cv < -1 || cu > w || cv > h {
        return None;
    }
    Some((cu, cv))
}

/// Ray-wise competition: every point bids `E = z + δ·𝒦` on the 3×3 pixels
/// around its rounded center; each pixel keeps the lowest bid, ties going
/// to the lower point index.
pub fn splat<T: Real>(
    points: &[SplatPoint<T>],
    k: &Intrinsics<T>,
    cfg: &SplatConfig<T>,
) -> ProjectionResult<T> {
    let (w, h) = (k.width, k.height);
    let n = w * h;
    let mut energy = vec![T::max_value().expect("bounded float"); n];
    let mut winner: Vec<Option<u32>> = vec![None; n];
    let mut centered = vec![false; n];

    for (idx, pt) in points.iter().enumerate() {
        let Some((cu, cv)) = splat_center(&pt.position, k) else {
            continue;
        };
        let z = pt.position.z;
        for dv in -1isize..=1 {
            let v = cv + dv;
            if v < 0 || v >= h as isize {
                continue;
            }
            for du in -1isize..=1 {
                let u = cu + du;
                if u < 0 || u >= w as isize {
                    continue;
                }
                let i = v as usize * w + u as usize;
                let e = cfg.energy(z, du, dv);
                // Points arrive in index order, so strict `<` keeps the lower index on ties.
                if winner[i].is_none() || e < energy[i] {
                    energy[i] = e;
                    winner[i] = Some(idx as u32);
                    centered[i] = du == 0 && dv == 0;
                }
            }
        }
    }

    let mut xyz = vec![Vec3::zeros(); n];
    let mut rgb = vec![[0u8; 3]; n];
    let mut prior = vec![T::zero(); n];
    let mut valid = vec![false; n];
    let mut uv = vec![[T::zero(); 2]; n];
    for i in 0..n {
        if let Some(idx) = winner[i] {
            let p = &points[idx as usize];
            let (u, v) = k.project(&p.position).expect("winner lies in front of the camera");
            uv[i] = [u, v];
            xyz[i] = p.position;
            rgb[i] = p.color;
            prior[i] = p.prior_weight;
            valid[i] = true;
        }
    }
    ProjectionResult {
        width: w,
        height: h,
        xyz,
        rgb,
        prior,
        valid,
        winner,
        centered,
        uv,
    }
}

/// `Π(O_r, P_r, P_n)`: mirror fusion, relative transform, splat.
pub fn project<T: Real>(
    ref_obs: &Observation<T>,
    ref_pose: &Pose<T>,
    hyp: &Pose<T>,
    prior: &SymmetryPrior<T>,
    k: &Intrinsics<T>,
    cfg: &SplatConfig<T>,
) -> Result<ProjectionResult<T>> {
    cfg.validate()?;
    let aug = mirror_fuse(ref_obs, ref_pose, prior)?;
    Ok(splat(&transform(&aug, ref_pose, hyp, cfg), k, cfg))
}

/// A reference observation with its augmentation computed once, for
/// projecting under many hypotheses.
#[derive(Debug, Clone)]
pub struct PreparedReference<T: Real> {
    pub pose: Pose<T>,
    pub augmented: AugmentedReference<T>,
}

impl<T: Real> PreparedReference<T> {
    pub fn new(ref_obs: &Observation<T>, ref_pose: &Pose<T>, prior: &SymmetryPrior<T>) -> Result<Self> {
        Ok(Self {
            pose: *ref_pose,
            augmented: mirror_fuse(ref_obs, ref_pose, prior)?,
        })
    }

    pub fn project(&self, hyp: &Pose<T>, k: &Intrinsics<T>, cfg: &SplatConfig<T>) -> ProjectionResult<T> {
        splat(&transform(&self.augmented, &self.pose, hyp, cfg), k, cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Rotation, SymmetryAxis};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn k64() -> Intrinsics<f64> {
        Intrinsics::new(80.0, 80.0, 32.0, 32.0, 64, 64).unwrap()
    }

    fn pt(x: f64, y: f64, z: f64) -> SplatPoint<f64> {
        SplatPoint {
            position: Vec3::new(x, y, z),
            color: [1, 2, 3],
            prior_weight: 0.5,
        }
    }

    /// Exhaustive per-pixel argmin over every point's energy.
    fn brute_force_winners(points: &[SplatPoint<f64>], k: &Intrinsics<f64>, cfg: &SplatConfig<f64>) -> Vec<Option<u32>> {
        let mut out = vec![None; k.pixel_count()];
        for v in 0..k.height as i64 {
            for u in 0..k.width as i64 {
                let mut best: Option<(f64, u32)> = None;
                for (idx, p) in points.iter().enumerate() {
                    if p.position.z <= 0.0 {
                        continue;
                    }
                    let pu = (k.fx * p.position.x / p.position.z + k.cx).round() as i64;
                    let pv = (k.fy * p.position.y / p.position.z + k.cy).round() as i64;
                    let (du, dv) = (u - pu, v - pv);
                    if du.abs() > 1 || dv.abs() > 1 {
                        continue;
                    }
                    let kern = du.abs().max(dv.abs()) as f64;
                    let e = p.position.z + cfg.kernel_weight * kern;
                    let better = match best {
                        None => true,
                        Some((be, bi)) => e < be || (e == be && (idx as u32) < bi),
                    };
                    if better {
                        best = Some((e, idx as u32));
                    }
                }
                out[v as usize * k.width + u as usize] = best.map(|b| b.1);
            }
        }
        out
    }

    #[test]
    fn kernel_validation() {
        assert!(SplatConfig::<f64>::default().validate().is_ok());
        let mut bad = SplatConfig::<f64>::default();
        bad.kernel[1][1] = 0.1;
        assert!(bad.validate().is_err());
        let mut asym = SplatConfig::<f64>::default();
        asym.kernel[0][0] = 2.0;
        assert!(asym.validate().is_err());
    }

    #[test]
    fn single_point_covers_its_footprint() {
        let k = k64();
        let res = splat(&[pt(0.0, 0.0, 1.0)], &k, &SplatConfig::default());
        assert_eq!(res.valid_count(), 9);
        for v in 31..=33 {
            for u in 31..=33 {
                assert_eq!(res.winner[v * 64 + u], Some(0));
            }
        }
    }

    #[test]
    fn nearer_point_on_ray_wins() {
        let k = k64();
        let res = splat(&[pt(0.0, 0.0, 1.0), pt(0.0, 0.0, 0.9)], &k, &SplatConfig::chebyshev(0.0));
        assert_eq!(res.winner[32 * 64 + 32], Some(1));
        assert_eq!(res.xyz[32 * 64 + 32].z, 0.9);
    }

    #[test]
    fn empty_and_hidden_inputs_are_invalid() {
        let k = k64();
        let res = splat::<f64>(&[], &k, &SplatConfig::default());
        assert_eq!(res.valid_count(), 0);
        let res = splat(&[pt(0.0, 0.0, -1.0), pt(50.0, 0.0, 1.0)], &k, &SplatConfig::default());
        assert_eq!(res.valid_count(), 0);
    }

    #[test]
    fn footprint_clips_at_border() {
        let k = k64();
        // Projects to (-1, 32): only column 0 of the footprint lands.
        let res = splat(&[pt(-33.0 / 80.0, 0.0, 1.0)], &k, &SplatConfig::default());
        assert_eq!(res.valid_count(), 3);
    }

    #[test]
    fn splat_matches_brute_force() {
        let k = k64();
        let cfg = SplatConfig::chebyshev(0.002);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts: Vec<_> = (0..200)
            .map(|_| {
                let z = rng.random_range(0.5..0.52);
                pt(rng.random_range(-0.2..0.2) * z, rng.random_range(-0.2..0.2) * z, z)
            })
            .collect();
        assert_eq!(splat(&pts, &k, &cfg).winner, brute_force_winners(&pts, &k, &cfg));
    }

    #[test]
    fn splat_ignores_permutation_with_jitter() {
        let k = k64();
        let cfg = SplatConfig::chebyshev(0.002);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let pts: Vec<_> = (0..300)
            .map(|_| pt(rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1), 1.0 + rng.random_range(0.0..1e-9)))
            .collect();
        let mut order: Vec<usize> = (0..pts.len()).collect();
        for i in (1..order.len()).rev() {
            order.swap(i, rng.random_range(0..=i));
        }
        let shuffled: Vec<_> = order.iter().map(|&i| pts[i]).collect();
        let a = splat(&pts, &k, &cfg);
        let b = splat(&shuffled, &k, &cfg);
        for i in 0..k.pixel_count() {
            assert_eq!(a.winner[i], b.winner[i].map(|j| order[j as usize] as u32));
        }
    }

    #[test]
    fn winner_attributes_are_consistent() {
        let k = k64();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pts: Vec<_> = (0..500)
            .map(|i| SplatPoint {
                position: Vec3::new(rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3), rng.random_range(0.8..1.2)),
                color: [i as u8, (i / 3) as u8, 7],
                prior_weight: rng.random_range(0.0..1.0),
            })
            .collect();
        let res = splat(&pts, &k, &SplatConfig::default());
        for i in 0..k.pixel_count() {
            match res.winner[i] {
                Some(w) => {
                    let p = &pts[w as usize];
                    assert!(res.valid[i]);
                    assert_eq!((res.xyz[i], res.rgb[i], res.prior[i]), (p.position, p.color, p.prior_weight));
                    let (cu, cv) = splat_center(&p.position, &k).unwrap();
                    let (u, v) = ((i % 64) as isize, (i / 64) as isize);
                    assert!((u - cu).abs() <= 1 && (v - cv).abs() <= 1);
                }
                None => assert!(!res.valid[i]),
            }
        }
    }

    #[test]
    fn transform_matches_literal_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let rand_pose = |rng: &mut ChaCha8Rng| {
            let axis = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            Pose::new(
                Rotation::about_axis(&axis, rng.random_range(-3.0..3.0)),
                Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(0.5..2.0)),
            )
        };
        let ref_pose = rand_pose(&mut rng);
        let hyp = rand_pose(&mut rng);
        let aug = AugmentedReference {
            points: (0..100)
                .map(|i| AugmentedPoint {
                    position: Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(0.1..2.0)),
                    color: [i as u8; 3],
                    prior_weight: 0.25,
                    mirrored: false,
                    source: i,
                    normal: None,
                })
                .collect(),
        };
        let out = transform_to_hypothesis(&aug, &ref_pose, &hyp);
        let rn = hyp.rotation.matrix();
        let rr_t = ref_pose.rotation.matrix().transpose();
        for (a, o) in aug.points.iter().zip(&out) {
            let expected = rn * (rr_t * (a.position - ref_pose.translation)) + hyp.translation;
            assert!((o.position - expected).abs().max() < 1e-9);
            assert_eq!(o.color, a.color);
            assert_eq!(o.prior_weight, a.prior_weight);
        }
        let same = transform_to_hypothesis(&aug, &ref_pose, &ref_pose);
        for (a, o) in aug.points.iter().zip(&same) {
            assert!((o.position - a.position).abs().max() < 1e-9);
        }
        let shift = Vec3::new(0.1, -0.2, 0.3);
        let moved = transform_to_hypothesis(&aug, &Pose::identity(), &Pose::from_translation(shift));
        for (a, o) in aug.points.iter().zip(&moved) {
            assert!((o.position - (a.position + shift)).abs().max() < 1e-12);
        }
    }

    fn small_obs() -> (Observation<f64>, Intrinsics<f64>) {
        let k = Intrinsics::new(20.0, 20.0, 2.0, 2.0, 5, 5).unwrap();
        let depth: Vec<_> = (0..25).map(|i| if i % 3 == 0 { None } else { Some(1.0 + i as f64 * 0.01) }).collect();
        let rgb: Vec<_> = (0..25).map(|i| [i as u8 * 10, 0, 200]).collect();
        let prior = Some((0..25).map(|i| i as f64 / 25.0).collect());
        (Observation::from_depth(&k, rgb, &depth, &[true; 25], prior).unwrap(), k)
    }

    #[test]
    fn mirror_fuse_cardinality_and_geometry() {
        let (obs, _) = small_obs();
        let pose = Pose::new(Rotation::about_axis(&Vec3::new(0.1, 1.0, 0.2), 0.6), Vec3::new(0.0, 0.0, 1.1));
        let none = SymmetryPrior::asymmetric(0.2).unwrap();
        let plain = mirror_fuse(&obs, &pose, &none).unwrap();
        assert_eq!(plain.points.len(), obs.valid_count());
        assert!(plain.points.iter().all(|p| !p.mirrored));

        let prior = SymmetryPrior::new(SymmetryAxis::X, 0.01, 0.2).unwrap();
        let aug = mirror_fuse(&obs, &pose, &prior).unwrap();
        let n = obs.valid_count();
        assert_eq!(aug.points.len(), 2 * n);
        let inv = pose.inverse();
        for (src, m) in aug.points[..n].iter().zip(&aug.points[n..]) {
            assert!(m.mirrored && !src.mirrored);
            assert_eq!(src.position, obs.xyz[src.source]);
            let expected = prior.reflect(&inv.apply(&src.position)).unwrap();
            assert!((inv.apply(&m.position) - expected).abs().max() < 1e-9);
            assert_eq!(m.color, grayscale(src.color));
            assert_eq!(m.prior_weight, src.prior_weight);
        }
    }

    #[test]
    fn grayscale_replicates_mean() {
        assert_eq!(grayscale([30, 60, 90]), [60, 60, 60]);
        assert_eq!(grayscale([255, 255, 255]), [255, 255, 255]);
        assert_eq!(grayscale([0, 0, 1]), [0, 0, 0]);
    }

    #[test]
    fn prior_rides_along_the_winner() {
        let (obs, k) = small_obs();
        let pose = Pose::from_translation(Vec3::new(0.0, 0.0, 1.0));
        let hyp = Pose::new(Rotation::about_axis(&Vec3::y(), 0.1), Vec3::new(0.01, 0.0, 1.0));
        let prior = SymmetryPrior::new(SymmetryAxis::X, 0.0, 0.2).unwrap();
        let aug = mirror_fuse(&obs, &pose, &prior).unwrap();
        let res = project(&obs, &pose, &hyp, &prior, &k, &SplatConfig::default()).unwrap();
        for i in 0..25 {
            if let Some(w) = res.winner[i] {
                assert_eq!(res.prior[i], aug.points[w as usize].prior_weight);
            }
        }
    }
}
