//! Pixel-aligned RGB-D observations.

use crate::error::{invalid, Result};
use crate::geometry::{Intrinsics, Vec3};
use crate::scalar::Real;

/// RGB plus per-pixel camera-frame coordinates, a validity mask and an
/// optional per-pixel prior weight. Buffers are row-major, `v * width + u`.
///
/// `xyz` is only meaningful where `valid` holds; invalid entries are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation<T: Real> {
    width: usize,
    height: usize,
    pub rgb: Vec<[u8; 3]>,
    pub xyz: Vec<Vec3<T>>,
    pub valid: Vec<bool>,
    pub prior: Option<Vec<T>>,
}

impl<T: Real> Observation<T> {
    /// Builds an observation from a metric depth map. Pixels with `None`
    /// depth, non-positive depth or a false mask entry are invalid.
    pub fn from_depth(
        k: &Intrinsics<T>,
        rgb: Vec<[u8; 3]>,
        depth: &[Option<T>],
        mask: &[bool],
        prior: Option<Vec<T>>,
    ) -> Result<Self> {
        let n = k.pixel_count();
        if rgb.len() != n || depth.len() != n || mask.len() != n {
            return Err(invalid("image buffers do not match intrinsics size"));
        }
        let mut xyz = vec![Vec3::zeros(); n];
        let mut valid = vec![false; n];
        for (i, (d, &m)) in depth.iter().zip(mask).enumerate() {
            if let Some(z) = *d {
                if m && z > T::zero() && z.is_finite() {
                    let u = T::lit((i % k.width) as f64);
                    let v = T::lit((i / k.width) as f64);
                    xyz[i] = k.backproject_unchecked(z, u, v);
                    valid[i] = true;
                }
            }
        }
        let obs = Self {
            width: k.width,
            height: k.height,
            rgb,
            xyz,
            valid,
            prior,
        };
        obs.check_prior()?;
        Ok(obs)
    }

    /// Assembles an observation from raw buffers, checking sizes, positive
    /// depth on valid pixels and prior range.
    pub fn from_parts(
        width: usize,
        height: usize,
        rgb: Vec<[u8; 3]>,
        xyz: Vec<Vec3<T>>,
        valid: Vec<bool>,
        prior: Option<Vec<T>>,
    ) -> Result<Self> {
        let n = width * height;
        if rgb.len() != n || xyz.len() != n || valid.len() != n {
            return Err(invalid("image buffers do not match dimensions"));
        }
        let mut xyz = xyz;
        for (p, &ok) in xyz.iter_mut().zip(&valid) {
            if ok && !(p.z > T::zero()) {
                return Err(invalid("valid pixel with non-positive depth"));
            }
            if !ok {
                *p = Vec3::zeros();
            }
        }
        let obs = Self {
            width,
            height,
            rgb,
            xyz,
            valid,
            prior,
        };
        obs.check_prior()?;
        Ok(obs)
    }

    fn check_prior(&self) -> Result<()> {
        if let Some(prior) = &self.prior {
            if prior.len() != self.width * self.height {
                return Err(invalid("prior size does not match image"));
            }
            if prior.iter().any(|&w| !(w >= T::zero() && w <= T::one())) {
                return Err(invalid("prior weights must lie in [0, 1]"));
            }
        }
        Ok(())
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn index(&self, u: usize, v: usize) -> usize {
        v * self.width + u
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    /// Prior weight at a pixel, 1 when no prior channel is attached.
    #[inline]
    pub fn prior_at(&self, i: usize) -> T {
        self.prior.as_ref().map_or(T::one(), |p| p[i])
    }

    /// Iterates `(pixel index, point)` over valid pixels in raster order.
    pub fn valid_points(&self) -> impl Iterator<Item = (usize, &Vec3<T>)> + '_ {
        self.xyz
            .iter()
            .enumerate()
            .filter(move |(i, _)| self.valid[*i])
    }

    /// Depth (z) at a valid pixel.
    pub fn depth(&self, i: usize) -> Option<T> {
        self.valid[i].then(|| self.xyz[i].z)
    }

    /// Unit normals from central differences on the pixel grid, oriented
    /// toward the camera; `None` at borders, invalid neighbours, or depth
    /// steps above `max_step`.
    pub fn normals(&self, max_step: T) -> Vec<Option<Vec3<T>>> {
        let (w, h) = (self.width, self.height);
        let mut out = vec![None; w * h];
        for v in 1..h.saturating_sub(1) {
            for u in 1..w.saturating_sub(1) {
                let i = v * w + u;
                let nb = [i - 1, i + 1, i - w, i + w];
                if !self.valid[i] || !nb.iter().all(|&j| self.valid[j]) {
                    continue;
                }
                let p = self.xyz[i];
                if nb.iter().any(|&j| (self.xyz[j].z - p.z).abs() > max_step) {
                    continue;
                }
                let n = (self.xyz[i + 1] - self.xyz[i - 1]).cross(&(self.xyz[i + w] - self.xyz[i - w]));
                out[i] = n.try_normalize(T::zero()).map(|n| if n.dot(&p) > T::zero() { -n } else { n });
            }
        }
        out
    }

    pub fn cast<U: Real>(&self) -> Observation<U> {
        Observation {
            width: self.width,
            height: self.height,
            rgb: self.rgb.clone(),
            xyz: self.xyz.iter().map(|p| p.map(|x| U::lit(x.as_f64()))).collect(),
            valid: self.valid.clone(),
            prior: self
                .prior
                .as_ref()
                .map(|p| p.iter().map(|x| U::lit(x.as_f64())).collect()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn k() -> Intrinsics<f64> {
        Intrinsics::new(50.0, 50.0, 2.0, 1.5, 4, 3).unwrap()
    }

    #[test]
    fn depth_and_mask_gate_validity() {
        let k = k();
        let mut depth = vec![Some(1.0); 12];
        depth[1] = None;
        depth[2] = Some(0.0);
        let mut mask = vec![true; 12];
        mask[3] = false;
        let obs = Observation::from_depth(&k, vec![[0; 3]; 12], &depth, &mask, None).unwrap();
        assert_eq!(obs.valid_count(), 9);
        assert!(!obs.valid[1] && !obs.valid[2] && !obs.valid[3]);
        assert_eq!(obs.xyz[1], Vec3::zeros());
    }

    #[test]
    fn valid_pixels_reproject_to_themselves() {
        let k = k();
        let depth: Vec<_> = (0..12).map(|i| Some(0.5 + i as f64 * 0.1)).collect();
        let obs = Observation::from_depth(&k, vec![[0; 3]; 12], &depth, &[true; 12], None).unwrap();
        for (i, p) in obs.valid_points() {
            let (u, v) = k.project(p).unwrap();
            assert!((u - (i % 4) as f64).abs() <= 0.5);
            assert!((v - (i / 4) as f64).abs() <= 0.5);
        }
    }

    #[test]
    fn prior_range_is_checked() {
        let k = k();
        let depth = vec![Some(1.0); 12];
        let bad = Some(vec![1.5; 12]);
        assert!(Observation::from_depth(&k, vec![[0; 3]; 12], &depth, &[true; 12], bad).is_err());
        let short = Some(vec![0.5; 3]);
        assert!(Observation::from_depth(&k, vec![[0; 3]; 12], &depth, &[true; 12], short).is_err());
    }

    #[test]
    fn from_parts_rejects_nonpositive_depth() {
        let xyz = vec![Vec3::new(0.0, 0.0, -1.0); 2];
        assert!(Observation::<f64>::from_parts(2, 1, vec![[0; 3]; 2], xyz, vec![true, false], None).is_err());
    }
}
