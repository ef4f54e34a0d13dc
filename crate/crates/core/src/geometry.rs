//! Rigid transforms, pinhole intrinsics and planar reflection priors.

use std::ops::Mul;

use nalgebra::{Matrix3, Unit, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::scalar::Real;

pub type Vec3<T> = Vector3<T>;

/// A proper rotation stored as an orthonormal 3×3 matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation<T: Real>(Matrix3<T>);

impl<T: Real> Rotation<T> {
    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    /// Wraps a matrix the caller guarantees to be in SO(3).
    pub fn from_matrix_unchecked(m: Matrix3<T>) -> Self {
        Self(m)
    }

    /// Accepts `m` if it is orthonormal with determinant +1 within `tol` per entry.
    pub fn try_from_matrix(m: Matrix3<T>, tol: T) -> Result<Self> {
        let r = Self(m);
        if r.is_valid(tol) {
            Ok(r)
        } else {
            Err(invalid("matrix is not a proper rotation"))
        }
    }

    /// Nearest rotation in the Frobenius sense (polar decomposition).
    pub fn orthonormalized(m: &Matrix3<T>) -> Self {
        let svd = m.svd(true, true);
        let mut u = svd.u.expect("svd u requested");
        let v_t = svd.v_t.expect("svd v_t requested");
        if (u * v_t).determinant() < T::zero() {
            u.column_mut(2).neg_mut();
        }
        Self(u * v_t)
    }

    /// Right-handed rotation by `angle` radians about `axis`.
    pub fn about_axis(axis: &Vec3<T>, angle: T) -> Self {
        let axis = Unit::new_normalize(*axis);
        Self(*nalgebra::Rotation3::from_axis_angle(&axis, angle).matrix())
    }

    /// Builds a rotation from nine row-major entries, checked like [`Self::try_from_matrix`].
    pub fn from_row_major(rows: &[T; 9], tol: T) -> Result<Self> {
        Self::try_from_matrix(Matrix3::from_row_slice(rows), tol)
    }

    pub fn to_row_major(&self) -> [T; 9] {
        let m = &self.0;
        [
            m[(0, 0)],
            m[(0, 1)],
            m[(0, 2)],
            m[(1, 0)],
            m[(1, 1)],
            m[(1, 2)],
            m[(2, 0)],
            m[(2, 1)],
            m[(2, 2)],
        ]
    }

    pub fn matrix(&self) -> &Matrix3<T> {
        &self.0
    }

    pub fn inverse(&self) -> Self {
        Self(self.0.transpose())
    }

    pub fn apply(&self, v: &Vec3<T>) -> Vec3<T> {
        self.0 * v
    }

    /// Geodesic angle of the rotation, in radians.
    pub fn angle(&self) -> T {
        let m = &self.0;
        let c = (m.trace() - T::one()) * T::lit(0.5);
        let s = Vec3::new(
            m[(2, 1)] - m[(1, 2)],
            m[(0, 2)] - m[(2, 0)],
            m[(1, 0)] - m[(0, 1)],
        )
        .norm()
            * T::lit(0.5);
        s.atan2(c)
    }

    /// Geodesic distance `angle(selfᵀ · other)`.
    pub fn angle_to(&self, other: &Self) -> T {
        (self.inverse() * *other).angle()
    }

    pub fn is_valid(&self, tol: T) -> bool {
        let m = &self.0;
        let gram = m * m.transpose();
        let off = (gram - Matrix3::identity()).abs().max();
        off <= tol && (m.determinant() - T::one()).abs() <= tol
    }

    pub fn cast<U: Real>(&self) -> Rotation<U> {
        Rotation(self.0.map(|x| U::lit(x.as_f64())))
    }
}

impl<T: Real> Mul for Rotation<T> {
    type Output = Rotation<T>;

    fn mul(self, rhs: Self) -> Self::Output {
        Rotation(self.0 * rhs.0)
    }
}

impl<T: Real> Mul<Vec3<T>> for Rotation<T> {
    type Output = Vec3<T>;

    fn mul(self, rhs: Vec3<T>) -> Vec3<T> {
        self.0 * rhs
    }
}

/// Rigid transform `x ↦ R·x + t`, translation in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose<T: Real> {
    pub rotation: Rotation<T>,
    pub translation: Vec3<T>,
}

impl<T: Real> Pose<T> {
    pub fn new(rotation: Rotation<T>, translation: Vec3<T>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn identity() -> Self {
        Self::new(Rotation::identity(), Vec3::zeros())
    }

    pub fn from_translation(t: Vec3<T>) -> Self {
        Self::new(Rotation::identity(), t)
    }

    pub fn apply(&self, p: &Vec3<T>) -> Vec3<T> {
        self.rotation.apply(p) + self.translation
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &Self) -> Self {
        Self::new(
            self.rotation * other.rotation,
            self.rotation.apply(&other.translation) + self.translation,
        )
    }

    pub fn inverse(&self) -> Self {
        let r_inv = self.rotation.inverse();
        Self::new(r_inv, -r_inv.apply(&self.translation))
    }

    /// Same transform with the rotation re-projected onto SO(3).
    pub fn renormalized(&self) -> Self {
        Self::new(
            Rotation::orthonormalized(self.rotation.matrix()),
            self.translation,
        )
    }

    pub fn cast<U: Real>(&self) -> Pose<U> {
        Pose::new(
            self.rotation.cast(),
            self.translation.map(|x| U::lit(x.as_f64())),
        )
    }
}

/// Pinhole intrinsics; pixel `(u, v)` has its center at integer coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Intrinsics<T: Real> {
    pub fx: T,
    pub fy: T,
    pub cx: T,
    pub cy: T,
    pub width: usize,
    pub height: usize,
}

impl<T: Real> Intrinsics<T> {
    pub fn new(fx: T, fy: T, cx: T, cy: T, width: usize, height: usize) -> Result<Self> {
        let k = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > T::zero() && self.fy > T::zero()) {
            return Err(invalid("focal lengths must be positive"));
        }
        if self.width == 0 || self.height == 0 {
            return Err(invalid("image dimensions must be positive"));
        }
        let w = T::lit(self.width as f64);
        let h = T::lit(self.height as f64);
        if !(self.cx >= T::zero() && self.cx < w && self.cy >= T::zero() && self.cy < h) {
            return Err(invalid("principal point outside the image"));
        }
        Ok(())
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    fn contains(&self, u: T, v: T) -> bool {
        let half = T::lit(0.5);
        u >= -half
            && v >= -half
            && u < T::lit(self.width as f64) - half
            && v < T::lit(self.height as f64) - half
    }

    /// `z · K⁻¹ · [u, v, 1]ᵀ`.
    pub fn backproject(&self, depth: T, u: T, v: T) -> Result<Vec3<T>> {
        if !(depth > T::zero()) {
            return Err(invalid("depth must be positive"));
        }
        if !self.contains(u, v) {
            return Err(invalid("pixel outside the image"));
        }
        Ok(self.backproject_unchecked(depth, u, v))
    }

    #[inline]
    pub(crate) fn backproject_unchecked(&self, depth: T, u: T, v: T) -> Vec3<T> {
        Vec3::new(
            depth * (u - self.cx) / self.fx,
            depth * (v - self.cy) / self.fy,
            depth,
        )
    }

    /// Fractional pixel coordinates of a camera-frame point, `None` when `z ≤ 0`.
    #[inline]
    pub fn project(&self, p: &Vec3<T>) -> Option<(T, T)> {
        if p.z > T::zero() {
            Some((
                self.fx * p.x / p.z + self.cx,
                self.fy * p.y / p.z + self.cy,
            ))
        } else {
            None
        }
    }

    pub fn cast<U: Real>(&self) -> Intrinsics<U> {
        Intrinsics {
            fx: U::lit(self.fx.as_f64()),
            fy: U::lit(self.fy.as_f64()),
            cx: U::lit(self.cx.as_f64()),
            cy: U::lit(self.cy.as_f64()),
            width: self.width,
            height: self.height,
        }
    }
}

/// Object-frame axis normal to the reflection plane.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SymmetryAxis {
    X,
    Y,
    Z,
    None,
}

impl SymmetryAxis {
    fn index(self) -> Option<usize> {
        match self {
            SymmetryAxis::X => Some(0),
            SymmetryAxis::Y => Some(1),
            SymmetryAxis::Z => Some(2),
            SymmetryAxis::None => None,
        }
    }
}

/// Object-level prior: an optional reflection plane plus the object diameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymmetryPrior<T: Real> {
    pub axis: SymmetryAxis,
    /// Plane passes through `offset · axis`, meters.
    pub offset: T,
    /// Object diameter `D`, meters.
    pub diameter: T,
}

impl<T: Real> SymmetryPrior<T> {
    pub fn new(axis: SymmetryAxis, offset: T, diameter: T) -> Result<Self> {
        if !(diameter > T::zero()) {
            return Err(invalid("diameter must be positive"));
        }
        Ok(Self {
            axis,
            offset,
            diameter,
        })
    }

    pub fn asymmetric(diameter: T) -> Result<Self> {
        Self::new(SymmetryAxis::None, T::zero(), diameter)
    }

    pub fn has_plane(&self) -> bool {
        self.axis != SymmetryAxis::None
    }

    /// Mirrors the object-frame point `p` across the prior's plane.
    pub fn reflect(&self, p: &Vec3<T>) -> Result<Vec3<T>> {
        let i = self.axis.index().ok_or(Error::UnsupportedPrior)?;
        let mut q = *p;
        q[i] = self.offset + self.offset - p[i];
        Ok(q)
    }

    pub fn cast<U: Real>(&self) -> SymmetryPrior<U> {
        SymmetryPrior {
            axis: self.axis,
            offset: U::lit(self.offset.as_f64()),
            diameter: U::lit(self.diameter.as_f64()),
        }
    }
}
