//! ADD-family pose error metrics.

use crate::error::{invalid, Error, Result};
use crate::geometry::{Pose, Vec3};
use crate::scalar::Real;

/// Object-frame vertex set with its diameter (max pairwise distance).
#[derive(Debug, Clone, PartialEq)]
pub struct ModelPoints<T: Real> {
    vertices: Vec<Vec3<T>>,
    diameter: T,
}

/// Largest pairwise distance, O(n²).
pub fn point_set_diameter<T: Real>(points: &[Vec3<T>]) -> T {
    let mut best = T::zero();
    for (i, a) in points.iter().enumerate() {
        for b in &points[i + 1..] {
            best = best.max((a - b).norm_squared());
        }
    }
    best.sqrt()
}

impl<T: Real> ModelPoints<T> {
    pub fn new(vertices: Vec<Vec3<T>>) -> Result<Self> {
        if vertices.is_empty() {
            return Err(invalid("model has no vertices"));
        }
        let diameter = point_set_diameter(&vertices);
        Ok(Self { vertices, diameter })
    }

    /// Accepts a declared diameter only if it matches the vertices within 1e-6.
    pub fn with_diameter(vertices: Vec<Vec3<T>>, diameter: T) -> Result<Self> {
        let model = Self::new(vertices)?;
        if (model.diameter - diameter).abs() > T::lit(1e-6) {
            return Err(invalid("declared diameter does not match the vertices"));
        }
        Ok(model)
    }

    pub fn vertices(&self) -> &[Vec3<T>] {
        &self.vertices
    }

    pub fn diameter(&self) -> T {
        self.diameter
    }
}

/// Mean distance between corresponding transformed vertices.
pub fn add<T: Real>(pred: &Pose<T>, truth: &Pose<T>, model: &ModelPoints<T>) -> T {
    let sum = model
        .vertices
        .iter()
        .fold(T::zero(), |acc, x| acc + (pred.apply(x) - truth.apply(x)).norm());
    sum / T::lit(model.vertices.len() as f64)
}

/// Mean distance from each predicted vertex to the closest true vertex.
pub fn add_s<T: Real>(pred: &Pose<T>, truth: &Pose<T>, model: &ModelPoints<T>) -> T {
    let moved: Vec<_> = model.vertices.iter().map(|x| pred.apply(x)).collect();
    let target: Vec<_> = model.vertices.iter().map(|x| truth.apply(x)).collect();
    let sum = moved.iter().fold(T::zero(), |acc, p| {
        let nearest = target
            .iter()
            .map(|q| (p - q).norm_squared())
            .fold(T::max_value().expect("bounded float"), |a, b| a.min(b));
        acc + nearest.sqrt()
    });
    sum / T::lit(moved.len() as f64)
}

/// Percentage of errors strictly below `fraction · diameter`.
pub fn add_accuracy<T: Real>(errors: &[T], model: &ModelPoints<T>, fraction: T) -> Result<f64> {
    if !(fraction > T::zero()) {
        return Err(invalid("fraction must be positive"));
    }
    if errors.is_empty() {
        return Err(Error::UndefinedMetric);
    }
    let threshold = fraction * model.diameter;
    let hits = errors.iter().filter(|&&e| e < threshold).count();
    Ok(100.0 * hits as f64 / errors.len() as f64)
}

/// Area under the accuracy-vs-threshold curve on `[0, max_threshold]`,
/// normalized to `[0, 1]`. Exact for the empirical step function.
pub fn auc<T: Real>(errors: &[T], max_threshold: T) -> Result<f64> {
    if !(max_threshold > T::zero()) {
        return Err(invalid("max threshold must be positive"));
    }
    if errors.is_empty() {
        return Err(Error::UndefinedMetric);
    }
    let m = max_threshold.as_f64();
    let area: f64 = errors
        .iter()
        .map(|e| (m - e.as_f64().max(0.0)).max(0.0))
        .sum();
    Ok(area / (m * errors.len() as f64))
}
