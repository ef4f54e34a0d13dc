//! Closed-form observation-consistency scoring and hypothesis selection.
//! Higher totals are better.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::SymmetryPrior;
use crate::observation::Observation;
use crate::projection::ProjectionResult;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreWeights {
    pub depth: f64,
    pub photo: f64,
    pub coverage: f64,
}

impl Default for ScoreWeights {
    fn default() -> Self {
        Self {
            depth: 0.5,
            photo: 0.2,
            coverage: 0.3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreConfig {
    pub weights: ScoreWeights,
    /// Depth residual decay scale as a fraction of the object diameter.
    pub depth_scale: f64,
}

impl Default for ScoreConfig {
    fn default() -> Self {
        Self {
            weights: ScoreWeights::default(),
            depth_scale: 0.05,
        }
    }
}

impl ScoreConfig {
    pub fn validate(&self) -> Result<()> {
        let w = self.weights;
        if [w.depth, w.photo, w.coverage].iter().any(|&x| !(x >= 0.0)) {
            return Err(invalid("score weights must be non-negative"));
        }
        if ((w.depth + w.photo + w.coverage) - 1.0).abs() > 1e-9 {
            return Err(invalid("score weights must sum to 1"));
        }
        if !(self.depth_scale > 0.0) {
            return Err(invalid("depth scale must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreBreakdown {
    pub depth_term: f64,
    pub photo_term: f64,
    pub coverage: f64,
    pub total: f64,
    pub weights: ScoreWeights,
    pub co_valid: usize,
    /// No pixel was valid in both images; `total` is then 0.
    pub no_overlap: bool,
}

/// Scores a projection against the query over co-valid pixels.
pub fn score_hypothesis<T: Real>(
    proj: &ProjectionResult<T>,
    query: &Observation<T>,
    prior: &SymmetryPrior<T>,
    cfg: &ScoreConfig,
) -> ScoreBreakdown {
    let scale = cfg.depth_scale * prior.diameter.as_f64();
    let weighted = proj.prior.iter().any(|&w| w != T::one()) || query.prior.is_some();

    let mut co_valid = 0usize;
    let mut depth_sum = 0.0;
    let mut photo_sum = 0.0;
    let mut photo_w = 0.0;
    for i in 0..proj.valid.len().min(query.valid.len()) {
        if !(proj.valid[i] && query.valid[i]) {
            continue;
        }
        co_valid += 1;
        let dz = (proj.xyz[i].z - query.xyz[i].z).abs().as_f64();
        depth_sum += (-dz / scale).exp();
        let (a, b) = (proj.rgb[i], query.rgb[i]);
        let l1: u32 = (0..3).map(|c| (a[c] as i32 - b[c] as i32).unsigned_abs()).sum();
        let w = if weighted {
            (proj.prior[i] * query.prior_at(i)).as_f64()
        } else {
            1.0
        };
        photo_sum += w * (1.0 - l1 as f64 / 765.0);
        photo_w += w;
    }

    let weights = cfg.weights;
    if co_valid == 0 {
        return ScoreBreakdown {
            depth_term: 0.0,
            photo_term: 0.0,
            coverage: 0.0,
            total: 0.0,
            weights,
            co_valid,
            no_overlap: true,
        };
    }
    let query_valid = query.valid_count();
    let depth_term = depth_sum / co_valid as f64;
    let photo_term = if photo_w > 0.0 { photo_sum / photo_w } else { 0.0 };
    let coverage = co_valid as f64 / query_valid as f64;
    ScoreBreakdown {
        depth_term,
        photo_term,
        coverage,
        total: weights.depth * depth_term + weights.photo * photo_term + weights.coverage * coverage,
        weights,
        co_valid,
        no_overlap: false,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub best: usize,
    /// Hypothesis indices from best to worst.
    pub ranking: Vec<usize>,
}

/// `argmax` of the totals, ties to the lower index.
pub fn select(totals: &[f64]) -> Result<Selection> {
    if totals.is_empty() {
        return Err(Error::NoHypothesis);
    }
    let mut ranking: Vec<usize> = (0..totals.len()).collect();
    ranking.sort_by(|&a, &b| {
        totals[b]
            .partial_cmp(&totals[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    Ok(Selection {
        best: ranking[0],
        ranking,
    })
}
