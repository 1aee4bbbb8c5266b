//! Reconstruction quality metrics against a known ground truth.

use crate::error::Result;
use crate::levelset::misclassified_fraction;
use crate::mesh::{norms, ScalarField};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QualityMetrics {
    /// Area fraction where the two-valued classifications disagree.
    pub misclassified: f64,
    /// Relative L2 error of the raw fields.
    pub l2_rel: f64,
    /// Jaccard distance of the P regions (gamma < 1.5).
    pub jaccard: f64,
}

pub fn quality_metrics(rec: &ScalarField, truth: &ScalarField) -> Result<QualityMetrics> {
    rec.same_grid(truth)?;
    let misclassified = misclassified_fraction(rec, truth)?;

    let diff = rec.zip(truth, |a, b| a - b)?;
    let denom = norms(truth)?.l2;
    let l2_rel = if denom > 0.0 {
        norms(&diff)?.l2 / denom
    } else {
        norms(&diff)?.l2
    };

    let g = &rec.grid;
    let mut inter = 0.0;
    let mut union = 0.0;
    for j in 0..g.ny {
        let wy = g.cell_wy(j);
        for i in 0..g.nx {
            let w = g.cell_wx(i) * wy;
            let a = rec.at(i, j) < 1.5;
            let b = truth.at(i, j) < 1.5;
            if a && b {
                inter += w;
            }
            if a || b {
                union += w;
            }
        }
    }
    let jaccard = if union > 0.0 { 1.0 - inter / union } else { 0.0 };
    Ok(QualityMetrics {
        misclassified,
        l2_rel,
        jaccard,
    })
}
