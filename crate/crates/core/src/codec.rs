//! Class labels as continuous codes in `[-1, 1]`, with uniform dequantization
//! and nearest-center decoding.

use crate::error::{check_dim, invalid, Error, Result};
use crate::rng::SeededRng;
use crate::scalar::{squared_distance, Scalar};

#[derive(Debug, Clone, PartialEq)]
pub struct ClassCodebook<S> {
    num_classes: usize,
    dim_y: usize,
    centers: Vec<Vec<S>>,
    beta: S,
}

/// Half-width used when none is given: 0.5 for two classes, otherwise
/// 0.4 times the gap between neighbouring codes.
pub fn default_beta(num_classes: usize) -> f64 {
    if num_classes == 2 {
        0.5
    } else {
        0.4 * code_gap(num_classes)
    }
}

/// Distance between consecutive scalar codes.
pub fn code_gap(num_classes: usize) -> f64 {
    2.0 / (num_classes.max(2) - 1) as f64
}

impl<S: Scalar> ClassCodebook<S> {
    /// Class `i` gets the scalar code `-1 + 2i / (num_classes - 1)`, replicated
    /// across all `dim_y` coordinates.
    pub fn new(num_classes: usize, dim_y: usize, beta: S) -> Result<Self> {
        if num_classes < 2 {
            return Err(invalid("num_classes", format!("need at least 2, got {num_classes}")));
        }
        if dim_y == 0 {
            return Err(invalid("dim_y", "must be at least 1"));
        }
        if !(beta > S::zero()) || !beta.is_finite() {
            return Err(invalid("beta", format!("must be positive and finite, got {beta}")));
        }
        let denom = (num_classes - 1) as f64;
        let centers = (0..num_classes)
            .map(|i| vec![S::lit(-1.0 + 2.0 * i as f64 / denom); dim_y])
            .collect();
        Ok(Self {
            num_classes,
            dim_y,
            centers,
            beta,
        })
    }

    pub fn with_default_beta(num_classes: usize, dim_y: usize) -> Result<Self> {
        Self::new(num_classes, dim_y, S::lit(default_beta(num_classes)))
    }

    /// Codebook with explicit centers, as restored from a config file.
    pub fn from_centers(centers: Vec<Vec<S>>, beta: S) -> Result<Self> {
        if centers.len() < 2 {
            return Err(invalid("centers", "need at least 2 classes"));
        }
        let dim_y = centers[0].len();
        if dim_y == 0 {
            return Err(invalid("centers", "empty code vector"));
        }
        for c in &centers {
            check_dim("codebook center", dim_y, c.len())?;
        }
        for i in 0..centers.len() {
            for j in 0..i {
                if centers[i] == centers[j] {
                    return Err(invalid("centers", format!("classes {j} and {i} share a code")));
                }
            }
        }
        if !(beta > S::zero()) {
            return Err(invalid("beta", "must be positive"));
        }
        Ok(Self {
            num_classes: centers.len(),
            dim_y,
            centers,
            beta,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn dim_y(&self) -> usize {
        self.dim_y
    }

    pub fn beta(&self) -> S {
        self.beta
    }

    pub fn centers(&self) -> &[Vec<S>] {
        &self.centers
    }

    pub fn center(&self, class_idx: usize) -> Result<&[S]> {
        self.centers
            .get(class_idx)
            .map(Vec::as_slice)
            .ok_or(Error::ClassOutOfRange {
                index: class_idx,
                num_classes: self.num_classes,
            })
    }

    /// Per-coordinate `[lo, hi]` interval that dequantized codes of a class occupy.
    pub fn support(&self, class_idx: usize) -> Result<Vec<(S, S)>> {
        Ok(self
            .center(class_idx)?
            .iter()
            .map(|&c| (c - self.beta, c + self.beta))
            .collect())
    }

    pub fn min_center_distance(&self) -> S {
        let mut best = S::infinity();
        for i in 0..self.num_classes {
            for j in 0..i {
                best = best.min(squared_distance(&self.centers[i], &self.centers[j]).sqrt());
            }
        }
        best
    }

    /// True when no dequantized code can land closer to a foreign center.
    /// For replicated codes the decisive offset is `beta` along the diagonal,
    /// which this bound covers with `beta·sqrt(dim_y)`.
    pub fn decoding_is_unambiguous(&self) -> bool {
        let half = self.min_center_distance() / S::lit(2.0);
        self.beta * S::count(self.dim_y).sqrt() < half
    }

    /// `center + U(-beta, beta)` independently per coordinate.
    pub fn dequantize(&self, class_idx: usize, rng: &mut SeededRng) -> Result<Vec<S>> {
        let beta = self.beta.as_f64();
        Ok(self
            .center(class_idx)?
            .iter()
            .map(|&c| c + S::lit(rng.uniform_range(-beta, beta)))
            .collect())
    }

    /// Nearest center by Euclidean distance; ties go to the lowest index.
    ///
    /// # Panics
    /// If `y_pred.len() != dim_y`.
    pub fn decode(&self, y_pred: &[S]) -> usize {
        assert_eq!(y_pred.len(), self.dim_y, "decode: code dimension");
        let mut best = 0;
        let mut best_d = S::infinity();
        for (i, c) in self.centers.iter().enumerate() {
            let d = squared_distance(c, y_pred);
            if d < best_d {
                best = i;
                best_d = d;
            }
        }
        best
    }

    /// Decodes the coordinate-wise mean of several predictions.
    pub fn decode_ensemble(&self, y_preds: &[Vec<S>]) -> Result<usize> {
        let mean = mean_vector(y_preds)?;
        check_dim("decode_ensemble prediction", self.dim_y, mean.len())?;
        Ok(self.decode(&mean))
    }
}

pub fn mean_vector<S: Scalar>(vs: &[Vec<S>]) -> Result<Vec<S>> {
    let first = vs.first().ok_or(Error::Empty("prediction list"))?;
    let mut acc = vec![S::zero(); first.len()];
    for v in vs {
        check_dim("mean_vector element", acc.len(), v.len())?;
        for (a, &x) in acc.iter_mut().zip(v) {
            *a += x;
        }
    }
    let n = S::count(vs.len());
    Ok(acc.into_iter().map(|a| a / n).collect())
}
