//! Per-class descriptor conditioning: L2 normalization, PCA reduction and a
//! second L2 normalization.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Norms at or below this are treated as zero vectors and left untouched.
pub const ZERO_NORM: f64 = 1e-12;

/// Default retained dimensionality.
pub const DEFAULT_PCA_DIM: usize = 100;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum PcaError {
    #[error("insufficient samples: PCA needs at least 2, got {0}")]
    InsufficientSamples(usize),
    #[error("vector length {got} does not match model dimension {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("query has {query} columns but reference has {reference}")]
    DimensionMismatch { query: usize, reference: usize },
    #[error("target dimensionality must be at least 1")]
    ZeroTarget,
}

/// Scales `v` to unit length in place. Returns `false` (and leaves `v` as is)
/// when its norm is at most [`ZERO_NORM`].
pub fn l2_normalize(v: &mut [f64]) -> bool {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm <= ZERO_NORM {
        return false;
    }
    v.iter_mut().for_each(|x| *x /= norm);
    true
}

/// Normalizes every row; returns how many rows were zero vectors.
pub fn l2_normalize_rows(m: &mut DMatrix<f64>) -> usize {
    let mut zeros = 0;
    let mut row = vec![0.0; m.ncols()];
    for r in 0..m.nrows() {
        for (c, x) in row.iter_mut().enumerate() {
            *x = m[(r, c)];
        }
        if l2_normalize(&mut row) {
            for (c, &x) in row.iter().enumerate() {
                m[(r, c)] = x;
            }
        } else {
            zeros += 1;
        }
    }
    zeros
}

/// Principal-axis projection fitted on a sample matrix (rows are samples).
#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    mean: DVector<f64>,
    /// `m x C`, orthonormal rows, ordered by decreasing singular value.
    components: DMatrix<f64>,
    singular_values: Vec<f64>,
}

impl PcaModel {
    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn components(&self) -> &DMatrix<f64> {
        &self.components
    }

    pub fn singular_values(&self) -> &[f64] {
        &self.singular_values
    }

    /// Retained dimensionality `m`.
    pub fn dim(&self) -> usize {
        self.components.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn project(&self, v: &[f64]) -> Result<Vec<f64>, PcaError> {
        if v.len() != self.input_dim() {
            return Err(PcaError::LengthMismatch {
                expected: self.input_dim(),
                got: v.len(),
            });
        }
        let centered =
            DVector::from_iterator(v.len(), v.iter().zip(self.mean.iter()).map(|(a, b)| a - b));
        Ok((&self.components * centered).iter().copied().collect())
    }

    /// Projects every row of `samples`.
    pub fn project_rows(&self, samples: &DMatrix<f64>) -> Result<DMatrix<f64>, PcaError> {
        if samples.ncols() != self.input_dim() {
            return Err(PcaError::LengthMismatch {
                expected: self.input_dim(),
                got: samples.ncols(),
            });
        }
        let mut centered = samples.clone();
        for mut row in centered.row_iter_mut() {
            row -= self.mean.transpose();
        }
        Ok(centered * self.components.transpose())
    }

    /// Maps reduced coordinates back to the input space.
    pub fn reconstruct(&self, coords: &[f64]) -> Vec<f64> {
        let c = DVector::from_column_slice(coords);
        (self.components.transpose() * c + &self.mean)
            .iter()
            .copied()
            .collect()
    }
}

/// Fits PCA to `samples` (`n x C`), keeping `min(target, C, rank)` components.
/// No whitening is applied.
pub fn fit_pca(samples: &DMatrix<f64>, target: usize) -> Result<PcaModel, PcaError> {
    let (n, c) = samples.shape();
    if n < 2 {
        return Err(PcaError::InsufficientSamples(n));
    }
    if target == 0 {
        return Err(PcaError::ZeroTarget);
    }
    let mean = samples.row_mean().transpose();
    let mut centered = samples.clone();
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }

    let svd = centered.svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| {
        svd.singular_values[b]
            .total_cmp(&svd.singular_values[a])
            .then(a.cmp(&b))
    });

    let s_max = order.first().map_or(0.0, |&i| svd.singular_values[i]);
    let tol = s_max * n.max(c) as f64 * f64::EPSILON;
    let rank = order
        .iter()
        .take_while(|&&i| svd.singular_values[i] > tol && s_max > 0.0)
        .count();
    let m = target.min(c).min(rank);

    let mut components = DMatrix::zeros(m, c);
    let mut singular_values = Vec::with_capacity(m);
    for (out_row, &i) in order.iter().take(m).enumerate() {
        let mut row: Vec<f64> = v_t.row(i).iter().copied().collect();
        // Fix the sign so the largest-magnitude entry is positive.
        let pivot = row
            .iter()
            .enumerate()
            .fold((0, 0.0f64), |best, (j, &x)| {
                if x.abs() > best.1.abs() {
                    (j, x)
                } else {
                    best
                }
            })
            .1;
        if pivot < 0.0 {
            row.iter_mut().for_each(|x| *x = -*x);
        }
        for (j, x) in row.into_iter().enumerate() {
            components[(out_row, j)] = x;
        }
        singular_values.push(svd.singular_values[i]);
    }

    Ok(PcaModel {
        mean,
        components,
        singular_values,
    })
}

/// Tallies from one conditioning call.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ConditionStats {
    /// Zero vectors seen by the first normalization.
    pub zero_inputs: usize,
    /// Zero vectors seen by the second normalization.
    pub zero_outputs: usize,
    /// Retained PCA dimensionality.
    pub components: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conditioned {
    pub query: DMatrix<f64>,
    pub reference: DMatrix<f64>,
    pub stats: ConditionStats,
}

/// Normalize, PCA-reduce and renormalize one class of query and reference
/// descriptors. The PCA is fitted on the union of both normalized sets.
pub fn condition_class(
    query: &DMatrix<f64>,
    reference: &DMatrix<f64>,
    target: usize,
) -> Result<Conditioned, PcaError> {
    if query.ncols() != reference.ncols() {
        return Err(PcaError::DimensionMismatch {
            query: query.ncols(),
            reference: reference.ncols(),
        });
    }
    let (nq, nr) = (query.nrows(), reference.nrows());
    let mut stats = ConditionStats::default();

    let mut q = query.clone();
    let mut r = reference.clone();
    stats.zero_inputs = l2_normalize_rows(&mut q) + l2_normalize_rows(&mut r);

    let mut union = DMatrix::zeros(nq + nr, q.ncols());
    union.rows_mut(0, nq).copy_from(&q);
    union.rows_mut(nq, nr).copy_from(&r);
    let model = fit_pca(&union, target)?;
    stats.components = model.dim();

    let mut qp = model.project_rows(&q)?;
    let mut rp = model.project_rows(&r)?;
    stats.zero_outputs = l2_normalize_rows(&mut qp) + l2_normalize_rows(&mut rp);

    Ok(Conditioned {
        query: qp,
        reference: rp,
        stats,
    })
}
