use nalgebra::{DMatrix, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::GeoError;

/// A 2-D point in pixel coordinates.
pub type Point = (f64, f64);

/// A query point and the reference point it corresponds to.
pub type Correspondence = (Point, Point);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    #[default]
    Affine,
    Homography,
}

impl ModelKind {
    pub fn min_samples(self) -> usize {
        match self {
            ModelKind::Affine => 3,
            ModelKind::Homography => 4,
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "affine" => Ok(ModelKind::Affine),
            "homography" => Ok(ModelKind::Homography),
            other => Err(format!("unknown model kind {other:?} (affine|homography)")),
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelKind::Affine => "affine",
            ModelKind::Homography => "homography",
        })
    }
}

/// Planar transform mapping query pixel coordinates to reference pixel
/// coordinates. Affine models keep a last row of exactly `(0, 0, 1)`;
/// homographies are scaled so that element `(2, 2)` is 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransformModel {
    kind: ModelKind,
    matrix: Matrix3<f64>,
}

impl TransformModel {
    pub fn identity() -> Self {
        Self {
            kind: ModelKind::Affine,
            matrix: Matrix3::identity(),
        }
    }

    pub fn translation(tx: f64, ty: f64) -> Self {
        Self::affine([[1.0, 0.0, tx], [0.0, 1.0, ty]])
    }

    pub fn affine(rows: [[f64; 3]; 2]) -> Self {
        Self {
            kind: ModelKind::Affine,
            matrix: Matrix3::new(
                rows[0][0], rows[0][1], rows[0][2], //
                rows[1][0], rows[1][1], rows[1][2], //
                0.0, 0.0, 1.0,
            ),
        }
    }

    /// Wraps a 3x3 matrix. Homographies are rescaled so `(2, 2) == 1`.
    pub fn from_matrix(kind: ModelKind, matrix: Matrix3<f64>) -> Result<Self, GeoError> {
        match kind {
            ModelKind::Affine => {
                if matrix[(2, 0)] != 0.0 || matrix[(2, 1)] != 0.0 || matrix[(2, 2)] != 1.0 {
                    return Err(GeoError::InvalidModel(
                        "affine matrix must have last row (0, 0, 1)".into(),
                    ));
                }
                Ok(Self { kind, matrix })
            }
            ModelKind::Homography => {
                let h22 = matrix[(2, 2)];
                if h22.abs() < 1e-12 || !matrix.iter().all(|v| v.is_finite()) {
                    return Err(GeoError::Degenerate);
                }
                Ok(Self {
                    kind,
                    matrix: matrix / h22,
                })
            }
        }
    }

    pub fn from_row_major(kind: ModelKind, m: [f64; 9]) -> Result<Self, GeoError> {
        Self::from_matrix(kind, Matrix3::from_row_slice(&m))
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.matrix
    }

    pub fn row_major(&self) -> [f64; 9] {
        let m = &self.matrix;
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

    pub fn apply(&self, p: Point) -> Result<Point, GeoError> {
        apply_transform(self, p)
    }

    pub fn inverse(&self) -> Result<Self, GeoError> {
        let inv = self.matrix.try_inverse().ok_or(GeoError::Singular)?;
        if !inv.iter().all(|v| v.is_finite()) {
            return Err(GeoError::Singular);
        }
        match self.kind {
            ModelKind::Affine => {
                let mut inv = inv;
                inv[(2, 0)] = 0.0;
                inv[(2, 1)] = 0.0;
                inv[(2, 2)] = 1.0;
                Ok(Self {
                    kind: ModelKind::Affine,
                    matrix: inv,
                })
            }
            ModelKind::Homography => Self::from_matrix(ModelKind::Homography, inv).or(Ok(Self {
                kind: ModelKind::Homography,
                matrix: inv,
            })),
        }
    }

    /// `self` after `first`: `p -> self(first(p))`.
    pub fn compose(&self, first: &TransformModel) -> Self {
        let matrix = self.matrix * first.matrix;
        match (self.kind, first.kind) {
            (ModelKind::Affine, ModelKind::Affine) => {
                let mut matrix = matrix;
                matrix[(2, 0)] = 0.0;
                matrix[(2, 1)] = 0.0;
                matrix[(2, 2)] = 1.0;
                Self {
                    kind: ModelKind::Affine,
                    matrix,
                }
            }
            _ => Self::from_matrix(ModelKind::Homography, matrix).unwrap_or(Self {
                kind: ModelKind::Homography,
                matrix,
            }),
        }
    }

    /// Rotation angle in degrees of the linear part, `atan2(m10, m00)`.
    pub fn rotation_degrees(&self) -> f64 {
        self.matrix[(1, 0)].atan2(self.matrix[(0, 0)]).to_degrees()
    }
}

pub fn apply_transform(t: &TransformModel, p: Point) -> Result<Point, GeoError> {
    let v = t.matrix * Vector3::new(p.0, p.1, 1.0);
    if v.z <= 1e-12 {
        return Err(GeoError::PointAtInfinity);
    }
    Ok((v.x / v.z, v.y / v.z))
}

/// Similarity that moves the centroid to the origin and the mean distance
/// from it to sqrt(2).
fn normalizing_transform(
    points: impl Iterator<Item = Point> + Clone,
) -> Result<Matrix3<f64>, GeoError> {
    let n = points.clone().count() as f64;
    let (sx, sy) = points
        .clone()
        .fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    let (cx, cy) = (sx / n, sy / n);
    let mean_dist = points
        .map(|(x, y)| ((x - cx).powi(2) + (y - cy).powi(2)).sqrt())
        .sum::<f64>()
        / n;
    if !(mean_dist > 1e-12) || !mean_dist.is_finite() {
        return Err(GeoError::Degenerate);
    }
    let s = std::f64::consts::SQRT_2 / mean_dist;
    Ok(Matrix3::new(
        s,
        0.0,
        -s * cx,
        0.0,
        s,
        -s * cy,
        0.0,
        0.0,
        1.0,
    ))
}

fn norm_apply(m: &Matrix3<f64>, p: Point) -> Point {
    (m[(0, 0)] * p.0 + m[(0, 2)], m[(1, 1)] * p.1 + m[(1, 2)])
}

/// Least-squares affine transform (six parameters) minimizing squared
/// reference-side residuals, solved by SVD on normalized coordinates.
pub fn estimate_affine_lsq(pairs: &[Correspondence]) -> Result<TransformModel, GeoError> {
    if pairs.len() < 3 {
        return Err(GeoError::NotEnoughMatches {
            got: pairs.len(),
            need: 3,
        });
    }
    let tq = normalizing_transform(pairs.iter().map(|p| p.0))?;
    let tr = normalizing_transform(pairs.iter().map(|p| p.1))?;

    let n = pairs.len();
    let mut design = DMatrix::zeros(n, 3);
    let mut rhs = DMatrix::zeros(n, 2);
    for (i, &(q, r)) in pairs.iter().enumerate() {
        let q = norm_apply(&tq, q);
        let r = norm_apply(&tr, r);
        design[(i, 0)] = q.0;
        design[(i, 1)] = q.1;
        design[(i, 2)] = 1.0;
        rhs[(i, 0)] = r.0;
        rhs[(i, 1)] = r.1;
    }
    let svd = design.svd(true, true);
    let s_max = svd.singular_values.max();
    let s_min = svd.singular_values.min();
    if !(s_min > 1e-10 * s_max) {
        return Err(GeoError::Degenerate);
    }
    let sol = svd.solve(&rhs, 0.0).map_err(|_| GeoError::Degenerate)?;
    // sol is 3x2: column k holds the coefficients for output coordinate k.
    let normalized = Matrix3::new(
        sol[(0, 0)],
        sol[(1, 0)],
        sol[(2, 0)],
        sol[(0, 1)],
        sol[(1, 1)],
        sol[(2, 1)],
        0.0,
        0.0,
        1.0,
    );
    let tr_inv = tr.try_inverse().ok_or(GeoError::Degenerate)?;
    let mut m = tr_inv * normalized * tq;
    m[(2, 0)] = 0.0;
    m[(2, 1)] = 0.0;
    m[(2, 2)] = 1.0;
    if !m.iter().all(|v| v.is_finite()) {
        return Err(GeoError::Degenerate);
    }
    TransformModel::from_matrix(ModelKind::Affine, m)
}

/// Normalized DLT homography.
pub fn estimate_homography_lsq(pairs: &[Correspondence]) -> Result<TransformModel, GeoError> {
    if pairs.len() < 4 {
        return Err(GeoError::NotEnoughMatches {
            got: pairs.len(),
            need: 4,
        });
    }
    let tq = normalizing_transform(pairs.iter().map(|p| p.0))?;
    let tr = normalizing_transform(pairs.iter().map(|p| p.1))?;

    // Pad to at least 9 rows so the SVD yields the full right-singular basis.
    let rows = (2 * pairs.len()).max(9);
    let mut a = DMatrix::zeros(rows, 9);
    for (i, &(q, r)) in pairs.iter().enumerate() {
        let (x, y) = norm_apply(&tq, q);
        let (u, v) = norm_apply(&tr, r);
        let r0 = 2 * i;
        let r1 = r0 + 1;
        a[(r0, 0)] = -x;
        a[(r0, 1)] = -y;
        a[(r0, 2)] = -1.0;
        a[(r0, 6)] = u * x;
        a[(r0, 7)] = u * y;
        a[(r0, 8)] = u;
        a[(r1, 3)] = -x;
        a[(r1, 4)] = -y;
        a[(r1, 5)] = -1.0;
        a[(r1, 6)] = v * x;
        a[(r1, 7)] = v * y;
        a[(r1, 8)] = v;
    }
    let svd = a.svd(false, true);
    let v_t = svd.v_t.as_ref().expect("requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[i].total_cmp(&svd.singular_values[j]));
    let s = |k: usize| svd.singular_values[order[k]];
    let s_max = s(order.len() - 1);
    // A one-dimensional null space is required; a second tiny singular value
    // means the correspondences do not pin down the homography.
    if !(s(1) > 1e-10 * s_max) {
        return Err(GeoError::Degenerate);
    }
    let h = v_t.row(order[0]);
    let normalized = Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], h[8]);
    let tr_inv = tr.try_inverse().ok_or(GeoError::Degenerate)?;
    let m = tr_inv * normalized * tq;
    if m.determinant().abs() < 1e-14 * m.norm().powi(3) {
        return Err(GeoError::Degenerate);
    }
    TransformModel::from_matrix(ModelKind::Homography, m)
}

pub fn estimate_lsq(kind: ModelKind, pairs: &[Correspondence]) -> Result<TransformModel, GeoError> {
    match kind {
        ModelKind::Affine => estimate_affine_lsq(pairs),
        ModelKind::Homography => estimate_homography_lsq(pairs),
    }
}

/// Twice the signed triangle area of three points.
pub(crate) fn cross(a: Point, b: Point, c: Point) -> f64 {
    (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0)
}

/// Collinearity test for a minimal sample: any triple with `|cross| < 1e-9`.
pub fn is_degenerate_sample(points: &[Point]) -> bool {
    let n = points.len();
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                if cross(points[i], points[j], points[k]).abs() < 1e-9 {
                    return true;
                }
            }
        }
    }
    false
}
