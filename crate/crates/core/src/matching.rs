//! Class-conditioned nearest-neighbour matching with Lowe's ratio test.

use std::fmt::Write as _;

use log::debug;
use nalgebra::DMatrix;

use crate::descriptor::{condition_class, ConditionStats, PcaError};
use crate::features::{ClassId, SegSFSet};

pub const DEFAULT_RATIO: f64 = 0.7;

/// A correspondence between a query keypoint and a reference keypoint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Match {
    pub query: (f64, f64),
    pub reference: (f64, f64),
    pub class: ClassId,
    pub distance: f64,
}

/// Index-level result of matching one class.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IndexMatch {
    pub query: usize,
    pub reference: usize,
    pub distance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchParams {
    pub ratio: f64,
    pub pca_dim: usize,
    /// Keep only pairs that are also mutual nearest neighbours.
    pub cross_check: bool,
}

impl Default for MatchParams {
    fn default() -> Self {
        Self {
            ratio: DEFAULT_RATIO,
            pca_dim: crate::descriptor::DEFAULT_PCA_DIM,
            cross_check: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SkipReason {
    NoQuery,
    TooFewReference(usize),
    Conditioning(PcaError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassSummary {
    pub class: ClassId,
    pub query_count: usize,
    pub reference_count: usize,
    pub pairs: usize,
    pub skipped: Option<SkipReason>,
    pub stats: ConditionStats,
}

/// Matches pooled across classes, ordered by (class, query index).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MatchSet {
    pub pairs: Vec<Match>,
    pub classes: Vec<ClassSummary>,
}

impl MatchSet {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn count_for(&self, class: ClassId) -> usize {
        self.classes
            .iter()
            .find(|c| c.class == class)
            .map_or(0, |c| c.pairs)
    }

    pub fn skipped(&self) -> impl Iterator<Item = &ClassSummary> {
        self.classes.iter().filter(|c| c.skipped.is_some())
    }

    /// Text dump, one `class qx qy rx ry dist` line per pair.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for m in &self.pairs {
            let _ = writeln!(
                out,
                "{} {} {} {} {} {}",
                m.class, m.query.0, m.query.1, m.reference.0, m.reference.1, m.distance
            );
        }
        out
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Two nearest rows of `reference` to `q`; ties go to the lower index.
fn two_nearest(q: &[f64], reference: &[Vec<f64>]) -> ((usize, f64), (usize, f64)) {
    let mut best = (usize::MAX, f64::INFINITY);
    let mut second = (usize::MAX, f64::INFINITY);
    for (j, r) in reference.iter().enumerate() {
        let d = sq_dist(q, r);
        if d < best.1 {
            second = best;
            best = (j, d);
        } else if d < second.1 {
            second = (j, d);
        }
    }
    ((best.0, best.1.sqrt()), (second.0, second.1.sqrt()))
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// For each query row, the nearest reference row if it passes the ratio test
/// `d1 / d2 < ratio`. A zero second distance always rejects.
pub fn match_class(
    query: &DMatrix<f64>,
    reference: &DMatrix<f64>,
    ratio: f64,
    cross_check: bool,
) -> Vec<IndexMatch> {
    if reference.nrows() < 2 || query.nrows() == 0 {
        return Vec::new();
    }
    let q_rows = rows(query);
    let r_rows = rows(reference);

    let reverse_nn: Option<Vec<usize>> = cross_check.then(|| {
        r_rows
            .iter()
            .map(|r| {
                let mut best = (usize::MAX, f64::INFINITY);
                for (i, q) in q_rows.iter().enumerate() {
                    let d = sq_dist(r, q);
                    if d < best.1 {
                        best = (i, d);
                    }
                }
                best.0
            })
            .collect()
    });

    let mut out = Vec::new();
    for (i, q) in q_rows.iter().enumerate() {
        let ((j, d1), (_, d2)) = two_nearest(q, &r_rows);
        if d2 == 0.0 || !(d1 / d2 < ratio) {
            continue;
        }
        if let Some(rev) = &reverse_nn {
            if rev[j] != i {
                continue;
            }
        }
        out.push(IndexMatch {
            query: i,
            reference: j,
            distance: d1,
        });
    }
    out
}

fn gather(set: &SegSFSet, idx: &[usize]) -> DMatrix<f64> {
    let dim = set.dim();
    DMatrix::from_fn(idx.len(), dim, |r, c| set.descriptor(idx[r])[c] as f64)
}

/// Conditions and matches every requested class, pooling the pairs.
///
/// `classes = None` uses every class present in either set. Classes with no
/// query features or fewer than two reference features contribute no pairs
/// and are recorded as skipped.
pub fn match_all(
    query: &SegSFSet,
    reference: &SegSFSet,
    classes: Option<&[ClassId]>,
    params: &MatchParams,
) -> MatchSet {
    let mut class_list: Vec<ClassId> = match classes {
        Some(c) => c.to_vec(),
        None => {
            let mut all = query.classes();
            all.extend(reference.classes());
            all
        }
    };
    class_list.sort_unstable();
    class_list.dedup();

    let mut set = MatchSet::default();
    for class in class_list {
        let qi = query.indices_of(class);
        let ri = reference.indices_of(class);
        let mut summary = ClassSummary {
            class,
            query_count: qi.len(),
            reference_count: ri.len(),
            pairs: 0,
            skipped: None,
            stats: ConditionStats::default(),
        };
        if qi.is_empty() {
            summary.skipped = Some(SkipReason::NoQuery);
        } else if ri.len() < 2 {
            summary.skipped = Some(SkipReason::TooFewReference(ri.len()));
        } else {
            match condition_class(&gather(query, &qi), &gather(reference, &ri), params.pca_dim) {
                Ok(cond) => {
                    summary.stats = cond.stats;
                    let found = match_class(
                        &cond.query,
                        &cond.reference,
                        params.ratio,
                        params.cross_check,
                    );
                    summary.pairs = found.len();
                    set.pairs.extend(found.into_iter().map(|m| Match {
                        query: query.keypoints()[qi[m.query]],
                        reference: reference.keypoints()[ri[m.reference]],
                        class,
                        distance: m.distance,
                    }));
                }
                Err(e) => summary.skipped = Some(SkipReason::Conditioning(e)),
            }
        }
        if let Some(reason) = &summary.skipped {
            debug!("class {class} skipped: {reason:?}");
        }
        set.classes.push(summary);
    }
    set
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: usize, cols: usize, v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(rows, cols, v)
    }

    #[test]
    fn clear_nearest_neighbour() {
        let q = m(1, 2, &[1.0, 0.0]);
        let r = m(2, 2, &[0.99, 0.1, 0.0, 1.0]);
        let out = match_class(&q, &r, 0.7, false);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].reference, 0);
        assert!((out[0].distance - 0.100_498_756).abs() < 1e-8);
    }

    #[test]
    fn equidistant_rejected() {
        let q = m(1, 2, &[0.0, 0.0]);
        let r = m(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        assert!(match_class(&q, &r, 0.7, false).is_empty());
    }

    #[test]
    fn ratio_boundary_is_strict() {
        // d1 = 0.7, d2 = 1.0 exactly
        let q = m(1, 2, &[0.0, 0.0]);
        let r = m(2, 2, &[0.7, 0.0, 0.0, 1.0]);
        assert!(match_class(&q, &r, 0.7, false).is_empty());
        assert_eq!(match_class(&q, &r, 0.7000001, false).len(), 1);
    }

    #[test]
    fn duplicate_references_reject() {
        let q = m(1, 2, &[1.0, 1.0]);
        let r = m(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(match_class(&q, &r, 0.7, false).is_empty());
    }

    #[test]
    fn ties_pick_lowest_index() {
        let q = m(1, 1, &[0.0]);
        let r = m(3, 1, &[5.0, 1.0, 1.0]);
        let ((j, _), (k, _)) = two_nearest(&[0.0], &rows(&r));
        assert_eq!((j, k), (1, 2));
        assert!(match_class(&q, &r, 0.7, false).is_empty());
    }

    #[test]
    fn cross_check_drops_one_sided() {
        // both queries prefer ref 0 but ref 0 prefers query 0
        let q = m(2, 1, &[0.0, 0.2]);
        let r = m(2, 1, &[0.05, 10.0]);
        assert_eq!(match_class(&q, &r, 0.7, false).len(), 2);
        let out = match_class(&q, &r, 0.7, true);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].query, 0);
    }

    fn toy_set(descs: &[[f32; 3]], labels: &[u8]) -> SegSFSet {
        let mut s = SegSFSet::empty(3, 64, 64);
        for (i, (d, &l)) in descs.iter().zip(labels).enumerate() {
            s.push((i as f64 * 8.0 + 0.5, 0.5), d, l);
        }
        s
    }

    #[test]
    fn self_match_and_skips() {
        let descs = [
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, 0.0, 1.0],
            [1.0, 1.0, 0.0],
            [0.0, 1.0, 5.0],
            [3.0, 0.0, 1.0],
            [2.0, 2.0, 2.0],
        ];
        let labels = [0, 0, 0, 1, 1, 1, 2];
        let q = toy_set(&descs, &labels);
        let mut r = toy_set(&descs[..6], &labels[..6]);
        r.push((99.5, 0.5), &[9.0, 9.0, 9.0], 3);

        let out = match_all(&q, &r, None, &MatchParams::default());
        assert_eq!(out.len(), 6);
        for p in &out.pairs {
            assert_eq!(p.query, p.reference);
            assert!(p.distance < 1e-9);
        }
        assert_eq!(
            out.pairs.len(),
            out.classes.iter().map(|c| c.pairs).sum::<usize>()
        );
        let skipped: Vec<_> = out
            .skipped()
            .map(|c| (c.class, c.skipped.clone()))
            .collect();
        assert_eq!(
            skipped,
            vec![
                (2, Some(SkipReason::TooFewReference(0))),
                (3, Some(SkipReason::NoQuery)),
            ]
        );
        assert_eq!(out.count_for(0), 3);

        let dump = out.dump();
        assert_eq!(dump.lines().count(), 6);
        assert!(dump.starts_with("0 0.5 0.5 0.5 0.5 "));
    }

    #[test]
    fn class_filter_restricts() {
        let descs = [
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, 0.0, 1.0],
            [1.0, 2.0, 0.0],
        ];
        let labels = [1, 1, 1, 0];
        let q = toy_set(&descs, &labels);
        let out = match_all(&q, &q, Some(&[1]), &MatchParams::default());
        assert!(out.pairs.iter().all(|p| p.class == 1));
        assert_eq!(out.classes.len(), 1);
    }
}
