//! Semantic features: (keypoint, descriptor, class label) triples taken from a
//! dense feature map and a per-pixel class mask.

use thiserror::Error;

use crate::rf_geom::{keypoint_location, KeypointMode, RFState};
use crate::tensor_io::{Tensor, TensorData};

/// Class identifier. The binary road setting uses 0 = background, 1 = road.
pub type ClassId = u8;

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("feature map must be 3-dimensional [C, h, w], got dims {0:?}")]
    FeatureShape(Vec<usize>),
    #[error("feature map must be f32")]
    FeatureDtype,
    #[error("mask must be 2-dimensional [H, W], got dims {0:?}")]
    MaskShape(Vec<usize>),
    #[error("probability {value} at ({x}, {y}) is outside [0, 1]")]
    ProbabilityRange { x: usize, y: usize, value: f32 },
}

/// Per-pixel class ids at input-image resolution.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMask {
    width: usize,
    height: usize,
    labels: Vec<ClassId>,
}

impl LabelMask {
    pub fn new(width: usize, height: usize, labels: Vec<ClassId>) -> Self {
        assert_eq!(labels.len(), width * height, "mask size mismatch");
        Self {
            width,
            height,
            labels,
        }
    }

    pub fn filled(width: usize, height: usize, class: ClassId) -> Self {
        Self::new(width, height, vec![class; width * height])
    }

    /// Builds a mask from an `[H, W]` tensor: u8 tensors are taken as class
    /// ids, f32 tensors as road probabilities thresholded at `threshold`.
    pub fn from_tensor(t: &Tensor, threshold: f32) -> Result<Self, FeatureError> {
        match t.data() {
            TensorData::U8(v) => {
                let [h, w] = dims2(t)?;
                Ok(Self::new(w, h, v.clone()))
            }
            TensorData::F32(_) => threshold_mask(t, threshold),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn labels(&self) -> &[ClassId] {
        &self.labels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> ClassId {
        self.labels[y * self.width + x]
    }

    /// Nearest-pixel lookup at a continuous coordinate, clamped to the mask.
    pub fn sample(&self, x: f64, y: f64) -> ClassId {
        let (px, py) = clamp_pixel(x, y, self.width, self.height);
        self.get(px, py)
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::from_u8(vec![self.height, self.width], self.labels.clone())
            .expect("mask extents are nonzero")
    }
}

fn dims2(t: &Tensor) -> Result<[usize; 2], FeatureError> {
    match *t.dims() {
        [h, w] => Ok([h, w]),
        _ => Err(FeatureError::MaskShape(t.dims().to_vec())),
    }
}

fn clamp_pixel(x: f64, y: f64, width: usize, height: usize) -> (usize, usize) {
    let clamp = |v: f64, n: usize| -> usize {
        let f = v.floor();
        if f.is_nan() || f < 0.0 {
            0
        } else {
            (f as usize).min(n - 1)
        }
    };
    (clamp(x, width), clamp(y, height))
}

/// Label 1 where `prob > threshold` (strictly), else 0.
pub fn threshold_mask(prob: &Tensor, threshold: f32) -> Result<LabelMask, FeatureError> {
    let [h, w] = dims2(prob)?;
    let values = prob.as_f32().ok_or(FeatureError::FeatureDtype)?;
    let mut labels = Vec::with_capacity(values.len());
    for (i, &p) in values.iter().enumerate() {
        if !(0.0..=1.0).contains(&p) {
            return Err(FeatureError::ProbabilityRange {
                x: i % w,
                y: i / w,
                value: p,
            });
        }
        labels.push(u8::from(p > threshold));
    }
    Ok(LabelMask::new(w, h, labels))
}

/// Parallel arrays of keypoints, descriptors and labels for one image.
#[derive(Debug, Clone, PartialEq)]
pub struct SegSFSet {
    keypoints: Vec<(f64, f64)>,
    descriptors: Vec<f32>,
    labels: Vec<ClassId>,
    dim: usize,
    width: usize,
    height: usize,
}

impl SegSFSet {
    pub fn empty(dim: usize, width: usize, height: usize) -> Self {
        Self {
            keypoints: Vec::new(),
            descriptors: Vec::new(),
            labels: Vec::new(),
            dim,
            width,
            height,
        }
    }

    pub fn push(&mut self, keypoint: (f64, f64), descriptor: &[f32], label: ClassId) {
        assert_eq!(descriptor.len(), self.dim, "descriptor length mismatch");
        self.keypoints.push(keypoint);
        self.descriptors.extend_from_slice(descriptor);
        self.labels.push(label);
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Descriptor length `C`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn extent(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn keypoints(&self) -> &[(f64, f64)] {
        &self.keypoints
    }

    pub fn labels(&self) -> &[ClassId] {
        &self.labels
    }

    pub fn descriptor(&self, i: usize) -> &[f32] {
        &self.descriptors[i * self.dim..(i + 1) * self.dim]
    }

    pub fn descriptors(&self) -> impl ExactSizeIterator<Item = &[f32]> + '_ {
        self.descriptors
            .chunks_exact(self.dim.max(1))
            .take(self.len())
    }

    /// Image pixel a keypoint is sampled at (floor, clamped into the image).
    pub fn sample_pixel(&self, i: usize) -> (usize, usize) {
        let (x, y) = self.keypoints[i];
        clamp_pixel(x, y, self.width, self.height)
    }

    /// Sorted distinct class ids present.
    pub fn classes(&self) -> Vec<ClassId> {
        let mut seen = [false; 256];
        for &l in &self.labels {
            seen[l as usize] = true;
        }
        (0..=255u8).filter(|&c| seen[c as usize]).collect()
    }

    pub fn indices_of(&self, class: ClassId) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| self.labels[i] == class)
            .collect()
    }

    pub fn label_histogram(&self) -> [usize; 256] {
        let mut hist = [0usize; 256];
        for &l in &self.labels {
            hist[l as usize] += 1;
        }
        hist
    }
}

/// One feature per cell of a `[C, h, w]` feature map, in row-major cell order.
pub fn assemble_features(
    fmap: &Tensor,
    mask: &LabelMask,
    state: &RFState,
    mode: KeypointMode,
) -> Result<SegSFSet, FeatureError> {
    let [c, h, w] = match *fmap.dims() {
        [c, h, w] => [c, h, w],
        _ => return Err(FeatureError::FeatureShape(fmap.dims().to_vec())),
    };
    let data = fmap.as_f32().ok_or(FeatureError::FeatureDtype)?;
    let plane = h * w;

    let mut set = SegSFSet {
        keypoints: Vec::with_capacity(plane),
        descriptors: Vec::with_capacity(plane * c),
        labels: Vec::with_capacity(plane),
        dim: c,
        width: mask.width(),
        height: mask.height(),
    };
    for row in 0..h {
        for col in 0..w {
            let kp = keypoint_location(state, (col, row), mode);
            let cell = row * w + col;
            set.keypoints.push(kp);
            set.descriptors
                .extend((0..c).map(|ch| data[ch * plane + cell]));
            set.labels.push(mask.sample(kp.0, kp.1));
        }
    }
    Ok(set)
}

/// Keeps features whose label is in `classes`, preserving order.
pub fn select_classes(set: &SegSFSet, classes: &[ClassId]) -> SegSFSet {
    let mut out = SegSFSet::empty(set.dim, set.width, set.height);
    for i in 0..set.len() {
        if classes.contains(&set.labels[i]) {
            out.push(set.keypoints[i], set.descriptor(i), set.labels[i]);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn prob(h: usize, w: usize, v: Vec<f32>) -> Tensor {
        Tensor::from_f32(vec![h, w], v).unwrap()
    }

    #[test]
    fn threshold_is_strict() {
        let m = threshold_mask(&prob(2, 2, vec![0.4, 0.6, 0.5, 0.9]), 0.5).unwrap();
        assert_eq!(m.labels(), &[0, 1, 0, 1]);
        let m = threshold_mask(&prob(2, 2, vec![0.0; 4]), 0.5).unwrap();
        assert_eq!(m.labels(), &[0; 4]);
        let m = threshold_mask(&prob(1, 3, vec![0.5001; 3]), 0.5).unwrap();
        assert_eq!(m.labels(), &[1; 3]);
    }

    #[test]
    fn threshold_rejects_out_of_range() {
        let err = threshold_mask(&prob(1, 2, vec![0.2, 1.5]), 0.5).unwrap_err();
        assert!(matches!(
            err,
            FeatureError::ProbabilityRange { x: 1, y: 0, .. }
        ));
        assert!(threshold_mask(&prob(1, 1, vec![f32::NAN]), 0.5).is_err());
    }

    #[test]
    fn u8_mask_taken_verbatim() {
        let t = Tensor::from_u8(vec![1, 3], vec![0, 2, 1]).unwrap();
        assert_eq!(
            LabelMask::from_tensor(&t, 0.5).unwrap().labels(),
            &[0, 2, 1]
        );
    }

    #[test]
    fn single_cell() {
        let fmap = Tensor::from_f32(vec![2, 1, 1], vec![3.0, 4.0]).unwrap();
        let mask = LabelMask::filled(8, 8, 0);
        let set = assemble_features(
            &fmap,
            &mask,
            &RFState::with_jump(8, 0.5),
            KeypointMode::JumpCenter,
        )
        .unwrap();
        assert_eq!(set.len(), 1);
        assert_eq!(set.keypoints(), &[(0.5, 0.5)]);
        assert_eq!(set.descriptor(0), &[3.0, 4.0]);
        assert_eq!(set.labels(), &[0]);
    }

    fn half_mask_fixture() -> SegSFSet {
        // 4x4 grid, j = 8: keypoints at 8c + 0.5 for c in 0..4, so columns 0-1
        // sit at x = 0.5, 8.5 (left half of 32 px) and columns 2-3 at 16.5, 24.5.
        let (c, h, w) = (3, 4, 4);
        let fmap =
            Tensor::from_f32(vec![c, h, w], (0..c * h * w).map(|v| v as f32).collect()).unwrap();
        let labels = (0..32 * 32).map(|i| u8::from(i % 32 < 16)).collect();
        let mask = LabelMask::new(32, 32, labels);
        assemble_features(
            &fmap,
            &mask,
            &RFState::with_jump(8, 0.5),
            KeypointMode::JumpCenter,
        )
        .unwrap()
    }

    #[test]
    fn half_mask_labels_by_column() {
        let set = half_mask_fixture();
        assert_eq!(set.len(), 16);
        for i in 0..16 {
            let col = i % 4;
            assert_eq!(set.labels()[i], u8::from(col < 2), "feature {i}");
        }
        // channel-major layout gathered per cell
        assert_eq!(set.descriptor(5), &[5.0, 21.0, 37.0]);
        assert_eq!(set.keypoints()[5], (8.5, 8.5));
    }

    #[test]
    fn select_road_only() {
        let set = half_mask_fixture();
        let road = select_classes(&set, &[1]);
        assert_eq!(road.len(), 8);
        assert!(road.keypoints().iter().all(|&(x, _)| x < 16.0));
        assert_eq!(select_classes(&set, &[0, 1]), set);
        assert!(select_classes(&set, &[]).is_empty());
    }

    #[test]
    fn all_road_mask() {
        let fmap = Tensor::from_f32(vec![1, 3, 5], vec![1.0; 15]).unwrap();
        let mask = LabelMask::filled(40, 24, 1);
        let set = assemble_features(
            &fmap,
            &mask,
            &RFState::with_jump(8, 0.5),
            KeypointMode::JumpCenter,
        )
        .unwrap();
        assert_eq!(set.len(), 15);
        assert!(set.labels().iter().all(|&l| l == 1));
    }

    #[test]
    fn border_keypoints_clamp() {
        // 5 columns at j = 8 on a 36 px wide image: last center 32.5 fits, but an
        // an rf-scaled tap lands far outside and must still sample the edge pixel.
        let fmap = Tensor::from_f32(vec![1, 1, 5], vec![0.0; 5]).unwrap();
        let mut labels = vec![0u8; 36];
        labels[35] = 7;
        let mask = LabelMask::new(36, 1, labels);
        let state = RFState {
            jump: 8,
            rf: 46,
            start: 0.5,
        };
        let set = assemble_features(&fmap, &mask, &state, KeypointMode::RfScaled).unwrap();
        assert_eq!(set.keypoints()[1], (46.5, 0.5));
        assert_eq!(set.labels(), &[0, 7, 7, 7, 7]);
        for i in 0..set.len() {
            let (px, py) = set.sample_pixel(i);
            assert!(px < 36 && py < 1);
        }
    }

    #[test]
    fn shape_errors() {
        let mask = LabelMask::filled(4, 4, 0);
        let flat = Tensor::from_f32(vec![4, 4], vec![0.0; 16]).unwrap();
        assert!(matches!(
            assemble_features(&flat, &mask, &RFState::IDENTITY, KeypointMode::JumpCenter),
            Err(FeatureError::FeatureShape(_))
        ));
        let bytes = Tensor::from_u8(vec![1, 2, 2], vec![0; 4]).unwrap();
        assert_eq!(
            assemble_features(&bytes, &mask, &RFState::IDENTITY, KeypointMode::JumpCenter),
            Err(FeatureError::FeatureDtype)
        );
    }

    #[test]
    fn histogram_matches_mask_at_grid() {
        let set = half_mask_fixture();
        let hist = set.label_histogram();
        assert_eq!((hist[0], hist[1]), (8, 8));
        assert_eq!(set.classes(), vec![0, 1]);
    }
}
