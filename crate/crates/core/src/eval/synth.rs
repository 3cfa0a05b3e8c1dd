//! Synthetic image pairs with known ground truth.
//!
//! A world plane carries a smooth descriptor field (one random plane wave per
//! channel) and a road pattern of axis-aligned stripes. The reference image
//! views the world through the identity; the query image views it through the
//! ground-truth transform, so query pixel `q` shows world point `T_gt(q)`.
//! Both feature maps are sampled at the keypoint grid of a `jump`-pitch tap
//! and get independent Gaussian noise.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::features::{ClassId, LabelMask};
use crate::geometry::TransformModel;
use crate::rf_geom::{KeypointMode, RFState};
use crate::tensor_io::{RasterImage, Tensor};
use crate::Error;

pub const ROAD: ClassId = 1;
pub const BACKGROUND: ClassId = 0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub width: usize,
    pub height: usize,
    /// Feature-grid pitch in pixels; the first keypoint sits at 0.5.
    pub stride: usize,
    pub channels: usize,
    /// Distance between parallel roads, pixels.
    pub road_spacing: f64,
    pub road_width: f64,
    /// Wavelength range of the descriptor plane waves, pixels.
    pub min_wavelength: f64,
    pub max_wavelength: f64,
    /// Standard deviation of the additive descriptor noise.
    pub noise: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            width: 256,
            height: 256,
            stride: 8,
            channels: 64,
            road_spacing: 64.0,
            road_width: 12.0,
            min_wavelength: 4.0,
            max_wavelength: 12.0,
            noise: 0.01,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), Error> {
        let bad = |m: &str| Err(Error::Config(format!("synthetic spec: {m}")));
        if self.width == 0 || self.height == 0 {
            return bad("extent must be nonzero");
        }
        if self.stride == 0 {
            return bad("stride must be >= 1");
        }
        if self.channels < 8 {
            return bad("channel count must be >= 8");
        }
        if !(self.min_wavelength > 0.0 && self.max_wavelength >= self.min_wavelength) {
            return bad("wavelength range must be positive and ordered");
        }
        if !(self.noise >= 0.0) {
            return bad("noise must be >= 0");
        }
        if !(self.road_spacing > 0.0 && self.road_width >= 0.0) {
            return bad("road pattern parameters must be positive");
        }
        Ok(())
    }

    /// Feature grid extent `(w, h)`: the ceiling of the image extent over the stride.
    pub fn grid(&self) -> (usize, usize) {
        (
            self.width.div_ceil(self.stride),
            self.height.div_ceil(self.stride),
        )
    }

    pub fn rf_state(&self) -> RFState {
        RFState::with_jump(self.stride as u64, 0.5)
    }
}

/// The seeded world both views sample from.
#[derive(Debug, Clone)]
pub struct World {
    waves: Vec<(f64, f64, f64)>,
    road_spacing: f64,
    road_width: f64,
    road_offset: (f64, f64),
}

impl World {
    pub fn new(spec: &SynthSpec) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let waves = (0..spec.channels)
            .map(|_| {
                let wavelength = rng.random_range(spec.min_wavelength..=spec.max_wavelength);
                let dir = rng.random_range(0.0..TAU);
                let k = TAU / wavelength;
                (k * dir.cos(), k * dir.sin(), rng.random_range(0.0..TAU))
            })
            .collect();
        let road_offset = (
            rng.random_range(0.0..spec.road_spacing),
            rng.random_range(0.0..spec.road_spacing),
        );
        Self {
            waves,
            road_spacing: spec.road_spacing,
            road_width: spec.road_width,
            road_offset,
        }
    }

    pub fn descriptor(&self, u: f64, v: f64) -> impl Iterator<Item = f64> + '_ {
        self.waves
            .iter()
            .map(move |&(kx, ky, phase)| (kx * u + ky * v + phase).sin())
    }

    pub fn class_at(&self, u: f64, v: f64) -> ClassId {
        let on = |x: f64, off: f64| (x - off).rem_euclid(self.road_spacing) < self.road_width;
        if on(u, self.road_offset.0) || on(v, self.road_offset.1) {
            ROAD
        } else {
            BACKGROUND
        }
    }

    /// Gray level used for rendered views: textured background, bright roads.
    pub fn intensity(&self, u: f64, v: f64) -> u8 {
        let texture: f64 = self.descriptor(u, v).take(3).sum::<f64>() / 3.0;
        let base = if self.class_at(u, v) == ROAD {
            200.0
        } else {
            80.0
        };
        (base + 40.0 * texture).round().clamp(0.0, 255.0) as u8
    }
}

/// One synthetic view: `[C, h, w]` features, full-resolution labels and a
/// rendered grayscale image.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthView {
    pub features: Tensor,
    pub mask: LabelMask,
    pub image: RasterImage,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthPair {
    pub query: SynthView,
    pub reference: SynthView,
    pub truth: TransformModel,
}

fn render_view(
    spec: &SynthSpec,
    world: &World,
    to_world: &TransformModel,
    rng: &mut ChaCha8Rng,
) -> Result<SynthView, Error> {
    let (gw, gh) = spec.grid();
    let c = spec.channels;
    let plane = gw * gh;
    let state = spec.rf_state();
    let noise = Normal::new(0.0, spec.noise).map_err(|e| Error::Config(e.to_string()))?;

    let mut data = vec![0f32; c * plane];
    for row in 0..gh {
        for col in 0..gw {
            let kp = state.keypoint(col, row, KeypointMode::JumpCenter);
            let (u, v) = to_world.apply(kp)?;
            for (ch, value) in world.descriptor(u, v).enumerate() {
                let n = if spec.noise > 0.0 {
                    noise.sample(rng)
                } else {
                    0.0
                };
                data[ch * plane + row * gw + col] = (value + n) as f32;
            }
        }
    }
    let features = Tensor::from_f32(vec![c, gh, gw], data)?;

    let (w, h) = (spec.width, spec.height);
    let mut labels = Vec::with_capacity(w * h);
    let mut pixels = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let (u, v) = to_world.apply((x as f64 + 0.5, y as f64 + 0.5))?;
            labels.push(world.class_at(u, v));
            pixels.push(world.intensity(u, v));
        }
    }
    Ok(SynthView {
        features,
        mask: LabelMask::new(w, h, labels),
        image: RasterImage::new(w, h, 1, pixels)?,
    })
}

/// Builds a query/reference pair related by `truth` (query -> reference).
/// Output is a pure function of `spec` and `truth`.
pub fn synth_pair(spec: &SynthSpec, truth: &TransformModel) -> Result<SynthPair, Error> {
    spec.validate()?;
    truth.inverse()?;
    let world = World::new(spec);
    // Separate noise streams so the reference does not depend on the truth.
    let mut ref_rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x5eed_0000_0000_0001);
    let mut query_rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x5eed_0000_0000_0002);
    let reference = render_view(spec, &world, &TransformModel::identity(), &mut ref_rng)?;
    let query = render_view(spec, &world, truth, &mut query_rng)?;
    Ok(SynthPair {
        query,
        reference,
        truth: *truth,
    })
}
