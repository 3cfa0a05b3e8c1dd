//! Receptive-field arithmetic for a stack of convolution/pooling layers.
//!
//! Folding a stack from the input gives, for the tapped layer, the jump (the
//! effective stride in input pixels), the receptive-field extent, and the
//! center of the first feature's receptive field. Keypoints for a feature at
//! grid position `loc` are then placed at `loc * jump + start`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LayerParseError {
    #[error("empty layer stack entry")]
    Empty,
    #[error("malformed layer spec {0:?}, expected e.g. \"k3s2p1\"")]
    Malformed(String),
    #[error("layer {0:?}: kernel and stride must be >= 1")]
    OutOfRange(String),
}

/// One sliding-window layer: kernel size, stride and symmetric padding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kernel: u32,
    pub stride: u32,
    pub padding: u32,
}

impl LayerSpec {
    pub fn new(kernel: u32, stride: u32, padding: u32) -> Self {
        assert!(kernel >= 1 && stride >= 1, "kernel and stride must be >= 1");
        Self {
            kernel,
            stride,
            padding,
        }
    }

    /// Output extent for an input extent `n` (floor convention, at least 1).
    pub fn output_len(&self, n: usize) -> usize {
        let padded = n + 2 * self.padding as usize;
        if padded < self.kernel as usize {
            return 1;
        }
        (padded - self.kernel as usize) / self.stride as usize + 1
    }
}

impl fmt::Display for LayerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "k{}s{}p{}", self.kernel, self.stride, self.padding)
    }
}

impl FromStr for LayerSpec {
    type Err = LayerParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.is_empty() {
            return Err(LayerParseError::Empty);
        }
        let malformed = || LayerParseError::Malformed(s.to_string());
        let rest = s.strip_prefix('k').ok_or_else(malformed)?;
        let (k, rest) = rest.split_once('s').ok_or_else(malformed)?;
        let (st, p) = rest.split_once('p').ok_or_else(malformed)?;
        let parse = |v: &str| v.parse::<u32>().map_err(|_| malformed());
        let (kernel, stride, padding) = (parse(k)?, parse(st)?, parse(p)?);
        if kernel == 0 || stride == 0 {
            return Err(LayerParseError::OutOfRange(s.to_string()));
        }
        Ok(Self {
            kernel,
            stride,
            padding,
        })
    }
}

/// Parses a comma-separated stack such as `"k7s2p3,k3s2p1"`. An empty string is
/// the empty stack.
pub fn parse_stack(s: &str) -> Result<Vec<LayerSpec>, LayerParseError> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(',').map(str::parse).collect()
}

pub fn format_stack(layers: &[LayerSpec]) -> String {
    layers
        .iter()
        .map(LayerSpec::to_string)
        .collect::<Vec<_>>()
        .join(",")
}

/// Cumulative receptive-field geometry after a prefix of the layer stack.
///
/// `start` is always a multiple of 1/2 for integer layer parameters, so it is
/// held exactly by an `f64`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RFState {
    pub jump: u64,
    pub rf: u64,
    pub start: f64,
}

impl Default for RFState {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl RFState {
    pub const IDENTITY: RFState = RFState {
        jump: 1,
        rf: 1,
        start: 0.5,
    };

    /// State for a grid of the given pitch whose first center sits at `start`.
    pub fn with_jump(jump: u64, start: f64) -> Self {
        Self {
            jump,
            rf: jump,
            start,
        }
    }

    pub fn propagate(self, layer: &LayerSpec) -> RFState {
        let k = layer.kernel as u64;
        let half_span = (k as f64 - 1.0) / 2.0 - layer.padding as f64;
        RFState {
            jump: self.jump * layer.stride as u64,
            rf: self.rf + (k - 1) * self.jump,
            start: self.start + half_span * self.jump as f64,
        }
    }

    /// Center of the feature at integer grid position `(col, row)`.
    pub fn keypoint(&self, col: usize, row: usize, mode: KeypointMode) -> (f64, f64) {
        keypoint_location(self, (col, row), mode)
    }
}

pub fn propagate_layer(state: RFState, layer: &LayerSpec) -> RFState {
    state.propagate(layer)
}

pub fn chain(layers: &[LayerSpec]) -> RFState {
    chain_from(RFState::IDENTITY, layers)
}

pub fn chain_from(state: RFState, layers: &[LayerSpec]) -> RFState {
    layers.iter().fold(state, |s, l| s.propagate(l))
}

/// Every intermediate state, starting with the identity.
pub fn chain_stages(layers: &[LayerSpec]) -> Vec<RFState> {
    let mut states = Vec::with_capacity(layers.len() + 1);
    states.push(RFState::IDENTITY);
    for l in layers {
        let next = states.last().unwrap().propagate(l);
        states.push(next);
    }
    states
}

/// How a feature-grid coordinate is mapped to an input-pixel keypoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum KeypointMode {
    /// `loc * jump + start`: the center of the feature's receptive field.
    #[default]
    JumpCenter,
    /// `loc * rf + start`, the literal form that scales by the receptive-field
    /// extent. Kept for comparison; deep taps land mostly outside the image.
    RfScaled,
}

impl FromStr for KeypointMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "jump" => Ok(KeypointMode::JumpCenter),
            "eq4" => Ok(KeypointMode::RfScaled),
            other => Err(format!("unknown keypoint mode {other:?} (jump|eq4)")),
        }
    }
}

pub fn keypoint_location(state: &RFState, loc: (usize, usize), mode: KeypointMode) -> (f64, f64) {
    let pitch = match mode {
        KeypointMode::JumpCenter => state.jump,
        KeypointMode::RfScaled => state.rf,
    } as f64;
    (
        loc.0 as f64 * pitch + state.start,
        loc.1 as f64 * pitch + state.start,
    )
}

/// ResNet34-style encoder main path down to 1/8 resolution: stem conv, max
/// pool, three basic blocks at 1/4 and four basic blocks at 1/8. This is the
/// resolution of a LinkNet34 `Decoder3` output.
pub fn resnet34_decoder3_preset() -> Vec<LayerSpec> {
    let conv3 = LayerSpec::new(3, 1, 1);
    let mut layers = vec![LayerSpec::new(7, 2, 3), LayerSpec::new(3, 2, 1)];
    layers.extend(std::iter::repeat_n(conv3, 6));
    layers.push(LayerSpec::new(3, 2, 1));
    layers.extend(std::iter::repeat_n(conv3, 7));
    layers
}

pub const RESNET34_DECODER3_PRESET_NAME: &str = "resnet34-decoder3";

/// Resolves a `--layers` argument: either a preset name or an explicit stack.
pub fn resolve_stack(s: &str) -> Result<Vec<LayerSpec>, LayerParseError> {
    match s.trim() {
        RESNET34_DECODER3_PRESET_NAME | "preset" => Ok(resnet34_decoder3_preset()),
        other => parse_stack(other),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn st(jump: u64, rf: u64, start: f64) -> RFState {
        RFState { jump, rf, start }
    }

    #[test]
    fn stem_conv() {
        let s = propagate_layer(RFState::IDENTITY, &LayerSpec::new(7, 2, 3));
        assert_eq!(s, st(2, 7, 0.5));
    }

    #[test]
    fn identity_layer_is_noop() {
        let s = propagate_layer(RFState::IDENTITY, &LayerSpec::new(1, 1, 0));
        assert_eq!(s, RFState::IDENTITY);
    }

    #[test]
    fn stem_then_pool() {
        let s = propagate_layer(st(2, 7, 0.5), &LayerSpec::new(3, 2, 1));
        assert_eq!(s, st(4, 11, 0.5));
        assert_eq!(
            chain(&parse_stack("k7s2p3,k3s2p1").unwrap()),
            st(4, 11, 0.5)
        );
    }

    #[test]
    fn empty_chain_is_identity() {
        assert_eq!(chain(&[]), st(1, 1, 0.5));
    }

    #[test]
    fn even_kernel_keeps_half_pixel() {
        // (2-1)/2 - 0 = 0.5, not truncated to 0
        let s = propagate_layer(RFState::IDENTITY, &LayerSpec::new(2, 2, 0));
        assert_eq!(s, st(2, 2, 1.0));
    }

    #[test]
    fn preset_has_jump_eight() {
        let s = chain(&resnet34_decoder3_preset());
        assert_eq!(s.jump, 8);
        assert_eq!(s.start, 0.5);
        assert!(chain_stages(&resnet34_decoder3_preset())
            .iter()
            .all(|s| s.start == 0.5));
    }

    #[test]
    fn keypoints() {
        let s = st(8, 46, 0.5);
        assert_eq!(
            keypoint_location(&s, (10, 20), KeypointMode::JumpCenter),
            (80.5, 160.5)
        );
        assert_eq!(
            keypoint_location(&s, (2, 1), KeypointMode::RfScaled),
            (92.5, 46.5)
        );
        for mode in [KeypointMode::JumpCenter, KeypointMode::RfScaled] {
            assert_eq!(keypoint_location(&s, (0, 0), mode), (0.5, 0.5));
        }
    }

    #[test]
    fn parse_and_format() {
        let layers = parse_stack("k7s2p3, k3s2p1,k1s1p0").unwrap();
        assert_eq!(format_stack(&layers), "k7s2p3,k3s2p1,k1s1p0");
        assert_eq!(parse_stack("").unwrap(), vec![]);
        assert!(parse_stack("k3s0p1").is_err());
        assert!(parse_stack("k3p1").is_err());
        assert!(parse_stack("k3s1p1,").is_err());
        assert_eq!(
            resolve_stack("resnet34-decoder3").unwrap(),
            resnet34_decoder3_preset()
        );
    }

    #[test]
    fn output_len_matches_resnet() {
        assert_eq!(LayerSpec::new(7, 2, 3).output_len(256), 128);
        assert_eq!(LayerSpec::new(3, 2, 1).output_len(128), 64);
        assert_eq!(LayerSpec::new(3, 2, 1).output_len(7), 4);
        assert_eq!(LayerSpec::new(3, 1, 1).output_len(5), 5);
    }

    fn arb_layer() -> impl Strategy<Value = LayerSpec> {
        (
            prop::sample::select(vec![1u32, 3, 5, 7]),
            1u32..=2,
            0u32..=3,
        )
            .prop_map(|(k, s, p)| LayerSpec::new(k, s, p))
    }

    proptest! {
        #[test]
        fn fold_is_associative_over_concatenation(
            a in prop::collection::vec(arb_layer(), 0..6),
            b in prop::collection::vec(arb_layer(), 0..6),
        ) {
            let whole: Vec<_> = a.iter().chain(b.iter()).copied().collect();
            prop_assert_eq!(chain(&whole), chain_from(chain(&a), &b));
            prop_assert_eq!(chain(&whole).jump, chain(&a).jump * chain(&b).jump);
        }

        #[test]
        fn centered_padding_keeps_start(
            ks in prop::collection::vec((prop::sample::select(vec![1u32, 3, 5, 7]), 1u32..=3), 0..8)
        ) {
            let layers: Vec<_> = ks.iter().map(|&(k, s)| LayerSpec::new(k, s, (k - 1) / 2)).collect();
            prop_assert!(chain_stages(&layers).iter().all(|s| s.start == 0.5));
        }
    }
}
