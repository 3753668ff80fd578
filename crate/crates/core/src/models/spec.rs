use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

use super::init::LayerShape;

/// Where the style network is split to extract and reinject features.
/// Labels follow the feature resolution relative to the input frame and
/// whether the layer sits in the encoder (E) or decoder (D).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub enum SplitLayer {
    R1E,
    R1_2E,
    #[default]
    R1_4E,
    R1_2D,
    R1D,
}

impl SplitLayer {
    pub const ALL: [SplitLayer; 5] = [Self::R1E, Self::R1_2E, Self::R1_4E, Self::R1_2D, Self::R1D];

    /// Feature resolution divisor relative to the input frame.
    pub fn downscale(self) -> usize {
        match self {
            Self::R1E | Self::R1D => 1,
            Self::R1_2E | Self::R1_2D => 2,
            Self::R1_4E => 4,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::R1E => "r1(E)",
            Self::R1_2E => "r1/2(E)",
            Self::R1_4E => "r1/4(E)",
            Self::R1_2D => "r1/2(D)",
            Self::R1D => "r1(D)",
        }
    }
}

impl fmt::Display for SplitLayer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for SplitLayer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm: String = s
            .chars()
            .filter(|c| !matches!(c, '(' | ')' | '_' | '-' | ' '))
            .collect::<String>()
            .to_ascii_lowercase();
        Ok(match norm.as_str() {
            "r1e" => Self::R1E,
            "r1/2e" | "r12e" => Self::R1_2E,
            "r1/4e" | "r14e" => Self::R1_4E,
            "r1/2d" | "r12d" => Self::R1_2D,
            "r1d" => Self::R1D,
            _ => {
                return Err(Error::Config(format!(
                    "unknown split layer {s:?} (expected one of r1(E), r1/2(E), r1/4(E), r1/2(D), r1(D))"
                )))
            }
        })
    }
}

/// Encoder/decoder style network.
///
/// Stages, in order: full-resolution stem conv, two stride-2 convs,
/// `res_blocks` residual blocks, two stride-2 transposed convs, and a
/// full-resolution output conv. The split layer selects the stage boundary
/// where features are handed to the coherence sub-networks.
#[derive(Clone, Debug, PartialEq)]
pub struct StyleNetSpec {
    pub stem_width: usize,
    pub widths: [usize; 2],
    pub res_blocks: usize,
    pub split: SplitLayer,
}

impl Default for StyleNetSpec {
    fn default() -> Self {
        Self {
            stem_width: 8,
            widths: [16, 32],
            res_blocks: 3,
            split: SplitLayer::R1_4E,
        }
    }
}

/// One stage of the style network.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StyleStage {
    /// 3×3 conv + ReLU.
    Conv { stride: usize },
    /// x + conv(relu(conv(x))), followed by nothing.
    Residual,
    /// 4×4 stride-2 transposed conv + ReLU.
    Up,
    /// 3×3 conv followed by (tanh + 1) / 2.
    Output,
}

impl StyleNetSpec {
    pub const TOTAL_STRIDE: usize = 4;

    pub fn stages(&self) -> Vec<StyleStage> {
        let mut s = vec![
            StyleStage::Conv { stride: 1 },
            StyleStage::Conv { stride: 2 },
            StyleStage::Conv { stride: 2 },
        ];
        s.extend(std::iter::repeat(StyleStage::Residual).take(self.res_blocks));
        s.extend([StyleStage::Up, StyleStage::Up, StyleStage::Output]);
        s
    }

    /// Index of the first decoder-side stage for the configured split.
    pub fn split_index(&self) -> usize {
        match self.split {
            SplitLayer::R1E => 1,
            SplitLayer::R1_2E => 2,
            SplitLayer::R1_4E => 3,
            SplitLayer::R1_2D => 3 + self.res_blocks + 1,
            SplitLayer::R1D => 3 + self.res_blocks + 2,
        }
    }

    /// Channel count of the features at the split layer.
    pub fn feature_channels(&self) -> usize {
        match self.split {
            SplitLayer::R1E | SplitLayer::R1D => self.stem_width,
            SplitLayer::R1_2E | SplitLayer::R1_2D => self.widths[0],
            SplitLayer::R1_4E => self.widths[1],
        }
    }

    /// Parameter layout; residual blocks contribute two conv layers each.
    pub fn layers(&self) -> Vec<LayerShape> {
        let [w1, w2] = self.widths;
        let c0 = self.stem_width;
        let mut l = vec![
            LayerShape::conv("stem", 3, c0, 3),
            LayerShape::conv("down1", c0, w1, 3),
            LayerShape::conv("down2", w1, w2, 3),
        ];
        for i in 0..self.res_blocks {
            l.push(LayerShape::conv(format!("res{i}.a"), w2, w2, 3));
            // keeps the residual stack from inflating activations at init
            l.push(LayerShape::conv(format!("res{i}.b"), w2, w2, 3).with_gain(0.5));
        }
        // untrained transposed convs paint a stride-periodic checkerboard
        // that no warp can follow; bilinear taps keep the frozen net smooth
        l.push(LayerShape::transposed("up1", w2, w1, 4, 2).with_bilinear_kernel());
        l.push(LayerShape::transposed("up2", w1, c0, 4, 2).with_bilinear_kernel());
        l.push(LayerShape::conv("out", c0, 3, 3));
        l
    }

    pub fn validate(&self) -> Result<()> {
        if self.stem_width == 0 || self.widths.contains(&0) {
            return Err(Error::Config("style widths must be positive".into()));
        }
        Ok(())
    }
}

/// One contracting stage of the flow network: 3×3 conv + ReLU.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FlowStage {
    pub width: usize,
    pub stride: usize,
}

/// Miniature FlowNet-Simple: a contracting conv stack over the two stacked
/// frames, one transposed-conv expansion joined with the matching
/// contracting feature map, and a 3×3 conv predicting (dx, dy).
#[derive(Clone, Debug, PartialEq)]
pub struct FlowNetSpec {
    pub contract: Vec<FlowStage>,
    pub expand_width: usize,
    /// Multiplier applied to the raw network output.
    pub flow_scale: f64,
}

impl Default for FlowNetSpec {
    fn default() -> Self {
        Self {
            contract: vec![
                FlowStage { width: 16, stride: 2 },
                FlowStage { width: 32, stride: 2 },
                FlowStage { width: 32, stride: 2 },
                FlowStage { width: 32, stride: 1 },
            ],
            expand_width: 16,
            flow_scale: 1.0,
        }
    }
}

impl FlowNetSpec {
    /// Total stride of the contracting stack.
    pub fn contract_stride(&self) -> usize {
        self.contract.iter().map(|s| s.stride).product()
    }

    /// Predicted flow resolution divisor (one expansion halves the stride).
    pub fn output_stride(&self) -> usize {
        self.contract_stride() / 2
    }

    /// Index of the contracting stage whose output joins the expansion.
    pub fn skip_index(&self) -> Option<usize> {
        let target = self.output_stride();
        let mut acc = 1;
        let mut found = None;
        for (i, s) in self.contract.iter().enumerate() {
            acc *= s.stride;
            if acc == target {
                found = Some(i);
            }
        }
        found
    }

    pub fn layers(&self) -> Vec<LayerShape> {
        let mut l = Vec::new();
        let mut c = 6;
        for (i, s) in self.contract.iter().enumerate() {
            l.push(LayerShape::conv(format!("contract{i}"), c, s.width, 3));
            c = s.width;
        }
        l.push(LayerShape::transposed("expand", c, self.expand_width, 4, 2));
        let skip = self.skip_index().map_or(0, |i| self.contract[i].width);
        // small initial flows keep early warps near the identity
        l.push(LayerShape::conv("predict", self.expand_width + skip, 2, 3).with_gain(0.1));
        l
    }

    pub fn validate(&self) -> Result<()> {
        if self.contract.is_empty() || self.contract.iter().any(|s| s.width == 0 || s.stride == 0) {
            return Err(Error::Config("flow contracting stages need positive width and stride".into()));
        }
        if self.contract_stride() < 2 || self.skip_index().is_none() {
            return Err(Error::Config(format!(
                "flow net: no contracting stage at stride {} to join the expansion",
                self.output_stride()
            )));
        }
        if !self.flow_scale.is_finite() || self.expand_width == 0 {
            return Err(Error::Config("flow net: invalid expand width or flow scale".into()));
        }
        Ok(())
    }
}

/// Three stride-1 convolutions ending in a single sigmoid channel.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskNetSpec {
    pub widths: [usize; 3],
    pub kernel: usize,
}

impl Default for MaskNetSpec {
    fn default() -> Self {
        Self {
            widths: [16, 16, 1],
            kernel: 3,
        }
    }
}

impl MaskNetSpec {
    pub fn layers(&self, in_channels: usize) -> Vec<LayerShape> {
        let [a, b, c] = self.widths;
        vec![
            LayerShape::conv("mask0", in_channels, a, self.kernel),
            LayerShape::conv("mask1", a, b, self.kernel),
            LayerShape::conv("mask2", b, c, self.kernel),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        if self.widths[2] != 1 {
            return Err(Error::Config("mask net must end in exactly one channel".into()));
        }
        if self.kernel % 2 == 0 || self.widths.contains(&0) {
            return Err(Error::Config("mask net needs odd kernel and positive widths".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_labels_round_trip() {
        for s in SplitLayer::ALL {
            assert_eq!(s.label().parse::<SplitLayer>().unwrap(), s);
        }
        assert_eq!("r1_4e".parse::<SplitLayer>().unwrap(), SplitLayer::R1_4E);
        assert!("r1/8(E)".parse::<SplitLayer>().is_err());
    }

    #[test]
    fn encoder_and_decoder_scales_mirror() {
        let spec = StyleNetSpec::default();
        let stages = spec.stages();
        let down: usize = stages
            .iter()
            .filter_map(|s| match s {
                StyleStage::Conv { stride } => Some(*stride),
                _ => None,
            })
            .product();
        let ups = stages.iter().filter(|s| **s == StyleStage::Up).count();
        assert_eq!(down, 1 << ups);
        assert_eq!(down, StyleNetSpec::TOTAL_STRIDE);
        for split in SplitLayer::ALL {
            let s = StyleNetSpec { split, ..spec.clone() };
            assert!(s.split_index() > 0 && s.split_index() < stages.len());
        }
    }

    #[test]
    fn default_flow_predicts_at_quarter_resolution() {
        let f = FlowNetSpec::default();
        assert_eq!(f.contract_stride(), 8);
        assert_eq!(f.output_stride(), 4);
        assert_eq!(f.skip_index(), Some(1));
        f.validate().unwrap();
    }

    #[test]
    fn mask_spec_requires_single_channel() {
        assert!(MaskNetSpec { widths: [8, 8, 2], kernel: 3 }.validate().is_err());
        MaskNetSpec::default().validate().unwrap();
    }
}
