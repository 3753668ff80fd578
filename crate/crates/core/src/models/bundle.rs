use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::numeric::{Graph, Tensor, Var};

use super::init::{init_weights, InitScheme, LayerShape, Params};
use super::nets;
use super::spec::{FlowNetSpec, MaskNetSpec, StyleNetSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Component {
    Style,
    Flow,
    Mask,
}

impl Component {
    pub const ALL: [Component; 3] = [Self::Style, Self::Flow, Self::Mask];

    pub fn name(self) -> &'static str {
        match self {
            Self::Style => "style",
            Self::Flow => "flow",
            Self::Mask => "mask",
        }
    }
}

impl fmt::Display for Component {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Component {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "style" => Ok(Self::Style),
            "flow" => Ok(Self::Flow),
            "mask" => Ok(Self::Mask),
            _ => Err(Error::Config(format!("unknown component {s:?}"))),
        }
    }
}

/// Which components are excluded from optimizer updates. The style
/// network is always frozen during coherence training; its flag is kept
/// so archives record it explicitly.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FreezeFlags {
    pub style: bool,
    pub flow: bool,
    pub mask: bool,
}

impl Default for FreezeFlags {
    fn default() -> Self {
        Self {
            style: true,
            flow: false,
            mask: false,
        }
    }
}

impl FreezeFlags {
    pub fn get(&self, c: Component) -> bool {
        match c {
            Component::Style => self.style,
            Component::Flow => self.flow,
            Component::Mask => self.mask,
        }
    }
}

/// Architecture descriptors, weights and freeze flags for all three
/// sub-networks.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelBundle {
    style_spec: StyleNetSpec,
    flow_spec: FlowNetSpec,
    mask_spec: MaskNetSpec,
    style: Params,
    flow: Params,
    mask: Params,
    pub freeze: FreezeFlags,
}

/// Graph leaves for every parameter of a bundle.
#[derive(Clone, Debug)]
pub struct BoundBundle {
    pub style: Vec<Var>,
    pub flow: Vec<Var>,
    pub mask: Vec<Var>,
}

impl BoundBundle {
    pub fn get(&self, c: Component) -> &[Var] {
        match c {
            Component::Style => &self.style,
            Component::Flow => &self.flow,
            Component::Mask => &self.mask,
        }
    }
}

fn check_params(c: Component, layers: &[LayerShape], p: &Params) -> Result<()> {
    if p.len() != 2 * layers.len() {
        return Err(Error::SpecMismatch(format!(
            "{c}: spec has {} layers ({} tensors) but {} tensors were given",
            layers.len(),
            2 * layers.len(),
            p.len()
        )));
    }
    for (i, l) in layers.iter().enumerate() {
        let checks = [
            (format!("{}.weight", l.name), l.weight.to_vec()),
            (format!("{}.bias", l.name), vec![l.bias_len()]),
        ];
        for (j, (name, shape)) in checks.into_iter().enumerate() {
            let k = 2 * i + j;
            if p.names[k] != name || p.tensors[k].shape() != shape.as_slice() {
                return Err(Error::SpecMismatch(format!(
                    "{c}: tensor {k} is {} {:?}, spec expects {name} {shape:?}",
                    p.names[k],
                    p.tensors[k].shape()
                )));
            }
        }
    }
    Ok(())
}

impl ModelBundle {
    /// Fresh bundle; each component draws from its own stream derived
    /// from `seed`.
    pub fn init(style: StyleNetSpec, flow: FlowNetSpec, mask: MaskNetSpec, seed: u64, scheme: InitScheme) -> Result<Self> {
        style.validate()?;
        flow.validate()?;
        mask.validate()?;
        let sp = init_weights(&style.layers(), seed, scheme);
        let fp = init_weights(&flow.layers(), seed.wrapping_add(1), scheme);
        let mp = init_weights(&mask.layers(style.feature_channels()), seed.wrapping_add(2), scheme);
        Ok(Self {
            style_spec: style,
            flow_spec: flow,
            mask_spec: mask,
            style: sp,
            flow: fp,
            mask: mp,
            freeze: FreezeFlags::default(),
        })
    }

    /// Default architecture at the given split layer.
    pub fn with_defaults(split: super::SplitLayer, seed: u64) -> Result<Self> {
        let style = StyleNetSpec { split, ..StyleNetSpec::default() };
        Self::init(style, FlowNetSpec::default(), MaskNetSpec::default(), seed, InitScheme::HeNormal)
    }

    /// Assembles a bundle from existing weights, checking every tensor
    /// against the specs.
    pub fn from_parts(
        style_spec: StyleNetSpec,
        flow_spec: FlowNetSpec,
        mask_spec: MaskNetSpec,
        style: Params,
        flow: Params,
        mask: Params,
        freeze: FreezeFlags,
    ) -> Result<Self> {
        style_spec.validate()?;
        flow_spec.validate()?;
        mask_spec.validate()?;
        check_params(Component::Style, &style_spec.layers(), &style)?;
        check_params(Component::Flow, &flow_spec.layers(), &flow)?;
        check_params(Component::Mask, &mask_spec.layers(style_spec.feature_channels()), &mask)?;
        Ok(Self {
            style_spec,
            flow_spec,
            mask_spec,
            style,
            flow,
            mask,
            freeze,
        })
    }

    /// Style network from `style_src`, flow and mask networks from
    /// `coherence_src`. The coherence networks are tied to the split layer
    /// they were trained on, so both bundles must agree on it.
    pub fn with_components(style_src: &ModelBundle, coherence_src: &ModelBundle) -> Result<Self> {
        let a = &style_src.style_spec;
        let b = &coherence_src.style_spec;
        if a.split != b.split || a.feature_channels() != b.feature_channels() {
            return Err(Error::SpecMismatch(format!(
                "style split {} with {} channels cannot host coherence nets trained at {} with {} channels",
                a.split,
                a.feature_channels(),
                b.split,
                b.feature_channels()
            )));
        }
        Self::from_parts(
            a.clone(),
            coherence_src.flow_spec.clone(),
            coherence_src.mask_spec.clone(),
            style_src.style.clone(),
            coherence_src.flow.clone(),
            coherence_src.mask.clone(),
            FreezeFlags {
                style: true,
                ..coherence_src.freeze
            },
        )
    }

    pub fn style_spec(&self) -> &StyleNetSpec {
        &self.style_spec
    }

    pub fn flow_spec(&self) -> &FlowNetSpec {
        &self.flow_spec
    }

    pub fn mask_spec(&self) -> &MaskNetSpec {
        &self.mask_spec
    }

    pub fn params(&self, c: Component) -> &Params {
        match c {
            Component::Style => &self.style,
            Component::Flow => &self.flow,
            Component::Mask => &self.mask,
        }
    }

    pub(crate) fn params_mut(&mut self, c: Component) -> &mut Params {
        match c {
            Component::Style => &mut self.style,
            Component::Flow => &mut self.flow,
            Component::Mask => &mut self.mask,
        }
    }

    /// Binds every parameter as a graph leaf. Components listed in
    /// `trainable` become gradient-carrying leaves, the rest constants.
    pub fn bind(&self, g: &mut Graph, trainable: &[Component]) -> BoundBundle {
        let mut bind = |c: Component| -> Vec<Var> {
            let tr = trainable.contains(&c);
            self.params(c)
                .tensors
                .iter()
                .map(|t| if tr { g.param(t.clone()) } else { g.constant(t.clone()) })
                .collect()
        };
        BoundBundle {
            style: bind(Component::Style),
            flow: bind(Component::Flow),
            mask: bind(Component::Mask),
        }
    }

    /// Components that an optimizer may update under the current flags.
    pub fn trainable(&self) -> Vec<Component> {
        [Component::Flow, Component::Mask]
            .into_iter()
            .filter(|&c| !self.freeze.get(c))
            .collect()
    }

    pub fn encode_var(&self, g: &mut Graph, b: &BoundBundle, frame: Var) -> Result<Var> {
        nets::style_encode(g, &self.style_spec, &b.style, frame)
    }

    pub fn decode_var(&self, g: &mut Graph, b: &BoundBundle, features: Var) -> Result<Var> {
        nets::style_decode(g, &self.style_spec, &b.style, features)
    }

    pub fn flow_var(&self, g: &mut Graph, b: &BoundBundle, prev: Var, cur: Var) -> Result<Var> {
        nets::flow_predict(g, &self.flow_spec, &b.flow, prev, cur)
    }

    pub fn mask_var(&self, g: &mut Graph, b: &BoundBundle, delta: Var) -> Result<Var> {
        nets::mask_predict(g, &self.mask_spec, &b.mask, delta, self.style_spec.feature_channels())
    }

    fn run(&self, f: impl FnOnce(&Self, &mut Graph, &BoundBundle) -> Result<Var>) -> Result<Tensor> {
        let mut g = Graph::new();
        let b = self.bind(&mut g, &[]);
        let out = f(self, &mut g, &b)?;
        Ok(g.value(out).clone())
    }
}

/// Frame (B×3×H×W, values in [0, 1]) to split-layer features.
pub fn style_encode(bundle: &ModelBundle, frame: &Tensor) -> Result<Tensor> {
    bundle.run(|m, g, b| {
        let x = g.constant(frame.clone());
        m.encode_var(g, b, x)
    })
}

/// Split-layer features to a B×3×H×W image in [0, 1].
pub fn style_decode(bundle: &ModelBundle, features: &Tensor) -> Result<Tensor> {
    bundle.run(|m, g, b| {
        let x = g.constant(features.clone());
        m.decode_var(g, b, x)
    })
}

/// Backward flow from `cur` to `prev` at the flow net's native resolution.
pub fn flow_predict(bundle: &ModelBundle, prev: &Tensor, cur: &Tensor) -> Result<Tensor> {
    bundle.run(|m, g, b| {
        let p = g.constant(prev.clone());
        let c = g.constant(cur.clone());
        m.flow_var(g, b, p, c)
    })
}

/// B×1×h×w mask in (0, 1) from a feature difference `delta`.
pub fn mask_predict(bundle: &ModelBundle, delta: &Tensor) -> Result<Tensor> {
    bundle.run(|m, g, b| {
        let d = g.constant(delta.clone());
        m.mask_var(g, b, d)
    })
}
