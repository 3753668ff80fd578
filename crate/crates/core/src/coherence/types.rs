use crate::error::{Error, Result};
use crate::numeric::Tensor;

/// Backward displacement field, B×2×h×w. Channel 0 is dx, channel 1 is dy,
/// in pixels at h×w: content at `p` in the current frame comes from
/// `p + flow(p)` in the previous one.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowField(Tensor);

impl FlowField {
    pub fn new(t: Tensor) -> Result<Self> {
        let (_, c, _, _) = t.dims4()?;
        if c != 2 {
            return Err(Error::shape("FlowField", format!("channel axis must be 2, got {c}")));
        }
        Ok(Self(t))
    }

    pub fn zeros(batch: usize, h: usize, w: usize) -> Self {
        Self(Tensor::zeros(&[batch, 2, h, w]))
    }

    pub fn constant(batch: usize, h: usize, w: usize, dx: f64, dy: f64) -> Self {
        let plane = h * w;
        let mut d = Vec::with_capacity(batch * 2 * plane);
        for _ in 0..batch {
            d.extend(std::iter::repeat(dx).take(plane));
            d.extend(std::iter::repeat(dy).take(plane));
        }
        Self(Tensor::from_raw(vec![batch, 2, h, w], d))
    }

    pub fn tensor(&self) -> &Tensor {
        &self.0
    }

    pub fn into_tensor(self) -> Tensor {
        self.0
    }

    /// (height, width).
    pub fn dims(&self) -> (usize, usize) {
        (self.0.shape()[2], self.0.shape()[3])
    }

    /// (dx, dy) at batch item `n`, row `y`, column `x`.
    pub fn at(&self, n: usize, y: usize, x: usize) -> (f64, f64) {
        (self.0.at4(n, 0, y, x), self.0.at4(n, 1, y, x))
    }
}

/// Per-location weight in [0, 1], B×1×h×w. 1 marks traceable locations.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskMap(Tensor);

impl MaskMap {
    pub fn new(t: Tensor) -> Result<Self> {
        let (_, c, _, _) = t.dims4()?;
        if c != 1 {
            return Err(Error::shape("MaskMap", format!("channel axis must be 1, got {c}")));
        }
        if let Some(v) = t.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Contract(format!("mask value {v} outside [0, 1]")));
        }
        Ok(Self(t))
    }

    pub fn ones(batch: usize, h: usize, w: usize) -> Self {
        Self(Tensor::ones(&[batch, 1, h, w]))
    }

    pub fn zeros(batch: usize, h: usize, w: usize) -> Self {
        Self(Tensor::zeros(&[batch, 1, h, w]))
    }

    pub fn tensor(&self) -> &Tensor {
        &self.0
    }

    pub fn into_tensor(self) -> Tensor {
        self.0
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.0.shape()[2], self.0.shape()[3])
    }

    pub fn is_binary(&self) -> bool {
        self.0.data().iter().all(|&v| v == 0.0 || v == 1.0)
    }

    pub fn mean(&self) -> f64 {
        self.0.mean()
    }

    /// `1 - m`.
    pub fn complement(&self) -> Self {
        Self(self.0.map(|v| 1.0 - v))
    }
}

/// Weights of the coherence, occlusion and flow terms.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
    pub lambda: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            alpha: 1e5,
            beta: 2e4,
            lambda: 20.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (k, v) in [("alpha", self.alpha), ("beta", self.beta), ("lambda", self.lambda)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("loss weight {k} must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }
}
