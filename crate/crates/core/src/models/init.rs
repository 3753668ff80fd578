use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::numeric::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InitScheme {
    HeNormal,
    Zeros,
}

/// One convolution layer's parameter layout.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerShape {
    pub name: String,
    /// (out, in, k, k) for convolutions, (in, out, k, k) for transposed ones.
    pub weight: [usize; 4],
    pub fan_in: usize,
    /// Multiplier on the He standard deviation.
    pub gain: f64,
    pub transposed: bool,
    /// Stride of a transposed layer (1 for convolutions).
    pub stride: usize,
    /// Draw only a channel-mixing matrix and spread it with a separable
    /// triangle kernel, so the upsampling has no stride-periodic pattern.
    pub bilinear: bool,
}

impl LayerShape {
    pub fn conv(name: impl Into<String>, in_c: usize, out_c: usize, k: usize) -> Self {
        Self {
            name: name.into(),
            weight: [out_c, in_c, k, k],
            fan_in: in_c * k * k,
            gain: 1.0,
            transposed: false,
            stride: 1,
            bilinear: false,
        }
    }

    pub fn transposed(name: impl Into<String>, in_c: usize, out_c: usize, k: usize, stride: usize) -> Self {
        Self {
            name: name.into(),
            weight: [in_c, out_c, k, k],
            // each output sees roughly k²/stride² taps per input channel
            fan_in: (in_c * k * k / (stride * stride)).max(1),
            gain: 1.0,
            transposed: true,
            stride,
            bilinear: false,
        }
    }

    pub fn with_gain(mut self, gain: f64) -> Self {
        self.gain = gain;
        self
    }

    pub fn with_bilinear_kernel(mut self) -> Self {
        self.bilinear = true;
        self
    }

    /// Separable triangle taps `1 - |j - (k - 1)/2| / stride`; for k = 4,
    /// stride 2 this is (1/4, 3/4, 3/4, 1/4), i.e. bilinear 2× upsampling.
    fn triangle(&self) -> Vec<f64> {
        let k = self.weight[2];
        let c = (k as f64 - 1.0) / 2.0;
        (0..k)
            .map(|j| (1.0 - (j as f64 - c).abs() / self.stride as f64).max(0.0))
            .collect()
    }

    /// Output channels of the layer.
    pub fn bias_len(&self) -> usize {
        if self.transposed {
            self.weight[1]
        } else {
            self.weight[0]
        }
    }
}

/// Named parameter tensors in a fixed order: weight then bias per layer.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Params {
    pub names: Vec<String>,
    pub tensors: Vec<Tensor>,
}

impl Params {
    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn shapes(&self) -> Vec<Vec<usize>> {
        self.tensors.iter().map(|t| t.shape().to_vec()).collect()
    }
}

/// Deterministic initialization: weights drawn from N(0, gain² · 2/fan_in)
/// (or zeros), biases zero. Values are rounded to `f32` so parameters
/// survive the 32-bit weight archive unchanged.
pub fn init_weights(layers: &[LayerShape], seed: u64, scheme: InitScheme) -> Params {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut names = Vec::with_capacity(layers.len() * 2);
    let mut tensors = Vec::with_capacity(layers.len() * 2);
    for layer in layers {
        let n: usize = layer.weight.iter().product();
        let w = match scheme {
            InitScheme::Zeros => vec![0.0; n],
            InitScheme::HeNormal if layer.bilinear && layer.transposed => {
                let [ci, co, k, _] = layer.weight;
                let std = layer.gain * (2.0 / ci as f64).sqrt();
                let dist = Normal::new(0.0, std).expect("finite std");
                let tri = layer.triangle();
                let mut w = Vec::with_capacity(n);
                for _ in 0..ci * co {
                    let m = dist.sample(&mut rng);
                    for ky in 0..k {
                        for kx in 0..k {
                            w.push((m * tri[ky] * tri[kx]) as f32 as f64);
                        }
                    }
                }
                w
            }
            InitScheme::HeNormal => {
                let std = layer.gain * (2.0 / layer.fan_in as f64).sqrt();
                let dist = Normal::new(0.0, std).expect("finite std");
                (0..n).map(|_| dist.sample(&mut rng) as f32 as f64).collect()
            }
        };
        names.push(format!("{}.weight", layer.name));
        tensors.push(Tensor::from_raw(layer.weight.to_vec(), w));
        names.push(format!("{}.bias", layer.name));
        tensors.push(Tensor::zeros(&[layer.bias_len()]));
    }
    Params { names, tensors }
}
