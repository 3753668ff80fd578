use super::kernels::{self, ConvGeom, SampleGeom};
use super::Tensor;
use crate::error::{Error, Result};

/// Handle to a node recorded in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ElementwiseOp {
    Add,
    Sub,
    Mul,
    Abs,
    Relu,
    Sigmoid,
    Tanh,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReduceOp {
    Sum,
    Mean,
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Conv2d { stride: usize, pad: usize },
    ConvTranspose2d { stride: usize, pad: usize },
    GridSample,
    Resize,
    Add,
    Sub,
    Mul,
    Abs,
    Relu,
    Sigmoid,
    Tanh,
    Scale(f64),
    Shift,
    Reduce(ReduceOp),
    Concat { splits: Vec<usize> },
}

struct Node {
    op: Op,
    inputs: Vec<Var>,
    value: Tensor,
    requires_grad: bool,
}

/// Tape of primitive operations for reverse-mode differentiation.
///
/// Nodes are appended in evaluation order, so every node's inputs precede
/// it. Values are never mutated after recording.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    grads: Vec<Option<Tensor>>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(Op::Leaf, Vec::new(), value, false)
    }

    /// Trainable leaf; after [`backward`](Self::backward) its gradient is
    /// available through [`grad`](Self::grad).
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(Op::Leaf, Vec::new(), value, true)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    fn push(&mut self, op: Op, inputs: Vec<Var>, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            op,
            inputs,
            value,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn derived(&mut self, op: Op, inputs: Vec<Var>, value: Tensor) -> Var {
        let rg = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.push(op, inputs, value, rg)
    }

    fn conv_geom(&self, op: &'static str, x: Var, w: Var, b: Var, stride: usize, pad: usize, transposed: bool) -> Result<ConvGeom> {
        if stride == 0 {
            return Err(Error::Contract(format!("{op}: stride must be >= 1")));
        }
        let (n, c, h, wd) = self.value(x).dims4()?;
        let (w0, w1, kh, kw) = self.value(w).dims4().map_err(|_| {
            Error::shape(op, format!("weights must be rank 4, got {:?}", self.value(w).shape()))
        })?;
        if kh != kw {
            return Err(Error::shape(op, format!("kernel height {kh} != kernel width {kw}")));
        }
        let k = kh;
        // conv2d weights are (out, in, k, k); a transposed conv reuses the
        // same tensor, so its input channels are axis 0.
        let (in_c, out_c) = if transposed { (w0, w1) } else { (w1, w0) };
        if c != in_c {
            return Err(Error::shape(
                op,
                format!(
                    "input channel axis (dim 1) is {c} but weights expect {in_c} on axis {}",
                    if transposed { 0 } else { 1 }
                ),
            ));
        }
        let bshape = self.value(b).shape();
        if bshape != [out_c] {
            return Err(Error::shape(op, format!("bias shape {bshape:?} != [{out_c}]")));
        }
        if transposed {
            let oh = (h - 1) * stride + k;
            let ow = (wd - 1) * stride + k;
            if oh < 2 * pad + 1 || ow < 2 * pad + 1 {
                return Err(Error::shape(op, format!("padding {pad} too large for output {oh}x{ow}")));
            }
            Ok(ConvGeom {
                n,
                in_c: out_c,
                in_h: oh - 2 * pad,
                in_w: ow - 2 * pad,
                out_c: in_c,
                out_h: h,
                out_w: wd,
                k,
                stride,
                pad,
            })
        } else {
            if h + 2 * pad < k || wd + 2 * pad < k {
                return Err(Error::shape(
                    op,
                    format!("kernel {k} exceeds padded input height/width {}x{}", h + 2 * pad, wd + 2 * pad),
                ));
            }
            Ok(ConvGeom {
                n,
                in_c,
                in_h: h,
                in_w: wd,
                out_c,
                out_h: (h + 2 * pad - k) / stride + 1,
                out_w: (wd + 2 * pad - k) / stride + 1,
                k,
                stride,
                pad,
            })
        }
    }

    /// 2-D cross-correlation. `w` is (out_ch, in_ch, k, k), `b` is (out_ch).
    pub fn conv2d(&mut self, x: Var, w: Var, b: Var, stride: usize, pad: usize) -> Result<Var> {
        let g = self.conv_geom("conv2d", x, w, b, stride, pad, false)?;
        let out = kernels::conv2d_forward(&g, self.value(x).data(), self.value(w).data(), Some(self.value(b).data()));
        let t = Tensor::from_raw(vec![g.n, g.out_c, g.out_h, g.out_w], out);
        Ok(self.derived(Op::Conv2d { stride, pad }, vec![x, w, b], t))
    }

    /// Transposed convolution: the adjoint of [`conv2d`](Self::conv2d) with the
    /// same weight tensor `w` (in_ch, out_ch, k, k), plus bias.
    /// Output extent is `(H - 1) * stride - 2 * pad + k + out_pad`.
    pub fn conv2d_transposed(&mut self, x: Var, w: Var, b: Var, stride: usize, pad: usize, out_pad: usize) -> Result<Var> {
        let mut g = self.conv_geom("conv2d_transposed", x, w, b, stride, pad, true)?;
        if out_pad >= stride {
            return Err(Error::Contract(format!(
                "conv2d_transposed: output padding {out_pad} must be smaller than stride {stride}"
            )));
        }
        g.in_h += out_pad;
        g.in_w += out_pad;
        let mut out = kernels::conv2d_adjoint_input(&g, self.value(x).data(), self.value(w).data());
        let plane = g.in_h * g.in_w;
        let bias = self.value(b).data();
        for n in 0..g.n {
            for (c, bv) in bias.iter().enumerate() {
                let base = (n * g.in_c + c) * plane;
                out[base..base + plane].iter_mut().for_each(|v| *v += bv);
            }
        }
        let t = Tensor::from_raw(vec![g.n, g.in_c, g.in_h, g.in_w], out);
        Ok(self.derived(Op::ConvTranspose2d { stride, pad }, vec![x, w, b], t))
    }

    /// Backward warp: `out(p) = bilinear(x, p + flow(p))`, border-clamped.
    /// `flow` is (batch, 2, H, W) with channel 0 = dx and channel 1 = dy.
    pub fn grid_sample(&mut self, x: Var, flow: Var) -> Result<Var> {
        let (n, c, h, w) = self.value(x).dims4()?;
        let (fn_, fc, fh, fw) = self.value(flow).dims4()?;
        if fc != 2 {
            return Err(Error::shape("grid_sample", format!("flow channel axis must be 2, got {fc}")));
        }
        if (fh, fw) != (h, w) {
            return Err(Error::shape(
                "grid_sample",
                format!("flow spatial axes {fh}x{fw} != input spatial axes {h}x{w}"),
            ));
        }
        if fn_ != n {
            return Err(Error::shape("grid_sample", format!("flow batch axis {fn_} != input batch {n}")));
        }
        let g = SampleGeom { n, c, h, w };
        let out = kernels::grid_sample_forward(&g, self.value(x).data(), self.value(flow).data());
        let t = Tensor::from_raw(vec![n, c, h, w], out);
        Ok(self.derived(Op::GridSample, vec![x, flow], t))
    }

    /// Bilinear resize with half-pixel centres (align-corners = false).
    pub fn resize_bilinear(&mut self, x: Var, out_h: usize, out_w: usize) -> Result<Var> {
        if out_h == 0 || out_w == 0 {
            return Err(Error::Contract(format!("resize_bilinear: target {out_h}x{out_w} must be >= 1")));
        }
        let (n, c, h, w) = self.value(x).dims4()?;
        let out = kernels::resize_forward(n * c, h, w, out_h, out_w, self.value(x).data());
        let t = Tensor::from_raw(vec![n, c, out_h, out_w], out);
        Ok(self.derived(Op::Resize, vec![x], t))
    }

    pub fn elementwise(&mut self, op: ElementwiseOp, a: Var, b: Option<Var>) -> Result<Var> {
        use ElementwiseOp::*;
        match (op, b) {
            (Add | Sub | Mul, Some(b)) => self.binary(op, a, b),
            (Add | Sub | Mul, None) => Err(Error::Contract(format!("{op:?} needs two operands"))),
            (_, Some(_)) => Err(Error::Contract(format!("{op:?} takes one operand"))),
            (Abs, None) => Ok(self.unary(Op::Abs, a, f64::abs)),
            (Relu, None) => Ok(self.unary(Op::Relu, a, |v| v.max(0.0))),
            (Sigmoid, None) => Ok(self.unary(Op::Sigmoid, a, sigmoid)),
            (Tanh, None) => Ok(self.unary(Op::Tanh, a, f64::tanh)),
        }
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(ElementwiseOp::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(ElementwiseOp::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(ElementwiseOp::Mul, a, b)
    }

    pub fn abs(&mut self, a: Var) -> Var {
        self.unary(Op::Abs, a, f64::abs)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(Op::Relu, a, |v| v.max(0.0))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(Op::Sigmoid, a, sigmoid)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(Op::Tanh, a, f64::tanh)
    }

    /// `a * factor`.
    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        self.unary(Op::Scale(factor), a, |v| v * factor)
    }

    /// `a + offset`.
    pub fn shift(&mut self, a: Var, offset: f64) -> Var {
        self.unary(Op::Shift, a, |v| v + offset)
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.binary(ElementwiseOp::Mul, a, a).expect("same shape")
    }

    fn unary(&mut self, op: Op, a: Var, f: impl Fn(f64) -> f64) -> Var {
        let t = self.value(a).map(f);
        self.derived(op, vec![a], t)
    }

    fn binary(&mut self, op: ElementwiseOp, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        let out_shape = kernels::broadcast_shape(sa, sb).ok_or_else(|| {
            Error::shape(
                match op {
                    ElementwiseOp::Add => "add",
                    ElementwiseOp::Sub => "sub",
                    _ => "mul",
                },
                format!("cannot broadcast {sa:?} with {sb:?}"),
            )
        })?;
        let (da, db) = (self.value(a).data(), self.value(b).data());
        let out: Vec<f64> = if sa == sb {
            match op {
                ElementwiseOp::Add => da.iter().zip(db).map(|(x, y)| x + y).collect(),
                ElementwiseOp::Sub => da.iter().zip(db).map(|(x, y)| x - y).collect(),
                _ => da.iter().zip(db).map(|(x, y)| x * y).collect(),
            }
        } else {
            let ia = kernels::broadcast_index(sa, &out_shape);
            let ib = kernels::broadcast_index(sb, &out_shape);
            let f = match op {
                ElementwiseOp::Add => |x: f64, y: f64| x + y,
                ElementwiseOp::Sub => |x: f64, y: f64| x - y,
                _ => |x: f64, y: f64| x * y,
            };
            ia.iter().zip(&ib).map(|(&i, &j)| f(da[i], db[j])).collect()
        };
        let node_op = match op {
            ElementwiseOp::Add => Op::Add,
            ElementwiseOp::Sub => Op::Sub,
            _ => Op::Mul,
        };
        Ok(self.derived(node_op, vec![a, b], Tensor::from_raw(out_shape, out)))
    }

    pub fn reduce(&mut self, op: ReduceOp, a: Var) -> Var {
        let t = self.value(a);
        let s = t.sum();
        let v = match op {
            ReduceOp::Sum => s,
            ReduceOp::Mean => s / t.len() as f64,
        };
        self.derived(Op::Reduce(op), vec![a], Tensor::scalar(v))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        self.reduce(ReduceOp::Sum, a)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        self.reduce(ReduceOp::Mean, a)
    }

    /// Concatenates rank-4 tensors along the channel axis.
    pub fn concat_channels(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| Error::Contract("concat_channels: no inputs".into()))?;
        let (n, _, h, w) = self.value(first).dims4()?;
        let mut splits = Vec::with_capacity(parts.len());
        for &p in parts {
            let (pn, pc, ph, pw) = self.value(p).dims4()?;
            if (pn, ph, pw) != (n, h, w) {
                return Err(Error::shape(
                    "concat_channels",
                    format!("batch/spatial axes {:?} vs {:?}", self.value(p).shape(), self.value(first).shape()),
                ));
            }
            splits.push(pc);
        }
        let c_total: usize = splits.iter().sum();
        let plane = h * w;
        let mut out = Vec::with_capacity(n * c_total * plane);
        for b in 0..n {
            for (&p, &pc) in parts.iter().zip(&splits) {
                let d = self.value(p).data();
                out.extend_from_slice(&d[b * pc * plane..(b + 1) * pc * plane]);
            }
        }
        let t = Tensor::from_raw(vec![n, c_total, h, w], out);
        Ok(self.derived(Op::Concat { splits }, parts.to_vec(), t))
    }

    /// Reverse pass from a scalar `loss`. Gradients of every node that
    /// depends on a trainable leaf are retained and readable via
    /// [`grad`](Self::grad).
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(Error::Contract(format!(
                "backward: loss must be scalar, got shape {:?}",
                lv.shape()
            )));
        }
        if !lv.is_finite() {
            return Err(Error::NonFinite(format!("loss value {}", lv.data()[0])));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::from_raw(lv.shape().to_vec(), vec![1.0]));
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            let contribs = self.input_grads(i, &g)?;
            for (v, gi) in contribs {
                if !self.nodes[v.0].requires_grad {
                    continue;
                }
                match &mut grads[v.0] {
                    Some(acc) => {
                        *acc = acc.zip_map(&gi, |a, b| a + b)?;
                    }
                    slot @ None => *slot = Some(gi),
                }
            }
            grads[i] = Some(g);
        }
        self.grads = grads;
        Ok(())
    }

    fn input_grads(&self, i: usize, g: &Tensor) -> Result<Vec<(Var, Tensor)>> {
        let node = &self.nodes[i];
        let ins = &node.inputs;
        let val = |v: Var| &self.nodes[v.0].value;
        let needs = |v: Var| self.nodes[v.0].requires_grad;
        let mut out = Vec::with_capacity(ins.len());
        match &node.op {
            Op::Leaf => {}
            Op::Conv2d { stride, pad } => {
                let geom = self.conv_geom("conv2d", ins[0], ins[1], ins[2], *stride, *pad, false)?;
                if needs(ins[0]) {
                    let gi = kernels::conv2d_adjoint_input(&geom, g.data(), val(ins[1]).data());
                    out.push((ins[0], Tensor::from_raw(val(ins[0]).shape().to_vec(), gi)));
                }
                if needs(ins[1]) {
                    let gw = kernels::conv2d_weight_grad(&geom, val(ins[0]).data(), g.data());
                    out.push((ins[1], Tensor::from_raw(val(ins[1]).shape().to_vec(), gw)));
                }
                if needs(ins[2]) {
                    let gb = kernels::channel_sums(geom.n, geom.out_c, geom.out_h * geom.out_w, g.data());
                    out.push((ins[2], Tensor::from_raw(vec![geom.out_c], gb)));
                }
            }
            Op::ConvTranspose2d { stride, pad } => {
                // Forward was y = C^T x with C the conv2d map from y-space.
                let (n, c_big, h_big, w_big) = g.dims4()?;
                let (_, c_small, h_small, w_small) = val(ins[0]).dims4()?;
                let k = val(ins[1]).shape()[2];
                let geom = ConvGeom {
                    n,
                    in_c: c_big,
                    in_h: h_big,
                    in_w: w_big,
                    out_c: c_small,
                    out_h: h_small,
                    out_w: w_small,
                    k,
                    stride: *stride,
                    pad: *pad,
                };
                if needs(ins[0]) {
                    let gi = kernels::conv2d_forward(&geom, g.data(), val(ins[1]).data(), None);
                    out.push((ins[0], Tensor::from_raw(val(ins[0]).shape().to_vec(), gi)));
                }
                if needs(ins[1]) {
                    let gw = kernels::conv2d_weight_grad(&geom, g.data(), val(ins[0]).data());
                    out.push((ins[1], Tensor::from_raw(val(ins[1]).shape().to_vec(), gw)));
                }
                if needs(ins[2]) {
                    let gb = kernels::channel_sums(n, c_big, h_big * w_big, g.data());
                    out.push((ins[2], Tensor::from_raw(vec![c_big], gb)));
                }
            }
            Op::GridSample => {
                let (n, c, h, w) = val(ins[0]).dims4()?;
                let geom = SampleGeom { n, c, h, w };
                let (gi, gf) = kernels::grid_sample_backward(&geom, val(ins[0]).data(), val(ins[1]).data(), g.data());
                if needs(ins[0]) {
                    out.push((ins[0], Tensor::from_raw(val(ins[0]).shape().to_vec(), gi)));
                }
                if needs(ins[1]) {
                    out.push((ins[1], Tensor::from_raw(val(ins[1]).shape().to_vec(), gf)));
                }
            }
            Op::Resize => {
                let (n, c, h, w) = val(ins[0]).dims4()?;
                let (_, _, oh, ow) = g.dims4()?;
                let gi = kernels::resize_backward(n * c, h, w, oh, ow, g.data());
                out.push((ins[0], Tensor::from_raw(vec![n, c, h, w], gi)));
            }
            Op::Add | Op::Sub | Op::Mul => {
                let (a, b) = (ins[0], ins[1]);
                let oshape = g.shape();
                let ia = kernels::broadcast_index(val(a).shape(), oshape);
                let ib = kernels::broadcast_index(val(b).shape(), oshape);
                let gd = g.data();
                let (ga, gb): (Vec<f64>, Vec<f64>) = match node.op {
                    Op::Add => (gd.to_vec(), gd.to_vec()),
                    Op::Sub => (gd.to_vec(), gd.iter().map(|v| -v).collect()),
                    _ => {
                        let (da, db) = (val(a).data(), val(b).data());
                        (
                            gd.iter().zip(&ib).map(|(gv, &j)| gv * db[j]).collect(),
                            gd.iter().zip(&ia).map(|(gv, &j)| gv * da[j]).collect(),
                        )
                    }
                };
                if needs(a) {
                    let r = kernels::reduce_to(val(a).shape(), &ia, &ga);
                    out.push((a, Tensor::from_raw(val(a).shape().to_vec(), r)));
                }
                if needs(b) {
                    let r = kernels::reduce_to(val(b).shape(), &ib, &gb);
                    out.push((b, Tensor::from_raw(val(b).shape().to_vec(), r)));
                }
            }
            Op::Abs | Op::Relu | Op::Sigmoid | Op::Tanh | Op::Scale(_) | Op::Shift => {
                let x = val(ins[0]);
                let y = &node.value;
                let d: Vec<f64> = match node.op {
                    // subgradient 0 at x == 0
                    Op::Abs => x.data().iter().map(|&v| if v > 0.0 { 1.0 } else if v < 0.0 { -1.0 } else { 0.0 }).collect(),
                    Op::Relu => x.data().iter().map(|&v| if v > 0.0 { 1.0 } else { 0.0 }).collect(),
                    Op::Sigmoid => y.data().iter().map(|&s| s * (1.0 - s)).collect(),
                    Op::Tanh => y.data().iter().map(|&t| 1.0 - t * t).collect(),
                    Op::Scale(f) => vec![f; x.len()],
                    _ => vec![1.0; x.len()],
                };
                let gi = g.data().iter().zip(&d).map(|(a, b)| a * b).collect();
                out.push((ins[0], Tensor::from_raw(x.shape().to_vec(), gi)));
            }
            Op::Reduce(op) => {
                let x = val(ins[0]);
                let gv = g.data()[0];
                let per = match op {
                    ReduceOp::Sum => gv,
                    ReduceOp::Mean => gv / x.len() as f64,
                };
                out.push((ins[0], Tensor::full(x.shape(), per)));
            }
            Op::Concat { splits } => {
                let (n, c_total, h, w) = g.dims4()?;
                let plane = h * w;
                let mut c_off = 0;
                for (&p, &pc) in ins.iter().zip(splits) {
                    if needs(p) {
                        let mut gi = Vec::with_capacity(n * pc * plane);
                        for b in 0..n {
                            let start = (b * c_total + c_off) * plane;
                            gi.extend_from_slice(&g.data()[start..start + pc * plane]);
                        }
                        out.push((p, Tensor::from_raw(vec![n, pc, h, w], gi)));
                    }
                    c_off += pc;
                }
            }
        }
        Ok(out)
    }
}

fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}
