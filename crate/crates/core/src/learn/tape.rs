//! Reverse-mode differentiation over a linear record of tensor operations.
//!
//! Every op stores its output value when it is recorded. `backward` walks
//! the record once in reverse and returns gradients for the parameter
//! leaves only; constant inputs and the fixed integration operator never
//! receive gradients.

use crate::error::{Error, Result};
use crate::features::IntegrationOperator;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::shape(format!("{shape:?} = {n} values"), data.len()));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn scalar(&self) -> f64 {
        self.data[0]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Debug, Clone)]
enum Op {
    Input,
    Param(usize),
    /// Same-size 2-D convolution. Input `[cin, T, B]`, kernel
    /// `[cout, cin, kt, kb]` (odd sizes, symmetric zero padding), bias
    /// `[cout]`.
    Conv2d { input: NodeId, kernel: NodeId, bias: NodeId },
    Relu(NodeId),
    /// Per-frame affine map. Input `[C, T, B]`, weight `[O, C·B]`, bias
    /// `[O]`, output `[T, O]`.
    FrameAffine { input: NodeId, weight: NodeId, bias: NodeId },
    Add(NodeId, NodeId),
    Scale(NodeId, f64),
    Exp(NodeId),
    Log(NodeId),
    /// Column-wise fixed integration, `[T, B] -> [F, B]`.
    Integrate { input: NodeId, op: IntegrationOperator },
    /// Mean squared error over the first `rows` rows against a constant.
    MaskedMse { pred: NodeId, target: Vec<f64>, rows: usize },
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    value: Tensor,
}

/// Gradients for every registered parameter, indexed like the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients(pub Vec<Tensor>);

#[derive(Debug, Clone, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    param_shapes: Vec<Option<Vec<usize>>>,
    consumed: bool,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Op) -> Result<NodeId> {
        let value = eval(&op, &self.nodes, None)?;
        self.nodes.push(Node { op, value });
        Ok(NodeId(self.nodes.len() - 1))
    }

    pub fn input(&mut self, value: Tensor) -> NodeId {
        self.nodes.push(Node { op: Op::Input, value });
        NodeId(self.nodes.len() - 1)
    }

    /// Registers parameter `index` as a differentiable leaf.
    pub fn param(&mut self, index: usize, value: Tensor) -> NodeId {
        if self.param_shapes.len() <= index {
            self.param_shapes.resize(index + 1, None);
        }
        self.param_shapes[index] = Some(value.shape.clone());
        self.nodes.push(Node {
            op: Op::Param(index),
            value,
        });
        NodeId(self.nodes.len() - 1)
    }

    pub fn conv2d(&mut self, input: NodeId, kernel: NodeId, bias: NodeId) -> Result<NodeId> {
        self.push(Op::Conv2d { input, kernel, bias })
    }

    pub fn relu(&mut self, x: NodeId) -> Result<NodeId> {
        self.push(Op::Relu(x))
    }

    pub fn frame_affine(&mut self, input: NodeId, weight: NodeId, bias: NodeId) -> Result<NodeId> {
        self.push(Op::FrameAffine { input, weight, bias })
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.push(Op::Add(a, b))
    }

    pub fn scale(&mut self, x: NodeId, c: f64) -> Result<NodeId> {
        self.push(Op::Scale(x, c))
    }

    pub fn exp(&mut self, x: NodeId) -> Result<NodeId> {
        self.push(Op::Exp(x))
    }

    pub fn log(&mut self, x: NodeId) -> Result<NodeId> {
        self.push(Op::Log(x))
    }

    pub fn integrate(&mut self, input: NodeId, op: IntegrationOperator) -> Result<NodeId> {
        self.push(Op::Integrate { input, op })
    }

    pub fn masked_mse(&mut self, pred: NodeId, target: Vec<f64>, rows: usize) -> Result<NodeId> {
        self.push(Op::MaskedMse { pred, target, rows })
    }

    /// Recomputes every node from the recorded leaves and returns the value
    /// of `output`.
    pub fn replay(&self, output: NodeId) -> Result<Tensor> {
        let mut values: Vec<Tensor> = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let v = match node.op {
                Op::Input | Op::Param(_) => node.value.clone(),
                _ => eval(&node.op, &self.nodes, Some(&values))?,
            };
            values.push(v);
        }
        Ok(values.swap_remove(output.0))
    }

    /// Gradients of the scalar `loss` w.r.t. every registered parameter.
    /// A tape can be differentiated once.
    pub fn backward(&mut self, loss: NodeId) -> Result<Gradients> {
        if self.consumed {
            return Err(Error::TapeConsumed);
        }
        self.consumed = true;
        if self.value(loss).len() != 1 {
            return Err(Error::shape("scalar loss", format!("{:?}", self.value(loss).shape)));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);
        let mut out: Vec<Tensor> = self
            .param_shapes
            .iter()
            .map(|s| Tensor::zeros(s.as_deref().unwrap_or(&[0])))
            .collect();

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Input => {}
                Op::Param(p) => {
                    for (o, v) in out[*p].data.iter_mut().zip(&g) {
                        *o += v;
                    }
                }
                Op::Conv2d { input, kernel, bias } => {
                    let (gi, gk, gb) = conv2d_backward(
                        self.value(*input),
                        self.value(*kernel),
                        &g,
                    );
                    accumulate(&mut grads, *input, gi);
                    accumulate(&mut grads, *kernel, gk);
                    accumulate(&mut grads, *bias, gb);
                }
                Op::Relu(x) => {
                    let gx = g
                        .iter()
                        .zip(&self.value(*x).data)
                        .map(|(g, &v)| if v > 0.0 { *g } else { 0.0 })
                        .collect();
                    accumulate(&mut grads, *x, gx);
                }
                Op::FrameAffine { input, weight, bias } => {
                    let (gi, gw, gb) =
                        frame_affine_backward(self.value(*input), self.value(*weight), &g);
                    accumulate(&mut grads, *input, gi);
                    accumulate(&mut grads, *weight, gw);
                    accumulate(&mut grads, *bias, gb);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, g);
                }
                Op::Scale(x, c) => accumulate(&mut grads, *x, g.iter().map(|v| v * c).collect()),
                Op::Exp(x) => {
                    let gx = g.iter().zip(&node.value.data).map(|(g, y)| g * y).collect();
                    accumulate(&mut grads, *x, gx);
                }
                Op::Log(x) => {
                    let gx = g.iter().zip(&self.value(*x).data).map(|(g, v)| g / v).collect();
                    accumulate(&mut grads, *x, gx);
                }
                Op::Integrate { input, op } => {
                    let shape = &self.value(*input).shape;
                    let (t, b) = (shape[0], shape[1]);
                    let frames = op.frames();
                    let mut gx = vec![0.0; t * b];
                    for q in 0..b {
                        let col: Vec<f64> = (0..frames).map(|f| g[f * b + q]).collect();
                        for (r, v) in op.apply_transpose(&col).into_iter().enumerate() {
                            gx[r * b + q] = v;
                        }
                    }
                    accumulate(&mut grads, *input, gx);
                }
                Op::MaskedMse { pred, target, rows } => {
                    let p = self.value(*pred);
                    let cols = p.shape[1];
                    let n = (rows * cols) as f64;
                    let mut gx = vec![0.0; p.len()];
                    for j in 0..rows * cols {
                        gx[j] = g[0] * 2.0 * (p.data[j] - target[j]) / n;
                    }
                    accumulate(&mut grads, *pred, gx);
                }
            }
        }
        Ok(Gradients(out))
    }
}

fn accumulate(grads: &mut [Option<Vec<f64>>], id: NodeId, g: Vec<f64>) {
    match &mut grads[id.0] {
        Some(acc) => acc.iter_mut().zip(g).for_each(|(a, v)| *a += v),
        slot => *slot = Some(g),
    }
}

fn eval(op: &Op, nodes: &[Node], replayed: Option<&[Tensor]>) -> Result<Tensor> {
    let get = |id: NodeId| -> &Tensor {
        match replayed {
            Some(v) => &v[id.0],
            None => &nodes[id.0].value,
        }
    };
    match op {
        Op::Input | Op::Param(_) => unreachable!("leaves are never evaluated"),
        Op::Conv2d { input, kernel, bias } => conv2d_forward(get(*input), get(*kernel), get(*bias)),
        Op::Relu(x) => Ok(map(get(*x), |v| v.max(0.0))),
        Op::FrameAffine { input, weight, bias } => {
            frame_affine_forward(get(*input), get(*weight), get(*bias))
        }
        Op::Add(a, b) => {
            let (a, b) = (get(*a), get(*b));
            if a.shape != b.shape {
                return Err(Error::shape(format!("{:?}", a.shape), format!("{:?}", b.shape)));
            }
            Ok(Tensor {
                shape: a.shape.clone(),
                data: a.data.iter().zip(&b.data).map(|(x, y)| x + y).collect(),
            })
        }
        Op::Scale(x, c) => Ok(map(get(*x), |v| v * c)),
        Op::Exp(x) => Ok(map(get(*x), f64::exp)),
        Op::Log(x) => Ok(map(get(*x), f64::ln)),
        Op::Integrate { input, op } => {
            let x = get(*input);
            if x.shape.len() != 2 || x.shape[0] != op.input_len() {
                return Err(Error::shape(
                    format!("[{}, B]", op.input_len()),
                    format!("{:?}", x.shape),
                ));
            }
            let (t, b) = (x.shape[0], x.shape[1]);
            let frames = op.frames();
            let mut out = vec![0.0; frames * b];
            for q in 0..b {
                let col: Vec<f64> = (0..t).map(|r| x.data[r * b + q]).collect();
                for (f, v) in op.apply(&col).into_iter().enumerate() {
                    out[f * b + q] = v;
                }
            }
            Tensor::new(vec![frames, b], out)
        }
        Op::MaskedMse { pred, target, rows } => {
            let p = get(*pred);
            if p.shape.len() != 2 || p.len() != target.len() || *rows > p.shape[0] || *rows == 0 {
                return Err(Error::shape(
                    format!("2-D prediction matching {} targets, 0 < rows <= T", target.len()),
                    format!("{:?} with rows={rows}", p.shape),
                ));
            }
            let n = rows * p.shape[1];
            let sum: f64 = p.data[..n]
                .iter()
                .zip(&target[..n])
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            Ok(Tensor {
                shape: vec![1],
                data: vec![sum / n as f64],
            })
        }
    }
}

fn map(x: &Tensor, f: impl Fn(f64) -> f64) -> Tensor {
    Tensor {
        shape: x.shape.clone(),
        data: x.data.iter().map(|&v| f(v)).collect(),
    }
}

struct ConvDims {
    cin: usize,
    cout: usize,
    t: usize,
    b: usize,
    kt: usize,
    kb: usize,
}

fn conv_dims(input: &Tensor, kernel: &Tensor) -> Result<ConvDims> {
    if input.shape.len() != 3 || kernel.shape.len() != 4 || kernel.shape[1] != input.shape[0] {
        return Err(Error::shape(
            "input [cin, T, B] with kernel [cout, cin, kt, kb]",
            format!("{:?} / {:?}", input.shape, kernel.shape),
        ));
    }
    let d = ConvDims {
        cin: input.shape[0],
        t: input.shape[1],
        b: input.shape[2],
        cout: kernel.shape[0],
        kt: kernel.shape[2],
        kb: kernel.shape[3],
    };
    if d.kt % 2 == 0 || d.kb % 2 == 0 {
        return Err(Error::InvalidArgument(format!(
            "kernel dims must be odd, got {}x{}",
            d.kt, d.kb
        )));
    }
    Ok(d)
}

/// Valid output range `[lo, hi)` along one axis for kernel offset `d`.
fn valid_range(len: usize, half: usize, d: usize) -> (usize, usize) {
    let lo = half.saturating_sub(d);
    let hi = (len + half).saturating_sub(d).min(len);
    (lo, hi.max(lo))
}

fn conv2d_forward(input: &Tensor, kernel: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let d = conv_dims(input, kernel)?;
    if bias.len() != d.cout {
        return Err(Error::shape(format!("bias [{}]", d.cout), format!("{:?}", bias.shape)));
    }
    let (ht, hb) = (d.kt / 2, d.kb / 2);
    let plane = d.t * d.b;
    let mut out = vec![0.0; d.cout * plane];
    for co in 0..d.cout {
        let o = &mut out[co * plane..(co + 1) * plane];
        o.iter_mut().for_each(|v| *v = bias.data[co]);
        for ci in 0..d.cin {
            let x = &input.data[ci * plane..(ci + 1) * plane];
            for dt in 0..d.kt {
                let (t_lo, t_hi) = valid_range(d.t, ht, dt);
                for db in 0..d.kb {
                    let w = kernel.data[((co * d.cin + ci) * d.kt + dt) * d.kb + db];
                    let (b_lo, b_hi) = valid_range(d.b, hb, db);
                    for t in t_lo..t_hi {
                        let src = (t + dt - ht) * d.b + b_lo + db - hb;
                        let dst = t * d.b + b_lo;
                        let n = b_hi - b_lo;
                        for (ov, xv) in o[dst..dst + n].iter_mut().zip(&x[src..src + n]) {
                            *ov += w * xv;
                        }
                    }
                }
            }
        }
    }
    Tensor::new(vec![d.cout, d.t, d.b], out)
}

fn conv2d_backward(input: &Tensor, kernel: &Tensor, g: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let d = conv_dims(input, kernel).expect("validated on forward");
    let (ht, hb) = (d.kt / 2, d.kb / 2);
    let plane = d.t * d.b;
    let mut gi = vec![0.0; input.len()];
    let mut gk = vec![0.0; kernel.len()];
    let gb: Vec<f64> = (0..d.cout).map(|co| g[co * plane..(co + 1) * plane].iter().sum()).collect();
    for co in 0..d.cout {
        let go = &g[co * plane..(co + 1) * plane];
        for ci in 0..d.cin {
            let x = &input.data[ci * plane..(ci + 1) * plane];
            let gx = &mut gi[ci * plane..(ci + 1) * plane];
            for dt in 0..d.kt {
                let (t_lo, t_hi) = valid_range(d.t, ht, dt);
                for db in 0..d.kb {
                    let ki = ((co * d.cin + ci) * d.kt + dt) * d.kb + db;
                    let w = kernel.data[ki];
                    let (b_lo, b_hi) = valid_range(d.b, hb, db);
                    let n = b_hi - b_lo;
                    let mut acc = 0.0;
                    for t in t_lo..t_hi {
                        let src = (t + dt - ht) * d.b + b_lo + db - hb;
                        let dst = t * d.b + b_lo;
                        let gor = &go[dst..dst + n];
                        acc += gor.iter().zip(&x[src..src + n]).map(|(a, b)| a * b).sum::<f64>();
                        for (gv, gov) in gx[src..src + n].iter_mut().zip(gor) {
                            *gv += w * gov;
                        }
                    }
                    gk[ki] += acc;
                }
            }
        }
    }
    (gi, gk, gb)
}

fn affine_dims(input: &Tensor, weight: &Tensor) -> Result<(usize, usize, usize, usize)> {
    if input.shape.len() != 3 || weight.shape.len() != 2 {
        return Err(Error::shape(
            "input [C, T, B] with weight [O, C*B]",
            format!("{:?} / {:?}", input.shape, weight.shape),
        ));
    }
    let (c, t, b) = (input.shape[0], input.shape[1], input.shape[2]);
    let o = weight.shape[0];
    if weight.shape[1] != c * b {
        return Err(Error::shape(format!("weight [O, {}]", c * b), format!("{:?}", weight.shape)));
    }
    Ok((c, t, b, o))
}

fn gather_frame(input: &Tensor, t: usize, c: usize, tl: usize, b: usize, f: &mut [f64]) {
    for ch in 0..c {
        let s = (ch * tl + t) * b;
        f[ch * b..(ch + 1) * b].copy_from_slice(&input.data[s..s + b]);
    }
}

fn frame_affine_forward(input: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (c, t, b, o) = affine_dims(input, weight)?;
    if bias.len() != o {
        return Err(Error::shape(format!("bias [{o}]"), format!("{:?}", bias.shape)));
    }
    let k = c * b;
    let mut f = vec![0.0; k];
    let mut out = vec![0.0; t * o];
    for tt in 0..t {
        gather_frame(input, tt, c, t, b, &mut f);
        for oo in 0..o {
            let w = &weight.data[oo * k..(oo + 1) * k];
            out[tt * o + oo] = bias.data[oo] + w.iter().zip(&f).map(|(a, b)| a * b).sum::<f64>();
        }
    }
    Tensor::new(vec![t, o], out)
}

fn frame_affine_backward(input: &Tensor, weight: &Tensor, g: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let (c, t, b, o) = affine_dims(input, weight).expect("validated on forward");
    let k = c * b;
    let mut f = vec![0.0; k];
    let mut gf = vec![0.0; k];
    let mut gi = vec![0.0; input.len()];
    let mut gw = vec![0.0; weight.len()];
    let mut gb = vec![0.0; o];
    for tt in 0..t {
        gather_frame(input, tt, c, t, b, &mut f);
        gf.iter_mut().for_each(|v| *v = 0.0);
        for oo in 0..o {
            let go = g[tt * o + oo];
            if go == 0.0 {
                continue;
            }
            gb[oo] += go;
            let w = &weight.data[oo * k..(oo + 1) * k];
            let gwr = &mut gw[oo * k..(oo + 1) * k];
            for j in 0..k {
                gwr[j] += go * f[j];
                gf[j] += go * w[j];
            }
        }
        for ch in 0..c {
            let s = (ch * t + tt) * b;
            gi[s..s + b].copy_from_slice(&gf[ch * b..(ch + 1) * b]);
        }
    }
    (gi, gw, gb)
}
